"""Simulation toolkit for phase estimation with repeated QND readout of a cavity field."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DegenerateRecordError,
    DimensionMismatchError,
    FringeAmbiguityWarning,
    ImpossibleOutcomeError,
    NoCrossingError,
    OutOfRangeError,
    QNDError,
    TruncationError,
)
from .fock import (  # noqa: F401
    CavityDensity,
    CavityPureState,
    PhotonDistribution,
    displacement_op,
    fidelity,
    make_coherent,
    make_fock,
    make_squeezed_coherent,
    root_fidelity,
    squeeze_op,
)
from .interferometer import (  # noqa: F401
    GeometryParams,
    ProbeState,
    RamseyParams,
    dispersive_phase,
    measure_update,
    outcome_probability,
    probe_reduced_state,
    sample_outcome,
)
from .rng import make_rng  # noqa: F401

"""Ramsey R1-C-R2 measurement of the cavity field with dispersive probe atoms.

A probe crossing a field with n photons acquires the phase (n + 1/2) * theta.
Outcome +1 means the atom was found in |0>. A second-pulse phase offset
``ramsey_phase`` selects the fringe quadrature; at zero every expression
reduces to the plain Hadamard-Hadamard interferometer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleOutcomeError
from .fock import CavityPureState, PhotonDistribution

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class RamseyParams:
    theta: float
    ramsey_phase: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if not -math.pi <= self.ramsey_phase < math.pi:
            raise ValueError("ramsey_phase must lie in [-pi, pi)")


@dataclass(frozen=True)
class ProbeState:
    mat: np.ndarray

    def __post_init__(self):
        mat = np.array(self.mat, dtype=complex)
        if mat.shape != (2, 2):
            raise ValueError("probe state must be 2x2")
        if np.abs(mat - mat.conj().T).max() > 1e-9 or abs(np.trace(mat).real - 1) > 1e-9:
            raise ValueError("probe state must be Hermitian with unit trace")
        if np.linalg.eigvalsh(mat).min() < -1e-9:
            raise ValueError("probe state not positive semidefinite")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    def sigma_z(self):
        return float((self.mat[0, 0] - self.mat[1, 1]).real)


@dataclass(frozen=True)
class GeometryParams:
    """Atom/cavity geometry. Frequencies are angular (rad/s), lengths in metres."""

    omega0: float
    w: float
    detuning: float
    v: float
    omega_c: float
    z: float = 0.0
    radial: float = 0.0

    def __post_init__(self):
        for name in ("omega0", "w", "v", "omega_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.detuning == 0:
            raise ValueError("detuning must be nonzero")
        if self.radial < 0:
            raise ValueError("radial position must be >= 0")

    @classmethod
    def laboratory(cls, **overrides):
        """Parameters of the 51 GHz photon-box experiment."""
        base = dict(
            omega0=2 * math.pi * 49e3,
            w=6e-3,
            detuning=2 * math.pi * 245e3,
            v=250.0,
            omega_c=2 * math.pi * 51.099e9,
        )
        base.update(overrides)
        return cls(**base)


def dispersive_phase(g: GeometryParams, gaussian=True):
    """Phase per photon, sqrt(2 pi) Omega^2 w cos^2(omega_c z / c) / (v delta).

    Off axis, the Rabi frequency carries the Gaussian factor exp(-R^2/w^2);
    pass ``gaussian=False`` to ignore it.
    """
    omega_sq = g.omega0**2
    if gaussian and g.radial > 0:
        omega_sq *= math.exp(-2 * g.radial**2 / g.w**2)
    node = math.cos(g.omega_c * g.z / SPEED_OF_LIGHT) ** 2
    return math.sqrt(2 * math.pi) * omega_sq * g.w * node / (g.v * g.detuning)


def _weights(state):
    if isinstance(state, CavityPureState):
        return np.abs(state.amps) ** 2
    if isinstance(state, PhotonDistribution):
        return state.probs
    raise TypeError(f"unsupported state type {type(state).__name__}")


def kraus_diagonal(dim, p: RamseyParams, i):
    """Diagonal of the measurement operator for outcome i in the Fock basis."""
    if i not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    n = np.arange(dim)
    return np.cos((n + 0.5) * p.theta / 2 + (i - 1) * math.pi / 4 + p.ramsey_phase / 2)


def outcome_probability(state, p: RamseyParams, i):
    """p(i | theta) = sum_n |c_n|^2 cos^2[(n+1/2) theta/2 + (i-1) pi/4 + phi_R/2]."""
    if i not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    w = _weights(state)
    plus = min(1.0, float(w @ kraus_diagonal(w.size, p, 1) ** 2))
    # complement keeps p(+1) + p(-1) == 1 exactly
    return plus if i == 1 else 1.0 - plus


def measure_update(state: CavityPureState, p: RamseyParams, i):
    prob = outcome_probability(state, p, i)
    if prob <= 1e-12:
        raise ImpossibleOutcomeError(f"outcome {i:+d} has probability {prob:.3g}")
    amps = state.amps * kraus_diagonal(state.dim, p, i)
    return CavityPureState(amps / np.linalg.norm(amps)), prob


def sample_outcome(rng, state: CavityPureState, p: RamseyParams):
    """Draw one readout and return it with the post-measurement state."""
    i = 1 if rng.random() < outcome_probability(state, p, 1) else -1
    return i, measure_update(state, p, i)[0]


def sample_counts(rng, state, p: RamseyParams, m):
    """Number of +1 readouts among m probes.

    Only valid when the field is left unchanged by every readout (a Fock
    state), so the m outcomes are independent and identically distributed.
    """
    w = _weights(state)
    if np.count_nonzero(w > 1e-15) != 1:
        raise ValueError("i.i.d. sampling requires a photon-number eigenstate")
    return int(rng.binomial(m, outcome_probability(state, p, 1)))


def characteristic(dist: PhotonDistribution, p: RamseyParams):
    """chi = e^{i phi_R} sum_n q_n e^{i (n+1/2) theta}."""
    n = np.arange(dist.dim)
    return complex(np.exp(1j * p.ramsey_phase) * (dist.probs @ np.exp(1j * (n + 0.5) * p.theta)))


def probe_reduced_state(dist: PhotonDistribution, p: RamseyParams) -> ProbeState:
    chi = characteristic(dist, p)
    return ProbeState(
        0.5 * np.array([[1 + chi.real, -1j * chi.imag], [1j * chi.imag, 1 - chi.real]])
    )

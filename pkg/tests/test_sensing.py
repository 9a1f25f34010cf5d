import math
from dataclasses import replace

import numpy as np
import pytest

from qndmetro.interferometer import SPEED_OF_LIGHT, GeometryParams, dispersive_phase
from qndmetro.sensing import (
    displacement_sensitivity,
    displacement_sensitivity_crb,
    dtheta_dz,
    max_slope_position,
    sweep,
    z_zero,
)

G = GeometryParams.laboratory()


def test_z0_and_theta0_relation():
    assert dispersive_phase(G) * z_zero(G) == pytest.approx(SPEED_OF_LIGHT / G.omega_c, rel=1e-14)


def test_slope_matches_finite_difference():
    for z in (0.0, 0.3e-3, max_slope_position(G), 1.1e-3):
        h = 1e-9
        fd = (dispersive_phase(replace(G, z=z + h)) - dispersive_phase(replace(G, z=z - h))) / (2 * h)
        assert dtheta_dz(replace(G, z=z)) == pytest.approx(fd, rel=1e-6, abs=1e-3)


def test_max_slope_is_one_over_z0():
    at = replace(G, z=max_slope_position(G))
    assert abs(dtheta_dz(at)) * z_zero(G) == pytest.approx(1.0, abs=1e-12)
    zs = np.linspace(0, math.pi * SPEED_OF_LIGHT / G.omega_c, 2001)
    slopes = [abs(r[2]) for r in sweep(G, zs)]
    assert max(slopes) <= abs(dtheta_dz(at)) * (1 + 1e-12)


def test_sensitivity_scaling():
    base = displacement_sensitivity(1000, 8, G)
    assert displacement_sensitivity(4000, 8, G) == pytest.approx(base / 2)
    assert displacement_sensitivity(1000, 16, G) == pytest.approx(base / 2)
    # the CRB version carries N + 1/2 instead of N
    assert displacement_sensitivity_crb(1000, 8, G) == pytest.approx(base * 8 / 8.5, rel=1e-12)
    with pytest.raises(ValueError):
        displacement_sensitivity(0, 8, G)


def test_sweep_rows():
    rows = sweep(G, [0.0, 1e-4])
    assert rows[0][0] == 0.0 and rows[0][1] == pytest.approx(dispersive_phase(G))
    assert rows[0][2] == 0.0

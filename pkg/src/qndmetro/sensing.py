"""Axial displacement sensing through the position dependence of theta."""

import math
from dataclasses import replace

import numpy as np

from .estimation import crb_noiseless
from .interferometer import SPEED_OF_LIGHT, GeometryParams, dispersive_phase


def z_zero(g: GeometryParams):
    """Length scale z0 = delta v c / (sqrt(2 pi) Omega0^2 w omega_c) (on axis)."""
    return g.detuning * g.v * SPEED_OF_LIGHT / (
        math.sqrt(2 * math.pi) * g.omega0**2 * g.w * g.omega_c
    )


def max_slope_position(g: GeometryParams):
    """z = c pi / (4 omega_c), where |d theta / dz| = 1 / z0."""
    return SPEED_OF_LIGHT * math.pi / (4 * g.omega_c)


def dtheta_dz(g: GeometryParams):
    k = g.omega_c / SPEED_OF_LIGHT
    amplitude = dispersive_phase(replace(g, z=0.0))
    return -amplitude * k * math.sin(2 * k * g.z)


def displacement_sensitivity(m, N, g: GeometryParams):
    """delta z = z0 / (sqrt(m) N), the printed figure of merit."""
    if m < 1 or N < 1:
        raise ValueError("m and N must be >= 1")
    return z_zero(g) / (math.sqrt(m) * N)


def displacement_sensitivity_crb(m, N, g: GeometryParams):
    """Error propagation of the (N + 1/2) Cramer-Rao bound at the max-slope point."""
    at = replace(g, z=max_slope_position(g))
    return crb_noiseless(N, m) / abs(dtheta_dz(at))


def sweep(g: GeometryParams, z_values):
    """Rows (z, theta(z), dtheta/dz) for CSV output."""
    rows = []
    for z in np.asarray(z_values, dtype=float):
        gz = replace(g, z=float(z))
        rows.append((float(z), dispersive_phase(gz), dtheta_dz(gz)))
    return rows

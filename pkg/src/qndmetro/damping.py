"""Photon loss in the cavity and its effect on the QND phase measurement.

Loss intensity is eta(t) = 1 - exp(-t / T_C). A Fock state |N> decays (at zero
temperature) into Binomial(N, 1 - eta); the probe then sees the averaged
fringe of that distribution, summarised by a visibility base ``r`` and an
effective phase ``phi`` with <sigma_z> = r^N cos(N phi).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import comb

from .errors import NoCrossingError, TruncationError
from .fock import PhotonDistribution
from .interferometer import ProbeState, RamseyParams, characteristic, probe_reduced_state

log = logging.getLogger(__name__)

THERMAL_PAD = 10
EXACT_TAIL_TOL = 1e-8


@dataclass(frozen=True)
class DampingParams:
    t_c: float = 0.130
    n_b: float = 0.05
    tau_a: float = 82e-6

    def __post_init__(self):
        if not self.t_c > 0:
            raise ValueError("t_c must be positive")
        if self.n_b < 0:
            raise ValueError("n_b must be non-negative")
        if not self.tau_a > 0:
            raise ValueError("tau_a must be positive")

    @property
    def gamma(self):
        return 1.0 / self.t_c


@dataclass(frozen=True)
class LossyProbeSummary:
    r: float
    phi: float
    probe: ProbeState


def eta_of_t(t, d: DampingParams):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    eta = -np.expm1(-t / d.t_c)
    return float(eta) if eta.ndim == 0 else eta


def binomial_populations(N, eta) -> PhotonDistribution:
    """q_k = C(N, k) (1-eta)^k eta^(N-k), k = 0..N."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    k = np.arange(N + 1)
    return PhotonDistribution(comb(N, k) * (1 - eta) ** k * eta ** (N - k))


def _exact_raw(N, survival, n_b, dim):
    q = np.zeros(dim)
    nth = n_b * (1 - survival)
    for n in range(dim):
        k = np.arange(min(n, N) + 1)
        terms = (
            comb(N, k)
            * comb(n, k)
            * n_b ** (n - k)
            * (1 + n_b) ** (N - k)
            * survival**k
            * (1 - survival) ** (N + n - 2 * k)
        )
        q[n] = terms.sum() / (1 + nth) ** (N + n + 1)
    return q


def exact_populations(N, t, d: DampingParams, dim=None) -> PhotonDistribution:
    """Fock |N> in a thermal bath: closed-form photon-number distribution at t.

    In the closed form the binomial weight attached to k surviving photons is
    the survival fraction exp(-t/T_C) = 1 - eta(t); the n_b = 0 limit is then
    ``binomial_populations(N, eta(t))``. Evaluated on 0..dim-1 (default
    N + 10) and renormalised; a deficit above 1e-8 raises TruncationError.
    """
    dim = N + 1 + THERMAL_PAD if dim is None else dim
    if dim < N + 1:
        raise ValueError("dim must cover the initial photon number")
    survival = math.exp(-t / d.t_c)
    q = _exact_raw(N, survival, d.n_b, dim)
    deficit = 1.0 - q.sum()
    log.debug("exact_populations N=%d t=%g: normalisation deficit %.3g", N, t, deficit)
    if abs(deficit) > EXACT_TAIL_TOL:
        raise TruncationError(
            f"closed-form populations lose {deficit:.3g} beyond n = {dim - 1}", tail_mass=deficit
        )
    return PhotonDistribution(q / q.sum())


def _rate_rhs(q, gamma, n_b):
    n = np.arange(q.size)
    up = np.zeros_like(q)
    up[:-1] = q[1:]
    down = np.zeros_like(q)
    down[1:] = q[:-1]
    absorb = n_b * (n + 1) * q
    absorb[-1] = 0.0  # reflecting top level keeps the truncated system closed
    gain = n_b * n * down
    return gamma * ((n_b + 1) * ((n + 1) * up - n * q) + gain - absorb)


def evolve_rate_equations(q0: PhotonDistribution, t, d: DampingParams, dim=None, max_step=None):
    """Integrate the diagonal master equation with classical RK4.

    The step is at most 1e-4 T_C. The state is embedded in ``dim`` levels
    (default q0.dim + 10) with no upward transition out of the top level.
    """
    dim = q0.dim + THERMAL_PAD if dim is None else dim
    q = q0.padded(dim).probs.copy()
    if t == 0:
        return PhotonDistribution(q)
    h_max = 1e-4 * d.t_c if max_step is None else min(max_step, 1e-4 * d.t_c)
    steps = int(math.ceil(t / h_max))
    h = t / steps
    g, nb = d.gamma, d.n_b
    for _ in range(steps):
        k1 = _rate_rhs(q, g, nb)
        k2 = _rate_rhs(q + h / 2 * k1, g, nb)
        k3 = _rate_rhs(q + h / 2 * k2, g, nb)
        k4 = _rate_rhs(q + h * k3, g, nb)
        q = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    drift = abs(q.sum() - 1.0)
    if drift > 1e-9:
        raise ArithmeticError(f"probability drifted by {drift:.3g}")
    if q[-1] > EXACT_TAIL_TOL:
        raise TruncationError("population reached the top level", tail_mass=float(q[-1]))
    return PhotonDistribution(np.clip(q, 0.0, None) / np.clip(q, 0.0, None).sum())


def visibility_base(eta, theta):
    """r = |eta + (1-eta) e^{i theta}|, i.e. r^2 = 1 - 4 eta (1-eta) sin^2(theta/2)."""
    return math.sqrt(max(0.0, 1 - 4 * eta * (1 - eta) * math.sin(theta / 2) ** 2))


def effective_phase(N, eta, theta):
    # atan2 keeps the branch continuous where eta + (1-eta) cos(theta) < 0
    return theta / (2 * N) + math.atan2((1 - eta) * math.sin(theta), eta + (1 - eta) * math.cos(theta))


def lossy_probe(N, eta, theta) -> LossyProbeSummary:
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    r = visibility_base(eta, theta)
    phi = effective_phase(N, eta, theta)
    c, s = r**N * math.cos(N * phi), r**N * math.sin(N * phi)
    probe = ProbeState(0.5 * np.array([[1 + c, -1j * s], [1j * s, 1 - c]]))
    return LossyProbeSummary(r, phi, probe)


def _dr(eta, theta, r):
    return -eta * (1 - eta) * math.sin(theta) / r


def _dphi(N, eta, theta):
    den = (eta + (1 - eta) * math.cos(theta)) ** 2 + (math.sin(theta) * (1 - eta)) ** 2
    return (eta * (1 - eta) * math.cos(theta) + (1 - eta) ** 2) / den + 1 / (2 * N)


def _one_minus_r2n(N, eta, theta):
    return -math.expm1(N * math.log1p(-4 * eta * (1 - eta) * math.sin(theta / 2) ** 2))


def fisher_info_lossy(N, eta, theta):
    """Classical FI of the sigma_z readout on the lossy probe.

    Where 1 - r^2N cos^2(N phi) vanishes (no loss, total loss, or theta on a
    multiple of 2 pi) the ratio is 0/0; the limit -c''/c of c = r^N cos(N phi)
    is returned instead, with c'' from the photon-number moments.
    """
    r = visibility_base(eta, theta)
    phi = effective_phase(N, eta, theta)
    c = r**N * math.cos(N * phi)
    den = 1 - c * c
    if den > 1e-14:
        # N r^(N-1) dr with dr = -eta(1-eta) sin(theta) / r, written to survive r = 0
        radial = 0.0 if r == 0 else N * r ** (N - 2) * (-eta * (1 - eta) * math.sin(theta))
        dc = radial * math.cos(N * phi)
        dc -=r**N * math.sin(N * phi) * N * _dphi(N, eta, theta)
        return dc * dc / den
    dist = binomial_populations(N, eta)
    n = np.arange(N + 1)
    d2c = -float(dist.probs @ ((n + 0.5) ** 2 * np.cos((n + 0.5) * theta)))
    return -d2c / c


def qfi_lossy(N, eta, theta):
    """QFI of the lossy probe, N^2 r^2N [(d ln r)^2 / (1 - r^2N) + (d phi)^2].

    At theta = 0 (mod 2 pi) this returns ``optimal_qfi``; with no loss the
    first term is identically zero.
    """
    if math.sin(theta / 2) == 0:
        return optimal_qfi(N, eta)
    r = visibility_base(eta, theta)
    dphi = _dphi(N, eta, theta)
    gap = _one_minus_r2n(N, eta, theta)
    radial = 0.0
    if gap > 0 and r > 0:
        radial = (_dr(eta, theta, r) / r) ** 2 / gap
    return N**2 * r ** (2 * N) * (radial + dphi**2)


def qfi_numeric(probe_family, theta, dtheta=1e-6):
    """QFI of a one-parameter family of density matrices by spectral decomposition.

    ``probe_family(theta)`` returns a Hermitian matrix (array or ProbeState).
    The derivative is a central difference with step ``dtheta``.
    """
    if not 1e-9 <= dtheta <= 1e-3:
        raise ValueError("dtheta must lie in [1e-9, 1e-3]")

    def mat(x):
        m = probe_family(x)
        return np.asarray(getattr(m, "mat", m), dtype=complex)

    rho = mat(theta)
    drho = (mat(theta + dtheta) - mat(theta - dtheta)) / (2 * dtheta)
    p, v = np.linalg.eigh(rho)
    elems = v.conj().T @ drho @ v
    total = 0.0
    for i in range(p.size):
        for j in range(p.size):
            s = p[i] + p[j]
            if s > 1e-14:
                total += 2 * abs(elems[i, j]) ** 2 / s
    return total


def lossy_probe_family(N, eta):
    return lambda theta: lossy_probe(N, eta, theta).probe


def optimal_qfi(N, eta):
    """theta -> 0 limit of the lossy QFI: [(1-eta) N + 1/2]^2 + eta (1-eta) N."""
    return ((1 - eta) * N + 0.5) ** 2 + eta * (1 - eta) * N


def probe_from_characteristic(N, eta, theta):
    """Same probe state computed by brute sum over the binomial distribution."""
    return probe_reduced_state(binomial_populations(N, eta), RamseyParams(theta))


def characteristic_binomial(N, eta, theta):
    return characteristic(binomial_populations(N, eta), RamseyParams(theta))


def advantage_time(N, d: DampingParams, xtol=1e-6):
    """Time t* when F_o(eta(t)) falls to N + 1/2, and trials m* = floor(t*/tau_a)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    level = N + 0.5

    def excess(t):
        return optimal_qfi(N, float(eta_of_t(t, d))) - level

    if excess(0.0) < 0:
        raise NoCrossingError(f"F_o starts below N + 1/2 for N = {N}")
    hi = d.t_c
    while excess(hi) > 0:
        hi *= 2
        if hi > 1e3 * d.t_c:
            raise NoCrossingError("F_o never drops to N + 1/2")
    t_star = bisect(excess, 0.0, hi, xtol=xtol)
    return t_star, int(math.floor(t_star / d.tau_a))


def optimal_qfi_series(N, m, d: DampingParams):
    """F_o(i tau_a) for i = 0..m-1."""
    eta = eta_of_t(np.arange(m) * d.tau_a, d)
    return ((1 - eta) * N + 0.5) ** 2 + eta * (1 - eta) * N


def average_qfi(N, m, d: DampingParams):
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(optimal_qfi_series(N, m, d).mean())


def max_useful_trials(N, d: DampingParams):
    """Largest m whose average QFI over m trials is still >= N + 1/2."""
    t_star, m_star = advantage_time(N, d)
    horizon = max(16, 8 * (m_star + 1))
    while True:
        fa = np.cumsum(optimal_qfi_series(N, horizon, d)) / np.arange(1, horizon + 1)
        ok = np.nonzero(fa >= N + 0.5)[0]
        # F_a is non-increasing, so the last index is the answer once it is
        # strictly inside the horizon
        if ok[-1] < horizon - 1:
            return int(ok[-1]) + 1
        horizon *= 2

"""Phase estimators, Cramer-Rao bounds and the cascaded Fock-state scheme."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import FringeAmbiguityWarning
from .fock import make_fock
from .interferometer import RamseyParams, sample_counts
from .rng import make_rng

TWO_PI = 2 * math.pi
# fringe quadratures: phi_R = 0 gives <sigma_z> = cos(Phi), phi_R = pi/2 gives -sin(Phi)
QUADRATURES = (0.0, math.pi / 2)


def crb_noiseless(N, m):
    """delta theta >= 1 / (sqrt(m) (N + 1/2))."""
    if N < 0 or m < 1:
        raise ValueError("need N >= 0 and m >= 1")
    return 1.0 / (math.sqrt(m) * (N + 0.5))


@dataclass(frozen=True)
class ResourceComparison:
    n_total: float
    qnd_bound: float
    noon_bound: float
    sql_bound: float


def resource_comparison(N, m):
    """Bounds at equal total resources N_tot = N + m (one Fock state, m probes).

    QND ~ 1/(N sqrt(N_tot)), NOON ~ 1/sqrt(N N_tot), SQL ~ 1/sqrt(N_tot).
    """
    n_tot = N + m
    return ResourceComparison(
        n_total=n_tot,
        qnd_bound=1.0 / (N * math.sqrt(n_tot)),
        noon_bound=1.0 / math.sqrt(N * n_tot),
        sql_bound=1.0 / math.sqrt(n_tot),
    )


def fisher_avg_coherent(nbar):
    """Poisson average of (n + 1/2)^2: (nbar + 1/2)^2 + nbar."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    return (nbar + 0.5) ** 2 + nbar


def wrap_phase(x):
    """Map onto [-pi, pi)."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    # mod can round up to exactly 2 pi for tiny negative inputs
    y = np.where(y >= math.pi, y - TWO_PI, y)
    return float(y) if y.ndim == 0 else y


def stage_multipliers(levels, use_half_term=False):
    half = 0.5 if use_half_term else 0.0
    return [2.0**j + half for j in range(levels)]


def stage_phases(theta, levels, multipliers=None):
    mults = stage_multipliers(levels) if multipliers is None else multipliers
    return [wrap_phase(k * theta) for k in mults]


def _refine(start, stage_estimates, mults):
    theta = start
    for est, k in zip(stage_estimates[1:], mults[1:]):
        theta = theta + wrap_phase(est - k * theta) / k
    return theta


def reconstruct_theta(stage_estimates, multipliers=None):
    """Combine wrapped stage phases Theta_j ~ mult_j * theta into one estimate.

    theta <- Theta_0 / mult_0, then theta <- theta + wrap(Theta_j - mult_j theta) / mult_j.
    Exact inputs are recovered to rounding; each stage tolerates an error below
    pi/2. When mult_0 > 1 the first stage admits several branches in
    [-pi, pi); each is refined and the one most consistent with all stages is
    kept (ties go to the smaller |theta|). The result is wrapped onto [-pi, pi).
    """
    ests = [float(e) for e in stage_estimates]
    mults = stage_multipliers(len(ests)) if multipliers is None else [float(k) for k in multipliers]
    if len(mults) != len(ests):
        raise ValueError("one multiplier per stage estimate")
    if any(b <= a for a, b in zip(mults[:-1], mults[1:])) or mults[0] <= 0:
        raise ValueError("multipliers must be positive and strictly increasing")
    k0 = mults[0]
    # branches up to one stage tolerance outside [-pi, pi) stay eligible, so a
    # noisy first stage near the boundary still offers the right branch
    reach = math.pi * k0 + math.pi / 2
    lo = math.ceil((-reach - ests[0]) / TWO_PI)
    hi = math.floor((reach - ests[0]) / TWO_PI)
    starts = [(ests[0] + TWO_PI * b) / k0 for b in range(lo, hi + 1)]
    best = None
    for s in starts:
        theta = _refine(s, ests, mults)
        resid = sum(wrap_phase(e - k * theta) ** 2 for e, k in zip(ests, mults))
        key = (round(resid, 12), abs(theta))
        if best is None or key < best[0]:
            best = (key, theta)
    return wrap_phase(best[1])


# -- two-quadrature fringe MLE ------------------------------------------------


def _counts(record):
    outcomes = np.asarray(getattr(record, "outcomes", record), dtype=int)
    if outcomes.size and not np.all(np.abs(outcomes) == 1):
        raise ValueError("outcomes must be +1 or -1")
    return int(np.count_nonzero(outcomes == 1)), int(outcomes.size)


def _fringe_loglik(phi, counts):
    total = 0.0
    for (k, m), q in zip(counts, QUADRATURES):
        half = (phi + q) / 2
        with np.errstate(divide="ignore"):
            if k:
                total = total + 2 * k * np.log(np.abs(np.cos(half)))
            if m - k:
                total = total + 2 * (m - k) * np.log(np.abs(np.sin(half)))
    return total


def _fringe_derivs(phi, counts):
    g = h = 0.0
    for (k, m), q in zip(counts, QUADRATURES):
        half = (phi + q) / 2
        c, s = math.cos(half), math.sin(half)
        if k:
            g -= k * s / c
            h -= k / (2 * c * c)
        if m - k:
            g += (m - k) * c / s
            h -= (m - k) / (2 * s * s)
    return g, h


def fringe_mle(counts):
    """Maximum-likelihood fringe phase Phi in [-pi, pi) from quadrature counts.

    ``counts`` is ((k_cos, m_cos), (k_sin, m_sin)): number of +1 readouts and
    probes at phi_R = 0 and pi/2. Starts from the moment estimate
    atan2(-<s_sin>, <s_cos>), compares it with a coarse grid, then polishes
    with Newton steps (the log-likelihood is concave between its poles).
    Returns (Phi, observed information).
    """
    means = [(2 * k - m) / m if m else 0.0 for k, m in counts]
    start = math.atan2(-means[1], means[0])
    grid = np.linspace(-math.pi, math.pi, 721)[:-1]
    vals = _fringe_loglik(grid, counts)
    cand = float(grid[int(np.argmax(vals))])
    phi = start if _fringe_loglik(start, counts) >= _fringe_loglik(cand, counts) else cand
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(100):
            try:
                g, h = _fringe_derivs(phi, counts)
            except ZeroDivisionError:
                break
            if g == 0 or not (math.isfinite(g) and math.isfinite(h)) or h >= 0:
                break
            step = -g / h
            base = _fringe_loglik(phi, counts)
            while abs(step) > 1e-16 and not _fringe_loglik(phi + step, counts) >= base:
                step /= 2
            if abs(step) <= 1e-15:
                break
            phi += step
    try:
        info = -_fringe_derivs(phi, counts)[1]
    except ZeroDivisionError:
        info = math.inf
    return wrap_phase(phi), info


@dataclass(frozen=True)
class StageEstimate:
    j: int
    photons: int
    multiplier: float
    phase_true: float
    phase_hat: float

    @property
    def error(self):
        return wrap_phase(self.phase_hat - self.phase_true)


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: float
    stderr: float
    resources_used: float
    bound: float
    stages: tuple = ()


def estimate_phase(record_cos, record_sin, N):
    """Estimate theta from readouts against Fock |N> in two fringe quadratures.

    The fringe phase (N + 1/2) theta is found by maximum likelihood and
    mapped back on its principal branch, so theta_hat lies within
    pi / (N + 1/2) of zero.
    """
    counts = (_counts(record_cos), _counts(record_sin))
    m_total = counts[0][1] + counts[1][1]
    if m_total < 10:
        raise ValueError("need at least 10 outcomes in total")
    if all(k in (0, m) for k, m in counts if m) and min(m for _, m in counts) >= 10:
        warnings.warn(
            "every quadrature returned a single outcome; fringe position is unresolved",
            FringeAmbiguityWarning,
            stacklevel=2,
        )
    phi, info = fringe_mle(counts)
    if not math.isfinite(info) or info <= 0:
        info = float(m_total)  # expected information: one unit per probe
    mult = N + 0.5
    return EstimateReport(
        theta_hat=phi / mult,
        stderr=1.0 / (math.sqrt(info) * mult),
        resources_used=N + m_total,
        bound=crb_noiseless(N, m_total),
    )


def simulate_fock_records(rng, N, theta, m, phase_offset=0.0):
    """+1 counts in each quadrature for m probes against Fock |N>.

    ``phase_offset`` is added to the fringe phase; it models an idealised
    accumulated phase (e.g. -theta/2 drops the half-photon term).
    """
    state = make_fock(N, N + 1)
    out = []
    for q in QUADRATURES:
        p = RamseyParams(theta, wrap_phase(q + phase_offset))
        out.append((sample_counts(rng, state, p, m), m))
    return tuple(out)


def _record_from_counts(k, m):
    return [1] * k + [-1] * (m - k)


def estimate_phase_mc(rng, N, theta, m):
    """Simulate m probes per quadrature and run ``estimate_phase`` on them."""
    (k0, _), (k1, _) = simulate_fock_records(rng, N, theta, m)
    return estimate_phase(_record_from_counts(k0, m), _record_from_counts(k1, m), N)


# -- cascaded scheme ----------------------------------------------------------


@dataclass(frozen=True)
class CascadeConfig:
    levels: int
    trials_per_stage: int
    theta_true: float
    use_half_term: bool = True

    def __post_init__(self):
        if self.levels < 1 or self.trials_per_stage < 1:
            raise ValueError("levels and trials_per_stage must be >= 1")
        if not -math.pi <= self.theta_true < math.pi:
            raise ValueError("theta_true must lie in [-pi, pi)")

    @property
    def multipliers(self):
        return stage_multipliers(self.levels, self.use_half_term)


def cascade_bound(levels, m):
    """1 / (sqrt(m) (2^(L-1) + 1/2)), the last-stage bound."""
    return 1.0 / (math.sqrt(m) * (2 ** (levels - 1) + 0.5))


def cascade_run(rng, cfg: CascadeConfig):
    """Run all stages against Fock states 1, 2, ..., 2^(L-1) and combine them.

    Each stage sends m probes in each of the two quadratures. With
    ``use_half_term`` off the simulated fringe phase is the idealised
    2^j theta instead of (2^j + 1/2) theta.
    """
    m = cfg.trials_per_stage
    mults = cfg.multipliers
    stages = []
    info_last = None
    for j, k in enumerate(mults):
        photons = 2**j
        offset = 0.0 if cfg.use_half_term else -cfg.theta_true / 2
        counts = simulate_fock_records(rng, photons, cfg.theta_true, m, offset)
        phase_hat, info = fringe_mle(counts)
        stages.append(
            StageEstimate(j, photons, k, wrap_phase(k * cfg.theta_true), phase_hat)
        )
        info_last = info
    theta_hat = reconstruct_theta([s.phase_hat for s in stages], mults)
    if not math.isfinite(info_last) or info_last <= 0:
        info_last = 2.0 * m
    return EstimateReport(
        theta_hat=theta_hat,
        stderr=1.0 / (math.sqrt(info_last) * mults[-1]),
        resources_used=2 * m * sum(2**j for j in range(cfg.levels)),
        bound=cascade_bound(cfg.levels, m),
        stages=tuple(stages),
    )


@dataclass(frozen=True)
class CascadeEnsemble:
    thetas: np.ndarray
    reports: tuple
    levels: int
    trials_per_stage: int

    @property
    def errors(self):
        return wrap_phase(np.array([r.theta_hat for r in self.reports]) - self.thetas)

    @property
    def rms(self):
        return float(np.sqrt(np.mean(self.errors**2)))

    @property
    def stage_bound(self):
        return cascade_bound(self.levels, self.trials_per_stage)

    @property
    def stage_bound_all_probes(self):
        """Same bound counting both quadratures, i.e. 2m probes per stage."""
        return cascade_bound(self.levels, 2 * self.trials_per_stage)

    def rounding_error_rate(self):
        errs = [abs(s.error) for r in self.reports for s in r.stages]
        return float(np.mean(np.array(errs) > math.pi / 2))


def cascade_ensemble(seed, levels, m, count, use_half_term=True, thetas=None):
    """Repeat ``cascade_run`` for ``count`` phases; member k uses make_rng(seed, k).

    Phases are drawn uniformly in [-pi, pi) from each member's own stream
    unless given explicitly.
    """
    reports, used = [], []
    for k in range(count):
        rng = make_rng(seed, k)
        theta = wrap_phase(rng.uniform(-math.pi, math.pi)) if thetas is None else thetas[k]
        cfg = CascadeConfig(levels, m, theta, use_half_term)
        reports.append(cascade_run(rng, cfg))
        used.append(theta)
    return CascadeEnsemble(np.array(used), tuple(reports), levels, m)


# -- adaptive working point under photon loss ---------------------------------


def _lossy_plus_prob(x, probs, ramsey_phase):
    n = np.arange(probs.size)
    chi = np.exp(1j * np.outer(np.atleast_1d(x), n + 0.5)) @ probs
    return np.clip((1 + np.real(np.exp(1j * ramsey_phase) * chi)) / 2, 1e-300, 1.0)


def _lossy_mle(counts, probs, lo, hi, points=2001):
    def loglik(x):
        total = 0.0
        for (k, m), q in zip(counts, QUADRATURES):
            p = _lossy_plus_prob(x, probs, q)
            total = total + k * np.log(p) + (m - k) * np.log1p(-np.minimum(p, 1 - 1e-16))
        return total

    grid = np.linspace(lo, hi, points)
    vals = loglik(grid)
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    res = minimize_scalar(
        lambda x: -float(loglik(x)[0]), bounds=(a, b), method="bounded", options={"xatol": 1e-12}
    )
    return float(res.x)


def two_step_adaptive(rng, N, eta, theta_true, m, coarse_fraction=0.1):
    """Estimate theta on a lossy Fock state with a recentred working point.

    A coarse estimate from ``coarse_fraction`` of the m probes fixes a known
    compensating shift theta_c; the remaining probes then measure the
    residual theta - theta_c, which sits near zero where the lossy Fisher
    information approaches its optimum. Both steps use the two fringe
    quadratures and the exact likelihood of the binomial loss distribution
    (loss ``eta`` held fixed over the run). The coarse step assumes theta lies
    on the principal fringe, |theta| < pi / ((1 - eta) N + 1/2).
    """
    from .damping import binomial_populations, optimal_qfi

    probs = binomial_populations(N, eta).probs
    m_coarse = max(2, int(round(m * coarse_fraction)) // 2)
    m_fine = max(1, (m - 2 * m_coarse) // 2)

    def draw(shift, per_quad):
        x = theta_true - shift
        return tuple(
            (int(rng.binomial(per_quad, _lossy_plus_prob(x, probs, q)[0])), per_quad)
            for q in QUADRATURES
        )

    span = math.pi / ((1 - eta) * N + 0.5)
    coarse = _lossy_mle(draw(0.0, m_coarse), probs, -span, span)
    window = 8.0 / (math.sqrt(2 * m_coarse) * ((1 - eta) * N + 0.5))
    residual = _lossy_mle(draw(coarse, m_fine), probs, -window, window)
    return EstimateReport(
        theta_hat=coarse + residual,
        stderr=1.0 / math.sqrt(2 * m_fine * optimal_qfi(N, eta)),
        resources_used=N + 2 * (m_coarse + m_fine),
        bound=1.0 / math.sqrt(2 * m_fine * optimal_qfi(N, eta)),
    )

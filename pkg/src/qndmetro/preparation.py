"""Fock-state preparation by repeated QND readout, stochastic and with feedback."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRecordError, OutOfRangeError
from .fock import (
    CavityDensity,
    CavityPureState,
    PhotonDistribution,
    displacement_op,
    make_fock,
)
from .interferometer import RamseyParams, kraus_diagonal
from .rng import make_rng

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class OutcomeRecord:
    outcomes: tuple
    theta_s: float

    def __post_init__(self):
        outcomes = tuple(int(i) for i in self.outcomes)
        if any(i not in (1, -1) for i in outcomes):
            raise ValueError("outcomes must be +1 or -1")
        object.__setattr__(self, "outcomes", outcomes)

    def __len__(self):
        return len(self.outcomes)

    @property
    def n_plus(self):
        return sum(1 for i in self.outcomes if i == 1)

    @property
    def n_minus(self):
        return len(self.outcomes) - self.n_plus


@dataclass(frozen=True)
class TrajectoryResult:
    record: OutcomeRecord
    final: CavityPureState
    converged_class: frozenset
    converged: bool
    class_mass: float

    @property
    def atoms_used(self):
        return len(self.record)


def single_atom_likelihood(theta_s, dim):
    """q(+1|n) = cos^2[(n+1/2) theta_s / 2] for n = 0..dim-1."""
    return kraus_diagonal(dim, RamseyParams(theta_s), 1) ** 2


def degeneracy_classes(theta_s, dim):
    """Partition of photon numbers that share the same single-atom likelihood."""
    q = single_atom_likelihood(theta_s, dim)
    order = np.argsort(q, kind="stable")
    classes, current = [], [int(order[0])]
    for a, b in zip(order[:-1], order[1:]):
        if q[b] - q[a] <= DEGENERACY_TOL:
            current.append(int(b))
        else:
            classes.append(frozenset(current))
            current = [int(b)]
    classes.append(frozenset(current))
    return sorted(classes, key=min)


def posterior_distribution(initial: CavityPureState, record: OutcomeRecord) -> PhotonDistribution:
    """Photon-number distribution after the readouts in ``record``.

    Accumulated in log space so long records do not underflow. Only the counts
    of +1 and -1 matter, so the order of the record is irrelevant.
    """
    n = np.arange(initial.dim)
    x = (n + 0.5) * record.theta_s / 2
    with np.errstate(divide="ignore"):
        logp = np.log(np.abs(initial.amps) ** 2)
        if record.n_plus:
            logp = logp + 2 * record.n_plus * np.log(np.abs(np.cos(x)))
        if record.n_minus:
            logp = logp + 2 * record.n_minus * np.log(np.abs(np.sin(x)))
    top = logp.max()
    if not np.isfinite(top):
        raise DegenerateRecordError("record has zero likelihood for every photon number")
    w = np.exp(logp - top)
    return PhotonDistribution(w / w.sum())


def run_trajectory(rng, initial: CavityPureState, theta_s, max_atoms=100, convergence_tol=1e-3):
    """Send probe atoms one by one until one degeneracy class holds the field."""
    if max_atoms < 1:
        raise OutOfRangeError("max_atoms must be >= 1")
    classes = degeneracy_classes(theta_s, initial.dim)
    member = np.zeros((len(classes), initial.dim))
    for row, c in enumerate(classes):
        member[row, sorted(c)] = 1.0
    kraus = {i: kraus_diagonal(initial.dim, RamseyParams(theta_s), i) for i in (1, -1)}
    amps = np.array(initial.amps)
    outcomes = []
    while True:
        pops = np.abs(amps) ** 2
        masses = member @ pops
        best = int(np.argmax(masses))
        if masses[best] >= 1 - convergence_tol or len(outcomes) >= max_atoms:
            break
        # same draw as sample_outcome, without re-validating the state every atom
        i = 1 if rng.random() < min(1.0, float(pops @ kraus[1] ** 2)) else -1
        amps = amps * kraus[i]
        amps /= np.linalg.norm(amps)
        outcomes.append(i)
    return TrajectoryResult(
        record=OutcomeRecord(tuple(outcomes), theta_s),
        final=CavityPureState(amps),
        converged_class=classes[best],
        converged=bool(masses[best] >= 1 - convergence_tol),
        class_mass=float(masses[best]),
    )


def _trajectory_job(args):
    seed, index, initial, theta_s, max_atoms, tol = args
    return run_trajectory(make_rng(seed, index), initial, theta_s, max_atoms, tol)


def run_ensemble(seed, count, initial, theta_s, max_atoms=100, convergence_tol=1e-3, workers=1):
    """Independent trajectories, member k drawing from ``make_rng(seed, k)``.

    Output order is the trajectory index, so results match for any worker count.
    """
    jobs = [(seed, k, initial, theta_s, max_atoms, convergence_tol) for k in range(count)]
    if workers <= 1:
        return [_trajectory_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trajectory_job, jobs, chunksize=max(1, count // (4 * workers))))


def class_label(cls):
    return "+".join(str(n) for n in sorted(cls))


def ensemble_rows(seed, results):
    """CSV rows (seed, trajectory, M_used, converged, converged_class, class_mass)."""
    for k, r in enumerate(results):
        yield {
            "seed": seed,
            "trajectory": k,
            "M_used": r.atoms_used,
            "converged": int(r.converged),
            "converged_class": class_label(r.converged_class),
            "class_mass": f"{r.class_mass:.12g}",
        }


def default_alpha_grid():
    return tuple(np.round(np.linspace(-1.0, 1.0, 21), 12))


@dataclass(frozen=True)
class FeedbackConfig:
    """Controller settings for deterministic preparation of |target>.

    ``settle_mass`` gates the stop rule: the loop halts once the best grid
    displacement is below ``stop_alpha`` *and* the photon-number distribution
    has concentrated (max_n p(n) >= settle_mass). Without the second
    condition the controller quits right after its first kick, when no
    displacement helps yet the field has not been measured into a number state.
    """

    target: int
    dim: int = 15
    alpha_grid: tuple = field(default_factory=default_alpha_grid)
    stop_alpha: float = 0.05
    max_steps: int = 500
    sensor_theta: float = 0.6
    settle_mass: float = 0.9
    success_population: float = 0.8

    def __post_init__(self):
        if not 0 <= self.target < self.dim - 4:
            raise OutOfRangeError("target must satisfy 0 <= target < dim - 4")
        if self.stop_alpha <= 0:
            raise ValueError("stop_alpha must be positive")
        grid = tuple(float(a) for a in self.alpha_grid)
        if 0.0 not in grid:
            grid = grid + (0.0,)
        object.__setattr__(self, "alpha_grid", grid)


@dataclass(frozen=True)
class FeedbackResult:
    history: tuple
    success: bool
    final: CavityDensity
    steps: int
    displacements: tuple


def feedback_prepare(rng, cfg: FeedbackConfig, initial=None):
    """Measure-filter-displace loop driving the field towards |target>.

    Each step: the controller picks the grid displacement maximising the
    target population of D(a) rho D(a)^dag, applies it, then one sensor atom is
    sampled from the current state and the density is filtered on its readout.
    ``history`` holds the target fidelity after every step (entry 0 is the
    initial state).
    """
    rho = (initial if initial is not None else make_fock(0, cfg.dim)).as_density().mat.copy()
    ops = {a: displacement_op(a, cfg.dim) for a in cfg.alpha_grid}
    # rows <target| D(a) give the displaced target population as a quadratic form
    rows = {a: d[cfg.target] for a, d in ops.items()}
    kraus = {i: kraus_diagonal(cfg.dim, RamseyParams(cfg.sensor_theta), i) for i in (1, -1)}
    history = [float(rho[cfg.target, cfg.target].real)]
    kicks = []
    step = 0
    for step in range(cfg.max_steps + 1):
        scores = {a: float(np.vdot(r.conj(), rho @ r.conj()).real) for a, r in rows.items()}
        # ties go to the smallest kick
        best = max(cfg.alpha_grid, key=lambda a: (round(scores[a], 12), -abs(a)))
        settled = rho.diagonal().real.max() >= cfg.settle_mass
        if (abs(best) < cfg.stop_alpha and settled) or step == cfg.max_steps:
            break
        if abs(best) >= cfg.stop_alpha:
            d = ops[best]
            rho = d @ rho @ d.conj().T
            rho = rho / np.trace(rho).real  # norm pushed past the cutoff is dropped
            kicks.append(best)
        p_plus = float(np.clip(kraus[1] ** 2 @ rho.diagonal().real, 0.0, 1.0))
        k = kraus[1] if rng.random() < p_plus else kraus[-1]
        rho = k[:, None] * rho * k[None, :]
        rho = rho / np.trace(rho).real
        rho = (rho + rho.conj().T) / 2
        history.append(float(rho[cfg.target, cfg.target].real))
    final = CavityDensity(rho)
    success = final.mat[cfg.target, cfg.target].real >= cfg.success_population
    return FeedbackResult(tuple(history), bool(success), final, step, tuple(kicks))


def feedback_ensemble(seed, cfg: FeedbackConfig, runs):
    return [feedback_prepare(make_rng(seed, k), cfg) for k in range(runs)]


def martingale_gap(state: CavityPureState, theta_s):
    """max_n |sum_i p(i) P_i(n) - P(n)| for one readout (zero up to rounding)."""
    prior = np.abs(state.amps) ** 2
    avg = np.zeros_like(prior)
    for i in (1, -1):
        k2 = kraus_diagonal(state.dim, RamseyParams(theta_s), i) ** 2
        p = float(prior @ k2)
        if p > 0:
            avg += p * (prior * k2 / p)
    return float(np.abs(avg - prior).max())


def off_class_mass_curve(initial, theta_s, true_n, atoms):
    """Expected-record decay of posterior mass outside the class of ``true_n``.

    Uses the typical record with round(M q) +1 readouts after M atoms.
    """
    classes = degeneracy_classes(theta_s, initial.dim)
    cls = next(c for c in classes if true_n in c)
    q = single_atom_likelihood(theta_s, initial.dim)[true_n]
    out = []
    for m in range(1, atoms + 1):
        plus = int(math.floor(m * q + 0.5))
        rec = OutcomeRecord((1,) * plus + (-1,) * (m - plus), theta_s)
        post = posterior_distribution(initial, rec).probs
        out.append(1.0 - float(sum(post[k] for k in cls)))
    return np.array(out)

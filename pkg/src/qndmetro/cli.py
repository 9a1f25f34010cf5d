"""Command-line front end: ``qndmetro run <experiment> [--key value ...]``.

Parameters come from experiment defaults, then an optional flat ``key=value``
config file (``--config``), then ``--key value`` flags. Lists are
comma-separated. Output goes to ``--out`` or, failing that, to
``$QNDMETRO_OUT_DIR/<experiment>.csv``. Exit status: 0 success, 2 bad
configuration, 3 numerical diagnostic (truncation overflow).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .csvout import write_csv
from .damping import (
    DampingParams,
    advantage_time,
    binomial_populations,
    eta_of_t,
    exact_populations,
    fisher_info_lossy,
    lossy_probe,
    max_useful_trials,
    optimal_qfi,
    optimal_qfi_series,
    qfi_lossy,
)
from .errors import ConfigError, TruncationError
from .estimation import cascade_ensemble
from .fock import fidelity, make_coherent, make_fock, make_squeezed_coherent
from .interferometer import GeometryParams
from .preparation import FeedbackConfig, ensemble_rows, feedback_prepare, run_ensemble
from .rng import MASK64, make_rng
from .sensing import displacement_sensitivity, max_slope_position, sweep, z_zero

OUT_DIR_ENV = "QNDMETRO_OUT_DIR"

EXPERIMENTS = {
    "fringe": dict(n=8, eta=[0.0, 0.1, 0.2], points=201, theta_max=math.pi),
    "fisher-map": dict(n=8, eta=[0.0, 0.1, 0.2], points=200, theta_min=0.01, theta_max=3.13),
    "advantage": dict(n=8, tc=0.130, tau=82e-6, nb=0.05, t_max=0.5, points=51, m_points=200),
    "trajectories": dict(
        init="coherent:1.7320508075688772", theta_s=0.6, count=4000, max_atoms=100, tol=1e-3, dim=15, workers=1
    ),
    "prepare-feedback": dict(
        target=2, dim=15, runs=50, max_steps=500, stop_alpha=0.05, sensor_theta=0.6,
        settle_mass=0.9,
    ),
    "cascade": dict(levels=4, m=100, count=500, half_term=True),
    "sensing": dict(
        n=8, m=1000, omega0_hz=49e3, w=6e-3, delta_hz=245e3, v=250.0, omega_c_hz=51.099e9,
        points=101,
    ),
}


def _convert(key, raw, default):
    try:
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        if isinstance(default, list):
            return [float(v) for v in str(raw).split(",") if v.strip()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def read_config_file(path):
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        pairs[key.strip()] = value.strip()
    return pairs


def _parse_flags(tokens):
    pairs = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, sep, value = tok[2:].partition("=")
        if not sep:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"flag --{key} needs a value") from None
        pairs[key] = value
    return pairs


def resolve_params(experiment, file_pairs, flag_pairs):
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    defaults = EXPERIMENTS[experiment]
    params = dict(defaults)
    for pairs in (file_pairs, flag_pairs):
        for raw_key, raw in pairs.items():
            key = raw_key.replace("-", "_")
            if key not in defaults:
                raise ConfigError(f"unknown key {raw_key!r} for experiment {experiment!r}")
            params[key] = _convert(key, raw, defaults[key])
    return params


def _sibling(path, suffix):
    path = Path(path)
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def _header(experiment, seed, params, extra=()):
    return [("experiment", experiment), ("seed", seed)] + sorted(params.items()) + list(extra)


def run_fringe(p, seed, out):
    thetas = np.linspace(0.0, p["theta_max"], p["points"])
    rows = []
    for eta in p["eta"]:
        for th in thetas:
            s = lossy_probe(p["n"], eta, float(th))
            rows.append((eta, float(th), float(s.probe.mat[0, 0].real)))
    return [write_csv(out, ["eta", "theta", "p0"], rows, _header("fringe", seed, p))]


def run_fisher_map(p, seed, out):
    thetas = np.linspace(p["theta_min"], p["theta_max"], p["points"])
    rows = []
    for eta in p["eta"]:
        for th in thetas:
            th = float(th)
            rows.append((eta, th, fisher_info_lossy(p["n"], eta, th), qfi_lossy(p["n"], eta, th)))
    return [write_csv(out, ["eta", "theta", "fi", "qfi"], rows, _header("fisher-map", seed, p))]


def run_advantage(p, seed, out):
    N = p["n"]
    d = DampingParams(t_c=p["tc"], n_b=p["nb"], tau_a=p["tau"])
    t_star, m_star = advantage_time(N, d)
    m_max = max_useful_trials(N, d)
    extra = [("t_star", t_star), ("m_star", m_star), ("m_max", m_max)]
    head = _header("advantage", seed, p, extra)
    ts = np.linspace(0.0, p["t_max"], p["points"])
    decay = []
    fid = []
    for t in ts:
        t = float(t)
        eta = eta_of_t(t, d)
        decay.append((t, optimal_qfi(N, eta), (1 - eta) ** N))
        exact = exact_populations(N, t, d)
        approx = binomial_populations(N, eta).padded(exact.dim)
        fid.append((t, fidelity(exact, approx)))
    m_hi = int(2 * m_max)
    series = optimal_qfi_series(N, m_hi, d)
    avg = np.cumsum(series) / np.arange(1, m_hi + 1)
    ms = np.unique(np.linspace(1, m_hi, p["m_points"]).astype(int))
    return [
        write_csv(out, ["t", "F_o", "fock_survival"], decay, head),
        write_csv(
            _sibling(out, "average"),
            ["m", "F_a", "F_o"],
            [(int(m), float(avg[m - 1]), float(series[m - 1])) for m in ms],
            head,
        ),
        write_csv(_sibling(out, "fidelity"), ["t", "fidelity"], fid, head),
    ]


def parse_initial_state(spec, dim):
    kind, _, args = spec.partition(":")
    try:
        vals = [float(v) for v in args.split(",")] if args else []
        if kind == "coherent" and len(vals) == 1:
            return make_coherent(vals[0], dim)
        if kind == "squeezed" and len(vals) == 2:
            return make_squeezed_coherent(vals[0], vals[1], dim)
        if kind == "fock" and len(vals) == 1 and vals[0] == int(vals[0]):
            return make_fock(int(vals[0]), dim)
    except ValueError as exc:
        raise ConfigError(f"bad initial state {spec!r}: {exc}") from exc
    raise ConfigError(f"bad initial state {spec!r} (coherent:a | squeezed:a,z | fock:n)")


def run_trajectories(p, seed, out):
    initial = parse_initial_state(p["init"], p["dim"])
    results = run_ensemble(
        seed, p["count"], initial, p["theta_s"], p["max_atoms"], p["tol"], workers=p["workers"]
    )
    converged = sum(r.converged for r in results)
    # worker count does not change the output, so it stays out of the header
    shown = {k: v for k, v in p.items() if k != "workers"}
    head = _header("trajectories", seed, shown, [("converged", converged)])
    cols = ["seed", "trajectory", "M_used", "converged", "converged_class", "class_mass"]
    return [write_csv(out, cols, ensemble_rows(seed, results), head)]


def run_prepare_feedback(p, seed, out):
    cfg = FeedbackConfig(
        target=p["target"],
        dim=p["dim"],
        stop_alpha=p["stop_alpha"],
        max_steps=p["max_steps"],
        sensor_theta=p["sensor_theta"],
        settle_mass=p["settle_mass"],
    )
    summary, history = [], []
    for k in range(p["runs"]):
        res = feedback_prepare(make_rng(seed, k), cfg)
        p_t = float(res.final.mat[cfg.target, cfg.target].real)
        summary.append((k, int(res.success), res.steps, p_t, len(res.displacements)))
        history.extend((k, step, f) for step, f in enumerate(res.history))
    rate = sum(s[1] for s in summary) / max(1, len(summary))
    head = _header("prepare-feedback", seed, p, [("success_rate", rate)])
    return [
        write_csv(out, ["run", "success", "steps", "p_target", "kicks"], summary, head),
        write_csv(_sibling(out, "history"), ["run", "step", "fidelity"], history, head),
    ]


def run_cascade(p, seed, out):
    ens = cascade_ensemble(seed, p["levels"], p["m"], p["count"], use_half_term=p["half_term"])
    stage_rows = []
    for k, (theta, rep) in enumerate(zip(ens.thetas, ens.reports)):
        for s in rep.stages:
            stage_rows.append((k, s.j, s.photons, s.phase_true, s.phase_hat, s.error))
    extra = [
        ("rms", ens.rms),
        ("stage_bound", ens.stage_bound),
        ("stage_bound_2m", ens.stage_bound_all_probes),
        ("rounding_error_rate", ens.rounding_error_rate()),
    ]
    head = _header("cascade", seed, p, extra)
    summary = [(p["levels"], p["m"], ens.rms, ens.stage_bound, ens.stage_bound_all_probes)]
    estimates = [
        (k, float(t), r.theta_hat, float(e))
        for k, (t, r, e) in enumerate(zip(ens.thetas, ens.reports, ens.errors))
    ]
    return [
        write_csv(out, ["rep", "j", "photons", "Theta_true", "Theta_hat", "err"], stage_rows, head),
        write_csv(
            _sibling(out, "summary"), ["L", "m", "rms", "stage_bound", "stage_bound_2m"], summary, head
        ),
        write_csv(
            _sibling(out, "estimates"), ["rep", "theta_true", "theta_hat", "err"], estimates, head
        ),
    ]


def run_sensing(p, seed, out):
    g = GeometryParams(
        omega0=2 * math.pi * p["omega0_hz"],
        w=p["w"],
        detuning=2 * math.pi * p["delta_hz"],
        v=p["v"],
        omega_c=2 * math.pi * p["omega_c_hz"],
    )
    z0 = z_zero(g)
    extra = [("z0", z0), ("delta_z", displacement_sensitivity(p["m"], p["n"], g))]
    zs = np.linspace(0.0, 2 * max_slope_position(g), p["points"])
    head = _header("sensing", seed, p, extra)
    return [write_csv(out, ["z", "theta", "dtheta_dz"], sweep(g, zs), head)]


RUNNERS = {
    "fringe": run_fringe,
    "fisher-map": run_fisher_map,
    "advantage": run_advantage,
    "trajectories": run_trajectories,
    "prepare-feedback": run_prepare_feedback,
    "cascade": run_cascade,
    "sensing": run_sensing,
}


def run(experiment, params=None, seed=0, out=None, config=None):
    """Resolve parameters and run one experiment; returns the CSV paths written."""
    if not 0 <= int(seed) <= MASK64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    file_pairs = read_config_file(config) if config else {}
    overrides = {
        k: ",".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v)
        for k, v in (params or {}).items()
    }
    resolved = resolve_params(experiment, file_pairs, overrides)
    if out is None:
        out = Path(os.environ.get(OUT_DIR_ENV, ".")) / f"{experiment}.csv"
    return RUNNERS[experiment](resolved, int(seed), Path(out))


def build_parser():
    parser = argparse.ArgumentParser(prog="qndmetro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qndmetro {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a named experiment")
    runp.add_argument("experiment", choices=sorted(EXPERIMENTS))
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--out", default=None)
    runp.add_argument("--config", default=None, help="flat key=value parameter file")
    sub.add_parser("list", help="show experiments and their default parameters")
    return parser


def main(argv=None):
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        if args.command == "list":
            if rest:
                raise ConfigError(f"unexpected arguments {rest}")
            for name, defaults in EXPERIMENTS.items():
                print(name, " ".join(f"{k}={v}" for k, v in defaults.items()))
            return 0
        flags = _parse_flags(rest)
        paths = run(args.experiment, flags, seed=args.seed, out=args.out, config=args.config)
    except TruncationError as exc:
        print(f"qndmetro: numerical diagnostic: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        # model constructors reject out-of-range parameters with ValueError
        print(f"qndmetro: config error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

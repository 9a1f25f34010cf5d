import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qndmetro.errors import DegenerateRecordError, OutOfRangeError
from qndmetro.fock import CavityPureState, make_coherent, make_fock
from qndmetro.interferometer import RamseyParams, measure_update
from qndmetro.preparation import (
    FeedbackConfig,
    OutcomeRecord,
    class_label,
    degeneracy_classes,
    ensemble_rows,
    feedback_ensemble,
    feedback_prepare,
    martingale_gap,
    off_class_mass_curve,
    posterior_distribution,
    run_ensemble,
    run_trajectory,
    single_atom_likelihood,
)
from qndmetro.rng import make_rng


def brute_classes(theta_s, dim):
    """Pairwise comparison of cos^2 likelihoods, merged by connected components."""
    q = [math.cos((n + 0.5) * theta_s / 2) ** 2 for n in range(dim)]
    parent = list(range(dim))

    def root(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for a, b in itertools.combinations(range(dim), 2):
        if abs(q[a] - q[b]) < 1e-9:
            parent[root(b)] = root(a)
    groups = {}
    for n in range(dim):
        groups.setdefault(root(n), set()).add(n)
    return sorted((frozenset(g) for g in groups.values()), key=min)


@pytest.mark.parametrize("theta_s,dim", [(0.6, 15), (math.pi / 3, 12), (math.pi / 3, 15), (math.pi / 2, 10)])
def test_classes_match_brute_force(theta_s, dim):
    assert degeneracy_classes(theta_s, dim) == brute_classes(theta_s, dim)


def test_classes_at_pi_over_three():
    # n and n' share a likelihood iff n = n' (mod 6) or n + n' = 5 (mod 6)
    classes = degeneracy_classes(math.pi / 3, 12)
    assert classes == [
        frozenset({0, 5, 6, 11}),
        frozenset({1, 4, 7, 10}),
        frozenset({2, 3, 8, 9}),
    ]
    for c in classes:
        for a, b in itertools.combinations(c, 2):
            assert (a - b) % 6 == 0 or (a + b) % 6 == 5


def test_generic_angle_has_singletons():
    assert all(len(c) == 1 for c in degeneracy_classes(0.6, 15))


def test_posterior_matches_sequential_updates():
    state = make_coherent(math.sqrt(3), 15)
    outcomes = (1, -1, -1, 1, 1, -1, 1, 1)
    p = RamseyParams(0.6)
    s = state
    for i in outcomes:
        s, _ = measure_update(s, p, i)
    post = posterior_distribution(state, OutcomeRecord(outcomes, 0.6))
    np.testing.assert_allclose(post.probs, np.abs(s.amps) ** 2, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([1, -1]), min_size=1, max_size=30))
def test_posterior_order_independent(outcomes):
    state = make_coherent(1.2, 15)
    a = posterior_distribution(state, OutcomeRecord(outcomes, 0.6)).probs
    b = posterior_distribution(state, OutcomeRecord(sorted(outcomes), 0.6)).probs
    np.testing.assert_allclose(a, b, atol=1e-13)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)


def test_long_records_do_not_underflow():
    state = make_coherent(math.sqrt(3), 15)
    post = posterior_distribution(state, OutcomeRecord((1,) * 2000 + (-1,) * 3000, 0.6))
    assert np.all(np.isfinite(post.probs))


def test_degenerate_record():
    # with no dispersive phase a -1 readout is impossible for every n
    with pytest.raises(DegenerateRecordError):
        posterior_distribution(make_coherent(1.0, 10), OutcomeRecord((-1,), 0.0))


def test_record_validation():
    with pytest.raises(ValueError):
        OutcomeRecord((1, 0), 0.6)
    r = OutcomeRecord((1, -1, 1), 0.6)
    assert (r.n_plus, r.n_minus, len(r)) == (2, 1, 3)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.0, 1.7))
def test_martingale(theta_s, alpha):
    assert martingale_gap(make_coherent(alpha, 15), theta_s) < 1e-12


def test_trajectory_converges_to_a_class():
    res = run_trajectory(make_rng(1, 0), make_coherent(math.sqrt(3), 15), 0.6, max_atoms=1000)
    assert res.converged
    assert res.class_mass >= 1 - 1e-3
    assert res.atoms_used == len(res.record)
    (n,) = res.converged_class
    assert np.abs(res.final.amps[n]) ** 2 >= 1 - 1e-3


def test_trajectory_respects_atom_budget():
    res = run_trajectory(make_rng(1, 0), make_coherent(math.sqrt(3), 15), 0.6, max_atoms=3)
    assert res.atoms_used == 3 and not res.converged
    with pytest.raises(OutOfRangeError):
        run_trajectory(make_rng(0), make_fock(0, 3), 0.6, max_atoms=0)


def test_fock_input_needs_no_atoms():
    res = run_trajectory(make_rng(0), make_fock(2, 8), 0.6)
    assert res.atoms_used == 0 and res.converged_class == frozenset({2})


def test_ensemble_independent_of_workers():
    init = make_coherent(math.sqrt(3), 15)
    a = run_ensemble(5, 24, init, 0.6)
    b = run_ensemble(5, 24, init, 0.6, workers=3)
    assert list(ensemble_rows(5, a)) == list(ensemble_rows(5, b))


def test_ensemble_rows_format():
    init = make_coherent(1.0, 12)
    rows = list(ensemble_rows(3, run_ensemble(3, 2, init, math.pi / 3)))
    assert [r["trajectory"] for r in rows] == [0, 1]
    assert class_label(frozenset({5, 0, 11, 6})) == "0+5+6+11"


def test_off_class_mass_decays():
    curve = off_class_mass_curve(make_coherent(math.sqrt(3), 15), 0.6, 3, 200)
    assert curve[-1] < 1e-3
    assert curve[-1] < curve[20] < curve[0]


def test_single_atom_likelihood():
    q = single_atom_likelihood(0.6, 5)
    np.testing.assert_allclose(q, np.cos((np.arange(5) + 0.5) * 0.3) ** 2)


def test_feedback_config_validation():
    with pytest.raises(OutOfRangeError):
        FeedbackConfig(target=11, dim=15)
    with pytest.raises(ValueError):
        FeedbackConfig(target=1, stop_alpha=0)
    cfg = FeedbackConfig(target=1, alpha_grid=(0.5, -0.5))
    assert 0.0 in cfg.alpha_grid


def test_feedback_prepares_target():
    cfg = FeedbackConfig(target=2)
    res = feedback_prepare(make_rng(4, 0), cfg)
    assert res.history[0] == 0.0
    assert len(res.history) == res.steps + 1
    assert res.success
    assert res.final.mat[2, 2].real >= 0.8
    assert len(res.displacements) >= 1


def test_feedback_from_target_does_nothing():
    cfg = FeedbackConfig(target=1)
    res = feedback_prepare(make_rng(0), cfg, initial=make_fock(1, 15))
    assert res.steps == 0 and res.displacements == () and res.success


def test_feedback_ensemble_is_reproducible():
    cfg = FeedbackConfig(target=1, max_steps=100)
    a = feedback_ensemble(8, cfg, 3)
    b = feedback_ensemble(8, cfg, 3)
    assert [r.history for r in a] == [r.history for r in b]


def test_pure_state_type():
    assert isinstance(run_trajectory(make_rng(0), make_fock(1, 4), 0.6).final, CavityPureState)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from qndmetro.errors import DimensionMismatchError, OutOfRangeError, TruncationError
from qndmetro.fock import (
    CavityDensity,
    CavityPureState,
    PhotonDistribution,
    annihilation_op,
    creation_op,
    displacement_op,
    fidelity,
    make_coherent,
    make_fock,
    make_squeezed_coherent,
    number_op,
    squeeze_op,
)


def test_fock_basis():
    s = make_fock(3, 8)
    assert s.dim == 8
    assert s.mean_photon_number() == 3
    assert s.photon_variance() == 0
    with pytest.raises(OutOfRangeError):
        make_fock(8, 8)
    with pytest.raises(OutOfRangeError):
        make_fock(-1, 8)


def test_ladder_operators():
    a, ad, n = annihilation_op(6), creation_op(6), number_op(6)
    np.testing.assert_allclose(ad @ a, n, atol=1e-15)
    np.testing.assert_allclose(a @ make_fock(3, 6).amps, math.sqrt(3) * make_fock(2, 6).amps)


def test_coherent_matches_poisson():
    # oracle: Poisson pmf from scipy
    s = make_coherent(math.sqrt(3), 40)
    np.testing.assert_allclose(s.populations().probs, poisson.pmf(np.arange(40), 3.0), atol=1e-14)
    assert abs(s.mean_photon_number() - 3.0) < 1e-6
    assert abs(s.fano_factor() - 1.0) < 1e-6


def test_coherent_at_small_truncation():
    # renormalisation after cutting the tail at n = 14 shifts the mean by ~8e-6
    s = make_coherent(math.sqrt(3), 15)
    assert abs(s.mean_photon_number() - 3.0) < 1e-5


def test_coherent_phase():
    s = make_coherent(1j * 0.7, 20)
    ratio = s.amps[1] / s.amps[0]
    assert abs(ratio - 0.7j) < 1e-12


def test_coherent_truncation_guard():
    with pytest.raises(TruncationError):
        make_coherent(3.0, 12)
    with pytest.raises(TruncationError) as err:
        make_coherent(1.9, 11)  # passes the dim/3 rule but the tail is too heavy
    assert err.value.tail_mass > 1e-6


def test_displacement_of_vacuum_is_coherent():
    alpha = 0.8 - 0.3j
    d = displacement_op(alpha, 30)
    vac = make_fock(0, 30).amps
    n = np.arange(30)
    expected = np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt([float(math.factorial(int(k))) for k in n])
    np.testing.assert_allclose(d @ vac, expected, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(-math.pi, math.pi))
def test_displacement_unitary_on_low_columns(radius, angle):
    d = displacement_op(radius * complex(math.cos(angle), math.sin(angle)), 40)
    block = d[:, :20]
    np.testing.assert_allclose(block.conj().T @ block, np.eye(20), atol=1e-8)


def test_displacement_group_law():
    a, b = 0.4, 0.3
    lhs = displacement_op(a, 30) @ displacement_op(b, 30)
    rhs = displacement_op(a + b, 30)
    # real displacements commute: D(a) D(b) = D(a + b)
    np.testing.assert_allclose(lhs[:15, :15], rhs[:15, :15], atol=1e-10)


def test_squeezed_is_sub_poissonian():
    s = make_squeezed_coherent(1.7, 0.3, 30)
    assert s.fano_factor() < 1.0
    vac_sq = squeeze_op(0.3, 30) @ make_fock(0, 30).amps
    # squeezed vacuum has only even photon numbers, mean sinh^2(r)
    assert np.abs(vac_sq[1::2]).max() < 1e-14
    pops = np.abs(vac_sq) ** 2
    assert abs(pops @ np.arange(30) - math.sinh(0.3) ** 2) < 1e-10


def test_squeezed_truncation_guard():
    with pytest.raises(TruncationError):
        make_squeezed_coherent(2.5, 0.5, 10)


def test_state_validation():
    with pytest.raises(ValueError):
        CavityPureState([1.0, 1.0])
    with pytest.raises(ValueError):
        PhotonDistribution([0.5, 0.6])
    with pytest.raises(ValueError):
        CavityDensity(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(ValueError):
        CavityDensity(np.diag([1.5, -0.5]))
    s = make_fock(1, 3)
    with pytest.raises(ValueError):
        s.amps[0] = 1.0


def test_fidelity_forms():
    a = make_coherent(1.0, 20)
    b = make_fock(1, 20)
    expected = abs(a.amps[1]) ** 2
    assert fidelity(a, b) == pytest.approx(expected, abs=1e-14)
    assert fidelity(a.as_density(), b) == pytest.approx(expected, abs=1e-12)
    assert fidelity(a.as_density(), b.as_density()) == pytest.approx(expected, abs=1e-7)
    p = PhotonDistribution([0.2, 0.8])
    q = PhotonDistribution([0.5, 0.5])
    classical = (math.sqrt(0.1) + math.sqrt(0.4)) ** 2
    assert fidelity(p, q) == pytest.approx(classical, abs=1e-14)
    # diagonal densities reduce to the classical form
    assert fidelity(p.as_density(), q.as_density()) == pytest.approx(classical, abs=1e-12)
    with pytest.raises(DimensionMismatchError):
        fidelity(p, PhotonDistribution([1.0, 0, 0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8))
def test_fidelity_bounds(weights):
    w = np.array(weights) / sum(weights)
    p = PhotonDistribution(w)
    q = PhotonDistribution(w[::-1])
    f = fidelity(p, q)
    assert 0.0 <= f <= 1.0
    assert fidelity(p, p) == pytest.approx(1.0, abs=1e-12)
    assert f == pytest.approx(fidelity(q, p), abs=1e-14)


def test_padding():
    p = PhotonDistribution([0.3, 0.7]).padded(4)
    assert p.dim == 4 and p.probs[2:].sum() == 0
    with pytest.raises(DimensionMismatchError):
        p.padded(2)


def test_root_fidelity():
    from qndmetro.fock import root_fidelity

    p = PhotonDistribution([0.2, 0.8])
    q = PhotonDistribution([0.5, 0.5])
    assert root_fidelity(p, q) == pytest.approx(math.sqrt(0.1) + math.sqrt(0.4), abs=1e-14)
    assert fidelity(make_fock(0, 2).as_density(), make_fock(1, 2).as_density()) == pytest.approx(0, abs=1e-12)

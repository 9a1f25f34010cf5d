"""Truncated Fock-space states and operators for a single cavity mode."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import DimensionMismatchError, OutOfRangeError, TruncationError

NORM_TOL = 1e-10
TAIL_TOL = 1e-6
# extra levels for operator exponentials so the edge of the truncated
# generator cannot reach the retained block
OPERATOR_PAD = 40


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CavityPureState:
    """Pure field state sum_n c_n |n> on the basis |0>..|dim-1>."""

    amps: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amps, complex).reshape(-1)
        if amps.size < 1:
            raise OutOfRangeError("dim must be >= 1")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalised (norm^2 = {norm!r})")
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self):
        return self.amps.size

    def populations(self) -> PhotonDistribution:
        return PhotonDistribution(np.abs(self.amps) ** 2)

    def as_density(self) -> CavityDensity:
        return CavityDensity(np.outer(self.amps, self.amps.conj()))

    def mean_photon_number(self):
        return self.populations().mean()

    def photon_variance(self):
        return self.populations().variance()

    def fano_factor(self):
        return self.populations().fano_factor()


@dataclass(frozen=True)
class PhotonDistribution:
    """Diagonal field state: photon-number probabilities q_n."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if probs.size < 1:
            raise OutOfRangeError("dim must be >= 1")
        if np.any(probs < -1e-15):
            raise ValueError("negative photon-number probability")
        probs = np.clip(probs, 0.0, None)
        if abs(probs.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(probs, float))

    @property
    def dim(self):
        return self.probs.size

    def mean(self):
        n = np.arange(self.dim)
        return float(n @ self.probs)

    def variance(self):
        n = np.arange(self.dim)
        return float((n**2) @ self.probs - self.mean() ** 2)

    def fano_factor(self):
        return self.variance() / self.mean()

    def padded(self, dim) -> PhotonDistribution:
        """Embed into a larger truncation (zeros above the current support)."""
        if dim < self.dim:
            raise DimensionMismatchError(f"cannot pad dim {self.dim} down to {dim}")
        return PhotonDistribution(np.pad(self.probs, (0, dim - self.dim)))

    def as_density(self) -> CavityDensity:
        return CavityDensity(np.diag(self.probs.astype(complex)))


@dataclass(frozen=True)
class CavityDensity:
    mat: np.ndarray

    def __post_init__(self):
        mat = np.array(self.mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ValueError("density matrix must be square and non-empty")
        if np.abs(mat - mat.conj().T).max() > 1e-10:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(mat).real - 1.0) > 1e-10:
            raise ValueError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(mat).min() < -1e-9:
            raise ValueError("density matrix not positive semidefinite")
        object.__setattr__(self, "mat", _frozen(mat, complex))

    @property
    def dim(self):
        return self.mat.shape[0]

    def populations(self) -> PhotonDistribution:
        return PhotonDistribution(self.mat.diagonal().real)

    def as_density(self) -> CavityDensity:
        return self


def annihilation_op(dim):
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def creation_op(dim):
    return annihilation_op(dim).conj().T


def number_op(dim):
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def make_fock(n, dim) -> CavityPureState:
    if not 0 <= n < dim:
        raise OutOfRangeError(f"photon number {n} outside truncation 0..{dim - 1}")
    amps = np.zeros(dim, complex)
    amps[n] = 1.0
    return CavityPureState(amps)


def _check_tail(tail, what):
    if tail > TAIL_TOL:
        raise TruncationError(
            f"{what}: truncated tail mass {tail:.3g} exceeds {TAIL_TOL:g}", tail_mass=tail
        )


def make_coherent(alpha, dim) -> CavityPureState:
    """Coherent state |alpha>, renormalised on the truncated basis.

    Raises TruncationError when |alpha|^2 > dim/3 or the Poisson tail beyond
    ``dim - 1`` carries more than 1e-6 of the norm.
    """
    alpha = complex(alpha)
    nbar = abs(alpha) ** 2
    if nbar > dim / 3:
        raise TruncationError(f"|alpha|^2 = {nbar:g} exceeds dim/3 = {dim / 3:g}")
    _check_tail(float(poisson.sf(dim - 1, nbar)) if nbar > 0 else 0.0, "coherent state")
    n = np.arange(dim)
    if alpha == 0:
        return make_fock(0, dim)
    # log-magnitudes keep n! from overflowing
    logmag = -nbar / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(logmag) * np.exp(1j * np.angle(alpha) * n)
    return CavityPureState(amps / np.linalg.norm(amps))


def _cropped_expm(generator_of_dim, dim, pad):
    big = dim + pad
    return expm(generator_of_dim(big))[:dim, :dim]


def displacement_op(alpha, dim, pad=OPERATOR_PAD):
    """Matrix elements <m|exp(alpha a^dag - alpha^* a)|n> for m, n < dim.

    The exponential is taken on ``dim + pad`` levels and cropped, so the
    retained block matches the untruncated operator; it is unitary on columns
    well below the cutoff, not on the last few.
    """
    if dim < 2:
        raise OutOfRangeError("displacement needs dim >= 2")
    alpha = complex(alpha)

    def gen(n):
        a = annihilation_op(n)
        return alpha * a.conj().T - np.conj(alpha) * a

    return _cropped_expm(gen, dim, pad)


def squeeze_op(zeta, dim, pad=OPERATOR_PAD):
    """exp(zeta (a^2 - a^dag^2) / 2), cropped like ``displacement_op``.

    Real zeta > 0 squeezes the x quadrature.
    """
    if dim < 2:
        raise OutOfRangeError("squeeze needs dim >= 2")

    def gen(n):
        a = annihilation_op(n)
        ad = a.conj().T
        return zeta * (a @ a - ad @ ad) / 2

    return _cropped_expm(gen, dim, pad)


def make_squeezed_coherent(alpha, zeta, dim) -> CavityPureState:
    """D(alpha) S(zeta) |0>, evaluated on a padded basis then truncated to ``dim``.

    With real alpha and real zeta >= 0 the photon statistics are
    sub-Poissonian (number squeezed).
    """
    big = dim + OPERATOR_PAD
    vac = np.zeros(big, complex)
    vac[0] = 1.0
    amps = displacement_op(alpha, big) @ (squeeze_op(zeta, big) @ vac)
    tail = max(0.0, 1.0 - float(np.sum(np.abs(amps[:dim]) ** 2)))
    _check_tail(tail, "squeezed coherent state")
    kept = amps[:dim]
    return CavityPureState(kept / np.linalg.norm(kept))


def _psd_sqrt(mat):
    w, v = np.linalg.eigh(mat)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(a, b):
    """Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))^2.

    Accepts PhotonDistribution, CavityDensity or CavityPureState. Two
    distributions use the classical form (sum_n sqrt(p_n q_n))^2.
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dims differ: {a.dim} vs {b.dim}")
    if isinstance(a, PhotonDistribution) and isinstance(b, PhotonDistribution):
        return float(min(1.0, np.sum(np.sqrt(a.probs * b.probs)) ** 2))
    if isinstance(a, CavityPureState) and isinstance(b, CavityPureState):
        return float(min(1.0, abs(np.vdot(a.amps, b.amps)) ** 2))
    if isinstance(a, CavityPureState):
        a, b = b, a
    if isinstance(b, CavityPureState):
        rho = a.as_density().mat
        return float(min(1.0, max(0.0, np.vdot(b.amps, rho @ b.amps).real)))
    sa = _psd_sqrt(a.as_density().mat)
    inner = sa @ b.as_density().mat @ sa
    w = np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None)
    return float(min(1.0, np.sum(np.sqrt(w)) ** 2))


def root_fidelity(a, b):
    """tr sqrt(sqrt(a) b sqrt(a)), the square root of ``fidelity``.

    Some texts call this quantity the fidelity; for diagonal states it is the
    Bhattacharyya coefficient sum_n sqrt(p_n q_n).
    """
    return math.sqrt(fidelity(a, b))

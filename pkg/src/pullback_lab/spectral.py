"""Dirichlet sine eigenbasis of -Laplacian on (0, length).

Eigenfunctions are orthonormal in L2:  w_j(x) = sqrt(2/length) sin(j pi x / length),
with eigenvalues lambda_j = (j pi / length)^2.  A field is stored as its vector of
coefficients against this basis, so every norm below is a weighted sum of squares.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GridTooCoarse


@dataclass(frozen=True)
class SpectralField:
    coefficients: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral field has non-finite coefficients")
        object.__setattr__(self, "coefficients", c)

    @property
    def mode_count(self):
        return self.coefficients.shape[0]


@dataclass(frozen=True)
class EigenData:
    eigenvalues: np.ndarray
    length: float

    @property
    def lambda1(self):
        return float(self.eigenvalues[0])

    @property
    def mode_count(self):
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class NormBundle:
    L2_sq: float
    grad_sq: float
    lap_sq: float
    Hminus1_sq: float
    Ht_sq: float
    Ht1_sq: float


def _coeffs(u):
    return np.asarray(getattr(u, "coefficients", u), dtype=float)


def eigenvalues(domain):
    """Eigenvalues (j pi / L)^2 for j = 1..N of the domain."""
    j = np.arange(1, domain.mode_count + 1, dtype=float)
    lam = (j * np.pi / domain.length) ** 2
    lam.setflags(write=False)
    return EigenData(eigenvalues=lam, length=float(domain.length))


def eigenvalues_for(length, mode_count):
    j = np.arange(1, mode_count + 1, dtype=float)
    return (j * np.pi / length) ** 2


@lru_cache(maxsize=64)
def _transform_matrices(length, mode_count, grid_size):
    # interior nodes x_i = i h, i = 1..M, h = L/(M+1); the discrete rule
    # h * sum_i w_j(x_i) w_k(x_i) = delta_jk holds exactly for j, k <= M.
    h = length / (grid_size + 1)
    x = h * np.arange(1, grid_size + 1)
    j = np.arange(1, mode_count + 1)
    synth = np.sqrt(2.0 / length) * np.sin(np.outer(x, j) * np.pi / length)
    analysis = h * synth.T
    synth.setflags(write=False)
    analysis.setflags(write=False)
    return x, synth, analysis


class SineTransform:
    """Direct-summation sine transform between N coefficients and M interior nodes."""

    def __init__(self, length, mode_count, grid_size=None):
        if grid_size is None:
            grid_size = 2 * mode_count + 1
        if grid_size < 2 * mode_count + 1:
            raise GridTooCoarse(
                f"grid_size {grid_size} < 2N+1 = {2 * mode_count + 1}")
        self.length = float(length)
        self.mode_count = int(mode_count)
        self.grid_size = int(grid_size)
        self.nodes, self._synth, self._analysis = _transform_matrices(
            self.length, self.mode_count, self.grid_size)

    def to_grid(self, coeffs):
        return self._synth @ coeffs

    def to_coeffs(self, values):
        return self._analysis @ values

    def apply(self, coeffs, fn):
        return self._analysis @ fn(self._synth @ coeffs)


def apply_pointwise(u, fn, grid_size, length):
    """Sine coefficients of fn(u(x)) by synthesis, pointwise map, analysis."""
    c = _coeffs(u)
    tr = SineTransform(length, c.shape[0], grid_size)
    out = tr.apply(c, fn)
    return SpectralField(out, getattr(u, "timestamp", 0.0))


def nonlocal_value(u, weights):
    """l(u) = integral of j(x) u(x), i.e. the coefficient dot product."""
    c = _coeffs(u)
    w = np.asarray(weights, dtype=float)
    n = min(c.shape[0], w.shape[0])
    return float(np.dot(w[:n], c[:n]))


def norms(u, eps_value, eigen):
    c = _coeffs(u)
    lam = eigen.eigenvalues if isinstance(eigen, EigenData) else np.asarray(eigen)
    sq = c * c
    L2 = float(sq.sum())
    grad = float((lam * sq).sum())
    lap = float((lam * lam * sq).sum())
    hm1 = float((sq / lam).sum())
    return NormBundle(
        L2_sq=L2,
        grad_sq=grad,
        lap_sq=lap,
        Hminus1_sq=hm1,
        Ht_sq=L2 + eps_value * grad,
        Ht1_sq=grad + abs(eps_value) * lap,
    )


def basis_function(j, length):
    """Callable w_j(x); used by quadrature oracles and the finite-difference grid."""
    scale = np.sqrt(2.0 / length)
    return lambda x: scale * np.sin(j * np.pi * np.asarray(x) / length)

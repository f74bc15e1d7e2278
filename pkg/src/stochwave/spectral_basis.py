"""Dirichlet sine eigenbasis on (0, 1) and its diagonal operator actions.

Functions are represented by their coefficients in the orthonormal basis
``e_i(x) = sqrt(2) sin(i pi x)``, ``i = 1..N``, eigenfunctions of the
Dirichlet Laplacian ``Lambda`` with eigenvalues ``lambda_i = pi^2 i^2``.
Every function here accepts coefficient arrays of shape ``(..., N)`` so a
batch of Monte Carlo samples can be pushed through in one call.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.fft

__all__ = [
    "SpectralBasis",
    "Field",
    "StatePair",
    "make_basis",
    "to_grid",
    "from_grid",
    "apply_lambda_power",
    "sobolev_norm",
    "cos_op",
    "sin_op",
    "apply_group",
    "h_norm",
]


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    n_modes: int
    eigenvalues: np.ndarray
    collocation_points: np.ndarray
    sqrt_eigenvalues: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def rotation(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Cached ``(cos(t sqrt(lambda_i)), sin(t sqrt(lambda_i)))``."""
        t = float(t)
        hit = self._cache.get(t)
        if hit is None:
            arg = t * self.sqrt_eigenvalues
            hit = (np.cos(arg), np.sin(arg))
            for a in hit:
                a.flags.writeable = False
            self._cache[t] = hit
        return hit

    @property
    def sine_matrix(self) -> np.ndarray | None:
        """Symmetric ``sqrt(2) sin(pi i j / (N+1))`` when dense products beat the DST.

        DST-I runs an FFT of length ``2(N+1)``; when ``N+1`` has a large prime
        factor (``N = 256`` gives 257) that FFT is several times slower than a
        BLAS product for the sizes used here.
        """
        hit = self._cache.get("sine_matrix", False)
        if hit is False:
            hit = None
            n = self.n_modes
            if n <= 2048 and _largest_prime_factor(n + 1) > 64:
                i = np.arange(1, n + 1)
                # reduce i*j mod 2(N+1) so the sine argument stays small
                arg = np.outer(i, i) % (2 * (n + 1))
                hit = np.sqrt(2.0) * np.sin(np.pi * arg / (n + 1))
                hit.flags.writeable = False
            self._cache["sine_matrix"] = hit
        return hit

    def check(self, coeffs: Any) -> np.ndarray:
        arr = np.asarray(coeffs, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.n_modes:
            raise ValueError(
                f"expected trailing dimension {self.n_modes}, got shape {arr.shape}"
            )
        return arr


@dataclass(frozen=True)
class Field:
    """Coefficients of a function in the sine basis, tagged with a Sobolev index."""

    coeffs: np.ndarray
    sobolev_index: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coeffs, dtype=dtype)

    def norm(self, basis: SpectralBasis, gamma: float | None = None) -> float:
        g = self.sobolev_index if gamma is None else gamma
        return float(sobolev_norm(basis, self.coeffs, g))


@dataclass(frozen=True)
class StatePair:
    """Displacement/velocity coefficients ``X = (u, v)`` in ``H = H^0 x H^-1``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.u.shape != self.v.shape:
            raise ValueError(f"u and v shapes differ: {self.u.shape} vs {self.v.shape}")

    @classmethod
    def zeros(cls, basis: SpectralBasis) -> "StatePair":
        return cls(np.zeros(basis.n_modes), np.zeros(basis.n_modes))

    def h_norm(self, basis: SpectralBasis) -> np.ndarray | float:
        return h_norm(basis, self)


def _largest_prime_factor(n: int) -> int:
    best, p = 1, 2
    while p * p <= n:
        while n % p == 0:
            best, n = p, n // p
        p += 1
    return max(best, n)


def make_basis(n_modes: int) -> SpectralBasis:
    n_modes = int(n_modes)
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    i = np.arange(1, n_modes + 1, dtype=float)
    lam = np.pi**2 * i**2
    xi = i / (n_modes + 1)
    for a in (i, lam, xi):
        a.flags.writeable = False
    return SpectralBasis(n_modes, lam, xi, np.pi * i)


def to_grid(basis: SpectralBasis, coeffs) -> np.ndarray:
    """Point values ``sum_i c_i e_i(xi_j)`` at the collocation points."""
    c = basis.check(coeffs)
    S = basis.sine_matrix
    if S is not None:
        return c @ S
    return scipy.fft.dst(c, type=1, norm="ortho", axis=-1) * np.sqrt(basis.n_modes + 1)


def from_grid(basis: SpectralBasis, values) -> np.ndarray:
    """Inverse of :func:`to_grid` via discrete sine orthogonality."""
    g = basis.check(values)
    S = basis.sine_matrix
    if S is not None:
        return (g @ S) / (basis.n_modes + 1)
    return scipy.fft.dst(g, type=1, norm="ortho", axis=-1) / np.sqrt(basis.n_modes + 1)


def _lambda_power(basis: SpectralBasis, gamma: float) -> np.ndarray:
    # exp(gamma log lambda) keeps large negative powers representable
    return np.exp(gamma * np.log(basis.eigenvalues))


def apply_lambda_power(basis: SpectralBasis, field_or_coeffs, gamma: float):
    """Apply ``Lambda^gamma``. A :class:`Field` comes back as a Field with shifted index."""
    scale = _lambda_power(basis, gamma)
    if isinstance(field_or_coeffs, Field):
        return Field(
            basis.check(field_or_coeffs.coeffs) * scale,
            field_or_coeffs.sobolev_index - 2.0 * gamma,
        )
    return basis.check(field_or_coeffs) * scale


def sobolev_norm(basis: SpectralBasis, coeffs, gamma: float):
    """``||u||_gamma = (sum_i lambda_i^gamma c_i^2)^(1/2)`` over the last axis."""
    c = basis.check(coeffs)
    return np.sqrt(np.sum(_lambda_power(basis, gamma) * c**2, axis=-1))


def cos_op(basis: SpectralBasis, t: float) -> np.ndarray:
    return basis.rotation(t)[0]


def sin_op(basis: SpectralBasis, t: float) -> np.ndarray:
    return basis.rotation(t)[1]


def apply_group(basis: SpectralBasis, t: float, X: StatePair) -> StatePair:
    """Exact linear wave propagator ``E(t) = exp(tA)``, one 2x2 rotation per mode."""
    u = basis.check(X.u)
    v = basis.check(X.v)
    c, s = basis.rotation(t)
    k = basis.sqrt_eigenvalues
    return StatePair(c * u + (s / k) * v, -(k * s) * u + c * v)


def h_norm(basis: SpectralBasis, X: StatePair):
    """``||X||_H^2 = ||u||_0^2 + ||v||_{-1}^2``; reduces over the last axis."""
    u = basis.check(X.u)
    v = basis.check(X.v)
    return np.sqrt(np.sum(u**2 + v**2 / basis.eigenvalues, axis=-1))

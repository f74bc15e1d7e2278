"""Semilinear stochastic wave problems in the sine basis.

    u_tt = u_xx + f(x, u) + g(x, u) dW/dt  on (0, 1),  u(t, 0) = u(t, 1) = 0.

The Nemytskij operators ``F(u)(x) = f(x, u(x))`` and ``G(u)phi = g(x, u(x)) phi(x)``
are evaluated pseudospectrally at the collocation points.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from . import noise
from .spectral_basis import SpectralBasis, StatePair, from_grid, make_basis, to_grid

__all__ = [
    "Nonlinearity",
    "Problem",
    "PRESETS",
    "NonFiniteError",
    "eval_F",
    "eval_G_times_increment",
    "check_assumption",
    "sine_gordon",
    "preset",
    "project_initial",
    "galerkin_project",
]

PointwiseFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class NonFiniteError(FloatingPointError):
    """A nonlinearity or state produced inf/nan."""


@dataclass(frozen=True)
class Nonlinearity:
    f: PointwiseFn
    g: PointwiseFn
    lipschitz_L: float = 1.0
    # When g is the constant sigma0, G(u) dW == sigma0 * dW; skips two transforms.
    g_constant: float | None = None

    @property
    def is_additive(self) -> bool:
        return self.g_constant is not None


def _zero(xi, u):
    return np.zeros_like(u)


def sine_gordon(sigma0: float = 0.0, sigma1: float = 1.0) -> Nonlinearity:
    """``f = -sin(u)``, ``g = sigma0 + sigma1 u``."""
    sigma0, sigma1 = float(sigma0), float(sigma1)

    def f(xi, u):
        return -np.sin(u)

    def g(xi, u):
        return sigma0 + sigma1 * u

    L = max(1.0, abs(sigma0), abs(sigma1))
    return Nonlinearity(f, g, L, sigma0 if sigma1 == 0.0 else None)


def check_assumption(nl: Nonlinearity, n_xi: int = 17, u_max: float = 10.0,
                     n_u: int = 81) -> bool:
    """Lattice spot check of the Lipschitz and linear growth bounds on f and g.

    Returns True when every check passes; violations only warn.
    """
    xi = np.linspace(0.0, 1.0, n_xi + 2)[1:-1]
    u = np.linspace(-u_max, u_max, n_u)
    X, U1, U2 = np.meshgrid(xi, u, u, indexing="ij")
    L = nl.lipschitz_L
    ok = True
    for name, fn in (("f", nl.f), ("g", nl.g)):
        a = np.broadcast_to(fn(X, U1), X.shape)
        b = np.broadcast_to(fn(X, U2), X.shape)
        lip = np.abs(a - b) <= L * np.abs(U1 - U2) * (1 + 1e-12) + 1e-14
        growth = np.abs(a) <= L * (np.abs(U1) + 1.0) * (1 + 1e-12)
        if not (lip.all() and growth.all()):
            ok = False
            warnings.warn(
                f"{name} violates the declared bounds with L={L} "
                f"({(~lip).sum()} Lipschitz, {(~growth).sum()} growth failures)",
                RuntimeWarning,
                stacklevel=2,
            )
    return ok


@dataclass(frozen=True)
class Problem:
    basis: SpectralBasis
    nonlinearity: Nonlinearity
    covariance: noise.CovarianceSpec
    initial: StatePair
    horizon_T: float = 1.0
    preset_name: str | None = None

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        n = self.basis.n_modes
        if self.covariance.n_modes != n:
            raise ValueError("covariance dimension does not match basis")
        if self.initial.u.shape[-1] != n:
            raise ValueError("initial state dimension does not match basis")

    @property
    def predicted_delta(self) -> float:
        return self.covariance.predicted_delta


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def eval_F(problem: Problem, u_hat) -> np.ndarray:
    basis = problem.basis
    grid = to_grid(basis, u_hat)
    vals = problem.nonlinearity.f(basis.collocation_points, grid)
    return from_grid(basis, _finite(np.asarray(vals, dtype=float), "f(x, u)"))


def eval_G_times_increment(problem: Problem, u_hat, increment) -> np.ndarray:
    nl = problem.nonlinearity
    basis = problem.basis
    if nl.g_constant is not None:
        return nl.g_constant * basis.check(increment)
    gvals = nl.g(basis.collocation_points, to_grid(basis, u_hat))
    gvals = _finite(np.asarray(gvals, dtype=float), "g(x, u)")
    return from_grid(basis, gvals * noise.increment_on_grid(basis, increment))


def project_initial(basis: SpectralBasis, u0, v0) -> StatePair:
    """Collocation coefficients of pointwise initial data."""
    xi = basis.collocation_points
    us = np.broadcast_to(np.asarray(u0(xi), dtype=float), xi.shape)
    vs = np.broadcast_to(np.asarray(v0(xi), dtype=float), xi.shape)
    _finite(us, "u0")
    _finite(vs, "v0")
    return StatePair(from_grid(basis, us), from_grid(basis, vs))


def galerkin_project(basis: SpectralBasis, fn, panels: int | None = None,
                     order: int = 8) -> np.ndarray:
    """L2 projection ``<fn, e_i>`` by composite Gauss-Legendre quadrature.

    Default panel count keeps every panel below 1/8 of the shortest
    resolved wavelength, which integrates the sines to round-off.
    """
    n = basis.n_modes
    panels = panels or max(64, 8 * n)
    x0, w0 = roots_legendre(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + 0.5 * h[:, None] * (x0[None, :] + 1.0)).ravel()
    w = (0.5 * h[:, None] * w0[None, :]).ravel()
    fx = _finite(np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape), "projected function")
    wf = w * fx
    out = np.empty(n)
    # chunk the mode axis to bound the sine table
    step = max(1, 2**22 // x.size)
    for lo in range(0, n, step):
        k = np.arange(lo + 1, min(n, lo + step) + 1)[:, None]
        out[lo:lo + k.shape[0]] = np.sqrt(2.0) * (np.sin(np.pi * k * x[None, :]) @ wf)
    return out


def _sg_strong_initial(basis):
    return StatePair(np.zeros(basis.n_modes), galerkin_project(basis, np.cos))


def _sg_weak_initial(basis):
    return StatePair(galerkin_project(basis, lambda x: np.cos(np.pi * (x - 0.5))),
                     np.zeros(basis.n_modes))


def _linear_initial(basis):
    return StatePair(galerkin_project(basis, lambda x: np.sin(np.pi * x)),
                     galerkin_project(basis, np.cos))


def _covariance(basis, kind, default):
    n = basis.n_modes
    kind = default if kind is None else kind
    if isinstance(kind, noise.CovarianceSpec):
        return kind
    if kind == "white":
        return noise.white(n)
    if kind == "trace":
        return noise.algebraic_decay(n, 1.1)
    if kind == "zero":
        return noise.custom(np.zeros(n), 1.0)
    return noise.algebraic_decay(n, float(kind))


# name -> (sigma0, sigma1, f is sine, default covariance, initial builder)
PRESETS = {
    "sine_gordon_strong_white": (0.0, 1.0, True, "white", _sg_strong_initial),
    "sine_gordon_strong_trace": (0.0, 1.0, True, "trace", _sg_strong_initial),
    "sine_gordon_weak_additive": (1.0, 0.0, True, "white", _sg_weak_initial),
    "linear_homogeneous": (0.0, 0.0, False, "zero", _linear_initial),
    "linear_additive": (1.0, 0.0, False, "white", _linear_initial),
}


def preset(name: str, n_modes: int, **overrides) -> Problem:
    """Build a named problem.

    Overrides: ``sigma0``, ``sigma1``, ``horizon_T``, ``covariance`` (``"white"``,
    ``"trace"``, ``"zero"``, a decay exponent, or a :class:`CovarianceSpec`) and
    ``initial`` (a :class:`StatePair`).
    """
    try:
        s0, s1, sine, cov_default, init = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    unknown = set(overrides) - {"sigma0", "sigma1", "horizon_T", "covariance", "initial"}
    if unknown:
        raise ValueError(f"unknown preset overrides: {sorted(unknown)}")
    basis = make_basis(n_modes)
    s0 = float(overrides.get("sigma0", s0))
    s1 = float(overrides.get("sigma1", s1))
    if sine:
        nl = sine_gordon(s0, s1)
    elif s1 == 0.0:
        nl = Nonlinearity(_zero, lambda xi, u: np.full_like(u, s0), max(1.0, abs(s0)), s0)
    else:
        nl = Nonlinearity(_zero, lambda xi, u: s0 + s1 * u, max(1.0, abs(s0), abs(s1)))
    cov = _covariance(basis, overrides.get("covariance"), cov_default)
    initial = overrides.get("initial") or init(basis)
    return Problem(basis, nl, cov, initial, float(overrides.get("horizon_T", 1.0)), name)


def with_initial(problem: Problem, initial: StatePair) -> Problem:
    return replace(problem, initial=initial)

"""One-step time integrators for the first-order system ``dX = AX dt + F(X) dt + G(X) dW``.

All three schemes share the form

    X_{m+1} = P X_m + R (0, tau F(u_m) + G(u_m) dW_m)^T

with per-mode 2x2 matrices ``P`` and ``R``:

* exponential Euler:     P = R = E(tau)
* linear implicit Euler: P = R = (I - tau A)^-1
* Crank-Nicolson:        P = (I - tau/2 A)^-1 (I + tau/2 A),  R = (I - tau/2 A)^-1

``A`` is block diagonal, so nothing global is ever assembled.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .model import NonFiniteError, Problem, eval_F, eval_G_times_increment
from .noise import BrownianPath
from .spectral_basis import SpectralBasis, StatePair

__all__ = [
    "SchemeKind",
    "StepPlan",
    "plan",
    "step",
    "exp_euler_componentwise",
    "integrate",
    "write_trajectory_csv",
]


class SchemeKind(enum.Enum):
    EXPONENTIAL_EULER = "EE"
    LINEAR_IMPLICIT_EULER = "LIE"
    CRANK_NICOLSON = "CN"

    @classmethod
    def parse(cls, name) -> "SchemeKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "ee": cls.EXPONENTIAL_EULER,
            "exponential_euler": cls.EXPONENTIAL_EULER,
            "exponentialeuler": cls.EXPONENTIAL_EULER,
            "lie": cls.LINEAR_IMPLICIT_EULER,
            "linear_implicit_euler": cls.LINEAR_IMPLICIT_EULER,
            "linearimpliciteuler": cls.LINEAR_IMPLICIT_EULER,
            "cn": cls.CRANK_NICOLSON,
            "crank_nicolson": cls.CRANK_NICOLSON,
            "cranknicolson": cls.CRANK_NICOLSON,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown scheme {name!r}") from None

    @property
    def label(self) -> str:
        return self.value


EE = SchemeKind.EXPONENTIAL_EULER
LIE = SchemeKind.LINEAR_IMPLICIT_EULER
CN = SchemeKind.CRANK_NICOLSON


@dataclass(frozen=True, eq=False)
class StepPlan:
    """Per-mode propagator ``P`` (entries p11..p22) and forcing column ``(r12, r22)`` of ``R``."""

    scheme: SchemeKind
    tau: float
    basis: SpectralBasis
    p11: np.ndarray
    p12: np.ndarray
    p21: np.ndarray
    p22: np.ndarray
    r12: np.ndarray
    r22: np.ndarray

    def propagate(self, u, v):
        return self.p11 * u + self.p12 * v, self.p21 * u + self.p22 * v

    def matrix(self, mode: int) -> np.ndarray:
        """Dense 2x2 ``P`` for a 1-based mode index."""
        k = mode - 1
        return np.array([[self.p11[k], self.p12[k]], [self.p21[k], self.p22[k]]])


def plan(basis: SpectralBasis, scheme, tau: float) -> StepPlan:
    scheme = SchemeKind.parse(scheme)
    tau = float(tau)
    if not tau > 0:
        raise ValueError("tau must be positive")
    lam = basis.eigenvalues
    k = basis.sqrt_eigenvalues
    if scheme is EE:
        c, s = basis.rotation(tau)
        p11, p12, p21, p22 = c, s / k, -k * s, c
        r12, r22 = p12, p22
    elif scheme is LIE:
        d = 1.0 + tau**2 * lam
        p11, p12, p21, p22 = 1.0 / d, tau / d, -tau * lam / d, 1.0 / d
        r12, r22 = p12, p22
    else:
        q = 0.25 * tau**2 * lam
        d = 1.0 + q
        p11 = p22 = (1.0 - q) / d
        p12 = tau / d
        p21 = -tau * lam / d
        r12, r22 = 0.5 * tau / d, 1.0 / d
    arrs = [np.array(a, dtype=float) for a in (p11, p12, p21, p22, r12, r22)]
    for a in arrs:
        a.flags.writeable = False
    return StepPlan(scheme, tau, basis, *arrs)


def _forcing(problem: Problem, tau: float, u, dW):
    rhs = tau * eval_F(problem, u)
    if dW is not None:
        rhs = rhs + eval_G_times_increment(problem, u, dW)
    return rhs


def _advance(plan_: StepPlan, problem: Problem, u, v, dW):
    w = _forcing(problem, plan_.tau, u, dW)
    pu, pv = plan_.propagate(u, v)
    return pu + plan_.r12 * w, pv + plan_.r22 * w


def step(plan_: StepPlan, problem: Problem, X: StatePair, dW) -> StatePair:
    u, v = _advance(plan_, problem, X.u, X.v, dW)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NonFiniteError("state became non-finite")
    return StatePair(u, v)


def exp_euler_componentwise(problem: Problem, tau: float, X: StatePair, dW) -> StatePair:
    """Exponential Euler written out with the cosine and sine operators."""
    basis = problem.basis
    c, s = basis.rotation(tau)
    k = basis.sqrt_eigenvalues
    Fu = eval_F(problem, X.u)
    GdW = eval_G_times_increment(problem, X.u, dW)
    u = c * X.u + s / k * X.v + tau * s / k * Fu + s / k * GdW
    v = -k * s * X.u + c * X.v + tau * c * Fu + c * GdW
    return StatePair(u, v)


def _increments(path_or_increments, n_steps, problem):
    if isinstance(path_or_increments, BrownianPath):
        path = path_or_increments
        if not np.isclose(path.dt * n_steps, problem.horizon_T, rtol=1e-12, atol=0):
            raise ValueError(f"path dt={path.dt} inconsistent with T/n_steps")
        inc = path.increments
    else:
        inc = np.asarray(path_or_increments, dtype=float)
    if inc.ndim < 2 or inc.shape[-2] != n_steps:
        raise ValueError(f"need {n_steps} increments, got array of shape {inc.shape}")
    return inc


def integrate(problem: Problem, scheme, n_steps: int, path_or_increments=None,
              record: bool = False, initial: StatePair | None = None,
              plan_: StepPlan | None = None, check_finite: bool = True):
    """Advance ``problem.initial`` over ``n_steps`` uniform steps up to ``horizon_T``.

    Increments have shape ``(..., n_steps, N)``; leading axes are treated as
    independent samples and are carried through in one batch. ``None`` means
    a noise-free run. With ``record`` the coefficient trajectory is returned
    too, as ``(u, v)`` arrays with the time axis at position -2.
    """
    n_steps = int(n_steps)
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    X0 = problem.initial if initial is None else initial
    inc = None
    if path_or_increments is not None:
        inc = _increments(path_or_increments, n_steps, problem)
    batch = inc.shape[:-2] if inc is not None else ()
    shape = np.broadcast_shapes(batch + (problem.basis.n_modes,), X0.u.shape)
    u = np.broadcast_to(X0.u, shape).copy()
    v = np.broadcast_to(X0.v, shape).copy()
    traj_u = traj_v = None
    if record:
        traj_u = np.empty(shape[:-1] + (n_steps + 1, shape[-1]))
        traj_v = np.empty_like(traj_u)
        traj_u[..., 0, :] = u
        traj_v[..., 0, :] = v
    if n_steps:
        p = plan_ or plan(problem.basis, scheme, problem.horizon_T / n_steps)
        for m in range(n_steps):
            dW = None if inc is None else inc[..., m, :]
            u, v = _advance(p, problem, u, v, dW)
            if record:
                traj_u[..., m + 1, :] = u
                traj_v[..., m + 1, :] = v
    if check_finite and not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NonFiniteError("state became non-finite")
    final = StatePair(u, v)
    if record:
        return final, (traj_u, traj_v)
    return final


def write_trajectory_csv(target, trajectory, tau: float) -> None:
    """CSV with columns ``t, mode_index, u_coeff, v_coeff`` for one unbatched trajectory."""
    traj_u, traj_v = trajectory
    if traj_u.ndim != 2:
        raise ValueError("write one sample at a time")
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mode_index", "u_coeff", "v_coeff"])
        for m in range(traj_u.shape[0]):
            t = repr(m * tau)
            for i in range(traj_u.shape[1]):
                w.writerow([t, i + 1, repr(float(traj_u[m, i])), repr(float(traj_v[m, i]))])

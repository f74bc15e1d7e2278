"""Q-Wiener increments in the sine basis.

The covariance ``Q`` shares the Laplacian eigenfunctions, so the Wiener
process is ``W(t) = sum_i sqrt(q_i) beta_i(t) e_i`` and its coefficient
increments over a step ``dt`` are independent ``N(0, q_i dt)``. The expansion
is cut at the Galerkin dimension ``N``.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral_basis import SpectralBasis, to_grid

__all__ = [
    "CovarianceSpec",
    "BrownianPath",
    "white",
    "algebraic_decay",
    "custom",
    "make_rng",
    "sample_increments",
    "sample_path",
    "block_sum",
    "coarsen",
    "increment_on_grid",
    "additive_trace",
    "write_path",
    "read_path",
]


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str
    q: np.ndarray
    predicted_delta: float
    exponent: float | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1:
            raise ValueError("q must be a vector")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValueError("covariance eigenvalues must be finite and nonnegative")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    @property
    def n_modes(self) -> int:
        return self.q.shape[0]

    @property
    def sqrt_q(self) -> np.ndarray:
        return np.sqrt(self.q)


def white(n_modes: int) -> CovarianceSpec:
    """Space-time white noise, ``Q = I``; regularity just below 1/2."""
    return CovarianceSpec("white", np.ones(n_modes), 0.5, 0.0)


def algebraic_decay(n_modes: int, r: float) -> CovarianceSpec:
    """``q_i = i^-r``.

    The regularity exponent is ``min((1 + r)/2, 1)``: the series
    ``sum_i q_i lambda_i^(delta - 1)`` converges exactly for ``delta < (1 + r)/2``,
    which gives 1/2 for white noise and saturates at 1 for trace-class ``r > 1``.
    """
    i = np.arange(1, n_modes + 1, dtype=float)
    return CovarianceSpec(
        "algebraic_decay", i ** (-float(r)), min((1.0 + r) / 2.0, 1.0), float(r)
    )


def custom(q, predicted_delta: float) -> CovarianceSpec:
    return CovarianceSpec("custom", np.asarray(q, dtype=float), float(predicted_delta))


def additive_trace(spec: CovarianceSpec, basis: SpectralBasis, beta: float,
                   plateau_rtol: float = 0.05) -> float:
    """Truncated ``||Lambda^(beta - 1/2) Q Lambda^(-1/2)||_1 = sum_i q_i lambda_i^(beta - 1)``.

    Warns when the second half of the partial sums still adds more than
    ``plateau_rtol`` of the total, i.e. the series has not visibly converged.
    """
    terms = spec.q * np.exp((beta - 1.0) * np.log(basis.eigenvalues))
    partial = np.cumsum(terms)
    total = float(partial[-1])
    half = float(partial[len(partial) // 2 - 1]) if len(partial) >= 2 else total
    if total > 0 and (total - half) > plateau_rtol * total:
        warnings.warn(
            f"trace partial sums not plateaued for beta={beta}: "
            f"half={half:.4g}, full={total:.4g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return total


def make_rng(seed: int, sample_index: int, stream: int = 0) -> np.random.Generator:
    """Stateless substream keyed by ``(seed, sample_index, stream)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(sample_index), int(stream)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_increments(spec: CovarianceSpec, n_steps: int, dt: float, seed: int,
                      sample_index: int, stream: int = 0) -> np.ndarray:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    rng = make_rng(seed, sample_index, stream)
    z = rng.standard_normal((int(n_steps), spec.n_modes))
    return z * (spec.sqrt_q * np.sqrt(dt))


def block_sum(increments: np.ndarray, factor: int, axis: int = -2) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` rows along ``axis``, left to right."""
    factor = int(factor)
    inc = np.moveaxis(np.asarray(increments), axis, 0)
    n = inc.shape[0]
    if factor < 1 or n % factor:
        raise ValueError(f"factor {factor} does not divide {n} steps")
    if factor == 1:
        return np.moveaxis(inc.copy(), 0, axis)
    acc = inc[0::factor].copy()
    for k in range(1, factor):
        acc += inc[k::factor]
    return np.moveaxis(acc, 0, axis)


@dataclass(frozen=True)
class BrownianPath:
    """Coefficient increments of one Wiener path on a uniform time grid.

    ``level`` is the coarsening factor relative to the generating path,
    whose increments are kept in ``fine`` so repeated coarsening always sums
    the original increments and ``coarsen(coarsen(p, a), b) == coarsen(p, a*b)``
    holds bit for bit.
    """

    n_steps: int
    dt: float
    increments: np.ndarray
    seed: int
    sample_index: int
    level: int = 1
    fine: np.ndarray | None = field(default=None, repr=False)

    @property
    def fine_increments(self) -> np.ndarray:
        return self.increments if self.fine is None else self.fine


def sample_path(spec: CovarianceSpec, basis: SpectralBasis, n_steps: int, dt: float,
                seed: int, sample_index: int, stream: int = 0) -> BrownianPath:
    if spec.n_modes != basis.n_modes:
        raise ValueError("covariance and basis dimensions differ")
    inc = sample_increments(spec, n_steps, dt, seed, sample_index, stream)
    inc.flags.writeable = False
    return BrownianPath(int(n_steps), float(dt), inc, int(seed), int(sample_index))


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    factor = int(factor)
    if factor < 1 or path.n_steps % factor:
        raise ValueError(f"factor {factor} does not divide n_steps={path.n_steps}")
    level = path.level * factor
    fine = path.fine_increments
    inc = block_sum(fine, level)
    inc.flags.writeable = False
    fine_dt = path.dt / path.level
    return BrownianPath(path.n_steps // factor, fine_dt * level, inc, path.seed,
                        path.sample_index, level, fine)


def increment_on_grid(basis: SpectralBasis, increment_row) -> np.ndarray:
    """``dW(xi_j) = sum_i dW_i e_i(xi_j)``."""
    return to_grid(basis, increment_row)


_HEADER = struct.Struct("<qqdq")


def write_path(path: BrownianPath, target) -> None:
    """Binary dump: header (N, M, dt, seed) then row-major little-endian float64 increments."""
    inc = np.ascontiguousarray(path.increments, dtype="<f8")
    with open(Path(target), "wb") as fh:
        fh.write(_HEADER.pack(inc.shape[1], inc.shape[0], path.dt, path.seed))
        fh.write(inc.tobytes(order="C"))


def read_path(source, sample_index: int = 0) -> BrownianPath:
    with open(Path(source), "rb") as fh:
        n_modes, n_steps, dt, seed = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n_modes * n_steps:
        raise ValueError(f"payload has {data.size} values, header says {n_steps}x{n_modes}")
    inc = data.reshape(n_steps, n_modes).astype(float)
    inc.flags.writeable = False
    return BrownianPath(n_steps, dt, inc, seed, sample_index)

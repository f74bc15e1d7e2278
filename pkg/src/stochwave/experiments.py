"""Monte Carlo convergence studies: strong and weak errors against a fine reference.

Every sample draws one Brownian path on the reference grid; coarse runs use
block sums of that same path, so all discrete solutions in a sample are
functionals of one Wiener process. Samples are processed in fixed batches
and reduced in sample order, which makes reports bit-reproducible for a
given configuration regardless of thread count.
"""
from __future__ import annotations

import csv
import datetime as _dt
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import noise
from .integrators import SchemeKind, integrate
from .model import NonFiniteError, Problem, preset

log = logging.getLogger(__name__)

__all__ = [
    "StudyError",
    "StrongStudyConfig",
    "WeakStudyConfig",
    "RatePoint",
    "RateFit",
    "RateReport",
    "fit_rate",
    "functional",
    "strong_study",
    "weak_study",
    "predicted_strong_rate",
    "predicted_weak_rate",
    "CSV_COLUMNS",
    "read_csv",
    "emit_gnuplot",
    "format_table1",
]

CSV_COLUMNS = ["scheme", "tau", "error", "stderr", "n_samples",
               "predicted_rate", "fitted_rate", "residual"]


class StudyError(RuntimeError):
    pass


@dataclass(frozen=True)
class StrongStudyConfig:
    preset: str = "sine_gordon_strong_white"
    schemes: tuple = ("EE", "LIE", "CN")
    steps: tuple = (32, 64, 128, 256)
    ref_scheme: str = "CN"
    ref_steps: int = 2048
    samples: int = 200
    seed: int = 0
    n_modes: int = 256
    sup_norm: bool = False
    batch_size: int = 16
    threads: int = 1
    max_failure_fraction: float = 0.01

    def validate(self):
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        for m in self.steps:
            if m < 1 or self.ref_steps % m:
                raise ValueError(f"reference steps {self.ref_steps} not divisible by {m}")
        for s in self.schemes:
            SchemeKind.parse(s)
        SchemeKind.parse(self.ref_scheme)


@dataclass(frozen=True)
class WeakStudyConfig:
    preset: str = "sine_gordon_weak_additive"
    schemes: tuple = ("EE", "LIE", "CN")
    steps: tuple = (8, 16, 32, 64)
    ref_scheme: str = "CN"
    ref_steps: int = 2048
    functional: str = "paper_phi"
    samples: int = 1000
    seed: int = 0
    n_modes: int = 256
    variance_reduction: bool = True
    antithetic: bool = True
    batch_size: int = 16
    threads: int = 1
    max_failure_fraction: float = 0.01

    def validate(self):
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        for m in self.steps:
            if m < 1 or self.ref_steps % m:
                raise ValueError(f"reference steps {self.ref_steps} not divisible by {m}")
        for s in self.schemes:
            SchemeKind.parse(s)
        SchemeKind.parse(self.ref_scheme)
        _functional_spec(self.functional)
        if self.antithetic and self.samples < 4:
            raise ValueError("antithetic sampling needs at least 4 samples (2 pairs)")


@dataclass
class RatePoint:
    scheme: str
    tau: float
    steps: int
    error: float
    stderr: float
    n_samples: int
    n_failed: int = 0
    # weak studies: the estimate of E[phi(u_M)] itself
    value: float | None = None
    value_stderr: float | None = None
    # strong studies with the sup-over-grid diagnostic
    sup_error: float | None = None
    sup_stderr: float | None = None


@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    predicted: float | None


@dataclass
class RateReport:
    kind: str
    preset: str
    points: list
    fits: dict
    reference_value: float | None = None
    reference_stderr: float | None = None
    config: dict = field(default_factory=dict)

    def series(self, scheme: str):
        pts = [p for p in self.points if p.scheme == scheme]
        return (np.array([p.tau for p in pts]), np.array([p.error for p in pts]),
                np.array([p.stderr for p in pts]))

    def point(self, scheme: str, steps: int) -> RatePoint:
        for p in self.points:
            if p.scheme == scheme and p.steps == steps:
                return p
        raise KeyError((scheme, steps))

    def rows(self):
        for p in self.points:
            fit = self.fits.get(p.scheme)
            pred = fit.predicted if fit and fit.predicted is not None else math.nan
            yield {
                "scheme": p.scheme,
                "tau": p.tau,
                "error": p.error,
                "stderr": p.stderr,
                "n_samples": p.n_samples,
                "predicted_rate": pred,
                "fitted_rate": fit.slope if fit else math.nan,
                "residual": fit.residual if fit else math.nan,
            }

    def to_csv(self, target, timestamp: bool = True) -> None:
        with open(target, "w", newline="") as fh:
            if timestamp:
                now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
                fh.write(f"# generated {now}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in self.rows():
                w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])

    def summary(self) -> str:
        lines = [f"{self.kind} study, preset {self.preset}"]
        if self.reference_value is not None:
            lines.append(f"reference E[phi] = {self.reference_value:.6f} "
                         f"+/- {self.reference_stderr:.2g}")
        lines.append(f"{'scheme':>6} {'tau':>10} {'error':>12} {'stderr':>10}")
        for p in self.points:
            lines.append(f"{p.scheme:>6} {p.tau:>10.6g} {p.error:>12.5e} {p.stderr:>10.2e}")
        for s, fit in self.fits.items():
            pred = "n/a" if fit.predicted is None else f"{fit.predicted:.3g}"
            lines.append(f"{s}: fitted rate {fit.slope:.3f} (residual {fit.residual:.2g}), "
                         f"theory {pred}")
        return "\n".join(lines)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def read_csv(source) -> list[dict]:
    with open(source, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append({k: (v if k == "scheme" else (int(v) if k == "n_samples" else float(v)))
                    for k, v in row.items()})
    return out


def fit_rate(taus, errors) -> tuple[float, float, float]:
    """Least squares line through ``(log tau, log error)``.

    Returns ``(slope, intercept, residual)`` with the residual the root mean
    square deviation in log space.
    """
    x = np.asarray(taus, dtype=float)
    y = np.asarray(errors, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("taus and errors must be vectors of equal length")
    if x.size < 2:
        raise ValueError("need at least two points to fit a rate")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("taus and errors must be positive and finite")
    lx, ly = np.log(x), np.log(y)
    mx, my = lx.mean(), ly.mean()
    dx = lx - mx
    denom = float(dx @ dx)
    if denom == 0:
        raise ValueError("taus must not all be equal")
    slope = float(dx @ (ly - my)) / denom
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    return slope, intercept, float(np.sqrt(np.mean(resid**2)))


def predicted_strong_rate(delta: float) -> float:
    return min(delta, 1.0)


def predicted_weak_rate(beta: float) -> float:
    # the epsilon slack in 1/2 + beta - eps is dropped: this is the supremum
    return min(2.0 * beta, 0.5 + beta, 1.0)


def _functional_spec(name):
    if isinstance(name, tuple):
        if len(name) == 2 and name[0] in ("mode", "mode_k"):
            return "mode", int(name[1])
    elif isinstance(name, str):
        key = name.strip().lower()
        if key in ("paper_phi", "h_norm_sq"):
            return key, None
        for prefix in ("mode_k(", "mode("):
            if key.startswith(prefix) and key.endswith(")"):
                return "mode", int(key[len(prefix):-1])
        if key.startswith("mode_") and key[5:].isdigit():
            return "mode", int(key[5:])
    raise ValueError(f"unknown functional {name!r}")


def functional(name, basis, u_hat):
    """Scalar test functional of the displacement coefficients (batched over leading axes).

    ``paper_phi``: ``10 int_0^1 u(x) sin(pi x) dx = (10/sqrt 2) u_1``;
    ``h_norm_sq``: ``||u||_U^2``; ``mode_k``: the k-th coefficient (1-based).
    """
    kind, k = _functional_spec(name)
    u = basis.check(u_hat)
    if kind == "paper_phi":
        return 10.0 / math.sqrt(2.0) * u[..., 0]
    if kind == "h_norm_sq":
        return np.sum(u**2, axis=-1)
    if not 1 <= k <= basis.n_modes:
        raise ValueError(f"mode {k} outside 1..{basis.n_modes}")
    return u[..., k - 1]


def _fine_paths(problem: Problem, n_steps: int, seed: int, indices, stream: int = 0):
    dt = problem.horizon_T / n_steps
    return np.stack([noise.sample_increments(problem.covariance, n_steps, dt, seed, i, stream)
                     for i in indices])


def _run_batched(fn, inc):
    """Run ``fn`` on a batch; on blowup, rerun one sample at a time and mark failures with nan."""
    with np.errstate(all="ignore"):
        try:
            return fn(inc)
        except NonFiniteError:
            pass
        rows = []
        for b in range(inc.shape[0]):
            try:
                rows.append(fn(inc[b:b + 1]))
            except NonFiniteError:
                rows.append(None)
    template = next((r for r in rows if r is not None), None)
    if template is None:
        raise StudyError(f"all {inc.shape[0]} samples in a batch produced non-finite states")
    out = []
    for j, t in enumerate(template):
        arr = np.full((inc.shape[0],) + t.shape[1:], np.nan)
        for b, r in enumerate(rows):
            if r is not None:
                arr[b] = r[j][0]
        out.append(arr)
    return tuple(out)


def _chunks(n: int, size: int):
    return [range(lo, min(n, lo + size)) for lo in range(0, n, size)]


def _map_chunks(fn, n: int, size: int, threads: int):
    chunks = _chunks(n, size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


def _check_failures(n_failed: int, total: int, limit: float):
    if n_failed:
        log.warning("%d of %d samples blew up and were excluded", n_failed, total)
    if n_failed > limit * total:
        raise StudyError(f"{n_failed} of {total} samples produced non-finite states")


def _rms_with_stderr(sq: np.ndarray):
    """RMS of per-sample squared errors and its delta-method standard error."""
    n = sq.size
    mean = float(np.mean(sq))
    rms = math.sqrt(mean)
    se_mean = float(np.std(sq, ddof=1)) / math.sqrt(n) if n > 1 else math.nan
    se = se_mean / (2.0 * rms) if rms > 0 else 0.0
    return rms, se


def strong_study(config: StrongStudyConfig, problem: Problem | None = None) -> RateReport:
    """Root mean square error ``(E ||u_ref(T) - u_M(T)||_U^2)^(1/2)`` per scheme and step count."""
    config.validate()
    problem = problem or preset(config.preset, config.n_modes)
    schemes = [SchemeKind.parse(s) for s in config.schemes]
    ref = SchemeKind.parse(config.ref_scheme)
    M_ref = config.ref_steps
    steps = list(config.steps)
    record = config.sup_norm

    def run(inc):
        out = integrate(problem, ref, M_ref, inc, record=record)
        ref_u, ref_traj = (out[0].u, out[1][0]) if record else (out.u, None)
        res = []
        for s in schemes:
            for M in steps:
                coarse = noise.block_sum(inc, M_ref // M)
                got = integrate(problem, s, M, coarse, record=record)
                if record:
                    u = got[0].u
                    du = ref_traj[:, :: M_ref // M, :] - got[1][0]
                    res.append(np.max(np.sum(du**2, axis=-1), axis=-1))
                else:
                    u = got.u
                res.append(np.sum((ref_u - u) ** 2, axis=-1))
        return tuple(res)

    def work(idx):
        inc = _fine_paths(problem, M_ref, config.seed, idx)
        return _run_batched(run, inc)

    parts = _map_chunks(work, config.samples, config.batch_size, config.threads)
    cols = [np.concatenate([p[j] for p in parts]) for j in range(len(parts[0]))]
    ok = np.all(np.isfinite(np.stack(cols)), axis=0)
    n_failed = int((~ok).sum())
    _check_failures(n_failed, config.samples, config.max_failure_fraction)

    per = 2 if record else 1
    points, fits = [], {}
    delta = problem.predicted_delta
    j = 0
    for s in schemes:
        for M in steps:
            if record:
                sup_rms, sup_se = _rms_with_stderr(cols[j][ok])
                j += 1
            rms, se = _rms_with_stderr(cols[j][ok])
            j += 1
            pt = RatePoint(s.label, problem.horizon_T / M, M, rms, se, int(ok.sum()), n_failed)
            if record:
                pt.sup_error, pt.sup_stderr = sup_rms, sup_se
            points.append(pt)
        pred = predicted_strong_rate(delta) if s is SchemeKind.EXPONENTIAL_EULER else None
        fits[s.label] = _fit_points(points, s, pred)
    assert j == per * len(schemes) * len(steps)
    return RateReport("strong", config.preset, points, fits, config=asdict(config))


def _fit_points(points, scheme: SchemeKind, predicted):
    pts = [p for p in points if p.scheme == scheme.label]
    taus = [p.tau for p in pts]
    errs = [p.error for p in pts]
    try:
        slope, icpt, resid = fit_rate(taus, errs)
    except ValueError:
        slope, icpt, resid = math.nan, math.nan, math.nan
    return RateFit(slope, icpt, resid, predicted)


def weak_study(config: WeakStudyConfig, problem: Problem | None = None) -> RateReport:
    """Weak errors ``|E phi(u_ref(T)) - E phi(u_M)|`` per scheme and step count.

    With ``variance_reduction`` each coarse run shares the reference path and
    the error is the mean of per-sample differences; otherwise coarse runs
    use an independent substream and the two means are compared.

    With ``antithetic`` the ``samples`` paths are drawn as ``samples // 2``
    pairs ``(W, -W)`` and every estimator averages within a pair first. For
    additive noise the leading part of ``phi(u)`` is linear in ``W``, so this
    removes most of the Monte Carlo variance at no extra cost.
    """
    config.validate()
    problem = problem or preset(config.preset, config.n_modes)
    basis = problem.basis
    schemes = [SchemeKind.parse(s) for s in config.schemes]
    ref = SchemeKind.parse(config.ref_scheme)
    M_ref = config.ref_steps
    steps = list(config.steps)
    anti = config.antithetic
    n_units = config.samples // 2 if anti else config.samples
    unit_batch = max(1, config.batch_size // 2) if anti else config.batch_size

    def phi(u):
        return functional(config.functional, basis, u)

    def run_ref(inc):
        return (phi(integrate(problem, ref, M_ref, inc).u),)

    def run_coarse(inc):
        res = []
        for s in schemes:
            for M in steps:
                coarse = noise.block_sum(inc, M_ref // M)
                res.append(phi(integrate(problem, s, M, coarse).u))
        return tuple(res)

    def paths(idx, stream):
        inc = _fine_paths(problem, M_ref, config.seed, idx, stream)
        return np.concatenate([inc, -inc]) if anti else inc

    def work(idx):
        inc = paths(idx, 0)
        r = _run_batched(run_ref, inc)
        if not config.variance_reduction:
            inc = paths(idx, 1)
        c = _run_batched(run_coarse, inc)
        out = r + c
        if anti:
            b = len(idx)
            out = tuple(0.5 * (x[:b] + x[b:]) for x in out)
        return out

    parts = _map_chunks(work, n_units, unit_batch, config.threads)
    cols = [np.concatenate([p[j] for p in parts]) for j in range(len(parts[0]))]
    ok = np.all(np.isfinite(np.stack(cols)), axis=0)
    per_unit = 2 if anti else 1
    n_failed = int((~ok).sum()) * per_unit
    _check_failures(n_failed, n_units * per_unit, config.max_failure_fraction)
    n = int(ok.sum())
    if n < 2:
        raise StudyError("fewer than two usable samples")
    ref_vals = cols[0][ok]
    ref_mean = float(np.mean(ref_vals))
    ref_se = float(np.std(ref_vals, ddof=1)) / math.sqrt(n)

    points, fits = [], {}
    beta = problem.predicted_delta
    j = 1
    for s in schemes:
        for M in steps:
            vals = cols[j][ok]
            j += 1
            mean = float(np.mean(vals))
            se = float(np.std(vals, ddof=1)) / math.sqrt(n)
            if config.variance_reduction:
                diff = ref_vals - vals
                err = abs(float(np.mean(diff)))
                err_se = float(np.std(diff, ddof=1)) / math.sqrt(n)
            else:
                err = abs(mean - ref_mean)
                err_se = math.hypot(se, ref_se)
            points.append(RatePoint(s.label, problem.horizon_T / M, M, err, err_se,
                                    n * per_unit, n_failed, mean, se))
        pred = predicted_weak_rate(beta) if s is SchemeKind.EXPONENTIAL_EULER else None
        fits[s.label] = _fit_points(points, s, pred)
    return RateReport("weak", config.preset, points, fits, ref_mean, ref_se, asdict(config))


def format_table1(report: RateReport) -> str:
    """Estimates of ``E[phi(u(1))]`` laid out one row per step size, one column per scheme."""
    names = {"LIE": "Linear implicit Euler", "CN": "Crank-Nicolson", "EE": "Exponential Euler"}
    order = [s for s in ("LIE", "CN", "EE") if s in report.fits]
    taus = sorted({p.tau for p in report.points}, reverse=True)
    head = f"{'tau':>8}" + "".join(f"{names[s]:>24}" for s in order)
    lines = []
    if report.reference_value is not None:
        lines.append(f"reference E[phi(u(1))] = {report.reference_value:.5f} "
                     f"(MC stderr {report.reference_stderr:.2g})")
    lines += [head, "-" * len(head)]
    for tau in taus:
        exp = round(-math.log2(tau))
        label = f"2^-{exp}" if math.isclose(2.0**-exp, tau) else f"{tau:.4g}"
        row = f"{label:>8}"
        for s in order:
            p = next(p for p in report.points if p.scheme == s and p.tau == tau)
            row += f"{p.value:>24.5f}"
        lines.append(row)
    return "\n".join(lines)


def emit_gnuplot(csv_path, script_path, title: str = "", ylabel: str = "error") -> None:
    """Write a gnuplot script drawing the log-log error plot from a study CSV."""
    rows = read_csv(csv_path)
    schemes = list(dict.fromkeys(r["scheme"] for r in rows))
    taus = [r["tau"] for r in rows]
    errs = [r["error"] for r in rows]
    # anchor the guide lines at the largest tau, a bit below the data
    t0 = max(taus)
    e0 = min(e for t, e in zip(taus, errs) if t == t0) / 2.0
    csv_name = Path(csv_path).name
    plots = [
        f"'{csv_name}' using 2:(strcol(1) eq '{s}' ? $3 : NaN) with linespoints title '{s}'"
        for s in schemes
    ]
    plots.append(f"{e0!r}*(x/{t0!r})**0.5 with lines dt 2 lc rgb 'gray' title 'slope 1/2'")
    plots.append(f"{e0!r}*(x/{t0!r}) with lines dt 3 lc rgb 'black' title 'slope 1'")
    script = "\n".join([
        "# gnuplot script; run from the directory holding the CSV",
        "set datafile separator ','",
        "set logscale xy 2",
        "set xlabel 'tau'",
        f"set ylabel '{ylabel}'",
        f"set title '{title}'",
        "set key left top",
        "plot " + ", \\\n     ".join(plots),
        "",
    ])
    Path(script_path).write_text(script)

"""Command line front end.

    stochwave simulate   --preset linear_homogeneous --steps 0
    stochwave strong-rate --preset sine_gordon_strong_white --samples 200 --seed 42
    stochwave weak-rate  --samples 1000
    stochwave table1     --samples 1000 --seed 7
    stochwave selftest

Settings come from, in increasing precedence: built-in defaults, the
``STOCHWAVE_SEED`` environment variable (seed only), a ``--config`` file of
``key = value`` lines, and command line flags.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import experiments as ex
from . import selftest
from .integrators import SchemeKind, integrate, write_trajectory_csv
from .model import PRESETS, preset
from .spectral_basis import h_norm

COMMANDS = ("simulate", "strong-rate", "weak-rate", "table1", "selftest")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    preset: str | None = None
    n_modes: int = 256
    schemes: tuple = ("EE", "LIE", "CN")
    steps: tuple = ()
    ref_steps: int = 2048
    ref_scheme: str = "CN"
    samples: int = 200
    seed: int = 0
    output: str = "results"
    functional: str = "paper_phi"
    threads: int = 1
    batch_size: int = 16
    sup_norm: bool = False
    variance_reduction: bool = True
    antithetic: bool = True
    emit_plot: bool = False
    timestamp: bool = True
    paper_scale: bool = False
    trajectory: bool = False


_DEFAULTS = {
    "simulate": dict(preset="sine_gordon_strong_white", schemes=("EE",), steps=(256,), samples=1),
    "strong-rate": dict(preset="sine_gordon_strong_white", steps=(32, 64, 128, 256), samples=200),
    "weak-rate": dict(preset="sine_gordon_weak_additive", steps=(8, 16, 32, 64), samples=1000),
    "table1": dict(preset="sine_gordon_weak_additive", steps=(8, 16, 32, 64), samples=1000),
    "selftest": dict(),
}
_PAPER_SCALE = dict(n_modes=1024, ref_steps=4096, samples=1000)

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_KEYS = {k for k, t in _FIELD_TYPES.items() if t == "bool"}
_INT_KEYS = {"n_modes", "ref_steps", "samples", "seed", "threads", "batch_size"}
_POSITIVE_KEYS = _INT_KEYS - {"seed"}


def _parse_value(key: str, raw):
    if key not in _FIELD_TYPES or key == "command":
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key == "steps":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if key == "schemes":
            return tuple(SchemeKind.parse(x).label for x in raw.replace(",", " ").split())
        if key == "ref_scheme":
            return SchemeKind.parse(raw).label
        if key == "preset" and raw not in PRESETS:
            raise ValueError(f"unknown preset; choose from {sorted(PRESETS)}")
        return raw
    except ValueError as exc:
        raise ConfigError(f"malformed value for {key!r}: {raw!r} ({exc})") from None


def read_config_file(path) -> dict:
    out = {}
    text = Path(path).read_text()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _parse_value(key, val)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False, argument_default=S)
    common.add_argument("--config", help="file of key = value lines")
    common.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    common.add_argument("--n-modes", dest="n_modes", help="Galerkin dimension N")
    common.add_argument("--schemes", help="comma separated subset of EE,LIE,CN")
    common.add_argument("--scheme", dest="schemes", help="alias of --schemes")
    common.add_argument("--steps", help="comma separated step counts M")
    common.add_argument("--ref-steps", dest="ref_steps", help="reference step count")
    common.add_argument("--ref-scheme", dest="ref_scheme", help="reference scheme")
    common.add_argument("--samples", help="Monte Carlo sample count")
    common.add_argument("--seed", help="RNG seed (env STOCHWAVE_SEED is the fallback)")
    common.add_argument("--output", "-o", help="output directory")
    common.add_argument("--functional", help="paper_phi, h_norm_sq or mode_k")
    common.add_argument("--threads", help="worker threads for sample batches")
    common.add_argument("--batch-size", dest="batch_size", help="samples per batch")
    common.add_argument("--sup-norm", dest="sup_norm", action="store_const", const=True,
                        help="also report the sup over grid points (strong)")
    common.add_argument("--variance-reduction", dest="variance_reduction",
                        action=argparse.BooleanOptionalAction,
                        help="couple coarse and reference runs (weak)")
    common.add_argument("--antithetic", dest="antithetic", action=argparse.BooleanOptionalAction,
                        help="antithetic path pairs (weak)")
    common.add_argument("--emit-plot", dest="emit_plot", action="store_const", const=True,
                        help="write a gnuplot script next to the CSV")
    common.add_argument("--no-timestamp", dest="timestamp", action="store_const", const=False,
                        help="omit the timestamp line from CSV output")
    common.add_argument("--paper-scale", dest="paper_scale", action="store_const", const=True,
                        help="N=1024, reference M=4096, 1000 samples")
    common.add_argument("--trajectory", action="store_const", const=True,
                        help="simulate: write the trajectory CSV")
    common.add_argument("--verbose", "-v", action="store_const", const=True)

    parser = _Parser(prog="stochwave", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common], argument_default=S)
    return parser


def parse_config(argv=None, config_file=None) -> RunConfig:
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = vars(_build_parser().parse_args(argv))
    command = ns.pop("command", None)
    if command is None:
        raise ConfigError(f"missing command; choose from {', '.join(COMMANDS)}")
    ns.pop("verbose", None)
    values = dict(_DEFAULTS[command])
    env_seed = os.environ.get("STOCHWAVE_SEED")
    if env_seed:
        values["seed"] = _parse_value("seed", env_seed)
    cfg_path = ns.pop("config", None) or config_file
    from_file = read_config_file(cfg_path) if cfg_path else {}
    from_flags = {k: _parse_value(k, v) for k, v in ns.items()}
    scaled = from_flags.get("paper_scale", from_file.get("paper_scale", False))
    if scaled:
        values.update(_PAPER_SCALE)
    values.update(from_file)
    values.update(from_flags)
    cfg = RunConfig(command=command, **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    for key in _POSITIVE_KEYS:
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative")
    if cfg.command == "simulate":
        if len(cfg.steps) != 1 or cfg.steps[0] < 0:
            raise ConfigError("simulate takes a single nonnegative --steps value")
    elif cfg.command != "selftest":
        if not cfg.steps or min(cfg.steps) < 1:
            raise ConfigError("step counts must be positive")
        bad = [m for m in cfg.steps if cfg.ref_steps % m]
        if bad:
            raise ConfigError(f"ref_steps {cfg.ref_steps} not divisible by {bad}")
        if cfg.samples < 2:
            raise ConfigError("need at least 2 samples")


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _strong_config(cfg: RunConfig) -> ex.StrongStudyConfig:
    return ex.StrongStudyConfig(
        preset=cfg.preset, schemes=cfg.schemes, steps=cfg.steps, ref_scheme=cfg.ref_scheme,
        ref_steps=cfg.ref_steps, samples=cfg.samples, seed=cfg.seed, n_modes=cfg.n_modes,
        sup_norm=cfg.sup_norm, batch_size=cfg.batch_size, threads=cfg.threads)


def _weak_config(cfg: RunConfig) -> ex.WeakStudyConfig:
    return ex.WeakStudyConfig(
        preset=cfg.preset, schemes=cfg.schemes, steps=cfg.steps, ref_scheme=cfg.ref_scheme,
        ref_steps=cfg.ref_steps, functional=cfg.functional, samples=cfg.samples, seed=cfg.seed,
        n_modes=cfg.n_modes, variance_reduction=cfg.variance_reduction,
        antithetic=cfg.antithetic, batch_size=cfg.batch_size, threads=cfg.threads)


def _write_report(report: ex.RateReport, cfg: RunConfig, out: Path, stem: str, ylabel: str):
    path = out / f"{stem}.csv"
    report.to_csv(path, timestamp=cfg.timestamp)
    print(f"wrote {path}")
    if cfg.emit_plot:
        gp = out / f"{stem}.gp"
        ex.emit_gnuplot(path, gp, title=f"{report.kind} errors, {report.preset}", ylabel=ylabel)
        print(f"wrote {gp}")


def _write_values(report: ex.RateReport, path: Path, timestamp: bool):
    import datetime as _dt

    with open(path, "w", newline="") as fh:
        if timestamp:
            now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            fh.write(f"# generated {now}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "tau", "value", "value_stderr"])
        w.writerow(["reference", "nan", repr(report.reference_value), repr(report.reference_stderr)])
        for p in report.points:
            w.writerow([p.scheme, repr(p.tau), repr(p.value), repr(p.value_stderr)])


def _simulate(cfg: RunConfig, out: Path) -> int:
    problem = preset(cfg.preset, cfg.n_modes)
    M = cfg.steps[0]
    scheme = SchemeKind.parse(cfg.schemes[0])
    inc = None
    if M > 0:
        from .noise import sample_increments

        inc = sample_increments(problem.covariance, M, problem.horizon_T / M, cfg.seed, 0)
    res = integrate(problem, scheme, M, inc, record=cfg.trajectory)
    X, traj = res if cfg.trajectory else (res, None)
    b = problem.basis
    print(f"preset {cfg.preset}, scheme {scheme.label}, N={cfg.n_modes}, M={M}, "
          f"t={problem.horizon_T if M else 0.0}")
    for name in ("paper_phi", "h_norm_sq"):
        print(f"  {name:>10} = {float(ex.functional(name, b, X.u)):.10g}")
    print(f"  {'H-norm':>10} = {float(h_norm(b, X)):.10g}")
    if traj is not None:
        path = out / "trajectory.csv"
        tau = problem.horizon_T / M if M else 0.0
        write_trajectory_csv(path, traj, tau)
        print(f"wrote {path}")
    return 0


def run(cfg: RunConfig) -> int:
    if cfg.command == "selftest":
        return 0 if selftest.run_all() else 1
    out = _prepare_output(cfg)
    if cfg.command == "simulate":
        return _simulate(cfg, out)
    if cfg.command == "strong-rate":
        report = ex.strong_study(_strong_config(cfg))
        print(report.summary())
        if cfg.sup_norm:
            for p in report.points:
                print(f"  sup diagnostic {p.scheme} tau={p.tau:.6g}: {p.sup_error:.5e}")
        _write_report(report, cfg, out, f"strong_{cfg.preset}", "RMS error in U at T")
        return 0
    if cfg.command == "table1":
        cfg = replace(cfg, preset="sine_gordon_weak_additive", schemes=("LIE", "CN", "EE"))
    report = ex.weak_study(_weak_config(cfg))
    if cfg.command == "table1":
        print(ex.format_table1(report))
        _write_report(report, cfg, out, "table1", "weak error")
        _write_values(report, out / "table1_values.csv", cfg.timestamp)
        print(f"wrote {out / 'table1_values.csv'}")
    else:
        print(report.summary())
        _write_report(report, cfg, out, f"weak_{cfg.preset}", "weak error")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(parse_config(argv))
    except (ConfigError, ex.StudyError) as exc:
        print(f"stochwave: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

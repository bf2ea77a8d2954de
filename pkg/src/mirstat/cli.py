"""Command-line interface.

Every failure exits nonzero with a single stderr line
``error <CODE>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .estimator import MIN_LENGTH, adaptive_estimate
from .sim import ModelSyntaxError, SeriesSample, parse_model, simulate
from .stationarity import nonstationarity_test, run_test, stationarity_test, threshold_test

DEFAULT_THETA_GRID = tuple(np.round(np.arange(1, 61) * 0.05, 2))


class CliError(Exception):
    """Failure reported to the user with a stable code."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# input


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest(path, column=None):
    """Read one numeric column from a text/CSV file.

    A first row with any non-numeric cell is a header. ``column`` is a
    header name or a 0-based index; it may be omitted for single-column
    files. Blank or non-finite entries are rejected with their line number.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("E_IO", f"cannot read {path}: {exc.strerror or exc}") from None
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise CliError("E_INPUT", f"{path}: empty file")
    rows = list(csv.reader(lines))
    header = None
    if any(not _is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        start = 1
    else:
        start = 0
    width = len(rows[0])
    if column is None:
        if width != 1:
            raise CliError("E_INPUT", f"{path}: {width} columns, choose one with --column")
        idx = 0
    elif header is not None and column in header:
        idx = header.index(column)
    elif re.fullmatch(r"\d+", str(column)) and int(column) < width:
        idx = int(column)
    else:
        raise CliError("E_INPUT", f"{path}: no column {column!r}")
    values = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or not "".join(row).strip():
            raise CliError("E_INPUT", f"{path}:{lineno}: blank row")
        if idx >= len(row):
            raise CliError("E_INPUT", f"{path}:{lineno}: missing column {idx}")
        cell = row[idx].strip()
        try:
            v = float(cell)
        except ValueError:
            raise CliError("E_INPUT", f"{path}:{lineno}: not a number: {cell!r}") from None
        if not math.isfinite(v):
            raise CliError("E_INPUT", f"{path}:{lineno}: non-finite value {cell!r}")
        values.append(v)
    if len(values) < MIN_LENGTH:
        raise CliError("E_INPUT", f"{path}: {len(values)} values, need at least {MIN_LENGTH}")
    return SeriesSample(np.array(values), info={"path": str(path), "column": column})


def transform(x, kind, theta=None):
    """Apply ``returns``, ``abs``, ``square`` or ``power`` (|x|^theta)."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    if kind == "returns":
        if np.any(x <= 0):
            bad = int(np.flatnonzero(x <= 0)[0])
            raise CliError("E_INPUT", f"nonpositive price at index {bad}")
        out = np.diff(np.log(x))
    elif kind == "abs":
        out = np.abs(x)
    elif kind == "square":
        out = x * x
    elif kind == "power":
        if theta is None or not theta > 0:
            raise CliError("E_CONFIG", "power transform needs theta > 0")
        out = np.abs(x) ** theta
    else:
        raise CliError("E_CONFIG", f"unknown transform {kind!r}")
    return SeriesSample(out, info={"transform": kind if kind != "power" else f"power({theta:g})"})


@dataclass(frozen=True)
class ThetaSearch:
    theta: float
    d: float
    profile: tuple  # (theta, d or nan, error message or None)


def theta_search(r, grid=DEFAULT_THETA_GRID, table=None, p=None, level=0.05):
    """Maximize the adaptive estimate of d over |r|^theta, theta in ``grid``."""
    grid = [float(t) for t in grid]
    if not grid or any(not 0 < t <= 3 for t in grid):
        raise CliError("E_CONFIG", "theta grid must be a nonempty subset of (0, 3]")
    r = np.asarray(getattr(r, "values", r), dtype=float)
    absr = np.abs(r)
    profile, best = [], None
    for t in sorted(grid):
        try:
            d = adaptive_estimate(absr**t, level=level, p=p, table=table).d
            profile.append((t, d, None))
            if best is None or d > best[1]:  # strict: ties keep the smaller theta
                best = (t, d)
        except ValueError as exc:
            profile.append((t, float("nan"), str(exc)))
    if best is None:
        raise CliError("E_ESTIMATE", "estimation failed for every theta")
    return ThetaSearch(best[0], best[1], tuple(profile))


# --------------------------------------------------------------------------
# config files


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("E_IO", f"cannot read {path}: {exc.strerror or exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("E_CONFIG", f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise CliError("E_CONFIG", f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _float_list(text, what):
    try:
        return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]
    except ValueError:
        raise CliError("E_CONFIG", f"bad number list for {what}: {text!r}") from None


def _theta_grid(text):
    m = re.fullmatch(r"\s*([\d.]+)\s*:\s*([\d.]+)\s*:\s*([\d.]+)\s*", text)
    if m:
        lo, hi, step = map(float, m.groups())
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(np.round(lo + step * np.arange(n), 10))
    return tuple(_float_list(text, "theta_grid"))


_TRANSFORM = re.compile(r"(returns|abs|square|power-search|power\(\s*([\d.eE+-]+)\s*\))")


@dataclass(frozen=True)
class AnalysisConfig:
    """Segment-wise analysis of a price or return series."""

    input: str
    column: str | None = None
    series: str = "prices"
    transforms: tuple = ("returns", "abs", "square")
    breakpoints: tuple = ()
    level: float = 0.05
    p: int | None = None
    gamma: str | None = None
    format: str = "markdown"
    theta_grid: tuple = DEFAULT_THETA_GRID

    @classmethod
    def from_mapping(cls, cfg, base_dir="."):
        known = {"input", "column", "series", "transforms", "breakpoints", "level", "p", "gamma",
                 "format", "theta_grid"}
        unknown = set(cfg) - known
        if unknown:
            raise CliError("E_CONFIG", f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "input" not in cfg:
            raise CliError("E_CONFIG", "config needs 'input'")
        path = Path(cfg["input"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        transforms = tuple(t.strip() for t in cfg.get("transforms", "returns, abs, square").split(",") if t.strip())
        for t in transforms:
            if not _TRANSFORM.fullmatch(t):
                raise CliError("E_CONFIG", f"unknown transform {t!r}")
        series = cfg.get("series", "prices")
        if series not in ("prices", "returns"):
            raise CliError("E_CONFIG", "series must be 'prices' or 'returns'")
        bps = tuple(int(v) for v in _float_list(cfg.get("breakpoints", ""), "breakpoints"))
        if any(b <= a for a, b in zip(bps, bps[1:])):
            raise CliError("E_CONFIG", "breakpoints must be strictly increasing")
        fmt = cfg.get("format", "markdown")
        if fmt not in ("markdown", "csv", "both"):
            raise CliError("E_CONFIG", "format must be markdown, csv or both")
        grid = _theta_grid(cfg["theta_grid"]) if "theta_grid" in cfg else DEFAULT_THETA_GRID
        if not grid or any(not 0 < t <= 3 for t in grid):
            raise CliError("E_CONFIG", "theta grid must be a nonempty subset of (0, 3]")
        gamma = cfg.get("gamma") or None
        if gamma and not Path(gamma).is_absolute():
            gamma = str(Path(base_dir) / gamma)
        return cls(
            input=str(path), column=cfg.get("column") or None, series=series, transforms=transforms,
            breakpoints=bps, level=float(cfg.get("level", 0.05)),
            p=int(cfg["p"]) if cfg.get("p") else None, gamma=gamma, format=fmt, theta_grid=grid,
        )


def _segments(n, breakpoints):
    """1-based breakpoints (b_1, ..., b_k) -> 0-based half-open slices."""
    if not breakpoints:
        return [(0, n)]
    if breakpoints[0] < 1 or breakpoints[-1] > n:
        raise CliError("E_CONFIG", f"breakpoints must lie in [1, {n}]")
    if len(breakpoints) < 2:
        raise CliError("E_CONFIG", "need at least two breakpoints (start and end)")
    bounds = [b - 1 for b in breakpoints]
    out = [(lo, hi) for lo, hi in zip(bounds[:-2], bounds[1:-1])]
    out.append((bounds[-2], bounds[-1] + 1))
    return out


ANALYSIS_COLUMNS = ("segment", "transform", "N", "d", "se", "ci_low", "ci_high", "S", "T", "LM",
                    "kurtosis", "skewness")


def _analysis_row(seg, label, y, cfg, table):
    rep = adaptive_estimate(y, level=cfg.level, p=cfg.p, table=table)
    s = stationarity_test(rep, cfg.level, table)
    t = nonstationarity_test(rep, cfg.level, table)
    lm = threshold_test(rep, 0.0, cfg.level, table)
    lo, hi = rep.ci if rep.ci else (float("nan"), float("nan"))
    return {
        "segment": seg, "transform": label, "N": rep.n, "d": rep.d, "se": rep.se,
        "ci_low": lo, "ci_high": hi,
        "S": "reject" if s.rejected else "accept",
        "T": "reject" if t.rejected else "accept",
        "LM": "long memory" if lm.rejected else "-",
        "kurtosis": float(stats.kurtosis(y, fisher=False)),
        "skewness": float(stats.skew(y)),
    }


def analyze(cfg):
    """Rows of per-segment, per-transform results."""
    table = _load_table(cfg.gamma)
    x = ingest(cfg.input, cfg.column).values
    rows = []
    for lo, hi in _segments(x.size, cfg.breakpoints):
        seg = f"{lo + 1}-{hi}"
        part = x[lo:hi]
        if part.size < MIN_LENGTH:
            raise CliError("E_INPUT", f"segment {seg} has {part.size} values, need at least {MIN_LENGTH}")
        r = transform(part, "returns").values if cfg.series == "prices" else part
        for t in cfg.transforms:
            m = _TRANSFORM.fullmatch(t)
            try:
                if t == "returns":
                    rows.append(_analysis_row(seg, "r", r, cfg, table))
                elif t == "abs":
                    rows.append(_analysis_row(seg, "|r|", np.abs(r), cfg, table))
                elif t == "square":
                    rows.append(_analysis_row(seg, "r^2", r * r, cfg, table))
                elif t == "power-search":
                    res = theta_search(r, cfg.theta_grid, table, cfg.p, cfg.level)
                    y = np.abs(r) ** res.theta
                    rows.append(_analysis_row(seg, f"|r|^{res.theta:g} (argmax)", y, cfg, table))
                else:
                    theta = float(m.group(2))
                    rows.append(_analysis_row(seg, f"|r|^{theta:g}", np.abs(r) ** theta, cfg, table))
            except ValueError as exc:
                raise CliError("E_ESTIMATE", f"segment {seg}, {t}: {exc}") from None
    return rows


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def format_rows(rows, columns, fmt):
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])
        return buf.getvalue()
    lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        lines.append("| " + " | ".join(_cell(r[c]).replace("|", "\\|") for c in columns) + " |")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands


def _load_table(path):
    if not path:
        return None
    from .asymcov import GammaTable

    try:
        return GammaTable.load(path)
    except (OSError, ValueError) as exc:
        raise CliError("E_TABLE", f"cannot load gamma table {path}: {exc}") from None


def _write(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise CliError("E_IO", f"cannot write {out}: {exc.strerror or exc}") from None


def cmd_simulate(args):
    try:
        model = parse_model(args.model)
    except ModelSyntaxError as exc:
        raise CliError("E_MODEL", str(exc)) from None
    except ValueError as exc:
        raise CliError("E_MODEL", str(exc)) from None
    x = simulate(model, args.n, args.seed).values
    _write("".join(f"{v:.17g}\n" for v in x), args.out)


def _estimate(args):
    x = ingest(args.input, args.column).values
    table = _load_table(args.gamma)
    try:
        return adaptive_estimate(x, level=args.level, p=args.p, table=table), table
    except ValueError as exc:
        raise CliError("E_ESTIMATE", str(exc)) from None


def cmd_estimate(args):
    rep, _ = _estimate(args)
    _write(rep.summary() + "\n", None)


def cmd_test(args):
    if args.kind == "threshold" and args.d0 is None:
        raise CliError("E_USAGE", "--kind threshold needs --d0")
    rep, table = _estimate(args)
    try:
        dec = run_test(rep, args.kind, args.level, args.d0, table)
    except ValueError as exc:
        raise CliError("E_USAGE", str(exc)) from None
    _write(rep.summary() + "\n" + dec.summary() + "\n", None)


def cmd_gamma_table(args):
    from .asymcov import build_gamma_table, default_grid

    grid = default_grid(args.step)

    def progress(k, d, _mat):
        logging.getLogger("mirstat").info("node %d/%d d=%+.2f done", k + 1, len(grid), d)

    kwargs = {}
    if args.method == "empirical":
        kwargs = {"n": args.n, "reps": args.reps, "seed": args.seed}
    table = build_gamma_table(args.p, grid, method=args.method, progress=progress,
                              workers=args.workers, **kwargs)
    table.save(args.out)


def cmd_bench(args):
    from .bench import ExperimentSpec, emit, run_experiment

    cfg = read_config(args.spec)
    try:
        models = [m.strip() for m in cfg.pop("models").split(";") if m.strip()]
        ns = [int(v) for v in _float_list(cfg.pop("n"), "n")]
        p_raw = cfg.pop("p", "")
        spec = ExperimentSpec(
            models=tuple(models), ns=tuple(ns), reps=int(cfg.pop("reps", 100)),
            seed=int(cfg.pop("seed", 0)), level=float(cfg.pop("level", 0.05)),
            p=int(p_raw) if p_raw else None,
            timing=cfg.pop("timing", "false").lower() in ("1", "true", "yes"),
        )
    except KeyError as exc:
        raise CliError("E_CONFIG", f"bench config needs {exc.args[0]!r}") from None
    except ModelSyntaxError as exc:
        raise CliError("E_MODEL", str(exc)) from None
    except ValueError as exc:
        raise CliError("E_CONFIG", str(exc)) from None
    if cfg:
        raise CliError("E_CONFIG", f"unknown bench key(s): {', '.join(sorted(cfg))}")
    table = run_experiment(spec, workers=args.workers)
    _write(emit(table, args.format), args.out)
    if table.errors:
        logging.getLogger("mirstat").warning("%d replication(s) failed", len(table.errors))


def cmd_verify(args):
    from .theory import format_checks, verification_checks

    checks = verification_checks()
    _write(format_checks(checks) + "\n", None)
    if not all(c.passed for c in checks):
        raise CliError("E_VERIFY", f"{sum(not c.passed for c in checks)} check(s) failed")


def cmd_analyze(args):
    cfg = AnalysisConfig.from_mapping(read_config(args.config), Path(args.config).parent)
    rows = analyze(cfg)
    if cfg.format in ("markdown", "both"):
        _write(format_rows(rows, ANALYSIS_COLUMNS, "markdown"), None)
    if cfg.format in ("csv", "both"):
        _write(format_rows(rows, ANALYSIS_COLUMNS, "csv"), None)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("E_USAGE", message)


def build_parser():
    parser = _Parser(prog="mirstat", description="Adaptive increment-ratio estimation of long memory.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a Gaussian path")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)

    for name, func in (("estimate", cmd_estimate), ("test", cmd_test)):
        p = sub.add_parser(name)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--column")
        p.add_argument("--p", type=int)
        p.add_argument("--gamma")
        p.add_argument("--level", type=float, default=0.05)
        if name == "test":
            p.add_argument("--kind", choices=("stat", "nonstat", "threshold"), required=True)
            p.add_argument("--d0", type=float)
        p.set_defaults(func=func)

    p = sub.add_parser("gamma-table", help="build a covariance table")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--method", choices=("analytic", "empirical"), default="analytic")
    p.add_argument("--out", required=True)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gamma_table)

    p = sub.add_parser("bench", help="Monte Carlo experiment")
    p.add_argument("--spec", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="check the analytic identities")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="segment-wise analysis of a price series")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except CliError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 1 if exc.code != "E_USAGE" else 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Monte Carlo experiments for the adaptive estimator and the two tests."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import adaptive_estimate
from .sim import parse_model, simulate
from .stationarity import nonstationarity_test, stationarity_test

log = logging.getLogger(__name__)

CSV_COLUMNS = ("model", "N", "R", "rmse", "mean_d", "se_rmse", "acc_S", "rej_T", "failures", "wall_ms")
FULL_SCALE_REPS = 300


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid of (model, N) cells, each replicated ``reps`` times.

    ``timing=False`` writes 0 in the wall-time column so that output is
    byte-identical across runs.
    """

    models: tuple
    ns: tuple
    reps: int = 100
    seed: int = 0
    level: float = 0.05
    p: int | None = None
    timing: bool = False

    def __post_init__(self):
        models = tuple(parse_model(m) if isinstance(m, str) else m for m in self.models)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "ns", tuple(int(n) for n in self.ns))
        if self.reps < 2:
            raise ValueError("need at least 2 replications")
        if any(n < 50 for n in self.ns):
            raise ValueError("every N must be at least 50")


@dataclass(frozen=True)
class ResultRow:
    model: str
    n: int
    reps: int
    rmse: float
    mean_d: float
    se_rmse: float
    acc_s: float
    rej_t: float
    failures: int
    wall_ms: float
    se_mean_d: float = float("nan")
    se_acc_s: float = float("nan")
    se_rej_t: float = float("nan")


@dataclass(frozen=True)
class ResultTable:
    rows: tuple
    reps: int = 0
    seed: int = 0
    wall_ms: float = 0.0
    errors: tuple = field(default=(), compare=False)

    def row(self, model, n):
        key = str(model)
        for r in self.rows:
            if r.model == key and r.n == int(n):
                return r
        raise KeyError((key, n))


def replication_seed(master, model_index, n, rep):
    """Per-replication seed, a function of the indices only."""
    return np.random.SeedSequence([int(master), int(model_index), int(n), int(rep)])


def _replicate(task):
    model, n, seed, level, p = task
    try:
        x = simulate(model, n, seed).values
        rep = adaptive_estimate(x, level=level, p=p)
        acc = not stationarity_test(rep, level).rejected
        rej = nonstationarity_test(rep, level).rejected
        return rep.d, acc, rej, None
    except Exception as exc:  # counted as a failure, reported by the caller
        return None, None, None, f"{type(exc).__name__}: {exc}"


def _binom_se(freq, r):
    return math.sqrt(max(freq * (1 - freq), 0.0) / r) if r else float("nan")


def _aggregate(model, n, reps, results, wall_ms):
    ok = [res for res in results if res[3] is None]
    fails = len(results) - len(ok)
    if not ok:
        nan = float("nan")
        return ResultRow(str(model), n, reps, nan, nan, nan, nan, nan, fails, wall_ms)
    d = np.array([res[0] for res in ok])
    acc = np.array([res[1] for res in ok], dtype=float)
    rej = np.array([res[2] for res in ok], dtype=float)
    r = d.size
    sq = (d - model.memory) ** 2
    mse = float(np.mean(sq))
    rmse = math.sqrt(mse)
    se_mse = float(np.std(sq, ddof=1)) / math.sqrt(r) if r > 1 else float("nan")
    se_rmse = se_mse / (2 * rmse) if rmse > 0 else 0.0
    return ResultRow(
        model=str(model), n=n, reps=reps, rmse=rmse, mean_d=float(np.mean(d)), se_rmse=se_rmse,
        acc_s=float(acc.mean()), rej_t=float(rej.mean()), failures=fails, wall_ms=wall_ms,
        se_mean_d=float(np.std(d, ddof=1)) / math.sqrt(r) if r > 1 else float("nan"),
        se_acc_s=_binom_se(acc.mean(), r), se_rej_t=_binom_se(rej.mean(), r),
    )


def run_experiment(spec, workers=1):
    """Run every (model, N) cell of ``spec``.

    ``workers > 1`` spreads replications over processes; results do not
    depend on the worker count. ``workers=None`` uses every CPU.
    """
    if workers is None:
        workers = os.cpu_count() or 1
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    rows, errors = [], []
    t_start = time.perf_counter()
    try:
        for mi, model in enumerate(spec.models):
            for n in spec.ns:
                tasks = [(model, n, replication_seed(spec.seed, mi, n, r), spec.level, spec.p)
                         for r in range(spec.reps)]
                t0 = time.perf_counter()
                if pool is None:
                    results = [_replicate(t) for t in tasks]
                else:
                    chunk = max(1, spec.reps // (4 * workers))
                    results = list(pool.map(_replicate, tasks, chunksize=chunk))
                wall = (time.perf_counter() - t0) * 1e3 if spec.timing else 0.0
                for res in results:
                    if res[3] is not None:
                        errors.append((str(model), n, res[3]))
                row = _aggregate(model, n, spec.reps, results, wall)
                log.info("%s N=%d rmse=%.4f acc_S=%.2f rej_T=%.2f", row.model, n, row.rmse, row.acc_s, row.rej_t)
                rows.append(row)
    finally:
        if pool is not None:
            pool.shutdown()
    total = (time.perf_counter() - t_start) * 1e3 if spec.timing else 0.0
    return ResultTable(tuple(rows), spec.reps, spec.seed, total, tuple(errors))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{v:.6g}"


def _row_cells(r):
    return [r.model, r.n, r.reps, r.rmse, r.mean_d, r.se_rmse, r.acc_s, r.rej_t, r.failures, r.wall_ms]


def emit(table, fmt="csv"):
    """Render ``table`` as CSV (fixed schema) or a markdown table."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in table.rows:
            writer.writerow([_fmt(c) for c in _row_cells(r)])
        return buf.getvalue()
    if fmt == "markdown":
        head = ["model", "N", "R", "RMSE (se)", "mean d (se)", "acc S (se)", "rej T (se)", "failures"]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for r in table.rows:
            cells = [
                r.model.replace("|", "\\|"), str(r.n), str(r.reps),
                f"{r.rmse:.4f} ({r.se_rmse:.4f})", f"{r.mean_d:.4f} ({r.se_mean_d:.4f})",
                f"{r.acc_s:.2f} ({r.se_acc_s:.2f})", f"{r.rej_t:.2f} ({r.se_rej_t:.2f})", str(r.failures),
            ]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_csv(text):
    """Inverse of ``emit(table, 'csv')``; returns a list of dicts."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError("unexpected CSV header")
    out = []
    for rec in reader:
        row = {"model": rec["model"]}
        for key in ("N", "R", "failures"):
            row[key] = int(rec[key])
        for key in ("rmse", "mean_d", "se_rmse", "acc_S", "rej_T", "wall_ms"):
            row[key] = float(rec[key])
        out.append(row)
    return out

"""Command-line entry point: ``varopt-ais <command> ...``.

Every randomized command requires ``--seed``.  Failures exit with status 1
and a message naming the stage that failed.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .ais import Schedule, run_ais
from .model import GeometricPath
from .oracle import exact_log_z
from .schedule import (GTable, de_solve, decelerate, default_half_width,
                       dlog_g, estimate_g_table, linear_schedule, smooth)
from .trainer import BinaryDataset, TrainConfig, bars_and_stripes, train

ANALYTIC_G = {
    "constant": lambda b: np.ones_like(b),
    "exp2": lambda b: np.exp(2.0 * b),
    "poly10": lambda b: (1.0 + 10.0 * b) ** 2,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


class _Stage:
    """Context manager tagging exceptions with a stage name and timing it."""

    def __init__(self, name: str, timings: Optional[dict] = None):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if self.timings is not None:
            self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


@dataclass
class ExperimentConfig:
    model_b: Path
    model_a: Optional[Path] = None
    schedule: str = "linear"          # linear | varopt | file
    schedule_file: Optional[Path] = None
    k: int = 1000
    n: int = 100
    k_tilde: int = 1000
    n_tilde: int = 100
    seed: int = 0
    out: Path = Path(".")
    dbmax: Optional[float] = None
    tol: float = 1e-8
    smooth_half_width: Optional[int] = None
    trace_ess: bool = False
    unweighted_g: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("K must be >= 1")
        if self.n < 2:
            raise ValueError("N must be >= 2")
        if self.dbmax is not None and not 0.0 < self.dbmax <= 1.0:
            raise ValueError("--dbmax must lie in (0, 1]")

    def load_path(self) -> GeometricPath:
        target = io.load_model(self.model_b)
        if self.model_a is None:
            return GeometricPath.from_target(target)
        return GeometricPath(io.load_model(self.model_a), target)


def _sub_seeds(seed: int):
    """Independent seeds for the g-estimation pass and the main pass."""
    g_seed, main_seed = np.random.SeedSequence(seed).spawn(2)
    return g_seed, main_seed


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def varopt_schedule(path: GeometricPath, k: int, k_tilde: int, n_tilde: int,
                    seed, half_width=None, dbmax=None, tol=1e-8,
                    weighted=True, timings=None, out: Optional[Path] = None):
    """Survey g with a cheap linear-schedule AIS pass, then solve for the schedule.

    Returns ``(schedule, table)``.  When ``out`` is given the table is
    written as soon as it exists so it survives later failures.
    """
    hw = default_half_width(k_tilde) if half_width is None else half_width
    with _Stage("estimate-g", timings):
        table = estimate_g_table(path, k_tilde, n_tilde, seed, weighted=weighted)
    with _Stage("smooth", timings):
        table = dlog_g(smooth(table, hw))
    if out is not None:
        io.save_gtable(table, out / "gtable.csv")
    with _Stage("solve", timings):
        schedule = de_solve(table, k, tol=tol)
    if dbmax is not None:
        with _Stage("decelerate", timings):
            schedule = decelerate(schedule, dbmax)
    return schedule, table


def cmd_train(args) -> int:
    if args.data:
        data = BinaryDataset.from_csv(args.data)
    else:
        h, w = (int(x) for x in args.bars.lower().split("x"))
        data = bars_and_stripes(h, w)
    config = TrainConfig(args.algorithm, args.gibbs_steps, args.lr, args.epochs,
                         args.batch_size, args.l2, args.seed,
                         n_chains=args.n_chains)
    with _Stage("train"):
        params = train(data, args.hidden, config)
    out = _out_dir(args.out)
    io.save_model(params, out / "model.json")
    return 0


def _experiment(args, **over) -> ExperimentConfig:
    return ExperimentConfig(
        model_b=Path(args.model_b),
        model_a=Path(args.model_a) if args.model_a else None,
        k=getattr(args, "K", 1000), n=getattr(args, "N", 100),
        k_tilde=getattr(args, "k_tilde", 1000), n_tilde=getattr(args, "n_tilde", 100),
        seed=args.seed, out=Path(args.out), dbmax=getattr(args, "dbmax", None),
        tol=getattr(args, "tol", 1e-8),
        smooth_half_width=getattr(args, "smooth_half_width", None),
        trace_ess=getattr(args, "trace_ess", False),
        unweighted_g=getattr(args, "unweighted", False), **over)


def cmd_ais(args) -> int:
    cfg = _experiment(args, schedule="file" if args.schedule else "linear",
                      schedule_file=Path(args.schedule) if args.schedule else None)
    with _Stage("load"):
        path = cfg.load_path()
        schedule = (io.load_schedule(cfg.schedule_file) if cfg.schedule_file
                    else linear_schedule(cfg.k))
    with _Stage("ais"):
        result = run_ais(path, schedule, cfg.n, cfg.seed, trace_ess=cfg.trace_ess)
    out = _out_dir(cfg.out)
    io.save_result(result, out / "result.json",
                   out / "log_w.csv" if args.dump_log_w else None)
    return 0


def cmd_estimate_g(args) -> int:
    cfg = _experiment(args)
    with _Stage("load"):
        path = cfg.load_path()
    with _Stage("estimate-g"):
        table = estimate_g_table(path, cfg.k_tilde, cfg.n_tilde, cfg.seed,
                                 weighted=not cfg.unweighted_g)
    hw = (default_half_width(cfg.k_tilde) if cfg.smooth_half_width is None
          else cfg.smooth_half_width)
    with _Stage("smooth"):
        table = dlog_g(smooth(table, hw))
    io.save_gtable(table, _out_dir(cfg.out) / "gtable.csv")
    return 0


def cmd_solve_schedule(args) -> int:
    with _Stage("load"):
        if args.table:
            table = io.load_gtable(args.table)
            if args.smooth_half_width is not None:
                table = dlog_g(smooth(table, args.smooth_half_width))
        else:
            table = GTable.from_function(ANALYTIC_G[args.analytic], args.k_tilde)
    with _Stage("solve"):
        schedule = de_solve(table, args.K, tol=args.tol, max_iter=args.max_iter)
    if args.dbmax is not None:
        with _Stage("decelerate"):
            schedule = decelerate(schedule, args.dbmax)
    io.save_schedule(schedule, _out_dir(args.out) / "schedule.csv")
    return 0


def cmd_decelerate(args) -> int:
    with _Stage("load"):
        if args.schedule:
            schedule = io.load_schedule(args.schedule)
        else:
            deltas = np.array([float(x) for x in args.deltas.split(",")])
            schedule = Schedule(np.concatenate([[0.0], np.cumsum(deltas)]))
    with _Stage("decelerate"):
        schedule = decelerate(schedule, args.dbmax, args.tol)
    io.save_schedule(schedule, _out_dir(args.out) / "schedule.csv")
    return 0


def cmd_varopt(args) -> int:
    cfg = _experiment(args, schedule="varopt")
    timings: dict = {}
    out = _out_dir(cfg.out)
    with _Stage("load", timings):
        path = cfg.load_path()
    g_seed, main_seed = _sub_seeds(cfg.seed)
    schedule, _ = varopt_schedule(
        path, cfg.k, cfg.k_tilde, cfg.n_tilde, g_seed,
        half_width=cfg.smooth_half_width, dbmax=cfg.dbmax, tol=cfg.tol,
        weighted=not cfg.unweighted_g, timings=timings, out=out)
    io.save_schedule(schedule, out / "schedule.csv")
    with _Stage("main-ais", timings):
        result = run_ais(path, schedule, cfg.n, main_seed, trace_ess=cfg.trace_ess)
    io.save_result(result, out / "result.json",
                   out / "log_w.csv" if args.dump_log_w else None)
    # Wall times vary run to run, so they live apart from the deterministic outputs.
    (out / "timings.json").write_text(json.dumps(timings, indent=1) + "\n")
    return 0


def cmd_exact(args) -> int:
    with _Stage("exact"):
        summary = exact_log_z(io.load_model(args.model_b), method=args.method)
    text = json.dumps(summary.to_dict())
    print(text)
    if args.out:
        (_out_dir(args.out) / "exact.json").write_text(text + "\n")
    return 0


COMPARE_COLUMNS = ("schedule_name", "K", "N", "seed", "log_z_hat", "ess",
                   "log_weight_std", "wall_time_s")


def _parse_schedule_specs(text: str):
    specs = []
    for item in text.split(","):
        item = item.strip()
        if item.startswith("file:"):
            specs.append((Path(item[5:]).stem, "file", Path(item[5:])))
        elif item == "linear" or item == "varopt":
            specs.append((item, item, None))
        elif item.startswith("varopt"):
            specs.append((item, "varopt", float(item[len("varopt"):].lstrip("+"))))
        else:
            raise ValueError(f"unknown schedule spec {item!r}")
    return specs


def cmd_compare(args) -> int:
    """Rerun AIS under several schedules and K values with shared seeds."""
    out = _out_dir(args.out)
    with _Stage("load"):
        cfg = _experiment(args)
        path = cfg.load_path()
        specs = _parse_schedule_specs(args.schedules)
        k_values = [int(k) for k in args.k_values.split(",")]
    g_seed, _ = _sub_seeds(cfg.seed)
    # Shared seed ladder: repetition r of every schedule uses seed + r.
    ladder = [cfg.seed + r for r in range(args.repeats)]
    table = None
    rows = []
    for k in k_values:
        for name, kind, arg in specs:
            with _Stage(f"schedule {name} K={k}"):
                if kind == "linear":
                    schedule = linear_schedule(k)
                elif kind == "file":
                    schedule = io.load_schedule(arg)
                else:
                    if table is None:
                        hw = (default_half_width(cfg.k_tilde) if cfg.smooth_half_width
                              is None else cfg.smooth_half_width)
                        table = dlog_g(smooth(estimate_g_table(
                            path, cfg.k_tilde, cfg.n_tilde, g_seed,
                            weighted=not cfg.unweighted_g), hw))
                        io.save_gtable(table, out / "gtable.csv")
                    schedule = de_solve(table, k, tol=cfg.tol)
                    if arg is not None:
                        schedule = decelerate(schedule, arg)
                io.save_schedule(schedule, out / f"schedule_{name}_K{k}.csv")
            for seed in ladder:
                with _Stage(f"ais {name} K={k} seed={seed}"):
                    t0 = time.perf_counter()
                    res = run_ais(path, schedule, cfg.n, seed)
                    wall = time.perf_counter() - t0
                rows.append((name, schedule.k, cfg.n, seed, res.log_z_hat, res.ess,
                             res.log_weight_std, wall))
    lines = [",".join(COMPARE_COLUMNS)]
    for r in rows:
        lines.append(",".join([r[0], str(r[1]), str(r[2]), str(r[3])]
                              + [f"{x:.17g}" for x in r[4:]]))
    (out / "compare.csv").write_text("\n".join(lines) + "\n")
    return 0


def _add_model_args(p, seed=True):
    p.add_argument("--model-b", required=True, help="target model JSON")
    p.add_argument("--model-a", help="base model JSON (zero weights); "
                   "defaults to the uniform base")
    if seed:
        p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=".", help="output directory")


def _add_g_args(p):
    p.add_argument("--k-tilde", type=int, default=1000)
    p.add_argument("--n-tilde", type=int, default=100)
    p.add_argument("--smooth-half-width", type=int, default=None)
    p.add_argument("--unweighted", action="store_true",
                   help="estimate g without on-the-fly importance weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varopt-ais", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an RBM with CD or PCD")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV of 0/1 rows")
    src.add_argument("--bars", help="bars-and-stripes dataset, e.g. 3x4")
    p.add_argument("--hidden", type=int, required=True)
    p.add_argument("--algorithm", choices=("CD", "PCD"), default="PCD")
    p.add_argument("--gibbs-steps", type=int, default=1)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=3000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--n-chains", type=int, default=None)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ais", help="run AIS with a linear or stored schedule")
    _add_model_args(p)
    p.add_argument("-K", type=int, default=1000)
    p.add_argument("-N", type=int, default=100)
    p.add_argument("--schedule", help="schedule CSV (default: linear with K steps)")
    p.add_argument("--trace-ess", action="store_true")
    p.add_argument("--dump-log-w", action="store_true")
    p.set_defaults(func=cmd_ais)

    p = sub.add_parser("estimate-g", help="estimate g(beta) with a linear AIS pass")
    _add_model_args(p)
    _add_g_args(p)
    p.set_defaults(func=cmd_estimate_g)

    p = sub.add_parser("solve-schedule", help="solve for the optimal schedule")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--table", help="g table CSV")
    src.add_argument("--analytic", choices=sorted(ANALYTIC_G))
    p.add_argument("--k-tilde", type=int, default=1000,
                   help="grid size for --analytic tables")
    p.add_argument("--smooth-half-width", type=int, default=None)
    p.add_argument("-K", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--dbmax", type=float, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_solve_schedule)

    p = sub.add_parser("decelerate", help="cap the step size of a schedule")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--schedule", help="schedule CSV")
    src.add_argument("--deltas", help="comma-separated step sizes")
    p.add_argument("--dbmax", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_decelerate)

    p = sub.add_parser("varopt", help="VAROPT-AIS end to end")
    _add_model_args(p)
    _add_g_args(p)
    p.add_argument("-K", type=int, default=1000)
    p.add_argument("-N", type=int, default=100)
    p.add_argument("--dbmax", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--trace-ess", action="store_true")
    p.add_argument("--dump-log-w", action="store_true")
    p.set_defaults(func=cmd_varopt)

    p = sub.add_parser("exact", help="exact log Z by enumeration")
    p.add_argument("--model-b", required=True)
    p.add_argument("--method", choices=("enumerate_hidden", "enumerate_visible"))
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("compare", help="compare schedules over K with shared seeds")
    _add_model_args(p)
    _add_g_args(p)
    p.add_argument("--schedules", default="linear,varopt",
                   help="comma list of linear, varopt, varopt<dbmax>, file:<csv>")
    p.add_argument("--k-values", default="1000")
    p.add_argument("-N", type=int, default=100)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args)
    except StageError as exc:
        print(f"varopt-ais {args.command}: error {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"varopt-ais {args.command}: error [setup] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

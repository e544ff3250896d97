"""Command-line interface: ``catmix {fit,select,calibrate,simulate,benchmark}``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 when the
penalty calibration finds no usable jump and every fallback fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .calibration import DEFAULT_WINDOW_WIDTH, calibrate_and_select
from .core import Case, Dataset, ModelIndex
from .em import EmConfig, fit, model_seed
from .errors import FlatPath, InputError, NumericalError
from .explorer import ExplorerConfig, build_pool
from .io import (
    calibration_report,
    dump_json,
    fit_report,
    load_dataset,
    load_model,
    model_summary,
    parse_variables,
    read_pool,
    write_csv,
    write_dataset,
    write_labels,
    write_plot_data,
    write_pool,
)
from .metrics import map_classify
from .pipeline import parse_criterion, run_selection
from .simulation import PRESETS, TrueModelSpec, consistency_experiment, oracle_experiment, simulate_labeled

logger = logging.getLogger("catmix")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_FLAT = 4


@dataclass(frozen=True)
class RunConfig:
    """Parsed and checked command-line options."""

    command: str
    inputs: tuple = ()
    case: Case = Case.HAPLOID
    K_max: int = 5
    grid: Optional[tuple] = None
    window_width: float = DEFAULT_WINDOW_WIDTH
    window_h: Optional[int] = None
    em: EmConfig = field(default_factory=EmConfig)
    seed: int = 0
    out: Path = Path(".")
    criterion: str = "slope"
    kappa: Optional[float] = None
    parallelism: int = 1
    exhaustive: bool = False

    def explorer(self, n_jobs: Optional[int] = None) -> ExplorerConfig:
        kw = {}
        if self.grid is not None:
            lo, hi, count = self.grid
            kw = dict(lambda_lo=lo, lambda_hi=hi, grid_size=count)
        return ExplorerConfig(
            K_max=self.K_max,
            em=self.em,
            exhaustive=self.exhaustive,
            n_jobs=self.parallelism if n_jobs is None else n_jobs,
            **kw,
        )


def parse_grid(text: str) -> tuple:
    """``"lo:hi:count"``; ``hi`` may be left empty for ``ln n``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must look like lo:hi:count")
    try:
        lo = float(parts[0])
        hi = float(parts[1]) if parts[1].strip() else None
        count = int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse grid {text!r}") from None
    if count < 2 or lo <= 0 or (hi is not None and hi <= lo):
        raise argparse.ArgumentTypeError("grid needs 0 < lo < hi and count >= 2")
    return lo, hi, count


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _int_list(text: str) -> list:
    try:
        values = [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return values


def _criterion(text: str) -> tuple:
    try:
        return parse_criterion(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catmix",
        description="Clustering and variable selection for categorical mixtures.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root random seed (default 0)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")
    common.add_argument("--restarts", type=_positive_int, default=10, help="EM restarts per model")
    common.add_argument("--max-iter", type=_positive_int, default=500, help="EM iteration cap")
    common.add_argument("--tol", type=_positive_float, default=1e-8, help="EM relative tolerance")
    common.add_argument("--parallelism", type=_positive_int, default=None,
                        help="worker processes (default: available cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--case", choices=[c.value for c in Case], default="haploid")
    data.add_argument("--delimiter", default=",", help="field delimiter (default ,)")
    data.add_argument("--header", action="store_true", help="skip a header line")

    select = argparse.ArgumentParser(add_help=False)
    select.add_argument("--kmax", type=_positive_int, default=5)
    select.add_argument("--grid", type=parse_grid, default=None, help='lambda grid "lo:hi:count"')
    select.add_argument("--window-width", type=_positive_float, default=DEFAULT_WINDOW_WIDTH)
    select.add_argument("--window-h", type=_positive_int, default=None,
                        help="window in grid intervals (overrides --window-width)")
    select.add_argument("--exhaustive", action="store_true", help="fit every model instead of exploring")
    select.add_argument("--criterion", type=_criterion, default=("slope", None),
                        help="aic, bic, slope or theoretical:KAPPA (default slope)")

    p = sub.add_parser("fit", parents=[common, data], help="fit one model (K, S)")
    p.add_argument("data")
    p.add_argument("-K", "--clusters", type=_positive_int, required=True)
    p.add_argument("-S", "--variables", default=None,
                   help="clustering variables, e.g. 1,3,4 (default: all when K > 1)")

    p = sub.add_parser("select", parents=[common, data, select], help="explore, calibrate and select")
    p.add_argument("data")

    p = sub.add_parser("calibrate", parents=[common, data, select], help="calibrate the penalty only")
    p.add_argument("data", nargs="?")
    p.add_argument("--pool", type=Path, default=None, help="pool.csv from an earlier run")

    p = sub.add_parser("simulate", parents=[common], help="draw a dataset from a model spec")
    p.add_argument("spec", help="JSON spec file or preset:NAME (" + ", ".join(PRESETS) + ")")
    p.add_argument("-n", type=_positive_int, required=True)
    p.add_argument("--delimiter", default=",")

    p = sub.add_parser("benchmark", parents=[common, select], help="run a simulation experiment")
    p.add_argument("spec", nargs="?", default=None, help="JSON spec file or preset:NAME")
    p.add_argument("--experiment", choices=("consistency", "oracle"), required=True)
    p.add_argument("--n", type=_int_list, default=None,
                   help="sample sizes (consistency: 100,300,600; oracle: 500)")
    p.add_argument("--replicates", type=_positive_int, default=None,
                   help="replicates per sample size (consistency: 10; oracle: 30)")
    p.add_argument("--required", default=None,
                   help="variables that S must contain to count as recovered (default: true S)")
    return parser


def _run_config(args) -> RunConfig:
    crit, kappa = getattr(args, "criterion", ("slope", None))
    return RunConfig(
        command=args.command,
        case=Case(getattr(args, "case", "haploid")),
        K_max=getattr(args, "kmax", 5),
        grid=getattr(args, "grid", None),
        window_width=getattr(args, "window_width", DEFAULT_WINDOW_WIDTH),
        window_h=getattr(args, "window_h", None),
        em=EmConfig(max_iterations=args.max_iter, relative_tolerance=args.tol,
                    n_restarts=args.restarts, rng_seed=args.seed),
        seed=args.seed,
        out=args.out,
        criterion=crit,
        kappa=kappa,
        parallelism=args.parallelism or os.cpu_count() or 1,
        exhaustive=getattr(args, "exhaustive", False),
    )


def _load_truth(spec: str) -> TrueModelSpec:
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1]
        if name not in PRESETS:
            raise InputError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        return PRESETS[name]()
    truth, _ = load_model(spec, cls=TrueModelSpec)
    return truth


def _dataset_info(ds: Dataset) -> dict:
    return {"case": ds.case.value, "n": ds.n, "L": ds.L, "n_states": list(ds.n_states)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args, cfg: RunConfig) -> int:
    ds = load_dataset(args.data, cfg.case, args.delimiter, args.header)
    K = args.clusters
    if K == 1:
        S = frozenset()
    elif args.variables is None:
        S = frozenset(range(ds.L))
    else:
        S = parse_variables(args.variables, ds.L)
    try:
        index = ModelIndex(K, S)
    except ValueError as err:
        raise InputError(str(err)) from None
    if K > ds.n:
        raise InputError(f"K = {K} exceeds the number of individuals ({ds.n})")
    fitted = fit(ds, index, cfg.em.with_seed(model_seed(cfg.seed, index)))
    cfg.out.mkdir(parents=True, exist_ok=True)
    dump_json(cfg.out / "fit.json", fit_report(fitted, ds))
    write_labels(cfg.out / "labels.csv", map_classify(ds, index, fitted.params))
    print(f"{index}: D = {fitted.dimension}, contrast = {fitted.contrast:.6f}")
    return EXIT_OK


def _selection_report(ds, cfg: RunConfig, outcome) -> dict:
    selections = {}
    for name in ("slope", "aic", "bic", "theoretical"):
        if name in outcome.selections or name == "slope":
            selections[name] = model_summary(outcome.selected(name))
    return {
        "format": "catmix-selection",
        "data": _dataset_info(ds),
        "settings": {
            "K_max": cfg.K_max,
            "grid": [float(outcome.grid[0]), float(outcome.grid[-1]), len(outcome.grid)],
            "window_width": cfg.window_width if cfg.window_h is None else None,
            "window_h": cfg.window_h,
            "restarts": cfg.em.n_restarts,
            "seed": cfg.seed,
            "exhaustive": cfg.exhaustive,
            "criterion": cfg.criterion,
            "kappa": cfg.kappa,
        },
        "pool_size": len(outcome.pool),
        "pool_failed": sum(f.failed for f in outcome.pool),
        "selections": selections,
        "winner_criterion": cfg.criterion,
        "calibration": None if outcome.calibration is None else calibration_report(
            outcome.calibration, cfg.window_width if cfg.window_h is None else None
        ),
        "warnings": list(outcome.warnings),
    }


def cmd_select(args, cfg: RunConfig) -> int:
    ds = load_dataset(args.data, cfg.case, args.delimiter, args.header)
    outcome = run_selection(ds, cfg.explorer(), h=cfg.window_h, width=cfg.window_width, kappa=cfg.kappa)
    cfg.out.mkdir(parents=True, exist_ok=True)
    dump_json(cfg.out / "selection.json", _selection_report(ds, cfg, outcome))
    write_pool(cfg.out / "pool.csv", outcome.pool)
    if outcome.calibration is not None:
        write_plot_data(cfg.out, outcome.calibration, outcome.pool)
    winner = outcome.selected(cfg.criterion)
    if winner is not None:
        dump_json(cfg.out / "model.json", fit_report(winner, ds))
        write_labels(cfg.out / "labels.csv", map_classify(ds, winner.index, winner.params))
    for name, f in outcome.selections.items():
        print(f"{name:>11}: {f.index}  D = {f.dimension}")
    if winner is None:
        logger.error("no %s selection: %s", cfg.criterion, outcome.flat_path)
        return EXIT_FLAT
    return EXIT_OK


def cmd_calibrate(args, cfg: RunConfig) -> int:
    if (args.data is None) == (args.pool is None):
        raise InputError("give either a data file or --pool FILE")
    if args.pool is not None:
        pool = read_pool(args.pool)
    else:
        ds = load_dataset(args.data, cfg.case, args.delimiter, args.header)
        pool = list(build_pool(ds, cfg.explorer()))
    n = next(f.n_obs for f in pool)
    grid = cfg.explorer().grid(n)
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        cal = calibrate_and_select(pool, grid, h=cfg.window_h, width=cfg.window_width)
    except FlatPath as err:
        dump_json(cfg.out / "calibration.json", {"error": str(err), "report": err.report})
        logger.error("calibration failed: %s", err)
        return EXIT_FLAT
    dump_json(cfg.out / "calibration.json",
              calibration_report(cal, cfg.window_width if cfg.window_h is None else None))
    write_plot_data(cfg.out, cal, pool)
    if args.pool is None:
        write_pool(cfg.out / "pool.csv", pool)
    print(f"lambda_min = {cal.lambda_min_hat:.6g} ({cal.method}); selected {cal.final_selection}")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    truth = _load_truth(args.spec)
    ds, z = simulate_labeled(truth, args.n, cfg.seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_dataset(cfg.out / "data.csv", ds, delimiter=args.delimiter)
    write_labels(cfg.out / "classes.csv", z)
    print(f"wrote {ds.n} rows x {ds.L} variables to {cfg.out / 'data.csv'}")
    return EXIT_OK


def cmd_benchmark(args, cfg: RunConfig) -> int:
    spec = args.spec or f"preset:{args.experiment}"
    truth = _load_truth(spec)
    config = replace(cfg.explorer(n_jobs=1), n_jobs=1)
    cfg.out.mkdir(parents=True, exist_ok=True)
    if args.experiment == "consistency":
        required = None if args.required is None else tuple(sorted(parse_variables(args.required, truth.L)))
        report = consistency_experiment(
            truth,
            args.n or [100, 300, 600],
            args.replicates or 10,
            seed=cfg.seed,
            config=config,
            required=required,
            width=cfg.window_width,
            n_jobs=cfg.parallelism,
        )
        header = ("n", "criterion", "replicate", "data_seed", "K", "S", "dimension",
                  "K_correct", "S_contains_required", "failed", "lambda_min_hat")
        write_csv(cfg.out / "consistency_rows.csv", header, [[r.get(h) for h in header] for r in report.rows])
        dump_json(cfg.out / "consistency_summary.json", {
            "K_true": report.K_true,
            "required": [l + 1 for l in report.required],
            "summary": report.summary,
        })
        for s in report.summary:
            print(f"n={s['n']:>5} {s['criterion']:>6}: K correct {s['K_correct']}/{s['replicates']}, "
                  f"S recovered {s['S_contains_required']}/{s['replicates']}")
    else:
        n_values = args.n or [500]
        if len(n_values) != 1:
            raise InputError("the oracle experiment takes a single sample size")
        report = oracle_experiment(
            truth, n_values[0], args.replicates or 30, seed=cfg.seed, config=replace(config, exhaustive=True),
            width=cfg.window_width, n_jobs=cfg.parallelism,
        )
        header = ("n", "criterion", "replicate", "K", "S", "h2", "h2_oracle_model",
                  "ratio_to_oracle", "diff_to_oracle", "is_oracle")
        write_csv(cfg.out / "oracle_rows.csv", header, [[r.get(h) for h in header] for r in report.rows])
        write_csv(
            cfg.out / "risk_table.csv",
            ("K", "S", "mean_h2", "se_h2", "replicates", "failed"),
            [(m.K, " ".join(str(l + 1) for l in m.variables), r.mean, r.se, r.n_replicates, r.n_failed)
             for m, r in report.risks.items()],
        )
        oracle_risk = report.risks[report.oracle]
        dump_json(cfg.out / "oracle_summary.json", {
            "oracle": {"K": report.oracle.K, "S": [l + 1 for l in report.oracle.variables],
                       "mean_h2": oracle_risk.mean, "se_h2": oracle_risk.se},
            "summary": report.summary,
        })
        print(f"oracle {report.oracle}: mean h2 = {oracle_risk.mean:.5f}")
        for s in report.summary:
            print(f"{s['criterion']:>6}: mean h2 = {s['mean_h2']:.5f} (se {s['se_h2']:.5f})")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "select": cmd_select,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        cfg = _run_config(args)
        return COMMANDS[args.command](args, cfg)
    except FlatPath as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FLAT
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

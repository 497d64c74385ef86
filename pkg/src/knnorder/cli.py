"""Command-line entry point: ``knnorder <subcommand> [options]``.

Every subcommand writes versioned CSV or JSON tables, to ``--out DIR`` when
given and to stdout otherwise.  Failures exit nonzero with a one-line JSON
error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import experiments, output
from .config import PRESETS, ConfigError, ExperimentConfig, from_dict, load, preset
from .knn import KD_TREE, STRUCTURES, build_index, classify_knn
from .kselect import INDEPENDENT, OUT_OF_BAG, BootstrapPlan, DegenerateResample, choose_k
from .risk import draw_replicate
from .sampling import MODELS, POISSON

EXIT_CONFIG = 2
EXIT_FAILURE = 1

DEFAULT_PRESET = {"scaling": "scaling-d2"}


class CliError(Exception):
    def __init__(self, message: str, field: str | None = None, kind: str = "usage"):
        super().__init__(message)
        self.field = field
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    """Argument errors become CliError so they share the JSON error record."""

    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _fraction(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a fraction: {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("r must lie in (0, 1)")
    return value


def resolve_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise CliError("give either --config or --preset, not both", "config")
    if args.config:
        config = load(args.config)
    else:
        config = preset(args.preset or DEFAULT_PRESET.get(args.command, "table1-desk"))
    raw = dict(config.raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "n_sets", None) is not None:
        raw["n_training_sets"] = args.n_sets
    return from_dict(raw) if raw != config.raw else config


def _row(config: ExperimentConfig, name: str | None):
    if name is None:
        return config.rows[0]
    for spec in config.rows:
        if spec.name == name:
            return spec
    raise CliError(f"no row named {name!r}; rows are {', '.join(r.name for r in config.rows)}", "row")


def _write(args, table: output.Table, stem: str) -> None:
    if args.out is None:
        sys.stdout.write(output.to_csv(table) if args.format == "csv" else output.to_json(table))
        return
    path = output.emit(table, args.format, Path(args.out) / f"{stem}.{args.format}")
    logging.getLogger(__name__).info("wrote %s", path)


def _write_curves(args, curves: dict, prefix: str, stdout: bool = False) -> None:
    # simulation curves only go to files; stdout carries the summary table alone
    if args.out is None and not stdout:
        return
    for name, table in curves.items():
        _write(args, table, f"{prefix}-{name}")


def cmd_simulate(args) -> None:
    config = resolve_config(args)
    spec = _row(config, args.row)
    T = round(spec.pair.mu + spec.pair.nu) if config.model != POISSON else None
    ts, _ = draw_replicate(spec.pair, config.seed, args.index, 1, config.model, T)
    text = output.training_to_csv(ts, row=spec.name, config_hash=config.hash())
    if args.out is None:
        sys.stdout.write(text)
    else:
        path = Path(args.out) / f"training-{spec.name}-{args.index}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _read_training(path):
    try:
        return output.read_training(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", "training", "io") from None
    except (ValueError, StopIteration, IndexError) as exc:
        raise CliError(f"{path}: {exc or 'empty file'}", "training", "format") from None


def _query_points(args, d: int) -> np.ndarray:
    rows = []
    for text in args.point or []:
        rows.append([float(v) for v in text.split(",")])
    if args.points:
        try:
            rows.extend(np.loadtxt(args.points, delimiter=",", ndmin=2).tolist())
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read query points: {exc}", "points", "io") from None
    if not rows:
        raise CliError("no query points; use --point or --points", "point")
    if any(len(r) != d for r in rows):
        raise CliError(f"query points must have {d} coordinates", "point")
    return np.asarray(rows, dtype=float)


def cmd_classify(args) -> None:
    ts = _read_training(args.training)
    queries = _query_points(args, ts.d)
    if args.k > len(ts):
        raise CliError(f"k = {args.k} exceeds the training-set size {len(ts)}", "k")
    index = build_index(ts.points, args.structure)
    table = output.Table("classify", [f"x{j + 1}" for j in range(ts.d)] + ["k", "label"],
                        meta={"training": Path(args.training).name, "n_train": len(ts)})
    for z in queries:
        label = classify_knn(ts, index, z, args.k)
        table.add(**{f"x{j + 1}": float(z[j]) for j in range(ts.d)}, k=args.k, label=label)
    _write(args, table, "classify")


def cmd_bayes(args) -> None:
    _write(args, experiments.run_bayes(resolve_config(args)), "bayes")


def cmd_select_k(args) -> None:
    ts = _read_training(args.training)
    X, Y = ts.x_points, ts.y_points
    if len(X) == 0 or len(Y) == 0:
        raise CliError("the training set needs points from both populations", "training")
    k_grid = tuple(range(1, args.k_max + 1)) if args.k_max else None
    seed = args.seed if args.seed is not None else 0
    plan = BootstrapPlan(float(args.r), args.B, k_grid, args.test_sampling)
    try:
        result = choose_k(X, Y, plan, args.model, seed)
    except DegenerateResample as exc:
        raise CliError(str(exc), "r", "degenerate") from None
    table = output.Table("select-k", ["r", "B", "model", "test_sampling", "seed", "M", "N", "k_hat", "k_tilde",
                                      "curve"], meta={"seed": seed, "training": Path(args.training).name})
    curve = " ".join(f"{k}:{err:.6f}" for k, err in result.error_curve)
    table.add(r=str(args.r), B=args.B, model=args.model, test_sampling=args.test_sampling, seed=seed,
              M=len(X), N=len(Y), k_hat=result.k_hat, k_tilde=result.k_tilde, curve=curve)
    _write(args, table, "select-k")


def cmd_theory(args) -> None:
    table, curves = experiments.run_theory(resolve_config(args))
    _write(args, table, "theory")
    _write_curves(args, curves, "expansion", stdout=True)


def cmd_table1(args) -> None:
    config = resolve_config(args)
    rows = args.row or None
    if rows:
        for name in rows:
            _row(config, name)
    table, curves = experiments.run_table1(config, out_dir=args.out, workers=args.workers, rows=rows)
    _write(args, table, "table1")
    _write_curves(args, curves, "curve")


def cmd_scaling(args) -> None:
    config = resolve_config(args)
    if len(config.scaling_levels) != 2:
        raise CliError("the configuration has no [scaling] levels", "scaling.levels")
    levels, ratio, curves = experiments.run_scaling(config, out_dir=args.out, workers=args.workers)
    _write(args, ratio, "scaling")
    if args.out is not None:
        _write(args, levels, "scaling-levels")
    _write_curves(args, curves, "scaling-curve")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, help="master seed (overrides the configuration)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    configured = argparse.ArgumentParser(add_help=False)
    configured.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
    configured.add_argument("--preset", choices=PRESETS, help="built-in configuration")

    runs = argparse.ArgumentParser(add_help=False)
    runs.add_argument("--workers", type=_positive, default=1, help="worker processes")
    runs.add_argument("--n-sets", type=_positive, help="override n_training_sets")

    parser = _Parser(prog="knnorder", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, configured], help="draw and dump one training set")
    p.add_argument("--row", help="configuration row (default: the first)")
    p.add_argument("--index", type=int, default=0, help="replicate stream index")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("classify", parents=[common], help="k-NN labels for query points")
    p.add_argument("--training", required=True, metavar="PATH", help="dumped training set")
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--point", action="append", metavar="X1,X2,...", help="query point (repeatable)")
    p.add_argument("--points", metavar="PATH", help="CSV file of query points, one per line")
    p.add_argument("--structure", choices=STRUCTURES, default=KD_TREE)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bayes", parents=[common, configured], help="Bayes risk of every row")
    p.set_defaults(func=cmd_bayes)

    p = sub.add_parser("select-k", parents=[common], help="bootstrap choice of k for a dumped set")
    p.add_argument("--training", required=True, metavar="PATH")
    p.add_argument("--r", type=_fraction, default=Fraction(1, 3), help="resampling fraction")
    p.add_argument("--B", type=_positive, default=100, help="resample pairs")
    p.add_argument("--model", choices=MODELS, default=POISSON)
    p.add_argument("--k-max", type=_positive, help="largest k on the bootstrap grid")
    p.add_argument("--test-sampling", choices=(OUT_OF_BAG, INDEPENDENT), default=OUT_OF_BAG)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("theory", parents=[common, configured], help="C1, C2 and the expansion's k_opt")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("table1", parents=[common, configured, runs], help="Monte Carlo error-rate table")
    p.add_argument("--row", action="append", help="restrict to this row (repeatable)")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("scaling", parents=[common, configured, runs], help="growth of k_opt with intensity")
    p.set_defaults(func=cmd_scaling)
    return parser


def _fail(kind: str, message: str, field: str | None, code: int) -> int:
    record = {"error": kind, "message": message, "field": field}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        args.func(args)
    except ConfigError as exc:
        return _fail("config", exc.message, exc.field, EXIT_CONFIG)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.field, EXIT_CONFIG if exc.kind == "usage" else EXIT_FAILURE)
    except (ValueError, RuntimeError, NotImplementedError) as exc:
        return _fail(type(exc).__name__, str(exc), None, EXIT_FAILURE)
    except OSError as exc:
        return _fail("io", str(exc), None, EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())

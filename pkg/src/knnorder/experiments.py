"""Configuration-driven experiments: Table 1 rows, scaling checks, theory summaries."""

from __future__ import annotations

import logging
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import theory
from .config import ExperimentConfig, RowSpec
from .densities import PopulationPair
from .kselect import BootstrapPlan, choose_k
from .output import Table
from .risk import (QuadratureGrid, VoteCounts, argmin_k, bayes_risk, default_grid, error_curve,
                   max_safe_k, plug_in_error, simulate_votes)
from .sampling import BINOMIAL, TrainingSet, derive_seed

log = logging.getLogger(__name__)

CHECKPOINT_BATCH = 25


def r_tag(r: Fraction) -> str:
    return f"r{r.numerator}_{r.denominator}"


class BootstrapChooser:
    """Per-replicate callback returning the bootstrap-selected k for each resampling fraction."""

    def __init__(self, plans: list[BootstrapPlan], model: str, seed: int):
        self.plans = plans
        self.model = model
        self.seed = seed

    def __call__(self, ts: TrainingSet, index: int) -> list[int]:
        X, Y = ts.x_points, ts.y_points
        if len(X) == 0 or len(Y) == 0:
            raise RuntimeError(f"replicate {index} has an empty class; bootstrap undefined")
        return [choose_k(X, Y, plan, self.model, derive_seed(self.seed, index, 1, j)).k_tilde
                for j, plan in enumerate(self.plans)]


def row_k_grid(config: ExperimentConfig, pair: PopulationPair) -> list[int]:
    """Configured k grid, cut where training sets shorter than k stop being negligible."""
    total = pair.mu + pair.nu
    cap = round(total) if config.model == BINOMIAL else max_safe_k(total)
    ks = [k for k in config.k_grid() if k <= cap]
    if not ks:
        raise ValueError(f"k grid is empty after capping at {cap} for mu + nu = {total:g}")
    return ks


def _training_size(config: ExperimentConfig, pair: PopulationPair) -> int | None:
    return round(pair.mu + pair.nu) if config.model == BINOMIAL else None


def run_votes(config: ExperimentConfig, pair: PopulationPair, grid: QuadratureGrid, ks: list[int], *,
              extra_k: Callable | None = None, checkpoint: Path | None = None, workers: int = 1,
              batch: int = CHECKPOINT_BATCH) -> VoteCounts:
    """Replicates 0 .. n_training_sets-1, resuming from and saving to ``checkpoint``."""
    n_total = config.n_training_sets
    done = None
    if checkpoint is not None and checkpoint.exists():
        saved = np.load(checkpoint)
        if np.array_equal(saved["ks"], np.unique(ks)) and saved["counts"].shape[0] == len(grid):
            extra = saved["extra"] if saved["extra"].size else None
            extra_ks = saved["extra_ks"] if saved["extra_ks"].size else None
            done = VoteCounts(saved["ks"], saved["counts"], int(saved["n_sets"]), extra, extra_ks,
                              int(saved["redraws"]))
            log.info("resuming %s at replicate %d", checkpoint.name, done.n_sets)
    start = 0 if done is None else done.n_sets
    while start < n_total:
        n = min(batch, n_total - start) if checkpoint is not None else n_total - start
        part = simulate_votes(pair, grid.nodes, ks, n, config.seed, model=config.model,
                              T=_training_size(config, pair), start=start, extra_k=extra_k, workers=workers)
        done = part if done is None else done + part
        start += n
        if checkpoint is not None:
            checkpoint.parent.mkdir(parents=True, exist_ok=True)
            tmp = checkpoint.with_suffix(".tmp.npz")
            np.savez(tmp, ks=done.ks, counts=done.counts, n_sets=done.n_sets, redraws=done.redraws,
                     extra=done.extra if done.extra is not None else np.empty(0),
                     extra_ks=done.extra_ks if done.extra_ks is not None else np.empty(0))
            tmp.replace(checkpoint)
    return done


def _checkpoint(out_dir, config: ExperimentConfig, kind: str, name: str) -> Path | None:
    if out_dir is None:
        return None
    return Path(out_dir) / "checkpoints" / f"{config.hash()}-{config.seed}-{kind}-{name}.npz"


def curve_table(curve, config: ExperimentConfig, **meta) -> Table:
    table = Table("curve", ["k", "err", "se", "n_sets", "seed"],
                  meta={"seed": config.seed, "config_hash": config.hash(), **meta})
    for e in curve:
        table.add(k=e.k, err=e.err, se=e.se, n_sets=e.n_replicates, seed=config.seed)
    return table


def table1_columns(config: ExperimentConfig) -> list[str]:
    cols = ["row", "d", "mu", "nu", "correlation", "bayes", "k_opt", "err_kopt", "se_kopt"]
    for r in config.r_values:
        tag = r_tag(r)
        cols += [f"mean_ktilde_{tag}", f"err_ktilde_{tag}", f"se_ktilde_{tag}"]
    return cols + ["n_sets", "seed", "stream_start", "config_hash"]


def run_table1(config: ExperimentConfig, *, out_dir=None, workers: int = 1,
               rows: list[str] | None = None) -> tuple[Table, dict[str, Table]]:
    """Bayes risk, grid-optimal k and bootstrap-selected k for every configured row."""
    table = Table("table1", table1_columns(config), meta={"seed": config.seed, "config_hash": config.hash()})
    curves = {}
    plans = [BootstrapPlan(float(r), config.B, None, config.test_sampling) for r in config.r_values]
    for spec in config.rows:
        if rows is not None and spec.name not in rows:
            continue
        pair = spec.pair
        region = config.region(spec.d)
        grid = default_grid(pair, region, config.resolution(spec.d), seed=config.seed)
        ks = row_k_grid(config, pair)
        chooser = BootstrapChooser(plans, config.model, config.seed) if plans else None
        log.info("table1 row %s: %d nodes, k <= %d, %d sets", spec.name, len(grid), ks[-1],
                 config.n_training_sets)
        votes = run_votes(config, pair, grid, ks, extra_k=chooser, workers=workers,
                          checkpoint=_checkpoint(out_dir, config, "table1", spec.name))
        curve = error_curve(pair, grid, votes)
        curves[spec.name] = curve_table(curve, config, row=spec.name)
        k_opt = argmin_k(curve)
        best = next(e for e in curve if e.k == k_opt)
        values = dict(row=spec.name, d=spec.d, mu=pair.mu, nu=pair.nu, correlation=spec.correlation,
                      bayes=bayes_risk(pair, region, grid), k_opt=k_opt, err_kopt=best.err, se_kopt=best.se,
                      n_sets=votes.n_sets, seed=config.seed, stream_start=0, config_hash=config.hash())
        if plans:
            probs = votes.extra_prob_x()
            for j, r in enumerate(config.r_values):
                err = plug_in_error(pair, grid, probs[:, j])
                tag = r_tag(r)
                values[f"mean_ktilde_{tag}"] = float(np.mean(votes.extra_ks[:, j]))
                values[f"err_ktilde_{tag}"] = err
                values[f"se_ktilde_{tag}"] = float(np.sqrt(err * (1 - err) / votes.n_sets))
        table.add(**values)
    return table, curves


def run_scaling(config: ExperimentConfig, *, out_dir=None, workers: int = 1) -> tuple[Table, Table, dict]:
    """Grid-optimal k at two intensity levels and its growth against the theoretical rate."""
    if len(config.scaling_levels) != 2:
        raise ValueError("scaling needs exactly two (mu, nu) levels in [scaling].levels")
    spec: RowSpec = config.rows[0]
    d = spec.d
    region = config.region(d)
    levels = Table("scaling-levels", ["level", "d", "mu", "nu", "k_opt", "err_kopt", "se_kopt", "theory_kopt",
                                      "n_sets", "seed", "stream_start", "config_hash"],
                   meta={"seed": config.seed, "config_hash": config.hash()})
    curves = {}
    kopts, theory_k = [], []
    for i, (mu, nu) in enumerate(config.scaling_levels):
        pair = spec.pair.with_intensities(mu, nu)
        grid = default_grid(pair, region, config.resolution(d), seed=config.seed)
        ks = row_k_grid(config, pair)
        log.info("scaling level %d (mu=%g, nu=%g): %d nodes, k <= %d", i, mu, nu, len(grid), ks[-1])
        votes = run_votes(config, pair, grid, ks, workers=workers,
                          checkpoint=_checkpoint(out_dir, config, "scaling", f"level{i}"))
        curve = error_curve(pair, grid, votes)
        curves[f"level{i}"] = curve_table(curve, config, level=i)
        k_opt = argmin_k(curve)
        best = next(e for e in curve if e.k == k_opt)
        k_theory = None
        if d <= 2:
            report = theory.expansion_for(pair, region, config.boundary_resolution)
            if not report.degenerate:
                k_theory = theory.kopt_continuous(report, nu, d)
        kopts.append(k_opt)
        theory_k.append(k_theory)
        levels.add(level=i, d=d, mu=mu, nu=nu, k_opt=k_opt, err_kopt=best.err, se_kopt=best.se,
                   theory_kopt=None if k_theory is None else int(np.floor(k_theory + 0.5)),
                   n_sets=votes.n_sets, seed=config.seed, stream_start=0, config_hash=config.hash())
    (mu1, nu1), (mu2, nu2) = config.scaling_levels
    factor = nu2 / nu1
    if abs(mu2 / mu1 - factor) > 1e-12 * factor:
        log.warning("mu and nu scale by different factors; the rate uses nu's factor %g", factor)
    ratio = Table("scaling-ratio", ["d", "scale_factor", "k_opt_1", "k_opt_2", "empirical_ratio",
                                    "theoretical_ratio", "theory_kopt_ratio", "n_sets", "seed", "config_hash"],
                  meta={"seed": config.seed, "config_hash": config.hash()})
    theory_ratio = None
    if None not in theory_k:
        theory_ratio = theory_k[1] / theory_k[0]
    ratio.add(d=d, scale_factor=factor, k_opt_1=kopts[0], k_opt_2=kopts[1],
              empirical_ratio=kopts[1] / kopts[0], theoretical_ratio=factor ** (4.0 / (d + 4)),
              theory_kopt_ratio=theory_ratio, n_sets=config.n_training_sets, seed=config.seed,
              config_hash=config.hash())
    return levels, ratio, curves


def run_bayes(config: ExperimentConfig) -> Table:
    table = Table("bayes", ["row", "d", "mu", "nu", "correlation", "bayes", "nodes", "config_hash"],
                  meta={"seed": config.seed, "config_hash": config.hash()})
    for spec in config.rows:
        region = config.region(spec.d)
        grid = default_grid(spec.pair, region, config.resolution(spec.d), seed=config.seed)
        table.add(row=spec.name, d=spec.d, mu=spec.pair.mu, nu=spec.pair.nu, correlation=spec.correlation,
                  bayes=bayes_risk(spec.pair, region, grid), nodes=len(grid), config_hash=config.hash())
    return table


def run_theory(config: ExperimentConfig) -> tuple[Table, dict[str, Table]]:
    """C1, C2 and the expansion's optimal k for every row with d <= 2."""
    table = Table("theory", ["row", "d", "mu", "nu", "boundary_nodes", "boundary_measure", "C1", "C2",
                             "degenerate", "theory_kopt", "config_hash"],
                  meta={"seed": config.seed, "config_hash": config.hash()})
    curves = {}
    for spec in config.rows:
        if spec.d > 2:
            log.warning("row %s: boundary extraction needs d <= 2, skipped", spec.name)
            continue
        pair = spec.pair
        boundary = theory.find_boundary(pair, config.region(spec.d), config.boundary_resolution)
        report = theory.expansion_constants(boundary)
        kopt = None if report.degenerate else theory.theoretical_kopt(report, pair.nu, spec.d)
        table.add(row=spec.name, d=spec.d, mu=pair.mu, nu=pair.nu, boundary_nodes=len(boundary),
                  boundary_measure=boundary.measure, C1=report.C1, C2=report.C2, degenerate=report.degenerate,
                  theory_kopt=kopt, config_hash=config.hash())
        ks = np.arange(config.k_start, config.k_stop + 1, config.k_step)
        regret = theory.regret_expansion(report, ks, pair.nu, spec.d)
        curve = Table("expansion-curve", ["k", "expansion_regret"],
                      meta={"row": spec.name, "config_hash": config.hash()})
        for k, v in zip(ks, np.atleast_1d(regret)):
            curve.add(k=int(k), expansion_regret=float(v))
        curves[spec.name] = curve
    return table, curves

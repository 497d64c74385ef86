"""Bayes risk by quadrature and Monte Carlo error rates of the k-NN rule.

The estimated error rate of a classifier on a region R is

    Err = mu/(mu+nu) * int_R f (1 - P_X) + nu/(mu+nu) * int_R g P_X,

where P_X(z) is the fraction of simulated training sets whose k-NN rule
assigns z to X.  One training set classifies every quadrature node and every
k of interest at once, so all nodes and all k share the same replicates.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .densities import PopulationPair, Region, posterior_psi
from .knn import vote_table
from .sampling import POISSON, TrainingSet, draw_training, split_stream

SIMPSON_NODES = 2001
MIDPOINT_SIDE = 251
TEST_POINTS = 4000
# stream index reserved for the Monte Carlo test points used when d >= 3
TEST_POINT_STREAM = 2 ** 32 + 1
MAX_REDRAWS = 1000


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Nodes and positive weights with sum_i w_i h(z_i) ~ int_R h."""

    region: Region
    nodes: np.ndarray
    weights: np.ndarray
    rule: str

    def __len__(self) -> int:
        return self.nodes.shape[0]


@dataclass(frozen=True)
class ErrorEstimate:
    err: float
    se: float
    n_replicates: int
    k: int

    @classmethod
    def from_err(cls, err: float, n_replicates: int, k: int) -> "ErrorEstimate":
        err = float(min(max(err, 0.0), 1.0))
        return cls(err, math.sqrt(err * (1.0 - err) / n_replicates), int(n_replicates), int(k))


def simpson_grid(region: Region, n_nodes: int = SIMPSON_NODES) -> QuadratureGrid:
    if region.d != 1:
        raise ValueError("Simpson rule is for d = 1")
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of nodes >= 3")
    lo, hi = region.lower[0], region.upper[0]
    x = np.linspace(lo, hi, n_nodes)
    h = (hi - lo) / (n_nodes - 1)
    w = np.full(n_nodes, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return QuadratureGrid(region, x.reshape(-1, 1), w * h / 3.0, "simpson")


def midpoint_grid(region: Region, side: int = MIDPOINT_SIDE) -> QuadratureGrid:
    if side < 1:
        raise ValueError("midpoint grid needs at least one cell per side")
    axes = []
    cell = 1.0
    for lo, hi in zip(region.lower, region.upper):
        step = (hi - lo) / side
        axes.append(lo + (np.arange(side) + 0.5) * step)
        cell *= step
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])
    return QuadratureGrid(region, nodes, np.full(nodes.shape[0], cell), "midpoint")


def _box_mass(spec, region: Region, rng: np.random.Generator, n: int) -> tuple[float, np.ndarray]:
    """Probability of the box under ``spec`` and n draws from spec truncated to it."""
    cov = spec.covariance
    diagonal = np.allclose(cov, np.diag(np.diag(cov)), rtol=0, atol=0)
    kept, tried = [], 0
    total = 0
    while total < n:
        batch = spec.sample(max(2 * (n - total), 64), rng)
        tried += batch.shape[0]
        inside = batch[region.contains(batch)]
        kept.append(inside)
        total += inside.shape[0]
        if tried > 1000 * n + 10_000 and total == 0:
            raise ValueError("region has negligible probability under the density")
    pts = np.concatenate(kept)[:n]
    if diagonal:
        sd = np.sqrt(np.diag(cov))
        mass = float(np.prod(norm.cdf((np.array(region.upper) - spec.mean) / sd)
                             - norm.cdf((np.array(region.lower) - spec.mean) / sd)))
    else:
        mass = total / tried
    return mass, pts


def montecarlo_grid(pair: PopulationPair, region: Region, n_points: int = TEST_POINTS,
                    rng: np.random.Generator | None = None) -> QuadratureGrid:
    """Random nodes drawn half from f and half from g truncated to the region.

    Weights are 1/(n m(z)) with m the balanced mixture of the two truncated
    densities, which makes sum_i w_i h(z_i) unbiased for int_R h.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n_f = n_points // 2
    n_g = n_points - n_f
    mass_f, pts_f = _box_mass(pair.f, region, rng, n_f)
    mass_g, pts_g = _box_mass(pair.g, region, rng, n_g)
    nodes = np.concatenate([pts_f, pts_g])
    m = 0.5 * (pair.f.pdf(nodes) / mass_f + pair.g.pdf(nodes) / mass_g)
    return QuadratureGrid(region, nodes, 1.0 / (nodes.shape[0] * m), "montecarlo")


def default_grid(pair: PopulationPair, region: Region, resolution: int | None = None,
                 seed: int = 0) -> QuadratureGrid:
    """Simpson for d = 1, tensor midpoint for d = 2, Monte Carlo test points beyond."""
    if region.d != pair.d:
        raise ValueError(f"region has dimension {region.d}, densities have {pair.d}")
    if pair.d == 1:
        return simpson_grid(region, resolution or SIMPSON_NODES)
    if pair.d == 2:
        return midpoint_grid(region, resolution or MIDPOINT_SIDE)
    return montecarlo_grid(pair, region, resolution or TEST_POINTS, split_stream(seed, TEST_POINT_STREAM))


def bayes_classify(pair: PopulationPair, z) -> str:
    return "X" if posterior_psi(pair, z) >= 0.5 else "Y"


def error_weights(pair: PopulationPair, grid: QuadratureGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-node weights (a, b) with Err = sum a (1 - P_X) + sum b P_X."""
    total = pair.mu + pair.nu
    a = grid.weights * pair.mu * pair.f.pdf(grid.nodes) / total
    b = grid.weights * pair.nu * pair.g.pdf(grid.nodes) / total
    return a, b


def plug_in_error(pair: PopulationPair, grid: QuadratureGrid, prob_x) -> float:
    a, b = error_weights(pair, grid)
    prob_x = np.asarray(prob_x, dtype=float)
    return float(np.sum(a * (1.0 - prob_x)) + np.sum(b * prob_x))


def bayes_risk(pair: PopulationPair, region: Region, grid: QuadratureGrid | None = None) -> float:
    """int_R min(mu f, nu g) / (mu + nu)."""
    if grid is None:
        grid = default_grid(pair, region)
    if grid.region != region:
        raise ValueError("grid does not cover the requested region")
    a, b = error_weights(pair, grid)
    return float(np.sum(np.minimum(a, b)))


# Monte Carlo ---------------------------------------------------------------------------------


@dataclass
class VoteCounts:
    """Number of replicates whose k-NN rule assigns each node to X.

    ``counts[i, j]`` is for node i and ``ks[j]``; ``extra[i, j]`` for the
    j-th per-replicate k returned by the ``extra_k`` callback, whose values are
    kept in ``extra_ks`` (one row per replicate).
    """

    ks: np.ndarray
    counts: np.ndarray
    n_sets: int
    extra: np.ndarray | None = None
    extra_ks: np.ndarray | None = None
    redraws: int = 0

    def __add__(self, other: "VoteCounts") -> "VoteCounts":
        if not np.array_equal(self.ks, other.ks):
            raise ValueError("cannot merge vote counts over different k grids")
        extra = extra_ks = None
        if self.extra is not None:
            extra = self.extra + other.extra
            extra_ks = np.concatenate([self.extra_ks, other.extra_ks])
        return VoteCounts(self.ks, self.counts + other.counts, self.n_sets + other.n_sets,
                          extra, extra_ks, self.redraws + other.redraws)

    def prob_x(self) -> np.ndarray:
        return self.counts / self.n_sets

    def extra_prob_x(self) -> np.ndarray:
        return self.extra / self.n_sets


def draw_replicate(pair: PopulationPair, seed: int, index: int, min_size: int, model: str = POISSON,
                   T: int | None = None) -> tuple[TrainingSet, int]:
    """Training set for replicate ``index``; redrawn on the same stream while smaller than min_size."""
    rng = split_stream(seed, index)
    for redraws in range(MAX_REDRAWS):
        ts = draw_training(pair, model, rng, T=T, seed_record=(int(seed), int(index)))
        if len(ts) >= min_size:
            return ts, redraws
    raise RuntimeError(f"replicate {index}: no training set with at least {min_size} points "
                       f"after {MAX_REDRAWS} draws; reduce the largest k")


def _vote_chunk(pair: PopulationPair, nodes: np.ndarray, ks: np.ndarray, seed: int, start: int, stop: int,
                model: str, T: int | None, extra_k: Callable | None) -> VoteCounts:
    counts = np.zeros((nodes.shape[0], ks.shape[0]), dtype=np.int64)
    extra = extra_ks = None
    redraws = 0
    kmax = int(ks.max())
    for r in range(start, stop):
        ts, n_redraw = draw_replicate(pair, seed, r, kmax, model, T)
        redraws += n_redraw
        wanted = ks
        if extra_k is not None:
            more = np.asarray(extra_k(ts, r), dtype=np.intp).reshape(-1)
            if extra is None:
                extra = np.zeros((nodes.shape[0], more.shape[0]), dtype=np.int64)
                extra_ks = np.empty((0, more.shape[0]), dtype=np.intp)
            extra_ks = np.vstack([extra_ks, more])
            wanted = np.concatenate([ks, more])
        table = vote_table(ts.points, ts.is_x, nodes, wanted)
        counts += table[:, :ks.shape[0]]
        if extra_k is not None:
            extra += table[:, ks.shape[0]:]
    return VoteCounts(ks, counts, stop - start, extra, extra_ks, redraws)


def simulate_votes(pair: PopulationPair, nodes, ks: Sequence[int], n_sets: int, seed: int, *,
                   model: str = POISSON, T: int | None = None, start: int = 0,
                   extra_k: Callable | None = None, workers: int = 1) -> VoteCounts:
    """Classify ``nodes`` with replicates ``start .. start + n_sets - 1``.

    Replicate r is a pure function of (seed, r), and counts are summed, so the
    result does not depend on ``workers``.
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, pair.d)
    ks = np.unique(np.asarray(ks, dtype=np.intp))
    if ks.size == 0 or ks[0] < 1:
        raise ValueError("ks must be a nonempty set of positive integers")
    if n_sets < 1:
        raise ValueError("n_sets must be positive")
    stop = start + n_sets
    if workers <= 1 or n_sets < 2:
        return _vote_chunk(pair, nodes, ks, seed, start, stop, model, T, extra_k)
    bounds = np.linspace(start, stop, min(workers, n_sets) * 4 + 1).astype(int)
    spans = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_vote_chunk, *zip(*[(pair, nodes, ks, seed, a, b, model, T, extra_k)
                                                   for a, b in spans])))
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total


def classification_prob_mc(pair: PopulationPair, z, k: int, n_sets: int, seed: int, *,
                           model: str = POISSON) -> float:
    """Fraction of n_sets simulated training sets whose k-NN rule assigns z to X."""
    votes = simulate_votes(pair, np.atleast_1d(np.asarray(z, dtype=float)), [k], n_sets, seed, model=model)
    return float(votes.prob_x()[0, 0])


def error_curve(pair: PopulationPair, grid: QuadratureGrid, votes: VoteCounts) -> list[ErrorEstimate]:
    a, b = error_weights(pair, grid)
    prob = votes.prob_x()
    errs = a.sum() + (b - a) @ prob
    return [ErrorEstimate.from_err(e, votes.n_sets, k) for e, k in zip(errs, votes.ks)]


def error_rate_mc(pair: PopulationPair, region: Region, k: int, n_sets: int,
                  grid: QuadratureGrid | None = None, seed: int = 0, *, model: str = POISSON,
                  workers: int = 1) -> ErrorEstimate:
    """Monte Carlo estimate of the k-NN error rate on the region."""
    if grid is None:
        grid = default_grid(pair, region, seed=seed)
    votes = simulate_votes(pair, grid.nodes, [k], n_sets, seed, model=model, workers=workers)
    return error_curve(pair, grid, votes)[0]


def argmin_k(curve: Sequence[ErrorEstimate]) -> int:
    """k with the smallest estimated error; the smallest such k on ties."""
    if not curve:
        raise ValueError("empty error curve")
    best = min(curve, key=lambda e: (e.err, e.k))
    return best.k


def grid_kopt(pair: PopulationPair, region: Region, k_grid: Sequence[int], n_sets: int,
              grid: QuadratureGrid | None = None, seed: int = 0, *, model: str = POISSON,
              workers: int = 1) -> tuple[int, list[ErrorEstimate]]:
    """Error-minimizing k over ``k_grid`` with every k evaluated on the same replicates."""
    if len(k_grid) == 0:
        raise ValueError("k_grid must be nonempty")
    if grid is None:
        grid = default_grid(pair, region, seed=seed)
    votes = simulate_votes(pair, grid.nodes, k_grid, n_sets, seed, model=model, workers=workers)
    curve = error_curve(pair, grid, votes)
    return argmin_k(curve), curve


def flat_region(curve: Sequence[ErrorEstimate]) -> list[int]:
    """All k whose estimated error is within one standard error of the minimum."""
    best = min(curve, key=lambda e: (e.err, e.k))
    return [e.k for e in curve if e.err <= best.err + best.se]


def max_safe_k(mean_total: float, sigmas: float = 4.0) -> int:
    """Largest k for which a Poisson(mean_total) sample is shorter than k only in the far tail."""
    return max(1, int(math.floor(mean_total - sigmas * math.sqrt(mean_total))))

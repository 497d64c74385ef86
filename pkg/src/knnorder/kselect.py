"""Bootstrap choice of the neighbor order k.

Resample pairs are drawn at a reduced intensity (fraction r of the original
sample), the error-minimizing k is found there, and it is then rescaled by
r ** (-4 / (d + 4)) to the size appropriate for the full sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .knn import vote_table
from .sampling import BINOMIAL, POISSON, sample_poisson_count, split_stream

INDEPENDENT = "independent"
OUT_OF_BAG = "out_of_bag"
MAX_RETRIES = 100
K_GRID_CAP = 512
K_GRID_FRACTION = 0.8


class DegenerateResample(RuntimeError):
    """No usable resample sizes were drawn within the retry budget."""


@dataclass(frozen=True)
class BootstrapPlan:
    r: float
    B: int = 100
    k_grid: tuple | None = None
    test_sampling: str = OUT_OF_BAG

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError(f"resampling fraction r must lie in (0, 1), got {self.r!r}")
        if int(self.B) != self.B or self.B < 1:
            raise ValueError(f"B must be a positive integer, got {self.B!r}")
        if self.k_grid is not None:
            grid = tuple(sorted({int(k) for k in self.k_grid}))
            if not grid or grid[0] < 1:
                raise ValueError("k_grid must hold positive integers")
            object.__setattr__(self, "k_grid", grid)
        if self.test_sampling not in (INDEPENDENT, OUT_OF_BAG):
            raise ValueError(f"unknown test sampling {self.test_sampling!r}")


@dataclass(frozen=True)
class SelectionResult:
    k_hat: int
    k_tilde: int
    error_curve: list = field(default_factory=list)
    r: float = 0.5
    B: int = 100
    model: str = POISSON
    seed: int = 0


def _integer_part(x: float) -> int:
    # guards r * M landing a hair below an integer, e.g. (2/3) * 3
    return int(math.floor(x + 1e-9))


def split_sizes(m_star: int, n_star: int, r: float) -> tuple[int, int]:
    """Training resample sizes [r M*], [r N*]."""
    return _integer_part(r * m_star), _integer_part(r * n_star)


def _usable(m_star, n_star, m1, n1, min_train):
    test = (m_star - m1) + (n_star - n1)
    return m1 >= 1 and n1 >= 1 and test >= 1 and m1 + n1 >= min_train


def resample_sizes_poisson(M: int, N: int, r: float, rng: np.random.Generator, *,
                           min_train: int = 1) -> tuple[int, int, int, int]:
    """(M*, N*, M1*, N1*) with M* ~ Poisson(M), N* ~ Poisson(N)."""
    if M < 1 or N < 1:
        raise ValueError("both samples must be nonempty")
    for _ in range(MAX_RETRIES):
        m_star = sample_poisson_count(M, rng)
        n_star = sample_poisson_count(N, rng)
        m1, n1 = split_sizes(m_star, n_star, r)
        if _usable(m_star, n_star, m1, n1, min_train):
            return m_star, n_star, m1, n1
    raise DegenerateResample(f"no usable Poisson resample sizes for M={M}, N={N}, r={r}")


def resample_sizes_binomial(M: int, N: int, r: float, rng: np.random.Generator, *,
                            min_train: int = 1) -> tuple[int, int, int, int]:
    """(M*, N*, M1*, N1*) with M* ~ Binomial(M + N, M / (M + N)) and N* = M + N - M*."""
    if M + N < 2:
        raise ValueError("need at least two points in total")
    total = M + N
    for _ in range(MAX_RETRIES):
        m_star = int(rng.binomial(total, M / total))
        n_star = total - m_star
        m1, n1 = split_sizes(m_star, n_star, r)
        if _usable(m_star, n_star, m1, n1, min_train):
            return m_star, n_star, m1, n1
    raise DegenerateResample(f"no usable Binomial resample sizes for M={M}, N={N}, r={r}")


_SIZE_DRAWS = {POISSON: resample_sizes_poisson, BINOMIAL: resample_sizes_binomial}


def default_k_grid(min_train: int) -> tuple:
    top = max(1, min(K_GRID_CAP, math.ceil(K_GRID_FRACTION * min_train)))
    return tuple(range(1, top + 1))


def _draw_indices(n: int, size: int, rng: np.random.Generator, exclude=None) -> np.ndarray:
    if exclude is not None:
        pool = np.setdiff1d(np.arange(n), exclude)
        if pool.size:
            return pool[rng.integers(0, pool.size, size)]
    return rng.integers(0, n, size)


def bootstrap_error_curve(X, Y, plan: BootstrapPlan, model: str = POISSON,
                          seed: int = 0) -> list[tuple[int, float]]:
    """Mean bootstrap error rate for every k in the plan's grid.

    Each of the B resample pairs uses its own stream ``split_stream(seed, b)``:
    sizes first, then training resamples of X and Y, then test resamples.

    Test resamples are drawn from the points that did not enter the training
    resample (``test_sampling="out_of_bag"``, the default).  With
    ``"independent"`` they are drawn from the full samples; on continuous data
    this lets exact copies of training points into the test set and drags the
    selected k towards 1.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    M, N = X.shape[0], Y.shape[0]
    if M < 1 or N < 1:
        raise ValueError("both samples must be nonempty")
    if X.shape[1] != Y.shape[1]:
        raise ValueError("X and Y must have the same dimension")
    if model not in _SIZE_DRAWS:
        raise ValueError(f"unknown sample-size model {model!r}")
    draw_sizes = _SIZE_DRAWS[model]
    min_train = max(plan.k_grid) if plan.k_grid else 1
    rngs = [split_stream(seed, b) for b in range(plan.B)]
    sizes = [draw_sizes(M, N, plan.r, rng, min_train=min_train) for rng in rngs]
    k_grid = plan.k_grid or default_k_grid(min(m1 + n1 for _, _, m1, n1 in sizes))
    ks = np.asarray(k_grid, dtype=np.intp)

    total_err = np.zeros(ks.shape[0])
    for rng, (m_star, n_star, m1, n1) in zip(rngs, sizes):
        xi = rng.integers(0, M, m1)
        yi = rng.integers(0, N, n1)
        oob = plan.test_sampling == OUT_OF_BAG
        xt = _draw_indices(M, m_star - m1, rng, xi if oob else None)
        yt = _draw_indices(N, n_star - n1, rng, yi if oob else None)
        train = np.concatenate([X[xi], Y[yi]])
        train_is_x = np.concatenate([np.ones(m1, bool), np.zeros(n1, bool)])
        test = np.concatenate([X[xt], Y[yt]])
        test_is_x = np.concatenate([np.ones(xt.size, bool), np.zeros(yt.size, bool)])
        says_x = vote_table(train, train_is_x, test, ks)
        total_err += np.count_nonzero(says_x != test_is_x[:, None], axis=0) / test.shape[0]
    mean_err = total_err / plan.B
    return [(int(k), float(e)) for k, e in zip(ks, mean_err)]


def select_k(curve: Sequence[tuple[int, float]]) -> int:
    """Minimizer of the mean error; the smallest k on ties."""
    if not curve:
        raise ValueError("empty error curve")
    return min(curve, key=lambda ke: (ke[1], ke[0]))[0]


def rescale_k(k_hat: int, r: float, d: int, T: int) -> int:
    """round(r ** (-4/(d+4)) * k_hat), clamped to [1, T - 1]."""
    if not 0 < r <= 1:
        raise ValueError(f"r must lie in (0, 1], got {r!r}")
    k = int(math.floor(r ** (-4.0 / (d + 4)) * k_hat + 0.5))
    return max(1, min(k, T - 1))


def choose_k(X, Y, plan: BootstrapPlan, model: str = POISSON, seed: int = 0) -> SelectionResult:
    """Full pipeline: resample, error curve, k_hat, rescaled k_tilde."""
    curve = bootstrap_error_curve(X, Y, plan, model, seed)
    X = np.asarray(X, dtype=float)
    d = 1 if X.ndim == 1 else X.shape[1]
    T = len(X) + len(Y)
    k_hat = select_k(curve)
    return SelectionResult(k_hat, rescale_k(k_hat, plan.r, d, T), curve, plan.r, plan.B, model, seed)

"""Training-set generators for the Poisson and Binomial sample-size models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densities import PopulationPair, posterior_psi

POISSON = "poisson"
BINOMIAL = "binomial"
MODELS = (POISSON, BINOMIAL)

# below this mean the inversion sampler is used, above it PTRS
INVERSION_CUTOFF = 30.0


def split_stream(master_seed: int, index: int, *path: int) -> np.random.Generator:
    """Independent, reproducible generator for ``(master_seed, index, *path)``."""
    if index < 0 or any(p < 0 for p in path):
        raise ValueError("stream indices must be nonnegative")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index), *map(int, path)))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(master_seed: int, index: int, *path: int) -> int:
    """A 64-bit integer seed for a child computation that takes a seed, not a generator."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index), *map(int, path)))
    return int(seq.generate_state(1, np.uint64)[0])


def _poisson_inversion(mean: float, rng: np.random.Generator) -> int:
    # sequential search of the CDF from 0
    u = rng.random()
    k = 0
    prob = math.exp(-mean)
    cdf = prob
    while u > cdf:
        k += 1
        prob *= mean / k
        cdf += prob
        if prob == 0.0 and k > mean:
            break
    return k


def _poisson_ptrs(mean: float, rng: np.random.Generator) -> int:
    # Hormann (1993), transformed rejection with squeeze
    slam = math.sqrt(mean)
    loglam = math.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2 * a / us + b) * u + mean + 0.43)
        if us >= 0.07 and v <= v_r:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
        rhs = -mean + k * loglam - math.lgamma(k + 1)
        if lhs <= rhs:
            return k


def sample_poisson_count(mean: float, rng: np.random.Generator) -> int:
    """One Poisson(mean) variate."""
    if not mean > 0:
        raise ValueError(f"Poisson mean must be positive, got {mean!r}")
    if mean < INVERSION_CUTOFF:
        return _poisson_inversion(mean, rng)
    return _poisson_ptrs(mean, rng)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Labeled sample; ``is_x[i]`` is True when point i carries mark X."""

    points: np.ndarray
    is_x: np.ndarray
    model: str = POISSON
    seed_record: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        lab = np.asarray(self.is_x, dtype=bool).reshape(-1)
        if pts.shape[0] != lab.shape[0]:
            raise ValueError("points and labels must have equal length")
        if self.model not in MODELS:
            raise ValueError(f"unknown sample-size model {self.model!r}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "is_x", lab)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def labels(self) -> list[str]:
        return ["X" if x else "Y" for x in self.is_x]

    @property
    def x_points(self) -> np.ndarray:
        return self.points[self.is_x]

    @property
    def y_points(self) -> np.ndarray:
        return self.points[~self.is_x]

    @classmethod
    def from_labels(cls, points, labels, **kwargs) -> "TrainingSet":
        labels = list(labels)
        bad = {lab for lab in labels if lab not in ("X", "Y")}
        if bad:
            raise ValueError(f"labels must be 'X' or 'Y', got {sorted(bad)}")
        return cls(points, np.array([lab == "X" for lab in labels], dtype=bool), **kwargs)


def _draw_marked(pair: PopulationPair, n: int, rng: np.random.Generator, scheme: str):
    if n == 0:
        return np.empty((0, pair.d)), np.empty(0, dtype=bool)
    from_f = rng.random(n) < pair.p
    pts = np.empty((n, pair.d))
    n_f = int(from_f.sum())
    pts[from_f] = pair.f.sample(n_f, rng)
    pts[~from_f] = pair.g.sample(n - n_f, rng)
    if scheme == "component":
        return pts, from_f
    if scheme != "psi":
        raise ValueError(f"unknown marking scheme {scheme!r}")
    marks = rng.random(n) < posterior_psi(pair, pts)
    return pts, marks


def draw_poisson_training(pair: PopulationPair, rng: np.random.Generator, *, scheme: str = "psi",
                          seed_record: tuple = ()) -> TrainingSet:
    """Poisson(mu + nu) points from the mixture density, each marked X with probability psi.

    ``scheme="component"`` instead labels each point by the component it was drawn
    from; the two schemes are equal in distribution.
    """
    n = sample_poisson_count(pair.mu + pair.nu, rng)
    pts, marks = _draw_marked(pair, n, rng, scheme)
    return TrainingSet(pts, marks, POISSON, seed_record)


def draw_binomial_training(pair: PopulationPair, T: int, rng: np.random.Generator, *,
                           scheme: str = "psi", seed_record: tuple = ()) -> TrainingSet:
    """Exactly T marked points; the Poisson model conditioned on its total count."""
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    pts, marks = _draw_marked(pair, int(T), rng, scheme)
    return TrainingSet(pts, marks, BINOMIAL, seed_record)


def draw_training(pair: PopulationPair, model: str, rng: np.random.Generator, *, T: int | None = None,
                  seed_record: tuple = ()) -> TrainingSet:
    if model == POISSON:
        return draw_poisson_training(pair, rng, seed_record=seed_record)
    if model == BINOMIAL:
        if T is None:
            T = round(pair.mu + pair.nu)
        return draw_binomial_training(pair, T, rng, seed_record=seed_record)
    raise ValueError(f"unknown sample-size model {model!r}")

"""Gaussian class densities and the two-population functions built from them.

Every function here accepts either a single point (shape ``(d,)``) or a batch
of points (shape ``(n, d)``); outputs follow the same convention.  All
derivatives are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _points(z, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if single:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got array of shape {np.shape(z)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr, single


def _unwrap(single: bool, *arrays):
    if single:
        arrays = tuple(a[0] for a in arrays)
    return arrays[0] if len(arrays) == 1 else arrays


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """A d-variate normal density N(mean, covariance).

    Construction fails on a non-symmetric or non positive-definite covariance;
    nothing is regularized.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    precision: np.ndarray = field(init=False, repr=False)
    log_norm: float = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.asarray(self.covariance, dtype=float).copy()
        d = mean.shape[0]
        if mean.ndim != 1 or d == 0:
            raise ValueError("mean must be a non-empty vector")
        if cov.size == d * d:
            cov = cov.reshape(d, d)
        else:
            raise ValueError(f"covariance must be {d}x{d}, got {cov.size} entries")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("mean and covariance must be finite")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise ValueError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        if np.any(np.diag(chol) <= 0):
            raise ValueError("covariance is not positive definite")
        eye = np.eye(d)
        chol_inv = np.linalg.solve(chol, eye)
        precision = chol_inv.T @ chol_inv
        precision = 0.5 * (precision + precision.T)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        for arr in (mean, cov, chol, precision):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "precision", precision)
        object.__setattr__(self, "log_norm", -0.5 * (d * np.log(2 * np.pi) + log_det))

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def isotropic(cls, mean, variance: float = 1.0) -> "GaussianSpec":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, variance * np.eye(mean.shape[0]))

    def pdf(self, z):
        pts, single = _points(z, self.d)
        return _unwrap(single, self._pdf(pts))

    def _pdf(self, pts: np.ndarray) -> np.ndarray:
        diff = pts - self.mean
        white = np.linalg.solve(self.chol, diff.T).T
        return np.exp(self.log_norm - 0.5 * np.sum(white * white, axis=1))

    def _derivs(self, pts: np.ndarray):
        value = self._pdf(pts)
        score = (pts - self.mean) @ self.precision  # = P (z - m), P symmetric
        grad = -value[:, None] * score
        hess = value[:, None, None] * (score[:, :, None] * score[:, None, :] - self.precision)
        return value, grad, hess

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.d)) @ self.chol.T

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.ravel().tolist()}


def eval_density(spec: GaussianSpec, z):
    """Density value, gradient and Hessian of ``spec`` at ``z``."""
    pts, single = _points(z, spec.d)
    return _unwrap(single, *spec._derivs(pts))


@dataclass(frozen=True, eq=False)
class PopulationPair:
    """Class densities f (type X) and g (type Y) with Poisson intensities mu, nu."""

    f: GaussianSpec
    g: GaussianSpec
    mu: float
    nu: float

    def __post_init__(self):
        if self.f.d != self.g.d:
            raise ValueError("f and g must have the same dimension")
        for name in ("mu", "nu"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def d(self) -> int:
        return self.f.d

    @property
    def p(self) -> float:
        """Prior probability of type X, mu / (mu + nu)."""
        return self.mu / (self.mu + self.nu)

    def with_intensities(self, mu: float, nu: float) -> "PopulationPair":
        return PopulationPair(self.f, self.g, mu, nu)

    def swapped(self) -> "PopulationPair":
        return PopulationPair(self.g, self.f, self.nu, self.mu)


@dataclass(frozen=True)
class Region:
    """Axis-aligned box [lower, upper]."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("region bounds must have equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError("region requires lower[j] < upper[j] for every j")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lower: float, upper: float, d: int) -> "Region":
        return cls((lower,) * d, (upper,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, z) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(z, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)


def posterior_psi(pair: PopulationPair, z):
    """Probability that a process point at z carries mark X: mu f / (mu f + nu g)."""
    pts, single = _points(z, pair.d)
    a = pair.mu * pair.f._pdf(pts)
    b = pair.nu * pair.g._pdf(pts)
    return _unwrap(single, a / (a + b))


def limit_rho(pair: PopulationPair, z):
    """rho = p f / (p f + (1-p) g) with its gradient and diagonal second derivatives."""
    pts, single = _points(z, pair.d)
    p = pair.p
    f, fd, fh = pair.f._derivs(pts)
    g, gd, gh = pair.g._derivs(pts)
    a, ad, add = p * f, p * fd, p * np.diagonal(fh, axis1=1, axis2=2)
    b, bd, bdd = (1 - p) * g, (1 - p) * gd, (1 - p) * np.diagonal(gh, axis1=1, axis2=2)
    den = a + b
    num = ad * b[:, None] - a[:, None] * bd
    value = a / den
    grad = num / den[:, None] ** 2
    num_d = add * b[:, None] - a[:, None] * bdd
    second = num_d / den[:, None] ** 2 - 2.0 * num * (ad + bd) / den[:, None] ** 3
    return _unwrap(single, value, grad, second)


def weighted_lambda(pair: PopulationPair, z):
    """lambda = p/(1-p) f + g and its gradient (limit of the local intensity ratio)."""
    pts, single = _points(z, pair.d)
    ratio = pair.p / (1 - pair.p)
    f, fd, _ = pair.f._derivs(pts)
    g, gd, _ = pair.g._derivs(pts)
    return _unwrap(single, ratio * f + g, ratio * fd + gd)


def mixture_density(pair: PopulationPair, z):
    """Sampling density of the pooled process, (mu f + nu g) / (mu + nu)."""
    pts, single = _points(z, pair.d)
    value = (pair.mu * pair.f._pdf(pts) + pair.nu * pair.g._pdf(pts)) / (pair.mu + pair.nu)
    return _unwrap(single, value)

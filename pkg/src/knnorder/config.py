"""Experiment configuration: TOML loader, validation and built-in presets.

Schema (all sections optional except ``rows``)::

    name = "table1-desk"
    seed = 20080901
    model = "poisson"               # or "binomial"
    n_training_sets = 100

    [region]                        # scalars expand to a cube
    lower = -2.5
    upper = 2.5

    [quadrature]
    resolution_1d = 2001            # Simpson nodes, odd
    resolution_2d = 251             # midpoint cells per side
    test_points = 4000              # Monte Carlo nodes for d >= 3
    boundary_resolution = 401       # grid for locating rho = 1/2

    [k_grid]                        # inclusive range, capped per row
    start = 1
    stop = 250
    step = 1

    [bootstrap]
    r = ["1/3", "1/2", "2/3"]       # fractions or floats
    B = 100
    test_sampling = "out_of_bag"    # or "independent"

    [scaling]
    levels = [[100, 200], [400, 800]]

    [[rows]]
    name = "d1-100-100"
    mu = 100
    nu = 100
    f_mean = [-0.5]
    g_mean = [0.5]
    covariance = [1.0]              # row-major; or f_covariance / g_covariance
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .densities import GaussianSpec, PopulationPair, Region
from .kselect import INDEPENDENT, OUT_OF_BAG
from .sampling import MODELS, POISSON

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PRESETS = ("table1-paper", "table1-desk", "scaling-d2", "scaling-d16")
FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


@dataclass(frozen=True)
class RowSpec:
    name: str
    pair: PopulationPair

    @property
    def d(self) -> int:
        return self.pair.d

    @property
    def correlation(self) -> float | None:
        if self.d < 2:
            return None
        cov = self.pair.f.covariance
        return float(cov[0, 1] / math.sqrt(cov[0, 0] * cov[1, 1]))


@dataclass(frozen=True)
class ExperimentConfig:
    rows: tuple
    name: str = "experiment"
    seed: int = 0
    model: str = POISSON
    n_training_sets: int = 500
    region_lower: float = -2.5
    region_upper: float = 2.5
    resolution_1d: int = 2001
    resolution_2d: int = 251
    test_points: int = 4000
    boundary_resolution: int = 401
    k_start: int = 1
    k_stop: int = 250
    k_step: int = 1
    r_values: tuple = (Fraction(1, 3), Fraction(1, 2), Fraction(2, 3))
    B: int = 100
    test_sampling: str = OUT_OF_BAG
    scaling_levels: tuple = ()
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def region(self, d: int) -> Region:
        return Region.cube(self.region_lower, self.region_upper, d)

    def resolution(self, d: int) -> int:
        if d == 1:
            return self.resolution_1d
        if d == 2:
            return self.resolution_2d
        return self.test_points

    def k_grid(self) -> list[int]:
        return list(range(self.k_start, self.k_stop + 1, self.k_step))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = dict(self.raw)
        raw["seed"] = int(seed)
        return from_dict(raw)

    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _get(section: dict, key: str, prefix: str, kind, default=None, required=False):
    name = f"{prefix}{key}"
    if key not in section:
        if required:
            raise ConfigError(name, "missing required field")
        return default
    value = section[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(name, f"expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(name, f"expected a number, got {value!r}")
        value = float(value)
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(name, f"expected a string, got {value!r}")
    elif kind is list:
        if not isinstance(value, list):
            raise ConfigError(name, f"expected a list, got {value!r}")
    return value


def _fraction(value, name: str) -> Fraction:
    try:
        frac = Fraction(value) if isinstance(value, str) else Fraction(value).limit_denominator(10 ** 6)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ConfigError(name, f"not a fraction: {value!r}") from None
    if not 0 < frac < 1:
        raise ConfigError(name, f"resampling fraction must lie in (0, 1), got {value!r}")
    return frac


def _vector(value, name: str) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(name, "expected a nonempty list of numbers")
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(name, "expected numbers") from None
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigError(name, "expected a flat list of finite numbers")
    return arr


def _row(raw: dict, i: int) -> RowSpec:
    prefix = f"rows[{i}]."
    if not isinstance(raw, dict):
        raise ConfigError(f"rows[{i}]", "expected a table")
    mu = _get(raw, "mu", prefix, float, required=True)
    nu = _get(raw, "nu", prefix, float, required=True)
    for key, val in (("mu", mu), ("nu", nu)):
        if not (val > 0 and math.isfinite(val)):
            raise ConfigError(prefix + key, f"must be a positive number, got {val!r}")
    f_mean = _vector(_get(raw, "f_mean", prefix, None, required=True), prefix + "f_mean")
    g_mean = _vector(_get(raw, "g_mean", prefix, None, required=True), prefix + "g_mean")
    d = f_mean.shape[0]
    if g_mean.shape[0] != d:
        raise ConfigError(prefix + "g_mean", f"length {g_mean.shape[0]} differs from f_mean length {d}")
    if "d" in raw and _get(raw, "d", prefix, int) != d:
        raise ConfigError(prefix + "d", f"does not match mean length {d}")
    shared = raw.get("covariance")
    covs = []
    for which in ("f", "g"):
        key = f"{which}_covariance"
        value = raw.get(key, shared)
        name = prefix + (key if key in raw else "covariance")
        if value is None:
            cov = np.eye(d)
        else:
            flat = _vector(value, name)
            if flat.shape[0] != d * d:
                raise ConfigError(name, f"expected {d * d} entries (row-major {d}x{d}), got {flat.shape[0]}")
            cov = flat.reshape(d, d)
        covs.append(cov)
    try:
        f = GaussianSpec(f_mean, covs[0])
        g = GaussianSpec(g_mean, covs[1])
    except ValueError as exc:
        raise ConfigError(prefix + "covariance", str(exc)) from None
    name = raw.get("name", f"row{i}")
    return RowSpec(str(name), PopulationPair(f, g, mu, nu))


def from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed configuration mapping; every check runs before any computation."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a table")
    rows_raw = _get(raw, "rows", "", list, required=True)
    if not rows_raw:
        raise ConfigError("rows", "at least one row is required")
    rows = tuple(_row(r, i) for i, r in enumerate(rows_raw))

    seed = _get(raw, "seed", "", int, default=0)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    model = _get(raw, "model", "", str, default=POISSON)
    if model not in MODELS:
        raise ConfigError("model", f"must be one of {MODELS}, got {model!r}")
    n_sets = _get(raw, "n_training_sets", "", int, default=500)
    if n_sets < 1:
        raise ConfigError("n_training_sets", "must be positive")

    region = raw.get("region", {})
    lower = _get(region, "lower", "region.", float, default=-2.5)
    upper = _get(region, "upper", "region.", float, default=2.5)
    if not lower < upper:
        raise ConfigError("region", "lower must be smaller than upper")

    quad = raw.get("quadrature", {})
    res1 = _get(quad, "resolution_1d", "quadrature.", int, default=2001)
    if res1 < 3 or res1 % 2 == 0:
        raise ConfigError("quadrature.resolution_1d", "Simpson rule needs an odd node count >= 3")
    res2 = _get(quad, "resolution_2d", "quadrature.", int, default=251)
    test_points = _get(quad, "test_points", "quadrature.", int, default=4000)
    bres = _get(quad, "boundary_resolution", "quadrature.", int, default=401)
    for key, val in (("resolution_2d", res2), ("test_points", test_points), ("boundary_resolution", bres)):
        if val < 2:
            raise ConfigError("quadrature." + key, "must be at least 2")

    kg = raw.get("k_grid", {})
    k_start = _get(kg, "start", "k_grid.", int, default=1)
    k_stop = _get(kg, "stop", "k_grid.", int, default=250)
    k_step = _get(kg, "step", "k_grid.", int, default=1)
    if k_start < 1 or k_stop < k_start or k_step < 1:
        raise ConfigError("k_grid", "need 1 <= start <= stop and step >= 1")

    boot = raw.get("bootstrap", {})
    r_raw = _get(boot, "r", "bootstrap.", list, default=["1/3", "1/2", "2/3"])
    r_values = tuple(_fraction(v, f"bootstrap.r[{i}]") for i, v in enumerate(r_raw))
    B = _get(boot, "B", "bootstrap.", int, default=100)
    if B < 1:
        raise ConfigError("bootstrap.B", "must be positive")
    test_sampling = _get(boot, "test_sampling", "bootstrap.", str, default=OUT_OF_BAG)
    if test_sampling not in (OUT_OF_BAG, INDEPENDENT):
        raise ConfigError("bootstrap.test_sampling", f"must be {OUT_OF_BAG!r} or {INDEPENDENT!r}")

    levels = ()
    if "scaling" in raw:
        lv = _get(raw["scaling"], "levels", "scaling.", list, required=True)
        parsed = []
        for i, level in enumerate(lv):
            name = f"scaling.levels[{i}]"
            if not (isinstance(level, list) and len(level) == 2):
                raise ConfigError(name, "expected [mu, nu]")
            mu, nu = (float(v) for v in level)
            if not (mu > 0 and nu > 0):
                raise ConfigError(name, "intensities must be positive")
            parsed.append((mu, nu))
        if len(parsed) != 2:
            raise ConfigError("scaling.levels", "exactly two (mu, nu) levels are required")
        levels = tuple(parsed)

    return ExperimentConfig(
        rows=rows, name=str(raw.get("name", "experiment")), seed=seed, model=model,
        n_training_sets=n_sets, region_lower=lower, region_upper=upper,
        resolution_1d=res1, resolution_2d=res2, test_points=test_points, boundary_resolution=bres,
        k_start=k_start, k_stop=k_stop, k_step=k_step, r_values=r_values, B=B,
        test_sampling=test_sampling, scaling_levels=levels, raw=raw,
    )


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return from_dict(raw)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("knnorder.presets").joinpath(f"{name}.toml").read_text()
    return loads(text)

"""Decision-boundary geometry and the leading terms of the k-NN regret expansion.

    regret(k) ~ C1 / k + C2 (k / nu) ** (4 / d)

C1 and C2 are integrals over the limiting Bayes boundary S = {rho = 1/2}.
Boundary extraction is implemented for d = 1 (isolated roots) and d = 2
(polyline from marching squares); local geometry works in any dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densities import PopulationPair, Region, limit_rho, weighted_lambda

BISECTION_TOL = 1e-10
NEWTON_STEPS = 50
DEGENERACY_RATIO = 1e-10


class EmptyBoundary(ValueError):
    pass


class ExpansionDegenerate(ValueError):
    """C2 vanishes, so the regret expansion has no finite minimizer."""


class TangentialCrossing(ValueError):
    pass


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(1 + d / 2)


def ball_second_moment(d: int) -> float:
    """int over the unit d-ball of |v|^2 dv, = d a_d / (d + 2)."""
    return d * unit_ball_volume(d) / (d + 2)


@dataclass(frozen=True)
class LocalGeometry:
    h: float
    rho_dot: np.ndarray
    psi1: float
    a: float
    alpha: float


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Boundary nodes with (d-1)-dimensional quadrature weights and per-node geometry."""

    nodes: np.ndarray
    weights: np.ndarray
    h: np.ndarray
    rho_dot: np.ndarray
    psi1: np.ndarray
    a: np.ndarray
    alpha: np.ndarray

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class ExpansionReport:
    C1: float
    C2: float
    a_d: float
    d: int
    degenerate: bool


def _geometry(pair: PopulationPair, pts: np.ndarray, tol: float = 1e-6):
    p, d = pair.p, pair.d
    rho, rho_dot, rho_jj = limit_rho(pair, pts)
    if np.any(np.abs(rho - 0.5) > tol):
        raise ValueError("point is not on the boundary rho = 1/2")
    speed = np.linalg.norm(rho_dot, axis=1)
    if np.any(speed < 1e-8):
        raise TangentialCrossing("densities meet tangentially: |grad rho| < 1e-8")
    f, fd, _ = pair.f._derivs(pts)
    _, gd, _ = pair.g._derivs(pts)
    h = p * f
    slope = p * fd - (1 - p) * gd
    a = np.linalg.norm(slope, axis=1)
    psi1 = np.sum(slope * rho_dot, axis=1) / speed
    lam, lam_dot = weighted_lambda(pair, pts)
    a_d = unit_ball_volume(d)
    drift = np.sum(rho_dot * lam_dot + 0.5 * rho_jj * lam[:, None], axis=1)
    alpha = (a_d * lam) ** (-1 - 2 / d) / d * drift * ball_second_moment(d)
    return h, rho_dot, psi1, a, alpha


def local_geometry(pair: PopulationPair, z0) -> LocalGeometry:
    """h, grad rho, Psi1, a and alpha at a boundary point."""
    pts = np.asarray(z0, dtype=float).reshape(1, pair.d)
    h, rho_dot, psi1, a, alpha = _geometry(pair, pts)
    return LocalGeometry(float(h[0]), rho_dot[0], float(psi1[0]), float(a[0]), float(alpha[0]))


def _rho_gap(pair: PopulationPair, pts: np.ndarray) -> np.ndarray:
    return limit_rho(pair, pts)[0] - 0.5


def _bisect(pair: PopulationPair, lo: float, hi: float) -> float:
    f_lo = _rho_gap(pair, np.array([[lo]]))[0]
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        f_mid = _rho_gap(pair, np.array([[mid]]))[0]
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _roots_1d(pair: PopulationPair, region: Region, resolution: int) -> np.ndarray:
    x = np.linspace(region.lower[0], region.upper[0], max(resolution, 2))
    s = _rho_gap(pair, x.reshape(-1, 1))
    roots = list(x[s == 0.0])
    for i in range(len(x) - 1):
        if s[i] != 0.0 and s[i + 1] != 0.0 and (s[i] > 0) != (s[i + 1] > 0):
            roots.append(_bisect(pair, x[i], x[i + 1]))
    return np.sort(np.array(roots))


def _project(pair: PopulationPair, pts: np.ndarray) -> np.ndarray:
    """Newton steps along grad rho onto rho = 1/2."""
    pts = pts.copy()
    for _ in range(NEWTON_STEPS):
        rho, grad, _ = limit_rho(pair, pts)
        gap = rho - 0.5
        if np.all(np.abs(gap) < 1e-13):
            break
        pts -= (gap / np.sum(grad * grad, axis=1))[:, None] * grad
    return pts


def marching_squares(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Zero-level segments of ``values[i, j]`` sampled at (xs[i], ys[j]).

    Returns an (m, 2, 2) array of segment endpoints, linearly interpolated on
    cell edges.  Saddle cells are disambiguated by the mean of the corners.
    """
    pos = values >= 0
    segments = []

    def crossing(i0, j0, i1, j1):
        v0, v1 = values[i0, j0], values[i1, j1]
        t = v0 / (v0 - v1)
        return (xs[i0] + t * (xs[i1] - xs[i0]), ys[j0] + t * (ys[j1] - ys[j0]))

    nx, ny = values.shape
    for i in range(nx - 1):
        row = pos[i:i + 2]
        mixed = ~(row[0, :-1] == row[0, 1:]) | ~(row[1, :-1] == row[1, 1:]) | ~(row[0, :-1] == row[1, :-1])
        for j in np.nonzero(mixed)[0]:
            # corners counter-clockwise: (i,j) (i+1,j) (i+1,j+1) (i,j+1)
            corners = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))
            edges = []
            for e in range(4):
                a, b = corners[e], corners[(e + 1) % 4]
                if pos[a] != pos[b]:
                    edges.append(crossing(*a, *b))
            if len(edges) == 2:
                segments.append(edges)
            elif len(edges) == 4:
                center = values[i:i + 2, j:j + 2].mean() >= 0
                # edges are ordered bottom, right, top, left; pair them so that
                # the segments separate the corners that differ from the center
                if center == pos[i, j]:
                    segments.append([edges[0], edges[1]])
                    segments.append([edges[2], edges[3]])
                else:
                    segments.append([edges[3], edges[0]])
                    segments.append([edges[1], edges[2]])
    return np.asarray(segments, dtype=float).reshape(-1, 2, 2)


def find_boundary(pair: PopulationPair, region: Region, resolution: int = 401) -> BoundarySet:
    """Discretize S within the region and attach the local geometry to each node."""
    if region.d != pair.d:
        raise ValueError(f"region has dimension {region.d}, densities have {pair.d}")
    if pair.d == 1:
        nodes = _roots_1d(pair, region, resolution).reshape(-1, 1)
        weights = np.ones(nodes.shape[0])
    elif pair.d == 2:
        xs = np.linspace(region.lower[0], region.upper[0], resolution)
        ys = np.linspace(region.lower[1], region.upper[1], resolution)
        mesh = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        values = _rho_gap(pair, mesh).reshape(resolution, resolution)
        segs = marching_squares(values, xs, ys)
        weights = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=1)
        keep = weights > 0
        segs, weights = segs[keep], weights[keep]
        nodes = _project(pair, segs.mean(axis=1)) if len(segs) else np.empty((0, 2))
    else:
        raise NotImplementedError("boundary extraction is available for d = 1 and d = 2 only")
    if nodes.shape[0] == 0:
        raise EmptyBoundary("rho = 1/2 does not cross the region")
    h, rho_dot, psi1, a, alpha = _geometry(pair, nodes, tol=1e-8)
    return BoundarySet(nodes, weights, h, rho_dot, psi1, a, alpha)


def expansion_constants(boundary: BoundarySet) -> ExpansionReport:
    """C1 = 1/2 int_S h/|grad rho|,  C2 = 2 int_S (h/|grad rho|) alpha^2."""
    if len(boundary) == 0:
        raise EmptyBoundary("boundary has no nodes")
    ratio = boundary.h / np.linalg.norm(boundary.rho_dot, axis=1)
    c1 = 0.5 * float(np.sum(boundary.weights * ratio))
    c2 = 2.0 * float(np.sum(boundary.weights * ratio * boundary.alpha ** 2))
    d = boundary.d
    return ExpansionReport(c1, c2, unit_ball_volume(d), d, c2 < DEGENERACY_RATIO * max(c1, 1.0))


def regret_expansion(report: ExpansionReport, k, nu: float, d: int):
    """Leading-order regret C1/k + C2 (k/nu)^(4/d); vectorized over k."""
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 1) or not nu > 0:
        raise ValueError("need k >= 1 and nu > 0")
    out = report.C1 / k_arr + report.C2 * (k_arr / nu) ** (4.0 / d)
    return float(out) if out.ndim == 0 else out


def kopt_continuous(report: ExpansionReport, nu: float, d: int) -> float:
    """Stationary point (d C1 nu^(4/d) / (4 C2)) ** (d / (d + 4)) of the expansion."""
    if report.degenerate:
        raise ExpansionDegenerate("C2 is zero: the expansion has no finite optimal k")
    return (d * report.C1 * nu ** (4.0 / d) / (4.0 * report.C2)) ** (d / (d + 4.0))


def theoretical_kopt(report: ExpansionReport, nu: float, d: int) -> int:
    return max(1, int(math.floor(kopt_continuous(report, nu, d) + 0.5)))


def expansion_for(pair: PopulationPair, region: Region, resolution: int = 401) -> ExpansionReport:
    return expansion_constants(find_boundary(pair, region, resolution))

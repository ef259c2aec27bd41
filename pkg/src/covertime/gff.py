"""Discrete Gaussian free field on a wired domain.

The field has covariance ``C = G / 2`` where ``G`` is the Green matrix of the
walk at the chosen rate; with rate 1 this is the usual DGFF normalization
divided by four, with the retuned rate it is ``pi`` times the unit-rate field.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from . import _rng
from .exact import GreenMatrix, rate_label
from .lattice import DiscreteMeasure, WiredGraph, ball, box

SQRT_PI = math.sqrt(math.pi)
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Lower Cholesky factor ``L`` with ``L @ L.T = G / 2``."""

    graph: WiredGraph
    rate: float
    covariance: np.ndarray
    lower: np.ndarray

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    @property
    def tag(self) -> str:
        return f"half-green/rate={rate_label(self.rate)}"

    def reconstruction_error(self) -> float:
        """Relative Frobenius error of ``L L^T`` against the covariance."""
        R = self.lower @ self.lower.T - self.covariance
        return float(np.linalg.norm(R) / np.linalg.norm(self.covariance))


def covariance_factor(G: GreenMatrix) -> CovarianceFactor:
    C = 0.5 * G.values
    try:
        L = scipy.linalg.cholesky(C, lower=True)
    except np.linalg.LinAlgError as err:
        raise ValueError("covariance is not positive definite") from err
    return CovarianceFactor(graph=G.graph, rate=G.rate, covariance=C, lower=L)


@dataclass(frozen=True, eq=False)
class GaussianFieldSample:
    graph: WiredGraph
    values: np.ndarray
    normalization: str = "half-green/rate=1"
    average: float = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.graph.size,):
            raise ValueError("one value per interior vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "average", float(v.mean()))

    def to_csv(self, path) -> Path:
        path = Path(path)
        xy = self.graph.coords
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for (a, b), val in zip(xy, self.values):
                w.writerow([int(a), int(b), repr(float(val))])
        return path


def sample_dgff(factor: CovarianceFactor, seed: int, replica: int = 0, stream: int = _rng.FIELD) -> GaussianFieldSample:
    """One field ``L z``; the normals are keyed by ``(seed, replica)``."""
    z = _rng.replica_rng(seed, replica, stream).standard_normal(factor.graph.size)
    return GaussianFieldSample(factor.graph, factor.lower @ z, factor.tag)


def sample_dgff_batch(factor: CovarianceFactor, seed: int, replicas, stream: int = _rng.FIELD) -> np.ndarray:
    """Rows equal ``sample_dgff(factor, seed, r).values`` for ``r`` in ``replicas``."""
    replicas = list(replicas)
    V = factor.graph.size
    Z = np.empty((len(replicas), V))
    for i, r in enumerate(replicas):
        Z[i] = _rng.replica_rng(seed, r, stream).standard_normal(V)
    return Z @ factor.lower.T


def psi_field(G: GreenMatrix) -> np.ndarray:
    """Profile ``psi`` with ``E[h | hbar] = psi * hbar``; averages to one."""
    V = G.values.shape[0]
    col = G.values.sum(axis=0) / V
    total = G.values.sum() / V**2
    return col / total


def zero_average_decompose(h, psi: np.ndarray) -> tuple[float, np.ndarray]:
    """Split ``h = psi * hbar + hhat`` with ``hhat`` of zero mean."""
    values = h.values if isinstance(h, GaussianFieldSample) else np.asarray(h, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != values.shape:
        raise ValueError("psi and field live on different graphs")
    hbar = float(values.mean())
    return hbar, values - psi * hbar


# ---------------------------------------------------------------------------
# centering sequences

CENTERINGS = ("intro-mN", "intro-cover", "retuned-mn", "retuned-cover")


def eval_centering(arg: float, convention: str) -> float:
    """Closed-form centering; ``arg`` is ``N`` for intro-* and ``n`` for retuned-*.

    ``intro-cover`` and ``retuned-cover`` return square roots of the cover
    ∂-time; ``retuned-mn`` returns ``sqrt(t_n^A)``.
    """
    if not arg > 1:
        raise ValueError("centering needs an argument > 1")
    L = math.log(arg)
    if convention == "intro-mN":
        return (L - 0.375 * math.log(L)) / SQRT_PI
    if convention == "intro-cover":
        return (L - 0.25 * math.log(L)) / SQRT_PI
    if convention == "retuned-mn":
        return SQRT2 * arg - 0.75 / SQRT2 * L
    if convention == "retuned-cover":
        return SQRT2 * arg - 0.5 / SQRT2 * L
    raise ValueError(f"unknown centering convention {convention!r}")


def phase_a_time(n: float) -> float:
    return eval_centering(n, "retuned-mn") ** 2


def phase_b_time(n: float) -> float:
    if not n > 1:
        raise ValueError("phase B time needs n > 1")
    return 0.5 * n * math.log(n)


def clustering_scale(n: float, eta0: float = 0.1) -> float:
    return n ** (0.5 - eta0)


# ---------------------------------------------------------------------------
# extremes, level sets, LQG proxy


@dataclass(frozen=True)
class ExtremalPoint:
    vertex: tuple[int, int]
    position: tuple[float, float]
    depth: float
    patch: dict

    def to_json(self) -> str:
        patch = {f"{a},{b}": v for (a, b), v in self.patch.items()}
        return json.dumps({"pos": list(self.position), "depth": self.depth, "patch": patch})


def _grid(graph: WiredGraph, values: np.ndarray, pad: int, fill: float):
    xy = graph.coords
    lo = xy.min(axis=0) - pad
    hi = xy.max(axis=0) + pad
    grid = np.full(tuple(hi - lo + 1), fill)
    grid[xy[:, 0] - lo[0], xy[:, 1] - lo[1]] = values
    return grid, xy - lo


def extremal_process(h, r: float, K: float = math.log(4), centering: float = 0.0) -> list[ExtremalPoint]:
    """``r``-local minima of ``h`` over ``B(x;r)`` restricted to the domain.

    A vertex qualifies when no vertex of its ball is lower and no
    lexicographically smaller vertex of its ball ties it.
    """
    if r < 0 or K < 0:
        raise ValueError("r and K must be nonnegative")
    g = h.graph
    vals = h.values
    offs = ball((0, 0), r)
    R = int(np.abs(offs).max())
    grid, loc = _grid(g, vals, R, np.inf)
    hx = vals
    ok = np.ones(len(vals), dtype=bool)
    for dx, dy in offs:
        if dx == 0 and dy == 0:
            continue
        other = grid[loc[:, 0] + dx, loc[:, 1] + dy]
        smaller = dx < 0 or (dx == 0 and dy < 0)
        ok &= (hx < other) if smaller else (hx <= other)
    N = max(g.domain.N, 1)
    poffs = box((0, 0), K)
    S = int(np.abs(poffs).max())
    pgrid, ploc = _grid(g, vals, S, np.nan)
    out = []
    for i in np.flatnonzero(ok):
        a, b = int(g.coords[i, 0]), int(g.coords[i, 1])
        patch = {}
        for dx, dy in poffs:
            v = pgrid[ploc[i, 0] + dx, ploc[i, 1] + dy]
            if not np.isnan(v):
                patch[(int(dx), int(dy))] = float(v - vals[i])
        out.append(ExtremalPoint((a, b), (a / N, b / N), float(vals[i] + centering), patch))
    return out


def extremal_to_jsonl(points, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for p in points:
            fh.write(p.to_json() + "\n")
    return path


def level_set(f, u: float, bulk) -> np.ndarray:
    """Ids ``x`` in ``bulk`` with ``f(x)^2 <= u``."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    values = f.values if isinstance(f, GaussianFieldSample) else np.asarray(f, dtype=float)
    bulk = np.asarray(bulk, dtype=np.int64)
    return bulk[values[bulk] ** 2 <= u]


def lqg_weights(values: np.ndarray, alpha: float, variances: np.ndarray) -> np.ndarray:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    values = np.asarray(values, dtype=float)
    variances = np.asarray(variances, dtype=float)
    pre = np.maximum(0.0, alpha * variances - values)
    return pre * np.exp(alpha * values - 0.5 * alpha**2 * variances)


def lqg_proxy_measure(h, alpha: float, variances) -> DiscreteMeasure:
    """Derivative-martingale style weights at ``e^{-n} x``, clamped at zero."""
    g = h.graph
    w = lqg_weights(h.values, alpha, variances)
    return DiscreteMeasure(g.coords * math.exp(-g.domain.n), w)

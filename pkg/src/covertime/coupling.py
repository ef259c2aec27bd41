"""Monte Carlo check of the generalized second Ray-Knight theorem.

With ``L_t`` the local times at ∂-time ``t`` and ``h, h'`` independent fields
of covariance ``G / 2`` at the walk's rate, ``L_t + h^2`` and
``(h' + sqrt(t))^2`` have the same law.  We compare marginals at probe
vertices and three fixed linear functionals.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _rng
from .exact import GreenMatrix, green_matrix, resolve_rate
from .gff import covariance_factor, sample_dgff_batch
from .lattice import WiredGraph
from .stats import ks_two_sample
from .walk import WalkConfig, boundary_time_batch

MIN_REPLICAS = 1000


class ConfigurationError(ValueError):
    pass


@dataclass
class IsomorphismReport:
    rate: float
    t: float
    replicas: int
    seed: int
    probes: list
    ks_statistic: list
    ks_pvalue: list
    mean_residual: list
    local_time_residual: list
    functionals: dict = field(default_factory=dict)

    def failing_probes(self, alpha: float = 0.01) -> list:
        return [p for p, pv in zip(self.probes, self.ks_pvalue) if pv <= alpha]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def weight_vectors(g: WiredGraph) -> dict[str, np.ndarray]:
    """Uniform, center indicator and checkerboard weights on the interior."""
    xy = g.coords.astype(float)
    V = g.size
    c = xy.mean(axis=0)
    center = np.zeros(V)
    center[int(np.argmin(((xy - c) ** 2).sum(axis=1)))] = 1.0
    checker = np.where((g.coords.sum(axis=1) % 2) == 0, 1.0, -1.0)
    return {"uniform": np.full(V, 1.0 / V), "center": center, "checkerboard": checker}


def _standard_error(a: np.ndarray) -> float:
    return float(a.std(ddof=1) / math.sqrt(len(a)))


def verify_ray_knight(graph: WiredGraph, rate, t: float, probes, replicas: int, seed: int, green: GreenMatrix | None = None, chunk: int = 20000) -> IsomorphismReport:
    rate = resolve_rate(rate)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if replicas < MIN_REPLICAS:
        raise ValueError(f"need at least {MIN_REPLICAS} replicas")
    probes = [int(p) for p in probes]
    if any(not 0 <= p < graph.size for p in probes):
        raise ValueError("probes must be interior vertex ids")
    if green is None:
        green = green_matrix(graph, rate)
    elif green.graph is not graph or abs(green.rate - rate) > 1e-15:
        raise ConfigurationError("Green matrix was built for a different graph or rate")
    factor = covariance_factor(green)
    cfg = WalkConfig(graph, rate, seed)
    weights = weight_vectors(graph)
    V = graph.size
    A_p, B_p, L_p = [], [], []
    A_f = {k: [] for k in weights}
    B_f = {k: [] for k in weights}
    for lo in range(0, replicas, chunk):
        reps = range(lo, min(replicas, lo + chunk))
        L, _ = boundary_time_batch(cfg, t, reps)
        L = L[:, :V]
        h = sample_dgff_batch(factor, seed, reps, _rng.FIELD)
        hp = sample_dgff_batch(factor, seed, reps, _rng.FIELD_PRIME)
        A = L + h * h
        B = (hp + math.sqrt(t)) ** 2
        A_p.append(A[:, probes])
        B_p.append(B[:, probes])
        L_p.append(L[:, probes])
        for k, w in weights.items():
            A_f[k].append(A @ w)
            B_f[k].append(B @ w)
    A_p = np.vstack(A_p)
    B_p = np.vstack(B_p)
    L_p = np.vstack(L_p)
    ks_s, ks_p, mres, lres = [], [], [], []
    for j in range(len(probes)):
        r = ks_two_sample(A_p[:, j], B_p[:, j])
        ks_s.append(r.statistic)
        ks_p.append(r.pvalue)
        se = math.hypot(_standard_error(A_p[:, j]), _standard_error(B_p[:, j]))
        mres.append(float((A_p[:, j].mean() - B_p[:, j].mean()) / se) if se > 0 else 0.0)
        sl = _standard_error(L_p[:, j])
        lres.append(float((L_p[:, j].mean() - t) / sl) if sl > 0 else 0.0)
    funcs = {}
    for k in weights:
        a = np.concatenate(A_f[k])
        b = np.concatenate(B_f[k])
        r = ks_two_sample(a, b)
        se = math.hypot(_standard_error(a), _standard_error(b))
        funcs[k] = {"ks_statistic": r.statistic, "ks_pvalue": r.pvalue, "mean_residual": float((a.mean() - b.mean()) / se)}
    return IsomorphismReport(rate, float(t), int(replicas), int(seed), probes, ks_s, ks_p, mres, lres, funcs)


@dataclass(frozen=True)
class SecondMomentRow:
    vertex_count: int
    empirical: float
    exact: float
    standard_error: float
    bound: float = 50.0

    @property
    def within_bound(self) -> bool:
        return self.empirical <= self.bound


def second_moment_check(graph: WiredGraph, rate, replicas: int, seed: int, values: np.ndarray | None = None) -> SecondMomentRow:
    """``Var(sum_x h(x)^2) / |D|^2`` from samples, next to the Wick value
    ``2 ||C||_F^2 / |D|^2``.  ``values`` overrides the sampled fields."""
    green = green_matrix(graph, rate)
    factor = covariance_factor(green)
    V = graph.size
    if values is None:
        values = sample_dgff_batch(factor, seed, range(replicas))
    s = (np.asarray(values, dtype=float) ** 2).sum(axis=1)
    n = len(s)
    var = float(s.var(ddof=1))
    # standard error of the sample variance from the fourth central moment
    m4 = float(((s - s.mean()) ** 4).mean())
    se = math.sqrt(max(m4 - var * var, 0.0) / n)
    exact = 2.0 * float((factor.covariance**2).sum())
    return SecondMomentRow(V, var / V**2, exact / V**2, se / V**2)

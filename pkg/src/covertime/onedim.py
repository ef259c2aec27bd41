"""The walk on ``{0, ..., T}`` started at ``T`` and its exact laws.

All edges ring at rate 1, so interior sites hold Exp(2) and the endpoints
Exp(1).  An excursion is a visit of ``T`` followed by a return to it.
``T(i)`` counts jumps ``i -> i-1``.

Compound laws are random sums ``S = V_1 + ... + V_M``:

* Bigeo(n, p; q): ``M ~ Binomial(n, p)``, ``V ~ Geometric(q)`` on ``{1, 2, ...}``
* Biexp(n, p; lam): ``M ~ Binomial(n, p)``, ``V ~ Exp(lam)``
* Poigeo(mu; q): ``M ~ Poisson(mu)``, ``V ~ Geometric(q)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _engine, _rng

SUPPORT_MASS = 1.0 - 1e-12


@dataclass(frozen=True)
class CompoundSpec:
    kind: str
    n: int = 0
    p: float = 1.0
    q: float = 1.0
    lam: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bigeo", "biexp", "poigeo"):
            raise ValueError(f"unknown compound kind {self.kind!r}")
        if self.n < 0 or not 0 <= self.p <= 1:
            raise ValueError("need n >= 0 and p in [0, 1]")
        if not 0 < self.q <= 1:
            raise ValueError("geometric parameter must lie in (0, 1]")
        if not self.lam > 0 or self.mu < 0:
            raise ValueError("need lam > 0 and mu >= 0")

    @classmethod
    def bigeo(cls, n: int, p: float, q: float) -> "CompoundSpec":
        return cls("bigeo", n=int(n), p=p, q=q)

    @classmethod
    def biexp(cls, n: int, p: float, lam: float) -> "CompoundSpec":
        return cls("biexp", n=int(n), p=p, lam=lam)

    @classmethod
    def poigeo(cls, mu: float, q: float) -> "CompoundSpec":
        return cls("poigeo", mu=mu, q=q)

    @property
    def discrete(self) -> bool:
        return self.kind != "biexp"

    @property
    def mean(self) -> float:
        if self.kind == "bigeo":
            return self.n * self.p / self.q
        if self.kind == "biexp":
            return self.n * self.p / self.lam
        return self.mu / self.q

    def count_pmf(self) -> tuple[np.ndarray, np.ndarray]:
        """Support and probabilities of the count ``M`` (Poisson truncated)."""
        if self.kind == "poigeo":
            top = int(stats.poisson.ppf(1 - 1e-16, self.mu)) + 5 if self.mu > 0 else 0
            m = np.arange(top + 1)
            return m, stats.poisson.pmf(m, self.mu)
        m = np.arange(self.n + 1)
        return m, stats.binom.pmf(m, self.n, self.p)


def _geometric_sum_pmf(s: np.ndarray, m: np.ndarray, q: float) -> np.ndarray:
    """``P(G_1 + ... + G_m = s)`` on a grid, rows ``m``, columns ``s``."""
    s = s[None, :]
    m = m[:, None]
    f = s - m
    out = np.zeros(np.broadcast(s, m).shape)
    ok = (f >= 0) & (m >= 1)
    if q == 1.0:
        out[ok & (f == 0)] = 1.0
    else:
        out[ok] = stats.nbinom.pmf(np.broadcast_to(f, out.shape)[ok], np.broadcast_to(m, out.shape)[ok], q)
    out[(m == 0) & (s == 0)] = 1.0
    return out


def compound_pmf(spec: CompoundSpec, grid) -> np.ndarray:
    """Exact pmf (discrete kinds) or density of the absolutely continuous part
    (Biexp) at the points of ``grid``; see ``atom_at_zero`` for Biexp."""
    grid = np.asarray(grid)
    m, w = spec.count_pmf()
    if spec.discrete:
        s = np.asarray(grid, dtype=np.int64)
        return w @ _geometric_sum_pmf(s, m, spec.q)
    x = np.asarray(grid, dtype=float)
    dens = np.zeros_like(x)
    pos = x > 0
    for mm, ww in zip(m[1:], w[1:]):
        if ww > 0:
            dens[pos] += ww * stats.gamma.pdf(x[pos], mm, scale=1.0 / spec.lam)
    return dens


def atom_at_zero(spec: CompoundSpec) -> float:
    m, w = spec.count_pmf()
    return float(w[0])


def compound_cdf(spec: CompoundSpec, x) -> np.ndarray:
    """``P(S <= x)``."""
    x = np.asarray(x, dtype=float)
    m, w = spec.count_pmf()
    if spec.discrete:
        top = effective_support(spec)
        pmf = compound_pmf(spec, np.arange(top + 1))
        c = np.cumsum(pmf)
        idx = np.floor(x).astype(np.int64)
        out = np.where(idx < 0, 0.0, c[np.clip(idx, 0, top)])
        return np.where(idx > top, 1.0, out)
    out = np.where(x >= 0, w[0], 0.0)
    for mm, ww in zip(m[1:], w[1:]):
        if ww > 0:
            out = out + ww * stats.gamma.cdf(np.maximum(x, 0), mm, scale=1.0 / spec.lam)
    return out


def effective_support(spec: CompoundSpec) -> int:
    """Smallest ``s`` with ``P(S <= s) >= 1 - 1e-12`` (discrete kinds)."""
    if not spec.discrete:
        raise ValueError("effective support is defined for discrete kinds")
    m, w = spec.count_pmf()
    mmax = int(m[w > 0].max()) if np.any(w > 0) else 0
    top = max(16, int(4 * spec.mean) + 16)
    while True:
        pmf = compound_pmf(spec, np.arange(top + 1))
        c = np.cumsum(pmf)
        hit = np.flatnonzero(c >= SUPPORT_MASS)
        if len(hit) or top > 10**7:
            return int(hit[0]) if len(hit) else top
        top = max(2 * top, mmax)


def compound_sample(spec: CompoundSpec, seed: int, count: int, replica: int = 0) -> np.ndarray:
    rng = _rng.replica_rng(seed, replica, _rng.COMPOUND)
    if spec.kind == "poigeo":
        M = rng.poisson(spec.mu, count)
    else:
        M = rng.binomial(spec.n, spec.p, count)
    if spec.kind == "biexp":
        out = np.zeros(count)
        pos = M > 0
        out[pos] = rng.gamma(M[pos], 1.0 / spec.lam)
        return out
    out = M.astype(np.int64)
    pos = M > 0
    if spec.q < 1:
        out[pos] += rng.negative_binomial(M[pos], spec.q)
    return out


class RegimeError(ValueError):
    pass


def compound_tail_bound(spec: CompoundSpec, theta: float, side: str = "lower") -> float:
    """Chernoff-type bounds: ``P(S <= theta)`` for ``side='lower'`` when
    ``theta`` is at most the mean, ``P(S >= theta)`` for ``side='upper'`` when
    it is at least the mean."""
    if spec.kind == "bigeo":
        a, rate = spec.n * spec.p, spec.q
    elif spec.kind == "biexp":
        a, rate = spec.n * spec.p, spec.lam
    else:
        a, rate = spec.mu, spec.q
    mean = a / rate
    if side == "lower":
        if theta > mean:
            raise RegimeError(f"lower tail needs theta <= {mean:.6g}")
    elif side == "upper":
        if theta < mean:
            raise RegimeError(f"upper tail needs theta >= {mean:.6g}")
    else:
        raise ValueError("side must be 'lower' or 'upper'")
    return math.exp(-((math.sqrt(a) - math.sqrt(theta * rate)) ** 2))


# ---------------------------------------------------------------------------
# the linear walk


@dataclass(frozen=True, eq=False)
class LinearWalkResult:
    T: int
    excursions: int
    t: float
    local_times: np.ndarray
    downcrossings: np.ndarray

    @property
    def elapsed(self) -> np.ndarray:
        return self.local_times.sum(axis=1)


def simulate_linear_walk(T: int, seed: int, count: int, excursions: int = 0, t: float = 0.0, start: int = 0) -> LinearWalkResult:
    """``count`` independent walks, each stopped after ``excursions`` returns
    to ``T`` or, when ``excursions == 0``, at local time ``t`` at ``T``.

    Row ``r`` uses replica ``start + r``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if excursions < 0 or (excursions == 0 and not t >= 0):
        raise ValueError("give excursions > 0 or t >= 0")
    seeds = _rng.replica_seeds(seed, range(start, start + count), _rng.LINEAR)
    L = np.empty((count, T + 1))
    D = np.empty((count, T + 1), dtype=np.int64)
    _engine.linear_walk_batch(T, count, seeds, int(excursions), float(t), L, D)
    return LinearWalkResult(T, int(excursions), float(t), L, D)


def linear_walk_log(T: int, t: float, seed: int, replica: int = 0):
    """Event log ``(sites, holds)`` of replica ``replica`` in T-time mode."""
    s = _rng.replica_seed(seed, replica, _rng.LINEAR)
    return _engine.linear_walk_logged(T, float(t), s)


def downcrossings_from_log(sites: np.ndarray, T: int) -> np.ndarray:
    """``out[i]`` is the number of jumps ``i -> i-1`` in the log."""
    sites = np.asarray(sites, dtype=np.int64)
    down = sites[1:] == sites[:-1] - 1
    return np.bincount(sites[:-1][down], minlength=T + 1)


def conditional_law(T: int, i: int, j: int | None = None, kind: str = "counts", m: int = 0, excursions: int = 0, local_time: float = 0.0) -> CompoundSpec:
    """Exact laws for the excursion-stopped walk.

    ``kind='counts'``: ``T(T-j)`` given ``T(T-i) = m``.
    ``kind='local'``: ``L(T-i)`` after ``excursions`` excursions.
    ``kind='counts|local'``: ``T(T-j)`` given ``L(T-i) = local_time``.
    """
    if kind == "counts":
        if not (0 <= i <= j <= T - 1) or m < 0:
            raise ValueError("need 0 <= i <= j <= T-1 and m >= 0")
        a = 1.0 / (j - i + 1)
        return CompoundSpec.bigeo(m, a, a)
    if kind == "local":
        if not 1 <= i <= T or excursions < 0:
            raise ValueError("need 1 <= i <= T")
        return CompoundSpec.biexp(excursions, 1.0 / i, 1.0 / i)
    if kind == "counts|local":
        if not (0 <= i <= j <= T - 1) or local_time < 0:
            raise ValueError("need 0 <= i <= j <= T-1 and local_time >= 0")
        a = 1.0 / (j - i + 1)
        return CompoundSpec.poigeo(local_time * a, a)
    raise ValueError(f"unknown conditioning {kind!r}")


def reach_probability(i: int) -> float:
    """Chance that an excursion from ``T`` reaches ``T - i``."""
    if i < 1:
        raise ValueError("i must be at least 1")
    return 1.0 / i


def local_time_atom(T: int, i: int, t: float) -> float:
    _check_marginal(T, i, t)
    return math.exp(-t / i)


def _check_marginal(T, i, t):
    if not 1 <= i <= T:
        raise ValueError("need 1 <= i <= T")
    if not t > 0:
        raise ValueError("need t > 0")


def _poisson_terms(mu: float):
    top = int(stats.poisson.ppf(1 - 1e-16, mu)) + 5
    m = np.arange(1, top + 1)
    return m, stats.poisson.pmf(m, mu)


def local_time_marginal_density(T: int, i: int, t: float, x) -> np.ndarray:
    """Density of the continuous part of ``L_t(T - i)`` (atom ``e^{-t/i}`` at 0)."""
    _check_marginal(T, i, t)
    x = np.asarray(x, dtype=float)
    m, w = _poisson_terms(t / i)
    out = np.zeros_like(x)
    pos = x > 0
    for mm, ww in zip(m, w):
        out[pos] += ww * stats.gamma.pdf(x[pos], mm, scale=i)
    return out


def local_time_marginal_cdf(T: int, i: int, t: float, x) -> np.ndarray:
    _check_marginal(T, i, t)
    x = np.asarray(x, dtype=float)
    m, w = _poisson_terms(t / i)
    out = np.where(x >= 0, math.exp(-t / i), 0.0)
    for mm, ww in zip(m, w):
        out = out + ww * stats.gamma.cdf(np.maximum(x, 0), mm, scale=i)
    return out


# ---------------------------------------------------------------------------
# closed forms


def ballot_rate(k: float, gamma: float, T: int, u: float, v: float) -> float:
    if k < 1 or T < 1:
        raise ValueError("need k, T >= 1")
    if not (u > 0 and v > 0):
        raise ValueError("need u, v > 0")
    kg = k**gamma
    s2 = 2.0 * math.sqrt(2.0)
    pre = math.sqrt(2.0 / math.pi) / (T * k**1.5) * math.exp(-2.0 * (T - 1) * kg)
    return pre * (u * math.exp(s2 * u)) * (v * math.exp(-s2 * v - v * v / (T * kg)))


def log_ballot_rate(k: float, gamma: float, T: int, u: float, v: float) -> float:
    """Natural log of ``ballot_rate``, summed term by term."""
    if k < 1 or T < 1:
        raise ValueError("need k, T >= 1")
    if not (u > 0 and v > 0):
        raise ValueError("need u, v > 0")
    kg = k**gamma
    s2 = 2.0 * math.sqrt(2.0)
    return (
        0.5 * math.log(2.0 / math.pi)
        - math.log(T)
        - 1.5 * math.log(k)
        - 2.0 * (T - 1) * kg
        + math.log(u)
        + s2 * u
        + math.log(v)
        - s2 * v
        - v * v / (T * kg)
    )


def bridge_min_probability(a: float, b: float, x: float, T: float, variance: float) -> float:
    """``P(min of a bridge from a to b over [0, T] <= x)``."""
    if x > min(a, b):
        raise ValueError("x must not exceed both endpoints")
    if not (T > 0 and variance > 0):
        raise ValueError("need T, variance > 0")
    return math.exp(-2.0 * (a - x) * (b - x) / (variance * T))


def simulate_bridge_minimum(a: float, b: float, x: float, T: float, variance: float, paths: int, steps: int, seed: int, chunk: int = 5000) -> np.ndarray:
    """Indicators that a discretized Brownian bridge dips to ``x`` or below."""
    dt = T / steps
    sd = math.sqrt(variance * dt)
    tgrid = np.arange(1, steps + 1) * dt
    out = np.empty(paths, dtype=bool)
    for c, lo in enumerate(range(0, paths, chunk)):
        n = min(chunk, paths - lo)
        rng = _rng.replica_rng(seed, c, _rng.BRIDGE)
        W = np.cumsum(rng.standard_normal((n, steps)) * sd, axis=1)
        # pin the free path to the bridge: B(s) = a + W(s) - (s/T)(W(T) - (b - a))
        B = a + W - (tgrid / T)[None, :] * (W[:, -1:] - (b - a))
        out[lo:lo + n] = np.minimum(B.min(axis=1), a) <= x
    return out


"""Continuous-time simple random walk on a wired graph.

Each edge rings at ``rate``; the walk holds an exponential time of rate
``rate * deg(v)`` and then jumps to a uniform neighbor slot (parallel edges to
``∂`` are separate slots).  Runs start at ``∂``.  The ∂-time of a run is the
local time accumulated at ``∂``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _engine, _rng
from .exact import resolve_rate
from .gff import phase_a_time, clustering_scale
from .lattice import (
    LatticeDomain,
    WiredGraph,
    ball,
    bulk_vertices,
    cluster_process,
    floor_exp,
    is_clustered,
    outer_boundary,
)


@dataclass(frozen=True, eq=False)
class WalkConfig:
    graph: WiredGraph
    rate: float = 1.0
    seed: int = 0
    replica: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rate", resolve_rate(self.rate))

    @property
    def kernel_seed(self) -> int:
        return _rng.replica_seed(self.seed, self.replica, _rng.WALK)

    def with_replica(self, replica: int) -> "WalkConfig":
        return WalkConfig(self.graph, self.rate, self.seed, replica)

    @cached_property
    def csr(self):
        g = self.graph
        return (np.ascontiguousarray(g.offsets, dtype=np.int64), np.ascontiguousarray(g.targets, dtype=np.int64), g.boundary)


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Occupation times of nodes ``0..V`` (the last entry is ``∂``)."""

    graph: WiredGraph
    local_times: np.ndarray
    elapsed: float

    @property
    def boundary_time(self) -> float:
        return float(self.local_times[self.graph.boundary])

    @property
    def interior(self) -> np.ndarray:
        return self.local_times[: self.graph.size]

    def conservation_error(self) -> float:
        """Relative gap between the summed local times and elapsed real time."""
        if self.elapsed == 0:
            return float(abs(self.local_times.sum()))
        return float(abs(self.local_times.sum() - self.elapsed) / self.elapsed)


@dataclass(frozen=True, eq=False)
class CoverResult:
    real_time: float
    boundary_time: float
    last_vertex: int
    first_visit: np.ndarray
    field: LocalTimeField


@dataclass(frozen=True, eq=False)
class ExcursionTrace:
    """One excursion ∂ -> interior -> ∂; ``vertices`` excludes both ends."""

    vertices: np.ndarray
    holding_times: np.ndarray
    size: int

    @property
    def visited(self) -> np.ndarray:
        return np.unique(self.vertices)

    @property
    def local_increment(self) -> np.ndarray:
        return np.bincount(self.vertices, weights=self.holding_times, minlength=self.size)

    @property
    def duration(self) -> float:
        return float(self.holding_times.sum())


def run_excursion(cfg: WalkConfig, state: int = 0) -> ExcursionTrace:
    """Excursion number ``state`` of the replica, on its own RNG stream."""
    off, tgt, b = cfg.csr
    s = _rng.replica_seed(cfg.seed, cfg.replica * 1_000_003 + state, _rng.WALK)
    ids, holds = _engine.single_excursion(off, tgt, b, cfg.rate, s)
    return ExcursionTrace(ids, holds, cfg.graph.size)


def excursion_statistics(cfg: WalkConfig, count: int, probe: int):
    """``count`` consecutive excursions: (hit flags, local time at probe, durations)."""
    off, tgt, b = cfg.csr
    hit = np.zeros(count, dtype=np.bool_)
    loc = np.zeros(count)
    length = np.zeros(count)
    _engine.excursion_batch(off, tgt, b, cfg.rate, cfg.kernel_seed, count, int(probe), hit, loc, length)
    return hit, loc, length


def run_to_boundary_time(cfg: WalkConfig, t: float) -> LocalTimeField:
    if t < 0:
        raise ValueError("t must be nonnegative")
    off, tgt, b = cfg.csr
    L = np.zeros(b + 1)
    elapsed = _engine.run_to_boundary_time(off, tgt, b, cfg.rate, float(t), cfg.kernel_seed, L)
    return LocalTimeField(cfg.graph, L, float(elapsed))


def boundary_time_batch(cfg: WalkConfig, t: float, replicas) -> tuple[np.ndarray, np.ndarray]:
    """Local-time rows and elapsed times for ``cfg.with_replica(r)``, ``r`` in ``replicas``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    off, tgt, b = cfg.csr
    seeds = _rng.replica_seeds(cfg.seed, replicas, _rng.WALK)
    L = np.empty((len(seeds), b + 1))
    el = np.empty(len(seeds))
    _engine.boundary_time_batch(off, tgt, b, cfg.rate, float(t), seeds, L, el)
    return L, el


def _target_mask(g: WiredGraph, target) -> np.ndarray:
    mask = np.zeros(g.size + 1, dtype=np.bool_)
    if target is None:
        mask[: g.size] = True
    else:
        mask[np.asarray(target, dtype=np.int64)] = True
        if mask[g.size]:
            raise ValueError("∂ cannot be a cover target")
    return mask


def run_to_cover(cfg: WalkConfig, target=None) -> CoverResult:
    """Run until every vertex of ``target`` (default: the interior) is visited.

    An empty target returns a zero-time result with ``last_vertex = -1``.
    """
    off, tgt, b = cfg.csr
    mask = _target_mask(cfg.graph, target)
    fv = np.empty(b + 1)
    L = np.empty(b + 1)
    real, bt, last = _engine.run_to_cover(off, tgt, b, cfg.rate, cfg.kernel_seed, mask, fv, L)
    return CoverResult(float(real), float(bt), int(last), fv, LocalTimeField(cfg.graph, L, float(real)))


def cover_batch(cfg: WalkConfig, replicas, target=None):
    """Cover real times, cover ∂-times and last vertices for many replicas."""
    off, tgt, b = cfg.csr
    mask = _target_mask(cfg.graph, target)
    seeds = _rng.replica_seeds(cfg.seed, replicas, _rng.WALK)
    real = np.empty(len(seeds))
    bt = np.empty(len(seeds))
    last = np.empty(len(seeds), dtype=np.int64)
    _engine.cover_batch(off, tgt, b, cfg.rate, seeds, mask, real, bt, last)
    return real, bt, last


def naive_cover(cfg: WalkConfig) -> CoverResult:
    """Plain-Python cover run drawing the same uniforms as the compiled loop."""
    g = cfg.graph
    rs = np.random.RandomState(cfg.kernel_seed)
    V = g.size
    nbrs = [list(g.neighbors(v)) for v in range(V + 1)]
    L = [0.0] * (V + 1)
    first = [math.inf] * (V + 1)
    first[V] = 0.0
    unseen = set(range(V))
    v, now = V, 0.0
    while unseen:
        deg = len(nbrs[v])
        hold = -math.log(1.0 - rs.random_sample()) / (cfg.rate * deg)
        nxt = nbrs[v][int(rs.random_sample() * deg)]
        L[v] += hold
        now += hold
        v = nxt
        if first[v] == math.inf:
            first[v] = now
            unseen.discard(v)
    field = LocalTimeField(g, np.array(L), now)
    return CoverResult(now, L[V], v, np.array(first), field)


def low_local_time_set(ltf: LocalTimeField, u: float, bulk) -> np.ndarray:
    """Ids ``x`` of ``bulk`` with ``L(x) <= u``."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    bulk = np.asarray(bulk, dtype=np.int64)
    return bulk[ltf.local_times[bulk] <= u]


# ---------------------------------------------------------------------------
# event logs and downcrossings

RECORD_DTYPE = np.dtype([("vertex", "<u4"), ("hold", "<f8")])


@dataclass(frozen=True, eq=False)
class EventLog:
    """Visited nodes with their holding times, in order.

    ``coords[v]`` is the lattice position of node ``v``; the ∂ row is unused.
    On disk each record is 12 bytes: little-endian ``u32`` node id followed by
    ``f64`` holding time, no header.
    """

    vertices: np.ndarray
    holds: np.ndarray
    boundary: int
    coords: np.ndarray
    domain: LatticeDomain | None = None

    @classmethod
    def from_graph(cls, g: WiredGraph, vertices, holds) -> "EventLog":
        coords = np.vstack([g.coords, np.zeros((1, 2), dtype=np.int64)])
        return cls(np.asarray(vertices, dtype=np.uint32), np.asarray(holds, dtype=float), g.boundary, coords, g.domain)

    def to_bytes(self) -> bytes:
        rec = np.empty(len(self.vertices), dtype=RECORD_DTYPE)
        rec["vertex"] = self.vertices
        rec["hold"] = self.holds
        return rec.tobytes()

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def write(self, path) -> Path:
        path = Path(path)
        with path.open("ab") as fh:
            fh.write(self.to_bytes())
        return path

    @staticmethod
    def read_records(path) -> np.ndarray:
        return np.fromfile(path, dtype=RECORD_DTYPE)

    def local_times(self) -> np.ndarray:
        return np.bincount(self.vertices, weights=self.holds, minlength=len(self.coords))


def record_events(cfg: WalkConfig, t: float) -> tuple[LocalTimeField, EventLog]:
    """``run_to_boundary_time`` with the event log retained (same draws)."""
    off, tgt, b = cfg.csr
    ids, holds = _engine.run_logged(off, tgt, b, cfg.rate, float(t), cfg.kernel_seed)
    log = EventLog.from_graph(cfg.graph, ids, holds)
    L = log.local_times()
    L[cfg.graph.boundary] = t
    return LocalTimeField(cfg.graph, L, float(holds.sum())), log


@dataclass(frozen=True, eq=False)
class DowncrossingRecord:
    center: tuple[int, int]
    k: float
    l: float
    count: int
    normalized: float
    entries: np.ndarray
    exits: np.ndarray

    @property
    def z(self) -> tuple[float, np.ndarray]:
        """``(sqrt(normalized count), centered entry/exit pairs)``."""
        pairs = np.stack([self.entries, self.exits], axis=1) if self.count else np.zeros((0, 2, 2), dtype=np.int64)
        return math.sqrt(self.normalized), pairs


class GeometryError(ValueError):
    pass


def _check_closure_inside(domain: LatticeDomain | None, x, l: float):
    if domain is None:
        return
    pts = ball(x, l)
    closure = np.vstack([pts, outer_boundary(pts)])
    if not np.all(domain.contains(closure)):
        raise GeometryError(f"closure of B(x;{l:.4g}) around {tuple(x)} leaves the domain")


def _dist2(log: EventLog, x) -> np.ndarray:
    d = log.coords - np.asarray(x, dtype=np.int64)
    d2 = (d * d).sum(axis=1).astype(np.int64)
    d2[log.boundary] = np.iinfo(np.int64).max
    return d2


def downcrossing_counts(log: EventLog, x, k: float, l: float, t: float, scale: float | None = None) -> DowncrossingRecord:
    """Downcrossings from outside ``B(x;l)`` into ``B(x;k)`` up to ∂-time ``t``.

    ``normalized`` is ``scale * count`` with ``scale = l - k`` by default.
    """
    if not k < l:
        raise GeometryError("need k < l")
    _check_closure_inside(log.domain, x, l)
    d2 = _dist2(log, x)
    in_inner = (d2 <= floor_exp(k) ** 2)
    out_outer = (d2 > floor_exp(l) ** 2)
    in_inner[log.boundary] = False
    out_outer[log.boundary] = True
    ent, ext = _engine.count_crossings(log.vertices, log.holds, log.boundary, in_inner, out_outer, float(t))
    c = np.asarray(x, dtype=np.int64)
    entries = log.coords[log.vertices[ent]] - c
    exits = log.coords[log.vertices[ext]] - c
    scale = (l - k) if scale is None else scale
    return DowncrossingRecord((int(c[0]), int(c[1])), k, l, len(ent), scale * len(ent), entries, exits)


def annulus_scales(k: float, gamma: float, T: int) -> list[tuple[float, float]]:
    """``(inner, outer)`` log-radii of the ``T`` annuli around a center."""
    kg = k**gamma
    return [(k + (i - 1) * kg, k + i * kg - 4 * math.exp(-kg)) for i in range(1, T + 1)]


def _rim_norms(R: int, outer: bool) -> np.ndarray:
    """Norms of the outer (or inner) boundary of ``{||y|| <= R}``, scanning only a band."""
    x = np.arange(-R - 2, R + 3)
    lo = np.sqrt(np.maximum(max(R - 2, 0) ** 2 - x * x, 0)).astype(np.int64)
    hi = np.floor(np.sqrt(np.maximum((R + 2) ** 2 - x * x, 0))).astype(np.int64) + 1
    xs, ys = [], []
    for xi, a, b in zip(x, lo, hi):
        y = np.arange(a, b + 1)
        y = np.concatenate([y, -y])
        xs.append(np.full(len(y), xi))
        ys.append(y)
    xs = np.concatenate(xs)
    ys = np.concatenate(ys)
    inside = xs * xs + ys * ys <= R * R
    nb_in = np.zeros(len(xs), dtype=bool)
    nb_out = np.zeros(len(xs), dtype=bool)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        q = (xs + dx) ** 2 + (ys + dy) ** 2 <= R * R
        nb_in |= q
        nb_out |= ~q
    keep = (~inside & nb_in) if outer else (inside & nb_out)
    return np.sqrt((xs[keep] ** 2 + ys[keep] ** 2).astype(float))


def check_nesting(k: float, gamma: float, T: int):
    """Raise with the failing index if consecutive annuli are not well separated."""
    sc = annulus_scales(k, gamma, T)
    for i in range(T - 1):
        r_plus = floor_exp(sc[i][1])
        r_minus = floor_exp(sc[i + 1][0])
        far = _rim_norms(r_plus, outer=True).max()
        if far > r_minus:
            raise GeometryError(f"annulus {i + 1}: closed outer ball not inside the next inner ball")
        gap = _rim_norms(r_minus, outer=False).min() - far
        scale = math.exp(sc[i][0])
        if not (scale <= gap <= 5 * scale):
            raise GeometryError(f"annulus {i + 1}: separation {gap:.3g} outside [{scale:.3g}, {5 * scale:.3g}]")


def annuli_records(log: EventLog, x, k: float, gamma: float, T: int, t: float) -> list[DowncrossingRecord]:
    """Per-annulus records from a single pass for the counts."""
    if T < 1:
        raise ValueError("T must be at least 1")
    check_nesting(k, gamma, T)
    sc = annulus_scales(k, gamma, T)
    _check_closure_inside(log.domain, x, sc[-1][1])
    d2 = _dist2(log, x)
    inner = np.array([floor_exp(a) ** 2 for a, _ in sc], dtype=np.int64)
    outer = np.array([floor_exp(b) ** 2 for _, b in sc], dtype=np.int64)
    counts = _engine.count_crossings_multi(log.vertices, log.holds, log.boundary, d2, inner, outer, float(t))
    kg = k**gamma
    out = []
    for i, (a, b) in enumerate(sc):
        rec = downcrossing_counts(log, x, a, b, t, scale=kg)
        if rec.count != counts[i]:  # pragma: no cover - two independent scans disagree
            raise RuntimeError(f"annulus {i + 1}: one-pass count {counts[i]} != rescan {rec.count}")
        out.append(rec)
    return out


def annuli_counts(log: EventLog, x, k: float, gamma: float, T: int, t: float) -> np.ndarray:
    """Only the one-pass counts, without entry and exit points."""
    sc = annulus_scales(k, gamma, T)
    d2 = _dist2(log, x)
    inner = np.array([floor_exp(a) ** 2 for a, _ in sc], dtype=np.int64)
    outer = np.array([floor_exp(b) ** 2 for _, b in sc], dtype=np.int64)
    return _engine.count_crossings_multi(log.vertices, log.holds, log.boundary, d2, inner, outer, float(t))


# ---------------------------------------------------------------------------
# phase observables


def time_fluctuation(elapsed: float, volume: int, t: float) -> float:
    """``(elapsed / volume - t) / (2 sqrt t)``."""
    if not t > 0:
        raise ValueError("time fluctuation needs t > 0")
    return (elapsed / volume - t) / (2.0 * math.sqrt(t))


def occupied_boxes(pts, r: float) -> np.ndarray:
    """Centers ``z`` of the ``Q(z;r)`` tiles, ``z`` on the ``floor(e^r)``-scaled lattice, that meet ``pts``."""
    s = floor_exp(r)
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    # y lies in Q(z;r) iff z/s = floor(y/s + 1/2)
    m = np.floor_divide(2 * pts + s, 2 * s)
    return np.unique(m, axis=0) * s


def phase_observables(cfg: WalkConfig, n: float | None = None, t: float | None = None, eta0: float = 0.1, bulk=None) -> dict:
    """Unvisited bulk statistics at ∂-time ``t`` (default ``t_n^A``).

    ``bulk`` may pass precomputed bulk ids to skip the distance transform.
    """
    g = cfg.graph
    n = g.domain.n if n is None else n
    if n < 2:
        raise ValueError("phase observables need n >= 2")
    t = phase_a_time(n) if t is None else t
    ltf = run_to_boundary_time(cfg, t)
    if bulk is None:
        bulk = bulk_vertices(g.domain)
    unvisited = low_local_time_set(ltf, 0.0, bulk)
    pts = g.coords[unvisited]
    r = clustering_scale(n, eta0)
    xi = cluster_process(pts, r, n)
    boxes = occupied_boxes(pts, n - r)
    return {
        "n": n,
        "t": t,
        "unvisited": int(len(unvisited)),
        "unvisited_scaled": len(unvisited) / math.sqrt(n),
        "boxes": int(len(boxes)),
        "boxes_scaled": len(boxes) / math.sqrt(n),
        "clusters": int(len(xi.weights)),
        "clusters_scaled": len(xi.weights) / math.sqrt(n),
        "clustered": bool(is_clustered(pts, r, n - r)),
        "elapsed": ltf.elapsed,
        "t_hat": time_fluctuation(ltf.elapsed, g.size, t),
        "conservation_error": ltf.conservation_error(),
    }

"""Lattice domains, boundary wiring and log-scale geometry.

Vertices are integer pairs in untranslated Z^2 coordinates.  Scaling by
``e^{-n}`` only happens when a point measure is emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

SHAPE_KINDS = ("unit-square", "unit-disc", "annulus", "polygon")

# exp(log 8) == 7.999999999999998 in floating point
_FLOOR_SLACK = 1e-9


class EmptyDomainError(ValueError):
    """Raised when a discretization leaves no interior vertex."""


def floor_exp(r: float) -> int:
    """Return ``floor(e^r)``, robust to round-off at exact integers."""
    return int(math.floor(math.exp(r) + _FLOOR_SLACK))


@dataclass(frozen=True)
class DomainShape:
    """A bounded planar domain.

    ``unit-square`` is the open square (0, 1)^2, ``unit-disc`` the open unit
    disc about the origin, ``annulus`` the set ``inner_radius < |z| < 1`` and
    ``polygon`` the interior of a simple polygon given by its vertex list.
    """

    kind: str
    inner_radius: float | None = None
    polygon: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        if self.kind == "annulus":
            if self.inner_radius is None or not 0.0 < self.inner_radius < 1.0:
                raise ValueError("annulus inner radius must lie strictly between 0 and 1")
        if self.kind == "polygon":
            if self.polygon is None or len(self.polygon) < 3:
                raise ValueError("polygon needs at least 3 vertices")
            pts = np.asarray(self.polygon, dtype=float)
            if not np.all(np.isfinite(pts)):
                raise ValueError("polygon vertices must be finite")
            object.__setattr__(self, "polygon", tuple(map(tuple, pts.tolist())))
            if abs(_polygon_area(pts)) == 0.0:
                raise ValueError("polygon has zero area")

    @classmethod
    def square(cls) -> "DomainShape":
        return cls("unit-square")

    @classmethod
    def disc(cls) -> "DomainShape":
        return cls("unit-disc")

    @classmethod
    def annulus(cls, inner_radius: float) -> "DomainShape":
        return cls("annulus", inner_radius=float(inner_radius))

    @classmethod
    def from_polygon(cls, vertices: Sequence[Sequence[float]]) -> "DomainShape":
        return cls("polygon", polygon=tuple(tuple(map(float, v)) for v in vertices))

    def label(self) -> str:
        if self.kind == "annulus":
            return f"annulus:{self.inner_radius}"
        if self.kind == "polygon":
            return "polygon"
        return self.kind

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.inner_radius is not None:
            out["inner_radius"] = self.inner_radius
        if self.polygon is not None:
            out["polygon"] = [list(p) for p in self.polygon]
        return out

    def _bounding_box(self, N: int) -> tuple[int, int, int, int]:
        if self.kind == "unit-square":
            return 0, N, 0, N
        if self.kind in ("unit-disc", "annulus"):
            return -N, N, -N, N
        pts = np.asarray(self.polygon) * N
        lo = np.floor(pts.min(axis=0)).astype(int)
        hi = np.ceil(pts.max(axis=0)).astype(int)
        return lo[0], hi[0], lo[1], hi[1]

    def margin_mask(self, xs: np.ndarray, ys: np.ndarray, N: int) -> np.ndarray:
        """Boolean mask of ``d(x/N, D^c) > 1/N`` evaluated as ``d(x, N D^c) > 1``."""
        xs = np.asarray(xs, dtype=np.int64)
        ys = np.asarray(ys, dtype=np.int64)
        if self.kind == "unit-square":
            m = np.minimum(np.minimum(xs, N - xs), np.minimum(ys, N - ys))
            return m > 1
        r2 = xs * xs + ys * ys
        outer = r2 < (N - 1) ** 2
        if self.kind == "unit-disc":
            return outer
        if self.kind == "annulus":
            inner = np.sqrt(r2.astype(float)) > self.inner_radius * N + 1.0
            return outer & inner
        poly = np.asarray(self.polygon, dtype=float) * N
        pts = np.column_stack([xs, ys]).astype(float)
        inside = _points_in_polygon(pts, poly)
        dist = _distance_to_polyline(pts, poly)
        return inside & (dist > 1.0)


def _polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    # even-odd ray casting
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
    x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = crosses & (x < xint)
    return (hits.sum(axis=1) % 2) == 1


def _distance_to_polyline(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    a = poly[None, :, :]
    b = np.roll(poly, -1, axis=0)[None, :, :]
    p = pts[:, None, :]
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-300)
    s = np.clip(((p - a) * ab).sum(-1) / denom, 0.0, 1.0)
    proj = a + s[..., None] * ab
    return np.sqrt(((p - proj) ** 2).sum(-1)).min(axis=1)


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    """Interior vertex set ``D_N`` with ``N = floor(e^n)``.

    ``vertices`` is an ``(V, 2)`` integer array in lexicographic order; the row
    index of a vertex is its id everywhere else in the package.
    """

    n: float
    vertices: np.ndarray
    shape: DomainShape | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((v[:, 1], v[:, 0]))
        v = v[order]
        if len(v) and np.any(np.all(np.diff(v, axis=0) == 0, axis=1)):
            raise ValueError("duplicate vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_vertices(cls, vertices: Iterable[Sequence[int]], n: float = 0.0) -> "LatticeDomain":
        v = np.array([tuple(map(int, p)) for p in vertices], dtype=np.int64).reshape(-1, 2)
        if len(v) == 0:
            raise EmptyDomainError("vertex set is empty")
        return cls(n=float(n), vertices=v, shape=None)

    @property
    def N(self) -> int:
        return floor_exp(self.n)

    def __len__(self) -> int:
        return len(self.vertices)

    @cached_property
    def index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.vertices)}

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        idx = self.index
        return np.array([(int(a), int(b)) in idx for a, b in pts], dtype=bool)

    def ids_of(self, pts: np.ndarray) -> np.ndarray:
        """Vertex ids of the given points; raises ``KeyError`` for non-members."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
        idx = self.index
        return np.array([idx[(int(a), int(b))] for a, b in pts], dtype=np.int64)

    def descriptor(self) -> dict:
        return {
            "shape": self.shape.to_dict() if self.shape is not None else None,
            "n": self.n,
            "vertex_count": len(self),
        }


def discretize_domain(shape: DomainShape, n: float) -> LatticeDomain:
    """All ``x`` in Z^2 with ``d(x/N, D^c) > 1/N``, ``N = floor(e^n)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    N = floor_exp(n)
    x0, x1, y0, y1 = shape._bounding_box(N)
    xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1), indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    keep = shape.margin_mask(xs, ys, N)
    if not keep.any():
        raise EmptyDomainError(f"{shape.label()} at n={n} (N={N}) has no interior vertex")
    return LatticeDomain(n=float(n), vertices=np.column_stack([xs[keep], ys[keep]]), shape=shape)


def square_domain(side: int) -> LatticeDomain:
    """The ``side x side`` interior block produced by the unit square at ``N = side + 3``."""
    if side < 1:
        raise ValueError("side must be positive")
    return discretize_domain(DomainShape.square(), math.log(side + 3))


_STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class WiredGraph:
    """Interior vertices plus one wired boundary vertex ``∂``.

    Node ids ``0..V-1`` are interior, node ``V`` is ``∂``.  Adjacency is kept
    in CSR form with repeated entries for parallel edges, so a uniform pick
    from ``targets[offsets[v]:offsets[v+1]]`` is the multiplicity-weighted
    neighbor choice.
    """

    domain: LatticeDomain
    offsets: np.ndarray
    targets: np.ndarray

    @property
    def size(self) -> int:
        return len(self.domain)

    @property
    def boundary(self) -> int:
        return self.size

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Number of edges from each interior vertex to ``∂``."""
        V = self.size
        rows = np.repeat(np.arange(V), self.degree[:V])
        hits = self.targets[: self.offsets[V]] == V
        return np.bincount(rows[hits], minlength=V)

    @property
    def boundary_degree(self) -> int:
        return int(self.degree[self.size])

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.offsets[v]:self.offsets[v + 1]]

    @cached_property
    def interior_adjacency(self):
        """Sparse ``V x V`` matrix of interior edge counts."""
        from scipy.sparse import csr_matrix

        V = self.size
        rows = np.repeat(np.arange(V + 1), self.degree)
        mask = (rows < V) & (self.targets < V)
        data = np.ones(int(mask.sum()))
        return csr_matrix((data, (rows[mask], self.targets[mask])), shape=(V, V))

    @property
    def coords(self) -> np.ndarray:
        return self.domain.vertices


def _build_csr(adj: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(adj) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(a) for a in adj])
    targets = np.fromiter((t for a in adj for t in a), dtype=np.int64, count=int(offsets[-1]))
    return offsets, targets


def wire_boundary(d: LatticeDomain) -> WiredGraph:
    """Contract the outer boundary of ``d`` into one vertex."""
    V = len(d)
    if V == 0:
        raise EmptyDomainError("cannot wire an empty domain")
    idx = d.index
    adj: list[list[int]] = []
    bnd: list[int] = []
    for i, (a, b) in enumerate(d.vertices):
        row = []
        for da, db in _STEPS:
            j = idx.get((int(a + da), int(b + db)), V)
            row.append(j)
            if j == V:
                bnd.append(i)
        adj.append(row)
    adj.append(bnd)
    offsets, targets = _build_csr(adj)
    return WiredGraph(domain=d, offsets=offsets, targets=targets)


def path_graph(m: int) -> WiredGraph:
    """Wired linear graph ``0 - 1 - ... - m - (m+1)`` with both ends contracted to ``∂``.

    Interior vertices sit at ``(i, 0)`` for ``i = 1..m``; each has degree 2.
    """
    if m < 1:
        raise EmptyDomainError("path needs at least one interior vertex")
    d = LatticeDomain.from_vertices([(i, 0) for i in range(1, m + 1)])
    V = m
    adj = []
    for i in range(V):
        adj.append([i - 1 if i > 0 else V, i + 1 if i < V - 1 else V])
    adj.append([0, V - 1])
    offsets, targets = _build_csr(adj)
    return WiredGraph(domain=d, offsets=offsets, targets=targets)


# ---------------------------------------------------------------------------
# log-scale geometry


def ball(x: Sequence[int], r: float) -> np.ndarray:
    """``B(x;r) = {y : ||x - y|| <= floor(e^r)}`` as an ``(k, 2)`` array."""
    R = floor_exp(r)
    o = np.arange(-R, R + 1)
    dx, dy = np.meshgrid(o, o, indexing="ij")
    keep = dx * dx + dy * dy <= R * R
    return np.column_stack([dx[keep] + int(x[0]), dy[keep] + int(x[1])])


def box(x: Sequence[int], r: float) -> np.ndarray:
    """``Q(x;r) = {y : x - y in (-s/2, s/2]^2}`` with ``s = floor(e^r)``."""
    s = floor_exp(r)
    # x - y in (-s/2, s/2]  <=>  y in [x - s/2, x + s/2)
    lo = math.ceil(-s / 2)
    off = np.arange(lo, lo + s)
    dx, dy = np.meshgrid(off, off, indexing="ij")
    return np.column_stack([int(x[0]) + dx.ravel(), int(x[1]) + dy.ravel()])


def geometry_query(x: Sequence[int], r: float, kind: str = "log-ball") -> np.ndarray:
    if r < 0:
        raise ValueError("r must be nonnegative")
    if kind == "log-ball":
        return ball(x, r)
    if kind == "log-box":
        return box(x, r)
    raise ValueError(f"unknown geometry kind {kind!r}")


def in_ball(pts: np.ndarray, x: Sequence[int], r: float) -> np.ndarray:
    R = floor_exp(r)
    d = np.asarray(pts, dtype=np.int64).reshape(-1, 2) - np.asarray(x, dtype=np.int64)
    return (d * d).sum(axis=1) <= R * R


def inner_boundary(pts: np.ndarray) -> np.ndarray:
    """Points of ``pts`` having a lattice neighbor outside the set."""
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    members = {(int(a), int(b)) for a, b in pts}
    keep = [any((int(a + da), int(b + db)) not in members for da, db in _STEPS) for a, b in pts]
    return pts[np.array(keep, dtype=bool)]


def outer_boundary(pts: np.ndarray) -> np.ndarray:
    """Lattice points outside ``pts`` adjacent to it, lexicographically sorted."""
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    members = {(int(a), int(b)) for a, b in pts}
    out = set()
    for a, b in pts:
        for da, db in _STEPS:
            q = (int(a + da), int(b + db))
            if q not in members:
                out.add(q)
    return np.array(sorted(out), dtype=np.int64).reshape(-1, 2)


def distance_to_complement(d: LatticeDomain) -> np.ndarray:
    """Euclidean distance from each vertex to the nearest lattice point outside ``d``."""
    v = d.vertices
    lo = v.min(axis=0) - 1
    hi = v.max(axis=0) + 1
    grid = np.zeros(tuple(hi - lo + 1), dtype=bool)
    grid[v[:, 0] - lo[0], v[:, 1] - lo[1]] = True
    edt = ndimage.distance_transform_edt(grid)
    return edt[v[:, 0] - lo[0], v[:, 1] - lo[1]]


def bulk_margin(n: float) -> float:
    """Bulk margin ``e^{n - 2 log n} = e^n / n^2`` as a length."""
    if n <= 0:
        return math.inf
    return math.exp(n) / (n * n)


def bulk_vertices(d: LatticeDomain) -> np.ndarray:
    """Ids of vertices at distance greater than ``e^n / n^2`` from the complement."""
    return np.flatnonzero(distance_to_complement(d) > bulk_margin(d.n))


# ---------------------------------------------------------------------------
# clustering


def _as_points(s) -> np.ndarray:
    return np.asarray(s, dtype=np.int64).reshape(-1, 2)


def is_clustered(s, r: float, R: float) -> bool:
    """True iff no pair of points has ``log ||x - y||`` inside ``(r, R)``."""
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    pts = _as_points(s)
    if len(pts) < 2:
        return True
    tree = cKDTree(pts)
    lo, hi = math.exp(r), math.exp(R)
    pairs = tree.query_pairs(hi, output_type="ndarray")
    if len(pairs) == 0:
        return True
    diff = pts[pairs[:, 0]] - pts[pairs[:, 1]]
    dist = np.sqrt((diff * diff).sum(axis=1).astype(float))
    return not bool(np.any((dist > lo) & (dist < hi)))


@dataclass(frozen=True, eq=False)
class ClusterCover:
    radius_log: float
    centers: np.ndarray
    covered: np.ndarray
    minimal: bool = True

    def __len__(self) -> int:
        return len(self.centers)

    def covers(self) -> bool:
        if len(self.covered) == 0:
            return True
        R = floor_exp(self.radius_log)
        tree = cKDTree(self.centers)
        dist, _ = tree.query(self.covered, k=1)
        return bool(np.all(dist <= R + 1e-9))


def _components(pts: np.ndarray, radius: float) -> np.ndarray:
    from scipy.sparse import coo_matrix

    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius * (1 + 1e-12), output_type="ndarray")
    m = len(pts)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m)) if len(pairs) else coo_matrix((m, m))
    _, labels = connected_components(g, directed=False)
    return labels


def _center_for(component: np.ndarray, R: int) -> np.ndarray | None:
    diff = component[:, None, :] - component[None, :, :]
    d2 = (diff * diff).sum(-1)
    worst = d2.max(axis=1)
    best = int(np.argmin(worst))
    if worst[best] <= R * R:
        return component[best]
    # any lattice point of the bounding box may serve as a center
    lo = component.min(axis=0)
    hi = component.max(axis=0)
    xs, ys = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
    cand = np.column_stack([xs.ravel(), ys.ravel()])
    diff = cand[:, None, :] - component[None, :, :]
    worst = (diff * diff).sum(-1).max(axis=1)
    best = int(np.argmin(worst))
    if worst[best] <= R * R:
        return cand[best]
    return None


def _greedy_cover(pts: np.ndarray, R: int) -> np.ndarray:
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    covered = np.zeros(len(pts), dtype=bool)
    centers = []
    tree = cKDTree(pts)
    for i in order:
        if covered[i]:
            continue
        centers.append(pts[i])
        covered[tree.query_ball_point(pts[i], R + 1e-9)] = True
    return np.array(centers, dtype=np.int64).reshape(-1, 2)


def minimal_cover(s, r: float) -> ClusterCover:
    """Cover ``s`` by balls ``B(z; r)``.

    For inputs that are ``(r, R)``-clustered with ``R > r + log 4`` the result
    has one center per component of the relation ``||x - y|| <= e^r`` and is
    minimal.  Otherwise a greedy cover is returned with ``minimal=False``.
    """
    pts = _as_points(s)
    if len(pts) == 0:
        raise ValueError("cannot cover an empty set")
    R = floor_exp(r)
    clustered = len(pts) == 1 or is_clustered(pts, r, r + math.log(4) + 1e-9)
    if clustered:
        labels = _components(pts, math.exp(r))
        centers = []
        ok = True
        for c in range(labels.max() + 1):
            z = _center_for(pts[labels == c], R)
            if z is None:
                ok = False
                break
            centers.append(z)
        if ok:
            return ClusterCover(r, np.array(centers, dtype=np.int64), pts, minimal=True)
    return ClusterCover(r, _greedy_cover(pts, R), pts, minimal=False)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite point measure: atoms at ``positions`` with nonnegative ``weights``."""

    positions: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        w = np.ones(len(pos)) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (len(pos),):
            raise ValueError("one weight per atom")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "DiscreteMeasure":
        m = self.total_mass
        if m <= 0:
            raise ValueError("cannot normalize a zero measure")
        return DiscreteMeasure(self.positions, self.weights / m)

    def mass_of(self, region) -> float:
        """Mass of atoms whose position satisfies the boolean predicate ``region``."""
        mask = np.asarray(region(self.positions), dtype=bool)
        return float(self.weights[mask].sum())


def cluster_process(s, r: float, n: float) -> DiscreteMeasure:
    """Unit atoms at ``e^{-n} z`` for the centers ``z`` of a minimal ``r``-cover."""
    pts = _as_points(s)
    if len(pts) == 0:
        return DiscreteMeasure(np.zeros((0, 2)))
    cover = minimal_cover(pts, r)
    return DiscreteMeasure(cover.centers * math.exp(-n))

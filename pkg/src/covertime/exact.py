"""Exact linear-algebra references: Green functions, hitting probabilities,
Poisson kernels and harmonic measures.

Every quantity here is deterministic.  The walk module is checked against
these, never the other way round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .lattice import WiredGraph, ball, inner_boundary, outer_boundary

RETUNED_RATE = 1.0 / (2.0 * math.pi)

# Dense inverses above this size do not fit the memory budget.
MAX_DENSE_VERTICES = 15_000


class GraphTooLargeError(ValueError):
    pass


def resolve_rate(rate) -> float:
    """Accept ``1``, ``"1"``, ``"retuned"`` or any positive float."""
    if isinstance(rate, str):
        if rate == "retuned":
            return RETUNED_RATE
        rate = float(rate)
    rate = float(rate)
    if not rate > 0:
        raise ValueError("rate must be positive")
    return rate


def killed_generator(g: WiredGraph, rate: float = 1.0) -> sp.csc_matrix:
    """``rate * (deg - A)`` restricted to the interior, as a sparse matrix."""
    rate = resolve_rate(rate)
    V = g.size
    K = sp.diags(g.degree[:V].astype(float)) - g.interior_adjacency
    return sp.csc_matrix(rate * K)


@dataclass(frozen=True, eq=False)
class GreenMatrix:
    """``G(x, y) = E_x`` time spent at ``y`` before hitting ``∂``, in time units."""

    graph: WiredGraph
    rate: float
    values: np.ndarray

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.values)

    def manifest(self) -> dict:
        return {"rate": self.rate, "vertex_count": self.graph.size, "convention": rate_label(self.rate)}

    def to_csv(self, path) -> Path:
        path = Path(path)
        np.savetxt(path, self.values, delimiter=",")
        return path


def rate_label(rate: float) -> str:
    if rate == 1.0:
        return "1"
    if abs(rate - RETUNED_RATE) < 1e-15:
        return "retuned"
    return repr(rate)


def green_matrix(g: WiredGraph, rate: float = 1.0) -> GreenMatrix:
    """Dense Green matrix from a Cholesky solve of the killed generator."""
    rate = resolve_rate(rate)
    V = g.size
    if V == 0:
        raise ValueError("empty interior")
    if V > MAX_DENSE_VERTICES:
        raise GraphTooLargeError(f"{V} interior vertices exceeds the dense limit {MAX_DENSE_VERTICES}")
    K = killed_generator(g, rate).toarray()
    try:
        cf = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError as err:  # pragma: no cover - impossible for wired graphs
        raise RuntimeError("killed generator is singular") from err
    G = scipy.linalg.cho_solve(cf, np.eye(V))
    G = 0.5 * (G + G.T)
    return GreenMatrix(graph=g, rate=rate, values=G)


class GreenSolver:
    """Sparse LU of the killed generator for single columns on large graphs."""

    def __init__(self, g: WiredGraph, rate: float = 1.0):
        self.graph = g
        self.rate = resolve_rate(rate)
        self._lu = splu(killed_generator(g, self.rate))

    def column(self, x: int) -> np.ndarray:
        e = np.zeros(self.graph.size)
        e[x] = 1.0
        return self._lu.solve(e)

    def diagonal_entry(self, x: int) -> float:
        return float(self.column(x)[x])

    def row_sums(self) -> np.ndarray:
        return self._lu.solve(np.ones(self.graph.size))

    def diagonal(self, block: int = 512) -> np.ndarray:
        """Full diagonal by blocked solves; memory is ``V * block`` floats."""
        V = self.graph.size
        out = np.empty(V)
        for lo in range(0, V, block):
            hi = min(V, lo + block)
            E = np.zeros((V, hi - lo))
            E[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
            out[lo:hi] = self._lu.solve(E)[np.arange(lo, hi), np.arange(hi - lo)]
        return out


# ---------------------------------------------------------------------------
# hitting problems


_STEPS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


def _lattice_targets(free: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Ids (rows of ``pts``) of the 4 lattice neighbors of each free point, flattened."""
    lo = pts.min(axis=0) - 1
    hi = pts.max(axis=0) + 1
    lookup = np.full(tuple(hi - lo + 1), -1, dtype=np.int64)
    lookup[pts[:, 0] - lo[0], pts[:, 1] - lo[1]] = np.arange(len(pts))
    if np.count_nonzero(lookup >= 0) != len(pts):
        raise ValueError("point sets must be disjoint")
    nb = free[:, None, :] + _STEPS[None, :, :]
    nid = lookup[nb[..., 0] - lo[0], nb[..., 1] - lo[1]]
    if np.any(nid < 0):
        raise ValueError("free region is not closed: a neighbor lies outside the given sets")
    return nid.ravel()


@dataclass(frozen=True, eq=False)
class HittingProblem:
    """Discrete harmonic problem on a finite graph.

    ``offsets``/``targets`` give the (multi-)adjacency of nodes ``0..K-1``;
    ``A`` and ``B`` are disjoint absorbing node sets.  ``labels`` optionally
    maps node ids back to lattice coordinates.
    """

    offsets: np.ndarray
    targets: np.ndarray
    A: np.ndarray
    B: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        A = np.unique(np.asarray(self.A, dtype=np.int64))
        B = np.unique(np.asarray(self.B, dtype=np.int64))
        if len(A) == 0 or len(B) == 0:
            raise ValueError("absorbing sets must be nonempty")
        if np.intersect1d(A, B).size:
            raise ValueError("absorbing sets must be disjoint")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def size(self) -> int:
        return len(self.offsets) - 1

    @classmethod
    def lattice(cls, free, A, B) -> "HittingProblem":
        """SRW on Z^2 among ``free`` points, absorbed on ``A`` (value 1) or ``B`` (value 0).

        Every lattice neighbor of a free point must belong to one of the three sets.
        """
        free = np.asarray(free, dtype=np.int64).reshape(-1, 2)
        A = np.asarray(A, dtype=np.int64).reshape(-1, 2)
        B = np.asarray(B, dtype=np.int64).reshape(-1, 2)
        pts = np.vstack([free, A, B])
        targets = _lattice_targets(free, pts)
        K = len(pts)
        offsets = np.zeros(K + 1, dtype=np.int64)
        offsets[1 : len(free) + 1] = 4 * np.arange(1, len(free) + 1)
        offsets[len(free) + 1 :] = 4 * len(free)
        nA = len(A)
        return cls(
            offsets=offsets,
            targets=targets,
            A=np.arange(len(free), len(free) + nA),
            B=np.arange(len(free) + nA, K),
            labels=pts,
        )

    @classmethod
    def path(cls, M: int, A: Sequence[int], B: Sequence[int]) -> "HittingProblem":
        """Nearest-neighbor walk on ``{0, ..., M}``."""
        adj = []
        for i in range(M + 1):
            adj.append([j for j in (i - 1, i + 1) if 0 <= j <= M])
        offsets = np.zeros(M + 2, dtype=np.int64)
        offsets[1:] = np.cumsum([len(a) for a in adj])
        targets = np.array([t for a in adj for t in a], dtype=np.int64)
        return cls(offsets, targets, np.asarray(A), np.asarray(B), labels=np.arange(M + 1))

    @classmethod
    def wired(cls, g: WiredGraph, A: Sequence[int], B: Sequence[int]) -> "HittingProblem":
        """Walk on a wired graph; node ``g.boundary`` is ``∂``."""
        return cls(g.offsets, g.targets, np.asarray(A), np.asarray(B))


def _solve_harmonic(p: HittingProblem, boundary_values: np.ndarray):
    """Solve ``h`` harmonic off ``A ∪ B`` with the given values on ``A ∪ B``.

    ``boundary_values`` is indexed like ``concatenate([A, B])``.  Returns the
    full node vector and the max residual of the harmonic equations.
    """
    K = p.size
    deg = np.diff(p.offsets)
    absorbing = np.concatenate([p.A, p.B])
    fixed = np.zeros(K, dtype=bool)
    fixed[absorbing] = True
    h = np.zeros(K)
    h[absorbing] = boundary_values
    free = np.flatnonzero(~fixed)
    if len(free) == 0:
        return h, 0.0
    pos = np.full(K, -1, dtype=np.int64)
    pos[free] = np.arange(len(free))
    rows = np.repeat(np.arange(K), deg)
    sel = ~fixed[rows]
    r, c = rows[sel], p.targets[sel]
    inner = ~fixed[c]
    L = sp.csc_matrix(
        (np.concatenate([deg[free].astype(float), -np.ones(int(inner.sum()))]),
         (np.concatenate([pos[free], pos[r[inner]]]), np.concatenate([pos[free], pos[c[inner]]]))),
        shape=(len(free), len(free)),
    )
    rhs = np.bincount(pos[r[~inner]], weights=h[c[~inner]], minlength=len(free))
    sol = splu(L).solve(rhs)
    h[free] = sol
    resid = float(np.max(np.abs(L @ sol - rhs))) if len(free) else 0.0
    return h, resid


@dataclass(frozen=True, eq=False)
class HittingSolution:
    values: np.ndarray
    residual: float
    problem: HittingProblem

    def at(self, node: int) -> float:
        return float(self.values[node])


def hitting_probability(p: HittingProblem) -> HittingSolution:
    """``P_y(hit A before B)`` for every node ``y``."""
    vals = np.concatenate([np.ones(len(p.A)), np.zeros(len(p.B))])
    h, resid = _solve_harmonic(p, vals)
    return HittingSolution(values=h, residual=resid, problem=p)


def annulus_hitting(x: Sequence[int], r: float, R: float, starts) -> np.ndarray:
    """``P_y(tau_{B(x;r)} < tau_{∂B(x;R)})`` for SRW on Z^2 at each start ``y``."""
    inner = ball(x, r)
    outer = ball(x, R)
    inner_set = {tuple(q) for q in inner.tolist()}
    free = np.array([q for q in outer.tolist() if tuple(q) not in inner_set], dtype=np.int64)
    prob = HittingProblem.lattice(free, inner, outer_boundary(outer))
    sol = hitting_probability(prob)
    lookup = {tuple(q): i for i, q in enumerate(prob.labels.tolist())}
    return np.array([sol.values[lookup[tuple(map(int, y))]] for y in starts])


def gamblers_ruin_formula(x, y, r: float, R: float) -> float:
    """Leading term ``(R - log ||x - y||) / (R - r)``."""
    d = math.hypot(y[0] - x[0], y[1] - x[1])
    return (R - math.log(d)) / (R - r)


# ---------------------------------------------------------------------------
# exit laws


def _ball_problem(center, R: float):
    inside = ball(center, R)
    bnd = outer_boundary(inside)
    return inside, bnd


def poisson_kernel(x: Sequence[int], R: float, start: Sequence[int]):
    """Exit distribution of SRW from ``B(x;R)`` started at ``start``.

    Returns ``(points, probabilities)`` over the outer boundary ``∂B(x;R)``.
    """
    inside, bnd = _ball_problem(x, R)
    s = tuple(map(int, start))
    lookup = {tuple(q): i for i, q in enumerate(inside.tolist())}
    if s not in lookup:
        raise ValueError(f"start {s} is not inside B({tuple(x)};{R})")
    n_in = len(inside)
    tgt = _lattice_targets(inside, np.vstack([inside, bnd]))
    rows = np.repeat(np.arange(n_in), 4)
    inner = tgt < n_in
    # the free-block generator is symmetric, so one solve gives the exit row
    L = sp.csc_matrix(
        (np.concatenate([np.full(n_in, 4.0), -np.ones(int(inner.sum()))]),
         (np.concatenate([np.arange(n_in), rows[inner]]), np.concatenate([np.arange(n_in), tgt[inner]]))),
        shape=(n_in, n_in),
    )
    e = np.zeros(n_in)
    e[lookup[s]] = 1.0
    y = splu(L).solve(e)
    out = np.bincount(tgt[~inner] - n_in, weights=y[rows[~inner]], minlength=len(bnd))
    return bnd, out


# potential kernel of SRW on Z^2 by composite Gauss-Legendre quadrature of
# a(x) = (2/pi) int_0^pi (1 - cos(x1 t) e^{-|x2| s(t)}) / sinh s(t) dt,  cosh s = 2 - cos t
def _quadrature_nodes():
    edges = np.concatenate([[0.0], np.geomspace(1e-5, 0.3, 24), np.linspace(0.3, np.pi, 97)[1:]])
    xg, wg = np.polynomial.legendre.leggauss(24)
    a, b = edges[:-1, None], edges[1:, None]
    t = (0.5 * (b - a) * xg + 0.5 * (b + a)).ravel()
    w = (0.5 * (b - a) * wg).ravel()
    s = np.arccosh(2.0 - np.cos(t))
    return t, w, s, np.sinh(s)


_PK_NODES = None


def potential_kernel(pts) -> np.ndarray:
    """Potential kernel ``a(x) = sum_n [P(S_n = 0) - P(S_n = x)]`` with ``a(e_1) = 1``."""
    global _PK_NODES
    if _PK_NODES is None:
        _PK_NODES = _quadrature_nodes()
    t, w, s, sh = _PK_NODES
    p = np.abs(np.asarray(pts, dtype=float).reshape(-1, 2))
    lo, hi = p.min(axis=1), p.max(axis=1)
    out = np.empty(len(p))
    for i in range(0, len(p), 256):
        f = (1.0 - np.cos(lo[i : i + 256, None] * t) * np.exp(-hi[i : i + 256, None] * s)) / sh
        out[i : i + 256] = (f @ w) * (2.0 / np.pi)
    return out


@dataclass(frozen=True, eq=False)
class HarmonicMeasure:
    points: np.ndarray
    values: np.ndarray
    outer_log_radius: float
    escape_form: np.ndarray
    truncation_diff: float

    @property
    def mass(self) -> float:
        return float(self.values.sum())


def _truncated_harmonic_measure(center, k: float, m: float):
    """Return (points of ∂_i B(x;k), potential-kernel form, escape-probability form)."""
    A = ball(center, k)
    pts_i = inner_boundary(A)
    if len(A) == 1:
        return pts_i, np.ones(1), np.ones(1)
    outer = ball(center, m)
    a_set = {tuple(q) for q in A.tolist()}
    free = np.array([q for q in outer.tolist() if tuple(q) not in a_set], dtype=np.int64)
    bnd = outer_boundary(outer)
    prob = HittingProblem.lattice(free, A, bnd)
    nA = len(A)
    # E_y[ a(Z_out - x) ; tau_out < tau_A ]   and   P_y(tau_out < tau_A)
    a_vals = potential_kernel(bnd - np.asarray(center))
    pk, _ = _solve_harmonic(prob, np.concatenate([np.zeros(nA), a_vals]))
    esc, _ = _solve_harmonic(prob, np.concatenate([np.zeros(nA), np.ones(len(bnd))]))
    lookup = {tuple(q): i for i, q in enumerate(prob.labels.tolist())}
    nbr_ids = np.array([[lookup[tuple(q + s)] for s in _STEPS.tolist()] for q in pts_i])
    pk_w = pk[nbr_ids].mean(axis=1)
    esc_w = esc[nbr_ids].mean(axis=1)
    # g_A = a - E a(Z_{tau_A}); the second term tends to a constant fixed by total mass 1
    const = (pk_w.sum() - 1.0) / esc_w.sum()
    values = pk_w - const * esc_w
    return pts_i, values, esc_w / esc_w.sum()


def harmonic_measure(x: Sequence[int], k: float, m: float | None = None) -> HarmonicMeasure:
    """Harmonic measure from infinity of ``B(x;k)``, truncated at ``∂B(x;m)``.

    ``truncation_diff`` is the max entrywise change against truncation at
    ``m - 1``; ``escape_form`` is the normalized escape-probability version.
    """
    if m is None:
        m = k + 5.0
    if not m > k + 1:
        raise ValueError("need m > k + 1")
    pts, vals, esc = _truncated_harmonic_measure(x, k, m)
    if len(pts) == 1:
        diff = 0.0
    else:
        _, prev, _ = _truncated_harmonic_measure(x, k, m - 1.0) if m - 1.0 > k + 1 else (None, vals, None)
        diff = float(np.max(np.abs(prev - vals)))
    return HarmonicMeasure(points=pts, values=vals, outer_log_radius=m, escape_form=esc, truncation_diff=diff)


# ---------------------------------------------------------------------------
# closed forms tied to the excursion picture


@dataclass(frozen=True)
class UnvisitedProbability:
    probability: float
    green_diagonal: float
    excursion_rate: float
    normalization_residual: float
    rate: float


def excursion_hit_rate(g: WiredGraph, rate: float, x: int) -> float:
    """``lambda_x = rate * deg(∂) * P_∂(tau_x < tau_∂^+)``."""
    rate = resolve_rate(rate)
    V = g.size
    sol = hitting_probability(HittingProblem.wired(g, [x], [V]))
    nb = g.neighbors(V)
    p_hit = float(sol.values[nb].mean())
    return rate * g.boundary_degree * p_hit


def unvisited_probability(g: WiredGraph, rate: float, x: int, t: float, green=None) -> UnvisitedProbability:
    """``P(L_t(x) = 0) = exp(-t / G(x, x))`` with an excursion-rate cross-check."""
    rate = resolve_rate(rate)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if green is not None:
        gxx = float(green.values[x, x]) if isinstance(green, GreenMatrix) else float(green)
    else:
        gxx = GreenSolver(g, rate).diagonal_entry(x)
    lam = excursion_hit_rate(g, rate, x)
    resid = abs(lam * gxx - 1.0)
    if resid > 1e-8:
        raise AssertionError(f"excursion normalization off by {resid:.3e} at vertex {x}")
    return UnvisitedProbability(
        probability=math.exp(-t / gxx),
        green_diagonal=gxx,
        excursion_rate=lam,
        normalization_residual=resid,
        rate=rate,
    )


def two_stage_race_probability(tau: float, p: float, q: float) -> float:
    """``P(no two-stage success, at least one second-stage failure)`` over Poisson(tau) trials."""
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError("p and q must lie in (0, 1)")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return -math.expm1(-tau * p * q) * math.exp(-tau * p * (1.0 - q))

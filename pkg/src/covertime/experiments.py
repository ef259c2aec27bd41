"""Seeded, persisted experiment suites.

Every suite is a pure function of its config: per-replica observables depend
only on ``(config, seed, replica)`` and are written as JSON lines.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as st

from . import __version__, _rng
from . import onedim
from .coupling import second_moment_check, verify_ray_knight
from .exact import GreenSolver, green_matrix, rate_label, resolve_rate, two_stage_race_probability, RETUNED_RATE
from .gff import clustering_scale, eval_centering, phase_b_time
from .lattice import (
    DomainShape,
    bulk_vertices,
    cluster_process,
    discretize_domain,
    is_clustered,
    square_domain,
    wire_boundary,
)
from .stats import chi_square_pvalue, ks_gumbel_vs_gaussian, ks_statistic, skewness
from .walk import WalkConfig, cover_batch, phase_observables

EXPERIMENTS = ("cover", "phase-a", "phase-b-race", "isomorphism", "onedim-laws", "ballot", "race")
DEFAULT_N_GRID = (4.0, 4.5, 5.0, 5.5)
DEFAULT_S_GRID = (-2.0, -1.0, 0.0, 1.0, 2.0, 3.0)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    shape: DomainShape = field(default_factory=DomainShape.square)
    n_grid: tuple = DEFAULT_N_GRID
    rate: str = "1"
    replicas: int = 100
    seed: int = 0
    out: str | None = None
    format: str = "json"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if len(self.n_grid) == 0:
            raise ValueError("n grid must be nonempty")
        if self.format not in ("json", "csv"):
            raise ValueError("format must be json or csv")
        resolve_rate(self.rate)
        object.__setattr__(self, "n_grid", tuple(float(n) for n in self.n_grid))

    @property
    def rate_value(self) -> float:
        return resolve_rate(self.rate)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "shape": self.shape.to_dict(),
            "n_grid": list(self.n_grid),
            "rate": rate_label(self.rate_value),
            "replicas": self.replicas,
            "seed": self.seed,
            "format": self.format,
            "options": _plain(self.options),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ResultRecord:
    experiment: str
    parameters: dict
    records: list
    summary: dict
    version: str = __version__
    provenance: dict = field(default_factory=dict)


def _plain(obj):
    """JSON-ready copy: numpy scalars and arrays become Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def thread_count() -> int:
    env = os.environ.get("COVERTIME_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError("COVERTIME_THREADS must be an integer") from None
    return os.cpu_count() or 1


def _chunks(replicas: int, parts: int) -> list[range]:
    size = max(1, math.ceil(replicas / parts))
    return [range(lo, min(replicas, lo + size)) for lo in range(0, replicas, size)]


def _parallel(fn, jobs):
    jobs = list(jobs)
    threads = min(thread_count(), len(jobs))
    if threads <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(threads) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _graph(shape: DomainShape, n: float):
    d = discretize_domain(shape, n)
    if len(d) < 9:
        raise ValueError(f"domain at n={n} has {len(d)} interior vertices; need at least 9")
    return wire_boundary(d)


# ---------------------------------------------------------------------------
# cover time


def _cover_chunk(shape, n, rate, seed, reps):
    g = _graph(shape, n)
    return cover_batch(WalkConfig(g, rate, seed), reps)


def cover_fluctuation(real_time: np.ndarray, volume: int, N: int, rate: float, n: float) -> np.ndarray:
    """Centered cover times: intro centering at rate 1, retuned centering otherwise."""
    if rate == 1.0:
        tc = eval_centering(N, "intro-cover") ** 2
        return (real_time / volume - tc) / math.log(N)
    tc = eval_centering(n, "retuned-cover") ** 2
    return (real_time / volume - tc) / n


def run_cover_time_experiment(cfg: ExperimentConfig) -> ResultRecord:
    rate = cfg.rate_value
    records, summary = [], {}
    for n in cfg.n_grid:
        g = _graph(cfg.shape, n)
        d = g.domain
        jobs = [(cfg.shape, n, rate, cfg.seed, r) for r in _chunks(cfg.replicas, thread_count())]
        parts = _parallel(_cover_chunk, jobs)
        real = np.concatenate([p[0] for p in parts])
        bt = np.concatenate([p[1] for p in parts])
        last = np.concatenate([p[2] for p in parts])
        fl = cover_fluctuation(real, len(d), d.N, rate, n)
        in_bulk = np.zeros(g.size, dtype=bool)
        in_bulk[bulk_vertices(d)] = True
        xy = g.coords[last]
        for r in range(cfg.replicas):
            records.append({
                "n": n, "seed": cfg.seed, "replica": r,
                "cover_time": float(real[r]), "cover_boundary_time": float(bt[r]),
                "fluctuation": float(fl[r]),
                "last_x": int(xy[r, 0]), "last_y": int(xy[r, 1]),
                "last_scaled": [float(xy[r, 0] / d.N), float(xy[r, 1] / d.N)],
                "last_in_bulk": bool(in_bulk[last[r]]),
            })
        s = {"N": d.N, "vertex_count": len(d), "mean_fluctuation": float(fl.mean()),
             "skewness": skewness(fl) if len(fl) > 2 else None,
             "bulk_fraction": float(in_bulk[last].mean())}
        if len(fl) >= 50:
            s.update(ks_gumbel_vs_gaussian(fl))
            s["gumbel_scale_reference"] = 1.0 / (2.0 * math.pi)
        hist, _, _ = np.histogram2d(xy[:, 0] / d.N, xy[:, 1] / d.N, bins=10, range=[[0, 1], [0, 1]])
        s["last_vertex_histogram"] = hist.astype(int).tolist()
        ov = int(cfg.options.get("overlay_samples", 0))
        if ov > 0 and len(fl) >= 50:
            s["overlay"] = _mixture_overlay(g, rate, fl, ov, cfg.seed)
        summary[f"n={n:g}"] = s
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, summary, provenance={"seed": cfg.seed, "stream": "walk"})


def _mixture_overlay(g, rate, fl, samples, seed) -> dict:
    """One-parameter least-squares fit (label FIT) of the mixture law
    ``E exp(-C ||Z|| exp(-2 pi s + 4 sqrt(pi) hbar))`` to the empirical CDF.

    ``(||Z||, hbar)`` pairs come from the LQG proxy of sampled fields at the
    retuned-rate covariance; requires a graph small enough for a dense solve.
    """
    from scipy.optimize import minimize_scalar

    from .gff import covariance_factor, lqg_weights, sample_dgff_batch

    G = green_matrix(g, RETUNED_RATE)
    f = covariance_factor(G)
    H = sample_dgff_batch(f, seed, range(samples))
    alpha = 2.0 * math.sqrt(2.0)
    mass = np.array([lqg_weights(h, alpha, f.variances).sum() for h in H])
    hbar = H.mean(axis=1)
    xs = np.sort(fl)
    emp = (np.arange(1, len(xs) + 1) - 0.5) / len(xs)
    expo = np.exp(4.0 * math.sqrt(math.pi) * hbar)[None, :] * mass[None, :]

    def model(logc):
        return np.exp(-np.exp(logc) * expo * np.exp(-2.0 * math.pi * xs)[:, None]).mean(axis=1)

    res = minimize_scalar(lambda c: float(((model(c) - emp) ** 2).sum()), bounds=(-50, 50), method="bounded")
    return {"label": "FIT", "c_star": float(math.exp(res.x)), "sup_gap": float(np.abs(model(res.x) - emp).max())}


# ---------------------------------------------------------------------------
# phase A


def _phase_a_chunk(shape, n, rate, seed, reps):
    g = _graph(shape, n)
    bulk = bulk_vertices(g.domain)
    cfg = WalkConfig(g, rate, seed)
    return [phase_observables(cfg.with_replica(r), n, bulk=bulk) for r in reps]


def field_average_sd(g, rate) -> float:
    """Standard deviation of the field average, ``sqrt(1' G 1 / 2) / |D|``."""
    s = GreenSolver(g, rate).row_sums().sum()
    return math.sqrt(0.5 * s) / g.size


def run_phase_a_experiment(cfg: ExperimentConfig) -> ResultRecord:
    rate = resolve_rate(cfg.options.get("walk_rate", "retuned"))
    records, summary = [], {}
    for n in cfg.n_grid:
        g = _graph(cfg.shape, n)
        jobs = [(cfg.shape, n, rate, cfg.seed, r) for r in _chunks(cfg.replicas, thread_count())]
        rows = [row for part in _parallel(_phase_a_chunk, jobs) for row in part]
        for r, row in enumerate(rows):
            records.append({"n": n, "seed": cfg.seed, "replica": r, **{k: v for k, v in row.items() if k != "n"}})
        u = np.array([row["boxes_scaled"] for row in rows])
        c = np.array([row["clustered"] for row in rows])
        th = np.array([row["t_hat"] for row in rows])
        s = {
            "t": rows[0]["t"],
            "clustering_scale": clustering_scale(n),
            "tight_fraction": float(((u > 0.01) & (u < 100)).mean()),
            "empty_fraction": float((u == 0).mean()),
            "clustered_fraction": float(c.mean()),
            "mean_boxes_scaled": float(u.mean()),
            "mean_unvisited_scaled": float(np.mean([row["unvisited_scaled"] for row in rows])),
            "mean_clusters_scaled": float(np.mean([row["clusters_scaled"] for row in rows])),
            "t_hat_mean": float(th.mean()),
            "t_hat_sd": float(th.std(ddof=1)) if len(th) > 1 else None,
            "field_average_sd": field_average_sd(g, rate),
            "boxes_histogram": np.bincount([row["boxes"] for row in rows]).tolist(),
        }
        summary[f"n={n:g}"] = s
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, summary, provenance={"seed": cfg.seed, "stream": "walk"})


# ---------------------------------------------------------------------------
# phase B race


def planted_set(g, spec) -> np.ndarray:
    """Vertex ids for a planted set: ``"center"`` or a list of lattice points."""
    if isinstance(spec, str):
        if spec != "center":
            raise ValueError(f"unknown planted set {spec!r}")
        xy = g.coords.astype(float)
        return np.array([int(np.argmin(((xy - xy.mean(axis=0)) ** 2).sum(axis=1)))])
    pts = np.asarray(spec, dtype=np.int64).reshape(-1, 2)
    return g.domain.ids_of(pts)


def _race_chunk(shape, n, rate, seed, reps, target):
    g = _graph(shape, n)
    return cover_batch(WalkConfig(g, rate, seed), reps, target)


def run_phase_b_race_experiment(cfg: ExperimentConfig, planted="center") -> ResultRecord:
    rate = resolve_rate(cfg.options.get("walk_rate", "retuned"))
    s_grid = np.array(cfg.options.get("s_grid", DEFAULT_S_GRID), dtype=float)
    records, summary = [], {}
    for n in cfg.n_grid:
        g = _graph(cfg.shape, n)
        A = planted_set(g, cfg.options.get("planted", planted))
        bulk = set(bulk_vertices(g.domain).tolist())
        r_n = clustering_scale(n)
        if len(A) and (not all(int(a) in bulk for a in A) or not is_clustered(g.coords[A], r_n, n - r_n)):
            raise ValueError("planted set must be clustered and inside the bulk")
        if len(A) == 0:
            bt = np.zeros(cfg.replicas)
        else:
            jobs = [(cfg.shape, n, rate, cfg.seed, r, A) for r in _chunks(cfg.replicas, thread_count())]
            bt = np.concatenate([p[1] for p in _parallel(_race_chunk, jobs)])
        tB = phase_b_time(n)
        for r in range(cfg.replicas):
            records.append({"n": n, "seed": cfg.seed, "replica": r, "cover_boundary_time": float(bt[r])})
        emp = np.array([(bt <= tB + s * n).mean() for s in s_grid])
        xi = len(cluster_process(g.coords[A], r_n, n).weights) if len(A) else 0
        asym = np.exp(-np.exp(-(s_grid - math.log(xi / math.sqrt(n))))) if xi else np.ones_like(s_grid)
        s = {"t_B": tB, "planted_size": int(len(A)), "clusters": xi, "s_grid": s_grid.tolist(),
             "empirical_cdf": emp.tolist(), "asymptotic_cdf": asym.tolist(),
             "asymptotic_sup_gap": float(np.abs(emp - asym).max())}
        if len(A) == 1:
            Gxx = GreenSolver(g, rate).diagonal_entry(int(A[0]))
            exact = 1.0 - np.exp(-np.maximum(tB + s_grid * n, 0.0) / Gxx)
            s["single_vertex_cdf"] = exact.tolist()
            s["single_vertex_sup_gap"] = float(np.abs(emp - exact).max())
        tail = np.array([(bt > tB + s_ * n).mean() for s_ in s_grid])
        bound = 2.0 * np.exp(-s_grid) * len(A) / math.sqrt(n)
        s["tail"] = tail.tolist()
        s["tail_bound"] = bound.tolist()
        s["tail_bound_holds"] = bool(np.all(tail <= bound))
        summary[f"n={n:g}"] = s
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, summary, provenance={"seed": cfg.seed, "stream": "walk"})


# ---------------------------------------------------------------------------
# excursion race


def simulate_two_stage_race(tau: float, p: float, q: float, replicas: int, seed: int, chunk: int = 250_000) -> np.ndarray:
    """Per-chunk event counts of the two-stage Poisson experiment."""
    counts = []
    for c, lo in enumerate(range(0, replicas, chunk)):
        m = min(chunk, replicas - lo)
        rng = _rng.replica_rng(seed, c, _rng.RACE)
        N = rng.poisson(tau, m)
        first = rng.binomial(N, p)
        fails = rng.binomial(first, q)
        counts.append(int(((first - fails == 0) & (fails >= 1)).sum()))
    return np.array(counts)


def run_race_experiment(cfg: ExperimentConfig) -> ResultRecord:
    grid = cfg.options.get("race_grid", [(1.0, 0.5, 0.5), (3.0, 0.2, 0.7), (0.5, 0.9, 0.3)])
    chunk = int(cfg.options.get("chunk", 250_000))
    records, rows = [], []
    for j, (tau, p, q) in enumerate(grid):
        counts = simulate_two_stage_race(tau, p, q, cfg.replicas, cfg.seed + j, chunk)
        freq = counts.sum() / cfg.replicas
        exact = two_stage_race_probability(tau, p, q)
        se = math.sqrt(max(exact * (1 - exact), 1e-300) / cfg.replicas)
        for c, k in enumerate(counts):
            records.append({"tau": tau, "p": p, "q": q, "seed": cfg.seed + j, "replica": c, "events": int(k)})
        rows.append({"tau": tau, "p": p, "q": q, "frequency": float(freq), "exact": exact,
                     "z": float((freq - exact) / se), "pass": bool(abs(freq - exact) <= 3 * se)})
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, {"rows": rows}, provenance={"seed": cfg.seed, "stream": "race"})


# ---------------------------------------------------------------------------
# isomorphism and 1D suites


def default_probes(g) -> list[int]:
    """Six probes: center, a corner-adjacent vertex and four mid-way points."""
    xy = g.coords
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    mid = (lo + hi) // 2
    pts = [mid, lo, (lo + mid) // 2, (mid + hi) // 2, [lo[0], mid[1]], [mid[0], (mid[1] + hi[1]) // 2]]
    ids = []
    for p in pts:
        i = int(np.argmin(((xy - np.asarray(p)) ** 2).sum(axis=1)))
        if i not in ids:
            ids.append(i)
    return ids


def run_isomorphism_suite(cfg: ExperimentConfig) -> ResultRecord:
    sides = cfg.options.get("sides", [5, 9, 13])
    t = float(cfg.options.get("t", 1.0))
    rate = cfg.rate_value
    records, summary = [], {}
    for side in sides:
        g = wire_boundary(square_domain(int(side)))
        probes = default_probes(g)
        rep = verify_ray_knight(g, rate, t, probes, cfg.replicas, cfg.seed)
        failing = rep.failing_probes(0.01)
        sm = second_moment_check(g, rate, min(cfg.replicas, 20000), cfg.seed)
        row = {"side": side, "probes": probes, "ks_pvalue": rep.ks_pvalue, "ks_statistic": rep.ks_statistic,
               "mean_residual": rep.mean_residual, "local_time_residual": rep.local_time_residual,
               "functionals": rep.functionals, "failing": len(failing),
               "second_moment": sm.empirical, "second_moment_exact": sm.exact,
               "pass": len(failing) <= 1 and sm.within_bound}
        records.append({"seed": cfg.seed, "replica": len(records), **row})
        summary[f"side={side}"] = {"failing": len(failing), "pass": row["pass"]}
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, summary, provenance={"seed": cfg.seed, "stream": "walk+field"})


def _pooled_expected(values: np.ndarray, spec_of, top: int) -> np.ndarray:
    """Sum over samples of each sample's conditional pmf on ``0..top``."""
    grid = np.arange(top + 1)
    exp = np.zeros(top + 1)
    uniq, counts = np.unique(values, return_counts=True)
    for v, c in zip(uniq, counts):
        exp += c * onedim.compound_pmf(spec_of(v), grid)
    return exp


def check_count_law(T: int, i: int, j: int, samples: int, seed: int, excursions: int = 5) -> dict:
    """``T(T-j)`` given ``T(T-i)`` against the Bigeo law, pooled over ``m``."""
    res = onedim.simulate_linear_walk(T, seed, samples, excursions=excursions)
    m = res.downcrossings[:, T - i]
    s = res.downcrossings[:, T - j]
    cells_o, cells_e = [], []
    for mm in np.unique(m):
        sel = s[m == mm]
        spec = onedim.conditional_law(T, i, j, "counts", m=int(mm))
        top = max(int(sel.max()), onedim.effective_support(spec))
        pmf = onedim.compound_pmf(spec, np.arange(top + 1))
        cells_o.append(np.bincount(sel, minlength=top + 1))
        cells_e.append(len(sel) * pmf)
    p = chi_square_pvalue(np.concatenate(cells_o), np.concatenate(cells_e))
    return {"law": "counts", "T": T, "i": i, "j": j, "pvalue": p, "pass": p > 0.01}


def check_local_law(T: int, i: int, samples: int, seed: int, excursions: int = 5) -> dict:
    """``L(T-i)`` after ``excursions`` excursions against Biexp (KS)."""
    res = onedim.simulate_linear_walk(T, seed, samples, excursions=excursions)
    spec = onedim.conditional_law(T, i, kind="local", excursions=excursions)
    ks = ks_statistic(res.local_times[:, T - i], lambda x: onedim.compound_cdf(spec, x))
    return {"law": "local", "T": T, "i": i, "ks": ks.statistic, "pass": ks.statistic < 0.02}


def check_count_given_local(T: int, i: int, j: int, samples: int, seed: int, excursions: int = 5) -> dict:
    """``T(T-j)`` given ``L(T-i)`` against the Poigeo law (pooled chi-square)."""
    res = onedim.simulate_linear_walk(T, seed, samples, excursions=excursions)
    ell = res.local_times[:, T - i]
    s = res.downcrossings[:, T - j]
    a = 1.0 / (j - i + 1)
    top = int(s.max()) + 1
    grid = np.arange(top + 1)
    # pool the conditional pmfs over the observed local times, quantile group by group
    edges = np.quantile(ell, np.linspace(0, 1, 401))
    exp = np.zeros(top + 1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = ell[(ell >= lo) & (ell <= hi)] if hi == edges[-1] else ell[(ell >= lo) & (ell < hi)]
        if len(sel):
            exp += _poigeo_pmf_many(sel * a, a, grid)
    obs = np.bincount(s, minlength=top + 1)
    tail = len(s) - exp.sum()
    exp[-1] += max(tail, 0.0)
    p = chi_square_pvalue(obs, exp)
    return {"law": "counts|local", "T": T, "i": i, "j": j, "pvalue": p, "pass": p > 0.01}


def _poigeo_pmf_many(mus: np.ndarray, q: float, grid: np.ndarray) -> np.ndarray:
    """Sum over ``mus`` of the Poigeo(mu; q) pmf on ``grid``."""
    mmax = int(st.poisson.ppf(1 - 1e-15, mus.max())) + 5
    m = np.arange(mmax + 1)
    w = st.poisson.pmf(m[None, :], mus[:, None]).sum(axis=0)
    return w @ onedim._geometric_sum_pmf(grid, m, q)


def check_marginal(T: int, i: int, t: float, samples: int, seed: int) -> dict:
    res = onedim.simulate_linear_walk(T, seed, samples, t=t)
    ks = ks_statistic(res.local_times[:, T - i], lambda x: onedim.local_time_marginal_cdf(T, i, t, x))
    return {"law": "marginal", "T": T, "i": i, "t": t, "ks": ks.statistic, "pass": ks.statistic < 0.02}


ONEDIM_CASES = ((8, 1, 3), (16, 2, 5), (16, 4, 4))


def run_onedim_laws_suite(cfg: ExperimentConfig) -> ResultRecord:
    cases = [tuple(c) for c in cfg.options.get("cases", ONEDIM_CASES)]
    exc = int(cfg.options.get("excursions", 5))
    rows = []
    for c, (T, i, j) in enumerate(cases):
        seed = cfg.seed + 101 * c
        rows.append(check_count_law(T, i, j, cfg.replicas, seed, exc))
        rows.append(check_local_law(T, i, cfg.replicas, seed + 1, exc))
        rows.append(check_count_given_local(T, i, j, cfg.replicas, seed + 2, exc))
    rows.append(check_marginal(16, 4, 3.0, cfg.replicas, cfg.seed + 7))
    records = [{"seed": cfg.seed, "replica": k, **r} for k, r in enumerate(rows)]
    summary = {"passed": sum(r["pass"] for r in rows), "total": len(rows)}
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, summary, provenance={"seed": cfg.seed, "stream": "linear"})


# ---------------------------------------------------------------------------
# ballot diagnostic


def repulsion_window(k: float, gamma: float, i: int, eta: float) -> tuple[float, float]:
    base = k + i * k**gamma
    return base ** (0.5 - eta), base ** (0.5 + eta)


def _snap(k, gamma, i, eta) -> tuple[int, float]:
    """Lattice count ``m`` whose value ``sqrt(k^g m)`` recenters to the window midpoint."""
    lo, hi = repulsion_window(k, gamma, i, eta)
    kg = k**gamma
    shift = math.sqrt(2.0) * (k + (i - 1) * kg)
    m = max(1, round((shift + math.sqrt(lo * hi)) ** 2 / kg))
    return m, math.sqrt(kg * m) - shift


def run_ballot_diagnostic(cfg: ExperimentConfig) -> ResultRecord:
    gamma = float(cfg.options.get("gamma", 0.25))
    eta = float(cfg.options.get("eta", 0.2))
    ks = cfg.options.get("k_grid", [2.0, 3.0, 4.0])
    Ts = cfg.options.get("T_grid", [2, 3])
    rows = []
    for a, k in enumerate(ks):
        for b, T in enumerate(Ts):
            kg = k**gamma
            mv, vhat = _snap(k, gamma, T, eta)
            mu, uhat = _snap(k, gamma, 1, eta)
            res = onedim.simulate_linear_walk(T, cfg.seed + 1000 * a + b, cfg.replicas, excursions=mv)
            hit = res.downcrossings[:, 1] == mu
            for i in range(2, T):
                lo, hi = repulsion_window(k, gamma, i, eta)
                val = np.sqrt(kg * res.downcrossings[:, i]) - math.sqrt(2.0) * (k + (i - 1) * kg)
                hit &= (val >= lo) & (val <= hi)
            freq = float(hit.mean())
            rate_ = onedim.ballot_rate(k, gamma, T, uhat, vhat) if uhat > 0 and vhat > 0 else float("nan")
            rows.append({"k": k, "T": T, "u_hat": uhat, "v_hat": vhat, "excursions": mv, "target": mu,
                         "frequency": freq, "ballot_rate": rate_,
                         "ratio": freq / rate_ if rate_ and rate_ > 0 and freq > 0 else None})
    records = [{"seed": cfg.seed, "replica": j, **r} for j, r in enumerate(rows)]
    return ResultRecord(cfg.experiment, cfg.to_dict(), records, {"rows": rows, "gate": "none (diagnostic)"}, provenance={"seed": cfg.seed, "stream": "linear"})


RUNNERS = {
    "cover": run_cover_time_experiment,
    "phase-a": run_phase_a_experiment,
    "phase-b-race": run_phase_b_race_experiment,
    "isomorphism": run_isomorphism_suite,
    "onedim-laws": run_onedim_laws_suite,
    "ballot": run_ballot_diagnostic,
    "race": run_race_experiment,
}


def run(cfg: ExperimentConfig) -> ResultRecord:
    return RUNNERS[cfg.experiment](cfg)


# ---------------------------------------------------------------------------
# persistence


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, object]]:
    out = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(_flatten(v, key + "."))
        else:
            out.append((key, json.dumps(_plain(v)) if isinstance(v, (list, tuple)) else _plain(v)))
    return out


def records_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def persist(result: ResultRecord, path, cfg: ExperimentConfig | None = None) -> dict:
    """Write records, a CSV summary and a manifest under directory ``path``."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        fmt = cfg.format if cfg is not None else "json"
        recs = [_plain(r) for r in result.records]
        if fmt == "json":
            rec_path = path / "records.jsonl"
            with rec_path.open("w") as fh:
                for r in recs:
                    fh.write(json.dumps(r, sort_keys=True) + "\n")
        else:
            rec_path = path / "records.csv"
            keys = sorted({k for r in recs for k in r})
            with rec_path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(keys)
                for r in recs:
                    w.writerow([json.dumps(r[k]) if isinstance(r.get(k), (list, dict)) else r.get(k, "") for k in keys])
        with (path / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "value"])
            for k, v in _flatten(result.summary):
                w.writerow([k, v])
        manifest = {
            "experiment": result.experiment,
            "config": _plain(result.parameters),
            "config_hash": cfg.digest() if cfg is not None else None,
            "seed": result.provenance.get("seed"),
            "version": result.version,
            "tag": f"v{result.version}",
            "records": rec_path.name,
            "records_sha256": records_digest(rec_path),
            "summary": _plain(result.summary),
        }
        with (path / "manifest.json").open("w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as err:
        raise OSError(f"cannot write results under {path}: {err}") from err
    return manifest


def load(path) -> ResultRecord:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        rec_path = path / manifest["records"]
        if rec_path.suffix == ".jsonl":
            records = [json.loads(line) for line in rec_path.read_text().splitlines() if line]
        else:
            with rec_path.open(newline="") as fh:
                records = [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]
    except OSError as err:
        raise OSError(f"cannot read results under {path}: {err}") from err
    return ResultRecord(manifest["experiment"], manifest["config"], records, manifest["summary"], manifest["version"], {"seed": manifest["seed"]})


def _parse_cell(v: str):
    if v == "":
        return None
    try:
        return json.loads(v)
    except json.JSONDecodeError:
        return v

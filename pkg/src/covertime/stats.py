"""Goodness-of-fit helpers and the Gumbel maximum-likelihood fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as st


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float


def ks_statistic(samples, cdf) -> KSResult:
    """One-sample KS distance to ``cdf`` with the Kolmogorov asymptotic p-value.

    The supremum is taken over both one-sided limits at every distinct sample
    value, so laws with atoms (and tied samples) are handled exactly.  The
    p-value is conservative when ``cdf`` has jumps.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 10:
        raise ValueError("KS needs at least 10 samples")
    u, first = np.unique(x, return_index=True)
    last = np.append(first[1:], n)
    f_right = np.asarray(cdf(u), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(u, -np.inf)), dtype=float)
    d = max(np.abs(last / n - f_right).max(), np.abs(first / n - f_left).max())
    p = float(st.kstwobign.sf(math.sqrt(n) * d))
    return KSResult(float(d), min(max(p, 0.0), 1.0))


def ks_two_sample(a, b) -> KSResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if min(a.size, b.size) < 10:
        raise ValueError("KS needs at least 10 samples per side")
    r = st.ks_2samp(a, b, method="asymp")
    return KSResult(float(r.statistic), float(min(max(r.pvalue, 0.0), 1.0)))


def tv_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("pmfs must share a support grid")
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def merge_bins(observed, expected, minimum: float = 5.0):
    """Merge adjacent bins left to right until every expected count is at least ``minimum``."""
    o_out, e_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= minimum:
            o_out.append(o_acc)
            e_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if e_out:
            o_out[-1] += o_acc
            e_out[-1] += e_acc
        else:
            o_out.append(o_acc)
            e_out.append(e_acc)
    return np.array(o_out), np.array(e_out)


def chi_square_pvalue(observed, expected, ddof: int = 0) -> float:
    o = np.asarray(observed, dtype=float).ravel()
    e = np.asarray(expected, dtype=float).ravel()
    if o.shape != e.shape:
        raise ValueError("observed and expected differ in length")
    o, e = merge_bins(o, e)
    df = len(o) - 1 - ddof
    if df < 1 or np.any(e <= 0):
        raise ValueError("degenerate binning: fewer than two usable bins")
    stat = float(((o - e) ** 2 / e).sum())
    return float(st.chi2.sf(stat, df))


def skewness(x) -> float:
    return float(st.skew(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    location: float
    scale: float
    log_likelihood: float
    iterations: int
    converged: bool


class ConvergenceError(RuntimeError):
    pass


def gumbel_cdf(x, location: float, scale: float):
    return np.exp(-np.exp(-(np.asarray(x, dtype=float) - location) / scale))


def gumbel_loglik(x, location: float, scale: float) -> float:
    z = (np.asarray(x, dtype=float) - location) / scale
    return float(np.sum(-np.log(scale) - z - np.exp(-z)))


def gumbel_fit(samples, max_iter: int = 200, tol: float = 1e-9, damping: float = 0.5, strict: bool = True) -> FitResult:
    """Maximum likelihood for the Gumbel law ``exp(-exp(-(x - mu) / beta))``.

    The scale solves ``beta = mean(x) - sum(x w) / sum(w)`` with
    ``w = exp(-x / beta)``, iterated with damping; the location follows in
    closed form.  Non-convergence raises unless ``strict`` is false.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 50:
        raise ValueError("Gumbel fit needs at least 50 samples")
    center = x.mean()
    y = x - center
    sd = y.std()
    if not sd > 0:
        raise ValueError("samples are constant")
    beta = sd * math.sqrt(6.0) / math.pi
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a = -y / beta
        w = np.exp(a - a.max())
        target = -(y * w).sum() / w.sum()
        new = (1 - damping) * beta + damping * target
        if not new > 0:
            new = 0.5 * beta
        done = abs(new - beta) <= tol * beta
        beta = new
        if done:
            converged = True
            break
    a = -y / beta
    amax = a.max()
    mu = -beta * (amax + math.log(np.exp(a - amax).mean())) + center
    if not converged and strict:
        raise ConvergenceError(f"Gumbel fit did not converge in {max_iter} iterations")
    return FitResult(float(mu), float(beta), gumbel_loglik(x, mu, beta), it, converged)


def ks_gumbel_vs_gaussian(samples) -> dict:
    """KS distances of the samples to their fitted Gumbel and Gaussian laws."""
    x = np.asarray(samples, dtype=float)
    g = gumbel_fit(x)
    mu, sd = float(x.mean()), float(x.std(ddof=1))
    ks_g = ks_statistic(x, lambda z: gumbel_cdf(z, g.location, g.scale))
    ks_n = ks_statistic(x, lambda z: st.norm.cdf(z, mu, sd))
    return {
        "gumbel_location": g.location,
        "gumbel_scale": g.scale,
        "gumbel_converged": g.converged,
        "normal_mean": mu,
        "normal_sd": sd,
        "ks_gumbel": ks_g.statistic,
        "ks_normal": ks_n.statistic,
    }

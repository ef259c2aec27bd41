"""Compiled event loops for the continuous-time walk on a wired graph.

All kernels draw uniforms from numba's Mersenne Twister (bit-compatible with
``numpy.random.RandomState``).  Per step: one uniform for the holding time
``-log(1 - u) / (rate * deg)``, one for the neighbor slot ``floor(u * deg)``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _step(v, offsets, targets, rate):
    deg = offsets[v + 1] - offsets[v]
    hold = -np.log(1.0 - np.random.random()) / (rate * deg)
    nxt = targets[offsets[v] + int(np.random.random() * deg)]
    return hold, nxt


@njit(cache=True)
def run_to_boundary_time(offsets, targets, boundary, rate, t, seed, local):
    """Walk from ∂ until its local time at ∂ reaches ``t``; fills ``local``.

    Returns elapsed real time.
    """
    np.random.seed(seed)
    local[:] = 0.0
    v = boundary
    elapsed = 0.0
    lb = 0.0
    while True:
        hold, nxt = _step(v, offsets, targets, rate)
        if v == boundary:
            if lb + hold >= t:
                break
            lb += hold
        local[v] += hold
        elapsed += hold
        v = nxt
    local[boundary] = t
    return elapsed + (t - lb)


@njit(cache=True)
def boundary_time_batch(offsets, targets, boundary, rate, t, seeds, out_local, out_elapsed):
    tmp = np.zeros(boundary + 1)
    for r in range(seeds.shape[0]):
        out_elapsed[r] = run_to_boundary_time(offsets, targets, boundary, rate, t, seeds[r], tmp)
        out_local[r, :] = tmp


@njit(cache=True)
def run_logged(offsets, targets, boundary, rate, t, seed):
    """Like ``run_to_boundary_time`` but also returns the event log.

    Row ``j`` of the log is (vertex, holding time); the last ∂ sojourn is
    truncated so that the ∂ holding times sum to ``t``.
    """
    np.random.seed(seed)
    cap = 1024
    ids = np.empty(cap, dtype=np.uint32)
    holds = np.empty(cap, dtype=np.float64)
    k = 0
    lb = 0.0
    v = boundary
    while True:
        hold, nxt = _step(v, offsets, targets, rate)
        done = False
        if v == boundary and lb + hold >= t:
            hold = t - lb
            done = True
        if k == cap:
            cap *= 2
            ids2 = np.empty(cap, dtype=np.uint32)
            holds2 = np.empty(cap, dtype=np.float64)
            ids2[:k] = ids[:k]
            holds2[:k] = holds[:k]
            ids = ids2
            holds = holds2
        ids[k] = v
        holds[k] = hold
        k += 1
        if v == boundary:
            lb += hold
        if done:
            return ids[:k], holds[:k]
        v = nxt


@njit(cache=True)
def run_to_cover(offsets, targets, boundary, rate, seed, target, first_visit, local):
    """Walk from ∂ until every vertex flagged in ``target`` has been visited.

    Returns (cover real time, cover ∂-time, last vertex).  ``first_visit`` gets
    arrival times (``inf`` for never-visited vertices).
    """
    np.random.seed(seed)
    local[:] = 0.0
    first_visit[:] = np.inf
    first_visit[boundary] = 0.0
    remaining = 0
    for i in range(target.shape[0]):
        if target[i]:
            remaining += 1
    if remaining == 0:
        return 0.0, 0.0, -1
    v = boundary
    elapsed = 0.0
    while True:
        hold, nxt = _step(v, offsets, targets, rate)
        local[v] += hold
        elapsed += hold
        v = nxt
        if first_visit[v] == np.inf:
            first_visit[v] = elapsed
            if target[v]:
                remaining -= 1
                if remaining == 0:
                    return elapsed, local[boundary], v


@njit(cache=True)
def cover_batch(offsets, targets, boundary, rate, seeds, target, out_real, out_bt, out_last):
    fv = np.empty(boundary + 1)
    loc = np.empty(boundary + 1)
    for r in range(seeds.shape[0]):
        a, b, c = run_to_cover(offsets, targets, boundary, rate, seeds[r], target, fv, loc)
        out_real[r] = a
        out_bt[r] = b
        out_last[r] = c


@njit(cache=True)
def excursion_batch(offsets, targets, boundary, rate, seed, count, probe, out_hit, out_local, out_length):
    """``count`` consecutive excursions ∂ -> interior -> ∂ from one stream.

    The ∂ holding time before each excursion is drawn and discarded so the
    stream matches a continuous run.
    """
    np.random.seed(seed)
    for e in range(count):
        hold, v = _step(boundary, offsets, targets, rate)
        hit = False
        lt = 0.0
        length = 0.0
        while v != boundary:
            hold, nxt = _step(v, offsets, targets, rate)
            if v == probe:
                hit = True
                lt += hold
            length += hold
            v = nxt
        out_hit[e] = hit
        out_local[e] = lt
        out_length[e] = length


@njit(cache=True)
def single_excursion(offsets, targets, boundary, rate, seed):
    np.random.seed(seed)
    cap = 256
    ids = np.empty(cap, dtype=np.int64)
    holds = np.empty(cap, dtype=np.float64)
    hold, v = _step(boundary, offsets, targets, rate)
    k = 0
    while v != boundary:
        hold, nxt = _step(v, offsets, targets, rate)
        if k == cap:
            cap *= 2
            ids2 = np.empty(cap, dtype=np.int64)
            holds2 = np.empty(cap, dtype=np.float64)
            ids2[:k] = ids[:k]
            holds2[:k] = holds[:k]
            ids = ids2
            holds = holds2
        ids[k] = v
        holds[k] = hold
        k += 1
        v = nxt
    return ids[:k], holds[:k]


@njit(cache=True)
def count_crossings(ids, holds, boundary, in_inner, out_outer, t):
    """Downcrossings from outside the outer ball into the inner ball.

    Scans the log until the ∂ local time first exceeds ``t``.  Returns
    (entry positions, exit positions) into ``ids``; exits may be one shorter
    when the last excursion is unfinished.
    """
    entries = np.empty(ids.shape[0], dtype=np.int64)
    exits = np.empty(ids.shape[0], dtype=np.int64)
    ne = 0
    nx = 0
    lb = 0.0
    inside = False
    for j in range(ids.shape[0]):
        v = ids[j]
        if v == boundary:
            lb += holds[j]
            if lb > t:
                break
        if not inside:
            if in_inner[v]:
                entries[ne] = j
                ne += 1
                inside = True
        else:
            if out_outer[v]:
                exits[nx] = j
                nx += 1
                inside = False
    return entries[:ne], exits[:nx]


@njit(cache=True)
def linear_walk_batch(T, count, seeds, excursions, t_stop, out_local, out_down):
    """CTSRW with unit edge rates on {0..T} started at T.

    Stops after ``excursions`` completed excursions from T when
    ``excursions > 0``, otherwise when the local time at T reaches ``t_stop``.
    ``out_down[r, i]`` counts jumps i -> i-1 (i = 1..T).
    """
    for r in range(count):
        np.random.seed(seeds[r])
        for i in range(T + 1):
            out_local[r, i] = 0.0
            out_down[r, i] = 0
        v = T
        done = 0
        while True:
            deg = 2 if 0 < v < T else 1
            hold = -np.log(1.0 - np.random.random()) / deg
            u = np.random.random()
            if v == T:
                if excursions == 0 and out_local[r, T] + hold >= t_stop:
                    out_local[r, T] = t_stop
                    break
                if excursions > 0 and done == excursions:
                    break
                out_local[r, T] += hold
                nxt = T - 1
                done += 1
            elif v == 0:
                out_local[r, 0] += hold
                nxt = 1
            else:
                out_local[r, v] += hold
                nxt = v - 1 if u < 0.5 else v + 1
            if nxt == v - 1:
                out_down[r, v] += 1
            v = nxt


@njit(cache=True)
def count_crossings_multi(ids, holds, boundary, dist2, inner_r2, outer_r2, t):
    """One-pass downcrossing counts for several concentric annuli.

    ``dist2[v]`` is the squared distance of node ``v`` to the center.
    """
    m = inner_r2.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    inside = np.zeros(m, dtype=np.bool_)
    lb = 0.0
    for j in range(ids.shape[0]):
        v = ids[j]
        if v == boundary:
            lb += holds[j]
            if lb > t:
                break
        d = dist2[v]
        for a in range(m):
            if not inside[a]:
                if v != boundary and d <= inner_r2[a]:
                    counts[a] += 1
                    inside[a] = True
            elif v == boundary or d > outer_r2[a]:
                inside[a] = False
    return counts


@njit(cache=True)
def linear_walk_logged(T, t_stop, seed):
    """Same dynamics and draws as ``linear_walk_batch`` in T-time mode,
    returning the event log instead of summaries."""
    np.random.seed(seed)
    cap = 1024
    ids = np.empty(cap, dtype=np.uint32)
    holds = np.empty(cap, dtype=np.float64)
    k = 0
    lt = 0.0
    v = T
    while True:
        deg = 2 if 0 < v < T else 1
        hold = -np.log(1.0 - np.random.random()) / deg
        u = np.random.random()
        done = False
        if v == T and lt + hold >= t_stop:
            hold = t_stop - lt
            done = True
        if k == cap:
            cap *= 2
            ids2 = np.empty(cap, dtype=np.uint32)
            holds2 = np.empty(cap, dtype=np.float64)
            ids2[:k] = ids[:k]
            holds2[:k] = holds[:k]
            ids = ids2
            holds = holds2
        ids[k] = v
        holds[k] = hold
        k += 1
        if done:
            return ids[:k], holds[:k]
        if v == T:
            lt += hold
            v = T - 1
        elif v == 0:
            v = 1
        else:
            v = v - 1 if u < 0.5 else v + 1

import math

import numpy as np
import pytest

from covertime import onedim
from covertime.exact import HittingProblem, green_matrix, hitting_probability
from covertime.lattice import square_domain, wire_boundary
from covertime.walk import (
    EventLog,
    GeometryError,
    WalkConfig,
    annuli_counts,
    annuli_records,
    annulus_scales,
    boundary_time_batch,
    check_nesting,
    cover_batch,
    downcrossing_counts,
    excursion_statistics,
    low_local_time_set,
    naive_cover,
    occupied_boxes,
    phase_observables,
    record_events,
    run_excursion,
    run_to_boundary_time,
    run_to_cover,
    time_fluctuation,
)


@pytest.fixture(scope="module")
def g9():
    return wire_boundary(square_domain(9))


def test_single_vertex_excursion_mean():
    g = wire_boundary(square_domain(1))
    for rate in (1.0, 0.5):
        hit, loc, length = excursion_statistics(WalkConfig(g, rate, 1), 100_000, 0)
        assert hit.all()
        se = loc.std() / math.sqrt(len(loc))
        assert abs(loc.mean() - 1 / (4 * rate)) < 3 * se


def test_excursion_hit_probability(g9):
    x = 30
    hit, _, _ = excursion_statistics(WalkConfig(g9, 1.0, 2), 100_000, x)
    sol = hitting_probability(HittingProblem.wired(g9, [x], [g9.boundary]))
    # first step from the boundary is uniform over its edges
    p = float(sol.values[g9.neighbors(g9.boundary)].mean())
    assert abs(hit.mean() - p) < 3 * math.sqrt(p * (1 - p) / len(hit))


def test_excursion_trace_contract(g9):
    tr = run_excursion(WalkConfig(g9, 1.0, 0), 3)
    assert len(tr.vertices) >= 1
    assert np.all(tr.vertices < g9.size)
    # first and last interior vertices touch the boundary
    assert g9.multiplicity[tr.vertices[0]] > 0 and g9.multiplicity[tr.vertices[-1]] > 0


def test_zero_time(g9):
    ltf = run_to_boundary_time(WalkConfig(g9), 0.0)
    assert np.all(ltf.interior == 0)
    with pytest.raises(ValueError):
        run_to_boundary_time(WalkConfig(g9), -1.0)


def test_conservation_and_logged_run(g9):
    cfg = WalkConfig(g9, 1.0, 5, 3)
    ltf = run_to_boundary_time(cfg, 2.0)
    assert ltf.boundary_time == 2.0
    assert ltf.conservation_error() < 1e-9
    ltf2, log = record_events(cfg, 2.0)
    assert np.allclose(ltf2.local_times, ltf.local_times, rtol=1e-12, atol=1e-12)
    assert abs(ltf2.elapsed - ltf.elapsed) < 1e-9


def test_batch_matches_single(g9):
    cfg = WalkConfig(g9, 1.0, 8)
    L, el = boundary_time_batch(cfg, 1.5, [0, 4])
    one = run_to_boundary_time(cfg.with_replica(4), 1.5)
    assert np.array_equal(L[1], one.local_times)
    assert el[1] == one.elapsed


def test_mean_local_time(g9):
    L, _ = boundary_time_batch(WalkConfig(g9, 1.0, 1), 1.0, range(10_000))
    interior = L[:, : g9.size]
    se = interior.std(axis=0, ddof=1) / math.sqrt(len(L))
    assert np.all(np.abs(interior.mean(axis=0) - 1.0) < 3.5 * se)


def test_single_vertex_cover():
    g = wire_boundary(square_domain(1))
    real, bt, last = cover_batch(WalkConfig(g, 1.0, 4), range(100_000))
    assert np.all(last == 0)
    se = real.std() / math.sqrt(len(real))
    assert abs(real.mean() - 0.25) < 3 * se


def test_cover_matches_naive(g9):
    for r in range(100):
        cfg = WalkConfig(g9, 1.0, 13, r)
        fast = run_to_cover(cfg)
        slow = naive_cover(cfg)
        assert fast.real_time == slow.real_time
        assert fast.last_vertex == slow.last_vertex
        assert fast.boundary_time == slow.boundary_time


def test_last_vertex_is_latest_first_visit(g9):
    res = run_to_cover(WalkConfig(g9, 1.0, 2))
    fv = res.first_visit[: g9.size]
    assert res.last_vertex == int(np.argmax(fv))
    assert np.sum(fv == fv.max()) == 1
    assert fv.max() == res.real_time


def test_cover_empty_target(g9):
    res = run_to_cover(WalkConfig(g9), target=[])
    assert res.real_time == 0.0 and res.last_vertex == -1


def test_low_local_time_set(g9):
    res = run_to_cover(WalkConfig(g9, 1.0, 1))
    bulk = np.arange(g9.size)
    # at the cover instant only the last vertex still has zero local time
    assert low_local_time_set(res.field, 0.0, bulk).tolist() == [res.last_vertex]
    assert len(low_local_time_set(res.field, np.inf, bulk)) == g9.size
    later = run_to_boundary_time(WalkConfig(g9, 1.0, 1), res.boundary_time + 50.0)
    assert len(low_local_time_set(later, 0.0, bulk)) == 0
    ltf = run_to_boundary_time(WalkConfig(g9, 1.0, 1), 0.3)
    got = low_local_time_set(ltf, 0.2, bulk)
    assert got.tolist() == [x for x in range(g9.size) if ltf.local_times[x] <= 0.2]


def test_unvisited_frequency(g9):
    G = green_matrix(g9, 1.0)
    x = 40
    L, _ = boundary_time_batch(WalkConfig(g9, 1.0, 21), 1.0, range(20_000))
    p = math.exp(-1.0 / G.values[x, x])
    freq = float((L[:, x] == 0).mean())
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / len(L))


def test_event_log_roundtrip(tmp_path, g9):
    _, log = record_events(WalkConfig(g9, 1.0, 3), 0.5)
    path = tmp_path / "log.bin"
    log.write(path)
    rec = EventLog.read_records(path)
    assert path.stat().st_size == 12 * len(log.vertices)
    assert np.array_equal(rec["vertex"], log.vertices)
    assert np.array_equal(rec["hold"], log.holds)


def _big():
    return wire_boundary(square_domain(61))


def test_downcrossings_zero_when_far():
    g = _big()
    cfg = WalkConfig(g, 1.0, 0)
    log = EventLog.from_graph(g, [g.boundary, 0, g.boundary], [0.1, 0.1, 0.1])
    rec = downcrossing_counts(log, (31, 31), 1.0, 2.0, 1.0)
    assert rec.count == 0 and len(rec.entries) == 0 and len(rec.exits) == 0


def test_downcrossing_entries_exits_on_rims():
    g = _big()
    _, log = record_events(WalkConfig(g, 1.0, 6), 5.0)
    k, l = 1.0, 2.5
    rec = downcrossing_counts(log, (31, 31), k, l, 5.0)
    rk, rl = math.floor(math.exp(k)), math.floor(math.exp(l))
    for e in rec.entries:
        d2 = int(e @ e)
        assert d2 <= rk * rk
        # inner rim: a lattice neighbor lies outside B(x;k)
        assert any((e[0] + a) ** 2 + (e[1] + b) ** 2 > rk * rk for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1)))
    for e in rec.exits:
        assert int(e @ e) > rl * rl
        assert any((e[0] + a) ** 2 + (e[1] + b) ** 2 <= rl * rl for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1)))
    assert rec.normalized == pytest.approx((l - k) * rec.count)


def test_downcrossing_geometry_errors(g9):
    _, log = record_events(WalkConfig(g9, 1.0, 0), 0.5)
    with pytest.raises(GeometryError):
        downcrossing_counts(log, (5, 5), 1.0, 3.0, 0.5)
    with pytest.raises(GeometryError):
        downcrossing_counts(log, (5, 5), 1.0, 1.0, 0.5)


def test_corridor_matches_linear_walk():
    # linear-walk log embedded on the x-axis, with site T playing the role of the boundary
    T = 10
    sites, holds = onedim.linear_walk_log(T, 30.0, seed=4)
    coords = np.column_stack([np.arange(T + 1), np.zeros(T + 1, dtype=np.int64)])
    log = EventLog(sites.astype(np.uint32), holds, T, coords)
    oracle = onedim.downcrossings_from_log(sites, T)
    for a in range(0, T - 1):
        rec = downcrossing_counts(log, (0, 0), math.log(a + 0.5), math.log(a + 0.9), 30.0)
        assert rec.count == oracle[a + 1]
    # wider gap: entries into [0, a] after a visit beyond b, by direct scan
    a, b = 2, 6
    rec = downcrossing_counts(log, (0, 0), math.log(a + 0.5), math.log(b + 0.5), 30.0)
    armed, count = True, 0
    for v in sites.tolist():
        if v == T or v > b:
            armed = True
        elif v <= a and armed:
            count += 1
            armed = False
    assert rec.count == count


def test_annulus_geometry():
    k, gamma, T = 9.0, 0.25, 3
    check_nesting(k, gamma, T)
    sc = annulus_scales(k, gamma, 1)
    assert sc[0] == (k, k + k**gamma - 4 * math.exp(-(k**gamma)))
    with pytest.raises(GeometryError):
        check_nesting(0.5, 0.25, 2)


def test_annuli_one_pass_matches_rescan():
    k, gamma, T = 2.5, 0.25, 2
    g = wire_boundary(square_domain(121))
    _, log = record_events(WalkConfig(g, 1.0, 1), 10.0)
    recs = annuli_records(log, (61, 61), k, gamma, T, 10.0)
    counts = annuli_counts(log, (61, 61), k, gamma, T, 10.0)
    assert counts.sum() > 0
    assert [r.count for r in recs] == counts.tolist()
    for r in recs:
        root, _ = r.z
        assert root == pytest.approx(math.sqrt(k**gamma * r.count))


def test_single_annulus_equals_downcrossing():
    g = _big()
    _, log = record_events(WalkConfig(g, 1.0, 2), 5.0)
    k, gamma = 2.5, 0.25
    (a, b), = annulus_scales(k, gamma, 1)
    rec = annuli_records(log, (31, 31), k, gamma, 1, 5.0)[0]
    direct = downcrossing_counts(log, (31, 31), a, b, 5.0, scale=k**gamma)
    assert rec.count == direct.count


def test_time_fluctuation_guard():
    with pytest.raises(ValueError):
        time_fluctuation(1.0, 10, 0.0)
    assert time_fluctuation(40.0, 10, 4.0) == 0.0


def test_t_hat_mean(g9):
    # T_hat has mean sqrt(t) / (2 |D|) because the boundary time counts in the elapsed total
    t = 0.25
    _, el = boundary_time_batch(WalkConfig(g9, 1.0, 3), t, range(20_000))
    th = (el / g9.size - t) / (2 * math.sqrt(t))
    se = th.std(ddof=1) / math.sqrt(len(th))
    assert abs(th.mean() - math.sqrt(t) / (2 * g9.size)) < 3 * se
    assert abs(th.mean()) < 3 * se + math.sqrt(t) / (2 * g9.size)


def test_boxes():
    b = occupied_boxes([(0, 0), (1, 1), (2, 2), (-1, -1)], math.log(2))
    assert b.tolist() == [[0, 0], [2, 2]]
    assert len(occupied_boxes(np.zeros((0, 2)), 2.0)) == 0


def test_phase_observables_large_t():
    g = wire_boundary(square_domain(21))
    obs = phase_observables(WalkConfig(g, "retuned", 0), n=4.0, t=500.0)
    assert obs["unvisited"] == 0 and obs["clusters"] == 0 and obs["boxes"] == 0
    assert obs["clustered"]
    assert obs["conservation_error"] < 1e-9

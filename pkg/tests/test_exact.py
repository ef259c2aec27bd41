import math

import numpy as np
import pytest

from covertime.exact import (
    MAX_DENSE_VERTICES,
    RETUNED_RATE,
    GraphTooLargeError,
    GreenSolver,
    HittingProblem,
    annulus_hitting,
    excursion_hit_rate,
    gamblers_ruin_formula,
    green_matrix,
    harmonic_measure,
    hitting_probability,
    killed_generator,
    poisson_kernel,
    resolve_rate,
    two_stage_race_probability,
    unvisited_probability,
)
from covertime.lattice import ball, path_graph, square_domain, wire_boundary


def test_single_vertex_green():
    for rate in (1.0, RETUNED_RATE, 3.0):
        G = green_matrix(wire_boundary(square_domain(1)), rate)
        assert abs(G.values[0, 0] - 1 / (4 * rate)) < 1e-12


def test_two_vertex_path_green():
    # killed generator [[2,-1],[-1,2]] inverted by hand
    G = green_matrix(path_graph(2), 1.0)
    assert np.allclose(G.values, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12, rtol=0)
    Gr = green_matrix(path_graph(2), RETUNED_RATE)
    assert np.allclose(Gr.values * RETUNED_RATE, G.values, atol=1e-12, rtol=0)


def test_seven_block_against_dense_inverse():
    g = wire_boundary(square_domain(7))
    G = green_matrix(g, RETUNED_RATE)
    oracle = np.linalg.inv(killed_generator(g, RETUNED_RATE).toarray())
    assert np.abs(G.values - oracle).max() < 1e-9
    assert np.allclose(G.values, G.values.T)
    assert np.linalg.eigvalsh(G.values).min() > 0
    c = 24
    assert tuple(g.coords[c]) == tuple(g.coords.mean(axis=0).astype(int))
    small = green_matrix(wire_boundary(square_domain(3)), RETUNED_RATE)
    assert G.values[c, c] > small.values[4, 4]


def test_green_solver_matches_dense():
    g = wire_boundary(square_domain(9))
    G = green_matrix(g, 1.0)
    s = GreenSolver(g, 1.0)
    assert abs(s.diagonal_entry(40) - G.values[40, 40]) < 1e-12
    assert np.allclose(s.row_sums(), G.values.sum(axis=1))
    assert np.allclose(s.diagonal(block=17), G.diag)


def test_dense_guard(monkeypatch):
    import covertime.exact as ex

    monkeypatch.setattr(ex, "MAX_DENSE_VERTICES", 10)
    with pytest.raises(GraphTooLargeError):
        ex.green_matrix(wire_boundary(square_domain(4)))
    assert MAX_DENSE_VERTICES >= 10000


def test_resolve_rate():
    assert resolve_rate("retuned") == pytest.approx(1 / (2 * math.pi))
    assert resolve_rate("1") == 1.0
    with pytest.raises(ValueError):
        resolve_rate(0)


def test_path_hitting_is_linear():
    M = 10
    sol = hitting_probability(HittingProblem.path(M, [M], [0]))
    assert np.allclose(sol.values, np.arange(M + 1) / M, atol=1e-12)


def test_start_on_target():
    assert annulus_hitting((0, 0), 2.0, 4.0, [(0, 0), (3, 0)]).tolist() == [1.0, 1.0]


def test_gamblers_ruin_bound():
    for r in (2.0, 3.0):
        R = r + 2
        rad = np.exp(np.linspace(r + 0.1, R - 0.1, 20))
        th = np.linspace(0, 2 * np.pi, 20, endpoint=False) * 1.37
        starts = np.round(np.column_stack([rad * np.cos(th), rad * np.sin(th)])).astype(int)
        ex = annulus_hitting((0, 0), r, R, starts)
        f = np.array([gamblers_ruin_formula((0, 0), s, r, R) for s in starts])
        assert np.abs(ex - f).max() <= 10 * math.exp(-r)


def test_poisson_kernel_symmetry_and_mass():
    pts, p = poisson_kernel((0, 0), math.log(6), (0, 0))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    lookup = {tuple(q): w for q, w in zip(pts.tolist(), p)}
    for (a, b), w in lookup.items():
        for img in ((-a, b), (a, -b), (b, a), (-b, -a)):
            assert lookup[img] == pytest.approx(w, abs=1e-12)


def test_poisson_kernel_monte_carlo():
    R = math.log(4)
    pts, p = poisson_kernel((0, 0), R, (0, 0))
    rng = np.random.default_rng(11)
    inside = {tuple(q) for q in ball((0, 0), R).tolist()}
    steps = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    idx = {tuple(q): i for i, q in enumerate(pts.tolist())}
    walks = 100_000
    pos = np.zeros((walks, 2), dtype=int)
    alive = np.ones(walks, dtype=bool)
    while alive.any():
        pos[alive] += steps[rng.integers(0, 4, alive.sum())]
        alive[alive] = [tuple(q) in inside for q in pos[alive].tolist()]
    hits = np.bincount([idx[tuple(q)] for q in pos.tolist()], minlength=len(pts)) / walks
    se = np.sqrt(p * (1 - p) / walks)
    assert np.all(np.abs(hits - p) <= 3 * se)


def test_harmonic_measure_properties():
    h = harmonic_measure((0, 0), 0.0)
    assert h.mass == pytest.approx(1.0)
    assert np.allclose(h.values, 0.25)
    k = math.log(3)
    a = harmonic_measure((0, 0), k, k + 3)
    b = harmonic_measure((0, 0), k, k + 4)
    assert a.mass == pytest.approx(1.0, abs=1e-9)
    assert np.abs(a.values - b.values).max() < 5e-2
    vals = {tuple(q): v for q, v in zip(b.points.tolist(), b.values)}
    for (x, y), v in vals.items():
        assert vals[(y, x)] == pytest.approx(v, abs=1e-9)
        assert vals[(-x, y)] == pytest.approx(v, abs=1e-9)


def test_unvisited_probability():
    g = wire_boundary(square_domain(1))
    assert unvisited_probability(g, 1.0, 0, 0.0).probability == 1.0
    assert unvisited_probability(g, 1.0, 0, 0.7).probability == pytest.approx(math.exp(-4 * 0.7))
    g9 = wire_boundary(square_domain(9))
    G = green_matrix(g9, 1.0)
    for x in (0, 13, 40):
        assert excursion_hit_rate(g9, 1.0, x) * G.values[x, x] == pytest.approx(1.0, abs=1e-8)


def test_race_formula_limits():
    assert two_stage_race_probability(0.0, 0.3, 0.4) == 0.0
    assert two_stage_race_probability(2.0, 0.3, 1 - 1e-12) == pytest.approx(1 - math.exp(-0.6), abs=1e-9)
    with pytest.raises(ValueError):
        two_stage_race_probability(1.0, 0.0, 0.5)

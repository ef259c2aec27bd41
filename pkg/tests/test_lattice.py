import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from covertime.lattice import (
    DomainShape,
    EmptyDomainError,
    ball,
    box,
    bulk_vertices,
    cluster_process,
    discretize_domain,
    distance_to_complement,
    inner_boundary,
    is_clustered,
    minimal_cover,
    path_graph,
    square_domain,
    wire_boundary,
)


def brute_force(shape_test, N):
    pts = []
    for x in range(-N - 1, N + 2):
        for y in range(-N - 1, N + 2):
            if shape_test(x, y, N):
                pts.append((x, y))
    return set(pts)


def _square_pred(x, y, N):
    # distance from x/N to the closed complement of (0,1)^2 is the distance to the nearest side
    d = min(x, N - x, y, N - y) / N
    return d > 1 / N


def _disc_pred(x, y, N):
    return 1 - math.hypot(x, y) / N > 1 / N


def test_square_at_log8_matches_brute_force():
    d = discretize_domain(DomainShape.square(), math.log(8))
    assert d.N == 8
    assert {tuple(v) for v in d.vertices.tolist()} == brute_force(_square_pred, 8)
    # the predicate leaves the block {2..6}^2
    assert len(d) == 25


def test_disc_at_log16_matches_brute_force():
    d = discretize_domain(DomainShape.disc(), math.log(16))
    assert {tuple(v) for v in d.vertices.tolist()} == brute_force(_disc_pred, 16)


def test_empty_interior_raises():
    with pytest.raises(EmptyDomainError):
        discretize_domain(DomainShape.square(), 0.0)


def test_bad_shapes():
    with pytest.raises(ValueError):
        DomainShape("triangle")
    with pytest.raises(ValueError):
        DomainShape.annulus(1.5)
    with pytest.raises(ValueError):
        DomainShape.from_polygon([(0, 0), (1, 1), (2, 2)])


def test_polygon_square_equals_unit_square():
    poly = DomainShape.from_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    a = discretize_domain(poly, 3.0).vertices
    b = discretize_domain(DomainShape.square(), 3.0).vertices
    assert {tuple(v) for v in a.tolist()} == {tuple(v) for v in b.tolist()}


def test_annulus_has_hole():
    d = discretize_domain(DomainShape.annulus(0.3), 3.0)
    r = np.hypot(*d.vertices.T)
    assert r.min() > 0.3 * d.N + 1


def test_single_vertex_wiring():
    g = wire_boundary(square_domain(1))
    assert g.size == 1
    assert g.multiplicity.tolist() == [4]
    assert g.boundary_degree == 4


def test_two_vertex_path_wiring():
    g = path_graph(2)
    assert g.degree[:2].tolist() == [2, 2]
    # a corridor of two vertices in Z^2: each has 3 edges to the boundary
    d = discretize_domain(DomainShape.square(), math.log(8))
    corridor = wire_boundary(type(d).from_vertices([(3, 3), (4, 3)]))
    assert corridor.multiplicity.tolist() == [3, 3]
    assert corridor.boundary_degree == 6


def test_seven_block_boundary_degree():
    g = wire_boundary(square_domain(7))
    # border edges of a 7x7 block: 4 sides of 7 edges each
    edges = sum(1 for v in g.coords.tolist() for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if not (v[0] + dx, v[1] + dy) in {tuple(w) for w in g.coords.tolist()})
    assert edges == 28
    assert g.boundary_degree == 28
    assert np.all(g.degree[: g.size] == 4)


def test_csr_symmetric():
    g = wire_boundary(discretize_domain(DomainShape.disc(), 2.5))
    A = g.interior_adjacency.toarray()
    assert np.array_equal(A, A.T)


def test_ball_and_box():
    assert len(ball((0, 0), 0.0)) == 5
    b = box((0, 0), math.log(2))
    assert len(b) == 4
    # x - y ranges over the half-open (-1, 1]^2
    assert {tuple(-p) for p in b} == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert (0, 0) in {tuple(p) for p in ball((3, 4), math.log(5)).tolist()}


def test_bulk_at_log8():
    d = discretize_domain(DomainShape.square(), math.log(8))
    margin = 8 / math.log(8) ** 2
    assert margin == pytest.approx(1.85, abs=0.01)
    dist = distance_to_complement(d)
    ids = bulk_vertices(d)
    assert np.all(dist[ids] > margin)
    # lattice distance to the complement is an integer here: bulk is >= 2 steps in
    assert set(ids.tolist()) == set(np.flatnonzero(dist >= 2).tolist())


def test_bulk_empty_on_tiny_domain():
    d = discretize_domain(DomainShape.square(), math.log(4))
    assert len(bulk_vertices(d)) == 0


def test_clustered_examples():
    assert is_clustered([(0, 0)], 1.0, 3.0)
    r, R = 1.0, 3.0
    assert not is_clustered([(0, 0), (0, math.floor(math.exp((r + R) / 2)))], r, R)
    clumps = [(0, 0), (1, 0), (0, 1), (40, 0), (41, 1)]
    assert is_clustered(clumps, 1.0, 3.0)


def test_minimal_cover_counts():
    assert len(minimal_cover([(0, 0), (1, 0)], 1.0)) == 1
    pts = [(0, 0), (1, 0), (100, 0), (101, 0), (0, 100)]
    cov = minimal_cover(pts, 1.0)
    assert len(cov) == 3 and cov.minimal and cov.covers()
    chain = [(3 * i, 0) for i in range(6)]
    c = minimal_cover(chain, math.log(3))
    assert len(c) <= len(chain) and c.covers()


def test_cluster_process_mass():
    assert cluster_process([(5, 5)], 1.0, 3.0).total_mass == 1
    assert cluster_process(np.zeros((0, 2)), 1.0, 3.0).total_mass == 0
    m = cluster_process([(0, 0), (100, 0), (0, 100)], 1.0, 5.0)
    assert m.total_mass == 3
    assert np.allclose(cluster_process([(5, 5)], 1.0, 3.0).positions, np.array([[5, 5]]) * math.exp(-3))


@settings(max_examples=30, deadline=None)
@given(hs.lists(hs.tuples(hs.integers(-60, 60), hs.integers(-60, 60)), min_size=1, max_size=20, unique=True),
       hs.floats(0.5, 2.5))
def test_cover_always_covers(pts, r):
    assert minimal_cover(pts, r).covers()


def test_inner_boundary_of_block():
    v = np.array([(x, y) for x in range(3) for y in range(3)])
    ib = {tuple(p) for p in inner_boundary(v).tolist()}
    assert (1, 1) not in ib and len(ib) == 8

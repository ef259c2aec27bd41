import numpy as np
import pytest

from covertime.coupling import (
    ConfigurationError,
    second_moment_check,
    verify_ray_knight,
    weight_vectors,
)
from covertime.exact import green_matrix
from covertime.lattice import square_domain, wire_boundary


def test_single_vertex_isomorphism():
    g = wire_boundary(square_domain(1))
    rep = verify_ray_knight(g, 1.0, 2.0, [0], 100_000, seed=3)
    assert rep.ks_pvalue[0] > 0.01
    assert abs(rep.mean_residual[0]) < 3
    assert abs(rep.local_time_residual[0]) < 3


def test_zero_time_is_trivial():
    g = wire_boundary(square_domain(3))
    rep = verify_ray_knight(g, 1.0, 0.0, [4], 20_000, seed=1)
    assert rep.ks_pvalue[0] > 0.01
    assert rep.local_time_residual == [0.0]


def test_small_square_probes():
    g = wire_boundary(square_domain(5))
    rep = verify_ray_knight(g, "retuned", 1.0, [0, 6, 12], 20_000, seed=2)
    assert len(rep.failing_probes(0.01)) <= 1
    assert all(abs(m) < 4 for m in rep.mean_residual)
    assert set(rep.functionals) == {"uniform", "center", "checkerboard"}
    assert '"probes"' in rep.to_json()


def test_argument_checks():
    g = wire_boundary(square_domain(3))
    with pytest.raises(ValueError):
        verify_ray_knight(g, 1.0, 1.0, [0], 10, seed=0)
    with pytest.raises(ValueError):
        verify_ray_knight(g, 1.0, 1.0, [99], 1000, seed=0)
    with pytest.raises(ValueError):
        verify_ray_knight(g, 1.0, -1.0, [0], 1000, seed=0)
    with pytest.raises(ConfigurationError):
        verify_ray_knight(g, 1.0, 1.0, [0], 1000, seed=0, green=green_matrix(g, 0.5))


def test_weights():
    g = wire_boundary(square_domain(3))
    w = weight_vectors(g)
    assert w["uniform"].sum() == pytest.approx(1.0)
    assert w["center"][4] == 1.0 and w["center"].sum() == 1.0
    assert set(np.unique(w["checkerboard"]).tolist()) == {-1.0, 1.0}


def test_second_moment_single_vertex():
    g = wire_boundary(square_domain(1))
    row = second_moment_check(g, 1.0, 100_000, seed=4)
    assert row.exact == pytest.approx(1 / 32)
    assert abs(row.empirical - 1 / 32) < 3 * row.standard_error


def test_second_moment_zero_field():
    g = wire_boundary(square_domain(3))
    row = second_moment_check(g, 1.0, 100, seed=0, values=np.zeros((100, 9)))
    assert row.empirical == 0.0


def test_second_moment_sweep_bounded():
    ratios = [second_moment_check(wire_boundary(square_domain(s)), 1.0, 4000, seed=5).exact for s in (5, 9, 13)]
    assert all(r <= 50 for r in ratios)
    assert ratios[-1] <= 1.5 * max(ratios[:-1])

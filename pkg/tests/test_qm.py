import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqfn.geometry import GeometrySpec, generate
from sqfn.qm import (AdrSet, QuasiMetricSpace, alpha_rho, check_adr, delta_E, diam, euclidean,
                     quasi_axiom_violations, regularized_metric)


def skewed(x, y):
    """|x - y| doubled when x < y: a quasi-distance on R that is not symmetric."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    d = euclidean(x, y)
    return np.where(x[..., 0] < y[..., 0], 2 * d, d)


SKEWED = QuasiMetricSpace(1, skewed, sym_const=2.0, tri_const=2.0, is_metric=False)


def test_euclidean_metric_returned_unchanged():
    sp = QuasiMetricSpace.euclidean(2)
    assert regularized_metric(sp) is sp.quasi_distance


def test_skewed_regularization_is_symmetric_and_equivalent(rng):
    rs = regularized_metric(SKEWED)
    x = rng.uniform(-5, 5, (1000, 1))
    y = rng.uniform(-5, 5, (1000, 1))
    a, b = rs(x, y), rs(y, x)
    assert np.array_equal(a, b)
    np.testing.assert_allclose(a, 2 * np.abs(x - y)[:, 0], rtol=1e-14)
    rho = SKEWED.quasi_distance(x, y)
    assert np.all(rho <= a) and np.all(a <= SKEWED.sym_const * rho)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=3))
def test_regularized_coincidence(coords):
    x = np.array(coords)[None, :]
    sp = QuasiMetricSpace.euclidean(len(coords))
    assert float(regularized_metric(sp)(x, x)[0]) == 0.0


def test_quasi_axioms_hold_on_samples(rng):
    pts = rng.uniform(-1, 1, (200, 1))
    v = quasi_axiom_violations(SKEWED, pts, 2000)
    assert (v["coincidence"], v["symmetry"], v["triangle"]) == (0, 0, 0)


def test_invalid_triangle_constant():
    with pytest.raises(ValueError, match="invalid quasi-triangle constant"):
        QuasiMetricSpace(2, tri_const=0.5)


@pytest.mark.parametrize("C, expected", [(2.0, 1.0), (4.0, 0.5), (1.0, math.inf)])
def test_alpha_rho(C, expected):
    assert alpha_rho(QuasiMetricSpace(2, tri_const=C)) == expected


def test_delta_E_line_and_circle():
    E = generate(GeometrySpec("line", {"length": 4.0}, 4096))
    assert abs(delta_E(np.array([0.3, 0.7]), E) - 0.7) < 1e-6  # midpoint samples miss x = 0.3
    assert delta_E(E.points[17], E) == 0.0
    C = generate(GeometrySpec("circle", {}, 4096))
    assert abs(delta_E(np.zeros(2), C) - 1.0) < 1e-12


def test_empty_set_rejected():
    with pytest.raises(ValueError, match="empty ADR set"):
        AdrSet(np.zeros((0, 2)), np.zeros(0), 1.0)


def test_diam():
    C = generate(GeometrySpec("circle", {}, 4096))
    assert abs(diam(C) - 2.0) < 2 * math.pi / 4096
    with pytest.raises(ValueError):
        diam(AdrSet(np.zeros((1, 2)), np.ones(1), 1.0))


@given(st.integers(2, 150), st.integers(0, 10_000))
def test_diam_matches_brute_force(n, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 2))
    E = AdrSet(pts, np.ones(n), 1.0)
    brute = np.max(np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)))
    assert abs(diam(E) - brute) <= 1e-12 * brute


def test_check_adr_circle_and_segment():
    C = generate(GeometrySpec("circle", {}, 4096))
    rep = check_adr(C, radii=np.geomspace(0.01, 2.0, 24))
    assert 2.0 <= rep.best_const <= 3.3
    S = generate(GeometrySpec("segment", {"length": 1.0}, 1024))
    mid = np.arange(1024 // 3, 2 * 1024 // 3)
    rep = check_adr(S, radii=np.linspace(0.02, 0.1, 9), centers=mid)
    assert abs(rep.best_const - 2.0) <= 0.1


def test_check_adr_errors():
    S = generate(GeometrySpec("segment", {}, 64))
    with pytest.raises(ValueError, match="radius out of range"):
        check_adr(S, radii=[0.0])
    with pytest.raises(ValueError, match="radius out of range"):
        check_adr(S, radii=[5.0])
    flat = AdrSet(np.zeros((5, 2)), np.ones(5), 1.0)
    with pytest.raises(ValueError, match="diam = 0"):
        check_adr(flat)


def test_check_adr_deterministic():
    E = generate(GeometrySpec("lipschitz_graph", {}, 512))
    assert check_adr(E).to_dict() == check_adr(E).to_dict()


def test_subset_and_scaling():
    E = generate(GeometrySpec("line", {}, 128))
    sub = E.subset(np.arange(10, 20)).subset(np.arange(3))
    assert list(sub.parent_index) == [10, 11, 12]
    S = E.scaled(2.0)
    assert S.total_mass == pytest.approx(2 * E.total_mass)
    assert S.diam == pytest.approx(2 * E.diam)

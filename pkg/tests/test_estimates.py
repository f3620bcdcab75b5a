import math

import numpy as np
import pytest

from sqfn.dyadic import build_lattice, whitney_cover
from sqfn.estimates import (BpsfeWitness, TbFamily, TestFamily, atomic_hp_test, atomic_range,
                            big_pieces_witness, bpsfe_pipeline, bq_from_bigpiece,
                            check_local_tb, comparability_split, cube_indicators,
                            default_family, estimate_sfe_constant, fit_decay, lp_sweep,
                            make_atoms, random_signs, smooth_bumps, surface_ball,
                            weak_lp_indicator_test)
from sqfn.geometry import GeometrySpec, generate
from sqfn.operators import SurfaceFunction, tent_energy


@pytest.fixture(scope="module")
def setup():
    E = generate(GeometrySpec("line", {}, 1024))
    lat = build_lattice(E, 4)
    cov = whitney_cover(E.space, E, eps_min=2 ** -7, lattice=lat)
    return E, lat, cov


# --- families and the SFE constant -----------------------------------------------

def test_families(setup):
    E, lat, _ = setup
    ind = cube_indicators(E, lat)
    assert len(ind) == len(lat.cubes)
    assert set(np.unique(ind.values)) <= {0.0, 1.0}
    rng = np.random.default_rng(1)
    s = random_signs(E, 5, rng)
    assert set(np.unique(s.values)) == {-1.0, 1.0}
    b = smooth_bumps(E, 4, rng)
    assert np.all(b.values >= 0) and np.all(b.values.max(axis=0) > 0)
    a = default_family(E, lat, seed=3, n_signs=4, n_bumps=2)
    assert np.array_equal(a.values, default_family(E, lat, seed=3, n_signs=4, n_bumps=2).values)


def test_zero_family_rejected(setup, grad_riesz):
    E, _, cov = setup
    zero = TestFamily(["zero"], np.zeros((len(E), 1)), {"zero": 1})
    with pytest.raises(ValueError, match="empty effective family"):
        estimate_sfe_constant(E, grad_riesz, zero, cover=cov)


def test_sfe_report(setup, grad_riesz):
    E, lat, cov = setup
    fam = default_family(E, lat, seed=0, n_signs=8, n_bumps=4)
    fam.values[:, 0] = 0.0  # one zero column is skipped, not fatal
    rep = estimate_sfe_constant(E, grad_riesz, fam, 0, cov, lat)
    assert rep.best_ratio == max(r["ratio"] for r in rep.per_function)
    assert len(rep.per_function) == len(fam) - 1
    assert 0 < rep.best_ratio < math.inf
    again = estimate_sfe_constant(E, grad_riesz, fam, 0, cov, lat)
    assert again.best_ratio == rep.best_ratio and again.config_hash == rep.config_hash


# --- local T(b) ------------------------------------------------------------------

def test_tb_indicators(setup, grad_riesz):
    E, lat, cov = setup
    rep = check_local_tb(E, grad_riesz, TbFamily.indicators(E, lat), cov)
    for row in rep.per_cube:
        assert row["cond1"] == pytest.approx(1.0)
        assert row["cond2_C0"] == pytest.approx(1.0)
    assert rep.passed and rep.c0_measured == 1.0
    assert rep.C0_measured == max(r["C0_needed"] for r in rep.per_cube)
    # tent condition equals tent_energy / sigma
    Q = lat.generation(lat.kappa_E + 1)[0]
    row = next(r for r in rep.per_cube if r["cube"] == Q.id)
    b = SurfaceFunction.indicator(E, Q.members)
    assert row["cond3"] == pytest.approx(tent_energy(Q, b, grad_riesz, cov, E) / Q.mass, rel=1e-10)


def test_tb_zero_function_fails(setup, grad_riesz):
    E, lat, cov = setup
    fam = TbFamily.indicators(E, lat)
    bad = lat.generation(lat.kappa_E + 2)[1].id
    fam.b[bad] = SurfaceFunction(np.zeros(len(E)), E.weights)
    rep = check_local_tb(E, grad_riesz, fam, cov)
    assert not rep.passed and bad in rep.failing


def test_tb_missing_cube(setup, grad_riesz):
    E, lat, cov = setup
    fam = TbFamily.indicators(E, lat)
    gone = lat.cubes[-1].id
    del fam.b[gone]
    rep = check_local_tb(E, grad_riesz, fam, cov)
    assert not rep.passed and rep.missing == [gone]


# --- big pieces ------------------------------------------------------------------

def test_bq_from_bigpiece(setup):
    E, lat, _ = setup
    Q = lat.generation(lat.kappa_E + 2)[1]
    full = bq_from_bigpiece(Q, E.subset(np.arange(len(E))), E)
    assert np.array_equal(np.flatnonzero(full.values), Q.members)
    away = np.setdiff1d(np.arange(len(E)), Q.members)
    assert not bq_from_bigpiece(Q, E.subset(away), E).values.any()
    foreign = generate(GeometrySpec("circle", {}, 64))
    with pytest.raises(ValueError, match="E_Q not aligned with E"):
        bq_from_bigpiece(Q, foreign, E)
    half = E.subset(Q.members[: Q.members.size // 2])
    b = bq_from_bigpiece(Q, half, E)
    assert b.integral() >= 0.5 * Q.mass * (1 - 1e-12) - E.weights.max()


def test_witness_eta_bound(sawtooth2048):
    lat = build_lattice(sawtooth2048, 4)
    wit = big_pieces_witness(sawtooth2048, lat, "labels", measure=False)
    for Q in lat.cubes:
        b = bq_from_bigpiece(Q, wit.pieces[Q.id], sawtooth2048)
        assert b.integral() >= wit.eta * Q.mass * (1 - 1e-12)
    assert wit.eta == pytest.approx(0.5, abs=0.02)


def test_witness_strategies(setup):
    E, lat, _ = setup
    assert big_pieces_witness(E, lat, "full", measure=False).eta == 1.0
    half = big_pieces_witness(E, lat, "half", measure=False)
    assert 0.4 <= half.eta <= 0.5
    with pytest.raises(ValueError):
        big_pieces_witness(E, lat, "nearest", measure=False)
    bare = generate(GeometrySpec("line", {}, 256))
    bare.labels = None
    assert big_pieces_witness(bare, build_lattice(bare, 2), "labels", measure=False).eta == 0.0


def test_comparability_split(setup, grad_riesz):
    E, lat, cov = setup
    Q = lat.generation(lat.kappa_E + 1)[0]
    same = comparability_split(Q, E, E.subset(np.arange(len(E))), 8.0, cov, grad_riesz)
    assert same["I_notA"] == 0 and same["n_notA"] == 0
    assert same["carleson_lhs"] == 0 and same["carleson_companion"] == 0
    piece = E.subset(np.flatnonzero(E.points[:, 0] < 0.3))
    for C_A in (2.0, 8.0):
        s = comparability_split(Q, E, piece, C_A, cov, grad_riesz)
        assert abs(s["I_A"] + s["I_notA"] - s["tent_energy"]) <= 1e-12 * s["tent_energy"]
        b = bq_from_bigpiece(Q, piece, E)
        assert s["tent_energy"] == pytest.approx(tent_energy(Q, b, grad_riesz, cov, E), rel=1e-12)
    with pytest.raises(ValueError, match="C_A"):
        comparability_split(Q, E, piece, 1.0, cov, grad_riesz)


# --- weak type and L^p -----------------------------------------------------------

def test_fit_decay_exact_power():
    lam = np.geomspace(1, 100, 20)
    assert fit_decay(lam, 3 * lam ** -2.5) == pytest.approx(2.5)
    assert math.isnan(fit_decay(lam, np.zeros(20)))


def test_weak_lp_curves(setup, grad_riesz):
    E, _, cov = setup
    c = int(np.argmin(np.abs(E.points[:, 0])))
    curves = weak_lp_indicator_test(E, grad_riesz, 1.0, 2.0, [(c, 0.1), (c, 0.2)], cover=cov)
    for cur in curves:
        assert np.all(np.diff(cur.measures) <= 0)
        assert cur.sigma_ball == pytest.approx(float(E.weights[surface_ball(E, c, cur.ball["radius"])].sum()))
        assert np.isfinite(cur.fitted_exponent)
    top = weak_lp_indicator_test(E, grad_riesz, 1.0, 2.0, [(c, 0.1)], [1e6, 1e7], cover=cov)[0]
    assert np.all(top.measures == 0)
    with pytest.raises(ValueError, match="increasing"):
        weak_lp_indicator_test(E, grad_riesz, 1.0, 2.0, [(c, 0.1)], [2.0, 1.0], cover=cov)
    with pytest.raises(ValueError, match="empty"):
        weak_lp_indicator_test(E, grad_riesz, 1.0, 2.0, [(np.array([0.0, 5.0]), 0.1)], cover=cov)


def test_lp_sweep_scale_invariant(setup, grad_riesz):
    E, lat, cov = setup
    fam = default_family(E, lat, seed=0, n_signs=4, n_bumps=4)
    a = lp_sweep(E, grad_riesz, 1.0, [1.5, 3.0], fam, cover=cov, lattice=lat)
    fam.values *= -7.0
    b = lp_sweep(E, grad_riesz, 1.0, [1.5, 3.0], fam, cover=cov, lattice=lat)
    for p in a:
        assert b[p]["ratio"] == pytest.approx(a[p]["ratio"], rel=1e-10)
        assert a[p]["route"] == "lp"


# --- atoms -----------------------------------------------------------------------

def test_atomic_range(setup, grad_riesz):
    E, _, _ = setup
    lo, gamma = atomic_range(E, grad_riesz)
    assert gamma == 1.0 and lo == 0.5


def test_atoms_normalised(setup):
    E, _, _ = setup
    A, meta = make_atoms(E, 0.8, 16, np.random.default_rng(4))
    for k, m in enumerate(meta):
        a = A[:, k]
        assert abs(a @ E.weights) <= 1e-12 * m["sigma"] ** (1 - 1 / 0.8)
        assert np.abs(a).max() == pytest.approx(m["sigma"] ** (-1 / 0.8))
        inside = surface_ball(E, m["center"], m["radius"])
        assert not a[np.setdiff1d(np.arange(len(E)), inside)].any()


def test_atomic_gate(setup, grad_riesz):
    E, _, cov = setup
    for p in (0.5, 0.3, 1.2):
        with pytest.raises(ValueError, match="outside the atomic range"):
            atomic_hp_test(E, grad_riesz, 1.0, p, 4, cover=cov)
    rep = atomic_hp_test(E, grad_riesz, 1.0, 0.9, 4, cover=cov)
    assert rep["max_mean_residual"] < 1e-12 and math.isfinite(rep["sup"])
    routed = lp_sweep(E, grad_riesz, 1.0, [0.9], TestFamily(["one"], np.ones((len(E), 1)), {}),
                      cover=cov, atoms=4)
    assert routed[0.9]["route"] == "atomic"


# --- pipeline --------------------------------------------------------------------

def test_pipeline_full_witness_matches_indicators(setup, grad_riesz):
    E, lat, cov = setup
    wit = big_pieces_witness(E, lat, "full", measure=False)
    rep = bpsfe_pipeline(E, grad_riesz, wit, cov)
    tb = check_local_tb(E, grad_riesz, TbFamily.indicators(E, lat), cov)
    assert rep["eta"] == 1.0 and rep["failures"] == 0 and rep["tb_passed"]
    assert rep["C0"] == pytest.approx(tb.C0_measured, rel=1e-12)


def test_pipeline_flags_missing_pieces(setup, grad_riesz):
    E, lat, cov = setup
    wit = BpsfeWitness({}, eta=0.0)
    rep = bpsfe_pipeline(E, grad_riesz, wit, cov, eta_claimed=0.5)
    assert rep["failures"] >= len(lat.cubes)
    assert not rep["tb_passed"]

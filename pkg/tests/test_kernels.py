import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqfn.backend import SingularityError
from sqfn.kernels import (compile_expression, convolution_spec, custom_kernel,
                          finite_difference_gradient, gradient_kernel, kernel_by_name,
                          riesz_grad_constant, riesz_kernel, verify_kernel_axioms)

coords = st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3)


def test_riesz_values():
    z = np.array([3.0, 4.0])
    assert riesz_kernel(1, 1)(z) == pytest.approx(0.12, abs=1e-15)
    assert riesz_kernel(2, 1)(z) == pytest.approx(0.16, abs=1e-15)


def test_riesz_singularity_and_index():
    with pytest.raises(SingularityError):
        riesz_kernel(1, 1)(np.zeros(2))
    with pytest.raises(ValueError):
        riesz_kernel(3, 1)


@pytest.mark.parametrize("n", [1, 2])
def test_odd_and_homogeneous_on_random_points(n, rng):
    z = rng.normal(size=(1000, n + 1))
    for j in range(1, n + 2):
        K = riesz_kernel(j, n)
        v = K(z)
        np.testing.assert_allclose(K(-z), -v, rtol=1e-12, atol=0)
        np.testing.assert_allclose(K(2 * z), 2.0 ** -n * v, rtol=1e-12, atol=0)


@given(st.tuples(coords, coords), st.floats(0.01, 100))
def test_homogeneity_property(z, lam):
    K = riesz_kernel(2, 1)
    z = np.array(z)
    assert K(lam * z) == pytest.approx(lam ** -1 * K(z), rel=1e-12)


def test_gradient_closed_form():
    K = riesz_kernel(1, 1)
    g = K.gradient(np.array([1.0, 0.0]))
    assert g[0] == pytest.approx(-1.0)
    z = np.array([0.3, -1.7])
    r4 = (z ** 2).sum() ** 2
    assert g.shape == (2,)
    assert K.gradient(z)[0] == pytest.approx((z[1] ** 2 - z[0] ** 2) / r4)


def test_gradient_vs_central_differences(rng):
    K = riesz_kernel(2, 1)
    z = rng.normal(size=(200, 2))
    z /= np.linalg.norm(z, axis=1)[:, None] * rng.uniform(0.5, 2.0, (200, 1))
    exact = K.gradient(z)
    err = np.abs(finite_difference_gradient(K, z, 1e-4) - exact).max()
    assert err <= 50 * 1e-8
    hs = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    errs = [np.abs(finite_difference_gradient(K, z, h) - exact).max() for h in hs]
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 1.9


def test_gradient_kernel_exponents():
    theta = gradient_kernel(riesz_kernel(2, 1))
    assert theta.decay_exp == 1.0 and theta.target_dim == 1.0 and theta.components == 2
    # weight exponent 2*upsilon - (m - d) = 1
    assert 2 * theta.decay_exp - (2 - theta.target_dim) == 1.0
    with pytest.raises(SingularityError):
        theta(np.zeros(2), np.zeros(2))


def test_axioms_pass_for_grad_riesz():
    for j in (1, 2):
        rep = verify_kernel_axioms(kernel_by_name("riesz-grad", 2, j=j), samples=10_000)
        assert rep.passed
        assert rep.empirical_const <= riesz_grad_constant(1)
        assert rep.decay_const_needed <= 1.0 + 1e-9


def test_axioms_fail_for_constant():
    rep = verify_kernel_axioms(custom_kernel("1", 2, decay_const=10.0), samples=2000)
    assert not rep.passed
    assert rep.worst_decay["rho"] > 10


def test_axioms_with_coincident_tilde():
    # y~ = y gives zero difference
    theta = kernel_by_name("riesz-grad", 2)
    x, y = np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]])
    assert np.all(theta(x, y) - theta(x, y) == 0)


def test_axiom_report_deterministic():
    th = kernel_by_name("riesz-grad", 2)
    assert verify_kernel_axioms(th, 500, seed=3).to_dict() == verify_kernel_axioms(th, 500, seed=3).to_dict()


def test_expression_language():
    f = compile_expression("x2 / r^2", 2)
    z = np.array([[3.0, 4.0]])
    assert f(z)[0] == pytest.approx(0.16)
    g = compile_expression("-norm(x1) * 2 ** 1 + x1*x2", 2)
    assert g(np.array([[-1.0, 3.0]]))[0] == pytest.approx(-5.0)
    for bad in ("__import__('os')", "x3", "sin(x1)", "x1 if x2 else 1"):
        with pytest.raises(ValueError):
            compile_expression(bad, 2)


def test_custom_kernel_matches_riesz():
    c = kernel_by_name("custom", 2, expr="x2/r^2", decay_exp=0.0)
    r = convolution_spec(riesz_kernel(2, 1))
    x, y = np.array([[0.3, 1.1]]), np.array([[-0.2, 0.0]])
    assert c(x, y)[0] == pytest.approx(r(x, y)[0])


def test_kernel_by_name_errors():
    with pytest.raises(ValueError, match="unknown kernel"):
        kernel_by_name("poisson")
    with pytest.raises(ValueError, match="expression"):
        kernel_by_name("custom")

import numpy as np
import pytest

from sqfn import _pycore, backend
from sqfn.backend import SingularityError


def _data(rng, nt=40, ns=60, nf=3):
    t = rng.normal(size=(nt, 2)) + np.array([0.0, 3.0])
    s = rng.normal(size=(ns, 2))
    c = rng.normal(size=(ns, nf))
    return t, s, c


def _direct(t, s, c, j, n, gradient):
    z = t[:, None, :] - s[None, :, :]
    r = np.linalg.norm(z, axis=-1)
    if not gradient:
        return np.einsum("ts,sf->tf", z[..., j] / r ** (n + 1), c)[:, None, :]
    g = -(n + 1) * (z[..., j] / r ** (n + 3))[..., None] * z
    g[..., j] += 1 / r ** (n + 1)
    return np.einsum("tsc,sf->tcf", g, c)


@pytest.mark.parametrize("impl", ["python", "cython"])
@pytest.mark.parametrize("gradient", [False, True])
@pytest.mark.parametrize("nf", [1, 3, 9])
def test_backends_match_direct_sum(impl, gradient, nf, rng):
    if impl == "cython" and backend.NAME != "cython":
        pytest.skip("compiled backend not built")
    t, s, c = _data(rng, nf=nf)
    for j in (0, 1):
        got = backend.riesz_apply(t, s, c, j, 1, gradient, impl)
        np.testing.assert_allclose(got, _direct(t, s, c, j, 1, gradient), rtol=1e-12, atol=1e-14)


def test_compiled_and_python_agree(rng):
    if backend.NAME != "cython":
        pytest.skip("compiled backend not built")
    t, s, c = _data(rng, 300, 500, 2)
    a = backend.riesz_apply(t, s, c, 1, 1, True, "python")
    b = backend.riesz_apply(t, s, c, 1, 1, True, "cython")
    assert np.abs(a - b).max() <= 1e-13 * np.abs(a).max()


@pytest.mark.parametrize("impl", ["python", "cython"])
def test_singularity_rejected(impl):
    if impl == "cython" and backend.NAME != "cython":
        pytest.skip("compiled backend not built")
    s = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(SingularityError, match="singularity"):
        backend.riesz_apply(np.array([[1.0, 0.0]]), s, np.ones((2, 1)), 0, 1, False, impl)


def test_python_module_is_fallback():
    assert backend.module("python") is _pycore
    assert backend.NAME in ("python", "cython")


def test_threads_setting():
    old = backend.get_threads()
    backend.set_threads(0)
    assert backend.get_threads() == 1
    backend.set_threads(old)


def test_forced_fallback_at_import():
    import subprocess
    import sys

    code = ("import numpy as np; from sqfn import backend; print(backend.NAME); "
            "from sqfn.geometry import GeometrySpec, generate; "
            "from sqfn.kernels import kernel_by_name; from sqfn.operators import apply_theta, SurfaceFunction; "
            "E = generate(GeometrySpec('line', {}, 64)); "
            "print(apply_theta(E, kernel_by_name('riesz-grad', 2), SurfaceFunction.on(E, np.ones(64)), [0.1, 0.3])[0])")
    env = dict(__import__("os").environ, SQFN_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env,
                         check=True).stdout.split()
    assert out[0] == "python"
    from sqfn.geometry import GeometrySpec, generate
    from sqfn.kernels import kernel_by_name
    from sqfn.operators import SurfaceFunction, apply_theta
    E = generate(GeometrySpec("line", {}, 64))
    here = apply_theta(E, kernel_by_name("riesz-grad", 2), SurfaceFunction.on(E, np.ones(64)),
                       [0.1, 0.3])[0]
    assert float(out[1]) == pytest.approx(here, rel=1e-12)

import math

import numpy as np
import pytest

from mlsg import kernels


def test_backend_switch_roundtrip():
    prev = kernels.set_backend("numpy")
    try:
        assert kernels.get_backend() == "numpy"
    finally:
        kernels.set_backend(prev)
    assert kernels.get_backend() == prev


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def _const_quadratic(n, a, c):
    # dP/ds = a P^2 + c, decoupled from N (all other coefficients zero)
    coef = np.zeros((12, 2 * n + 1))
    coef[0] = a
    coef[5] = c
    return coef


def test_quadratic_kernel_matches_tangent_solution(backend):
    # P(s) = sqrt(c/a) tan(sqrt(ac) s)
    a, c, n, S = 2.0, 0.5, 400, 1.0
    out, reached = kernels.rk4_quadratic_pair(_const_quadratic(n, a, c), S / n, 1e9)
    assert reached == n
    s = np.linspace(0, S, n + 1)
    exact = math.sqrt(c / a) * np.tan(math.sqrt(a * c) * s)
    assert np.max(np.abs(out[0] - exact)) < 1e-9
    assert np.all(out[1] == 0.0)


def test_quadratic_kernel_blowup_truncates(backend):
    # tan blows up at s = pi/2 for a = c = 1
    n, S = 2000, 2.0
    out, reached = kernels.rk4_quadratic_pair(_const_quadratic(n, 1.0, 1.0), S / n, 1e9)
    assert reached < n
    assert abs(reached * S / n - math.pi / 2) < 2 * S / n
    assert np.all(np.isfinite(out[0, : reached + 1]))
    assert np.all(np.isnan(out[0, reached + 1:]))


def test_linear_kernel_exponential(backend):
    # y1' = -y1 + 1, y2' = 2 y1  ->  y1 = 1 - e^-s, y2 = 2 (s - 1 + e^-s)
    n, S = 200, 1.5
    a = np.zeros((4, 2 * n + 1))
    a[0] = -1.0
    a[2] = 2.0
    b = np.zeros((2, 2 * n + 1))
    b[0] = 1.0
    y = kernels.rk4_linear_pair(a, b, S / n)
    s = np.linspace(0, S, n + 1)
    assert np.max(np.abs(y[0] - (1 - np.exp(-s)))) < 1e-10
    assert np.max(np.abs(y[1] - 2 * (s - 1 + np.exp(-s)))) < 1e-10


def test_quadrature_exact_for_cubics(backend):
    n, S = 50, 2.0
    u = np.linspace(0, S, 2 * n + 1)
    g = np.array([3 * u**2 - 2 * u + 1, 4 * u**3])
    y = kernels.rk4_quadrature(g, S / n)
    s = u[::2]
    np.testing.assert_allclose(y[0], s**3 - s**2 + s, rtol=0, atol=1e-13)
    np.testing.assert_allclose(y[1], s**4, rtol=0, atol=1e-12)


def test_backends_agree_on_random_inputs():
    rng = np.random.default_rng(3)
    n = 64
    coef = rng.normal(scale=0.3, size=(12, 2 * n + 1))
    a = rng.normal(size=(4, 2 * n + 1))
    b = rng.normal(size=(2, 2 * n + 1))
    outs = {}
    for be in ("numpy", "numba"):
        prev = kernels.set_backend(be)
        try:
            outs[be] = (kernels.rk4_quadratic_pair(coef, 0.01, 1e9)[0],
                        kernels.rk4_linear_pair(a, b, 0.01),
                        kernels.rk4_quadrature(b, 0.01))
        finally:
            kernels.set_backend(prev)
    for x, y in zip(outs["numpy"], outs["numba"]):
        np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-15)

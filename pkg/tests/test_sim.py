import json
import math

import numpy as np
import pytest

from mlsg import kernels
from mlsg.model import ConfigError, baseline
from mlsg.riccati import TimeMesh, solve
from mlsg.sim import (
    Perturbation,
    SimConfig,
    SimulationError,
    deviation_test,
    path_normals,
    simulate,
    worker_count,
)
from mlsg.strategies import strategy_coefficients


def _controls(coeffs, t, x):
    wx, w0, px, p0, sx, s0, bx, b0 = coeffs.at(t)
    return (max(wx * x + w0, 0.0), max(sx * x + s0, 0.0), max(px * x + p0, 0.0), max(bx * x + b0, 0.0))


def _flows(p, t, x, w, i_s, pr, i_b):
    d = p.alpha - p.gamma_p * pr - p.gamma_w * w + p.gamma_x * x
    base = p.beta_p(t) * pr + p.beta_w(t) * w + p.delta(t) * (i_s + i_b)
    disc = math.exp(-p.r * t)
    return base - p.beta_x * x, base + p.beta_x * x, disc * ((w - p.c0) * d - i_s**2), disc * ((pr - w) * d - i_b**2)


def euler_oracle(p, coeffs, n, x0, z=None, sigma=1.0):
    """Scalar re-statement of one Euler-Maruyama path."""
    dt = p.horizon / n
    x, js, jb = x0, 0.0, 0.0
    for k in range(n):
        t = k * dt
        drift, darg, fs, fb = _flows(p, t, x, *_controls(coeffs, t, x))
        js += fs * dt
        jb += fb * dt
        noise = 0.0 if z is None else sigma * math.sqrt(max(darg, 0.0)) * math.sqrt(dt) * z[k]
        x = x + drift * dt + noise
    return js, jb


def rk4_oracle(p, coeffs, n, x0):
    """Deterministic state and profit ODEs, classic RK4."""
    h = p.horizon / n

    def f(t, y):
        drift, _, fs, fb = _flows(p, t, y[0], *_controls(coeffs, t, y[0]))
        return np.array([drift, fs, fb])

    y = np.array([x0, 0.0, 0.0])
    for k in range(n):
        t = k * h
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[1], y[2]


@pytest.fixture(scope="module")
def small():
    p = baseline()
    sol = solve(p, TimeMesh(1.0, 1000))
    return p, sol, strategy_coefficients(p, sol)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(0)
    with pytest.raises(ConfigError):
        SimConfig(10, n_steps=5)
    with pytest.raises(ConfigError):
        SimConfig(10, sigma_scale=1.5)
    with pytest.raises(ConfigError):
        SimConfig(10, seed=-1)
    with pytest.raises(ConfigError):
        Perturbation(3)
    with pytest.raises(ConfigError):
        Perturbation(1, target="price")
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"n_paths": 5, "speed": 1})


def test_config_roundtrip():
    cfg = SimConfig(17, 40, seed=2**63 + 5, x0=2.0, sigma_scale=0.5, perturbation=Perturbation(2, "leader", 1.1))
    assert SimConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("MLSG_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(1) == 1
    monkeypatch.setenv("MLSG_THREADS", "many")
    with pytest.raises(ConfigError):
        worker_count()


def test_paths_match_scalar_euler(small, backend):
    p, _, coeffs = small
    cfg = SimConfig(5, 200, seed=9)
    res = simulate(p, coeffs, cfg)
    for i in range(5):
        js, jb = euler_oracle(p, coeffs, 200, 1.0, z=path_normals(9, i, 200))
        assert res.j_s[i] == pytest.approx(js, rel=1e-12, abs=1e-15)
        assert res.j_b[i] == pytest.approx(jb, rel=1e-12, abs=1e-15)


def test_noise_free_matches_scalar_euler_exactly(small, backend):
    p, _, coeffs = small
    res = simulate(p, coeffs, SimConfig(1, 500, sigma_scale=0.0))
    js, jb = euler_oracle(p, coeffs, 500, 1.0)
    assert abs(res.j_s_mean - js) < 1e-12 and abs(res.j_b_mean - jb) < 1e-12
    assert res.j_s_se == 0.0 and res.j_b_se == 0.0


def test_noise_free_matches_rk4_integrator(small):
    # Euler is first order; at 1e5 steps its gap to RK4 falls below 1e-8
    p, sol, coeffs = small
    res = simulate(p, coeffs, SimConfig(1, 100_000, sigma_scale=0.0))
    js, jb = rk4_oracle(p, coeffs, 1000, 1.0)
    assert abs(res.j_s_mean - js) < 1e-8
    assert abs(res.j_b_mean - jb) < 1e-8
    coarse = simulate(p, coeffs, SimConfig(1, 10_000, sigma_scale=0.0))
    ratio = abs(coarse.j_s_mean - js) / abs(res.j_s_mean - js)
    assert 7 < ratio < 13


def test_identity_perturbation_is_bitwise_neutral(small):
    p, _, coeffs = small
    cfg = SimConfig(300, 100, seed=4)
    a = simulate(p, coeffs, cfg)
    for player in (1, 2):
        b = simulate(p, coeffs, cfg.with_(perturbation=Perturbation(player, "both", 1.0)))
        assert np.array_equal(a.j_s, b.j_s) and np.array_equal(a.j_b, b.j_b)


def test_deterministic_across_runs_and_workers(small):
    p, _, coeffs = small
    cfg = SimConfig(5000, 50, seed=123)
    a = simulate(p, coeffs, cfg, workers=1)
    b = simulate(p, coeffs, cfg, workers=3)
    c = simulate(p, coeffs, cfg, workers=3)
    assert a.to_json() == b.to_json() == c.to_json()
    assert np.array_equal(a.j_s, b.j_s)


def test_backends_agree(small):
    p, _, coeffs = small
    cfg = SimConfig(200, 100, seed=5)
    out = []
    for be in ("numpy", "numba"):
        prev = kernels.set_backend(be)
        try:
            out.append(simulate(p, coeffs, cfg, record=True))
        finally:
            kernels.set_backend(prev)
    np.testing.assert_allclose(out[0].j_s, out[1].j_s, rtol=1e-12)
    np.testing.assert_allclose(out[0].paths, out[1].paths, rtol=1e-12, atol=1e-15)
    assert out[0].clamp_fraction == out[1].clamp_fraction


def test_standard_error_scaling(small):
    p, _, coeffs = small
    se = [simulate(p, coeffs, SimConfig(n, 100, seed=8)).j_s_se for n in (1000, 10_000, 100_000)]
    for a, b in zip(se, se[1:]):
        assert a / b == pytest.approx(math.sqrt(10), rel=0.2)


def test_result_fields_and_json(small, tmp_path):
    p, _, coeffs = small
    cfg = SimConfig(30, 20, seed=1)
    res = simulate(p, coeffs, cfg, record=True)
    assert res.j_s_se >= 0 and res.j_b_se >= 0
    assert 0 <= res.clamp_fraction <= 1 and 0 <= res.negative_x_fraction <= 1
    data = json.loads(res.to_json())
    assert data["config"] == cfg.to_dict() and data["n_excluded"] == 0
    path = tmp_path / "paths.csv"
    res.paths_to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "path,t,x,w,I_s,p,I_b,D"
    assert len(lines) == 1 + 10 * 21
    assert lines[1].startswith("0,0,1,")


def test_single_path_recording(small):
    p, _, coeffs = small
    res = simulate(p, coeffs, SimConfig(1, 20, sigma_scale=0.0), record=True)
    assert res.paths.shape == (1, 21, 6)
    assert np.all(res.paths[:, :, 1:5] >= 0)


def test_too_many_bad_paths_is_fatal(small, monkeypatch):
    p, _, coeffs = small
    real = kernels.em_paths

    def flaky(*args, **kw):
        js, jb, c, n = real(*args, **kw)
        js[::50] = np.nan
        return js, jb, c, n

    monkeypatch.setattr(kernels, "em_paths", flaky)
    with pytest.raises(SimulationError):
        simulate(p, coeffs, SimConfig(1000, 20))


def test_few_bad_paths_are_excluded(small, monkeypatch):
    p, _, coeffs = small
    real = kernels.em_paths

    def flaky(*args, **kw):
        js, jb, c, n = real(*args, **kw)
        js[:3] = np.nan
        return js, jb, c, n

    monkeypatch.setattr(kernels, "em_paths", flaky)
    res = simulate(p, coeffs, SimConfig(1000, 20))
    assert res.n_excluded == 3 and np.isfinite(res.j_s_mean)


def test_deviation_at_factor_one_is_exactly_zero(small):
    p, sol, _ = small
    rep = deviation_test(p, sol, SimConfig(500, 50, seed=2), factors=(1.0,))
    assert all(r.gain == 0.0 and r.paired_se == 0.0 and r.passed for r in rep.rows)


def test_noise_free_buyer_deviation_does_not_pay(small):
    p, sol, _ = small
    rep = deviation_test(p, sol, SimConfig(1, 2000, sigma_scale=0.0), factors=(0.9,), players=(2,))
    assert rep.rows[0].gain <= 1e-8


def test_noise_free_deviations_do_not_pay(small):
    p, sol, _ = small
    rep = deviation_test(p, sol, SimConfig(1, 2000, sigma_scale=0.0), atol=1e-8)
    assert rep.passed, rep.rows

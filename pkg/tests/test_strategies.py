import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlsg.model import baseline, coefficients
from mlsg.riccati import ArgumentError, TimeMesh, solve
from mlsg.strategies import (
    COEF_NAMES,
    StrategyCoefficients,
    evaluate_strategies,
    follower_foc,
    linear_forms,
    strategy_coefficients,
    value_functions,
)


def _flat(mesh, **vals):
    n = mesh.n_steps + 1
    return StrategyCoefficients(mesh, **{k: np.full(n, float(vals.get(k, 0.0))) for k in COEF_NAMES})


def test_terminal_values(params, sol, coeffs):
    k = coefficients(params, 1.0).k
    assert coeffs.i_sx[-1] == coeffs.i_s0[-1] == coeffs.i_bx[-1] == coeffs.i_b0[-1] == 0.0
    assert coeffs.w_x[-1] == k[6] and coeffs.p_x[-1] == k[2]
    assert coeffs.w_0[-1] == k[7] and coeffs.p_0[-1] == k[3]


def test_baseline_initial_coefficients(coeffs):
    # from the reference Riccati values at t = 0 through the strategy formulas
    got = coeffs.at(0.0)
    ref = [0.607255, 6.59204, 0.998905, 9.98903, 2.98164e-6, 3.04e-5, 2.43533e-6, 2.472e-5]
    np.testing.assert_allclose(got, ref, rtol=2e-3)


def test_no_spillover_makes_strategies_state_independent():
    p = baseline(gamma_x=0.0)
    sc = strategy_coefficients(p, solve(p, TimeMesh(1.0, 100)))
    for n in ("w_x", "p_x", "i_sx", "i_bx"):
        assert np.all(getattr(sc, n) == 0.0)


def test_slopes_exactly_invariant_in_c0():
    m = TimeMesh(1.0, 2000)
    a = strategy_coefficients(baseline(c0=1.0), solve(baseline(c0=1.0), m))
    b = strategy_coefficients(baseline(c0=2.5), solve(baseline(c0=2.5), m))
    for n in ("w_x", "p_x", "i_sx", "i_bx"):
        assert np.max(np.abs(getattr(a, n) - getattr(b, n))) <= 1e-12


def test_incomplete_solution_rejected():
    p = baseline(delta=1e3)
    with pytest.raises(ArgumentError):
        strategy_coefficients(p, solve(p, TimeMesh(1.0, 2000)))


def test_clamp_and_arithmetic():
    m = TimeMesh(1.0, 10)
    sc = _flat(m, w_x=0.0, w_0=-3.0, p_x=0.5, p_0=1.0, i_sx=1.0, i_s0=0.25)
    u = evaluate_strategies(sc, 0.3, 2.0)
    assert u.w == 0.0
    assert u.p == 2.0
    assert u.i_s == 2.25
    assert linear_forms(sc, 0.3, 2.0).w == -3.0


def test_innovation_vanishes_at_horizon(coeffs):
    for x in (-5.0, 0.0, 3.0, 10.0):
        u = evaluate_strategies(coeffs, 1.0, x)
        assert u.i_s == 0.0 and u.i_b == 0.0


def test_between_nodes_is_linear_interpolation(coeffs):
    t0, t1 = coeffs.t[3], coeffs.t[4]
    mid = linear_forms(coeffs, 0.5 * (t0 + t1), 2.0)
    a, b = linear_forms(coeffs, t0, 2.0), linear_forms(coeffs, t1, 2.0)
    for m_, a_, b_ in zip(mid, a, b):
        assert m_ == pytest.approx(0.5 * (a_ + b_), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(0.0, 1.0), x=st.floats(-100.0, 100.0))
def test_controls_nonnegative_and_linearly_bounded(coeffs, t, x):
    u = evaluate_strategies(coeffs, t, x)
    tab = coeffs.table()
    a = np.max(np.abs(tab[1::2]))
    b = np.max(np.abs(tab[0::2]))
    for v in u:
        assert 0.0 <= v <= a + b * abs(x) + 1e-12


def test_value_functions(params, sol):
    assert value_functions(sol, 1.0, 7.0) == (0.0, 0.0)
    v = value_functions(sol, 0.0, 1.0)
    # oracle P2 + P1 + P0 and N2 + N1 + N0 at t = 0
    assert v.v_s == pytest.approx(2.981638962674853e-05 + 0.0005782242304530954 + 0.0027966592928366455, rel=1e-10)
    assert v.v_b == pytest.approx(2.4353334147884715e-05 + 0.0004699999401686801 + 0.002263065399958382, rel=1e-10)
    p = baseline(gamma_x=0.0)
    s0 = solve(p, TimeMesh(1.0, 100))
    assert value_functions(s0, 0.2, 0.0).v_s == value_functions(s0, 0.2, 9.0).v_s


def test_follower_first_order_conditions(params, sol):
    dw, db = follower_foc(params, sol)
    assert np.max(np.abs(dw)) < 1e-12
    assert np.max(np.abs(db)) < 1e-15


def test_csv_layout(coeffs):
    lines = coeffs.to_csv().splitlines()
    assert lines[0] == "t,w_x,w_0,p_x,p_0,I_sx,I_s0,I_bx,I_b0"
    assert len(lines) == len(coeffs.t) + 1
    assert float(lines[1].split(",")[2]) == coeffs.w_0[0]

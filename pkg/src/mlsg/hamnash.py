"""Hamiltonian-level nested Nash construction.

Evaluates both Hamiltonians literally and solves the follower and leader
static Nash games by best-response iteration, so that the closed-form
response maps can be checked against an independent numeric route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import ModelParams, coefficients


class NashError(RuntimeError):
    """Non-concave best response or non-convergent iteration."""


class HamiltonianPoint(NamedTuple):
    t: float
    x: float
    y1: float  # dV_s/dx
    y2: float  # dV_b/dx
    a1: float  # d2V_s/dx2
    a2: float  # d2V_b/dx2


class Controls4(NamedTuple):
    i_s: float
    w: float
    p: float
    i_b: float


def hamiltonian_values(params: ModelParams, pt: HamiltonianPoint, controls) -> tuple:
    """``(H_s, H_b)`` at ``pt`` for controls ``(i_s, w, p, i_b)``."""
    i_s, w, p, i_b = controls
    t, x = pt.t, pt.x
    bp, bw, dl = params.beta_p(t), params.beta_w(t), params.delta(t)
    em = np.exp(-params.r * np.asarray(t, dtype=float))
    base = bp * p + bw * w + dl * (i_s + i_b)
    drift = base - params.beta_x * x
    diff = base + params.beta_x * x
    demand = params.alpha - params.gamma_p * p - params.gamma_w * w + params.gamma_x * x
    hs = pt.y1 * drift + 0.5 * diff * pt.a1 + em * ((w - params.c0) * demand - i_s * i_s)
    hb = pt.y2 * drift + 0.5 * diff * pt.a2 + em * ((p - w) * demand - i_b * i_b)
    return hs, hb


# ---------------------------------------------------------------------------
# closed-form response maps


def gamma_w(params: ModelParams, pt: HamiltonianPoint, p):
    """Seller's wholesale-price response to a retail price ``p``."""
    ep = np.exp(params.r * np.asarray(pt.t, dtype=float))
    bw = params.beta_w(pt.t)
    num = ep * (bw * pt.y1 + 0.5 * bw * pt.a1) + params.alpha - params.gamma_p * p + params.gamma_x * pt.x
    return (num + params.c0 * params.gamma_w) / (2 * params.gamma_w)


def gamma_ib(params: ModelParams, pt: HamiltonianPoint):
    ep = np.exp(params.r * np.asarray(pt.t, dtype=float))
    return ep * params.delta(pt.t) * (2 * pt.y2 + pt.a2) / 4


def gamma_is(params: ModelParams, pt: HamiltonianPoint):
    ep = np.exp(params.r * np.asarray(pt.t, dtype=float))
    return ep * params.delta(pt.t) * (2 * pt.y1 + pt.a1) / 4


def gamma_p(params: ModelParams, pt: HamiltonianPoint):
    k = coefficients(params, pt.t).k
    return (k[0] * pt.y1 + 0.5 * k[0] * pt.a1 + k[1] * pt.y2 + 0.5 * k[1] * pt.a2
            + k[2] * pt.x + k[3])


def closed_form_responses(params: ModelParams, pt: HamiltonianPoint) -> Controls4:
    """Leader responses, then follower responses evaluated at them."""
    p = gamma_p(params, pt)
    return Controls4(gamma_is(params, pt), gamma_w(params, pt, p), p, gamma_ib(params, pt))


def substituted_wholesale(params: ModelParams, pt: HamiltonianPoint):
    """Wholesale price after substituting the leader responses (K5..K8 form)."""
    k = coefficients(params, pt.t).k
    return (k[4] * pt.y1 + 0.5 * k[4] * pt.a1 + k[5] * pt.y2 + 0.5 * k[5] * pt.a2
            + k[6] * pt.x + k[7])


# ---------------------------------------------------------------------------
# numeric nested Nash


def _vertex(f, c: float, refine: int = 2) -> float:
    """Maximiser of a concave quadratic ``f`` from three-point fits."""
    for _ in range(refine):
        s = max(1.0, abs(c))
        fm, f0, fp = f(c - s), f(c), f(c + s)
        a = (fp + fm - 2.0 * f0) / (2.0 * s * s)
        b = (fp - fm) / (2.0 * s)
        if not a < 0.0:
            raise NashError(f"best response is not strictly concave (curvature {a:.3g})")
        c = c - b / (2.0 * a)
    return c


def follower_nash_numeric(params: ModelParams, pt: HamiltonianPoint, leaders, init=(0.0, 0.0),
                          tol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    """Follower layer: Nash in ``(w, i_b)`` for given leader controls ``(i_s, p)``."""
    i_s, p = leaders
    w, i_b = init
    for _ in range(max_iter):
        w_new = _vertex(lambda v: hamiltonian_values(params, pt, (i_s, v, p, i_b))[0], w)
        ib_new = _vertex(lambda v: hamiltonian_values(params, pt, (i_s, w, p, v))[1], i_b)
        step = max(abs(w_new - w), abs(ib_new - i_b))
        w, i_b = w_new, ib_new
        if step <= tol * max(1.0, abs(w), abs(i_b)):
            return w, i_b
    raise NashError("follower best-response iteration did not converge")


@dataclass
class LeaderNashResult:
    i_s: float
    p: float
    w: float
    i_b: float
    iterations: int
    errors: list = field(default_factory=list)
    damped: bool = False

    @property
    def controls(self) -> Controls4:
        return Controls4(self.i_s, self.w, self.p, self.i_b)

    def contracting(self) -> bool:
        """Step sizes decrease monotonically after the second iteration."""
        e = [v for v in self.errors[1:] if v > 0.0]
        return all(b <= a for a, b in zip(e, e[1:]))


def leader_nash_numeric(params: ModelParams, pt: HamiltonianPoint, init=(0.0, 0.0),
                        tol: float = 1e-10, max_iter: int = 200) -> LeaderNashResult:
    """Leader layer: Nash in ``(i_s, p)`` with the follower layer embedded.

    Jacobi best responses; damping 0.5 switches on once a step grows.
    """

    def seller_payoff(i_s, p):
        w, i_b = follower_nash_numeric(params, pt, (i_s, p))
        return hamiltonian_values(params, pt, (i_s, w, p, i_b))[0]

    def buyer_payoff(i_s, p):
        w, i_b = follower_nash_numeric(params, pt, (i_s, p))
        return hamiltonian_values(params, pt, (i_s, w, p, i_b))[1]

    i_s, p = (float(v) for v in init)
    errors: list[float] = []
    damp = 1.0
    for it in range(1, max_iter + 1):
        is_br = _vertex(lambda v: seller_payoff(v, p), i_s)
        p_br = _vertex(lambda v: buyer_payoff(i_s, v), p)
        step = max(abs(is_br - i_s), abs(p_br - p))
        if errors and step > errors[-1] and damp == 1.0:
            damp = 0.5
        i_s += damp * (is_br - i_s)
        p += damp * (p_br - p)
        errors.append(step)
        if step <= tol * max(1.0, abs(i_s), abs(p)):
            w, i_b = follower_nash_numeric(params, pt, (i_s, p))
            return LeaderNashResult(i_s, p, w, i_b, it, errors, damp < 1.0)
    raise NashError(f"leader best-response iteration did not converge in {max_iter} steps")


def multistart(params: ModelParams, pt: HamiltonianPoint, n_starts: int = 5, seed: int = 0,
               scale: float = 10.0) -> list[LeaderNashResult]:
    """Leader Nash from ``n_starts`` random initial guesses."""
    rng = np.random.default_rng(seed)
    return [leader_nash_numeric(params, pt, init=tuple(rng.uniform(-scale, scale, 2)))
            for _ in range(n_starts)]


def max_abs_diff(a, b) -> float:
    return max(math.fabs(float(u) - float(v)) for u, v in zip(a, b))

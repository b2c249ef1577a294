"""Right-hand sides of the six coupled Riccati equations.

Each equation reads ``dX/dt + F_X(t, P, N) = 0``; :func:`riccati_forcing`
returns the six ``F_X`` terms.  Works elementwise on scalars or arrays.
"""
from __future__ import annotations

from .model import Coefficients, ModelParams


def riccati_forcing(params: ModelParams, c: Coefficients, p2, p1, p0, n2, n1, n0):
    gp, gw, bx, c0 = params.gamma_p, params.gamma_w, params.beta_x, params.c0
    k = c.k
    K1, K2, K3, K4, K5, K6, K7, K8 = k[:8]
    K9, K10, K11, K12, K13, K14, K15, K16, K17, K18 = k[8:]
    em, ep, d2 = c.em, c.ep, c.d2
    cc = 1 + gp / (2 * gw)

    # drift  = fx * x + f0
    fx = 2 * K9 * p2 + 2 * K10 * n2 + K11
    f0 = K9 * p1 + K10 * n1 + K9 * p2 + K10 * n2 + K12
    # w - C0 = wx * x + w0 ;  p - w = mx * x + m0 ;  2 D = dx * x + d0
    wx = 2 * K5 * p2 + 2 * K6 * n2 + K7
    w0 = K5 * p1 + K6 * n1 + K5 * p2 + K6 * n2 + K8 - c0
    mx = 2 * K16 * p2 + 2 * cc * K2 * n2 + K17
    m0 = K16 * p1 + cc * K2 * n1 + K16 * p2 + cc * K2 * n2 + K18
    dx = 2 * K13 * p2 - 2 * gp * K2 * n2 + K14
    d0 = K13 * p1 - gp * K2 * n1 + K13 * p2 - gp * K2 * n2 + K15

    f_p2 = 2 * p2 * fx + em / 2 * wx * dx - ep * d2 * p2 * p2
    f_p1 = (
        2 * p2 * f0
        + p1 * fx
        + p2 * (fx + 2 * bx)
        + em / 2 * wx * d0
        + em / 2 * w0 * dx
        - ep * d2 * p2 * (p1 + p2)
    )
    f_p0 = p1 * f0 + p2 * f0 + em / 2 * w0 * d0 - ep * d2 / 4 * (p1 + p2) ** 2

    f_n2 = 2 * n2 * fx + em / 2 * mx * dx - ep * d2 * n2 * n2
    f_n1 = (
        2 * n2 * f0
        + n1 * fx
        + n2 * (fx + 2 * bx)
        + em / 2 * mx * d0
        + em / 2 * m0 * dx
        - ep * d2 * n2 * (n1 + n2)
    )
    f_n0 = n1 * f0 + n2 * f0 + em / 2 * m0 * d0 - ep * d2 / 4 * (n1 + n2) ** 2
    return f_p2, f_p1, f_p0, f_n2, f_n1, f_n0

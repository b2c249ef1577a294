"""Hot inner loops, each in a numba and a plain numpy/Python flavour.

The backend is chosen once at import: numba when importable, unless the
environment variable ``MLSG_NO_NUMBA`` is set to a non-empty value other
than ``0``.  :func:`set_backend` switches it at runtime (tests, benchmarks).

All ODE kernels integrate *forward in reversed time* ``s = T - t`` on a
uniform grid and receive coefficient tables sampled on the half-step grid
``s_j = j h / 2`` (``2 n + 1`` columns).
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_BACKEND = "numba" if HAVE_NUMBA and os.environ.get("MLSG_NO_NUMBA", "") in ("", "0") else "numpy"


def get_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _BACKEND = _BACKEND, name
    return prev


def _njit(**kw):
    if HAVE_NUMBA:
        return numba.njit(cache=True, **kw)
    return lambda f: f


# ---------------------------------------------------------------------------
# quadratic pair  M' = G(s, M),  M(0) = 0


def _quad_rhs(c, j, p, q):
    fp = c[0, j] * p * p + c[1, j] * q * q + c[2, j] * p * q + c[3, j] * p + c[4, j] * q + c[5, j]
    fq = c[6, j] * p * p + c[7, j] * q * q + c[8, j] * p * q + c[9, j] * p + c[10, j] * q + c[11, j]
    return fp, fq


_quad_rhs_nb = _njit(inline="always")(_quad_rhs) if HAVE_NUMBA else _quad_rhs


@_njit()
def _rk4_quadratic_nb(c, h, threshold, out):
    n = out.shape[1] - 1
    p = 0.0
    q = 0.0
    out[0, 0] = 0.0
    out[1, 0] = 0.0
    for i in range(n):
        j = 2 * i
        k1p, k1q = _quad_rhs_nb(c, j, p, q)
        k2p, k2q = _quad_rhs_nb(c, j + 1, p + 0.5 * h * k1p, q + 0.5 * h * k1q)
        k3p, k3q = _quad_rhs_nb(c, j + 1, p + 0.5 * h * k2p, q + 0.5 * h * k2q)
        k4p, k4q = _quad_rhs_nb(c, j + 2, p + h * k3p, q + h * k3q)
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if not (abs(p) <= threshold and abs(q) <= threshold):
            return i
        out[0, i + 1] = p
        out[1, i + 1] = q
    return n


def _rk4_quadratic_py(c, h, threshold, out):
    n = out.shape[1] - 1
    a = c.tolist()
    p = q = 0.0
    out[:, 0] = 0.0

    def g(j, p, q):
        return (
            a[0][j] * p * p + a[1][j] * q * q + a[2][j] * p * q + a[3][j] * p + a[4][j] * q + a[5][j],
            a[6][j] * p * p + a[7][j] * q * q + a[8][j] * p * q + a[9][j] * p + a[10][j] * q + a[11][j],
        )

    ps = [0.0] * (n + 1)
    qs = [0.0] * (n + 1)
    reached = n
    for i in range(n):
        j = 2 * i
        k1p, k1q = g(j, p, q)
        k2p, k2q = g(j + 1, p + 0.5 * h * k1p, q + 0.5 * h * k1q)
        k3p, k3q = g(j + 1, p + 0.5 * h * k2p, q + 0.5 * h * k2q)
        k4p, k4q = g(j + 2, p + h * k3p, q + h * k3q)
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if not (abs(p) <= threshold and abs(q) <= threshold):
            reached = i
            break
        ps[i + 1] = p
        qs[i + 1] = q
    out[0, : reached + 1] = ps[: reached + 1]
    out[1, : reached + 1] = qs[: reached + 1]
    return reached


def rk4_quadratic_pair(coef: np.ndarray, h: float, threshold: float) -> tuple[np.ndarray, int]:
    """RK4 for the coupled quadratic pair from zero initial data.

    ``coef`` has shape ``(12, 2n+1)``: rows 0-5 the first equation's
    coefficients of ``p^2, q^2, pq, p, q, 1``, rows 6-11 the second's.
    Returns ``(out, reached)``; ``out[:, :reached+1]`` is valid, the rest NaN.
    """
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    n = (coef.shape[1] - 1) // 2
    out = np.full((2, n + 1), np.nan)
    if _BACKEND == "numba":
        reached = _rk4_quadratic_nb(coef, h, threshold, out)
    else:
        reached = _rk4_quadratic_py(coef, h, threshold, out)
    return out, int(reached)


# ---------------------------------------------------------------------------
# linear pair  y' = A(s) y + b(s),  y(0) = 0


@_njit()
def _rk4_linear_nb(a, b, h, out):
    n = out.shape[1] - 1
    u = 0.0
    v = 0.0
    out[0, 0] = 0.0
    out[1, 0] = 0.0
    for i in range(n):
        j = 2 * i
        k1u = a[0, j] * u + a[1, j] * v + b[0, j]
        k1v = a[2, j] * u + a[3, j] * v + b[1, j]
        u2 = u + 0.5 * h * k1u
        v2 = v + 0.5 * h * k1v
        k2u = a[0, j + 1] * u2 + a[1, j + 1] * v2 + b[0, j + 1]
        k2v = a[2, j + 1] * u2 + a[3, j + 1] * v2 + b[1, j + 1]
        u3 = u + 0.5 * h * k2u
        v3 = v + 0.5 * h * k2v
        k3u = a[0, j + 1] * u3 + a[1, j + 1] * v3 + b[0, j + 1]
        k3v = a[2, j + 1] * u3 + a[3, j + 1] * v3 + b[1, j + 1]
        u4 = u + h * k3u
        v4 = v + h * k3v
        k4u = a[0, j + 2] * u4 + a[1, j + 2] * v4 + b[0, j + 2]
        k4v = a[2, j + 2] * u4 + a[3, j + 2] * v4 + b[1, j + 2]
        u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        out[0, i + 1] = u
        out[1, i + 1] = v


def _rk4_linear_py(a, b, h, out):
    n = out.shape[1] - 1
    a0, a1, a2, a3 = (row.tolist() for row in a)
    b0, b1 = (row.tolist() for row in b)
    u = v = 0.0
    us = [0.0] * (n + 1)
    vs = [0.0] * (n + 1)
    for i in range(n):
        j = 2 * i
        k1u = a0[j] * u + a1[j] * v + b0[j]
        k1v = a2[j] * u + a3[j] * v + b1[j]
        u2 = u + 0.5 * h * k1u
        v2 = v + 0.5 * h * k1v
        k2u = a0[j + 1] * u2 + a1[j + 1] * v2 + b0[j + 1]
        k2v = a2[j + 1] * u2 + a3[j + 1] * v2 + b1[j + 1]
        u3 = u + 0.5 * h * k2u
        v3 = v + 0.5 * h * k2v
        k3u = a0[j + 1] * u3 + a1[j + 1] * v3 + b0[j + 1]
        k3v = a2[j + 1] * u3 + a3[j + 1] * v3 + b1[j + 1]
        u4 = u + h * k3u
        v4 = v + h * k3v
        k4u = a0[j + 2] * u4 + a1[j + 2] * v4 + b0[j + 2]
        k4v = a2[j + 2] * u4 + a3[j + 2] * v4 + b1[j + 2]
        u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        us[i + 1] = u
        vs[i + 1] = v
    out[0] = us
    out[1] = vs


def rk4_linear_pair(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """RK4 for ``y' = A y + b`` from ``y(0) = 0``.

    ``a`` is ``(4, 2n+1)`` holding ``A`` row-major, ``b`` is ``(2, 2n+1)``.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = (a.shape[1] - 1) // 2
    out = np.empty((2, n + 1))
    if _BACKEND == "numba":
        _rk4_linear_nb(a, b, h, out)
    else:
        _rk4_linear_py(a, b, h, out)
    return out


# ---------------------------------------------------------------------------
# quadrature  y' = g(s),  y(0) = 0   (RK4 reduces to composite Simpson)


@_njit()
def _rk4_quadrature_nb(g, h, out):
    n = out.shape[1] - 1
    for r in range(g.shape[0]):
        acc = 0.0
        out[r, 0] = 0.0
        for i in range(n):
            j = 2 * i
            acc = acc + h / 6.0 * (g[r, j] + 4.0 * g[r, j + 1] + g[r, j + 2])
            out[r, i + 1] = acc


def _rk4_quadrature_np(g, h, out):
    steps = h / 6.0 * (g[:, 0:-1:2] + 4.0 * g[:, 1::2] + g[:, 2::2])
    out[:, 0] = 0.0
    np.cumsum(steps, axis=1, out=out[:, 1:])


def rk4_quadrature(g: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integrals of the rows of ``g`` (sampled on the half grid)."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    n = (g.shape[1] - 1) // 2
    out = np.empty((g.shape[0], n + 1))
    if _BACKEND == "numba":
        _rk4_quadrature_nb(g, h, out)
    else:
        _rk4_quadrature_np(g, h, out)
    return out


# ---------------------------------------------------------------------------
# Euler-Maruyama paths of the goodwill SDE with profit accumulation

# rows of the per-step table passed to the path kernels
TAB_ROWS = ("w_x", "w_0", "p_x", "p_0", "i_sx", "i_s0", "i_bx", "i_b0", "beta_p", "beta_w", "delta", "disc")


@_njit(nogil=True)
def _em_nb(tab, scal, pert, z, js, jb, nclamp, nneg, rec):
    bx, gp, gw, gx, alpha, c0, dt, x0, sigma = (
        scal[0], scal[1], scal[2], scal[3], scal[4], scal[5], scal[6], scal[7], scal[8])
    player = int(pert[0])
    lm, la, fm, fa, resp = pert[1], pert[2], pert[3], pert[4], pert[5]
    sqdt = math.sqrt(dt)
    m, n = z.shape
    nrec = rec.shape[0]
    for i in range(m):
        x = x0
        a_s = 0.0
        a_b = 0.0
        cc = 0
        cn = 0
        for k in range(n + 1):
            wl = tab[0, k] * x + tab[1, k]
            pl = tab[2, k] * x + tab[3, k]
            sl = tab[4, k] * x + tab[5, k]
            bl = tab[6, k] * x + tab[7, k]
            if player == 1:
                sl = lm * sl + la
                wl = fm * wl + fa
            elif player == 2:
                peq = max(pl, 0.0)
                pl = lm * pl + la
                bl = fm * bl + fa
                wl = wl + resp * (max(pl, 0.0) - peq)
            w = max(wl, 0.0)
            p = max(pl, 0.0)
            s_ = max(sl, 0.0)
            b_ = max(bl, 0.0)
            d = alpha - gp * p - gw * w + gx * x
            if i < nrec:
                rec[i, k, 0] = x
                rec[i, k, 1] = w
                rec[i, k, 2] = s_
                rec[i, k, 3] = p
                rec[i, k, 4] = b_
                rec[i, k, 5] = d
            if k == n:
                break
            disc = tab[11, k]
            a_s = a_s + disc * ((w - c0) * d - s_ * s_) * dt
            a_b = a_b + disc * ((p - w) * d - b_ * b_) * dt
            base = tab[8, k] * p + tab[9, k] * w + tab[10, k] * (s_ + b_)
            drift = base - bx * x
            darg = base + bx * x
            if darg < 0.0:
                cc += 1
                darg = 0.0
            if x < 0.0:
                cn += 1
            x = x + drift * dt + sigma * math.sqrt(darg) * sqdt * z[i, k]
            if not math.isfinite(x):
                a_s = math.nan
                a_b = math.nan
                break
        js[i] = a_s
        jb[i] = a_b
        nclamp[i] = cc
        nneg[i] = cn


def _em_np(tab, scal, pert, z, js, jb, nclamp, nneg, rec):
    bx, gp, gw, gx, alpha, c0, dt, x0, sigma = (float(v) for v in scal)
    player = int(pert[0])
    lm, la, fm, fa, resp = (float(v) for v in pert[1:6])
    sqdt = math.sqrt(dt)
    m, n = z.shape
    nrec = min(rec.shape[0], m)
    x = np.full(m, x0)
    a_s = np.zeros(m)
    a_b = np.zeros(m)
    cc = np.zeros(m, dtype=np.int64)
    cn = np.zeros(m, dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    zero = 0.0
    with np.errstate(invalid="ignore", over="ignore"):
        for k in range(n + 1):
            wl = tab[0, k] * x + tab[1, k]
            pl = tab[2, k] * x + tab[3, k]
            sl = tab[4, k] * x + tab[5, k]
            bl = tab[6, k] * x + tab[7, k]
            if player == 1:
                sl = lm * sl + la
                wl = fm * wl + fa
            elif player == 2:
                peq = np.maximum(pl, zero)
                pl = lm * pl + la
                bl = fm * bl + fa
                wl = wl + resp * (np.maximum(pl, zero) - peq)
            w = np.maximum(wl, zero)
            p = np.maximum(pl, zero)
            s_ = np.maximum(sl, zero)
            b_ = np.maximum(bl, zero)
            d = alpha - gp * p - gw * w + gx * x
            if nrec:
                rec[:nrec, k, 0] = x[:nrec]
                rec[:nrec, k, 1] = w[:nrec]
                rec[:nrec, k, 2] = s_[:nrec]
                rec[:nrec, k, 3] = p[:nrec]
                rec[:nrec, k, 4] = b_[:nrec]
                rec[:nrec, k, 5] = d[:nrec]
            if k == n:
                break
            disc = tab[11, k]
            a_s = a_s + disc * ((w - c0) * d - s_ * s_) * dt
            a_b = a_b + disc * ((p - w) * d - b_ * b_) * dt
            base = tab[8, k] * p + tab[9, k] * w + tab[10, k] * (s_ + b_)
            drift = base - bx * x
            darg = base + bx * x
            neg = darg < 0.0
            cc += neg & alive
            cn += (x < 0.0) & alive
            darg = np.where(neg, zero, darg)
            x = x + drift * dt + sigma * np.sqrt(darg) * sqdt * z[:, k]
            bad = alive & ~np.isfinite(x)
            if bad.any():
                alive &= ~bad
                x = np.where(alive, x, zero)
    a_s[~alive] = np.nan
    a_b[~alive] = np.nan
    js[:] = a_s
    jb[:] = a_b
    nclamp[:] = cc
    nneg[:] = cn


def em_paths(tab, scal, pert, z, rec=None):
    """Simulate ``z.shape[0]`` paths; returns ``(j_s, j_b, n_clamp, n_neg)``.

    ``tab`` is ``(12, n+1)`` with rows :data:`TAB_ROWS` at the step times
    (including ``T``); ``scal`` holds ``beta_x, gamma_p, gamma_w, gamma_x,
    alpha, c0, dt, x0, sigma_scale``; ``pert`` holds ``player, leader_mult,
    leader_add, follower_mult, follower_add, response_slope``.  ``rec``, if
    given, is ``(r, n+1, 6)`` and receives ``x, w, I_s, p, I_b, D`` for the
    first ``r`` paths.
    """
    tab = np.ascontiguousarray(tab, dtype=np.float64)
    scal = np.ascontiguousarray(scal, dtype=np.float64)
    pert = np.ascontiguousarray(pert, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    m = z.shape[0]
    if rec is None:
        rec = np.empty((0, z.shape[1] + 1, 6))
    js = np.empty(m)
    jb = np.empty(m)
    nclamp = np.empty(m, dtype=np.int64)
    nneg = np.empty(m, dtype=np.int64)
    if _BACKEND == "numba":
        _em_nb(tab, scal, pert, z, js, jb, nclamp, nneg, rec)
    else:
        _em_np(tab, scal, pert, z, js, jb, nclamp, nneg, rec)
    return js, jb, nclamp, nneg

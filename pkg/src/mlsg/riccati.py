"""Backward solution of the six coupled Riccati equations and residual checks.

The equations are integrated in three stages, each as a forward RK4 march in
reversed time ``s = T - t`` from zero data:

1. ``(P2, N2)`` -- the nonlinear pair, written with the Phi/Psi coefficients;
   blow-up beyond ``threshold`` truncates the solution.
2. ``(P1, N1)`` -- linear given stage 1.
3. ``(P0, N0)`` -- plain quadratures given stages 1-2.

Stage trajectories needed at RK4 half-steps are obtained by cubic Hermite
interpolation from node values and the known derivatives.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from ._rhs import riccati_forcing
from .model import Coefficients, ModelParams, coefficients, phi_psi_from

DEFAULT_THRESHOLD = 1e9
NAMES = ("p2", "p1", "p0", "n2", "n1", "n0")


class ArgumentError(ValueError):
    """Inconsistent inputs (mesh mismatch, incomplete solution)."""


@dataclass(frozen=True)
class TimeMesh:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 10:
            raise ArgumentError(f"n_steps must be an integer >= 10, got {self.n_steps}")
        if not self.horizon > 0:
            raise ArgumentError(f"horizon must be > 0, got {self.horizon}")

    @classmethod
    def for_params(cls, params: ModelParams, n_steps: int = 10_000) -> "TimeMesh":
        return cls(params.horizon, n_steps)

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    @property
    def half_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, 2 * self.n_steps + 1)

    @property
    def t(self) -> np.ndarray:
        return self.half_grid[::2]


class P2N2(NamedTuple):
    p2: np.ndarray
    n2: np.ndarray
    existence_ok: bool
    eta: float


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Six coefficient trajectories on ``mesh.t`` plus existence metadata."""

    mesh: TimeMesh
    p2: np.ndarray
    p1: np.ndarray
    p0: np.ndarray
    n2: np.ndarray
    n1: np.ndarray
    n0: np.ndarray
    existence_ok: bool
    eta: float
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        for name in NAMES:
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def t(self) -> np.ndarray:
        return self.mesh.t

    def trajectories(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, n) for n in NAMES)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "P2", "P1", "P0", "N2", "N1", "N0"])
        cols = (self.t, self.p2, self.p1, self.p0, self.n2, self.n1, self.n0)
        for row in zip(*cols):
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, threshold: float = DEFAULT_THRESHOLD) -> "RiccatiSolution":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["t", "P2", "P1", "P0", "N2", "N1", "N0"]:
            raise ArgumentError(f"{path}: unexpected header")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]])
        except ValueError as exc:
            raise ArgumentError(f"{path}: {exc}") from exc
        if data.ndim != 2 or data.shape[1] != 7:
            raise ArgumentError(f"{path}: malformed rows")
        t = data[:, 0]
        mesh = TimeMesh(float(t[-1]), len(t) - 1)
        if not np.allclose(t, mesh.t, rtol=0, atol=1e-12 * mesh.horizon):
            raise ArgumentError(f"{path}: time column is not a uniform mesh")
        ok = bool(np.all(np.isfinite(data[:, 1:])))
        return cls(mesh, *data[:, 1:].T, existence_ok=ok,
                   eta=mesh.horizon if ok else float("nan"), threshold=threshold)


# ---------------------------------------------------------------------------
# helpers


def _hermite_mid(y: np.ndarray, dy: np.ndarray, h: float) -> np.ndarray:
    """Values at node midpoints from node values and d/dt."""
    return 0.5 * (y[:-1] + y[1:]) + h / 8.0 * (dy[:-1] - dy[1:])


def _to_half(y: np.ndarray, dy: np.ndarray, h: float) -> np.ndarray:
    out = np.empty(2 * len(y) - 1)
    out[::2] = y
    out[1::2] = _hermite_mid(y, dy, h)
    return out


def _zeros_like_mesh(mesh: TimeMesh) -> np.ndarray:
    return np.zeros(mesh.n_steps + 1)


def _check_pair(mesh: TimeMesh, *arrays: np.ndarray) -> None:
    for a in arrays:
        if np.shape(a) != (mesh.n_steps + 1,):
            raise ArgumentError(f"trajectory length {np.shape(a)} does not match mesh of {mesh.n_steps} steps")


# ---------------------------------------------------------------------------
# stage 1


def solve_p2n2(params: ModelParams, mesh: TimeMesh, threshold: float = DEFAULT_THRESHOLD) -> P2N2:
    """Quadratic pair via the reversed-time Phi/Psi system.

    On blow-up the returned trajectories are NaN on nodes not reached and
    ``eta`` is the last reversed time that stayed within ``threshold``.
    """
    if not np.isclose(mesh.horizon, params.horizon, rtol=0, atol=1e-12):
        raise ArgumentError("mesh horizon differs from params.horizon")
    c = coefficients(params, mesh.half_grid)
    coef = np.array(phi_psi_from(params, c))[:, ::-1]
    m, reached = kernels.rk4_quadratic_pair(coef, mesh.h, threshold)
    ok = reached == mesh.n_steps
    eta = mesh.horizon if ok else reached * mesh.h
    return P2N2(m[0, ::-1].copy(), m[1, ::-1].copy(), ok, float(eta))


def solve_p2n2_direct(params: ModelParams, mesh: TimeMesh, threshold: float = DEFAULT_THRESHOLD) -> P2N2:
    """Same pair integrated from the unabbreviated equations (K-form).

    Independent of the Phi/Psi algebra; slow (pure Python), used for
    cross-checks only.
    """
    c = coefficients(params, mesh.half_grid)
    cols = [c.em, c.ep, c.bp, c.bw, c.delta] + list(c.k)
    cols = [np.broadcast_to(np.asarray(v, dtype=float), mesh.half_grid.shape)[::-1].tolist() for v in cols]
    nhalf = len(cols[0])
    point = [
        Coefficients(t=None, em=cols[0][j], ep=cols[1][j], bp=cols[2][j], bw=cols[3][j], delta=cols[4][j],
                     k=tuple(col[j] for col in cols[5:]))
        for j in range(nhalf)
    ]

    def g(j, p, q):
        f = riccati_forcing(params, point[j], p, 0.0, 0.0, q, 0.0, 0.0)
        return f[0], f[3]

    h = mesh.h
    n = mesh.n_steps
    ps = np.full(n + 1, np.nan)
    qs = np.full(n + 1, np.nan)
    ps[0] = qs[0] = 0.0
    p = q = 0.0
    reached = n
    for i in range(n):
        j = 2 * i
        k1 = g(j, p, q)
        k2 = g(j + 1, p + 0.5 * h * k1[0], q + 0.5 * h * k1[1])
        k3 = g(j + 1, p + 0.5 * h * k2[0], q + 0.5 * h * k2[1])
        k4 = g(j + 2, p + h * k3[0], q + h * k3[1])
        p = p + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        q = q + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (abs(p) <= threshold and abs(q) <= threshold):
            reached = i
            break
        ps[i + 1] = p
        qs[i + 1] = q
    ok = reached == n
    return P2N2(ps[::-1].copy(), qs[::-1].copy(), ok, float(mesh.horizon if ok else reached * h))


# ---------------------------------------------------------------------------
# stages 2 and 3


def solve_p1n1(params: ModelParams, mesh: TimeMesh, p2n2: P2N2) -> tuple[np.ndarray, np.ndarray]:
    """Linear pair (P1, N1) given the quadratic pair on the same mesh."""
    _check_pair(mesh, p2n2.p2, p2n2.n2)
    if not p2n2.existence_ok:
        raise ArgumentError("quadratic pair did not reach t = 0; P1/N1 undefined")
    h = mesh.h
    z = _zeros_like_mesh(mesh)
    cn = coefficients(params, mesh.t)
    f = riccati_forcing(params, cn, p2n2.p2, z, z, p2n2.n2, z, z)
    p2h = _to_half(p2n2.p2, -f[0], h)
    n2h = _to_half(p2n2.n2, -f[3], h)

    c = coefficients(params, mesh.half_grid)
    zh = np.zeros_like(p2h)
    oh = np.ones_like(p2h)
    f00 = riccati_forcing(params, c, p2h, zh, zh, n2h, zh, zh)
    f10 = riccati_forcing(params, c, p2h, oh, zh, n2h, zh, zh)
    f01 = riccati_forcing(params, c, p2h, zh, zh, n2h, oh, zh)
    a = np.array([f10[1] - f00[1], f01[1] - f00[1], f10[4] - f00[4], f01[4] - f00[4]])[:, ::-1]
    b = np.array([f00[1], f00[4]])[:, ::-1]
    y = kernels.rk4_linear_pair(a, b, h)
    return y[0, ::-1].copy(), y[1, ::-1].copy()


def solve_p0n0(params: ModelParams, mesh: TimeMesh, p2n2: P2N2, p1: np.ndarray, n1: np.ndarray):
    """Constant terms (P0, N0) by quadrature of known trajectories."""
    _check_pair(mesh, p2n2.p2, p2n2.n2, p1, n1)
    if not p2n2.existence_ok:
        raise ArgumentError("quadratic pair did not reach t = 0; P0/N0 undefined")
    h = mesh.h
    z = _zeros_like_mesh(mesh)
    cn = coefficients(params, mesh.t)
    f = riccati_forcing(params, cn, p2n2.p2, p1, z, p2n2.n2, n1, z)
    p2h = _to_half(p2n2.p2, -f[0], h)
    p1h = _to_half(p1, -f[1], h)
    n2h = _to_half(p2n2.n2, -f[3], h)
    n1h = _to_half(n1, -f[4], h)
    c = coefficients(params, mesh.half_grid)
    zh = np.zeros_like(p2h)
    g = riccati_forcing(params, c, p2h, p1h, zh, n2h, n1h, zh)
    y = kernels.rk4_quadrature(np.array([g[2], g[5]])[:, ::-1], h)
    return y[0, ::-1].copy(), y[1, ::-1].copy()


def solve(params: ModelParams, mesh: TimeMesh | None = None, threshold: float = DEFAULT_THRESHOLD) -> RiccatiSolution:
    """Solve all six equations; see :class:`RiccatiSolution`."""
    mesh = mesh or TimeMesh.for_params(params)
    quad = solve_p2n2(params, mesh, threshold)
    if quad.existence_ok:
        p1, n1 = solve_p1n1(params, mesh, quad)
        p0, n0 = solve_p0n0(params, mesh, quad, p1, n1)
    else:
        p1 = n1 = p0 = n0 = np.full(mesh.n_steps + 1, np.nan)
    # terminal values are assigned, not integrated
    arrays = [quad.p2, p1, p0, quad.n2, n1, n0]
    for a in arrays:
        a[-1] = 0.0
    return RiccatiSolution(mesh, quad.p2, p1, p0, quad.n2, n1, n0,
                           existence_ok=quad.existence_ok, eta=quad.eta, threshold=threshold)


# ---------------------------------------------------------------------------
# residuals


class RiccatiResidual(NamedTuple):
    t: np.ndarray  # interior nodes
    p2: np.ndarray
    p1: np.ndarray
    p0: np.ndarray
    n2: np.ndarray
    n1: np.ndarray
    n0: np.ndarray

    def sup(self) -> dict[str, float]:
        return {n: float(np.max(np.abs(getattr(self, n)))) for n in NAMES}

    def sup_all(self) -> float:
        return max(self.sup().values())


def central_difference(y: np.ndarray, h: float) -> np.ndarray:
    """d/dt at interior nodes."""
    return (y[2:] - y[:-2]) / (2.0 * h)


def riccati_residual(params: ModelParams, sol: RiccatiSolution) -> RiccatiResidual:
    """Central-difference derivative plus analytic forcing at interior nodes."""
    mesh = sol.mesh
    t = mesh.t[1:-1]
    c = coefficients(params, t)
    inner = [y[1:-1] for y in sol.trajectories()]
    f = riccati_forcing(params, c, *inner)
    res = [central_difference(y, mesh.h) + fy for y, fy in zip(sol.trajectories(), f)]
    return RiccatiResidual(t, *res)


class HJBResidual(NamedTuple):
    t: np.ndarray
    x: np.ndarray
    seller: np.ndarray  # shape (len(t), len(x))
    buyer: np.ndarray

    def sup(self) -> dict[str, float]:
        return {"seller": float(np.max(np.abs(self.seller))), "buyer": float(np.max(np.abs(self.buyer)))}


def _interior_indices(mesh: TimeMesh, t_grid) -> np.ndarray:
    if t_grid is None:
        return np.arange(1, mesh.n_steps)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    idx = np.rint(t_grid / mesh.h).astype(int)
    if np.any(np.abs(idx * mesh.h - t_grid) > 1e-9 * mesh.horizon):
        raise ArgumentError("t_grid points must lie on the solution mesh")
    if np.any(idx < 1) or np.any(idx > mesh.n_steps - 1):
        raise ArgumentError("t_grid points must be interior mesh nodes")
    return idx


def hjb_residual(params: ModelParams, sol: RiccatiSolution, t_grid=None, x_grid=None) -> HJBResidual:
    """Pointwise residuals of both HJB equations under the quadratic ansatz.

    ``dV/dt`` uses central differences of the trajectories; ``dV/dx`` and
    ``d2V/dx2`` are exact; the Hamiltonians are evaluated literally at the
    closed-form Nash responses (see :mod:`mlsg.hamnash`).  ``t_grid``
    defaults to all interior nodes.
    """
    from .hamnash import HamiltonianPoint, closed_form_responses, hamiltonian_values

    mesh = sol.mesh
    idx = _interior_indices(mesh, t_grid)
    x = np.atleast_1d(np.asarray([0.0] if x_grid is None else x_grid, dtype=float))
    t = mesh.t[idx]
    tt = t[:, None]
    xx = x[None, :]
    p2, p1, p0, n2, n1, n0 = (y[idx][:, None] for y in sol.trajectories())
    dt = [((y[idx + 1] - y[idx - 1]) / (2.0 * mesh.h))[:, None] for y in sol.trajectories()]
    dvs = dt[0] * xx**2 + dt[1] * xx + dt[2]
    dvb = dt[3] * xx**2 + dt[4] * xx + dt[5]
    pt = HamiltonianPoint(tt, xx, 2 * p2 * xx + p1, 2 * n2 * xx + n1, 2 * p2 + 0 * xx, 2 * n2 + 0 * xx)
    controls = closed_form_responses(params, pt)
    hs, hb = hamiltonian_values(params, pt, controls)
    return HJBResidual(t, x, dvs + hs, dvb + hb)


def quadratic_coefficients(fm, f0, fp):
    """(c2, c1, c0) of a quadratic from its values at x = -1, 0, 1."""
    return (fp + fm) / 2.0 - f0, (fp - fm) / 2.0, f0


def hjb_coefficient_mismatch(params: ModelParams, sol: RiccatiSolution,
                             rr: RiccatiResidual | None = None) -> float:
    """Largest gap between the x-coefficients of the HJB residuals and the
    matching Riccati residuals, over interior nodes."""
    rr = rr or riccati_residual(params, sol)
    h = hjb_residual(params, sol, x_grid=[-1.0, 0.0, 1.0])
    err = 0.0
    for surface, names in ((h.seller, ("p2", "p1", "p0")), (h.buyer, ("n2", "n1", "n0"))):
        coefs = quadratic_coefficients(surface[:, 0], surface[:, 1], surface[:, 2])
        for c, n in zip(coefs, names):
            err = max(err, float(np.max(np.abs(c - getattr(rr, n)))))
    return err

"""Equilibrium feedback strategies and quadratic value functions."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .model import ModelParams, coefficients
from .riccati import ArgumentError, RiccatiSolution, TimeMesh

COEF_NAMES = ("w_x", "w_0", "p_x", "p_0", "i_sx", "i_s0", "i_bx", "i_b0")
CSV_HEADER = ("t", "w_x", "w_0", "p_x", "p_0", "I_sx", "I_s0", "I_bx", "I_b0")


class Controls(NamedTuple):
    w: float
    i_s: float
    p: float
    i_b: float


class ValuePair(NamedTuple):
    v_s: float
    v_b: float


@dataclass(frozen=True, eq=False)
class StrategyCoefficients:
    """Slope/intercept trajectories: ``w* = w_x * x + w_0`` and so on."""

    mesh: TimeMesh
    w_x: np.ndarray
    w_0: np.ndarray
    p_x: np.ndarray
    p_0: np.ndarray
    i_sx: np.ndarray
    i_s0: np.ndarray
    i_bx: np.ndarray
    i_b0: np.ndarray

    def __post_init__(self):
        for name in COEF_NAMES:
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def t(self) -> np.ndarray:
        return self.mesh.t

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in COEF_NAMES}

    def table(self) -> np.ndarray:
        """``(8, n+1)`` array with rows in :data:`COEF_NAMES` order."""
        return np.array([getattr(self, n) for n in COEF_NAMES])

    def at(self, t) -> np.ndarray:
        """Coefficients linearly interpolated at ``t``; shape ``(8,) + shape(t)``."""
        return np.array([np.interp(t, self.t, getattr(self, n)) for n in COEF_NAMES])

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in zip(self.t, *(getattr(self, n) for n in COEF_NAMES)):
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def strategy_coefficients(params: ModelParams, sol: RiccatiSolution) -> StrategyCoefficients:
    if not sol.existence_ok:
        raise ArgumentError(f"Riccati solution incomplete (eta = {sol.eta:g} < T)")
    c = coefficients(params, sol.t)
    k = c.k
    edl = c.ep * c.delta
    p2, p1, n2, n1 = sol.p2, sol.p1, sol.n2, sol.n1
    return StrategyCoefficients(
        sol.mesh,
        w_x=2 * k[4] * p2 + 2 * k[5] * n2 + k[6],
        w_0=k[4] * (p1 + p2) + k[5] * (n1 + n2) + k[7],
        p_x=2 * k[0] * p2 + 2 * k[1] * n2 + k[2],
        p_0=k[0] * (p1 + p2) + k[1] * (n1 + n2) + k[3],
        i_sx=edl * p2,
        i_s0=edl * (p1 + p2) / 2,
        i_bx=edl * n2,
        i_b0=edl * (n1 + n2) / 2,
    )


def linear_forms(coeffs: StrategyCoefficients, t, x) -> Controls:
    """Unclamped strategies at ``(t, x)``."""
    wx, w0, px, p0, sx, s0, bx, b0 = coeffs.at(t)
    return Controls(wx * x + w0, sx * x + s0, px * x + p0, bx * x + b0)


def evaluate_strategies(coeffs: StrategyCoefficients, t, x) -> Controls:
    """Equilibrium controls at ``(t, x)``, each clamped at zero."""
    return Controls(*(np.maximum(v, 0.0) for v in linear_forms(coeffs, t, x)))


def value_functions(sol: RiccatiSolution, t, x) -> ValuePair:
    def at(y):
        return np.interp(t, sol.t, y)

    return ValuePair(at(sol.p2) * x**2 + at(sol.p1) * x + at(sol.p0),
                     at(sol.n2) * x**2 + at(sol.n1) * x + at(sol.n0))


def follower_foc(params: ModelParams, sol: RiccatiSolution) -> tuple[np.ndarray, np.ndarray]:
    """dH_s/dw and dH_b/dI_b at the unclamped strategies, per node and x in {0, 1}.

    Returns two ``(n+1, 2)`` arrays; both vanish for a correct solution.
    """
    sc = strategy_coefficients(params, sol)
    c = coefficients(params, sol.t)
    out_w, out_b = [], []
    for x in (0.0, 1.0):
        w = sc.w_x * x + sc.w_0
        p = sc.p_x * x + sc.p_0
        ib = sc.i_bx * x + sc.i_b0
        y1, a1 = 2 * sol.p2 * x + sol.p1, 2 * sol.p2
        y2, a2 = 2 * sol.n2 * x + sol.n1, 2 * sol.n2
        demand = params.alpha - params.gamma_p * p - params.gamma_w * w + params.gamma_x * x
        dw = c.bw * (y1 + a1 / 2) + c.em * (demand - params.gamma_w * (w - params.c0))
        db = c.delta * (y2 + a2 / 2) - 2 * c.em * ib
        out_w.append(dw)
        out_b.append(db)
    return np.array(out_w).T, np.array(out_b).T

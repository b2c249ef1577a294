"""Model parameters and the closed-form coefficient families.

All quantities are dimensionless.  Every coefficient is a function of time
only through ``beta_p(t)``, ``beta_w(t)``, ``delta(t)`` and the discount
factors ``exp(+-r t)``; the functions below accept scalar or array ``t`` and
are recomputed on every call (nothing is cached across parameter changes).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np


class ConfigError(ValueError):
    """Invalid model parameters or configuration."""


class DomainError(ValueError):
    """Time argument outside the horizon."""


@dataclass(frozen=True)
class TimeCurve:
    """Piecewise-linear function of time given by ``(t, value)`` knots."""

    knots: tuple[tuple[float, float], ...]

    @classmethod
    def constant(cls, value: float, horizon: float) -> "TimeCurve":
        return cls(((0.0, float(value)), (float(horizon), float(value))))

    @classmethod
    def from_json(cls, obj: Any, horizon: float) -> "TimeCurve":
        if isinstance(obj, (int, float)):
            return cls.constant(float(obj), horizon)
        try:
            knots = tuple((float(t), float(v)) for t, v in obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"time-curve must be a number or [[t, v], ...]: {obj!r}") from exc
        return cls(knots)

    @property
    def times(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def values(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    def __call__(self, t):
        if len(self.knots) == 2 and self.knots[0][1] == self.knots[1][1]:
            # constant curves stay bitwise constant
            return np.full(np.shape(t), self.knots[0][1]) if np.ndim(t) else self.knots[0][1]
        out = np.interp(t, self.times, self.values)
        return out if np.ndim(t) else float(out)

    def to_json(self) -> list[list[float]]:
        return [[t, v] for t, v in self.knots]


@dataclass(frozen=True)
class ModelParams:
    """Economic and dynamics constants of the innovation/pricing game.

    ``beta_p``, ``beta_w`` and ``delta`` are time curves; everything else is a
    scalar.  Call :meth:`validate` (done by all loaders) before use.
    """

    beta_p: TimeCurve
    beta_w: TimeCurve
    delta: TimeCurve
    beta_x: float
    gamma_p: float
    gamma_w: float
    gamma_x: float
    alpha: float
    c0: float
    r: float
    horizon: float

    def validate(self) -> "ModelParams":
        T = self.horizon
        if not (math.isfinite(T) and T > 0):
            raise ConfigError(f"horizon must be > 0, got {T}")
        for name in ("beta_x", "gamma_p", "gamma_w", "alpha"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be > 0, got {v}")
        for name in ("gamma_x", "c0", "r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be >= 0, got {v}")
        if not self.gamma_p * (2 * self.gamma_w + self.gamma_p) > 0:
            raise ConfigError("gamma_p * (2 gamma_w + gamma_p) must be > 0")
        for name, strict in (("beta_p", True), ("beta_w", True), ("delta", False)):
            curve = getattr(self, name)
            ts, vs = curve.times, curve.values
            if len(ts) < 2:
                raise ConfigError(f"{name}: need at least two knots")
            if ts[0] != 0.0 or not math.isclose(ts[-1], T, rel_tol=0, abs_tol=1e-12):
                raise ConfigError(f"{name}: knots must span [0, {T}]")
            if np.any(np.diff(ts) <= 0):
                raise ConfigError(f"{name}: knot times must be strictly increasing")
            if not np.all(np.isfinite(vs)):
                raise ConfigError(f"{name}: non-finite values")
            if strict and np.any(vs <= 0):
                raise ConfigError(f"{name} must be > 0 on [0, T]")
            if not strict and np.any(vs < 0):
                raise ConfigError(f"{name} must be >= 0 on [0, T]")
        return self

    def with_(self, **changes) -> "ModelParams":
        """Copy with fields replaced; numeric values for curves become constants."""
        for name in ("beta_p", "beta_w", "delta"):
            if name in changes and not isinstance(changes[name], TimeCurve):
                T = changes.get("horizon", self.horizon)
                changes[name] = TimeCurve.constant(changes[name], T)
        return replace(self, **changes).validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        missing = names - set(data)
        if missing:
            raise ConfigError(f"missing model keys: {sorted(missing)}")
        try:
            T = float(data["horizon"])
            kw = {n: float(data[n]) for n in names - {"beta_p", "beta_w", "delta"}}
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for n in ("beta_p", "beta_w", "delta"):
            kw[n] = TimeCurve.from_json(data[n], T)
        return cls(**kw).validate()

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_json() if isinstance(v, TimeCurve) else v
        return out


def baseline(**changes) -> ModelParams:
    """Parameter set of the numerical study (C0 = 1, delta = 0.1, T = 1)."""
    T = changes.pop("horizon", 1.0)
    base = dict(
        beta_p=TimeCurve.constant(0.1, T),
        beta_w=TimeCurve.constant(0.2, T),
        delta=TimeCurve.constant(0.1, T),
        beta_x=0.1,
        gamma_p=0.1,
        gamma_w=0.0001,
        gamma_x=0.1,
        alpha=1.0,
        c0=1.0,
        r=0.05,
        horizon=T,
    )
    params = ModelParams(**base).validate()
    return params.with_(**changes) if changes else params


class KSet(NamedTuple):
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    k7: float
    k8: float
    k9: float
    k10: float
    k11: float
    k12: float
    k13: float
    k14: float
    k15: float
    k16: float
    k17: float
    k18: float


class PhiPsiSet(NamedTuple):
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    phi5: float
    phi6: float
    psi1: float
    psi2: float
    psi3: float
    psi4: float
    psi5: float
    psi6: float


@dataclass(frozen=True)
class Coefficients:
    """K1..K18 plus the time curves and discount factors at time(s) ``t``.

    Attribute ``k[i]`` holds K_{i+1}; scalars or arrays matching ``t``.
    """

    t: Any
    em: Any  # exp(-r t)
    ep: Any  # exp(+r t)
    bp: Any
    bw: Any
    delta: Any
    k: tuple = field(repr=False)

    @property
    def d2(self):
        return self.delta * self.delta


def _check_t(params: ModelParams, t) -> None:
    ta = np.asarray(t, dtype=float)
    if ta.size and (not np.all(np.isfinite(ta)) or ta.min() < 0.0 or ta.max() > params.horizon):
        raise DomainError(f"t must lie in [0, {params.horizon}]")


def coefficients(params: ModelParams, t) -> Coefficients:
    """Evaluate K1..K18 at scalar or array ``t`` (no domain check)."""
    gp, gw, gx = params.gamma_p, params.gamma_w, params.gamma_x
    alpha, c0, bx = params.alpha, params.c0, params.beta_x
    bp, bw, dl = params.beta_p(t), params.beta_w(t), params.delta(t)
    ep = np.exp(params.r * np.asarray(t, dtype=float))
    em = np.exp(-params.r * np.asarray(t, dtype=float))
    if np.ndim(t) == 0:
        ep, em = float(ep), float(em)
    d2 = dl * dl
    den = gp * (2 * gw + gp)
    c = 1 + gp / (2 * gw)

    k1 = -(ep * gw * bw) / den
    k2 = ep * (2 * gw * bp - bw * gp) / den
    k3 = (gw + gp) * gx / den
    k4 = ((gw + gp) * alpha - c0 * gw**2) / den
    k5 = (ep * bw - gp * k1) / (2 * gw)
    k6 = -(gp * k2) / (2 * gw)
    k7 = (gx - gp * k3) / (2 * gw)
    k8 = (alpha + c0 * gw - gp * k4) / (2 * gw)
    k9 = bp * k1 - gp * k1 * bw / (2 * gw) + ep * bw**2 / (2 * gw) + ep * d2 / 2
    k10 = bp * k2 - gp * k2 * bw / (2 * gw) + ep * d2 / 2
    k11 = bp * k3 - gp * k3 * bw / (2 * gw) + gx * bw / (2 * gw) - bx
    k12 = bp * k4 - gp * k4 * bw / (2 * gw) + bw * (alpha + c0 * gw) / (2 * gw)
    k13 = -gp * k1 - ep * bw
    k14 = gx - gp * k3
    k15 = alpha - c0 * gw - gp * k4
    k16 = c * k1 - ep * bw / (2 * gw)
    k17 = c * k3 - gx / (2 * gw)
    k18 = c * k4 - (alpha + c0 * gw) / (2 * gw)
    ks = (k1, k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12, k13, k14, k15, k16, k17, k18)
    if np.ndim(t):
        shape = np.shape(t)
        ks = tuple(np.broadcast_to(np.asarray(k, dtype=float), shape).copy() for k in ks)
    return Coefficients(t=t, em=em, ep=ep, bp=bp, bw=bw, delta=dl, k=ks)


def phi_psi_from(params: ModelParams, c: Coefficients) -> tuple:
    """Quadratic-system coefficients (phi1..phi6, psi1..psi6) from K's."""
    gp, gw = params.gamma_p, params.gamma_w
    k = c.k
    K2, K5, K6, K7, K9, K10, K11 = k[1], k[4], k[5], k[6], k[8], k[9], k[10]
    K13, K14, K16, K17 = k[12], k[13], k[15], k[16]
    em, ep, d2 = c.em, c.ep, c.d2
    cc = 1 + gp / (2 * gw)

    phi1 = 4 * K9 + 2 * em * K5 * K13 - ep * d2
    phi2 = -2 * em * gp * K2 * K6
    phi3 = 4 * K10 - 2 * em * gp * K2 * K5 + 2 * em * K6 * K13
    phi4 = 2 * K11 + em * K5 * K14 + em * K7 * K13
    phi5 = em * K6 * K14 - em * gp * K2 * K7
    phi6 = em / 2 * K7 * K14
    psi1 = 2 * em * K13 * K16
    psi2 = 4 * K10 - 2 * em * cc * gp * K2**2 - ep * d2
    psi3 = 4 * K9 - 2 * em * gp * K2 * K16 + 2 * em * cc * K2 * K13
    psi4 = em * K14 * K16 + em * K13 * K17
    psi5 = 2 * K11 + em * cc * K2 * K14 - em * gp * K2 * K17
    psi6 = em / 2 * K14 * K17
    return (phi1, phi2, phi3, phi4, phi5, phi6, psi1, psi2, psi3, psi4, psi5, psi6)


def k_constants(params: ModelParams, t: float) -> KSet:
    """K1..K18 at a single time ``t`` in [0, T]."""
    _check_t(params, t)
    return KSet(*(float(v) for v in coefficients(params, float(t)).k))


def phi_psi(params: ModelParams, t: float) -> PhiPsiSet:
    """Phi1..Phi6 and Psi1..Psi6 at a single time ``t`` in [0, T]."""
    _check_t(params, t)
    return PhiPsiSet(*(float(v) for v in phi_psi_from(params, coefficients(params, float(t)))))


def phi_psi_reversed(params: ModelParams, s: float) -> PhiPsiSet:
    """Coefficients of the time-reversed system at reversed time ``s``."""
    _check_t(params, s)
    return phi_psi(params, params.horizon - float(s))


class ConcavityDiagnostics(NamedTuple):
    t: float
    seller_wholesale: float
    seller_innovation: float
    buyer_innovation: float
    buyer_retail: float
    all_negative: bool


def concavity_diagnostics(params: ModelParams, t: float) -> ConcavityDiagnostics:
    """Own-control second derivatives of each player's Hamiltonian.

    The retail-price entry is taken after substituting the wholesale-price
    response, whose slope in ``p`` is ``-gamma_p / (2 gamma_w)``.
    """
    _check_t(params, t)
    em = math.exp(-params.r * t)
    gp, gw = params.gamma_p, params.gamma_w
    hww = -2 * em * gw
    hss = -2 * em
    hbb = -2 * em
    hpp = -em * gp * (2 * gw + gp) / (2 * gw)
    ok = hww < 0 and hss < 0 and hbb < 0 and hpp < 0
    return ConcavityDiagnostics(float(t), hww, hss, hbb, hpp, bool(ok))

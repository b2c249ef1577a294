"""Euler-Maruyama Monte Carlo of the goodwill SDE under feedback strategies.

Every path draws its normals from its own stream, seeded from
``(seed, path index)``; paths are simulated in chunks on a thread pool and
reduced in path order, so results do not depend on the worker count.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .model import ConfigError, ModelParams
from .riccati import RiccatiSolution
from .strategies import StrategyCoefficients, strategy_coefficients

CHUNK = 2048
N_RECORDED = 10
DEFAULT_FACTORS = (0.9, 0.95, 1.05, 1.1)


class SimulationError(RuntimeError):
    """Too many paths produced a non-finite state."""


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MLSG_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MLSG_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Perturbation:
    """Deviation of one player's strategy pair.

    Player 1 (seller) leads with ``I_s`` and follows with ``w``; player 2
    (buyer) leads with ``p`` and follows with ``I_b``.  ``target`` selects
    which of the pair is changed to ``factor * u + offset``.  When the
    buyer's retail price moves, the seller's wholesale price follows it
    along the seller's best-response slope.
    """

    player: int
    target: str = "both"
    factor: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.player not in (1, 2):
            raise ConfigError(f"perturbation player must be 1 or 2, got {self.player!r}")
        if self.target not in ("leader", "follower", "both"):
            raise ConfigError(f"perturbation target must be leader, follower or both, got {self.target!r}")
        if not (np.isfinite(self.factor) and np.isfinite(self.offset)):
            raise ConfigError("perturbation factor and offset must be finite")

    def encode(self, params: ModelParams) -> np.ndarray:
        lead = self.target in ("leader", "both")
        follow = self.target in ("follower", "both")
        resp = -params.gamma_p / (2 * params.gamma_w) if self.player == 2 else 0.0
        return np.array([
            self.player,
            self.factor if lead else 1.0, self.offset if lead else 0.0,
            self.factor if follow else 1.0, self.offset if follow else 0.0,
            resp,
        ], dtype=float)


_NO_PERTURBATION = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 0.0])


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    n_steps: int = 2000
    seed: int = 0
    x0: float = 1.0
    sigma_scale: float = 1.0
    perturbation: Perturbation | None = None

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 10:
            raise ConfigError(f"n_steps must be an integer >= 10, got {self.n_steps!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not 0.0 <= self.sigma_scale <= 1.0:
            raise ConfigError(f"sigma_scale must lie in [0, 1], got {self.sigma_scale!r}")
        if not np.isfinite(self.x0):
            raise ConfigError("x0 must be finite")

    def with_(self, **changes) -> "SimConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SimConfig(**d)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown sim fields: {sorted(unknown)}")
        pert = data.pop("perturbation", None)
        if pert is not None:
            try:
                pert = Perturbation(**pert)
            except TypeError as exc:
                raise ConfigError(f"bad perturbation block: {exc}") from None
        try:
            return cls(**data, perturbation=pert)
        except TypeError as exc:
            raise ConfigError(f"bad sim block: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SimResult:
    config: SimConfig
    j_s_mean: float
    j_s_se: float
    j_b_mean: float
    j_b_se: float
    clamp_fraction: float
    negative_x_fraction: float
    n_excluded: int
    j_s: np.ndarray = field(repr=False)
    j_b: np.ndarray = field(repr=False)
    paths: np.ndarray | None = field(default=None, repr=False)
    t: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "j_s_mean": self.j_s_mean,
            "j_s_se": self.j_s_se,
            "j_b_mean": self.j_b_mean,
            "j_b_se": self.j_b_se,
            "clamp_fraction": self.clamp_fraction,
            "negative_x_fraction": self.negative_x_fraction,
            "n_excluded": self.n_excluded,
            "config": self.config.to_dict(),
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def paths_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t", "x", "w", "I_s", "p", "I_b", "D"])
            for i, rec in enumerate(self.paths):
                for tk, row in zip(self.t, rec):
                    w.writerow([i, f"{tk:.17g}", *(f"{v:.17g}" for v in row)])


def path_normals(seed: int, index: int, n_steps: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss)).standard_normal(n_steps)


def step_table(params: ModelParams, coeffs: StrategyCoefficients, n_steps: int) -> np.ndarray:
    """Per-step inputs of the path kernel, rows as in ``kernels.TAB_ROWS``."""
    t = np.linspace(0.0, params.horizon, n_steps + 1)
    rows = list(coeffs.at(t))
    rows += [np.broadcast_to(params.beta_p(t), t.shape), np.broadcast_to(params.beta_w(t), t.shape),
             np.broadcast_to(params.delta(t), t.shape), np.exp(-params.r * t)]
    return np.array(rows, dtype=float)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    if len(v) < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


def simulate(params: ModelParams, coeffs: StrategyCoefficients | RiccatiSolution, cfg: SimConfig,
             workers: int | None = None, record: bool = False) -> SimResult:
    """Monte Carlo estimates of both players' discounted profits.

    ``record`` keeps ``(x, w, I_s, p, I_b, D)`` along the first ten paths.
    """
    if isinstance(coeffs, RiccatiSolution):
        coeffs = strategy_coefficients(params, coeffs)
    n, m = cfg.n_steps, cfg.n_paths
    dt = params.horizon / n
    tab = step_table(params, coeffs, n)
    scal = np.array([params.beta_x, params.gamma_p, params.gamma_w, params.gamma_x, params.alpha,
                     params.c0, dt, cfg.x0, cfg.sigma_scale])
    pert = cfg.perturbation.encode(params) if cfg.perturbation else _NO_PERTURBATION
    n_rec = min(m, N_RECORDED) if record else 0
    rec = np.zeros((n_rec, n + 1, 6))

    def run(lo: int):
        hi = min(lo + CHUNK, m)
        z = np.empty((hi - lo, n))
        for i in range(lo, hi):
            z[i - lo] = path_normals(cfg.seed, i, n)
        r = rec[lo:min(hi, n_rec)] if lo < n_rec else None
        return kernels.em_paths(tab, scal, pert, z, r)

    starts = range(0, m, CHUNK)
    nw = min(worker_count(workers), len(starts))
    if nw > 1:
        with ThreadPoolExecutor(nw) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    js = np.concatenate([p[0] for p in parts])
    jb = np.concatenate([p[1] for p in parts])
    ncl = int(sum(int(p[2].sum()) for p in parts))
    nng = int(sum(int(p[3].sum()) for p in parts))

    good = np.isfinite(js) & np.isfinite(jb)
    n_bad = int(m - good.sum())
    if n_bad > 0.01 * m:
        raise SimulationError(f"{n_bad} of {m} paths produced a non-finite state")
    s_mean, s_se = _mean_se(js[good])
    b_mean, b_se = _mean_se(jb[good])
    return SimResult(
        config=cfg,
        j_s_mean=s_mean, j_s_se=s_se, j_b_mean=b_mean, j_b_se=b_se,
        clamp_fraction=ncl / (m * n), negative_x_fraction=nng / (m * n), n_excluded=n_bad,
        j_s=js, j_b=jb,
        paths=rec if record else None,
        t=np.linspace(0.0, params.horizon, n + 1) if record else None,
    )


@dataclass(frozen=True)
class DeviationRow:
    player: int
    factor: float
    gain: float  # deviating player's profit change, perturbed minus equilibrium
    paired_se: float
    passed: bool


@dataclass(frozen=True)
class DeviationReport:
    rows: tuple[DeviationRow, ...]
    baseline: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "equilibrium": self.baseline, "rows": [asdict(r) for r in self.rows]}


def deviation_test(params: ModelParams, solution: RiccatiSolution, cfg: SimConfig,
                   factors=DEFAULT_FACTORS, players=(1, 2), target: str = "both",
                   n_se: float = 3.0, atol: float = 0.0, workers: int | None = None) -> DeviationReport:
    """Unilateral deviations against the equilibrium with common random numbers.

    A row passes when the deviating player's gain is at most
    ``n_se * paired_se + atol``.
    """
    coeffs = strategy_coefficients(params, solution)
    eq = simulate(params, coeffs, cfg.with_(perturbation=None), workers)
    rows = []
    for player in players:
        base = eq.j_s if player == 1 else eq.j_b
        for f in factors:
            dev = simulate(params, coeffs, cfg.with_(perturbation=Perturbation(player, target, f)), workers)
            d = (dev.j_s if player == 1 else dev.j_b) - base
            d = d[np.isfinite(d)]
            gain, se = _mean_se(d)
            rows.append(DeviationRow(player, float(f), gain, se, bool(gain <= n_se * se + atol)))
    return DeviationReport(tuple(rows), eq.summary())

"""Parameter sweeps over C0 and a constant innovation efficiency, with plots."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ConfigError, ModelParams
from .riccati import TimeMesh, solve
from .strategies import COEF_NAMES, strategy_coefficients

PARAMETERS = ("c0", "delta")
CSV_HEADER = ("parameter_value", "t", "coefficient_name", "coefficient_value")


class SweepParseError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    base: ModelParams
    parameter: str
    values: tuple[float, ...]
    outputs: tuple[str, ...] = COEF_NAMES

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ConfigError(f"sweep parameter must be one of {PARAMETERS}, got {self.parameter!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep values must be nonempty")
        if len(set(vals)) != len(vals):
            raise ConfigError("sweep values must be distinct")
        bad = [o for o in self.outputs if o not in COEF_NAMES]
        if bad:
            raise ConfigError(f"unknown sweep outputs {bad}; choose from {COEF_NAMES}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def params_for(self, value: float) -> ModelParams:
        return self.base.with_(**{self.parameter: value}).validate()

    @classmethod
    def from_dict(cls, base: ModelParams, data: dict) -> "SweepSpec":
        unknown = set(data) - {"parameter", "values", "outputs"}
        if unknown:
            raise ConfigError(f"unknown sweep fields: {sorted(unknown)}")
        try:
            return cls(base, data["parameter"], tuple(data["values"]),
                       tuple(data.get("outputs", COEF_NAMES)))
        except KeyError as exc:
            raise ConfigError(f"sweep block missing {exc}") from None


@dataclass
class SweepGroup:
    value: float
    complete: bool
    eta: float
    t: np.ndarray
    coefficients: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class SweepResult:
    spec: SweepSpec
    groups: list[SweepGroup]

    @property
    def complete(self) -> bool:
        return all(g.complete for g in self.groups)

    def stack(self, name: str) -> np.ndarray:
        """``(len(values), n+1)`` array of one coefficient, NaN for incomplete groups."""
        return np.array([g.coefficients.get(name, np.full(len(g.t), np.nan)) for g in self.groups])

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for g in self.groups:
            if not g.complete:
                continue
            for name in self.spec.outputs:
                for tk, v in zip(g.t, g.coefficients[name]):
                    w.writerow([f"{g.value:.17g}", f"{tk:.17g}", name, f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def run_sweep(spec: SweepSpec, mesh: TimeMesh | None = None) -> SweepResult:
    """Solve once per value; groups that blow up are kept but marked incomplete."""
    mesh = mesh or TimeMesh.for_params(spec.base)
    groups = []
    for v in spec.values:
        params = spec.params_for(v)
        sol = solve(params, mesh)
        if not sol.existence_ok:
            groups.append(SweepGroup(v, False, sol.eta, mesh.t))
            continue
        sc = strategy_coefficients(params, sol)
        groups.append(SweepGroup(v, True, sol.eta, mesh.t, {n: getattr(sc, n) for n in spec.outputs}))
    return SweepResult(spec, groups)


def relative_spread(result: SweepResult, names=("w_x", "w_0", "p_x", "p_0")) -> dict[str, float]:
    """Sup over t of (max - min across values) / max |value|, per coefficient."""
    out = {}
    for n in names:
        a = result.stack(n)
        scale = np.max(np.abs(a), axis=0)
        spread = np.ptp(a, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(scale > 0, spread / scale, 0.0)
        out[n] = float(np.max(rel))
    return out


def read_sweep_csv(path: str | Path) -> dict[str, dict[float, tuple[np.ndarray, np.ndarray]]]:
    """``{coefficient: {value: (t, y)}}`` from a sweep CSV."""
    data: dict[str, dict[float, list]] = defaultdict(lambda: defaultdict(list))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise SweepParseError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise SweepParseError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                val, t, y = float(row[0]), float(row[1]), float(row[3])
            except ValueError as exc:
                raise SweepParseError(f"{path}:{lineno}: {exc}") from None
            data[row[2]][val].append((t, y))
    out = {}
    for name, by_val in data.items():
        out[name] = {}
        for val, pts in by_val.items():
            arr = np.array(pts)
            out[name][val] = (arr[:, 0], arr[:, 1])
    return out


def emit_plots(csv_path: str | Path, out_dir: str | Path, parameter: str) -> list[Path]:
    """One SVG per coefficient in the CSV, curves keyed by parameter value."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = read_sweep_csv(csv_path)
    out_dir = Path(out_dir)
    written = []
    label = {"c0": "$C_0$", "delta": r"$\delta$"}.get(parameter, parameter)
    with matplotlib.rc_context({"svg.hashsalt": "mlsg", "svg.fonttype": "path"}):
        for name in sorted(data):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for val in sorted(data[name]):
                t, y = data[name][val]
                ax.plot(t, y, label=f"{label} = {val:g}")
            ax.set_xlabel("t")
            ax.set_ylabel(name)
            ax.set_xlim(float(min(t.min() for t, _ in data[name].values())),
                        float(max(t.max() for t, _ in data[name].values())))
            ax.legend()
            fig.tight_layout()
            path = out_dir / f"fig_{name}_{parameter}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written

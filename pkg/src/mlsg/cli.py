"""Command-line entry point: ``mlsg {solve,verify,simulate,sweep}``.

Exit status: 0 success, 1 verification failure, 2 Riccati blow-up before
t = 0, 64 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hamnash, riccati
from .model import ConfigError, DomainError, ModelParams, baseline, concavity_diagnostics
from .riccati import ArgumentError, RiccatiSolution, TimeMesh
from .sim import SimConfig, SimulationError, deviation_test, simulate
from .strategies import strategy_coefficients, value_functions
from .sweep import SweepParseError, SweepSpec, emit_plots, run_sweep

EXIT_OK, EXIT_VERIFY, EXIT_EXISTENCE, EXIT_CONFIG = 0, 1, 2, 64

DEFAULT_PROBES = [[0.0, 0.0], [0.0, 1.0], [0.0, 10.0], [0.5, 1.0], [1.0, 1.0]]
DEFAULT_VERIFY = {
    "riccati_tol": 1e-5,
    "hjb_tol": 1e-4,
    "hjb_coef_tol": 1e-12,
    "x_max": 10.0,
    "n_x": 11,
    "nash_points": 100,
    "nash_tol": 1e-8,
    "nash_seed": 0,
    "deviation_factors": [0.9, 0.95, 1.05, 1.1],
    "solution_csv": None,
}


@dataclass
class RunConfig:
    model: ModelParams
    n_steps: int
    output_dir: Path
    sim: SimConfig | None
    sweep: dict | None
    probes: list
    verify: dict


def _model_defaults() -> dict:
    d = baseline().to_dict()
    for name in ("beta_p", "beta_w", "delta"):
        d[name] = d[name][0][1]
    return d


def load_config(args) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(raw) - {"model", "mesh", "sim", "sweep", "output_dir", "probes", "verify"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    model = _model_defaults()
    model.update(raw.get("model", {}))
    params = ModelParams.from_dict(model)

    n_steps = raw.get("mesh", {}).get("n_steps", 10_000)
    if args.mesh_steps is not None:
        n_steps = args.mesh_steps
    if not isinstance(n_steps, int) or n_steps < 10:
        raise ConfigError(f"mesh n_steps must be an integer >= 10, got {n_steps!r}")

    out = args.out if args.out is not None else raw.get("output_dir")
    if not out:
        raise ConfigError("no output directory: pass --out or set output_dir")

    sim_block = raw.get("sim")
    if sim_block is not None or args.paths is not None or args.seed is not None:
        block = dict(sim_block or {})
        block.setdefault("n_paths", 10_000)
        if args.paths is not None:
            block["n_paths"] = args.paths
        if args.seed is not None:
            block["seed"] = args.seed
        sim = SimConfig.from_dict(block)
    else:
        sim = None

    verify = dict(DEFAULT_VERIFY)
    extra = set(raw.get("verify", {})) - set(DEFAULT_VERIFY)
    if extra:
        raise ConfigError(f"unknown verify fields: {sorted(extra)}")
    verify.update(raw.get("verify", {}))
    if getattr(args, "solution", None):
        verify["solution_csv"] = args.solution

    return RunConfig(params, n_steps, Path(out), sim, raw.get("sweep"), raw.get("probes", DEFAULT_PROBES), verify)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _existence(sol: RiccatiSolution) -> dict:
    return {"existence_ok": sol.existence_ok, "blow_up": not sol.existence_ok, "eta": sol.eta,
            "horizon": sol.mesh.horizon, "threshold": sol.threshold, "n_steps": sol.mesh.n_steps}


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: RunConfig, args) -> int:
    sol = riccati.solve(cfg.model, TimeMesh(cfg.model.horizon, cfg.n_steps))
    sol.to_csv(cfg.output_dir / "riccati.csv")
    _write_json(cfg.output_dir / "existence.json", _existence(sol))
    if not sol.existence_ok:
        _say(args, f"blow-up: solution exists only on reversed time [0, {sol.eta:g}] of {cfg.model.horizon:g}")
        return EXIT_EXISTENCE
    strategy_coefficients(cfg.model, sol).to_csv(cfg.output_dir / "strategies.csv")
    with open(cfg.output_dir / "values.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "V_s", "V_b"])
        for t, x in cfg.probes:
            v = value_functions(sol, float(t), float(x))
            w.writerow([f"{float(t):.17g}", f"{float(x):.17g}", f"{float(v.v_s):.17g}", f"{float(v.v_b):.17g}"])
    _say(args, f"solved on {cfg.n_steps} steps; V_s(0,1) = {float(value_functions(sol, 0.0, 1.0).v_s):.6g}")
    return EXIT_OK


def _check(name: str, passed: bool, **measured) -> dict:
    return {"name": name, "passed": bool(passed), **measured}


def run_checks(cfg: RunConfig, sol: RiccatiSolution) -> list[dict]:
    p, v = cfg.model, cfg.verify
    checks = []
    terminal = max(abs(float(y[-1])) for y in sol.trajectories())
    checks.append(_check("terminal_conditions", terminal == 0.0, max_abs=terminal))

    rr = riccati.riccati_residual(p, sol)
    sup = rr.sup()
    checks.append(_check("riccati_residual", max(sup.values()) < v["riccati_tol"], sup=sup, tol=v["riccati_tol"]))

    xs = np.linspace(0.0, v["x_max"], int(v["n_x"]))
    hj = riccati.hjb_residual(p, sol, x_grid=xs)
    hsup = hj.sup()
    checks.append(_check("hjb_residual", max(hsup.values()) < v["hjb_tol"], sup=hsup, tol=v["hjb_tol"]))

    coef_err = riccati.hjb_coefficient_mismatch(p, sol, rr)
    checks.append(_check("hjb_matches_riccati", coef_err < v["hjb_coef_tol"], max_abs=coef_err,
                         tol=v["hjb_coef_tol"]))

    rng = np.random.default_rng(v["nash_seed"])
    nash_err = 0.0
    try:
        for _ in range(int(v["nash_points"])):
            pt = hamnash.HamiltonianPoint(rng.uniform(0, p.horizon), rng.uniform(0, v["x_max"]),
                                          *rng.uniform(-0.05, 0.05, 4))
            res = hamnash.leader_nash_numeric(p, pt)
            nash_err = max(nash_err, hamnash.max_abs_diff(res.controls, hamnash.closed_form_responses(p, pt)))
        nash_ok = nash_err < v["nash_tol"]
        nash_msg = None
    except hamnash.NashError as exc:
        nash_ok, nash_msg = False, str(exc)
    checks.append(_check("hamiltonian_nash", nash_ok, max_abs=nash_err, tol=v["nash_tol"], error=nash_msg))

    conc = [concavity_diagnostics(p, float(t)) for t in np.linspace(0, p.horizon, 11)]
    checks.append(_check("concavity", all(c.all_negative for c in conc),
                         worst={k: max(getattr(c, k) for c in conc)
                                for k in ("seller_wholesale", "seller_innovation", "buyer_innovation", "buyer_retail")}))

    if cfg.sim is not None:
        sim = cfg.sim.with_(perturbation=None)
        res = simulate(p, sol, sim)
        val = value_functions(sol, 0.0, sim.x0)
        z_s = abs(res.j_s_mean - float(val.v_s)) / res.j_s_se if res.j_s_se > 0 else float("inf")
        z_b = abs(res.j_b_mean - float(val.v_b)) / res.j_b_se if res.j_b_se > 0 else float("inf")
        conclusive = res.clamp_fraction < 1e-3 and sim.sigma_scale == 1.0
        fk = _check("feynman_kac", (z_s <= 3 and z_b <= 3) or not conclusive, conclusive=conclusive,
                    v_s=float(val.v_s), v_b=float(val.v_b), z_s=z_s, z_b=z_b, result=res.summary())
        checks.append(fk)
        rep = deviation_test(p, sol, sim, factors=tuple(v["deviation_factors"]))
        checks.append(_check("deviation", rep.passed, report=rep.to_dict()))
    return checks


def cmd_verify(cfg: RunConfig, args) -> int:
    if cfg.verify["solution_csv"]:
        try:
            sol = RiccatiSolution.from_csv(cfg.verify["solution_csv"])
        except (OSError, ArgumentError) as exc:
            raise ConfigError(f"cannot load solution: {exc}") from None
        if not np.isclose(sol.mesh.horizon, cfg.model.horizon):
            raise ConfigError("solution horizon differs from model horizon")
    else:
        sol = riccati.solve(cfg.model, TimeMesh(cfg.model.horizon, cfg.n_steps))
    report = {"existence": _existence(sol), "checks": []}
    if not sol.existence_ok:
        report["passed"] = False
        _write_json(cfg.output_dir / "verify_report.json", report)
        _say(args, f"blow-up at reversed time {sol.eta:g}; nothing to verify")
        return EXIT_EXISTENCE
    report["checks"] = run_checks(cfg, sol)
    report["passed"] = all(c["passed"] for c in report["checks"])
    _write_json(cfg.output_dir / "verify_report.json", report)
    for c in report["checks"]:
        _say(args, f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_simulate(cfg: RunConfig, args) -> int:
    if cfg.sim is None:
        raise ConfigError("simulate needs a sim block in the config or --paths")
    sol = riccati.solve(cfg.model, TimeMesh(cfg.model.horizon, cfg.n_steps))
    if not sol.existence_ok:
        _write_json(cfg.output_dir / "existence.json", _existence(sol))
        _say(args, f"blow-up at reversed time {sol.eta:g}; cannot simulate")
        return EXIT_EXISTENCE
    res = simulate(cfg.model, sol, cfg.sim, record=True)
    res.to_json(cfg.output_dir / "sim_result.json")
    res.paths_to_csv(cfg.output_dir / "paths.csv")
    _say(args, f"J_s = {res.j_s_mean:.6g} +- {res.j_s_se:.2g}, J_b = {res.j_b_mean:.6g} +- {res.j_b_se:.2g}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a sweep block in the config")
    spec = SweepSpec.from_dict(cfg.model, cfg.sweep)
    if not spec.outputs:
        _say(args, "no coefficients selected; nothing written")
        return EXIT_OK
    result = run_sweep(spec, TimeMesh(cfg.model.horizon, cfg.n_steps))
    csv_path = cfg.output_dir / f"sweep_{spec.parameter}.csv"
    result.to_csv(csv_path)
    emit_plots(csv_path, cfg.output_dir, spec.parameter)
    _write_json(cfg.output_dir / f"sweep_{spec.parameter}_groups.json",
                [{"value": g.value, "complete": g.complete, "eta": g.eta} for g in result.groups])
    for g in result.groups:
        if not g.complete:
            _say(args, f"{spec.parameter} = {g.value:g}: blow-up at reversed time {g.eta:g}, group incomplete")
    _say(args, f"wrote {csv_path}")
    return EXIT_OK if result.complete else EXIT_EXISTENCE


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "simulate": cmd_simulate, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlsg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (created if absent)")
        sp.add_argument("--mesh-steps", type=int, help="Riccati mesh steps (default 10000)")
        sp.add_argument("--seed", type=int, help="Monte Carlo seed")
        sp.add_argument("--paths", type=int, help="Monte Carlo path count")
        sp.add_argument("--quiet", action="store_true")
        if name == "verify":
            sp.add_argument("--solution", help="verify this Riccati CSV instead of solving")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError, SweepParseError, OSError) as exc:
        print(f"mlsg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"mlsg: simulation failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())

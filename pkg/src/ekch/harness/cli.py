"""Command-line entry point: ``ekch <subcommand> --config exp.toml``."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from ..ch import l1_contraction_test
from ..grid import write_snapshot
from ..mollifier import PROFILES, ResolutionError, SupportError
from ..potential import PressureParams, check_pressure_bounds, validate_assumption
from . import reports, sweeps
from .config import ConfigError, ExperimentConfig, load_config, parse_config

SUBCOMMANDS = ("run-ek", "run-nlch", "run-lch", "sweep-eps", "sweep-joint", "verify-kernel",
               "verify-potential", "poincare", "consistency")


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _timings(out: Path, entries: dict):
    # wall-clock numbers are kept apart so the result files stay byte-stable
    reports.write_json(out / "timings.json", entries)


def cmd_run(cfg: ExperimentConfig, system: str, jobs: int) -> bool:
    out = _out(cfg)
    t0 = time.perf_counter()
    traj = sweeps.run_system(cfg, system)
    elapsed = time.perf_counter() - t0
    (out / "diagnostics.csv").write_text(traj.series.to_csv())
    for i in range(0, len(traj.times), cfg.stride):
        write_snapshot(out / f"rho_{i:04d}.txt", traj.grid, traj.rho[i], traj.times[i])
    summary = sweeps.summarize(cfg, traj)
    if system == "nlch" and "perturbation" in cfg.audit:
        a, b = sweeps.contraction_pair(cfg, cfg.audit["perturbation"])
        params = sweeps.nlch_params(cfg, sweeps.make_kernel(cfg))
        rep = l1_contraction_test(a, b, params, cfg.T, cfg.samples)
        same = l1_contraction_test(a, a, params, cfg.T, cfg.samples)
        summary.audits["contraction"] = {"value": rep.fitted_rate, "tol": rep.theory_rate, "pass": rep.ok}
        summary.audits["contraction_identical"] = {"value": max(same.l1_distance), "tol": 1e-10, "pass": same.ok}
    reports.write_json(out / "summary.json", summary.as_dict(), cfg.source)
    _timings(out, {"run": elapsed})
    for name, a in summary.audits.items():
        print(f"{name}: value={a['value']} tol={a['tol']} {'PASS' if a['pass'] else 'FAIL'}")
    return summary.passed


def cmd_sweep_eps(cfg: ExperimentConfig, jobs: int) -> bool:
    out = _out(cfg)
    res, ref, trajs = sweeps.sweep_eps(cfg, jobs)
    reports.write_csv(out / "sweep.csv", sweeps.SWEEP_COLUMNS, res.rows)
    (out / "reference.csv").write_text(ref.series.to_csv())
    for eps, tr in zip(cfg.epsilons, trajs):
        (out / f"ek_eps_{eps:g}.csv").write_text(tr.series.to_csv())
    reports.write_json(out / "summary.json", res.as_dict(), cfg.source)
    eps = res.column("epsilon")
    reports.write_svg(out / "error.svg", eps, res.column("sup_l2_error"), "sup_t L2 error", "epsilon", "error",
                      res.slopes["sup_l2_error"])
    if trajs:
        reports.write_svg(out / "theta.svg", trajs[-1].times, trajs[-1].series.theta, "relative entropy", "t", "theta")
    _timings(out, {"reference": res.runtimes[0], "members": dict(zip(map(str, eps), res.runtimes[1:]))})
    for r in res.rows:
        print(f"eps={r['epsilon']:g} err={r['sup_l2_error']:.4e} theta0={r['theta0']:.4e} w2={r['w2_spacetime']:.4e}")
    for flag in res.flags:
        print("flag:", flag)
    print("slopes:", res.slopes)
    c = res.checks
    return bool(c["error_decreasing"] and c["theta_nonnegative"] and c["poincare_control"])


def cmd_sweep_joint(cfg: ExperimentConfig, jobs: int) -> bool:
    out = _out(cfg)
    res = sweeps.sweep_joint(cfg, jobs)
    reports.write_csv(out / "joint.csv", sweeps.JOINT_COLUMNS, res.rows)
    reports.write_json(out / "summary.json", res.as_dict(), cfg.source)
    _timings(out, {"local_reference": res.runtimes[0], "rows": res.runtimes[1:]})
    for r in res.rows:
        print(r)
    for flag in res.flags:
        print("flag:", flag)
    ek_ok = res.checks["ek_vs_local_decreasing"]
    return bool(res.checks["nonlocal_vs_local_decreasing"] and ek_ok is not False)


def cmd_verify_kernel(cfg: ExperimentConfig, jobs: int) -> bool:
    out = _out(cfg)
    grid = cfg.grid.build()
    rows = sweeps.kernel_audit(sorted(PROFILES), cfg.etas, grid)
    reports.write_csv(out / "kernels.csv", sweeps.KERNEL_COLUMNS, rows)
    for r in rows:
        print(r)
    ok = all(r["pass"] for r in rows)
    count = int(cfg.audit.get("convolution_fields", 0))
    if count:
        conv = [sweeps.convolution_audit(sweeps.make_kernel(cfg, eta, grid), count, cfg.seed) for eta in cfg.etas]
        reports.write_json(out / "convolution.json", conv, cfg.source)
        print("convolution oracle:", conv)
        ok &= all(c["max_relative_error"] <= cfg.audit.get("convolution_tol", 1e-12) for c in conv)
    return ok


def cmd_verify_potential(cfg: ExperimentConfig, jobs: int) -> bool:
    out = _out(cfg)
    pot = sweeps.make_potential_from(cfg)
    n = int(cfg.audit.get("samples", 100000))
    rep = check_pressure_bounds(pot, PressureParams(cfg.eta), cfg.audit.get("range_R", 2.0), n, cfg.seed)
    doc = rep.as_dict()
    try:
        cp = sweeps.estimate_poincare_constant(sweeps.make_kernel(cfg)).c_p
        doc["assumption"] = validate_assumption(pot, cp).as_dict()
    except (ResolutionError, SupportError) as exc:
        doc["assumption"] = {"error": str(exc)}
    reports.write_json(out / "summary.json", doc, cfg.source)
    print(f"{pot.name}: bounded={rep.bounded} c_relative_pressure={rep.c_relative_pressure} "
          f"c_growth={rep.c_growth} {rep.reason}")
    return bool(rep.bounded)


def cmd_poincare(cfg: ExperimentConfig, jobs: int) -> bool:
    out = _out(cfg)
    res = sweeps.poincare_audit(sweeps.make_kernel(cfg), int(cfg.audit.get("fields", 100)), cfg.seed)
    reports.write_json(out / "summary.json", res, cfg.source)
    print(res)
    return res["violations"] == 0


def cmd_consistency(cfg: ExperimentConfig, jobs: int) -> bool:
    out = _out(cfg)
    res = sweeps.consistency_study(cfg.profile, cfg.etas, cfg.grid.build())
    reports.write_csv(out / "consistency.csv", sweeps.CONSISTENCY_COLUMNS, res.rows)
    slope = res.slopes["relative_error"]
    reports.write_svg(out / "consistency.svg", res.column("eta"), res.column("relative_error"),
                      "operator consistency", "eta", "relative error", slope)
    reports.write_json(out / "summary.json", res.as_dict(), cfg.source)
    print("rows:", res.rows)
    print("slope:", slope)
    lo, hi = cfg.audit.get("slope_min"), cfg.audit.get("slope_max")
    if slope is None:
        return False
    return (lo is None or slope >= lo) and (hi is None or slope <= hi)


HANDLERS = {
    "run-ek": lambda c, j: cmd_run(c, "ek", j),
    "run-nlch": lambda c, j: cmd_run(c, "nlch", j),
    "run-lch": lambda c, j: cmd_run(c, "lch", j),
    "sweep-eps": cmd_sweep_eps,
    "sweep-joint": cmd_sweep_joint,
    "verify-kernel": cmd_verify_kernel,
    "verify-potential": cmd_verify_potential,
    "poincare": cmd_poincare,
    "consistency": cmd_consistency,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ekch", description="Nonlocal Euler-Korteweg / Cahn-Hilliard experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML experiment file (defaults apply when omitted)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--jobs", type=int, default=1, help="sweep members run concurrently")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config({})
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        ok = HANDLERS[args.command](cfg, args.jobs)
    except (ConfigError, ResolutionError, SupportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

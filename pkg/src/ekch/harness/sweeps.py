"""Single runs, epsilon sweeps, joint (eps, eta) sweeps and operator consistency tables."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..ch import CHState, LCHParams, NLCHParams, max_principle_envelope, run_lch, run_nlch
from ..diagnostics import compare_to_reference, concentration_tv_report, dissipation_budget
from ..ek import EKParams, EKState, run_ek
from ..grid import TorusGrid, gradient, laplacian, norm_l2
from ..mollifier import apply_B_eta, build_kernel, estimate_poincare_constant
from ..potential import make_potential, validate_assumption
from ..trajectory import Trajectory
from .config import ExperimentConfig, initial_density, initial_momentum


def fit_slope(xs, ys) -> float | None:
    """Least-squares log-log slope; ``None`` below three usable points."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y)]
    if len(pts) < 3:
        return None
    lx, ly = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


# -- building blocks -------------------------------------------------------
def make_kernel(cfg: ExperimentConfig, eta: float | None = None, grid: TorusGrid | None = None):
    return build_kernel(cfg.profile, cfg.eta if eta is None else eta, grid or cfg.grid.build())


def make_potential_from(cfg: ExperimentConfig):
    return make_potential(cfg.potential, **cfg.potential_params)


def ek_params(cfg: ExperimentConfig, kernel, epsilon: float) -> EKParams:
    s = cfg.solver
    return EKParams(epsilon, kernel, make_potential_from(cfg), s.delta_reg, s.cfl, s.density_floor, s.fluxes)


def nlch_params(cfg: ExperimentConfig, kernel) -> NLCHParams:
    s = cfg.solver
    return NLCHParams(kernel, make_potential_from(cfg), s.mobility_delta, s.cfl_parabolic, s.cfl)


def lch_params(cfg: ExperimentConfig, grid: TorusGrid, D: float) -> LCHParams:
    return LCHParams(D, make_potential_from(cfg), grid, cfg.solver.dt_factor)


def run_system(
    cfg: ExperimentConfig, system: str, epsilon: float | None = None, eta: float | None = None, track_drift: bool = True
) -> Trajectory:
    g = cfg.grid.build()
    rho0 = initial_density(cfg, g)
    if system == "ek":
        kern = make_kernel(cfg, eta, g)
        eps = cfg.epsilon if epsilon is None else epsilon
        return run_ek(EKState(rho0, initial_momentum(cfg, rho0, g)), ek_params(cfg, kern, eps), cfg.T,
                      samples=cfg.samples, dt=cfg.solver.dt)
    if system == "nlch":
        kern = make_kernel(cfg, eta, g)
        return run_nlch(CHState(rho0), nlch_params(cfg, kern), cfg.T, samples=cfg.samples, track_drift=track_drift)
    if system == "lch":
        D = cfg.diffusivity if cfg.diffusivity is not None else make_kernel(cfg, eta, g).limit_diffusivity
        return run_lch(CHState(rho0), lch_params(cfg, g, D), cfg.T, samples=cfg.samples)
    raise ValueError(f"unknown system {system!r}")


@dataclass
class RunSummary:
    system: str
    final_mass: float
    mass_drift: float
    energy_change: float
    audits: dict
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a["pass"] for a in self.audits.values())

    def as_dict(self) -> dict:
        return {
            "system": self.system,
            "final_mass": self.final_mass,
            "mass_drift": self.mass_drift,
            "energy_change": self.energy_change,
            "audits": self.audits,
            "extra": self.extra,
            "passed": self.passed,
        }


def summarize(cfg: ExperimentConfig, traj: Trajectory) -> RunSummary:
    ser = traj.series
    m0 = ser.mass[0]
    drift = max(abs(m - m0) for m in ser.mass) / max(abs(m0), 1e-300)
    mass_tol = cfg.audit.get("mass_tol", 1e-10)
    audits = {"mass": {"value": drift, "tol": mass_tol, "pass": drift <= mass_tol}}
    extra: dict = {}
    if traj.system == "ek":
        bud = dissipation_budget(traj)
        tol = cfg.audit.get("budget_tol")
        audits["budget"] = {"value": bud.max_residual, "tol": tol, "pass": tol is None or bud.max_residual <= tol}
        extra["concentration"] = concentration_tv_report(traj).as_dict()
        neg = min(float(np.min(r)) for r in traj.rho)
        audits["positivity"] = {"value": neg, "tol": 0.0, "pass": neg >= -1e-12}
    elif traj.system == "nlch":
        env = max_principle_envelope(traj, cfg.initial.sigma)
        audits["envelope"] = {"value": env.violations, "tol": 0, "pass": env.violations == 0}
    extra["steps"] = traj.meta.get("steps")
    return RunSummary(traj.system, ser.mass[-1], drift, ser.energy[-1] - ser.energy[0], audits, extra)


# -- epsilon sweep ---------------------------------------------------------
SWEEP_COLUMNS = ("eta", "epsilon", "sup_l2_error", "theta0", "sup_theta", "min_theta", "w2_spacetime",
                 "sup_kinetic_l2", "min_poincare_margin", "feasible")


@dataclass
class SweepResult:
    rows: list[dict]
    slopes: dict
    checks: dict = field(default_factory=dict)
    runtimes: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def as_dict(self) -> dict:
        return {"rows": self.rows, "slopes": self.slopes, "checks": self.checks, "flags": self.flags}


def _ek_member(args):
    cfg, eps, eta = args
    t0 = time.perf_counter()
    traj = run_system(cfg, "ek", epsilon=eps, eta=eta)
    return traj, time.perf_counter() - t0


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def sweep_eps(cfg: ExperimentConfig, jobs: int = 1) -> tuple[SweepResult, Trajectory, list[Trajectory]]:
    """Nonlocal CH reference once, then EK per epsilon from the same density."""
    g = cfg.grid.build()
    kern = make_kernel(cfg, grid=g)
    pot = make_potential_from(cfg)
    cp = estimate_poincare_constant(kern).c_p
    kappa = validate_assumption(pot, cp).margin_kappa
    t0 = time.perf_counter()
    ref = run_system(cfg, "nlch", track_drift=False)
    runtimes = [time.perf_counter() - t0]
    members = _map(_ek_member, [(cfg, e, None) for e in cfg.epsilons], jobs)
    rows, trajs = [], []
    theta_ok, poincare_ok = True, True
    for eps, (traj, rt) in zip(cfg.epsilons, members):
        c = compare_to_reference(traj, ref, kern, pot, eps, c_p=cp, floor=cfg.solver.density_floor)
        margin = min(cp / kappa * th.nonlocal_ - e * e for th, e in zip(c.theta, c.l2_error)) if kappa > 0 else -math.inf
        min_theta = min(th.total for th in c.theta)
        theta_ok &= min_theta >= -1e-10
        poincare_ok &= margin >= -1e-12
        rows.append({
            "eta": cfg.eta, "epsilon": eps, "sup_l2_error": c.sup_l2_error, "theta0": c.theta[0].total,
            "sup_theta": c.sup_theta, "min_theta": min_theta, "w2_spacetime": c.w2_spacetime,
            "sup_kinetic_l2": max(c.kinetic_l2), "min_poincare_margin": margin, "feasible": True,
        })
        traj.series.theta = [th.total for th in c.theta]
        traj.series.w2_sq = c.w2_integral
        trajs.append(traj)
        runtimes.append(rt)
    eps = [r["epsilon"] for r in rows]
    slopes = {
        "sup_l2_error": fit_slope(eps, [r["sup_l2_error"] for r in rows]),
        "theta0": fit_slope(eps, [r["theta0"] for r in rows]),
        "w2_spacetime": fit_slope(eps, [r["w2_spacetime"] for r in rows]),
    }
    flags = [] if len(rows) >= 3 else ["fewer than three epsilon values: no slope fitted"]
    checks = {
        "error_decreasing": strictly_decreasing([r["sup_l2_error"] for r in rows]),
        "w2_decreasing": strictly_decreasing([r["w2_spacetime"] for r in rows]),
        "kinetic_decreasing": strictly_decreasing([r["sup_kinetic_l2"] for r in rows]),
        "theta_nonnegative": theta_ok,
        "poincare_control": poincare_ok,
        "concentration_zero": all(concentration_tv_report(t).value == 0.0 for t in trajs),
        "c_p": cp,
        "kappa": kappa,
    }
    return SweepResult(rows, slopes, checks, runtimes, flags), ref, trajs


# -- joint sweep -----------------------------------------------------------
def regularity_surrogate(traj: Trajectory) -> float:
    """Max over samples of ``|rho|, |grad rho|, |D^2 rho|, |d_t rho|`` on the grid."""
    g = traj.grid
    best = 0.0
    for i, rho in enumerate(traj.rho):
        gr = gradient(g, rho)
        hess = [gradient(g, gr[a]) for a in range(g.dim)]
        vals = [np.max(np.abs(rho)), np.max(np.abs(gr))] + [np.max(np.abs(h)) for h in hess]
        if i > 0:
            vals.append(np.max(np.abs(rho - traj.rho[i - 1])) / (traj.times[i] - traj.times[i - 1]))
        best = max(best, *map(float, vals))
    return best


def scaled_epsilon(c_hat: float, T: float, eta: float, dim: int, eps_max: float, c0: float = 1.0) -> float:
    return min(eps_max, math.exp(-c0 * c_hat * T / (4.0 * eta ** (dim + 3))))


def _spacetime_l2(a: Trajectory, b: Trajectory) -> float:
    from scipy.integrate import trapezoid

    g = a.grid
    vals = [norm_l2(g, x - b.interpolate_rho(t)) ** 2 for t, x in zip(a.times, a.rho)]
    return math.sqrt(float(trapezoid(vals, a.times)))


JOINT_COLUMNS = ("eta", "c_hat", "epsilon", "feasible", "ek_vs_local", "nonlocal_vs_local")


def sweep_joint(cfg: ExperimentConfig, jobs: int = 1) -> SweepResult:
    g = cfg.grid.build()
    D = cfg.diffusivity if cfg.diffusivity is not None else make_kernel(cfg, cfg.etas[-1], g).limit_diffusivity
    t0 = time.perf_counter()
    loc = run_lch(CHState(initial_density(cfg, g)), lch_params(cfg, g, D), cfg.T, samples=cfg.samples)
    runtimes = [time.perf_counter() - t0]
    rows = []
    for eta in cfg.etas:
        t0 = time.perf_counter()
        ref = run_system(cfg, "nlch", eta=eta, track_drift=False)
        c_hat = regularity_surrogate(ref)
        eps = scaled_epsilon(c_hat, cfg.T, eta, g.dim, cfg.sweep.eps_max, cfg.sweep.c0)
        row = {"eta": eta, "c_hat": c_hat, "epsilon": eps, "feasible": eps >= cfg.sweep.eps_floor,
               "ek_vs_local": math.nan, "nonlocal_vs_local": _spacetime_l2(ref, loc)}
        if row["feasible"]:
            ek = run_system(cfg, "ek", epsilon=eps, eta=eta)
            row["ek_vs_local"] = _spacetime_l2(ek, loc)
        rows.append(row)
        runtimes.append(time.perf_counter() - t0)
    flags = [f"eta={r['eta']}: scaled epsilon {r['epsilon']:.3e} below floor {cfg.sweep.eps_floor}, infeasible"
             for r in rows if not r["feasible"]]
    feas = [r for r in rows if r["feasible"]]
    checks = {
        "nonlocal_vs_local_decreasing": strictly_decreasing([r["nonlocal_vs_local"] for r in rows]),
        "ek_vs_local_decreasing": strictly_decreasing([r["ek_vs_local"] for r in feas]) if len(feas) > 1 else None,
        "diffusivity": D,
    }
    etas = [r["eta"] for r in rows]
    slopes = {"nonlocal_vs_local": fit_slope(etas, [r["nonlocal_vs_local"] for r in rows])}
    return SweepResult(rows, slopes, checks, runtimes, flags)


# -- operator consistency --------------------------------------------------
CONSISTENCY_COLUMNS = ("profile", "eta", "diffusivity", "relative_error")


def consistency_study(profile: str, etas, grid: TorusGrid, f=None) -> SweepResult:
    """``||B_eta f - D(-lap f)||_2 / ||D lap f||_2`` per eta (absolute error if ``lap f = 0``)."""
    if f is None:
        f = np.cos(2 * math.pi * grid.coords[0] / grid.L)
    rows = []
    for eta in etas:
        kern = build_kernel(profile, eta, grid)
        D = kern.diffusivity
        target = -D * laplacian(grid, f)
        den = norm_l2(grid, target)
        num = norm_l2(grid, apply_B_eta(kern, f) - target)
        rows.append({"profile": profile, "eta": eta, "diffusivity": D, "relative_error": num / den if den > 0 else num})
    slope = fit_slope([r["eta"] for r in rows], [r["relative_error"] for r in rows])
    return SweepResult(rows, {"relative_error": slope}, {})


def override_epsilons(cfg: ExperimentConfig, eps) -> ExperimentConfig:
    return replace(cfg, epsilons=tuple(eps))


# -- certification audits ----------------------------------------------------
KERNEL_COLUMNS = ("profile", "eta", "m0_err", "m1", "m2_offdiag", "diffusivity", "pass")


def kernel_audit(profiles, etas, grid: TorusGrid, m0_tol=1e-14, m1_tol=1e-14, off_tol=1e-12) -> list[dict]:
    rows = []
    for prof in profiles:
        for eta in etas:
            mo = build_kernel(prof, eta, grid).moments
            m0_err = abs(mo.m0 - 1.0)
            m1 = float(np.max(np.abs(mo.m1)))
            off = float(np.max(np.abs(mo.m2_offdiag))) if np.size(mo.m2_offdiag) else 0.0
            rows.append({
                "profile": prof, "eta": eta, "m0_err": m0_err, "m1": m1, "m2_offdiag": off,
                "diffusivity": build_kernel(prof, eta, grid).diffusivity,
                "pass": m0_err <= m0_tol and m1 <= m1_tol and off <= off_tol,
            })
    return rows


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, kmax: int = 8) -> np.ndarray:
    """Mean-zero real field with random coefficients on modes ``0 < |j|_inf <= kmax``."""
    idx = grid.mode_indices
    mask = np.ones(grid.spectral_shape, dtype=bool)
    for m in idx:
        mask &= np.abs(m) <= kmax
    mask &= sum(np.abs(m) for m in idx) > 0
    fh = np.zeros(grid.spectral_shape, dtype=complex)
    k = int(mask.sum())
    fh[mask] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    # keep the self-conjugate planes real so the inverse transform is exact
    fh[..., 0] = fh[..., 0].real if grid.dim == 1 else fh[..., 0]
    if grid.dim == 2:
        col = fh[:, 0]
        n = grid.n
        sym = np.conj(col[(-np.arange(n)) % n])
        fh[:, 0] = 0.5 * (col + sym)
    return grid.ifft(fh)


def poincare_audit(kernel, count: int = 100, seed: int = 0) -> dict:
    from ..mollifier import nonlocal_dirichlet_form

    g = kernel.grid
    est = estimate_poincare_constant(kernel)
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    for _ in range(count):
        f = random_band_limited(g, rng)
        f = f - np.mean(f)
        lhs = norm_l2(g, f) ** 2
        rhs = est.c_p * nonlocal_dirichlet_form(kernel, f)
        worst = max(worst, lhs / rhs)
        violations += lhs > rhs * (1 + 1e-12)
    return {"c_p": est.c_p, "extremal_mode": list(est.extremal_mode), "fields": count,
            "violations": int(violations), "max_ratio": worst}


def direct_convolution(kernel, f) -> np.ndarray:
    """``sum_j w(x_i - x_j) f(x_j)`` by explicit periodic index arithmetic."""
    g = kernel.grid
    f = g.check_scalar(f)
    w = kernel.weights
    n = g.n
    idx = np.arange(n)
    diff = (idx[:, None] - idx[None, :]) % n
    if g.dim == 1:
        return w[diff] @ f
    # the 2D kernel matrix factors as W[(i-k), (j-l)] over index pairs
    big = w[diff[:, None, :, None], diff[None, :, None, :]]
    return np.einsum("ijkl,kl->ij", big, f)


def convolution_audit(kernel, count: int = 50, seed: int = 0) -> dict:
    from ..grid import circular_convolve

    g = kernel.grid
    if g.n > 32:
        raise ValueError("the direct-sum oracle is limited to n <= 32")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        f = rng.standard_normal(g.shape)
        ref = direct_convolution(kernel, f)
        got = circular_convolve(g, f, kernel)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    return {"fields": count, "max_relative_error": worst}


def contraction_pair(cfg: ExperimentConfig, perturbation: float):
    """Two data with equal mass differing by ``perturbation * cos(4 pi x / L)``."""
    g = cfg.grid.build()
    rho1 = initial_density(cfg, g)
    rho2 = rho1 + perturbation * np.cos(4 * math.pi * g.coords[0] / g.L)
    return CHState(rho1), CHState(rho2)

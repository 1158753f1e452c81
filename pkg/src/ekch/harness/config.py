"""Experiment configuration: one TOML file per experiment.

Schema (all tables optional except where noted)::

    name = "criterion-7"            # label echoed in reports
    seed = 0                        # for randomized checks and noisy presets

    [grid]      dim = 1, n = 256, L = 1.0
    [kernel]    profile = "quartic", eta = 0.1        # eta may be a list
    [potential] name = "double_well", params = {}
    [model]     epsilon = 0.01 (or a list), T = 0.5, samples = 50, diffusivity = <float>
    [initial]   preset = "two-mode", mean = 0.5, amplitude = 0.1, mode = 1,
                sigma = 0.2, velocity = 0.0, path = "snap.txt"
    [solver]    cfl = 0.5, cfl_parabolic = 0.8, delta_reg = 0.0, mobility_delta = 0.0,
                density_floor = 1e-10, dt_factor = 0.1, dt = <float>, fluxes = true
    [sweep]     c0 = 1.0, eps_max = 0.04, eps_floor = 1e-3
    [output]    dir = "out", stride = 1
    [audit]     mass_tol = 1e-10, budget_tol = <float>
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..grid import TorusGrid, read_snapshot
from ..mollifier import PROFILES
from ..potential import BUILTINS

PRESETS = ("constant", "single-mode", "two-mode", "double-well-spinodal", "snapshot")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    n: int = 256
    L: float = 1.0

    def build(self) -> TorusGrid:
        return TorusGrid(self.dim, self.n, self.L)


@dataclass(frozen=True)
class InitialSpec:
    preset: str = "two-mode"
    mean: float = 0.5
    amplitude: float = 0.1
    mode: int = 1
    sigma: float | None = None
    velocity: float = 0.0
    path: str | None = None


@dataclass(frozen=True)
class SolverSpec:
    cfl: float = 0.5
    cfl_parabolic: float = 0.8
    delta_reg: float = 0.0
    mobility_delta: float = 0.0
    density_floor: float = 1e-10
    dt_factor: float = 0.1
    dt: float | None = None
    fluxes: bool = True


@dataclass(frozen=True)
class SweepSpec:
    c0: float = 1.0
    eps_max: float = 0.04
    eps_floor: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    profile: str = "quartic"
    etas: tuple[float, ...] = (0.1,)
    potential: str = "double_well"
    potential_params: dict = field(default_factory=dict)
    epsilons: tuple[float, ...] = (0.01,)
    T: float = 0.5
    samples: int = 50
    diffusivity: float | None = None
    initial: InitialSpec = field(default_factory=InitialSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    out_dir: str = "out"
    stride: int = 1
    audit: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, compare=False)

    @property
    def eta(self) -> float:
        return self.etas[0]

    @property
    def epsilon(self) -> float:
        return self.epsilons[0]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **kw)


def _table(raw: dict, key: str) -> dict:
    t = raw.get(key, {})
    if not isinstance(t, dict):
        raise ConfigError(key, "must be a table")
    return t


def _num(t: dict, prefix: str, key: str, default, kind=float, positive=False, nonneg=False):
    name = f"{prefix}.{key}" if prefix else key
    if key not in t:
        return default
    v = t[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {v!r}")
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(name, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(name, "must be finite")
    if positive and not v > 0:
        raise ConfigError(name, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be >= 0, got {v!r}")
    return v


def _decreasing_list(t: dict, prefix: str, key: str, default) -> tuple[float, ...]:
    name = f"{prefix}.{key}"
    if key not in t:
        return default
    v = t[key]
    vals = v if isinstance(v, list) else [v]
    if not vals:
        raise ConfigError(name, "must not be empty")
    out = []
    for x in vals:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0:
            raise ConfigError(name, f"entries must be positive numbers, got {x!r}")
        out.append(float(x))
    if any(b >= a for a, b in zip(out, out[1:])):
        raise ConfigError(name, f"list must be strictly decreasing, got {out}")
    return tuple(out)


def _known(t: dict, prefix: str, allowed: set[str]):
    for k in t:
        if k not in allowed:
            raise ConfigError(f"{prefix}.{k}" if prefix else k, "unknown key")


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    _known(raw, "", {"name", "seed", "grid", "kernel", "potential", "model", "initial", "solver", "sweep", "output", "audit"})
    name = raw.get("name", "experiment")
    if not isinstance(name, str):
        raise ConfigError("name", "must be a string")
    seed = _num(raw, "", "seed", 0, int, nonneg=True)

    g = _table(raw, "grid")
    _known(g, "grid", {"dim", "n", "L"})
    dim = _num(g, "grid", "dim", 1, int)
    if dim not in (1, 2):
        raise ConfigError("grid.dim", f"must be 1 or 2, got {dim}")
    n = _num(g, "grid", "n", 256, int, positive=True)
    if n % 2:
        raise ConfigError("grid.n", f"must be even, got {n}")
    grid = GridSpec(dim, n, _num(g, "grid", "L", 1.0, positive=True))

    k = _table(raw, "kernel")
    _known(k, "kernel", {"profile", "eta"})
    profile = k.get("profile", "quartic")
    if profile not in PROFILES:
        raise ConfigError("kernel.profile", f"unknown profile {profile!r} (expected one of {sorted(PROFILES)})")
    etas = _decreasing_list(k, "kernel", "eta", (0.1,))

    p = _table(raw, "potential")
    _known(p, "potential", {"name", "params"})
    pname = p.get("name", "double_well")
    if pname not in BUILTINS:
        raise ConfigError("potential.name", f"unknown potential {pname!r} (expected one of {sorted(BUILTINS)})")
    pparams = p.get("params", {})
    if not isinstance(pparams, dict):
        raise ConfigError("potential.params", "must be a table")

    m = _table(raw, "model")
    _known(m, "model", {"epsilon", "T", "samples", "diffusivity"})
    eps = _decreasing_list(m, "model", "epsilon", (0.01,))
    T = _num(m, "model", "T", 0.5, positive=True)
    samples = _num(m, "model", "samples", 50, int, positive=True)
    diff = _num(m, "model", "diffusivity", None, positive=True)

    i = _table(raw, "initial")
    _known(i, "initial", {"preset", "mean", "amplitude", "mode", "sigma", "velocity", "path"})
    preset = i.get("preset", "two-mode")
    if preset not in PRESETS:
        raise ConfigError("initial.preset", f"unknown preset {preset!r} (expected one of {list(PRESETS)})")
    path = i.get("path")
    if preset == "snapshot":
        if not isinstance(path, str):
            raise ConfigError("initial.path", "the snapshot preset needs a path")
        if base_dir is not None and not Path(path).is_absolute():
            path = str(base_dir / path)
    init = InitialSpec(
        preset,
        _num(i, "initial", "mean", 0.5, nonneg=True),
        _num(i, "initial", "amplitude", 0.1, nonneg=True),
        _num(i, "initial", "mode", 1, int, positive=True),
        _num(i, "initial", "sigma", None, nonneg=True),
        _num(i, "initial", "velocity", 0.0),
        path,
    )

    s = _table(raw, "solver")
    _known(s, "solver", set(SolverSpec.__dataclass_fields__))
    fluxes = s.get("fluxes", True)
    if not isinstance(fluxes, bool):
        raise ConfigError("solver.fluxes", "must be a boolean")
    solver = SolverSpec(
        _num(s, "solver", "cfl", 0.5, positive=True),
        _num(s, "solver", "cfl_parabolic", 0.8, positive=True),
        _num(s, "solver", "delta_reg", 0.0, nonneg=True),
        _num(s, "solver", "mobility_delta", 0.0, nonneg=True),
        _num(s, "solver", "density_floor", 1e-10, nonneg=True),
        _num(s, "solver", "dt_factor", 0.1, positive=True),
        _num(s, "solver", "dt", None, positive=True),
        fluxes,
    )
    if not solver.cfl < 1:
        raise ConfigError("solver.cfl", f"must be < 1, got {solver.cfl}")

    w = _table(raw, "sweep")
    _known(w, "sweep", {"c0", "eps_max", "eps_floor"})
    sweep = SweepSpec(
        _num(w, "sweep", "c0", 1.0, positive=True),
        _num(w, "sweep", "eps_max", 0.04, positive=True),
        _num(w, "sweep", "eps_floor", 1e-3, positive=True),
    )

    o = _table(raw, "output")
    _known(o, "output", {"dir", "stride"})
    out_dir = o.get("dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("output.dir", "must be a string")
    stride = _num(o, "output", "stride", 1, int, positive=True)

    audit = _table(raw, "audit")
    for key in audit:
        _num(audit, "audit", key, None, nonneg=True)

    return ExperimentConfig(
        name, seed, grid, profile, etas, pname, dict(pparams), eps, T, samples, diff,
        init, solver, sweep, out_dir, stride, dict(audit), raw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not valid TOML ({exc})") from exc
    return parse_config(raw, path.parent)


def initial_density(cfg: ExperimentConfig, grid: TorusGrid | None = None) -> np.ndarray:
    g = grid or cfg.grid.build()
    spec = cfg.initial
    x = g.coords[0]
    w = 2 * math.pi * spec.mode / g.L
    if spec.preset == "constant":
        rho = np.full(g.shape, spec.mean)
    elif spec.preset == "single-mode":
        rho = spec.mean + spec.amplitude * np.cos(w * x)
    elif spec.preset == "two-mode":
        rho = spec.mean + spec.amplitude * np.cos(w * x) + 0.5 * spec.amplitude * np.sin(2 * w * x)
    elif spec.preset == "double-well-spinodal":
        # band-limited noise around the spinodal mean, normalised to the amplitude
        rng = np.random.default_rng(cfg.seed)
        fh = np.zeros(g.spectral_shape, dtype=complex)
        mask = g.ksq <= (2 * math.pi * 8 / g.L) ** 2
        mask &= g.ksq > 0
        fh[mask] = rng.standard_normal(int(mask.sum())) + 1j * rng.standard_normal(int(mask.sum()))
        noise = g.ifft(fh) if np.any(mask) else g.zeros()
        peak = np.max(np.abs(noise))
        rho = spec.mean + (spec.amplitude * noise / peak if peak > 0 else 0.0)
    else:
        sg, rho, _ = read_snapshot(spec.path)
        if sg != g:
            raise ConfigError("initial.path", f"snapshot grid {sg} does not match the configured grid")
    rho = np.asarray(rho, dtype=float) * np.ones(g.shape)
    if spec.sigma is not None and float(np.min(rho)) < spec.sigma:
        raise ConfigError("initial.sigma", f"initial density minimum {np.min(rho):.4g} is below sigma={spec.sigma}")
    if float(np.min(rho)) < 0:
        raise ConfigError("initial", "initial density must be non-negative")
    return rho


def initial_momentum(cfg: ExperimentConfig, rho: np.ndarray, grid: TorusGrid | None = None) -> np.ndarray:
    """``rho * u0`` with ``u0 = velocity * sin(2 pi x / L)`` along the first axis."""
    g = grid or cfg.grid.build()
    m = np.zeros((g.dim,) + g.shape)
    if cfg.initial.velocity:
        m[0] = rho * cfg.initial.velocity * np.sin(2 * math.pi * g.coords[0] / g.L)
    return m

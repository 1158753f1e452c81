"""Time-indexed solver output shared by the solvers, diagnostics and harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import TorusGrid

CSV_HEADER = ("t", "mass", "energy", "kinetic", "dissipation", "theta", "w2sq")


@dataclass
class DiagnosticsSeries:
    times: list[float] = field(default_factory=list)
    mass: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    kinetic: list[float] = field(default_factory=list)
    dissipation_integral: list[float] = field(default_factory=list)
    theta: list[float] | None = None
    w2_sq: list[float] | None = None

    def append(self, t, mass, energy, kinetic=0.0, dissipation=0.0):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"sample times must increase strictly ({t} after {self.times[-1]})")
        if self.dissipation_integral and dissipation < self.dissipation_integral[-1]:
            raise ValueError("cumulative dissipation must be non-decreasing")
        self.times.append(float(t))
        self.mass.append(float(mass))
        self.energy.append(float(energy))
        self.kinetic.append(float(kinetic))
        self.dissipation_integral.append(float(dissipation))

    def __len__(self) -> int:
        return len(self.times)

    def rows(self):
        nan = float("nan")
        for i, t in enumerate(self.times):
            yield (
                t,
                self.mass[i],
                self.energy[i],
                self.kinetic[i],
                self.dissipation_integral[i],
                self.theta[i] if self.theta is not None else nan,
                self.w2_sq[i] if self.w2_sq is not None else nan,
            )

    def to_csv(self) -> str:
        def fmt(x):
            return "" if isinstance(x, float) and math.isnan(x) else repr(float(x))

        lines = [",".join(CSV_HEADER)]
        lines.extend(",".join(fmt(x) for x in row) for row in self.rows())
        return "\n".join(lines) + "\n"


@dataclass
class Trajectory:
    """States at the sample times plus their diagnostics.

    ``momentum`` is ``None`` for the Cahn-Hilliard solvers.  ``meta`` holds
    solver facts needed by audits (time steps per interval, the cumulative
    drift-divergence integral of the nonlocal solver, ...).
    """

    grid: TorusGrid
    system: str
    times: list[float] = field(default_factory=list)
    rho: list[np.ndarray] = field(default_factory=list)
    momentum: list[np.ndarray] | None = None
    series: DiagnosticsSeries = field(default_factory=DiagnosticsSeries)
    meta: dict = field(default_factory=dict)

    def state_at(self, index: int):
        m = None if self.momentum is None else self.momentum[index]
        return self.times[index], self.rho[index], m

    def interpolate_rho(self, t: float) -> np.ndarray:
        """Linear interpolation between stored samples (exact at sample times)."""
        ts = self.times
        if not ts[0] - 1e-12 <= t <= ts[-1] + 1e-12:
            raise ValueError(f"t={t} outside the stored range [{ts[0]}, {ts[-1]}]")
        j = int(np.searchsorted(ts, t))
        if j < len(ts) and math.isclose(ts[j], t, rel_tol=0, abs_tol=1e-12):
            return self.rho[j]
        if j > 0 and math.isclose(ts[j - 1], t, rel_tol=0, abs_tol=1e-12):
            return self.rho[j - 1]
        j = min(max(j, 1), len(ts) - 1)
        w = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
        return (1 - w) * self.rho[j - 1] + w * self.rho[j]

"""Split potentials F = F1 + F2, the pressure, relative quantities and bound checks.

Every evaluator is vectorized over numpy arrays and pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

SQRT12 = float(np.sqrt(12.0))
UNBOUNDED_CEILING = 1e6


class Primitive(NamedTuple):
    """A scalar function together with its first three derivatives."""

    f: Callable
    d1: Callable
    d2: Callable
    d3: Callable


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


ZERO = Primitive(_zero, _zero, _zero, _zero)


@dataclass(frozen=True)
class PotentialSpec:
    name: str
    f1: Primitive = field(repr=False)
    f2: Primitive = field(repr=False)
    growth_k: float
    # ('poly', ascending coefficients of F) or ('power', gamma); None means
    # only the Python kernels can evaluate this potential
    descriptor: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.growth_k >= 2:
            raise ValueError(f"growth exponent k must be >= 2, got {self.growth_k}")

    @property
    def exponent_s(self) -> float:
        return 2.0 * self.growth_k / (self.growth_k - 1.0)

    @property
    def exponent_s_conj(self) -> float:
        s = self.exponent_s
        return s / (s - 1.0)

    def F(self, u):
        u = np.asarray(u, dtype=float)
        return self.f1.f(u) + self.f2.f(u)

    def dF(self, u):
        u = np.asarray(u, dtype=float)
        return self.f1.d1(u) + self.f2.d1(u)

    def d2F(self, u):
        u = np.asarray(u, dtype=float)
        return self.f1.d2(u) + self.f2.d2(u)

    def d3F(self, u):
        u = np.asarray(u, dtype=float)
        return self.f1.d3(u) + self.f2.d3(u)


@dataclass(frozen=True)
class PressureParams:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


# -- built-ins -----------------------------------------------------------
def _poly(coeffs) -> Primitive:
    p = np.polynomial.Polynomial(coeffs)
    d = [p, p.deriv(1), p.deriv(2), p.deriv(3)]
    return Primitive(*(lambda u, q=q: q(np.asarray(u, dtype=float)) for q in d))


def _arctan_well() -> Primitive:
    # F2'' = -1 / (1 + 12 (u - 1/2)^2): bounded by 1 on all of R and equal to
    # the double-well curvature at the spinodal point, so F - F2 stays convex
    s = SQRT12

    def f(u):
        v = np.asarray(u, dtype=float) - 0.5
        return -(v * np.arctan(s * v) - np.log1p((s * v) ** 2) / (2 * s)) / s

    def d1(u):
        v = np.asarray(u, dtype=float) - 0.5
        return -np.arctan(s * v) / s

    def d2(u):
        v = np.asarray(u, dtype=float) - 0.5
        return -1.0 / (1.0 + (s * v) ** 2)

    def d3(u):
        v = np.asarray(u, dtype=float) - 0.5
        return 2 * s * s * v / (1.0 + (s * v) ** 2) ** 2

    return Primitive(f, d1, d2, d3)


def _minus(a: Primitive, b: Primitive) -> Primitive:
    return Primitive(*(lambda u, x=x, y=y: x(u) - y(u) for x, y in zip(a, b)))


DOUBLE_WELL_COEFFS = (0.0, 0.0, 1.0, -2.0, 1.0)


def builtin_double_well() -> PotentialSpec:
    """``F(u) = u^2 (u-1)^2`` with a globally bounded-curvature concave part."""
    full = _poly(DOUBLE_WELL_COEFFS)
    f2 = _arctan_well()
    return PotentialSpec(
        "double_well", _minus(full, f2), f2, 4.0, ("poly", DOUBLE_WELL_COEFFS)
    )


def _abs_power(gamma: float) -> Primitive:
    g = float(gamma)

    def pw(u, e, c, odd):
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = c * np.where(a > 0, a ** e, 0.0)
        return out * np.sign(u) if odd else out

    return Primitive(
        lambda u: pw(u, g, 1.0, False),
        lambda u: pw(u, g - 1, g, True),
        lambda u: pw(u, g - 2, g * (g - 1), False),
        lambda u: pw(u, g - 3, g * (g - 1) * (g - 2), True),
    )


def builtin_power(gamma: float = 3.0) -> PotentialSpec:
    """``F(u) = |u|^gamma`` (convex), derivatives extended by 0 at the origin."""
    if not gamma > 2:
        raise ValueError(f"gamma must exceed 2, got {gamma}")
    return PotentialSpec(
        f"power_{gamma:g}", _abs_power(gamma), ZERO, float(gamma), ("power", float(gamma)),
        {"gamma": float(gamma)},
    )


def invalid_singular_potential() -> PotentialSpec:
    """Negative control: ``F2 = -|u-1|^{3/2}`` has unbounded curvature at u = 1."""
    f1 = _poly((0.0, 0.0, 1.0))

    def f2(u, order):
        v = np.asarray(u, dtype=float) - 1.0
        a = np.abs(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            if order == 0:
                return -(a**1.5)
            if order == 1:
                return -1.5 * np.sqrt(a) * np.sign(v)
            if order == 2:
                return np.where(a > 0, -0.75 / np.sqrt(a), -np.inf)
            return np.where(a > 0, 0.375 * a**-1.5 * np.sign(v), np.inf)

    prim = Primitive(*(lambda u, k=k: f2(u, k) for k in range(4)))
    return PotentialSpec("invalid_singular", f1, prim, 2.0, None)


BUILTINS: dict[str, Callable[..., PotentialSpec]] = {
    "double_well": builtin_double_well,
    "power": builtin_power,
    "invalid_singular": invalid_singular_potential,
}


def make_potential(name: str, **params) -> PotentialSpec:
    try:
        ctor = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(BUILTINS)}") from None
    return ctor(**params)


# -- pressure ------------------------------------------------------------
def _nonneg(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("pressure needs rho >= 0")
    return rho


def pressure(spec: PotentialSpec, pp: PressureParams, rho):
    rho = _nonneg(rho)
    return rho * spec.dF(rho) - spec.F(rho) + rho**2 / (2 * pp.eta**2)


def pressure_prime(spec: PotentialSpec, pp: PressureParams, rho):
    rho = _nonneg(rho)
    return rho * (spec.d2F(rho) + 1.0 / pp.eta**2)


def pressure_second(spec: PotentialSpec, pp: PressureParams, rho):
    rho = _nonneg(rho)
    return spec.d2F(rho) + 1.0 / pp.eta**2 + rho * spec.d3F(rho)


def relative_potential(spec: PotentialSpec, rho, P):
    rho = np.asarray(rho, dtype=float)
    P = np.asarray(P, dtype=float)
    return spec.F(rho) - spec.F(P) - spec.dF(P) * (rho - P)


def relative_pressure(spec: PotentialSpec, pp: PressureParams, rho, P):
    rho = np.asarray(rho, dtype=float)
    P = np.asarray(P, dtype=float)
    return pressure(spec, pp, rho) - pressure(spec, pp, P) - pressure_prime(spec, pp, P) * (rho - P)


# -- pressure bound checks ---------------------------------------------------
@dataclass(frozen=True)
class BoundReport:
    bounded: bool
    c_relative_pressure: float | None
    c_growth: float | None
    violations_relative_pressure: int
    violations_growth: int
    samples: int
    range_R: float
    eta: float
    hypothesis_sups: dict
    reason: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _fit_constant(lhs, coef, rest, slack, rel_tol=1e-3):
    """Smallest C in [0, ceiling] with ``lhs <= C * coef + rest + slack`` everywhere.

    Returns ``(C, violations_at_C)`` or ``(None, violations_at_ceiling)``.
    The predicate is monotone in C whenever ``coef >= 0``; samples with a
    negative coefficient are handled by the same bisection but can only make
    the set of admissible C smaller.
    """

    def bad(c):
        return int(np.count_nonzero(lhs > c * coef + rest + slack))

    top = bad(UNBOUNDED_CEILING)
    if top:
        return None, top
    if bad(0.0) == 0:
        return 0.0, 0
    lo, hi = 0.0, UNBOUNDED_CEILING
    # geometric phase first so the relative tolerance is reachable quickly
    while hi > 1e-12 and bad(hi / 2) == 0:
        hi /= 2
    lo = hi / 2
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if bad(mid):
            lo = mid
        else:
            hi = mid
    return hi, bad(hi)


def _hypothesis_sups(spec: PotentialSpec, R: float, n: int = 200001) -> dict:
    u = np.linspace(0.0, R, n)[1:]
    with np.errstate(all="ignore"):
        f1pp = spec.f1.d2(u)
        vals = {
            "sup_abs_f2": np.max(np.abs(spec.f2.f(u))),
            "sup_abs_f2p": np.max(np.abs(spec.f2.d1(u))),
            "sup_abs_f2pp": np.max(np.abs(spec.f2.d2(u))),
            "sup_abs_u_f2ppp": np.max(np.abs(u * spec.f2.d3(u))),
            "ratio_u_f1p": np.max(np.abs(u * spec.f1.d1(u)) / (spec.f1.f(u) + 1.0)),
            "ratio_u_f1ppp": np.max(np.abs(u * spec.f1.d3(u)) / (f1pp + 1.0)),
        }
    return {k: float(v) if np.isfinite(v) else float("inf") for k, v in vals.items()}


def check_pressure_bounds(
    spec: PotentialSpec, pp: PressureParams, range_R: float = 2.0, samples: int = 100000, seed: int = 0
) -> BoundReport:
    """Fit the relative-pressure and growth constants on uniform samples of ``(0, R]^2``.

    A spec is reported unbounded when no constant up to 1e6 fits the samples
    or when the hypotheses those constants are built from (bounded F2 and its
    derivatives, growth ratios of F1) blow up on a dense sampling of the range.
    """
    if not range_R > 0:
        raise ValueError("range_R must be positive")
    rng = np.random.default_rng(seed)
    # uniform on (0, R]: flip the half-open interval of the generator
    rho = range_R * (1.0 - rng.random(samples))
    P = range_R * (1.0 - rng.random(samples))
    sq = (rho - P) ** 2
    with np.errstate(all="ignore"):
        lhs1 = relative_pressure(spec, pp, rho, P)
        frel = relative_potential(spec, rho, P)
        terms = np.abs(pressure(spec, pp, rho)) + np.abs(pressure(spec, pp, P))
        terms += np.abs(pressure_prime(spec, pp, P) * (rho - P))
        Fr = spec.F(rho)
        lhs2 = np.abs(rho * spec.dF(rho))
    slack1 = 64 * np.finfo(float).eps * (terms + 1.0)
    slack2 = 64 * np.finfo(float).eps * (lhs2 + 1.0)
    sups = _hypothesis_sups(spec, range_R)
    finite = bool(np.all(np.isfinite(lhs1)) and np.all(np.isfinite(frel)) and np.all(np.isfinite(lhs2)))
    if not finite:
        return BoundReport(False, None, None, samples, samples, samples, range_R, pp.eta, sups,
                           "non-finite potential values on the sampled range")
    c1, v1 = _fit_constant(lhs1, frel + sq, sq / pp.eta**2, slack1)
    c2, v2 = _fit_constant(lhs2, Fr + rho**2 + 1.0, 0.0, slack2)
    reasons = []
    if c1 is None:
        reasons.append("relative-pressure constant exceeds 1e6")
    if c2 is None:
        reasons.append("growth constant exceeds 1e6")
    blown = [k for k, v in sups.items() if not v <= UNBOUNDED_CEILING]
    if blown:
        reasons.append("hypothesis sup-norms unbounded: " + ", ".join(blown))
    return BoundReport(not reasons, c1, c2, v1, v2, samples, range_R, pp.eta, sups, "; ".join(reasons))


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    sup_abs_f2pp: float
    threshold: float
    margin_kappa: float
    min_f1: float
    min_f1pp: float
    range_R: float
    c_p: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def validate_assumption(spec: PotentialSpec, c_p: float, range_R: float = 2.0, n: int = 200001) -> AssumptionReport:
    """Compare ``sup |F2''|`` on ``(0, R]`` with ``1 / c_p``; margin ``1 - c_p * sup``."""
    if not c_p > 0:
        raise ValueError("c_p must be positive")
    u = np.linspace(0.0, range_R, n)[1:]
    with np.errstate(all="ignore"):
        sup = float(np.max(np.abs(spec.f2.d2(u))))
        min_f1 = float(np.min(spec.f1.f(u)))
        min_f1pp = float(np.min(spec.f1.d2(u)))
    if not np.isfinite(sup):
        sup = float("inf")
    kappa = 1.0 - c_p * sup
    tol = 1e-12
    ok = kappa > 0 and min_f1 >= -tol and min_f1pp >= -tol
    return AssumptionReport(ok, sup, 1.0 / c_p, kappa, min_f1, min_f1pp, range_R, c_p)

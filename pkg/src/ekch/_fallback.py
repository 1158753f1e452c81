"""Pure-numpy time-stepping kernels.

Same constructor signatures and methods as the compiled ``_core`` module;
``backend.py`` picks one at import.  Fields are C-contiguous float arrays of
shape ``(n,)*dim`` (momentum ``(dim, n, ...)``).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DivergenceError, PositivityError

POT_POLY = 0
POT_POWER = 1
POT_CALLABLE = 2


class _Spectral:
    def __init__(self, dim: int, n: int, L: float):
        self.dim, self.n, self.L = dim, n, L
        self.dx = L / n
        self.shape = (n,) * dim
        self.cell = self.dx**dim
        self.axes = tuple(range(-dim, 0))
        full = np.fft.fftfreq(n, d=1.0 / n)
        half = np.arange(n // 2 + 1, dtype=float)
        modes = np.meshgrid(*([full] * (dim - 1) + [half]), indexing="ij")
        scale = 2 * np.pi / L
        keep = [np.abs(m) != n // 2 if n % 2 == 0 else np.ones_like(m, bool) for m in modes]
        self.ik = [1j * scale * m * r for m, r in zip(modes, keep)]
        self.lap = -sum((scale * m) ** 2 * r for m, r in zip(modes, keep))
        self.ksq = sum((scale * m) ** 2 for m in modes)

    def fft(self, f):
        return np.fft.rfftn(f, axes=self.axes)

    def ifft(self, fh):
        return np.fft.irfftn(fh, s=self.shape, axes=self.axes)


class _Potential:
    """Pressure-level evaluators built from a compact descriptor."""

    def __init__(self, kind: int, params, eta: float):
        self.kind = int(kind)
        self.inv_eta2 = 1.0 / eta**2
        if self.kind == POT_CALLABLE:
            # params is a PotentialSpec; only this backend can evaluate it
            self.spec = params
            return
        self.params = np.asarray(params, dtype=float)
        if self.kind == POT_POLY:
            c = self.params
            self.dF = np.polynomial.Polynomial(c).deriv(1)
            self.d2F = np.polynomial.Polynomial(c).deriv(2)
            # rho F' - F has coefficients (j - 1) c_j
            q = np.array([(j - 1) * cj for j, cj in enumerate(c)] + [0.0, 0.0, 0.0])
            q[2] += 0.5 * self.inv_eta2
            self.p = np.polynomial.Polynomial(np.trim_zeros(q, "b") if np.any(q) else [0.0])
            self.dp = self.p.deriv(1)
        elif self.kind == POT_POWER:
            self.gamma = float(self.params[0])
        else:
            raise ValueError(f"unknown potential kind {kind}")

    def dFv(self, r):
        if self.kind == POT_CALLABLE:
            return self.spec.dF(r)
        if self.kind == POT_POLY:
            return self.dF(r)
        g = self.gamma
        return g * np.abs(r) ** (g - 1) * np.sign(r)

    def d2Fv(self, r):
        if self.kind == POT_CALLABLE:
            return self.spec.d2F(r)
        if self.kind == POT_POLY:
            return self.d2F(r)
        g = self.gamma
        return g * (g - 1) * np.abs(r) ** (g - 2)

    def pv(self, r):
        if self.kind == POT_CALLABLE:
            return r * self.spec.dF(r) - self.spec.F(r) + 0.5 * self.inv_eta2 * r * r
        if self.kind == POT_POLY:
            return self.p(r)
        g = self.gamma
        return (g - 1) * np.abs(r) ** g + 0.5 * self.inv_eta2 * r * r

    def dpv(self, r):
        if self.kind == POT_CALLABLE:
            return r * (self.spec.d2F(r) + self.inv_eta2)
        if self.kind == POT_POLY:
            return self.dp(r)
        g = self.gamma
        return g * (g - 1) * np.abs(r) ** (g - 1) * np.sign(r) + self.inv_eta2 * r


def truncation(r, delta: float):
    """``T_delta`` with the C^2 quartic ramp; identity when ``delta == 0``."""
    if delta == 0.0:
        return np.asarray(r, dtype=float)
    x = np.asarray(r, dtype=float) / delta
    xc = np.clip(x, 0.0, 1.0)
    s = np.where(x >= 1.0, 2.0 * x - 1.0, 2.0 * xc**3 - xc**4)
    return 0.5 * delta + 0.5 * delta * s


class NLCHEngine:
    """Explicit SSP-RK2 for ``rho_t = Lap phi_delta(rho) - div(T_delta(rho) b)``."""

    def __init__(self, dim, n, L, hat, eta, kind, params, delta, gl_nodes, gl_weights):
        self.sp = _Spectral(dim, n, L)
        self.hat = np.ascontiguousarray(hat, dtype=float)
        self.eta = float(eta)
        self.pot = _Potential(kind, params, eta)
        self.delta = float(delta)
        self.gl_x = np.asarray(gl_nodes, dtype=float)
        self.gl_w = np.asarray(gl_weights, dtype=float)

    def phi(self, rho):
        """``phi_delta`` up to an additive constant (irrelevant under Lap)."""
        p = self.pot.pv(rho)
        d = self.delta
        if d == 0.0:
            return p
        low = rho < d
        if not np.any(low):
            return p
        r = rho[low]
        # phi(r) = p(d) - int_r^d T(s) p'(s)/s ds, with T(s) p'(s)/s = T(s)(F''+1/eta^2)
        half = 0.5 * (d - r)
        mid = 0.5 * (d + r)
        acc = np.zeros_like(r)
        for x, w in zip(self.gl_x, self.gl_w):
            s = mid + half * x
            acc += w * truncation(s, d) * (self.pot.d2Fv(s) + self.pot.inv_eta2)
        out = p.copy()
        out[low] = self.pot.pv(np.float64(d)) - half * acc
        return out

    def phi_prime(self, rho):
        return truncation(rho, self.delta) * (self.pot.d2Fv(rho) + self.pot.inv_eta2)

    def drift(self, rho_h):
        sp = self.sp
        return [sp.ifft(ik * self.hat * rho_h) / self.eta**2 for ik in sp.ik]

    def div_drift_inf(self, rho):
        sp = self.sp
        return float(np.max(np.abs(sp.ifft(sp.lap * self.hat * sp.fft(rho))))) / self.eta**2

    def rhs(self, rho):
        sp = self.sp
        rho_h = sp.fft(rho)
        tr = truncation(rho, self.delta)
        acc = sp.lap * sp.fft(self.phi(rho))
        for ik, b in zip(sp.ik, self.drift(rho_h)):
            acc = acc - ik * sp.fft(tr * b)
        return sp.ifft(acc)

    def advance(self, rho, dt, nsteps, t0=0.0, track=True):
        rho = np.array(rho, dtype=float)
        integral = 0.0
        g0 = self.div_drift_inf(rho) if track else 0.0
        for step in range(int(nsteps)):
            r1 = rho + dt * self.rhs(rho)
            rho = 0.5 * rho + 0.5 * (r1 + dt * self.rhs(r1))
            if not math.isfinite(float(rho.sum())):
                raise DivergenceError("nonlocal CH produced non-finite values", t0 + (step + 1) * dt)
            if track:
                g1 = self.div_drift_inf(rho)
                integral += 0.5 * dt * (g0 + g1)
                g0 = g1
        return rho, integral


class LCHEngine:
    """First-order IMEX for ``rho_t = div(rho grad(-D Lap rho + F'(rho)))``."""

    def __init__(self, dim, n, L, D, kind, params):
        self.sp = _Spectral(dim, n, L)
        self.D = float(D)
        self.pot = _Potential(kind, params, 1.0)

    def explicit(self, rho):
        sp = self.sp
        rho_h = sp.fft(rho)
        mu = sp.ifft(-self.D * sp.lap * rho_h) + self.pot.dFv(rho)
        mu_h = sp.fft(mu)
        acc = 0.0
        for ik in sp.ik:
            acc = acc + ik * sp.fft(rho * sp.ifft(ik * mu_h))
        return acc, rho_h

    def advance(self, rho, dt, nsteps, t0=0.0):
        sp = self.sp
        rho = np.array(rho, dtype=float)
        lap2 = sp.lap**2
        for step in range(int(nsteps)):
            rbar = float(rho.mean())
            stiff = self.D * rbar * lap2
            acc, rho_h = self.explicit(rho)
            rho = sp.ifft((rho_h + dt * (acc + stiff * rho_h)) / (1.0 + dt * stiff))
            if not math.isfinite(float(rho.sum())):
                raise DivergenceError("local CH produced non-finite values", t0 + (step + 1) * dt)
        return rho


class EKEngine:
    """Strang split: exact friction half steps around an SSP-RK2 flux step."""

    def __init__(self, dim, n, L, hat, eta, epsilon, kind, params, delta_reg, floor, fluxes=True):
        self.sp = _Spectral(dim, n, L)
        self.hat = np.ascontiguousarray(hat, dtype=float)
        self.eta = float(eta)
        self.eps = float(epsilon)
        self.pot = _Potential(kind, params, eta)
        self.delta_reg = float(delta_reg)
        self.floor = float(floor)
        self.fluxes = bool(fluxes)

    def wave_speeds(self, rho, m):
        rc = np.maximum(rho, self.floor)
        c = np.sqrt(np.maximum(self.pot.dpv(rho), 0.0) / rc)
        return [np.abs(mj) / rc + c for mj in m]

    def max_speed(self, rho, m):
        return float(sum(np.max(a) for a in self.wave_speeds(rho, m)))

    def dissipation_flux(self, rho, m):
        """Rusanov jump term ``(1/dx) sum_j [A_{j+1/2} - A_{j-1/2}]`` per component."""
        dx = self.sp.dx
        out = np.zeros_like(m)
        for j, a in enumerate(self.wave_speeds(rho, m)):
            ax = j - self.sp.dim
            alpha = np.maximum(a, np.roll(a, -1, axis=ax))
            for i in range(self.sp.dim):
                face = 0.5 * alpha * (np.roll(m[i], -1, axis=ax) - m[i])
                out[i] += (face - np.roll(face, 1, axis=ax)) / dx
        return out

    def rhs(self, rho, m):
        sp = self.sp
        if np.min(rho) < -1e-8:
            raise PositivityError(f"density dropped to {np.min(rho):.3e}")
        inv = 1.0 / self.eps
        rho_h = sp.fft(rho)
        m_h = [sp.fft(c) for c in m]
        drho = -inv * sp.ifft(sum(ik * c for ik, c in zip(sp.ik, m_h)))
        rc = np.maximum(rho, self.floor)
        u = m / rc
        p = self.pot.pv(rho)
        dim = sp.dim
        flux_h = {}
        for i in range(dim):
            for j in range(i, dim):
                f = m[i] * u[j]
                if i == j:
                    f = f + p
                flux_h[i, j] = flux_h[j, i] = sp.fft(f)
        diss = self.dissipation_flux(rho, m)
        force = inv / self.eta**2
        dm = np.empty_like(m)
        for i in range(dim):
            central = sp.ifft(sum(sp.ik[j] * flux_h[i, j] for j in range(dim)))
            grad_conv = sp.ifft(sp.ik[i] * self.hat * rho_h)
            dm[i] = -inv * (central - diss[i]) + force * rho * grad_conv
        return drho, dm

    def advance(self, rho, m, dt, nsteps, t0=0.0):
        sp = self.sp
        rho = np.array(rho, dtype=float)
        m = np.array(m, dtype=float)
        half = math.exp(-0.5 * dt / self.eps**2)
        damp = None
        if self.delta_reg > 0:
            damp = 1.0 / (1.0 + dt * self.delta_reg * (1.0 + sp.ksq) ** 3)
        diss = 0.0
        w = dt / self.eps**2 * sp.cell
        for step in range(int(nsteps)):
            diss += w * float(np.sum(np.sum(m * m, axis=0) / np.maximum(rho, self.floor)))
            m = m * half
            if self.fluxes:
                d1, e1 = self.rhs(rho, m)
                r1, m1 = rho + dt * d1, m + dt * e1
                d2, e2 = self.rhs(r1, m1)
                rho = 0.5 * rho + 0.5 * (r1 + dt * d2)
                m = 0.5 * m + 0.5 * (m1 + dt * e2)
            m = m * half
            if damp is not None:
                m = np.stack([sp.ifft(damp * sp.fft(c)) for c in m])
            if not (math.isfinite(float(rho.sum())) and math.isfinite(float(m.sum()))):
                raise DivergenceError("Euler-Korteweg produced non-finite values", t0 + (step + 1) * dt)
        return rho, m, diss

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernels (FFTW plans + typed loops).

Mirrors ``_fallback``: same constructors, ``rhs`` and ``advance`` methods.
"""

from libc.math cimport exp, sqrt, fabs, isfinite, pow
from libc.string cimport memcpy

import numpy as np
from ekch.errors import DivergenceError, PositivityError
cimport numpy as cnp

cnp.import_array()


cdef extern from "fftw3.h":
    ctypedef struct fftw_plan_s:
        pass
    ctypedef fftw_plan_s* fftw_plan
    ctypedef double fftw_complex[2]
    fftw_plan fftw_plan_dft_r2c(int rank, const int* n, double* inp, fftw_complex* out, unsigned flags)
    fftw_plan fftw_plan_dft_c2r(int rank, const int* n, fftw_complex* inp, double* out, unsigned flags)
    void fftw_execute(const fftw_plan p) nogil
    void fftw_destroy_plan(fftw_plan p)
    void* fftw_malloc(size_t n)
    void fftw_free(void* p)
    unsigned FFTW_ESTIMATE


POT_POLY = 0
POT_POWER = 1


cdef class _FFT:
    cdef int dim, n, N, M
    cdef double scale
    cdef double* r
    cdef double complex* c
    cdef fftw_plan fwd
    cdef fftw_plan bwd

    def __cinit__(self, int dim, int n):
        cdef int dims[2]
        self.dim = dim
        self.n = n
        self.N = n if dim == 1 else n * n
        self.M = (1 if dim == 1 else n) * (n // 2 + 1)
        self.scale = 1.0 / self.N
        self.r = <double*> fftw_malloc(sizeof(double) * self.N)
        self.c = <double complex*> fftw_malloc(sizeof(double complex) * self.M)
        if self.r == NULL or self.c == NULL:
            raise MemoryError()
        dims[0] = n
        dims[1] = n
        self.fwd = fftw_plan_dft_r2c(dim, dims, self.r, <fftw_complex*> self.c, FFTW_ESTIMATE)
        self.bwd = fftw_plan_dft_c2r(dim, dims, <fftw_complex*> self.c, self.r, FFTW_ESTIMATE)

    def __dealloc__(self):
        if self.fwd != NULL:
            fftw_destroy_plan(self.fwd)
        if self.bwd != NULL:
            fftw_destroy_plan(self.bwd)
        if self.r != NULL:
            fftw_free(self.r)
        if self.c != NULL:
            fftw_free(self.c)

    cdef inline void forward(self, const double* src, double complex* dst) noexcept nogil:
        memcpy(self.r, src, sizeof(double) * self.N)
        fftw_execute(self.fwd)
        memcpy(dst, self.c, sizeof(double complex) * self.M)

    cdef inline void backward(self, const double complex* src, double* dst) noexcept nogil:
        cdef int i
        memcpy(self.c, src, sizeof(double complex) * self.M)
        fftw_execute(self.bwd)
        for i in range(self.N):
            dst[i] = self.r[i] * self.scale


cdef inline double horner(const double* c, int nc, double x) noexcept nogil:
    cdef double acc = 0.0
    cdef int j
    for j in range(nc - 1, -1, -1):
        acc = acc * x + c[j]
    return acc


cdef inline double sgn(double x) noexcept nogil:
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


cdef class _Pot:
    cdef int kind
    cdef double gamma, inv_eta2
    cdef double[::1] cdF, cd2F, cp, cdp
    cdef int ndF, nd2F, np_, ndp

    def __init__(self, int kind, params, double eta):
        self.kind = kind
        self.inv_eta2 = 1.0 / (eta * eta)
        if kind == POT_POLY:
            c = np.asarray(params, dtype=float)
            P = np.polynomial.Polynomial(c)
            q = np.array([(j - 1) * cj for j, cj in enumerate(c)] + [0.0, 0.0, 0.0])
            q[2] += 0.5 * self.inv_eta2
            Q = np.polynomial.Polynomial(q)
            self.cdF = np.ascontiguousarray(P.deriv(1).coef, dtype=float)
            self.cd2F = np.ascontiguousarray(P.deriv(2).coef, dtype=float)
            self.cp = np.ascontiguousarray(Q.coef, dtype=float)
            self.cdp = np.ascontiguousarray(Q.deriv(1).coef, dtype=float)
            self.ndF = self.cdF.shape[0]
            self.nd2F = self.cd2F.shape[0]
            self.np_ = self.cp.shape[0]
            self.ndp = self.cdp.shape[0]
        elif kind == POT_POWER:
            self.gamma = float(params[0])
        else:
            raise ValueError(f"unknown potential kind {kind}")

    cdef inline double dF(self, double r) noexcept nogil:
        if self.kind == 0:
            return horner(&self.cdF[0], self.ndF, r)
        return self.gamma * pow(fabs(r), self.gamma - 1) * sgn(r)

    cdef inline double d2F(self, double r) noexcept nogil:
        if self.kind == 0:
            return horner(&self.cd2F[0], self.nd2F, r)
        return self.gamma * (self.gamma - 1) * pow(fabs(r), self.gamma - 2)

    cdef inline double p(self, double r) noexcept nogil:
        if self.kind == 0:
            return horner(&self.cp[0], self.np_, r)
        return (self.gamma - 1) * pow(fabs(r), self.gamma) + 0.5 * self.inv_eta2 * r * r

    cdef inline double dp(self, double r) noexcept nogil:
        if self.kind == 0:
            return horner(&self.cdp[0], self.ndp, r)
        return self.gamma * (self.gamma - 1) * pow(fabs(r), self.gamma - 1) * sgn(r) + self.inv_eta2 * r


cdef inline double trunc_T(double r, double d) noexcept nogil:
    cdef double x, s
    if d == 0.0:
        return r
    x = r / d
    if x >= 1.0:
        s = 2.0 * x - 1.0
    elif x <= 0.0:
        s = 0.0
    else:
        s = x * x * x * (2.0 - x)
    return 0.5 * d + 0.5 * d * s


cdef class _Grid:
    """Symbols in rfftn layout, flattened."""
    cdef int dim, n, N, M
    cdef double dx, cell
    cdef double[:, ::1] kk
    cdef double[::1] lap, ksq

    def __init__(self, int dim, int n, double L):
        self.dim = dim
        self.n = n
        self.N = n if dim == 1 else n * n
        self.M = (1 if dim == 1 else n) * (n // 2 + 1)
        self.dx = L / n
        self.cell = self.dx ** dim
        full = np.fft.fftfreq(n, d=1.0 / n)
        half = np.arange(n // 2 + 1, dtype=float)
        modes = np.meshgrid(*([full] * (dim - 1) + [half]), indexing="ij")
        scale = 2 * np.pi / L
        keep = [np.abs(m) != n // 2 if n % 2 == 0 else np.ones_like(m, bool) for m in modes]
        self.kk = np.ascontiguousarray(np.stack([(scale * m * r).ravel() for m, r in zip(modes, keep)]))
        self.lap = np.ascontiguousarray((-sum((scale * m) ** 2 * r for m, r in zip(modes, keep))).ravel())
        self.ksq = np.ascontiguousarray(sum((scale * m) ** 2 for m in modes).ravel())


cdef inline int neighbor(int idx, int stride, int n, int shift) noexcept nogil:
    cdef int coord = (idx // stride) % n
    cdef int nc = coord + shift
    if nc >= n:
        nc -= n
    elif nc < 0:
        nc += n
    return idx + (nc - coord) * stride


cdef class NLCHEngine:
    cdef _Grid g
    cdef _FFT fft
    cdef _Pot pot
    cdef double eta, delta
    cdef double[::1] hat, gl_x, gl_w
    cdef int ngl
    cdef double complex[::1] rho_h, acc, tmp_h
    cdef double[::1] tr, phi_buf, work, r1, r2, k1
    cdef double[:, ::1] b

    def __init__(self, int dim, int n, double L, hat, double eta, int kind, params, double delta, gl_nodes, gl_weights):
        self.g = _Grid(dim, n, L)
        self.fft = _FFT(dim, n)
        self.pot = _Pot(kind, params, eta)
        self.eta = eta
        self.delta = delta
        self.hat = np.ascontiguousarray(np.asarray(hat, dtype=float).ravel())
        self.gl_x = np.ascontiguousarray(gl_nodes, dtype=float)
        self.gl_w = np.ascontiguousarray(gl_weights, dtype=float)
        self.ngl = self.gl_x.shape[0]
        M, N = self.g.M, self.g.N
        self.rho_h = np.zeros(M, dtype=complex)
        self.acc = np.zeros(M, dtype=complex)
        self.tmp_h = np.zeros(M, dtype=complex)
        self.tr = np.zeros(N)
        self.phi_buf = np.zeros(N)
        self.work = np.zeros(N)
        self.r1 = np.zeros(N)
        self.r2 = np.zeros(N)
        self.k1 = np.zeros(N)
        self.b = np.zeros((dim, N))

    cdef double phi_at(self, double r) noexcept nogil:
        cdef double d = self.delta, half, mid, s, acc = 0.0
        cdef int q
        if d == 0.0 or r >= d:
            return self.pot.p(r)
        half = 0.5 * (d - r)
        mid = 0.5 * (d + r)
        for q in range(self.ngl):
            s = mid + half * self.gl_x[q]
            acc += self.gl_w[q] * trunc_T(s, d) * (self.pot.d2F(s) + self.pot.inv_eta2)
        return self.pot.p(d) - half * acc

    cdef void _rhs(self, double* rho, double* out) noexcept nogil:
        cdef int i, j, M = self.g.M, N = self.g.N, dim = self.g.dim
        cdef double ie2 = 1.0 / (self.eta * self.eta)
        self.fft.forward(rho, &self.rho_h[0])
        for i in range(N):
            self.tr[i] = trunc_T(rho[i], self.delta)
            self.phi_buf[i] = self.phi_at(rho[i])
        self.fft.forward(&self.phi_buf[0], &self.acc[0])
        for i in range(M):
            self.acc[i] = self.acc[i] * self.g.lap[i]
        for j in range(dim):
            for i in range(M):
                self.tmp_h[i] = 1j * self.g.kk[j, i] * self.hat[i] * self.rho_h[i] * ie2
            self.fft.backward(&self.tmp_h[0], &self.b[j, 0])
            for i in range(N):
                self.work[i] = self.tr[i] * self.b[j, i]
            self.fft.forward(&self.work[0], &self.tmp_h[0])
            for i in range(M):
                self.acc[i] = self.acc[i] - 1j * self.g.kk[j, i] * self.tmp_h[i]
        self.fft.backward(&self.acc[0], out)

    cdef double _divb(self, double* rho) noexcept nogil:
        cdef int i, M = self.g.M, N = self.g.N
        cdef double m = 0.0, ie2 = 1.0 / (self.eta * self.eta)
        self.fft.forward(rho, &self.tmp_h[0])
        for i in range(M):
            self.tmp_h[i] = self.tmp_h[i] * self.g.lap[i] * self.hat[i] * ie2
        self.fft.backward(&self.tmp_h[0], &self.work[0])
        for i in range(N):
            if fabs(self.work[i]) > m:
                m = fabs(self.work[i])
        return m

    def rhs(self, rho):
        r = np.ascontiguousarray(rho, dtype=float)
        shape = r.shape
        r = r.ravel().copy()
        out = np.zeros_like(r)
        cdef double[::1] rv = r, ov = out
        self._rhs(&rv[0], &ov[0])
        return out.reshape(shape)

    def phi(self, rho):
        r = np.asarray(rho, dtype=float)
        out = np.empty_like(r)
        flat_in = r.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.shape[0]):
            flat_out[i] = self.phi_at(flat_in[i])
        return flat_out.reshape(r.shape)

    def phi_prime(self, rho):
        r = np.asarray(rho, dtype=float)
        d = self.delta
        if d == 0.0:
            tr = r
        else:
            x = r / d
            xc = np.clip(x, 0.0, 1.0)
            tr = 0.5 * d + 0.5 * d * np.where(x >= 1.0, 2.0 * x - 1.0, 2.0 * xc**3 - xc**4)
        out = np.empty_like(r)
        flat_r = r.ravel()
        flat_o = out.ravel()
        for i in range(flat_r.shape[0]):
            flat_o[i] = self.pot.d2F(flat_r[i]) + self.pot.inv_eta2
        return tr * flat_o.reshape(r.shape)

    def div_drift_inf(self, rho):
        r = np.ascontiguousarray(rho, dtype=float).ravel().copy()
        cdef double[::1] rv = r
        return self._divb(&rv[0])

    def advance(self, rho, double dt, long nsteps, double t0=0.0, bint track=True):
        arr = np.ascontiguousarray(rho, dtype=float)
        shape = arr.shape
        state = arr.ravel().copy()
        cdef double[::1] s = state
        cdef int i, N = self.g.N
        cdef long step
        cdef double total, g0 = 0.0, g1, integral = 0.0
        cdef bint bad = False
        with nogil:
            if track:
                g0 = self._divb(&s[0])
            for step in range(nsteps):
                self._rhs(&s[0], &self.k1[0])
                for i in range(N):
                    self.r1[i] = s[i] + dt * self.k1[i]
                self._rhs(&self.r1[0], &self.k1[0])
                total = 0.0
                for i in range(N):
                    s[i] = 0.5 * s[i] + 0.5 * (self.r1[i] + dt * self.k1[i])
                    total += s[i]
                if not isfinite(total):
                    bad = True
                    break
                if track:
                    g1 = self._divb(&s[0])
                    integral += 0.5 * dt * (g0 + g1)
                    g0 = g1
        if bad:
            raise DivergenceError("nonlocal CH produced non-finite values", t0 + (step + 1) * dt)
        return state.reshape(shape), integral


cdef class LCHEngine:
    cdef _Grid g
    cdef _FFT fft
    cdef _Pot pot
    cdef double D
    cdef double complex[::1] rho_h, mu_h, acc, tmp_h
    cdef double[::1] mu, work

    def __init__(self, int dim, int n, double L, double D, int kind, params):
        self.g = _Grid(dim, n, L)
        self.fft = _FFT(dim, n)
        self.pot = _Pot(kind, params, 1.0)
        self.D = D
        M, N = self.g.M, self.g.N
        self.rho_h = np.zeros(M, dtype=complex)
        self.mu_h = np.zeros(M, dtype=complex)
        self.acc = np.zeros(M, dtype=complex)
        self.tmp_h = np.zeros(M, dtype=complex)
        self.mu = np.zeros(N)
        self.work = np.zeros(N)

    cdef void _explicit(self, double* rho) noexcept nogil:
        # leaves div(rho grad mu) in acc and fft(rho) in rho_h
        cdef int i, j, M = self.g.M, N = self.g.N
        self.fft.forward(rho, &self.rho_h[0])
        for i in range(M):
            self.tmp_h[i] = -self.D * self.g.lap[i] * self.rho_h[i]
        self.fft.backward(&self.tmp_h[0], &self.mu[0])
        for i in range(N):
            self.mu[i] += self.pot.dF(rho[i])
        self.fft.forward(&self.mu[0], &self.mu_h[0])
        for i in range(M):
            self.acc[i] = 0.0
        for j in range(self.g.dim):
            for i in range(M):
                self.tmp_h[i] = 1j * self.g.kk[j, i] * self.mu_h[i]
            self.fft.backward(&self.tmp_h[0], &self.work[0])
            for i in range(N):
                self.work[i] = rho[i] * self.work[i]
            self.fft.forward(&self.work[0], &self.tmp_h[0])
            for i in range(M):
                self.acc[i] = self.acc[i] + 1j * self.g.kk[j, i] * self.tmp_h[i]

    def advance(self, rho, double dt, long nsteps, double t0=0.0):
        arr = np.ascontiguousarray(rho, dtype=float)
        shape = arr.shape
        state = arr.ravel().copy()
        cdef double[::1] s = state
        cdef int i, M = self.g.M, N = self.g.N
        cdef long step
        cdef double total, rbar, stiff
        cdef bint bad = False
        with nogil:
            for step in range(nsteps):
                rbar = 0.0
                for i in range(N):
                    rbar += s[i]
                rbar /= N
                self._explicit(&s[0])
                for i in range(M):
                    stiff = self.D * rbar * self.g.lap[i] * self.g.lap[i]
                    self.tmp_h[i] = (self.rho_h[i] + dt * (self.acc[i] + stiff * self.rho_h[i])) / (1.0 + dt * stiff)
                self.fft.backward(&self.tmp_h[0], &s[0])
                total = 0.0
                for i in range(N):
                    total += s[i]
                if not isfinite(total):
                    bad = True
                    break
        if bad:
            raise DivergenceError("local CH produced non-finite values", t0 + (step + 1) * dt)
        return state.reshape(shape)


cdef class EKEngine:
    cdef _Grid g
    cdef _FFT fft
    cdef _Pot pot
    cdef double eta, eps, delta_reg, floor
    cdef bint fluxes
    cdef double[::1] hat
    cdef double complex[::1] rho_h, acc, tmp_h
    cdef double complex[:, ::1] m_h, flux_h
    cdef double[::1] p, tmp, r1, d1, d2, alpha
    cdef double[:, ::1] u, m1, e1, e2, diss, a

    def __init__(self, int dim, int n, double L, hat, double eta, double epsilon, int kind, params,
                 double delta_reg, double floor, fluxes=True):
        self.g = _Grid(dim, n, L)
        self.fft = _FFT(dim, n)
        self.pot = _Pot(kind, params, eta)
        self.eta = eta
        self.eps = epsilon
        self.delta_reg = delta_reg
        self.floor = floor
        self.fluxes = bool(fluxes)
        self.hat = np.ascontiguousarray(np.asarray(hat, dtype=float).ravel())
        M, N = self.g.M, self.g.N
        self.rho_h = np.zeros(M, dtype=complex)
        self.acc = np.zeros(M, dtype=complex)
        self.tmp_h = np.zeros(M, dtype=complex)
        self.m_h = np.zeros((dim, M), dtype=complex)
        self.flux_h = np.zeros((dim * (dim + 1) // 2, M), dtype=complex)
        self.p = np.zeros(N)
        self.tmp = np.zeros(N)
        self.r1 = np.zeros(N)
        self.d1 = np.zeros(N)
        self.d2 = np.zeros(N)
        self.alpha = np.zeros(N)
        self.u = np.zeros((dim, N))
        self.m1 = np.zeros((dim, N))
        self.e1 = np.zeros((dim, N))
        self.e2 = np.zeros((dim, N))
        self.diss = np.zeros((dim, N))
        self.a = np.zeros((dim, N))

    cdef inline int fidx(self, int i, int j) noexcept nogil:
        # packed index of the symmetric pair (i, j)
        cdef int lo = i if i < j else j
        cdef int hi = j if i < j else i
        return lo * self.g.dim - lo * (lo - 1) // 2 + (hi - lo)

    cdef void _speeds(self, double* rho, double* m) noexcept nogil:
        cdef int i, j, N = self.g.N, dim = self.g.dim
        cdef double rc, c, dp
        for i in range(N):
            rc = rho[i] if rho[i] > self.floor else self.floor
            dp = self.pot.dp(rho[i])
            c = sqrt(dp / rc) if dp > 0 else 0.0
            for j in range(dim):
                self.u[j, i] = m[j * N + i] / rc
                self.a[j, i] = fabs(self.u[j, i]) + c

    cdef void _dissipation(self, double* m) noexcept nogil:
        cdef int i, j, k, N = self.g.N, dim = self.g.dim, n = self.g.n
        cdef int stride, ip, im
        cdef double al_p, al_m, inv_dx = 1.0 / self.g.dx
        for k in range(dim):
            for i in range(N):
                self.diss[k, i] = 0.0
        for j in range(dim):
            stride = 1
            for k in range(dim - 1 - j):
                stride *= n
            for i in range(N):
                ip = neighbor(i, stride, n, 1)
                im = neighbor(i, stride, n, -1)
                al_p = self.a[j, i] if self.a[j, i] > self.a[j, ip] else self.a[j, ip]
                al_m = self.a[j, im] if self.a[j, im] > self.a[j, i] else self.a[j, i]
                for k in range(dim):
                    self.diss[k, i] += 0.5 * inv_dx * (
                        al_p * (m[k * N + ip] - m[k * N + i]) - al_m * (m[k * N + i] - m[k * N + im])
                    )

    cdef int _rhs(self, double* rho, double* m, double* drho, double* dm) noexcept nogil:
        cdef int i, j, k, M = self.g.M, N = self.g.N, dim = self.g.dim
        cdef double inv = 1.0 / self.eps
        cdef double force = inv / (self.eta * self.eta)
        for i in range(N):
            if rho[i] < -1e-8:
                return -1
        self._speeds(rho, m)
        self.fft.forward(rho, &self.rho_h[0])
        for j in range(dim):
            self.fft.forward(&m[j * N], &self.m_h[j, 0])
        for i in range(M):
            self.acc[i] = 0.0
        for j in range(dim):
            for i in range(M):
                self.acc[i] = self.acc[i] + 1j * self.g.kk[j, i] * self.m_h[j, i]
        self.fft.backward(&self.acc[0], drho)
        for i in range(N):
            drho[i] = -inv * drho[i]
            self.p[i] = self.pot.p(rho[i])
        for j in range(dim):
            for k in range(j, dim):
                for i in range(N):
                    self.tmp[i] = m[j * N + i] * self.u[k, i]
                    if j == k:
                        self.tmp[i] += self.p[i]
                self.fft.forward(&self.tmp[0], &self.flux_h[self.fidx(j, k), 0])
        self._dissipation(m)
        for k in range(dim):
            for i in range(M):
                self.acc[i] = 0.0
            for j in range(dim):
                for i in range(M):
                    self.acc[i] = self.acc[i] + 1j * self.g.kk[j, i] * self.flux_h[self.fidx(k, j), i]
            self.fft.backward(&self.acc[0], &dm[k * N])
            for i in range(M):
                self.tmp_h[i] = 1j * self.g.kk[k, i] * self.hat[i] * self.rho_h[i]
            self.fft.backward(&self.tmp_h[0], &self.tmp[0])
            for i in range(N):
                dm[k * N + i] = -inv * (dm[k * N + i] - self.diss[k, i]) + force * rho[i] * self.tmp[i]
        return 0

    def rhs(self, rho, m):
        r = np.ascontiguousarray(rho, dtype=float)
        shape = r.shape
        rr = r.ravel().copy()
        mm = np.ascontiguousarray(m, dtype=float).reshape(self.g.dim, -1).copy()
        dr = np.zeros_like(rr)
        dmm = np.zeros_like(mm)
        cdef double[::1] rv = rr, drv = dr
        cdef double[:, ::1] mv = mm, dmv = dmm
        if self._rhs(&rv[0], &mv[0, 0], &drv[0], &dmv[0, 0]) != 0:
            raise PositivityError(f"density dropped to {rr.min():.3e}")
        return dr.reshape(shape), dmm.reshape((self.g.dim,) + shape)

    def max_speed(self, rho, m):
        rr = np.ascontiguousarray(rho, dtype=float).ravel().copy()
        mm = np.ascontiguousarray(m, dtype=float).reshape(self.g.dim, -1).copy()
        cdef double[::1] rv = rr
        cdef double[:, ::1] mv = mm
        self._speeds(&rv[0], &mv[0, 0])
        return float(sum(np.max(np.asarray(self.a[j])) for j in range(self.g.dim)))

    def dissipation_flux(self, rho, m):
        rr = np.ascontiguousarray(rho, dtype=float).ravel().copy()
        mm = np.ascontiguousarray(m, dtype=float).reshape(self.g.dim, -1).copy()
        cdef double[::1] rv = rr
        cdef double[:, ::1] mv = mm
        self._speeds(&rv[0], &mv[0, 0])
        self._dissipation(&mv[0, 0])
        return np.asarray(self.diss).copy().reshape((self.g.dim,) + np.shape(rho))

    def advance(self, rho, m, double dt, long nsteps, double t0=0.0):
        arr = np.ascontiguousarray(rho, dtype=float)
        shape = arr.shape
        rs = arr.ravel().copy()
        ms = np.ascontiguousarray(m, dtype=float).reshape(self.g.dim, -1).copy()
        damp_arr = 1.0 / (1.0 + dt * self.delta_reg * (1.0 + np.asarray(self.g.ksq)) ** 3)
        cdef double[::1] r = rs, damp = damp_arr
        cdef double[:, ::1] mm = ms
        cdef int i, j, M = self.g.M, N = self.g.N, dim = self.g.dim, status = 0
        cdef long step
        cdef double half = exp(-0.5 * dt / (self.eps * self.eps))
        cdef double w = dt / (self.eps * self.eps) * self.g.cell
        cdef double rc, ke, diss = 0.0, total
        cdef bint reg = self.delta_reg > 0
        with nogil:
            for step in range(nsteps):
                ke = 0.0
                for i in range(N):
                    rc = r[i] if r[i] > self.floor else self.floor
                    for j in range(dim):
                        ke += mm[j, i] * mm[j, i] / rc
                diss += w * ke
                for j in range(dim):
                    for i in range(N):
                        mm[j, i] *= half
                if self.fluxes:
                    status = self._rhs(&r[0], &mm[0, 0], &self.d1[0], &self.e1[0, 0])
                    if status != 0:
                        break
                    for i in range(N):
                        self.r1[i] = r[i] + dt * self.d1[i]
                    for j in range(dim):
                        for i in range(N):
                            self.m1[j, i] = mm[j, i] + dt * self.e1[j, i]
                    status = self._rhs(&self.r1[0], &self.m1[0, 0], &self.d2[0], &self.e2[0, 0])
                    if status != 0:
                        break
                    for i in range(N):
                        r[i] = 0.5 * r[i] + 0.5 * (self.r1[i] + dt * self.d2[i])
                    for j in range(dim):
                        for i in range(N):
                            mm[j, i] = 0.5 * mm[j, i] + 0.5 * (self.m1[j, i] + dt * self.e2[j, i])
                for j in range(dim):
                    for i in range(N):
                        mm[j, i] *= half
                if reg:
                    for j in range(dim):
                        self.fft.forward(&mm[j, 0], &self.tmp_h[0])
                        for i in range(M):
                            self.tmp_h[i] = self.tmp_h[i] * damp[i]
                        self.fft.backward(&self.tmp_h[0], &mm[j, 0])
                total = 0.0
                for i in range(N):
                    total += r[i]
                    for j in range(dim):
                        total += mm[j, i]
                if not isfinite(total):
                    status = -2
                    break
        if status == -1:
            raise PositivityError(f"density dropped below -1e-8 at t={t0 + step * dt:.6g}")
        if status == -2:
            raise DivergenceError("Euler-Korteweg produced non-finite values", t0 + (step + 1) * dt)
        return rs.reshape(shape), ms.reshape((dim,) + shape), diss

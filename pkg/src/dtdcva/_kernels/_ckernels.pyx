# cython: language_level=3
"""Compiled simulation kernels.

Same signatures and iteration rules as ``_pykernels``; the hot loops run
without the GIL so chunks can be processed on worker threads.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fmin, asin, exp, expm1, fabs, log, log1p, sin, sqrt
from scipy.special.cython_special cimport log_ndtr, ndtr, ndtri

cnp.import_array()

BACKEND = "cython"

ctypedef unsigned long long u64

cdef extern from *:
    """
    static inline unsigned long long dtd_mulhilo(unsigned long long a, unsigned long long b,
                                                 unsigned long long *hi) {
        unsigned __int128 p = (unsigned __int128)a * b;
        *hi = (unsigned long long)(p >> 64);
        return (unsigned long long)p;
    }
    """
    u64 dtd_mulhilo(u64 a, u64 b, u64 *hi) nogil

cdef double TAIL_SWITCH = 8.0
cdef double BARRIER_EPS = 1e-12
cdef double TWO_PI = 6.283185307179586
cdef double SQRT_TWO_PI = 2.5066282746310002

cdef double GL6_X[6]
cdef double GL6_W[6]
cdef double GL12_X[12]
cdef double GL12_W[12]
cdef double GL20_X[20]
cdef double GL20_W[20]


def _load_nodes():
    from dtdcva._kernels._pykernels import GL_NODES, GL_WEIGHTS
    cdef int i
    for i in range(6):
        GL6_X[i] = GL_NODES[6][i]
        GL6_W[i] = GL_WEIGHTS[6][i]
    for i in range(12):
        GL12_X[i] = GL_NODES[12][i]
        GL12_W[i] = GL_WEIGHTS[12][i]
    for i in range(20):
        GL20_X[i] = GL_NODES[20][i]
        GL20_W[i] = GL_WEIGHTS[20][i]


_load_nodes()


cdef inline double _ndtr(double x) noexcept nogil:
    return ndtr(x)


cdef inline double _log_ndtr(double x) noexcept nogil:
    return log_ndtr(x)


# --------------------------------------------------------------------------
# Philox4x64-10
# --------------------------------------------------------------------------

cdef inline void _philox(u64 *c, u64 k0, u64 k1) noexcept nogil:
    cdef u64 hi0, hi1, lo0, lo1
    cdef int r
    for r in range(10):
        lo0 = dtd_mulhilo(<u64>0xD2E7470EE14C6C93ULL, c[0], &hi0)
        lo1 = dtd_mulhilo(<u64>0xCA5A826395121157ULL, c[2], &hi1)
        c[0] = hi1 ^ c[1] ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0
        k0 = k0 + <u64>0x9E3779B97F4A7C15ULL
        k1 = k1 + <u64>0xBB67AE8584CAA73BULL


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 block function on uint64 counter arrays."""
    a0, a1, a2, a3 = (np.array(c, dtype=np.uint64) for c in np.broadcast_arrays(c0, c1, c2, c3))
    cdef Py_ssize_t n = a0.size, i
    o0 = np.empty(n, dtype=np.uint64)
    o1 = np.empty(n, dtype=np.uint64)
    o2 = np.empty(n, dtype=np.uint64)
    o3 = np.empty(n, dtype=np.uint64)
    cdef u64[::1] v0 = a0.ravel(), v1 = a1.ravel(), v2 = a2.ravel(), v3 = a3.ravel()
    cdef u64[::1] w0 = o0, w1 = o1, w2 = o2, w3 = o3
    cdef u64 key0 = <u64>(k0 & 0xFFFFFFFFFFFFFFFF), key1 = <u64>(k1 & 0xFFFFFFFFFFFFFFFF)
    cdef u64 c[4]
    with nogil:
        for i in range(n):
            c[0] = v0[i]; c[1] = v1[i]; c[2] = v2[i]; c[3] = v3[i]
            _philox(c, key0, key1)
            w0[i] = c[0]; w1[i] = c[1]; w2[i] = c[2]; w3[i] = c[3]
    shape = a0.shape
    return o0.reshape(shape), o1.reshape(shape), o2.reshape(shape), o3.reshape(shape)


def uniforms(seed, scen, long bucket, long stream, long n, long first_block=0):
    """Open-interval uniforms keyed by (scenario, bucket, stream, block)."""
    cdef u64[::1] sc = np.ascontiguousarray(scen, dtype=np.uint64).ravel()
    cdef Py_ssize_t m = sc.shape[0], i, j, col
    cdef long nblocks = (n + 3) // 4
    out = np.empty((m, 4 * nblocks))
    cdef double[:, ::1] o = out
    cdef u64 key0 = <u64>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef u64 c[4]
    with nogil:
        for i in range(m):
            for j in range(nblocks):
                c[0] = <u64>(first_block + j)
                c[1] = <u64>bucket
                c[2] = sc[i]
                c[3] = <u64>stream
                _philox(c, key0, 0)
                for col in range(4):
                    o[i, 4 * j + col] = (<double>(c[col] >> 12) + 0.5) * 2.220446049250313e-16
    return out[:, :n]


# --------------------------------------------------------------------------
# Deep-tail inverse normal
# --------------------------------------------------------------------------

cdef inline double _tail_kernel(double q, double arg) noexcept nogil:
    cdef double a = q * q - 2.0 * log(arg)
    return sqrt(a - (1.0 - 1.0 / a) * log(a))


cdef inline double _threshold(double q, double pd) noexcept nogil:
    if q >= TAIL_SWITCH:
        return _tail_kernel(q, 2.0 / q)
    return -ndtri(pd)


def tail_kernel(q, arg):
    a = np.asarray(q, dtype=float) ** 2 - 2.0 * np.log(arg)
    return np.sqrt(a - (1.0 - 1.0 / a) * np.log(a))


def survival_threshold(q, pd):
    qa, pa = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(pd, dtype=float))
    shape = qa.shape
    cdef const double[::1] qv = np.ascontiguousarray(qa).ravel(), pv = np.ascontiguousarray(pa).ravel()
    out = np.empty(qv.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(qv.shape[0]):
            o[i] = _threshold(qv[i], pv[i])
    return out.reshape(shape)


# --------------------------------------------------------------------------
# Transition root solve
# --------------------------------------------------------------------------

cdef double QUAD_SWITCH = 2.0


cdef inline double _lower_mass(double w, double a) noexcept nogil:
    cdef double acc = 0.0, v
    cdef int i
    if w * (a if a > 1.0 else 1.0) < QUAD_SWITCH:
        for i in range(12):
            v = 0.5 * w * GL12_X[i]
            acc += GL12_W[i] * (exp(-0.5 * (v - a) * (v - a)) * -expm1(-2.0 * a * v))
        return 0.5 * w * acc / SQRT_TWO_PI
    return (_ndtr(w - a) - _ndtr(-a)) - (_ndtr(-a) - _ndtr(-w - a))


cdef inline double _small_guess(double u, double a) noexcept nogil:
    cdef double lg, y
    if a < 1e-8:
        a = 1e-8
    lg = log(u) + log(0.5 * a) + 0.5 * a * a + 0.5 * log(TWO_PI)
    if lg < 30.0:
        y = exp(lg)
        return log1p(y + sqrt(y * (y + 2.0))) / a
    return (lg + log(2.0)) / a


cdef inline double _advance_one(double x, double s, double z, int max_iter, bint *dead) noexcept nogil:
    cdef double a = x / s
    cdef double pd = 2.0 * _ndtr(-a)
    cdef double tail = _ndtr(-z)
    cdef double u, target, w, lo, hi, f, g, wn, tol, sg
    cdef bint upper
    cdef int it
    if tail <= pd:
        dead[0] = True
        return 0.0
    dead[0] = False
    u = _ndtr(z)
    upper = u > 0.5 * (1.0 - pd)
    if upper:
        target = tail - pd
        w = a - ndtri(target if target > 1e-300 else 1e-300)
    else:
        target = u
        w = u + _ndtr(-a)
        w = a + ndtri(w if w < 1.0 - 1e-16 else 1.0 - 1e-16)
        sg = _small_guess(u, a)
        if sg * (a if a > 1.0 else 1.0) < QUAD_SWITCH:
            w = sg
    lo = 0.0
    hi = a + 40.0
    if not (w > lo and w < hi):
        w = 0.5 * (lo + hi)
    if u <= 0.0:
        return BARRIER_EPS
    for it in range(max_iter):
        if upper:
            f = target - (_ndtr(a - w) - _ndtr(-a - w))
        else:
            f = _lower_mass(w, a) - target
        g = exp(-0.5 * (w - a) * (w - a)) * -expm1(-2.0 * a * w) / SQRT_TWO_PI
        if f < 0.0:
            lo = w
        elif f > 0.0:
            hi = w
        else:
            break
        if g > 0.0:
            wn = w - f / g
        else:
            wn = lo - 1.0
        if not (wn > lo and wn < hi):
            wn = 0.5 * (lo + hi)
        tol = 1e-14 * w + 1e-300
        if fabs(wn - w) <= tol or hi - lo <= tol:
            w = wn
            break
        w = wn
    w = w * s
    return w if w > BARRIER_EPS else BARRIER_EPS


def advance(x, s, z, int max_iter=200):
    """Advance scaled distances-to-default over one bucket (see ``_pykernels.advance``)."""
    xa, sa, za = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s, dtype=float), np.asarray(z, dtype=float))
    shape = xa.shape
    cdef const double[::1] xv = np.ascontiguousarray(xa).ravel()
    cdef const double[::1] sv = np.ascontiguousarray(sa).ravel()
    cdef const double[::1] zv = np.ascontiguousarray(za).ravel()
    cdef Py_ssize_t n = xv.shape[0], i
    xn = np.empty(n)
    dead = np.empty(n, dtype=np.bool_)
    cdef double[::1] o = xn
    cdef cnp.npy_bool[::1] d = dead.view(np.uint8)
    cdef bint flag
    with nogil:
        for i in range(n):
            o[i] = _advance_one(xv[i], sv[i], zv[i], max_iter, &flag)
            d[i] = flag
    return xn.reshape(shape), dead.reshape(shape)


# --------------------------------------------------------------------------
# Conditional bucket draws
# --------------------------------------------------------------------------

def conditional_pair(q_d, pd_d, q_s, pd_s, double rho, u_d, u_s, u_a):
    """One accept/reject proposal of (defaulting, surviving) copula scores."""
    arrs = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (q_d, pd_d, q_s, pd_s, u_d, u_s, u_a)))
    shape = arrs[0].shape
    cdef const double[::1] qd = np.ascontiguousarray(arrs[0]).ravel()
    cdef const double[::1] pdd = np.ascontiguousarray(arrs[1]).ravel()
    cdef const double[::1] qs = np.ascontiguousarray(arrs[2]).ravel()
    cdef const double[::1] pds = np.ascontiguousarray(arrs[3]).ravel()
    cdef const double[::1] ud = np.ascontiguousarray(arrs[4]).ravel()
    cdef const double[::1] us = np.ascontiguousarray(arrs[5]).ravel()
    cdef const double[::1] ua = np.ascontiguousarray(arrs[6]).ravel()
    cdef Py_ssize_t n = qd.shape[0], i
    yd_out = np.empty(n)
    ys_out = np.empty(n)
    acc_out = np.empty(n, dtype=np.bool_)
    cdef double[::1] yd = yd_out, ys = ys_out
    cdef cnp.npy_bool[::1] acc = acc_out.view(np.uint8)
    cdef double l22 = sqrt(1.0 - rho * rho)
    cdef double thr_d, thr_s, y, z, xi, ratio, zb
    with nogil:
        for i in range(n):
            thr_d = _threshold(qd[i], pdd[i])
            thr_s = _threshold(qs[i], pds[i])
            if qd[i] >= TAIL_SWITCH:
                y = _tail_kernel(qd[i], 2.0 * ud[i] / qd[i])
            else:
                y = -ndtri(ud[i] * pdd[i])
            z = (thr_s - rho * y) / l22
            if z <= -TAIL_SWITCH:
                # the asymptotic may overshoot the truncation point
                xi = fmin(-_tail_kernel(-z, us[i] / -z), z)
            else:
                xi = ndtri(us[i] * _ndtr(z))
            yd[i] = y
            ys[i] = rho * y + l22 * xi
            if rho > 0.0:
                zb = (thr_s - rho * thr_d) / l22
                ratio = exp(_log_ndtr(z) - _log_ndtr(zb))
            elif rho < 0.0:
                ratio = _ndtr(z)
            else:
                ratio = 1.0
            acc[i] = ua[i] <= ratio
    return yd_out.reshape(shape), ys_out.reshape(shape), acc_out.reshape(shape)


# --------------------------------------------------------------------------
# Bivariate normal (upper orthant)
# --------------------------------------------------------------------------

cdef double _bvnu_one(double h, double k, double r) noexcept nogil:
    cdef double *x
    cdef double *w
    cdef int ng, i
    cdef double hk, hs, asr, sn, bvn, as_, a, bs, c, d, b, sp, xs, rs, ep, asr2, span
    if r == 0.0:
        return _ndtr(-h) * _ndtr(-k)
    if fabs(r) < 0.3:
        x = GL6_X; w = GL6_W; ng = 6
    elif fabs(r) < 0.75:
        x = GL12_X; w = GL12_W; ng = 12
    else:
        x = GL20_X; w = GL20_W; ng = 20
    hk = h * k
    bvn = 0.0
    if fabs(r) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * asin(r)
        for i in range(ng):
            sn = sin(asr * x[i])
            bvn += w[i] * exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / TWO_PI + _ndtr(-h) * _ndtr(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if fabs(r) < 1.0:
            as_ = 1.0 - r * r
            a = sqrt(as_)
            bs = (h - k) * (h - k)
            asr = -0.5 * (bs / as_ + hk)
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            if asr > -100.0:
                bvn = a * exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_)
            if hk > -100.0:
                b = sqrt(bs)
                sp = SQRT_TWO_PI * _ndtr(-b / a)
                bvn = bvn - exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = 0.5 * a
            sp = 0.0
            for i in range(ng):
                xs = (a * x[i]) * (a * x[i])
                asr2 = -0.5 * (bs / xs + hk)
                if asr2 > -100.0:
                    rs = sqrt(1.0 - xs)
                    ep = exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs
                    sp += w[i] * exp(asr2) * ((1.0 + c * xs * (1.0 + 5.0 * d * xs)) - ep)
            bvn = (a * sp - bvn) / TWO_PI
        if r > 0.0:
            bvn = bvn + _ndtr(-(h if h > k else k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0.0:
                span = _ndtr(k) - _ndtr(h)
            else:
                span = _ndtr(-h) - _ndtr(-k)
            bvn = span - bvn
    if bvn < 0.0:
        return 0.0
    if bvn > 1.0:
        return 1.0
    return bvn


def bvnu(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r."""
    ha, ka, ra = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float))
    shape = ha.shape
    cdef const double[::1] hv = np.ascontiguousarray(ha).ravel()
    cdef const double[::1] kv = np.ascontiguousarray(ka).ravel()
    cdef const double[::1] rv = np.ascontiguousarray(ra).ravel()
    out = np.empty(hv.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(hv.shape[0]):
            o[i] = _bvnu_one(hv[i], kv[i], rv[i])
    return out.reshape(shape)


def bvn_lower(a, b, r):
    """P(X <= a, Y <= b) for a standard bivariate normal with correlation r."""
    return bvnu(-np.asarray(a, dtype=float), -np.asarray(b, dtype=float), r)


# --------------------------------------------------------------------------
# CDS repricing
# --------------------------------------------------------------------------

def cds_unit_value(x, inv_sd, df, accrual, double recovery, double spread):
    """Protection-buyer value per unit notional (see ``_pykernels.cds_unit_value``)."""
    xa = np.asarray(x, dtype=float)
    shape = xa.shape
    cdef const double[::1] xv = np.ascontiguousarray(xa).ravel()
    cdef const double[::1] iv = np.ascontiguousarray(inv_sd, dtype=float).ravel()
    cdef const double[::1] dv = np.ascontiguousarray(df, dtype=float).ravel()
    cdef const double[::1] av = np.ascontiguousarray(accrual, dtype=float).ravel()
    cdef Py_ssize_t n = xv.shape[0], m = iv.shape[0], i, kk
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double acc, prev, pd
    with nogil:
        for i in range(n):
            acc = 0.0
            prev = 0.0
            for kk in range(m):
                pd = 2.0 * _ndtr(-xv[i] * iv[kk])
                acc = acc + dv[kk] * ((1.0 - recovery) * (pd - prev) - spread * av[kk] * (1.0 - 0.5 * (prev + pd)))
                prev = pd
            o[i] = acc
    return out.reshape(shape)

"""Pure numpy implementation of the simulation kernels.

Every function here has a twin with an identical signature in
``_ckernels.pyx``.  The two are kept numerically aligned (same special
functions, same iteration rules) so that a simulation gives the same answer,
to rounding, whichever backend is loaded.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

BACKEND = "python"

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = 0x9E3779B97F4A7C15
_PHILOX_W1 = 0xBB67AE8584CAA73B

TAIL_SWITCH = 8.0
BARRIER_EPS = 1e-12
_TWO_PI = 2.0 * math.pi
_SQRT_TWO_PI = math.sqrt(_TWO_PI)

# Gauss-Legendre nodes on (0, 2) and weights, orders 6, 12, 20 (half-sets mirrored)
_GL_X = {
    6: [0.9324695142031522, 0.6612093864662647, 0.2386191860831970],
    12: [0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
         0.5873179542866171, 0.3678314989981802, 0.1252334085114692],
    20: [0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
         0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
         0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
         0.07652652113349733],
}
_GL_W = {
    6: [0.1713244923791705, 0.3607615730481384, 0.4679139345726904],
    12: [0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
         0.2031674267230659, 0.2334925365383547, 0.2491470458134029],
    20: [0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
         0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
         0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
         0.1527533871307259],
}
GL_NODES = {n: np.array([1.0 - v for v in x] + [1.0 + v for v in x]) for n, x in _GL_X.items()}
GL_WEIGHTS = {n: np.array(w + w) for n, w in _GL_W.items()}


# --------------------------------------------------------------------------
# Counter-based random numbers (Philox4x64-10)
# --------------------------------------------------------------------------

def _mulhilo(m: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a_lo, a_hi = m & _M32, m >> _S32
    b_lo, b_hi = b & _M32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _M32) + (hl & _M32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, m * b


def philox4x64(c0, c1, c2, c3, k0: int, k1: int):
    """Ten-round Philox4x64 block function on uint64 counter arrays."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in np.broadcast_arrays(c0, c1, c2, c3))
    key0, key1 = k0 & 0xFFFFFFFFFFFFFFFF, k1 & 0xFFFFFFFFFFFFFFFF
    with np.errstate(over="ignore"):
        for r in range(10):
            hi0, lo0 = _mulhilo(_PHILOX_M0, c0)
            hi1, lo1 = _mulhilo(_PHILOX_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ np.uint64(key0), lo1, hi0 ^ c3 ^ np.uint64(key1), lo0
            key0 = (key0 + _PHILOX_W0) & 0xFFFFFFFFFFFFFFFF
            key1 = (key1 + _PHILOX_W1) & 0xFFFFFFFFFFFFFFFF
    return c0, c1, c2, c3


def uniforms(seed: int, scen: np.ndarray, bucket: int, stream: int, n: int, first_block: int = 0) -> np.ndarray:
    """Open-interval uniforms keyed by (scenario, bucket, stream, block).

    Returns an array of shape ``(len(scen), n)``; block ``first_block + j``
    supplies columns ``4j .. 4j+3``.
    """
    scen = np.asarray(scen, dtype=np.uint64)
    nblocks = (n + 3) // 4
    out = np.empty((scen.size, 4 * nblocks))
    for j in range(nblocks):
        words = philox4x64(np.uint64(first_block + j), np.uint64(bucket), scen, np.uint64(stream), seed, 0)
        for i, w in enumerate(words):
            out[:, 4 * j + i] = ((w >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52
    return out[:, :n]


# --------------------------------------------------------------------------
# Deep-tail inverse normal
# --------------------------------------------------------------------------

def tail_kernel(q, arg):
    a = q * q - 2.0 * np.log(arg)
    return np.sqrt(a - (1.0 - 1.0 / a) * np.log(a))


def survival_threshold(q: np.ndarray, pd: np.ndarray) -> np.ndarray:
    """N^-1(p_S) for p_S = 1 - pd, switching to the asymptotic form for q >= 8."""
    q = np.asarray(q, dtype=float)
    pd = np.asarray(pd, dtype=float)
    out = np.empty(np.broadcast(q, pd).shape)
    q, pd = np.broadcast_arrays(q, pd)
    deep = q >= TAIL_SWITCH
    out[deep] = tail_kernel(q[deep], 2.0 / q[deep])
    out[~deep] = -ndtri(pd[~deep])
    return out


# --------------------------------------------------------------------------
# Transition root solve
# --------------------------------------------------------------------------

QUAD_SWITCH = 2.0


def _lower_mass(w, a):
    """Survivor mass below w (in units of s), free of cancellation for small a*w."""
    out = np.empty_like(w)
    small = w * np.maximum(a, 1.0) < QUAD_SWITCH
    if small.any():
        ws, as_ = w[small], a[small]
        v = 0.5 * ws[:, None] * GL_NODES[12][None, :]
        dens = np.exp(-0.5 * (v - as_[:, None]) ** 2) * -np.expm1(-2.0 * as_[:, None] * v)
        out[small] = 0.5 * ws * (dens @ GL_WEIGHTS[12]) / _SQRT_TWO_PI
    big = ~small
    wb, ab = w[big], a[big]
    out[big] = (ndtr(wb - ab) - ndtr(-ab)) - (ndtr(-ab) - ndtr(-wb - ab))
    return out


def _small_guess(u, a):
    # invert F(w) ~ 2 phi(a) (cosh(a w) - 1) / a, valid for small w
    a = np.maximum(a, 1e-8)
    with np.errstate(divide="ignore"):
        lg = np.log(u) + np.log(0.5 * a) + 0.5 * a * a + 0.5 * math.log(_TWO_PI)
    y = np.exp(np.minimum(lg, 30.0))
    return np.where(lg < 30.0, np.log1p(y + np.sqrt(y * (y + 2.0))), lg + math.log(2.0)) / a


def advance(x, s, z, max_iter: int = 200):
    """Advance scaled distances-to-default over one bucket.

    ``x`` is the current state (lambda_t * y_t), ``s`` the square root of the
    bucket variance and ``z`` the copula score (u = N(z)).  Returns the new
    state and a default flag.  Survivors solve the transition-CDF equation by
    bracketed Newton iteration on w = x'/s.
    """
    x, s, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, s, z)))
    shape = x.shape
    x, s, z = (np.ravel(v) for v in (x, s, z))
    a = x / s
    pd = 2.0 * ndtr(-a)
    tail = ndtr(-z)
    dead = tail <= pd
    xn = np.zeros_like(x)

    idx = np.flatnonzero(~dead)
    if idx.size:
        av = a[idx]
        u = ndtr(z[idx])
        pdv = pd[idx]
        upper = u > 0.5 * (1.0 - pdv)
        target = np.where(upper, tail[idx] - pdv, u)
        w = np.empty_like(av)
        w[upper] = av[upper] - ndtri(np.maximum(target[upper], 1e-300))
        lw = ~upper
        w[lw] = av[lw] + ndtri(np.minimum(u[lw] + ndtr(-av[lw]), 1.0 - 1e-16))
        sg = _small_guess(u[lw], av[lw])
        w[lw] = np.where(sg * np.maximum(av[lw], 1.0) < QUAD_SWITCH, sg, w[lw])
        lo = np.zeros_like(av)
        hi = av + 40.0
        bad = ~((w > lo) & (w < hi))
        w[bad] = 0.5 * (lo[bad] + hi[bad])
        zero = u <= 0.0
        w[zero] = 0.0

        live = np.flatnonzero(~zero)
        for _ in range(max_iter):
            if live.size == 0:
                break
            wl, al, up = w[live], av[live], upper[live]
            tl = target[live]
            f = np.empty_like(wl)
            f[up] = tl[up] - (ndtr(al[up] - wl[up]) - ndtr(-al[up] - wl[up]))
            dn = ~up
            f[dn] = _lower_mass(wl[dn], al[dn]) - tl[dn]
            g = np.exp(-0.5 * (wl - al) ** 2) * -np.expm1(-2.0 * al * wl) / _SQRT_TWO_PI
            lol, hil = lo[live], hi[live]
            lol = np.where(f < 0.0, wl, lol)
            hil = np.where(f > 0.0, wl, hil)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                wn = wl - f / g
            outside = ~((wn > lol) & (wn < hil)) | ~(g > 0.0)
            wn = np.where(outside, 0.5 * (lol + hil), wn)
            tol = 1e-14 * wl + 1e-300
            done = (f == 0.0) | (np.abs(wn - wl) <= tol) | (hil - lol <= tol)
            w[live] = np.where(f == 0.0, wl, wn)
            lo[live], hi[live] = lol, hil
            live = live[~done]
        xn[idx] = np.maximum(w * s[idx], BARRIER_EPS)
    return xn.reshape(shape), dead.reshape(shape)


# --------------------------------------------------------------------------
# Conditional bucket draws
# --------------------------------------------------------------------------

def conditional_pair(q_d, pd_d, q_s, pd_s, rho: float, u_d, u_s, u_a):
    """One proposal of the (defaulting, surviving) copula scores.

    The defaulting name's score is drawn from its default tail, the surviving
    name's score from its conditional law truncated to the survival region,
    and ``u_a`` accepts the proposal with probability proportional to the
    survival mass given the defaulting score.  Accepted proposals follow the
    bivariate normal law restricted to {default_d, survive_s} exactly.
    """
    q_d, pd_d, q_s, pd_s, u_d, u_s, u_a = (
        np.asarray(v, dtype=float) for v in np.broadcast_arrays(q_d, pd_d, q_s, pd_s, u_d, u_s, u_a)
    )
    thr_d = survival_threshold(q_d, pd_d)
    thr_s = survival_threshold(q_s, pd_s)

    y_d = np.empty_like(q_d)
    deep = q_d >= TAIL_SWITCH
    y_d[deep] = tail_kernel(q_d[deep], 2.0 * u_d[deep] / q_d[deep])
    y_d[~deep] = -ndtri(u_d[~deep] * pd_d[~deep])

    l22 = math.sqrt(1.0 - rho * rho)
    z = (thr_s - rho * y_d) / l22
    xi = np.empty_like(z)
    deep = z <= -TAIL_SWITCH
    # the asymptotic may overshoot the truncation point
    xi[deep] = np.minimum(-tail_kernel(-z[deep], u_s[deep] / -z[deep]), z[deep])
    xi[~deep] = ndtri(u_s[~deep] * ndtr(z[~deep]))
    y_s = rho * y_d + l22 * xi

    if rho > 0.0:
        zb = (thr_s - rho * thr_d) / l22
        ratio = np.exp(log_ndtr(z) - log_ndtr(zb))
    elif rho < 0.0:
        ratio = ndtr(z)
    else:
        ratio = np.ones_like(z)
    return y_d, y_s, u_a <= ratio


# --------------------------------------------------------------------------
# Bivariate normal
# --------------------------------------------------------------------------

def _bvnu_moderate(h, k, r, order):
    x, w = GL_NODES[order], GL_WEIGHTS[order]
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = 0.5 * np.arcsin(r)
    sn = np.sin(asr[:, None] * x[None, :])
    bvn = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ w
    return bvn * asr / _TWO_PI + ndtr(-h) * ndtr(-k)


def _bvnu_high(h, k, r):
    x, w = GL_NODES[20], GL_WEIGHTS[20]
    neg = r < 0.0
    k = np.where(neg, -k, k)
    hk = h * k
    bvn = np.zeros_like(h)
    inner = np.abs(r) < 1.0
    if inner.any():
        hi, ki, ri, hki = h[inner], k[inner], r[inner], hk[inner]
        as_ = 1.0 - ri * ri
        a = np.sqrt(as_)
        bs = (hi - ki) ** 2
        asr = -0.5 * (bs / as_ + hki)
        c = (4.0 - hki) / 8.0
        d = (12.0 - hki) / 80.0
        with np.errstate(over="ignore", invalid="ignore"):
            b0 = np.where(asr > -100.0, a * np.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_), 0.0)
            b = np.sqrt(bs)
            sp = _SQRT_TWO_PI * ndtr(-b / a)
            b0 = b0 - np.where(hki > -100.0, np.exp(-0.5 * hki) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0), 0.0)
            a = 0.5 * a
            xs = (a[:, None] * x[None, :]) ** 2
            asr2 = -0.5 * (bs[:, None] / xs + hki[:, None])
            sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-0.5 * hki[:, None] * xs / (1.0 + rs) ** 2) / rs
            terms = np.where(asr2 > -100.0, np.exp(asr2) * (sp2 - ep), 0.0)
        bvn[inner] = (a * (terms @ w) - b0) / _TWO_PI
    out = np.empty_like(h)
    pos = ~neg
    out[pos] = bvn[pos] + ndtr(-np.maximum(h[pos], k[pos]))
    n1 = neg & (h >= k)
    out[n1] = -bvn[n1]
    n2 = neg & (h < k)
    hn, kn = h[n2], k[n2]
    span = np.where(hn < 0.0, ndtr(kn) - ndtr(hn), ndtr(-hn) - ndtr(-kn))
    out[n2] = span - bvn[n2]
    return out


def bvnu(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r."""
    h, k, r = (np.array(v, dtype=float) for v in np.broadcast_arrays(h, k, r))
    shape = h.shape
    h, k, r = h.ravel(), k.ravel(), r.ravel()
    out = np.empty_like(h)
    ar = np.abs(r)
    zero = r == 0.0
    out[zero] = ndtr(-h[zero]) * ndtr(-k[zero])
    for order, sel in (
        (6, (ar < 0.3) & ~zero),
        (12, (ar >= 0.3) & (ar < 0.75)),
        (20, (ar >= 0.75) & (ar < 0.925)),
    ):
        if sel.any():
            out[sel] = _bvnu_moderate(h[sel], k[sel], r[sel], order)
    sel = ar >= 0.925
    if sel.any():
        out[sel] = _bvnu_high(h[sel], k[sel], r[sel])
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_lower(a, b, r):
    """P(X <= a, Y <= b) for a standard bivariate normal with correlation r."""
    return bvnu(-np.asarray(a, dtype=float), -np.asarray(b, dtype=float), r)


# --------------------------------------------------------------------------
# CDS repricing on a scenario-conditional survival curve
# --------------------------------------------------------------------------

def cds_unit_value(x, inv_sd, df, accrual, recovery: float, spread: float):
    """Protection-buyer value per unit notional for each scenario state ``x``.

    ``inv_sd[k]`` is 1/sqrt(tbar(T_k) - tbar(t)) for the remaining payment
    dates, ``df`` the discount factors D(t, T_k) and ``accrual`` the period
    fractions.  Survival to the valuation date is 1.
    """
    x = np.asarray(x, dtype=float)
    inv_sd = np.asarray(inv_sd, dtype=float)
    df = np.asarray(df, dtype=float)
    accrual = np.asarray(accrual, dtype=float)
    out = np.zeros(x.shape)
    prev = np.zeros(x.shape)
    for kk in range(inv_sd.size):
        pd = 2.0 * ndtr(-x * inv_sd[kk])
        out += df[kk] * ((1.0 - recovery) * (pd - prev) - spread * accrual[kk] * (1.0 - 0.5 * (prev + pd)))
        prev = pd
    return out

# cython: language_level=3
"""Compiled sampler core.

Fused per-step kernels for both sampler families, driving whole chain
ensembles through a precomputed step plan.  Semantics replicate the
pure-NumPy engine (`_core_np`): identical noise-stream consumption,
identical update order, identical per-call gradient accounting, and the
same retirement rule (a chain whose candidate state turns non-finite keeps
its last finite state; the noise stream never skips).

Target gradients are evaluated inside the loop through an integer-coded
dispatch on :class:`slowfast.targets.CoreSpec`; the regression posterior
uses BLAS for its data-matrix products.  Heavy-tail fast dynamics are not
compiled — the backend routes those runs to the NumPy engine.
"""

from libc.math cimport exp, isfinite, log1p, sqrt

import numpy as np

from scipy.linalg.cython_blas cimport dgemm

# Must stay in lockstep with slowfast.targets.CORE_*; a unit test pins both.
cdef enum:
    T_GAUSSIAN = 0
    T_MOG = 1
    T_MOS = 2
    T_RINGS = 3
    T_FUNNEL = 4
    T_DOUBLE_WELL = 5
    T_LOGREG = 6
    T_PHI4 = 7


# ---------------------------------------------------------------------------
# target gradient kernels
# ---------------------------------------------------------------------------

cdef class _Target:
    """Flat view of a CoreSpec plus per-run scratch buffers."""

    cdef int code
    cdef double[::1] sc
    cdef long[::1] iv
    cdef double[:, ::1] a0
    cdef double[::1] a1
    cdef double[:, ::1] zbuf   # (n, N) scratch for the regression logits
    cdef double[::1] kbuf      # (K,) scratch for mixture responsibilities

    def __init__(self, spec, int n_chains):
        self.code = spec.code
        if not T_GAUSSIAN <= self.code <= T_PHI4:
            raise ValueError(f"unknown target code {spec.code}")
        self.sc = np.ascontiguousarray(spec.scalars, dtype=np.float64)
        self.iv = np.ascontiguousarray(spec.ints, dtype=np.int64)
        self.a0 = np.ascontiguousarray(np.atleast_2d(spec.arr0), dtype=np.float64)
        self.a1 = np.ascontiguousarray(spec.arr1, dtype=np.float64)
        if self.code == T_LOGREG:
            self.zbuf = np.empty((n_chains, max(self.a0.shape[0], 1)))
        else:
            self.zbuf = np.empty((1, 1))
        self.kbuf = np.empty(max(self.a0.shape[0], self.a0.shape[1], 1))


cdef void _grad_gaussian(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef double inv = t.sc[0]
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            out[i, j] = -inv * X[i, j]


cdef void _grad_mog(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], K = t.a0.shape[0]
    cdef double inv = t.sc[0]
    cdef double sq, diff, m, w, wsum
    for i in range(n):
        m = -1e300
        for k in range(K):
            sq = 0.0
            for j in range(d):
                diff = X[i, j] - t.a0[k, j]
                sq += diff * diff
            t.kbuf[k] = t.a1[k] - 0.5 * sq * inv
            if t.kbuf[k] > m:
                m = t.kbuf[k]
        wsum = 0.0
        for k in range(K):
            t.kbuf[k] = exp(t.kbuf[k] - m)
            wsum += t.kbuf[k]
        for j in range(d):
            out[i, j] = 0.0
        for k in range(K):
            w = t.kbuf[k] / wsum
            for j in range(d):
                out[i, j] -= w * (X[i, j] - t.a0[k, j]) * inv


cdef void _grad_mos(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], K = t.a0.shape[0]
    cdef double a = t.sc[0]
    cdef double sq, diff, m, w, wsum, scale
    for i in range(n):
        m = -1e300
        for k in range(K):
            sq = 0.0
            for j in range(d):
                diff = X[i, j] - t.a0[k, j]
                sq += diff * diff
            t.kbuf[k] = sq
            sq = -0.5 * (a + d) * log1p(sq / a)
            if sq > m:
                m = sq
        wsum = 0.0
        for k in range(K):
            sq = exp(-0.5 * (a + d) * log1p(t.kbuf[k] / a) - m)
            wsum += sq
            # reuse the slot: responsibility numerator over its t-radius
            t.kbuf[k] = sq / (a + t.kbuf[k])
        for j in range(d):
            out[i, j] = 0.0
        for k in range(K):
            w = t.kbuf[k] / wsum
            for j in range(d):
                out[i, j] -= (a + d) * w * (X[i, j] - t.a0[k, j])


cdef void _grad_rings(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, k
    cdef Py_ssize_t n = X.shape[0], K = t.a0.shape[1]
    cdef double inv = t.sc[0]
    cdef double r, rc, dev, m, w, wsum, dlogp, scale
    for i in range(n):
        r = sqrt(X[i, 0] * X[i, 0] + X[i, 1] * X[i, 1])
        rc = r if r > 1e-12 else 1e-12
        m = -1e300
        for k in range(K):
            dev = rc - t.a0[0, k]
            t.kbuf[k] = -0.5 * dev * dev * inv
            if t.kbuf[k] > m:
                m = t.kbuf[k]
        wsum = 0.0
        dlogp = 0.0
        for k in range(K):
            w = exp(t.kbuf[k] - m)
            wsum += w
            dlogp += w * (-(rc - t.a0[0, k]) * inv)
        scale = (dlogp / wsum - 1.0 / rc) / rc
        out[i, 0] = scale * X[i, 0]
        out[i, 1] = scale * X[i, 1]


cdef void _grad_funnel(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef double inv_eta2 = t.sc[0]
    cdef double e, sq
    for i in range(n):
        e = exp(-X[i, 0])
        sq = 0.0
        for j in range(1, d):
            sq += X[i, j] * X[i, j]
            out[i, j] = -X[i, j] * e
        out[i, 0] = -X[i, 0] * inv_eta2 + 0.5 * sq * e - 0.5 * (d - 1)


cdef void _grad_double_well(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t m = t.iv[0]
    cdef double delta = t.sc[0], w
    for i in range(n):
        for j in range(m):
            w = X[i, j]
            out[i, j] = -4.0 * w * (w * w - delta)
        for j in range(m, d):
            out[i, j] = -2.0 * X[i, j]


cdef void _grad_logreg(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef int n = <int> X.shape[0]
    cdef int dim = <int> X.shape[1]
    cdef int df = dim - 1
    cdef int N = <int> t.a0.shape[0]
    cdef double inv_b = t.sc[0]
    cdef double one = 1.0, zero = 0.0
    cdef char * TT = b'T'
    cdef char * NN = b'N'
    cdef double z, rsum
    if N == 0:
        for i in range(n):
            for j in range(df):
                out[i, j] = -X[i, j]
            out[i, df] = -inv_b * X[i, df]
        return
    # logits (n, N): Z^T = data . params^T, both read through Fortran views
    dgemm(TT, NN, &N, &n, &df, &one, &t.a0[0, 0], &df, &X[0, 0], &dim,
          &zero, &t.zbuf[0, 0], &N)
    for i in range(n):
        for j in range(N):
            z = t.zbuf[i, j] + X[i, df]       # + intercept
            t.zbuf[i, j] = t.a1[j] - 1.0 / (1.0 + exp(-z))
    # weight block: out[:, :df] = resid . data  (then subtract the prior pull)
    dgemm(NN, NN, &df, &n, &N, &one, &t.a0[0, 0], &df, &t.zbuf[0, 0], &N,
          &zero, &out[0, 0], &dim)
    for i in range(n):
        rsum = 0.0
        for j in range(N):
            rsum += t.zbuf[i, j]
        for j in range(df):
            out[i, j] -= X[i, j]
        out[i, df] = rsum - inv_b * X[i, df]


cdef void _grad_phi4(_Target t, double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef double ad = t.sc[0], beta = t.sc[1], h = t.sc[2]
    cdef double left, right, lap
    for i in range(n):
        for j in range(d):
            left = X[i, j - 1] if j > 0 else 0.0
            right = X[i, j + 1] if j < d - 1 else 0.0
            lap = 2.0 * X[i, j] - left - right
            out[i, j] = -beta * (ad * lap
                                 - (1.0 / ad) * (1.0 - X[i, j] * X[i, j]) * X[i, j]
                                 + h)


cdef void _grad(_Target t, double[:, ::1] X, double[:, ::1] out):
    if t.code == T_GAUSSIAN:
        _grad_gaussian(t, X, out)
    elif t.code == T_MOG:
        _grad_mog(t, X, out)
    elif t.code == T_MOS:
        _grad_mos(t, X, out)
    elif t.code == T_RINGS:
        _grad_rings(t, X, out)
    elif t.code == T_FUNNEL:
        _grad_funnel(t, X, out)
    elif t.code == T_DOUBLE_WELL:
        _grad_double_well(t, X, out)
    elif t.code == T_LOGREG:
        _grad_logreg(t, X, out)
    elif t.code == T_PHI4:
        _grad_phi4(t, X, out)


def grad_batch(spec, X):
    """Gradient of the coded target on an (n, d) batch (diagnostic entry)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef _Target t = _Target(spec, X.shape[0])
    out = np.empty_like(X)
    _grad(t, X, out)
    return out


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

cdef inline void _scaled_copy(double[:, ::1] src, double c, double[:, ::1] dst):
    cdef Py_ssize_t i, j
    for i in range(src.shape[0]):
        for j in range(src.shape[1]):
            dst[i, j] = c * src[i, j]


cdef void _fast_drift_rows(
        _Target tgt, double[:, ::1] K, double[:, ::1] xref,
        double ct, double cnu, int student, double alpha,
        double[:, ::1] TI, double[:, ::1] FG, double[:, ::1] D):
    """Fast-variable drift: annealed target score plus base pull toward x.

    One gradient call; the caller owns the eval count.
    """
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = K.shape[0], d = K.shape[1]
    cdef double z, sq, s
    _scaled_copy(K, ct, TI)
    _grad(tgt, TI, FG)
    if student:
        for i in range(n):
            sq = 0.0
            for j in range(d):
                z = cnu * (K[i, j] - xref[i, j])
                TI[i, j] = z
                sq += z * z
            s = -(alpha + d) / (alpha + sq)
            for j in range(d):
                D[i, j] = ct * FG[i, j] + cnu * s * TI[i, j]
    else:
        for i in range(n):
            for j in range(d):
                z = cnu * (K[i, j] - xref[i, j])
                D[i, j] = ct * FG[i, j] - cnu * z


cdef long _srock_fast(
        _Target tgt, double[:, ::1] y, double[:, ::1] xref,
        double ct, double cnu, int student, double alpha,
        double heff, double[::1] mu, double[::1] nu, double[::1] kap,
        double[:, :] xi,
        double[:, ::1] K, double[:, ::1] Kp, double[:, ::1] TI,
        double[:, ::1] FG, double[:, ::1] D, double[:, ::1] yn):
    """Stabilized fast relaxation; returns the gradient-call count (= stages)."""
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1]
    cdef int s = <int> mu.shape[0]
    cdef int st
    cdef double[:, ::1] tmp
    for i in range(n):
        for j in range(d):
            Kp[i, j] = y[i, j]
    _fast_drift_rows(tgt, Kp, xref, ct, cnu, student, alpha, TI, FG, D)
    for i in range(n):
        for j in range(d):
            K[i, j] = Kp[i, j] + mu[0] * heff * D[i, j]
    for st in range(1, s):
        _fast_drift_rows(tgt, K, xref, ct, cnu, student, alpha, TI, FG, D)
        for i in range(n):
            for j in range(d):
                D[i, j] = mu[st] * heff * D[i, j] + nu[st] * K[i, j] + kap[st] * Kp[i, j]
        tmp = Kp
        Kp = K
        K = D
        D = tmp
    cdef double sq2 = sqrt(2.0 * heff)
    for i in range(n):
        for j in range(d):
            yn[i, j] = K[i, j] + sq2 * xi[i, j]
    return s


cdef long _srock_posterior(
        _Target tgt, double[:, ::1] y, double[:, ::1] xh, double[:, ::1] vk,
        double a, double b, double m1, double m3,
        double heff, double[::1] mu, double[::1] nu, double[::1] kap,
        double[:, :] xi,
        double[:, ::1] K, double[:, ::1] Kp, double[:, ::1] FG,
        double[:, ::1] D, double[:, ::1] yn):
    """Fast relaxation toward the reverse-kernel conditional; returns evals."""
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1]
    cdef int s = <int> mu.shape[0]
    cdef int st
    cdef double[:, ::1] tmp
    for i in range(n):
        for j in range(d):
            Kp[i, j] = y[i, j]
    _grad(tgt, Kp, FG)
    for i in range(n):
        for j in range(d):
            D[i, j] = FG[i, j] + a * (xh[i, j] - m1 * Kp[i, j]) \
                + b * (vk[i, j] - m3 * Kp[i, j])
            K[i, j] = Kp[i, j] + mu[0] * heff * D[i, j]
    for st in range(1, s):
        _grad(tgt, K, FG)
        for i in range(n):
            for j in range(d):
                D[i, j] = mu[st] * heff * (FG[i, j]
                                           + a * (xh[i, j] - m1 * K[i, j])
                                           + b * (vk[i, j] - m3 * K[i, j])) \
                    + nu[st] * K[i, j] + kap[st] * Kp[i, j]
        tmp = Kp
        Kp = K
        K = D
        D = tmp
    cdef double sq2 = sqrt(2.0 * heff)
    for i in range(n):
        for j in range(d):
            yn[i, j] = K[i, j] + sq2 * xi[i, j]
    return s


cdef int _merge_rows(
        double[:, ::1] x, double[:, ::1] xn,
        double[:, ::1] v, double[:, ::1] vn, int under,
        double[:, ::1] y, double[:, ::1] yn,
        unsigned char[::1] alive, list aborts, int l) except -1:
    """Commit finite candidate rows; retire the rest.  Returns live count."""
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef int ok, count = 0
    for i in range(n):
        if not alive[i]:
            continue
        ok = 1
        for j in range(d):
            if not (isfinite(xn[i, j]) and isfinite(yn[i, j])):
                ok = 0
                break
            if under and not isfinite(vn[i, j]):
                ok = 0
                break
        if ok:
            count += 1
            for j in range(d):
                x[i, j] = xn[i, j]
                y[i, j] = yn[i, j]
            if under:
                for j in range(d):
                    v[i, j] = vn[i, j]
        else:
            alive[i] = 0
            aborts.append((l, <int> i))
    if count == 0:
        raise RuntimeError(f"all chains aborted by step {l}")
    return count


# ---------------------------------------------------------------------------
# annealed slow-fast engine
# ---------------------------------------------------------------------------

def run_almc(plan, x_in, v_in, y_in, spec, noise):
    """Compiled twin of ``_core_np.run_almc``.

    Returns (x, v, y, alive, aborts, steps_run, evals) with the gradient
    count accumulated locally (the caller credits the target's counter).
    """
    cfg = plan.cfg
    co = plan.srock
    cdef double[::1] mu = co.mu, nuv = co.nu, kap = co.kap
    cdef signed char[::1] branch = plan.branch
    cdef double[::1] ct = plan.ct
    cdef double[::1] cnu = plan.cnu
    cdef double[::1] hs = plan.h
    cdef double[::1] sq2h = plan.sq2h
    cdef double[::1] gam = plan.gamma
    cdef double heff = plan.heff
    cdef double mass = cfg.mass
    cdef int under = 0 if cfg.kind == "overdamped" else 1
    cdef int stop = plan.stop_after
    base = cfg.base
    cdef int student = 1 if base.kind == "student_t" else 0
    cdef double alpha = float(base.alpha) if student else 0.0

    x_arr = np.ascontiguousarray(x_in)
    y_arr = np.ascontiguousarray(y_in)
    v_arr = np.ascontiguousarray(v_in) if under else np.empty((0, 0))
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]

    cdef _Target tgt = _Target(spec, <int> n)
    alive_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] alive = alive_arr
    aborts = []
    cdef long evals = 0

    # scratch
    cdef double[:, ::1] SG = np.empty((n, d))
    cdef double[:, ::1] TI = np.empty((n, d))
    cdef double[:, ::1] FG = np.empty((n, d))
    cdef double[:, ::1] K = np.empty((n, d))
    cdef double[:, ::1] Kp = np.empty((n, d))
    cdef double[:, ::1] D = np.empty((n, d))
    cdef double[:, ::1] xn = np.empty((n, d))
    cdef double[:, ::1] yn = np.empty((n, d))
    cdef double[:, ::1] vn = np.empty((n, d)) if under else v_arr

    cdef int l, br
    cdef Py_ssize_t i, j
    cdef double h, z, sq, s_
    cdef double od = 0.0, on = 0.0, hm = 0.0
    cdef double[:, :, ::1] nb

    for l in range(stop):
        blk = noise.step_block(l)
        br = branch[l]
        h = hs[l]
        if h == 0.0:
            continue
        nb = blk
        if br == 2:  # warm: plain dynamics on the target, fast frozen
            _grad(tgt, x, SG)
            evals += 1
            if under:
                od = 1.0 - 0.5 * h * gam[l] / mass
                on = sqrt(h * gam[l])
                hm = h / mass
                for i in range(n):
                    for j in range(d):
                        z = od * v[i, j] + on * nb[0, i, j] + 0.5 * h * SG[i, j]
                        vn[i, j] = z
                        xn[i, j] = x[i, j] + hm * z
                _grad(tgt, xn, SG)
                evals += 1
                for i in range(n):
                    for j in range(d):
                        vn[i, j] = od * (vn[i, j] + 0.5 * h * SG[i, j]) \
                            + on * nb[2, i, j]
            else:
                for i in range(n):
                    for j in range(d):
                        xn[i, j] = x[i, j] + h * SG[i, j] + sq2h[l] * nb[0, i, j]
            for i in range(n):
                for j in range(d):
                    yn[i, j] = y[i, j]
            _merge_rows(x, xn, v, vn, under, y, yn, alive, aborts, l)
            continue

        # slow drift at the current state
        if br == 1:  # annealed target score read off the fast variable
            _scaled_copy(y, ct[l], TI)
            _grad(tgt, TI, SG)
            evals += 1
            for i in range(n):
                for j in range(d):
                    SG[i, j] = ct[l] * SG[i, j]
        else:        # base-noise score of the displacement x - y
            if student:
                for i in range(n):
                    sq = 0.0
                    for j in range(d):
                        z = cnu[l] * (x[i, j] - y[i, j])
                        TI[i, j] = z
                        sq += z * z
                    s_ = -(alpha + d) / (alpha + sq)
                    for j in range(d):
                        SG[i, j] = cnu[l] * s_ * TI[i, j]
            else:
                for i in range(n):
                    for j in range(d):
                        SG[i, j] = -cnu[l] * cnu[l] * (x[i, j] - y[i, j])

        if under:
            od = 1.0 - 0.5 * h * gam[l] / mass
            on = sqrt(h * gam[l])
            hm = h / mass
            for i in range(n):
                for j in range(d):
                    z = od * v[i, j] + on * nb[0, i, j] + 0.5 * h * SG[i, j]
                    vn[i, j] = z
                    xn[i, j] = x[i, j] + hm * z
        else:
            for i in range(n):
                for j in range(d):
                    xn[i, j] = x[i, j] + h * SG[i, j] + sq2h[l] * nb[0, i, j]

        evals += _srock_fast(tgt, y, xn, ct[l], cnu[l], student, alpha,
                             heff, mu, nuv, kap, nb[1], K, Kp, TI, FG, D, yn)

        if under:
            # second slow kick at the updated pair, then the closing pair
            if br == 1:
                _scaled_copy(yn, ct[l], TI)
                _grad(tgt, TI, SG)
                evals += 1
                for i in range(n):
                    for j in range(d):
                        SG[i, j] = ct[l] * SG[i, j]
            else:
                if student:
                    for i in range(n):
                        sq = 0.0
                        for j in range(d):
                            z = cnu[l] * (xn[i, j] - yn[i, j])
                            TI[i, j] = z
                            sq += z * z
                        s_ = -(alpha + d) / (alpha + sq)
                        for j in range(d):
                            SG[i, j] = cnu[l] * s_ * TI[i, j]
                else:
                    for i in range(n):
                        for j in range(d):
                            SG[i, j] = -cnu[l] * cnu[l] * (xn[i, j] - yn[i, j])
            for i in range(n):
                for j in range(d):
                    vn[i, j] = od * (vn[i, j] + 0.5 * h * SG[i, j]) \
                        + on * nb[2, i, j]

        _merge_rows(x, xn, v, vn, under, y, yn, alive, aborts, l)

    v_out = v_arr if under else None
    return x_arr, v_out, y_arr, alive_arr.astype(bool), aborts, stop, evals


# ---------------------------------------------------------------------------
# reverse-diffusion engine
# ---------------------------------------------------------------------------

def run_cdiff(plan, x_in, v_in, y_in, spec, noise):
    """Compiled twin of ``_core_np.run_cdiff``; same return contract as
    :func:`run_almc`."""
    co = plan.srock
    cdef double[::1] mu = co.mu, nuv = co.nu, kap = co.kap
    cdef double[::1] mh11 = plan.mh11, mh12 = plan.mh12
    cdef double[::1] mh21 = plan.mh21, mh22 = plan.mh22
    cdef double[::1] l11 = plan.l11, l21 = plan.l21, l22 = plan.l22
    cdef double[::1] m1 = plan.m1, m3 = plan.m3, r12 = plan.r12
    cdef double[::1] av = plan.a, bv = plan.b
    cdef double[::1] kick = plan.kick
    cdef double[::1] heff = plan.heff
    cdef int steps = plan.steps

    x_arr = np.ascontiguousarray(x_in)
    v_arr = np.ascontiguousarray(v_in)
    y_arr = np.ascontiguousarray(y_in)
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] v = v_arr
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]

    cdef _Target tgt = _Target(spec, <int> n)
    alive_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] alive = alive_arr
    aborts = []
    cdef long evals = 0

    cdef double[:, ::1] xh = np.empty((n, d))
    cdef double[:, ::1] vk = np.empty((n, d))
    cdef double[:, ::1] K = np.empty((n, d))
    cdef double[:, ::1] Kp = np.empty((n, d))
    cdef double[:, ::1] FG = np.empty((n, d))
    cdef double[:, ::1] D = np.empty((n, d))
    cdef double[:, ::1] xn = np.empty((n, d))
    cdef double[:, ::1] vn = np.empty((n, d))
    cdef double[:, ::1] yn = np.empty((n, d))

    cdef int l
    cdef Py_ssize_t i, j
    cdef double fmean, vh
    cdef double[:, :, ::1] nb

    for l in range(steps):
        blk = noise.step_block(l)
        nb = blk
        for i in range(n):
            for j in range(d):
                xh[i, j] = mh11[l] * x[i, j] + mh12[l] * v[i, j] \
                    + l11[l] * nb[0, i, j]
                vh = mh21[l] * x[i, j] + mh22[l] * v[i, j] \
                    + l21[l] * nb[0, i, j] + l22[l] * nb[1, i, j]
                fmean = m3[l] * y[i, j] + r12[l] * (xh[i, j] - m1[l] * y[i, j])
                vk[i, j] = vh - kick[l] * (vh - fmean)
        evals += _srock_posterior(tgt, y, xh, vk, av[l], bv[l], m1[l], m3[l],
                                  heff[l], mu, nuv, kap, nb[2],
                                  K, Kp, FG, D, yn)
        for i in range(n):
            for j in range(d):
                xn[i, j] = mh11[l] * xh[i, j] + mh12[l] * vk[i, j] \
                    + l11[l] * nb[3, i, j]
                vn[i, j] = mh21[l] * xh[i, j] + mh22[l] * vk[i, j] \
                    + l21[l] * nb[3, i, j] + l22[l] * nb[4, i, j]
        _merge_rows(x, xn, v, vn, 1, y, yn, alive, aborts, l)

    return x_arr, v_arr, y_arr, alive_arr.astype(bool), aborts, steps, evals

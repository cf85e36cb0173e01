"""Stiff integrator kernels.

Three numerical workhorses live here:

* SROCK — explicit stabilized (Chebyshev) steps for the fast process, whose
  stability interval grows like the square of the stage count, so a handful
  of drift evaluations absorbs the 1/eps stiffness;
* OBABO — symmetric half-kick splitting for underdamped (kinetic) Langevin
  slow dynamics;
* exponential-integrator matrices for the Gaussian-base annealed system,
  where the linear part of the drift can be integrated exactly.

Everything is a pure function of its inputs; noise always enters as an
explicit standard-normal array supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .schedules import (
    ANNEALED_NOISE_DRIFT,
    ANNEALED_TARGET_DRIFT,
    ClampedSchedule,
    schedule_value,
)


# ---------------------------------------------------------------------------
# SROCK
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SrockCoeffs:
    """Stage coefficients of the stabilized Chebyshev scheme.

    mu, nu, kap are arrays of length s; mu[0] is the first-stage increment
    weight and nu/kap are used from index 1 on (the two-stage recurrence
    starts at the second stage).
    """

    s: int
    eta: float
    w0: float
    w1: float
    mu: np.ndarray
    nu: np.ndarray
    kap: np.ndarray


def chebyshev_coeffs(s: int, eta: float = 0.05) -> SrockCoeffs:
    """Coefficients from the first-kind Chebyshev three-term recurrence.

    The damped evaluation point is w0 = 1 + eta/s^2; values and derivatives
    of T_i at w0 come from the stable recurrences rather than trig forms,
    which stay exact for w0 >= 1.
    """
    if s < 1:
        raise ValueError("need at least one stage")
    if eta < 0:
        raise ValueError("damping must be non-negative")
    w0 = 1.0 + eta / (s * s)
    # T_i(w0) and T_i'(w0) for i = 0..s
    T = np.empty(s + 1)
    dT = np.empty(s + 1)
    T[0], dT[0] = 1.0, 0.0
    if s >= 1:
        T[1], dT[1] = w0, 1.0
    for i in range(2, s + 1):
        T[i] = 2.0 * w0 * T[i - 1] - T[i - 2]
        dT[i] = 2.0 * T[i - 1] + 2.0 * w0 * dT[i - 1] - dT[i - 2]
    w1 = T[s] / dT[s]
    mu = np.zeros(s)
    nu = np.zeros(s)
    kap = np.zeros(s)
    mu[0] = w1 / w0
    for i in range(2, s + 1):
        mu[i - 1] = 2.0 * w1 * T[i - 1] / T[i]
        nu[i - 1] = 2.0 * w0 * T[i - 1] / T[i]
        kap[i - 1] = 1.0 - nu[i - 1]
    return SrockCoeffs(s=s, eta=eta, w0=w0, w1=w1, mu=mu, nu=nu, kap=kap)


def srock_step(drift, y, h_eff: float, coeffs: SrockCoeffs, noise):
    """One stabilized step: stage recursion on the drift, then diffusion.

    K0 = y; K1 = K0 + mu1*h*f(K0); Ki = mui*h*f(K_{i-1}) + nui*K_{i-1}
    + kapi*K_{i-2}; returns K_s + sqrt(2 h_eff) * noise.  The drift is
    evaluated exactly s times.  With s = 1 this is Euler-Maruyama.
    """
    if h_eff <= 0:
        raise ValueError("h_eff must be positive")
    K_prev = np.asarray(y, dtype=float)
    K = K_prev + coeffs.mu[0] * h_eff * drift(K_prev)
    for i in range(1, coeffs.s):
        K, K_prev = (
            coeffs.mu[i] * h_eff * drift(K) + coeffs.nu[i] * K + coeffs.kap[i] * K_prev,
            K,
        )
    return K + math.sqrt(2.0 * h_eff) * noise


# ---------------------------------------------------------------------------
# OBABO half-steps
# ---------------------------------------------------------------------------

def obabo_halfsteps(v, grad, gamma: float, mass: float, h: float, noise, closing: bool = False):
    """One (O, B) or closing (B, O) half-step pair of the OBABO splitting.

    Opening: v' = (1 - (h/2) Gamma / M) v + sqrt(h Gamma) xi, then
    v'' = v' + (h/2) grad.  The closing pair applies the same two maps in
    reverse order with fresh noise.  h = 0 is the identity map.
    """
    if h < 0:
        raise ValueError("step size must be nonnegative")
    od = 1.0 - 0.5 * h * gamma / mass
    on = math.sqrt(h * gamma)
    if closing:
        v = v + 0.5 * h * grad
        return od * v + on * noise
    v = od * v + on * noise
    return v + 0.5 * h * grad


# ---------------------------------------------------------------------------
# 2x2 matrix helpers
# ---------------------------------------------------------------------------

def expm2(M):
    """Closed-form exponential of a real 2x2 matrix.

    With mu = tr/2 and B = M - mu I (traceless, so B^2 = q^2 I with
    q^2 = B11^2 + B12 B21): e^M = e^mu (cosh(q) I + sinh(q)/q B), using the
    trigonometric branch when q^2 < 0.
    """
    M = np.asarray(M, dtype=float)
    mu = 0.5 * (M[0, 0] + M[1, 1])
    B = M - mu * np.eye(2)
    q2 = B[0, 0] * B[0, 0] + B[0, 1] * B[1, 0]
    if q2 >= 0.0:
        q = math.sqrt(q2)
        c = math.cosh(q)
        sc = math.sinh(q) / q if q > 1e-12 else 1.0 + q2 / 6.0
    else:
        w = math.sqrt(-q2)
        c = math.cos(w)
        sc = math.sin(w) / w if w > 1e-12 else 1.0 + q2 / 6.0
    return math.exp(mu) * (c * np.eye(2) + sc * B)


def psd_sqrt2(S, clip: float = 1e-12):
    """Principal square root of a symmetric PSD 2x2 matrix, in closed form.

    Eigenvalues inside [-clip, 0] are treated as exact zeros (quadrature
    round-off); anything more negative is an error.
    """
    S = np.asarray(S, dtype=float)
    tr = S[0, 0] + S[1, 1]
    det = S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]
    disc = max(tr * tr - 4.0 * det, 0.0)
    root = math.sqrt(disc)
    lo = 0.5 * (tr - root)
    hi = 0.5 * (tr + root)
    if lo < -clip:
        raise ValueError(f"matrix is not PSD (eigenvalue {lo:g})")
    lo = max(lo, 0.0)
    hi = max(hi, 0.0)
    s = math.sqrt(lo) + math.sqrt(hi)
    if s == 0.0:
        return np.zeros((2, 2))
    p = math.sqrt(lo * hi)
    return (S + p * np.eye(2)) / s


# ---------------------------------------------------------------------------
# Exponential-integrator matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpIntMatrices:
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    interval: tuple
    eps: float


_GL_CACHE: dict = {}


def _gl_nodes(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def gauss_legendre(fn, a: float, b: float, tol: float = 1e-10, max_nodes: int = 512,
                   relative: bool = False):
    """Adaptive-order Gauss-Legendre quadrature of a (possibly array-valued)
    integrand: the node count doubles until successive values agree.

    With ``relative=True`` the convergence threshold scales with the estimate
    itself even when it is tiny — needed for quantities like an O(t^3)
    covariance entry that must come out with small *relative* error.
    """
    if b <= a:
        z = np.asarray(fn(np.array([a])))
        return np.zeros(z.shape[1:]) if z.ndim > 1 else 0.0
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    prev = None
    n = 16
    while n <= max_nodes:
        xs, ws = _gl_nodes(n)
        vals = np.asarray(fn(mid + half * xs))
        est = half * np.tensordot(ws, vals, axes=(0, 0))
        if prev is not None:
            mag = float(np.max(np.abs(est)))
            scale = max(mag, 1e-300) if relative else max(1.0, mag)
            if np.max(np.abs(est - prev)) <= tol * scale:
                return est
        prev = est
        n *= 2
    raise RuntimeError("quadrature did not converge")


def _clamp_crossing(cs: ClampedSchedule, a: float, b: float):
    """Interior time where the schedule crosses the clamp floor, if any.

    max(lambda, lambda_delta) puts a C1 kink in every integrand at that
    point, so quadrature intervals must be split there.
    """
    la = schedule_value(cs.base, a)
    lb = schedule_value(cs.base, b)
    if min(la, lb) < cs.lambda_delta < max(la, lb):
        return brentq(lambda u: schedule_value(cs.base, u) - cs.lambda_delta,
                      a, b, xtol=1e-15)
    return None


def _integrate(fn, a: float, b: float, breaks, tol: float):
    """Gauss-Legendre over [a, b], split at interior breakpoints."""
    pts = [a] + sorted(p for p in breaks if a < p < b) + [b]
    total = None
    for lo, hi in zip(pts[:-1], pts[1:]):
        part = gauss_legendre(fn, lo, hi, tol=tol)
        total = part if total is None else total + part
    return total


def expint_matrices(regime: int, a: float, b: float, eps: float,
                    cs: ClampedSchedule, tol: float = 1e-10) -> ExpIntMatrices:
    """Update matrices for the exponential integrator over [a, b].

    Regime 1 (annealed noise drift): the generator of the linear part is
    G/(1 - lambda') with G = [[1, -1], [-1/eps, 1/eps]]; regime 2 (annealed
    target drift) has G = [[0, 0], [-1/eps, 1/eps]] over 1 - lambda.  The
    step is then  state_b = A0 state_a + A1 g + A2 xi  where g carries the
    frozen target-score term and xi is standard normal per coordinate.
    """
    if regime == 1:
        G = np.array([[1.0, -1.0], [-1.0 / eps, 1.0 / eps]])
        def lam_for_gen(u):
            return np.maximum(schedule_value(cs.base, u), cs.lambda_delta)
    elif regime == 2:
        G = np.array([[0.0, 0.0], [-1.0 / eps, 1.0 / eps]])
        def lam_for_gen(u):
            return schedule_value(cs.base, u)
    else:
        raise ValueError("regime must be 1 or 2")
    if b < a:
        raise ValueError("interval must satisfy a <= b")
    if b == a:
        return ExpIntMatrices(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), (a, b), eps)
    cross = _clamp_crossing(cs, a, b)
    breaks = [] if cross is None else [cross]

    def theta(u, upper):
        """integral of 1/(1 - lambda) over [u, upper]"""
        return _integrate(lambda w: 1.0 / (1.0 - lam_for_gen(w)), u, upper, breaks, tol)

    def A0_of(u, upper):
        return expm2(-G * theta(u, upper))

    A0 = A0_of(a, b)

    def lamp(u):
        return np.maximum(schedule_value(cs.base, u), cs.lambda_delta)

    def a1_integrand(us):
        return np.stack([A0_of(u, b) / math.sqrt(lamp(float(u))) for u in us])

    D = np.diag([1.0, 1.0 / eps])

    def a2_integrand(us):
        out = []
        for u in us:
            A = A0_of(u, b)
            out.append(A @ D @ A.T)
        return np.stack(out)

    A1 = _integrate(a1_integrand, a, b, breaks, tol)
    cov = 2.0 * _integrate(a2_integrand, a, b, breaks, tol)
    cov = 0.5 * (cov + cov.T)
    A2 = psd_sqrt2(cov)
    return ExpIntMatrices(A0, A1, A2, (a, b), eps)


def expint_step(mats: ExpIntMatrices, x, y, gvec, noise):
    """Apply the exponential-integrator update to stacked slow/fast states.

    ``x``/``y`` have shape (..., d); ``gvec`` is the frozen nonlinear drift
    pair (2, ..., d) and ``noise`` standard normal of shape (2, ..., d).
    """
    st = np.stack([x, y])                       # (2, ..., d)
    out = np.tensordot(mats.A0, st, axes=(1, 0))
    out += np.tensordot(mats.A1, gvec, axes=(1, 0))
    out += np.tensordot(mats.A2, noise, axes=(1, 0))
    return out[0], out[1]


def regime_label(code: int) -> str:
    return {1: ANNEALED_NOISE_DRIFT, 2: ANNEALED_TARGET_DRIFT}[code]

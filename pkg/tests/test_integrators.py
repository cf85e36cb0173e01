"""Integrator kernels: coefficient oracles, stability, and exact-flow checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from slowfast.integrators import (
    ExpIntMatrices,
    chebyshev_coeffs,
    expint_matrices,
    expint_step,
    expm2,
    gauss_legendre,
    obabo_halfsteps,
    psd_sqrt2,
    regime_label,
    srock_step,
)
from slowfast.schedules import (
    ANNEALED_NOISE_DRIFT,
    ANNEALED_TARGET_DRIFT,
    ClampedSchedule,
    Schedule,
)


# -- Chebyshev stage coefficients ------------------------------------------

def test_coeffs_single_stage_weight_is_one():
    cf = chebyshev_coeffs(1)
    assert cf.mu[0] == 1.0          # w1/w0 with w1 == w0, exact


def test_coeffs_two_stage_undamped_frozen_values():
    cf = chebyshev_coeffs(2, eta=0.0)
    assert cf.w0 == 1.0
    assert cf.w1 == 0.25
    assert cf.mu[0] == 0.25
    assert cf.mu[1] == 0.5
    assert cf.nu[1] == 2.0
    assert cf.kap[1] == -1.0


def test_coeffs_match_chebyshev_polynomial_oracle():
    s, eta = 5, 0.05
    cf = chebyshev_coeffs(s, eta)
    w0 = 1.0 + eta / s**2
    basis = [np.polynomial.chebyshev.Chebyshev.basis(i) for i in range(s + 1)]
    T = [float(p(w0)) for p in basis]
    dT = [float(p.deriv()(w0)) for p in basis]
    w1 = T[s] / dT[s]
    assert cf.w0 == pytest.approx(w0, rel=1e-15)
    assert cf.w1 == pytest.approx(w1, rel=1e-13)
    assert cf.mu[0] == pytest.approx(w1 / w0, rel=1e-13)
    for i in range(2, s + 1):
        assert cf.mu[i - 1] == pytest.approx(2 * w1 * T[i - 1] / T[i], rel=1e-13)
        assert cf.nu[i - 1] == pytest.approx(2 * w0 * T[i - 1] / T[i], rel=1e-13)
        assert cf.kap[i - 1] == pytest.approx(-T[i - 2] / T[i], rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(s=st.integers(1, 25), eta=st.floats(0.0, 5.0))
def test_coeffs_partition_of_unity(s, eta):
    cf = chebyshev_coeffs(s, eta)
    assert np.all(np.isfinite(cf.mu))
    assert 0.0 < cf.mu[0] <= 1.0
    for i in range(1, s):
        assert cf.nu[i] + cf.kap[i] == 1.0


def test_coeffs_validation():
    with pytest.raises(ValueError):
        chebyshev_coeffs(0)
    with pytest.raises(ValueError):
        chebyshev_coeffs(3, eta=-0.1)


# -- SROCK step ---------------------------------------------------------------

def test_srock_single_stage_is_euler_maruyama_bitwise(rng):
    cf = chebyshev_coeffs(1)
    y = rng.normal(size=(64, 3))
    xi = rng.normal(size=(64, 3))
    h = 0.0125

    def drift(z):
        return -1.7 * z + 0.3

    got = srock_step(drift, y, h, cf, xi)
    want = y + h * drift(y) + math.sqrt(2.0 * h) * xi
    assert np.array_equal(got, want)


def test_srock_zero_drift_is_pure_diffusion(rng):
    cf = chebyshev_coeffs(5)
    y = rng.normal(size=7)
    xi = rng.normal(size=7)
    out = srock_step(lambda z: np.zeros_like(z), y, 0.2, cf, xi)
    # the nu/kap recombination of identical stages is only algebraically
    # the identity, so allow round-off
    assert np.allclose(out, y + math.sqrt(0.4) * xi, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("s", [2, 3, 5, 8])
def test_srock_deterministic_map_is_damped_chebyshev(s):
    """Dual route: the stage recursion applied to f(y) = z*y must reproduce
    T_s(w0 + w1 z) / T_s(w0) evaluated through numpy's Chebyshev class."""
    cf = chebyshev_coeffs(s, eta=0.05)
    Ts = np.polynomial.chebyshev.Chebyshev.basis(s)
    denom = float(Ts(cf.w0))
    zmax = (1.0 + cf.w0) / cf.w1
    for z in np.linspace(-0.95 * zmax, -0.01, 17):
        got = srock_step(lambda y: z * y, np.array([1.0]), 1.0, cf, np.zeros(1))[0]
        want = float(Ts(cf.w0 + cf.w1 * z)) / denom
        assert got == pytest.approx(want, rel=1e-10, abs=1e-12)
        assert abs(got) <= 1.0 + 1e-12     # inside the stability interval


def test_srock_contracts_where_euler_explodes():
    # f(y) = -50 y with h_eff = 0.05: |1 + z| = 1.5 for plain Euler
    cf = chebyshev_coeffs(5, eta=0.05)
    y = np.array([1.0])
    em = np.array([1.0])
    for _ in range(40):
        y = srock_step(lambda z: -50.0 * z, y, 0.05, cf, np.zeros(1))
        em = em + 0.05 * (-50.0 * em)
    assert abs(y[0]) < 1e-3
    assert abs(em[0]) > 1e6


@pytest.mark.parametrize("s", [1, 2, 5, 9])
def test_srock_evaluates_drift_exactly_s_times(s):
    calls = []
    cf = chebyshev_coeffs(s)

    def drift(z):
        calls.append(1)
        return -z

    srock_step(drift, np.ones(4), 0.01, cf, np.zeros(4))
    assert len(calls) == s


def test_srock_rejects_nonpositive_step():
    cf = chebyshev_coeffs(2)
    with pytest.raises(ValueError):
        srock_step(lambda z: -z, np.ones(2), 0.0, cf, np.zeros(2))


# -- OBABO half-steps -------------------------------------------------------

def test_obabo_zero_step_is_identity(rng):
    v = rng.normal(size=5)
    out = obabo_halfsteps(v, rng.normal(size=5), 0.7, 2.0, 0.0, rng.normal(size=5))
    assert np.array_equal(out, v)
    out = obabo_halfsteps(v, rng.normal(size=5), 0.7, 2.0, 0.0, rng.normal(size=5), closing=True)
    assert np.array_equal(out, v)


def test_obabo_free_flight_keeps_velocity(rng):
    v = rng.normal(size=4)
    out = obabo_halfsteps(v, np.zeros(4), 0.0, 1.0, 0.3, rng.normal(size=4))
    assert np.allclose(out, v)


def test_obabo_opening_and_closing_order():
    v, grad, gamma, mass, h, xi = 0.8, -1.3, 0.7, 2.0, 0.1, 0.45
    od = 1.0 - 0.5 * h * gamma / mass
    on = math.sqrt(h * gamma)
    assert obabo_halfsteps(v, grad, gamma, mass, h, xi) == pytest.approx(
        od * v + on * xi + 0.5 * h * grad, rel=1e-15)
    assert obabo_halfsteps(v, grad, gamma, mass, h, xi, closing=True) == pytest.approx(
        od * (v + 0.5 * h * grad) + on * xi, rel=1e-15)


def test_obabo_rejects_negative_step():
    with pytest.raises(ValueError):
        obabo_halfsteps(0.0, 0.0, 1.0, 1.0, -0.1, 0.0)


def _verlet_step(x, v, h):
    # zero friction: the O maps are identity and the splitting is velocity
    # Verlet on H = x^2/2 + v^2/2
    v1 = obabo_halfsteps(v, -x, 0.0, 1.0, h, 0.0)
    x1 = x + h * v1
    v2 = obabo_halfsteps(v1, -x1, 0.0, 1.0, h, 0.0, closing=True)
    return x1, v2


def test_obabo_one_step_error_is_third_order_at_zero_friction():
    x0, v0 = 0.7, -0.4
    errs = []
    for h in (0.2, 0.1, 0.05):
        x1, v1 = _verlet_step(x0, v0, h)
        xe = x0 * math.cos(h) + v0 * math.sin(h)
        ve = -x0 * math.sin(h) + v0 * math.cos(h)
        errs.append(math.hypot(x1 - xe, v1 - ve))
    assert math.log2(errs[0] / errs[1]) >= 2.9
    assert math.log2(errs[1] / errs[2]) >= 2.9


# -- 2x2 matrix helpers -----------------------------------------------------

def test_expm2_matches_scipy(rng):
    mats = [
        np.array([[0.0, 1.0], [0.0, 0.0]]),                 # nilpotent, q = 0
        np.array([[0.0, 2.3], [-2.3, 0.0]]),                # rotation, q^2 < 0
        np.diag([0.3, -1.7]),
        np.zeros((2, 2)),
    ]
    mats += [3.0 * rng.normal(size=(2, 2)) for _ in range(50)]
    for M in mats:
        ref = expm(M)
        err = np.linalg.norm(expm2(M) - ref) / max(1.0, np.linalg.norm(ref))
        assert err <= 1e-11, M


def test_psd_sqrt_roundtrip(rng):
    for _ in range(25):
        A = rng.normal(size=(2, 2))
        S = A @ A.T
        R = psd_sqrt2(S)
        assert np.allclose(R @ R, S, rtol=1e-11, atol=1e-12)
        assert np.allclose(R, R.T, atol=1e-13)
        assert np.linalg.eigvalsh(R).min() >= -1e-12


def test_psd_sqrt_known_values():
    assert np.allclose(psd_sqrt2(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    assert np.array_equal(psd_sqrt2(np.zeros((2, 2))), np.zeros((2, 2)))


def test_psd_sqrt_clips_quadrature_roundoff():
    c, s = math.cos(0.3), math.sin(0.3)
    Q = np.array([[c, -s], [s, c]])
    S = Q @ np.diag([1.0, -1e-13]) @ Q.T
    R = psd_sqrt2(S)
    assert np.all(np.isfinite(R))
    assert np.linalg.eigvalsh(R @ R).min() >= -1e-14


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(ValueError):
        psd_sqrt2(np.diag([1.0, -1e-6]))


# -- quadrature ----------------------------------------------------------

def test_quadrature_scalar_and_array_integrands():
    got = gauss_legendre(lambda u: np.exp(u), 0.0, 1.0)
    assert got == pytest.approx(math.e - 1.0, rel=1e-13)
    got = gauss_legendre(lambda u: np.stack([u**2, u**3], axis=-1), 0.0, 1.0)
    assert np.allclose(got, [1.0 / 3.0, 0.25], rtol=1e-13)


def test_quadrature_empty_interval_is_zero():
    assert gauss_legendre(lambda u: np.exp(u), 0.5, 0.5) == 0.0


def test_quadrature_error_on_nonsmooth_integrand():
    with pytest.raises(RuntimeError):
        gauss_legendre(lambda u: (u > 1.0 / math.pi).astype(float), 0.0, 1.0, tol=1e-13)


# -- exponential-integrator matrices --------------------------------------

def _clamped(kind="linear", delta=0.01, tilde=0.6):
    return ClampedSchedule(Schedule(kind), lambda_delta=delta, lambda_tilde=tilde)


def test_expint_identity_on_empty_interval():
    mats = expint_matrices(1, 0.3, 0.3, 0.1, _clamped())
    assert np.array_equal(mats.A0, np.eye(2))
    assert np.array_equal(mats.A1, np.zeros((2, 2)))
    assert np.array_equal(mats.A2, np.zeros((2, 2)))


def test_expint_rejects_bad_inputs():
    with pytest.raises(ValueError):
        expint_matrices(3, 0.1, 0.2, 0.1, _clamped())
    with pytest.raises(ValueError):
        expint_matrices(1, 0.2, 0.1, 0.1, _clamped())


def test_expint_constant_rate_matches_expm_oracle():
    # linear schedule clamped at 0.3 over [0.05, 0.2]: every coefficient
    # function is constant, so the exact matrices are available from expm
    # and direct adaptive quadrature
    cs = _clamped(delta=0.3)
    eps, a, b = 0.25, 0.05, 0.2
    mats = expint_matrices(1, a, b, eps, cs)
    G = np.array([[1.0, -1.0], [-1.0 / eps, 1.0 / eps]])
    theta = (b - a) / 0.7
    assert np.allclose(mats.A0, expm(-G * theta), rtol=1e-10, atol=1e-12)

    A1_ref, _ = quad_vec(lambda u: expm(-G * (b - u) / 0.7) / math.sqrt(0.3),
                         a, b, epsabs=1e-12, epsrel=1e-12)
    assert np.allclose(mats.A1, A1_ref, rtol=1e-8, atol=1e-10)

    D = np.diag([1.0, 1.0 / eps])

    def cov_integrand(u):
        A = expm(-G * (b - u) / 0.7)
        return 2.0 * A @ D @ A.T

    C_ref, _ = quad_vec(cov_integrand, a, b, epsabs=1e-12, epsrel=1e-12)
    assert np.allclose(mats.A2 @ mats.A2.T, C_ref, rtol=1e-8, atol=1e-10)


def test_expint_target_regime_closed_form_flow():
    # regime 2 with the linear schedule: integral of 1/(1-u) has a log form
    cs = _clamped()
    eps, a, b = 0.1, 0.65, 0.7
    mats = expint_matrices(2, a, b, eps, cs)
    G = np.array([[0.0, 0.0], [-1.0 / eps, 1.0 / eps]])
    theta = math.log((1.0 - a) / (1.0 - b))
    assert np.allclose(mats.A0, expm(-G * theta), rtol=1e-10, atol=1e-12)
    # the slow row has no linear part: only drift and unit-rate noise
    assert mats.A0[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert abs(mats.A0[0, 1]) <= 1e-12
    cov = mats.A2 @ mats.A2.T
    assert cov[0, 0] == pytest.approx(2.0 * (b - a), rel=1e-9)


def test_expint_semigroup_composition():
    # quadratures over [a,m]+[m,b] use different nodes than [a,b]: agreement
    # is an independent consistency check of all three matrices
    cs = _clamped(kind="cosine", delta=0.05)
    eps = 0.1
    a, m, b = 0.1, 0.17, 0.3
    for reg in (1, 2):
        full = expint_matrices(reg, a, b, eps, cs)
        first = expint_matrices(reg, a, m, eps, cs)
        second = expint_matrices(reg, m, b, eps, cs)
        assert np.allclose(second.A0 @ first.A0, full.A0, rtol=1e-8, atol=1e-10)
        assert np.allclose(second.A0 @ first.A1 + second.A1, full.A1,
                           rtol=1e-8, atol=1e-10)
        C = (second.A0 @ (first.A2 @ first.A2.T) @ second.A0.T
             + second.A2 @ second.A2.T)
        assert np.allclose(C, full.A2 @ full.A2.T, rtol=1e-8, atol=1e-10)


def test_expint_matches_small_step_simulation(rng):
    """One exact step vs an Euler path with 1200 substeps, 50k samples."""
    cs = _clamped(delta=0.3)
    eps, a, b = 0.25, 0.05, 0.2
    mats = expint_matrices(1, a, b, eps, cs)
    z0 = np.array([0.3, -0.2])
    g = np.array([0.0, -0.7 / eps])
    mean_exact = mats.A0 @ z0 + mats.A1 @ g
    cov_exact = mats.A2 @ mats.A2.T

    n, nsub = 50_000, 1200
    h = (b - a) / nsub
    G = np.array([[1.0, -1.0], [-1.0 / eps, 1.0 / eps]]) / (1.0 - 0.3)
    force = g / math.sqrt(0.3)
    amp = np.array([math.sqrt(2.0 * h), math.sqrt(2.0 * h / eps)])
    Z = np.tile(z0, (n, 1))
    for _ in range(nsub):
        Z = Z + (Z @ (-G.T) + force) * h + amp * rng.standard_normal((n, 2))

    m = Z.mean(axis=0)
    C = np.cov(Z.T)
    se_m = Z.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(m - mean_exact) <= 3.0 * se_m)
    se_c = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C * C) / n)
    # small absolute cushion for the oracle's own O(h) discretization bias
    assert np.all(np.abs(C - cov_exact) <= 3.0 * se_c + 5e-4)


def test_expint_step_applies_affine_map(rng):
    mats = ExpIntMatrices(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)),
                          rng.normal(size=(2, 2)), (0.0, 1.0), 0.1)
    x = rng.normal(size=(5, 3))
    y = rng.normal(size=(5, 3))
    g = rng.normal(size=(2, 5, 3))
    xi = rng.normal(size=(2, 5, 3))
    xo, yo = expint_step(mats, x, y, g, xi)
    for i in range(5):
        for j in range(3):
            ref = (mats.A0 @ [x[i, j], y[i, j]]
                   + mats.A1 @ g[:, i, j] + mats.A2 @ xi[:, i, j])
            assert xo[i, j] == pytest.approx(ref[0], rel=1e-12)
            assert yo[i, j] == pytest.approx(ref[1], rel=1e-12)


def test_regime_labels():
    assert regime_label(1) == ANNEALED_NOISE_DRIFT
    assert regime_label(2) == ANNEALED_TARGET_DRIFT
    with pytest.raises(KeyError):
        regime_label(0)

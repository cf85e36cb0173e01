"""Target densities: closed-form values, gradient oracles, and ingestion."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import multivariate_normal, multivariate_t

from slowfast.targets import (
    ClassificationDataset,
    double_well_target,
    funnel_target,
    gaussian_target,
    load_uci_dataset,
    logistic_regression_target,
    mog8_means,
    mog_target,
    mos_target,
    phi4_hessian_tridiag,
    phi4_target,
    rings_target,
    split_dataset,
)
from conftest import fd_grad, rel_err


def _small_logreg(rng):
    X = rng.normal(size=(5, 3))
    y = np.array([0, 1, 1, 0, 1])
    return logistic_regression_target(ClassificationDataset(X, y))


def _targets_with_points(rng):
    """(target, point sampler) pairs used by the gradient sweep."""
    mog8 = mog_target(mog8_means(), np.full(8, 0.125), 0.7)
    mos = mos_target(rng.uniform(-5, 5, size=(10, 2)), dof=2.0)
    logreg = _small_logreg(rng)
    return [
        (gaussian_target(3, var=2.0), lambda: rng.normal(size=3) * 2),
        (mog8, lambda: rng.uniform(-5, 25, size=2)),
        (mos, lambda: rng.uniform(-7, 7, size=2)),
        (rings_target(), lambda: _ring_point(rng)),
        (funnel_target(10, 3.0), lambda: _funnel_point(rng)),
        (double_well_target(5, 5, 4.0), lambda: rng.uniform(-3, 3, size=5)),
        (logreg, lambda: rng.normal(size=4)),
        (phi4_target(16, 0.1, 20.0, 0.005), lambda: rng.uniform(-2, 2, size=16)),
    ]


def _ring_point(rng):
    x = rng.normal(size=2)
    r = np.linalg.norm(x)
    return x if r > 0.3 else x + 1.0


def _funnel_point(rng):
    x = rng.normal(size=10)
    x[0] = rng.uniform(-3, 3)
    return x


def test_gradients_match_finite_differences(rng):
    """Analytic gradients vs central differences at >= 100 points per target."""
    for target, draw in _targets_with_points(rng):
        worst = 0.0
        for _ in range(100):
            x = draw()
            got = target.grad_log_density(x)
            want = fd_grad(target.log_density, x)
            worst = max(worst, rel_err(got, want))
        assert worst <= 1e-5, f"{target.name}: worst rel err {worst:.2e}"


# -- mixture of Gaussians ----------------------------------------------------

def test_mog_single_component_score():
    t = mog_target(np.zeros((1, 2)), [1.0], 1.0)
    x = np.array([0.7, -1.3])
    assert np.allclose(t.grad_log_density(x), -x)


def test_mog_symmetric_pair_zero_gradient():
    t = mog_target(np.array([[2.0, 0.0], [-2.0, 0.0]]), [0.5, 0.5], 1.0)
    assert np.allclose(t.grad_log_density(np.zeros(2)), 0.0)


def test_mog_logp_matches_scipy_mixture(rng):
    means = mog8_means()
    t = mog_target(means, np.full(8, 0.125), 0.7)
    comps = [multivariate_normal(mean=m, cov=0.7 * np.eye(2)) for m in means]
    for _ in range(20):
        x = rng.uniform(-5, 25, size=2)
        want = math.log(sum(c.pdf(x) for c in comps) / 8.0)
        assert t.log_density(x) == pytest.approx(want, rel=1e-10)


def test_mog8_layout():
    m = mog8_means()
    assert m.shape == (8, 2)
    assert np.allclose(m[0], [20.0, 10.0])
    assert np.allclose(m[2], [10.0, 20.0])
    rad = np.linalg.norm(m - 10.0, axis=1)
    assert np.allclose(rad, 10.0)


def test_mog_validation():
    with pytest.raises(ValueError):
        mog_target(np.zeros((2, 2)), [0.7, 0.7], 1.0)
    with pytest.raises(ValueError):
        mog_target(np.zeros((2, 2)), [0.5, 0.5], 0.0)


# -- mixture of Student's t ---------------------------------------------------

def test_mos_single_component_1d_closed_form():
    t = mos_target(np.zeros((1, 1)), dof=2.0)
    for x in (0.3, 1.0, -2.4):
        want = -3.0 * x / (2.0 + x * x)
        assert t.grad_log_density(np.array([x]))[0] == pytest.approx(want, rel=1e-12)


def test_mos_logp_matches_scipy(rng):
    means = rng.uniform(-5, 5, size=(10, 2))
    t = mos_target(means, dof=2.0)
    comps = [multivariate_t(loc=m, shape=np.eye(2), df=2.0) for m in means]
    for _ in range(10):
        x = rng.uniform(-8, 8, size=2)
        want = np.logaddexp.reduce([c.logpdf(x) for c in comps]) - math.log(10)
        assert t.log_density(x) == pytest.approx(want, rel=1e-10)


def test_mos_finite_far_out(rng):
    t = mos_target(rng.uniform(-5, 5, size=(10, 2)), dof=2.0)
    X = np.array([[1e4, -1e4], [0.0, 0.0], [300.0, 5.0]])
    assert np.all(np.isfinite(t.log_density_batch(X)))
    assert np.all(np.isfinite(t.grad_batch(X)))


def test_mos_rejects_bad_dof():
    with pytest.raises(ValueError):
        mos_target(np.zeros((1, 2)), dof=0.0)


# -- rings ---------------------------------------------------------------

def test_rings_rotation_invariance(rng):
    t = rings_target()
    for _ in range(10):
        x = rng.normal(size=2) * 2.0
        ang = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        assert t.log_density(R @ x) == pytest.approx(t.log_density(x), rel=1e-10)


def test_rings_gradient_at_specific_radii(rng):
    t = rings_target()
    for r in (0.5, 2.5, 4.0):
        ang = rng.uniform(0, 2 * np.pi)
        x = r * np.array([np.cos(ang), np.sin(ang)])
        got = t.grad_log_density(x)
        want = fd_grad(t.log_density, x)
        assert rel_err(got, want) <= 1e-5


def test_rings_origin_is_finite():
    t = rings_target()
    assert np.isfinite(t.log_density(np.zeros(2)))
    assert np.all(np.isfinite(t.grad_log_density(np.zeros(2))))


# -- funnel -------------------------------------------------------------

def test_funnel_origin_first_coordinate():
    t = funnel_target(10, 3.0)
    g = t.grad_log_density(np.zeros(10))
    assert g[0] == pytest.approx(-4.5, abs=1e-12)
    assert np.allclose(g[1:], 0.0)


def test_funnel_tail_coordinates_score(rng):
    t = funnel_target(6, 3.0)
    x = rng.normal(size=6)
    g = t.grad_log_density(x)
    assert np.allclose(g[1:], -x[1:] * np.exp(-x[0]), rtol=1e-12)


def test_funnel_rejects_dim_one():
    with pytest.raises(ValueError):
        funnel_target(1, 3.0)


# -- double well --------------------------------------------------------

def test_dw_stationary_points():
    t = double_well_target(3, 2, 4.0)
    for xw in (0.0, 2.0, -2.0):     # 0, +/- sqrt(delta)
        x = np.array([xw, xw, 0.0])
        g = t.grad_log_density(x)
        assert np.allclose(g[:2], 0.0, atol=1e-12)


def test_dw_mode_count_by_sign_enumeration():
    # every sign pattern of the well coordinates is a distinct local max
    m, delta = 3, 4.0
    t = double_well_target(4, m, delta)
    modes = set()
    for bits in range(2 ** m):
        signs = np.array([1.0 if bits >> k & 1 else -1.0 for k in range(m)])
        x0 = np.concatenate([signs * math.sqrt(delta) * 1.1, [0.3]])
        res = minimize(lambda z: -t.log_density(z), x0, method="L-BFGS-B")
        modes.add(tuple(np.round(res.x[:m], 6)))
    assert len(modes) == 2 ** m


def test_dw_separability_cross_partials(rng):
    t = double_well_target(5, 3, 4.0)
    for _ in range(5):
        x = rng.uniform(-2, 2, size=5)
        i, j = rng.choice(5, size=2, replace=False)
        h = 1e-4

        def partial_i(xj):
            z = x.copy()
            z[j] = xj
            return t.grad_log_density(z)[i]

        cross = (partial_i(x[j] + h) - partial_i(x[j] - h)) / (2 * h)
        assert abs(cross) <= 1e-6


def test_dw_validation():
    with pytest.raises(ValueError):
        double_well_target(3, 4, 1.0)


# -- logistic regression -------------------------------------------------

def test_logreg_prior_only_when_no_rows():
    data = ClassificationDataset(np.zeros((0, 3)), np.zeros(0, dtype=int))
    t = logistic_regression_target(data)
    p = np.array([0.5, -1.0, 2.0, 1.5])
    g = t.grad_log_density(p)
    assert np.allclose(g[:3], -p[:3])
    assert g[3] == pytest.approx(-1.5 / 6.25)


def test_logreg_gradient_fd(rng):
    t = _small_logreg(rng)
    for _ in range(10):
        p = rng.normal(size=4)
        assert rel_err(t.grad_log_density(p), fd_grad(t.log_density, p)) <= 1e-5


def test_logreg_saturated_logits_finite():
    X = np.array([[100.0], [-100.0]])
    y = np.array([1, 0])
    t = logistic_regression_target(ClassificationDataset(X, y))
    p = np.array([5.0, 0.0])
    assert np.isfinite(t.log_density(p))
    assert np.all(np.isfinite(t.grad_log_density(p)))


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        ClassificationDataset(np.zeros((2, 2)), np.array([0, 2]))


# -- phi^4 ----------------------------------------------------------------

def test_phi4_sign_symmetry_is_exact(rng):
    t = phi4_target(16, 0.1, 20.0, h=0.0)
    X = rng.uniform(-2, 2, size=(50, 16))
    diff = t.log_density_batch(X) - t.log_density_batch(-X)
    assert np.all(diff == 0.0)


def test_phi4_tilt_prefers_negative_mode():
    t = phi4_target(16, 0.1, 20.0, h=0.005)
    phi = np.full(16, 0.8)
    assert t.log_density(-phi) > t.log_density(phi)


def test_phi4_two_modes_by_ascent():
    t = phi4_target(16, 0.1, 20.0, h=0.0)
    found = []
    for s in (0.5, -0.5):
        res = minimize(
            lambda z: -t.log_density(z),
            np.full(16, s),
            jac=lambda z: -t.grad_log_density(z),
            method="L-BFGS-B",
        )
        found.append(res.x)
    assert np.linalg.norm(found[0] - found[1]) > 0.5
    assert np.allclose(found[0], -found[1], atol=1e-5)


def test_phi4_hessian_matches_fd(rng):
    t = phi4_target(8, 0.1, 20.0, h=0.01)
    phi = rng.uniform(-1, 1, size=8)
    diag, off = phi4_hessian_tridiag(t, phi)
    H = np.zeros((8, 8))
    eps = 1e-6
    for k in range(8):
        zp, zm = phi.copy(), phi.copy()
        zp[k] += eps
        zm[k] -= eps
        H[k] = (t.grad_log_density(zp) - t.grad_log_density(zm)) / (2 * eps)
    assert np.allclose(np.diag(H), diag, rtol=1e-5, atol=1e-4)
    assert np.allclose(np.diag(H, 1), off, rtol=1e-5, atol=1e-4)
    assert np.allclose(H, H.T, atol=1e-3)


# -- evaluation counter ----------------------------------------------------

def test_eval_counter_counts_oracle_invocations(rng):
    t = gaussian_target(2)
    assert t.eval_counter == 0
    t.log_density(np.zeros(2))
    assert t.eval_counter == 0          # values are free
    t.grad_log_density(np.zeros(2))
    assert t.eval_counter == 1
    t.grad_batch(rng.normal(size=(64, 2)))
    assert t.eval_counter == 2          # one batched call = one invocation
    t.logp_and_grad_batch(rng.normal(size=(8, 2)))
    assert t.eval_counter == 3


# -- dataset ingestion -------------------------------------------------------

def test_load_csv_roundtrip(tmp_path):
    p = tmp_path / "tiny.csv"
    p.write_text("1.0,2.0,g\n3.0,4.0,b\n5.0,6.0,g\n")
    ds = load_uci_dataset(p, standardize=False)
    assert ds.features.shape == (3, 2)
    assert list(ds.labels) == [1, 0, 1]


def test_load_whitespace_and_numeric_labels(tmp_path):
    p = tmp_path / "tiny.dat"
    p.write_text("1.0 2.0 1\n3.0 4.0 -1\n")
    ds = load_uci_dataset(p, standardize=False)
    assert list(ds.labels) == [1, 0]


def test_standardize_columns(tmp_path):
    p = tmp_path / "t.csv"
    rows = ["%f,%f,%d" % (i * 2.0, 7.0, i % 2) for i in range(10)]
    p.write_text("\n".join(rows))
    ds = load_uci_dataset(p, standardize=True)
    mu = ds.features.mean(axis=0)
    var = ds.features.var(axis=0)
    assert np.all(np.abs(mu) <= 1e-12)
    assert abs(var[0] - 1.0) <= 1e-9
    assert var[1] == 0.0                # constant column: scale clamped to 1


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1.0,oops,g\n")
    with pytest.raises(ValueError):
        load_uci_dataset(p)
    p.write_text("1.0,2.0,x\n")
    with pytest.raises(ValueError):
        load_uci_dataset(p)


def test_split_dataset_standardizes_with_train_stats(rng):
    X = rng.normal(size=(50, 4)) * 3 + 1
    y = (rng.uniform(size=50) < 0.5).astype(int)
    ds = ClassificationDataset(X, y)
    train, test = split_dataset(ds, test_frac=0.2, seed=0)
    assert train.n == 40 and test.n == 10
    assert np.all(np.abs(train.features.mean(axis=0)) <= 1e-12)
    # test columns are NOT exactly standardized (train statistics applied)
    assert not np.all(np.abs(test.features.mean(axis=0)) <= 1e-12)
    assert train.split == "train" and test.split == "test"

"""Benchmark target densities.

Every target is an unnormalized log-density with a hand-derived gradient,
wrapped in a :class:`TargetModel` that also counts gradient-oracle calls.
All formulas are evaluated in log space (mixtures via logsumexp); there is
no raw-density evaluation anywhere.

Batched evaluation maps over rows of an (n, d) array.  One batched gradient
call counts as a single oracle invocation — the samplers advance all chains
in lockstep, so the evaluation counter measures sequential oracle work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

# Integer codes used to dispatch target kernels inside the compiled core.
# The compiled extension hardcodes the same table; a unit test pins them.
CORE_GAUSSIAN = 0
CORE_MOG = 1
CORE_MOS = 2
CORE_RINGS = 3
CORE_FUNNEL = 4
CORE_DOUBLE_WELL = 5
CORE_LOGREG = 6
CORE_PHI4 = 7

_EMPTY = np.zeros(0, dtype=np.float64)
_EMPTY_2D = np.zeros((0, 0), dtype=np.float64)


@dataclass
class CoreSpec:
    """Flat parameter pack consumed by the compiled sampler core.

    ``arr0``/``arr1`` hold the target's big arrays (mixture means, design
    matrix, ...); ``scalars``/``ints`` hold everything else.  The pure-NumPy
    backend ignores this and calls the TargetModel directly.
    """

    code: int
    scalars: np.ndarray = field(default_factory=lambda: _EMPTY)
    ints: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    arr0: np.ndarray = field(default_factory=lambda: _EMPTY_2D)
    arr1: np.ndarray = field(default_factory=lambda: _EMPTY)


class TargetModel:
    """Unnormalized target: log-density, gradient, and an evaluation counter.

    ``log_density(x)`` returns -V(x) up to an additive constant for a single
    point; ``grad_log_density`` its gradient.  The ``*_batch`` variants act on
    (n, d) arrays row-wise.  ``eval_counter`` increments by exactly one per
    gradient-oracle invocation, batched or not.
    """

    def __init__(self, dim, logp_batch, grad_batch, name, core_spec=None):
        self.dim = int(dim)
        self.name = name
        self._logp_batch = logp_batch
        self._grad_batch = grad_batch
        self.core_spec = core_spec
        self.eval_counter = 0

    # -- values ---------------------------------------------------------
    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self._logp_batch(x[None, :])[0])

    def log_density_batch(self, X):
        return self._logp_batch(np.asarray(X, dtype=float))

    # -- gradients (counted) ---------------------------------------------
    def grad_log_density(self, x):
        self.eval_counter += 1
        x = np.asarray(x, dtype=float)
        return self._grad_batch(x[None, :])[0]

    def grad_batch(self, X):
        self.eval_counter += 1
        return self._grad_batch(np.asarray(X, dtype=float))

    def logp_and_grad_batch(self, X):
        """Value and gradient in one counted oracle invocation."""
        self.eval_counter += 1
        X = np.asarray(X, dtype=float)
        return self._logp_batch(X), self._grad_batch(X)

    def add_evals(self, n: int):
        """Aggregate oracle calls counted locally by a compiled run."""
        self.eval_counter += int(n)

    def __repr__(self):
        return f"TargetModel({self.name}, dim={self.dim})"


# ---------------------------------------------------------------------------
# Gaussian (test helper and analytic-path oracle)
# ---------------------------------------------------------------------------

def gaussian_target(dim: int, var: float = 1.0) -> TargetModel:
    """Isotropic N(0, var I); the workhorse of the analytic checks."""
    if var <= 0:
        raise ValueError("variance must be positive")
    inv = 1.0 / var
    const = -0.5 * dim * math.log(2.0 * math.pi * var)

    def logp(X):
        return const - 0.5 * inv * np.sum(X * X, axis=1)

    def grad(X):
        return -inv * X

    spec = CoreSpec(code=CORE_GAUSSIAN, scalars=np.array([inv]))
    return TargetModel(dim, logp, grad, f"gaussian(d={dim},var={var:g})", spec)


# ---------------------------------------------------------------------------
# Mixture of Gaussians
# ---------------------------------------------------------------------------

def mog_target(means, weights, cov_scale: float) -> TargetModel:
    """Mixture of isotropic Gaussians with shared covariance cov_scale * I."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if cov_scale <= 0:
        raise ValueError("cov_scale must be positive")
    if means.ndim != 2:
        raise ValueError("component means must share one dimension")
    if len(weights) != len(means):
        raise ValueError("one weight per component")
    if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
        raise ValueError("weights must lie on the simplex")
    K, d = means.shape
    logw = np.log(weights)
    const = -0.5 * d * math.log(2.0 * math.pi * cov_scale)

    def _log_terms(X):
        diff = X[:, None, :] - means[None, :, :]        # (n, K, d)
        sq = np.sum(diff * diff, axis=2)                 # (n, K)
        return logw[None, :] - 0.5 * sq / cov_scale + const, diff

    def logp(X):
        terms, _ = _log_terms(X)
        return logsumexp(terms, axis=1)

    def grad(X):
        terms, diff = _log_terms(X)
        m = terms.max(axis=1, keepdims=True)
        r = np.exp(terms - m)
        r /= r.sum(axis=1, keepdims=True)                # responsibilities
        return -np.einsum("nk,nkd->nd", r, diff) / cov_scale

    spec = CoreSpec(
        code=CORE_MOG,
        scalars=np.array([1.0 / cov_scale]),
        arr0=np.ascontiguousarray(means),
        arr1=np.ascontiguousarray(logw),
    )
    return TargetModel(d, logp, grad, f"mog(K={K},d={d})", spec)


def mog8_means() -> np.ndarray:
    """The 2-D eight-mode layout: radius 10 ring shifted into the positive
    quadrant, means 10*(1 + cos(2 pi i/8), 1 + sin(2 pi i/8)) for i = 0..7."""
    i = np.arange(8)
    ang = 2.0 * math.pi * i / 8.0
    return 10.0 * np.stack([1.0 + np.cos(ang), 1.0 + np.sin(ang)], axis=1)


# ---------------------------------------------------------------------------
# Mixture of Student's t
# ---------------------------------------------------------------------------

def mos_target(means, dof: float) -> TargetModel:
    """Equally weighted mixture of multivariate Student's t components.

    Each component is the standard radially symmetric t with ``dof`` degrees
    of freedom centred at its mean.  Normalization constants are kept so the
    log-density has the conventional absolute scale.
    """
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    means = np.atleast_2d(np.asarray(means, dtype=float))
    K, d = means.shape
    a = float(dof)
    logw = -math.log(K)
    const = (
        math.lgamma(0.5 * (a + d))
        - math.lgamma(0.5 * a)
        - 0.5 * d * math.log(a * math.pi)
    )

    def _sq(X):
        diff = X[:, None, :] - means[None, :, :]
        return diff, np.sum(diff * diff, axis=2)

    def logp(X):
        _, sq = _sq(X)
        terms = logw + const - 0.5 * (a + d) * np.log1p(sq / a)
        return logsumexp(terms, axis=1)

    def grad(X):
        diff, sq = _sq(X)
        terms = -0.5 * (a + d) * np.log1p(sq / a)
        m = terms.max(axis=1, keepdims=True)
        r = np.exp(terms - m)
        r /= r.sum(axis=1, keepdims=True)
        comp = -(a + d) * diff / (a + sq)[:, :, None]
        return np.einsum("nk,nkd->nd", r, comp)

    spec = CoreSpec(
        code=CORE_MOS,
        scalars=np.array([a]),
        arr0=np.ascontiguousarray(means),
        arr1=np.full(K, logw),
    )
    return TargetModel(d, logp, grad, f"mos(K={K},d={d},dof={a:g})", spec)


# ---------------------------------------------------------------------------
# Concentric rings
# ---------------------------------------------------------------------------

_RING_MEANS = np.array([1.0, 2.0, 3.0, 4.0])
_RING_SD = 0.15
_RING_CLAMP = 1e-12


def rings_target() -> TargetModel:
    """Four concentric rings in the plane.

    The radius follows an equally weighted mixture of N(i + 1, 0.15^2),
    i = 0..3, and the angle is uniform.  Expressed in Cartesian coordinates
    this carries a -log r Jacobian term, so that exact draws of the radial
    generative process have exactly this density.  The radius is clamped to
    1e-12 inside the logs to keep the origin finite.
    """
    s2 = _RING_SD ** 2
    logw = -math.log(len(_RING_MEANS))
    const = -0.5 * math.log(2.0 * math.pi * s2)

    def _radial(X):
        r = np.sqrt(np.sum(X * X, axis=1))
        rc = np.maximum(r, _RING_CLAMP)
        dev = rc[:, None] - _RING_MEANS[None, :]
        terms = logw + const - 0.5 * dev * dev / s2
        return r, rc, dev, terms

    def logp(X):
        _, rc, _, terms = _radial(X)
        return logsumexp(terms, axis=1) - np.log(rc)

    def grad(X):
        _, rc, dev, terms = _radial(X)
        m = terms.max(axis=1, keepdims=True)
        resp = np.exp(terms - m)
        resp /= resp.sum(axis=1, keepdims=True)
        dlogp_r = np.sum(resp * (-dev / s2), axis=1)
        scale = (dlogp_r - 1.0 / rc) / rc
        return scale[:, None] * X

    spec = CoreSpec(
        code=CORE_RINGS,
        scalars=np.array([1.0 / s2]),
        arr0=_RING_MEANS.reshape(1, -1).copy(),
        arr1=np.full(len(_RING_MEANS), logw),
    )
    return TargetModel(2, logp, grad, "rings", spec)


# ---------------------------------------------------------------------------
# Funnel
# ---------------------------------------------------------------------------

def funnel_target(dim: int = 10, eta: float = 3.0) -> TargetModel:
    """Neal's funnel: x1 ~ N(0, eta^2), x_i | x1 ~ N(0, exp(x1)) for i >= 2."""
    if dim < 2:
        raise ValueError("funnel needs dim >= 2")
    inv_eta2 = 1.0 / (eta * eta)

    def logp(X):
        x1 = X[:, 0]
        rest = X[:, 1:]
        sq = np.sum(rest * rest, axis=1)
        return (
            -0.5 * x1 * x1 * inv_eta2
            - 0.5 * sq * np.exp(-x1)
            - 0.5 * (dim - 1) * x1
            - 0.5 * dim * math.log(2.0 * math.pi)
            - math.log(eta)
        )

    def grad(X):
        x1 = X[:, 0]
        rest = X[:, 1:]
        e = np.exp(-x1)
        g = np.empty_like(X)
        g[:, 0] = -x1 * inv_eta2 + 0.5 * np.sum(rest * rest, axis=1) * e - 0.5 * (dim - 1)
        g[:, 1:] = -rest * e[:, None]
        return g

    spec = CoreSpec(code=CORE_FUNNEL, scalars=np.array([inv_eta2]))
    return TargetModel(dim, logp, grad, f"funnel(d={dim},eta={eta:g})", spec)


# ---------------------------------------------------------------------------
# Double well
# ---------------------------------------------------------------------------

def double_well_target(dim: int, m: int, delta: float) -> TargetModel:
    """Product of m quartic double wells exp(-(x^2 - delta)^2) and dim - m
    Gaussian coordinates exp(-x^2); 2^m modes at the well sign patterns."""
    if not 1 <= m <= dim:
        raise ValueError("well count m must satisfy 1 <= m <= dim")

    def logp(X):
        w = X[:, :m]
        g = X[:, m:]
        q = w * w - delta
        return -np.sum(q * q, axis=1) - np.sum(g * g, axis=1)

    def grad(X):
        out = np.empty_like(X)
        w = X[:, :m]
        out[:, :m] = -4.0 * w * (w * w - delta)
        out[:, m:] = -2.0 * X[:, m:]
        return out

    spec = CoreSpec(
        code=CORE_DOUBLE_WELL,
        scalars=np.array([float(delta)]),
        ints=np.array([m], dtype=np.int64),
    )
    return TargetModel(dim, logp, grad, f"double_well(d={dim},m={m},delta={delta:g})", spec)


# ---------------------------------------------------------------------------
# Bayesian logistic regression
# ---------------------------------------------------------------------------

@dataclass
class ClassificationDataset:
    """Binary classification data: an (N, d) feature matrix and 0/1 labels."""

    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature entries after ingestion")
        if not np.all(np.isin(self.labels, (0, 1))):
            raise ValueError("labels must be 0/1")
        self.labels = self.labels.astype(np.float64)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


_PRIOR_B_SD = 2.5


def logistic_regression_target(data: ClassificationDataset) -> TargetModel:
    """Posterior over (w, b) for Bernoulli responses with logits w.x + b.

    Prior: w ~ N(0, I), b ~ N(0, 2.5^2).  The log-likelihood is evaluated
    through softplus, so saturated logits stay finite.  A dataset with zero
    rows yields the prior alone.
    """
    X = data.features
    y = data.labels
    dfeat = X.shape[1]
    dim = dfeat + 1
    inv_b_var = 1.0 / (_PRIOR_B_SD ** 2)

    def _logits(P):
        w = P[:, :dfeat]
        b = P[:, dfeat]
        return w, b, w @ X.T + b[:, None]     # (n, N)

    def logp(P):
        w, b, z = _logits(P)
        # y*z - softplus(z), summed over data rows
        sp = np.logaddexp(0.0, z)
        loglik = np.sum(y[None, :] * z - sp, axis=1)
        prior = -0.5 * np.sum(w * w, axis=1) - 0.5 * inv_b_var * b * b
        return prior + loglik

    def grad(P):
        w, b, z = _logits(P)
        resid = y[None, :] - expit(z)          # (n, N)
        g = np.empty_like(P)
        g[:, :dfeat] = resid @ X - w
        g[:, dfeat] = np.sum(resid, axis=1) - inv_b_var * b
        return g

    spec = CoreSpec(
        code=CORE_LOGREG,
        scalars=np.array([inv_b_var]),
        arr0=np.ascontiguousarray(X),
        arr1=np.ascontiguousarray(y),
    )
    return TargetModel(dim, logp, grad, f"logreg(N={data.n},d={dim})", spec)


# ---------------------------------------------------------------------------
# phi^4 lattice field
# ---------------------------------------------------------------------------

def phi4_target(dim: int, a: float = 0.1, beta: float = 20.0, h: float = 0.0) -> TargetModel:
    """One-dimensional phi^4 lattice with Dirichlet boundaries phi_0 = phi_{d+1} = 0.

    Energy per unit beta: (a d / 2) sum_{i=0}^{d} (phi_i - phi_{i+1})^2
    + (1 / (4 a d)) sum_i (1 - phi_i^2)^2 + h sum_i phi_i.  At h = 0 the
    energy is bit-for-bit invariant under phi -> -phi; h > 0 tilts mass onto
    the negative mode.
    """
    if dim < 2:
        raise ValueError("phi4 needs dim >= 2")
    ad = a * dim
    quart = 1.0 / (4.0 * ad)

    def logp(X):
        n = X.shape[0]
        pad = np.zeros((n, dim + 2))
        pad[:, 1:-1] = X
        dif = pad[:, 1:] - pad[:, :-1]
        grad_term = 0.5 * ad * np.sum(dif * dif, axis=1)
        q = 1.0 - X * X
        quart_term = quart * np.sum(q * q, axis=1)
        tilt = h * np.sum(X, axis=1)
        return -beta * (grad_term + quart_term + tilt)

    def grad(X):
        n = X.shape[0]
        pad = np.zeros((n, dim + 2))
        pad[:, 1:-1] = X
        lap = 2.0 * X - pad[:, :-2] - pad[:, 2:]
        return -beta * (ad * lap - (1.0 / ad) * (1.0 - X * X) * X + h)

    spec = CoreSpec(code=CORE_PHI4, scalars=np.array([ad, beta, h]))
    return TargetModel(dim, logp, grad, f"phi4(d={dim},a={a:g},beta={beta:g},h={h:g})", spec)


def phi4_hessian_tridiag(target: TargetModel, phi):
    """Tridiagonal Hessian of the phi^4 log-density at ``phi``.

    Returns (diag, off) with off-diagonal entries H[k, k+1] = beta * a * d.
    Used by the Laplace mode-weight machinery.
    """
    ad, beta, h = target.core_spec.scalars
    phi = np.asarray(phi, dtype=float)
    diag = -beta * (2.0 * ad - (1.0 / ad) * (1.0 - 3.0 * phi * phi))
    off = np.full(len(phi) - 1, beta * ad)
    return diag, off


# ---------------------------------------------------------------------------
# Dataset ingestion
# ---------------------------------------------------------------------------

_LABEL_MAP = {"0": 0, "1": 1, "-1": 0, "b": 0, "g": 1, "M": 1, "R": 0}


def load_uci_dataset(path, standardize: bool = True) -> ClassificationDataset:
    """Read a delimiter-separated classification file (features..., label).

    Comma and whitespace delimiters are both accepted; the final column maps
    {0,1}, {-1,1}, {b,g}, or {M,R} onto {0,1}.  With ``standardize`` the
    feature columns are shifted/scaled to zero mean and unit variance using
    this split's own statistics (constant columns keep scale 1).
    """
    feats, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",") if "," in line else line.split()
            raw_label = parts[-1].strip()
            if raw_label not in _LABEL_MAP:
                raise ValueError(f"{path}:{lineno}: unrecognized label {raw_label!r}")
            try:
                row = [float(v) for v in parts[:-1]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparseable feature row") from exc
            feats.append(row)
            labels.append(_LABEL_MAP[raw_label])
    if not feats:
        raise ValueError(f"{path}: empty dataset")
    X = np.asarray(feats, dtype=np.float64)
    y = np.asarray(labels)
    if standardize:
        X, _, _ = standardize_features(X)
    return ClassificationDataset(X, y, split="train")


def standardize_features(X, mean=None, scale=None):
    """Zero-mean/unit-variance columns; constant columns get scale 1."""
    if mean is None:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale < 1e-12, 1.0, scale)
    return (X - mean) / scale, mean, scale


def split_dataset(dataset: ClassificationDataset, test_frac: float = 0.2, seed: int = 0,
                  standardize: bool = True):
    """Shuffle-split into (train, test); standardization uses train statistics."""
    if not 0.0 < test_frac < 1.0:
        raise ValueError("test_frac must lie in (0, 1)")
    n = dataset.n
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(n * test_frac)))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    Xtr = dataset.features[train_idx]
    Xte = dataset.features[test_idx]
    if standardize:
        Xtr, mu, sd = standardize_features(Xtr)
        Xte, _, _ = standardize_features(Xte, mu, sd)
    return (
        ClassificationDataset(Xtr, dataset.labels[train_idx].astype(int), "train"),
        ClassificationDataset(Xte, dataset.labels[test_idx].astype(int), "test"),
    )

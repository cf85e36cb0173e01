"""Exact reference samplers for the benchmark targets.

Every generator draws from its own RNG stream (domain 1 of the seed
protocol) so ground truth never shares randomness with samplers or metric
projections.  All generators are deterministic under a fixed seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SampleBatch",
    "sample_gaussian",
    "sample_mog",
    "sample_mos",
    "sample_funnel",
    "sample_rings",
    "rejection_sample_dw",
]

_GT_DOMAIN = 1


def _rng(seed: int):
    return np.random.default_rng(np.random.SeedSequence([_GT_DOMAIN, seed]))


@dataclass
class SampleBatch:
    """An (n, d) matrix of draws plus where they came from."""

    points: np.ndarray
    source: str
    seed: int

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if not np.all(np.isfinite(self.points)):
            raise ValueError("sample batch contains non-finite entries")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def sample_gaussian(n: int, dim: int, var: float = 1.0, seed: int = 0) -> SampleBatch:
    rng = _rng(seed)
    pts = math.sqrt(var) * rng.standard_normal((n, dim))
    return SampleBatch(pts, "ground-truth", seed)


def sample_mog(n: int, means, weights, cov_scale: float, seed: int = 0) -> SampleBatch:
    """Ancestral draws from a mixture of isotropic Gaussians."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    weights = np.asarray(weights, dtype=float)
    rng = _rng(seed)
    comp = rng.choice(len(means), size=n, p=weights / weights.sum())
    pts = means[comp] + math.sqrt(cov_scale) * rng.standard_normal((n, means.shape[1]))
    return SampleBatch(pts, "ground-truth", seed)


def sample_mos(n: int, means, dof: float, seed: int = 0) -> SampleBatch:
    """Mixture of multivariate Student's t components (equal weights).

    A joint t draw is a Gaussian divided by one shared chi-square factor;
    drawing ``standard_t`` per coordinate would give independent t marginals
    with the wrong joint tails.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    K, d = means.shape
    rng = _rng(seed)
    comp = rng.choice(K, size=n)
    z = rng.standard_normal((n, d))
    g = rng.chisquare(dof, size=n)
    pts = means[comp] + z * np.sqrt(dof / g)[:, None]
    return SampleBatch(pts, "ground-truth", seed)


def sample_funnel(n: int, dim: int = 10, eta: float = 3.0, seed: int = 0) -> SampleBatch:
    rng = _rng(seed)
    x1 = eta * rng.standard_normal(n)
    rest = rng.standard_normal((n, dim - 1)) * np.exp(0.5 * x1)[:, None]
    return SampleBatch(np.column_stack([x1, rest]), "ground-truth", seed)


def sample_rings(n: int, seed: int = 0) -> SampleBatch:
    """Radius from the 4-component N(i+1, 0.15^2) mixture, angle uniform."""
    rng = _rng(seed)
    centers = 1.0 + rng.integers(0, 4, size=n).astype(float)
    r = centers + 0.15 * rng.standard_normal(n)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return SampleBatch(pts, "ground-truth", seed)


# ---------------------------------------------------------------------------
# double well
# ---------------------------------------------------------------------------

def _dw_envelope(delta: float, sd: float) -> float:
    """Envelope constant M = max_x p(x)/q(x) for the well density
    p(x) = exp(-(x^2-delta)^2) over the two-bump Gaussian proposal q,
    found by maximizing the ratio on a dense grid around the support."""
    root = math.sqrt(delta)
    lo = -root - 8.0 * sd - 2.0
    xs = np.linspace(lo, -lo, 40001)
    logp = -((xs ** 2 - delta) ** 2)
    logq = _dw_proposal_logpdf(xs, root, sd)
    return float(np.exp((logp - logq).max()))


def _dw_proposal_logpdf(x, root: float, sd: float):
    a = -0.5 * ((x - root) / sd) ** 2
    b = -0.5 * ((x + root) / sd) ** 2
    m = np.maximum(a, b)
    norm = math.log(2.0 * sd * math.sqrt(2.0 * math.pi))
    return m + np.log(np.exp(a - m) + np.exp(b - m)) - norm


def rejection_sample_dw(n: int, dim: int, m: int, delta: float, seed: int = 0,
                        proposal_sd: float | None = None) -> SampleBatch:
    """Exact draws from exp(-sum_{i<m} (x_i^2-delta)^2 - sum_{i>=m} x_i^2).

    The density factorizes per coordinate: the first ``m`` coordinates use
    rejection with a two-bump Gaussian proposal centred at +-sqrt(delta),
    the rest are N(0, 1/2).  ``proposal_sd`` defaults to 1/sqrt(2 delta),
    a little wider than the wells' curvature scale 1/sqrt(8 delta).
    """
    if not 0 <= m <= dim:
        raise ValueError("m must lie in [0, dim]")
    rng = _rng(seed)
    root = math.sqrt(delta)
    sd = proposal_sd if proposal_sd is not None else 1.0 / math.sqrt(2.0 * delta)
    env = _dw_envelope(delta, sd)
    log_env = math.log(env)

    need = n * m
    accepted = np.empty(0)
    drawn = 0
    while accepted.size < need:
        block = max(4 * (need - accepted.size), 1024)
        x = rng.normal(root * rng.choice((-1.0, 1.0), size=block), sd)
        logp = -((x ** 2 - delta) ** 2)
        logq = _dw_proposal_logpdf(x, root, sd)
        keep = np.log(rng.uniform(size=block)) < logp - logq - log_env
        accepted = np.concatenate([accepted, x[keep]])
        drawn += block
        if drawn >= 8192 and accepted.size < drawn * 1e-3:
            raise RuntimeError(
                f"double-well rejection acceptance rate {accepted.size / drawn:.2e} "
                "below 1e-3; proposal is mis-tuned")
    pts = np.empty((n, dim))
    if m:
        pts[:, :m] = accepted[:need].reshape(n, m)
    if m < dim:
        pts[:, m:] = rng.standard_normal((n, dim - m)) / math.sqrt(2.0)
    return SampleBatch(pts, "ground-truth", seed)

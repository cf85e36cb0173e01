"""Annealing schedules, base-noise scores, and regime selection.

The samplers in this package interpolate between an easy base distribution
``nu`` and the target along a monotone schedule ``lambda(t)`` on [0, 1]:
near t = 0 the interpolated density is mostly base noise, and lambda(1) = 1
recovers the target.  A small clamp ``lambda_delta`` keeps the annealed
scores well defined at the noisy end, and the clamped schedule partitions
[0, 1] into four operating regimes that the step kernels switch between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Regime tags, in the order they occur along a run.
EARLY = "early"
ANNEALED_NOISE_DRIFT = "annealed_noise_drift"
ANNEALED_TARGET_DRIFT = "annealed_target_drift"
WARM_LANGEVIN = "warm_langevin"

REGIME_ORDER = (EARLY, ANNEALED_NOISE_DRIFT, ANNEALED_TARGET_DRIFT, WARM_LANGEVIN)

# Integer drift-branch codes used by the step kernels.  The early and
# annealed-noise regimes share a slow drift (the base-noise score), so they
# collapse to one branch; what distinguishes them is only the clamp.
BRANCH_NOISE = 0   # slow drift reads the base-noise score
BRANCH_TARGET = 1  # slow drift reads the target score
BRANCH_WARM = 2    # plain Langevin on the target

_TAG_TO_BRANCH = {
    EARLY: BRANCH_NOISE,
    ANNEALED_NOISE_DRIFT: BRANCH_NOISE,
    ANNEALED_TARGET_DRIFT: BRANCH_TARGET,
    WARM_LANGEVIN: BRANCH_WARM,
}


@dataclass(frozen=True)
class BaseNoise:
    """Base (noising) distribution: standard Gaussian or Student's t.

    ``alpha`` is the tail index and is only meaningful for the Student's t
    kind.  ``dim`` may be left as None, in which case it is inferred from
    the point at evaluation time.
    """

    kind: str = "gaussian"
    alpha: float = 2.0
    dim: int | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "student_t"):
            raise ValueError(f"unknown base noise kind {self.kind!r}")
        if self.kind == "student_t" and not self.alpha > 0:
            raise ValueError("student_t tail index must be positive")

    def log_density(self, x):
        """Unnormalized log-density at ``x`` (used by finite-difference tests)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return -0.5 * float(np.sum(x * x))
        d = self.dim if self.dim is not None else x.shape[-1]
        return -0.5 * (self.alpha + d) * float(np.log1p(np.sum(x * x) / self.alpha))


def base_score(noise: BaseNoise, x):
    """Score grad log nu(x) of the base distribution.

    Accepts a single point of shape (d,) or a batch of shape (n, d); the
    score is computed along the last axis either way.
    """
    x = np.asarray(x, dtype=float)
    if noise.kind == "gaussian":
        return -x
    d = noise.dim if noise.dim is not None else x.shape[-1]
    sq = np.sum(x * x, axis=-1, keepdims=True)
    return -(noise.alpha + d) * x / (noise.alpha + sq)


@dataclass(frozen=True)
class Schedule:
    """Monotone annealing schedule lambda(t) on [0, 1] with lambda(1) = 1.

    Kinds: "linear" (lambda = t), "cosine" (lambda = sin^2(pi t / 2)), and
    "ou" (lambda = exp(-2 T (1 - t)), the law of an Ornstein-Uhlenbeck
    noising run of horizon T read backwards).
    """

    kind: str = "linear"
    T: float = 4.0  # horizon, "ou" kind only

    def __post_init__(self):
        if self.kind not in ("linear", "cosine", "ou"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "ou" and not self.T > 0:
            raise ValueError("ou schedule horizon must be positive")

    @property
    def name(self) -> str:
        return f"ou:T={self.T:g}" if self.kind == "ou" else self.kind

    def formula(self) -> str:
        """Human-readable formula recorded in run reports."""
        return {
            "linear": "lambda(t) = t",
            "cosine": "lambda(t) = sin^2(pi t / 2)",
            "ou": f"lambda(t) = exp(-2*{self.T:g}*(1 - t))",
        }[self.kind]


def parse_schedule(name: str) -> Schedule:
    """Parse a config key: "linear", "cosine", or "ou:T=<real>"."""
    if name in ("linear", "cosine"):
        return Schedule(kind=name)
    if name.startswith("ou:T="):
        return Schedule(kind="ou", T=float(name[len("ou:T="):]))
    if name == "ou":
        return Schedule(kind="ou")
    raise ValueError(f"unknown schedule {name!r}")


def schedule_value(s: Schedule, t):
    """Evaluate lambda(t).  ``t`` may be a scalar or an array in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError("schedule time outside [0, 1]")
    if s.kind == "linear":
        lam = t_arr
    elif s.kind == "cosine":
        lam = np.sin(0.5 * math.pi * t_arr) ** 2
    else:
        lam = np.exp(-2.0 * s.T * (1.0 - t_arr))
    if np.ndim(t) == 0:
        return float(lam)
    return lam


@dataclass(frozen=True)
class ClampedSchedule:
    """A schedule plus the clamp level and the drift-switch threshold.

    ``lambda_delta`` is the floor applied to lambda when forming annealed
    scores (and the boundary of the warm phase at the other end);
    ``lambda_tilde`` separates the noise-drift and target-drift regimes.
    """

    base: Schedule
    lambda_delta: float = 0.01
    lambda_tilde: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.lambda_delta < 0.5:
            raise ValueError("lambda_delta must lie in (0, 0.5)")
        if not self.lambda_delta < self.lambda_tilde < 1.0 - self.lambda_delta:
            raise ValueError(
                "lambda_tilde must lie strictly between lambda_delta and 1 - lambda_delta"
            )

    def clamped(self, t):
        """lambda'(t) = max(lambda(t), lambda_delta)."""
        lam = schedule_value(self.base, t)
        return np.maximum(lam, self.lambda_delta) if np.ndim(t) else max(lam, self.lambda_delta)


def regime(cs: ClampedSchedule, t: float):
    """Classify time ``t`` into a regime tag and return (tag, lambda'(t)).

    Boundaries are deterministic: the early and noise-drift branches hold on
    strict inequality (lambda < lambda_delta, lambda < lambda_tilde) and the
    target/warm branches claim their boundary points (lambda >= lambda_tilde,
    lambda >= 1 - lambda_delta).
    """
    lam = schedule_value(cs.base, t)
    if lam < cs.lambda_delta:
        return EARLY, cs.lambda_delta
    if lam >= 1.0 - cs.lambda_delta:
        return WARM_LANGEVIN, lam
    if lam < cs.lambda_tilde:
        return ANNEALED_NOISE_DRIFT, lam
    return ANNEALED_TARGET_DRIFT, lam


def branch_of(tag: str) -> int:
    """Map a regime tag to the integer drift-branch code of the kernels."""
    return _TAG_TO_BRANCH[tag]


@dataclass(frozen=True)
class FrictionSchedule:
    """Step-indexed friction: flat at gamma_min for the first half of the
    run, then linear up to gamma_max at the final step."""

    gamma_min: float
    gamma_max: float
    total_steps: int

    def __post_init__(self):
        if not (self.gamma_min > 0 and self.gamma_max > 0):
            raise ValueError("friction must be positive")
        if self.total_steps < 1:
            raise ValueError("need at least one step")

    def gamma_at(self, l):
        """Gamma at step index l (scalar or array), for l in [0, total_steps]."""
        half = 0.5 * self.total_steps
        l_arr = np.asarray(l, dtype=float)
        ramp = (l_arr - half) / (self.total_steps - half)
        g = np.where(l_arr < half, self.gamma_min,
                     self.gamma_min + (self.gamma_max - self.gamma_min) * ramp)
        if np.ndim(l) == 0:
            return float(g)
        return g

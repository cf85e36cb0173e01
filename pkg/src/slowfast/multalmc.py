"""Slow-fast annealed Langevin samplers.

A chain carries a slow position x (optionally with velocity v) and a fast
variable y.  The interpolation level lambda(t) rises from 0 to 1 over the
run; the slow variable follows an annealed drift read off the fast one,
while y relaxes on the sped-up clock t/eps toward its conditional law.
Once lambda is within lambda_delta of 1 the chain drops the fast variable
and runs plain Langevin on the target ("warm" phase).

Step functions are written over the whole chain ensemble at once: one
batched gradient call covers every chain, which is also the unit of the
evaluation budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .integrators import SrockCoeffs, chebyshev_coeffs, obabo_halfsteps, srock_step
from .schedules import (
    BRANCH_NOISE,
    BRANCH_TARGET,
    BRANCH_WARM,
    BaseNoise,
    ClampedSchedule,
    FrictionSchedule,
    base_score,
    branch_of,
    regime,
    schedule_value,
)

OVERDAMPED = "overdamped"
UNDERDAMPED = "underdamped"

FAST_LANGEVIN = "langevin"
FAST_MODIFIED_ITO = "modified_ito"


@dataclass(frozen=True)
class MultAlmcConfig:
    """Run settings shared by both sampler variants.

    ``h`` is the slow step size; the fast variable moves with h/eps.  The
    friction ramp (gamma_min -> gamma_max over the run) and ``mass`` apply
    to the underdamped variant only.  ``warm_h`` optionally changes the
    step size of the warm phase; it defaults to h.  ``stop_after`` truncates
    the run for mid-anneal inspection.
    """

    kind: str
    eps: float
    h: float
    steps: int
    schedule: ClampedSchedule
    base: BaseNoise = BaseNoise()
    gamma_min: float = 0.1
    gamma_max: float = 0.5
    mass: float = 1.0
    stages: int = 5
    eta: float = 0.05
    fast_kind: str = FAST_LANGEVIN
    warm_h: float | None = None
    stop_after: int | None = None
    init_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (OVERDAMPED, UNDERDAMPED):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.h <= 0:
            raise ValueError("step size must be positive")
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.fast_kind not in (FAST_LANGEVIN, FAST_MODIFIED_ITO):
            raise ValueError(f"unknown fast process {self.fast_kind!r}")
        if self.fast_kind == FAST_MODIFIED_ITO and self.base.kind != "student_t":
            raise ValueError("the modified Ito fast process needs a student_t base")
        if self.warm_h is not None and self.warm_h <= 0:
            raise ValueError("warm_h must be positive")
        if self.stop_after is not None and not 1 <= self.stop_after <= self.steps:
            raise ValueError("stop_after must lie in [1, steps]")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


# ---------------------------------------------------------------------------
# drifts (contract surface; the step kernels share the same arithmetic)
# ---------------------------------------------------------------------------

def _fast_drift_arrays(lamp: float, x, y, target, base: BaseNoise):
    sl = lamp ** -0.5
    sn = (1.0 - lamp) ** -0.5
    return sl * target.grad_batch(sl * y) + sn * base_score(base, sn * (y - x))


def _slow_drift_arrays(branch: int, lamp: float, x, y, target, base: BaseNoise):
    if branch == BRANCH_NOISE:
        sn = (1.0 - lamp) ** -0.5
        return sn * base_score(base, sn * (x - y))
    if branch == BRANCH_TARGET:
        sl = lamp ** -0.5
        return sl * target.grad_batch(sl * y)
    return target.grad_batch(x)


def fast_drift(t: float, x, y, target, base: BaseNoise, cs: ClampedSchedule):
    """Drift of the fast variable: annealed target score pulled toward x.

    Not meaningful in the warm phase (the fast variable is frozen there).
    Costs one target-gradient evaluation.
    """
    _, lamp = regime(cs, t)
    return _fast_drift_arrays(lamp, x, y, target, base)


def slow_drift(t: float, x, y, target, base: BaseNoise, cs: ClampedSchedule):
    """Regime-dependent drift of the slow position.

    Noise regime: score of the base displacement x - y.  Target regime:
    annealed target score read off the fast variable (x is ignored).  Warm:
    the plain target score at x.
    """
    tag, lamp = regime(cs, t)
    return _slow_drift_arrays(branch_of(tag), lamp, x, y, target, base)


def modified_ito_speed(lamp: float, x, y, target, base: BaseNoise):
    """Local speed U of the heavy-tail fast diffusion and its y-gradient.

    U(y) = sqrt(1 + |x-y|^2 / (alpha (1-lambda'))) *
    exp(V(y/sqrt(lambda')) / (alpha + d)), computed in log space and
    exponentiated once so heavy-tail excursions overflow to inf rather than
    corrupt intermediate products.  Costs one (value, gradient) oracle call.
    Returns (u, grad_u) with u of shape (..., 1).
    """
    alpha, d = base.alpha, y.shape[-1]
    sl = lamp ** -0.5
    c = alpha * (1.0 - lamp)
    diff = y - x
    ssq = np.sum(diff * diff, axis=-1, keepdims=True)
    logp, glp = target.logp_and_grad_batch(sl * y)
    log_u = 0.5 * np.log1p(ssq / c) - np.asarray(logp)[..., None] / (alpha + d)
    u = np.exp(log_u)
    grad_u = u * (diff / (c + ssq) - sl * glp / (alpha + d))
    return u, grad_u


def modified_ito_update(lamp: float, x, y, target, base: BaseNoise,
                        heff: float, noise):
    """Heavy-tail fast step: Euler update of the state-dependent diffusion.

    An overflowing speed turns the state non-finite and the chain is
    retired by the runner.
    """
    alpha, d = base.alpha, y.shape[-1]
    u, grad_u = modified_ito_speed(lamp, x, y, target, base)
    return y - heff * (alpha + d - 1.0) * grad_u + np.sqrt(2.0 * u * heff) * noise


# ---------------------------------------------------------------------------
# step plan
# ---------------------------------------------------------------------------

@dataclass
class AlmcPlan:
    """Per-step lookup tables: regime branch, annealing level, friction."""

    cfg: MultAlmcConfig
    srock: SrockCoeffs
    branch: np.ndarray        # int8, drift-branch code per step
    lamp: np.ndarray          # clamped annealing level per step
    ct: np.ndarray            # target-score scale lambda'^{-1/2} (0 when warm)
    cnu: np.ndarray           # base-score scale (1-lambda')^{-1/2} (0 when warm)
    h: np.ndarray             # per-step slow step size (warm override applied)
    sq2h: np.ndarray
    gamma: np.ndarray         # per-step friction (underdamped)
    heff: float
    noise_slots: int
    stop_after: int

    @property
    def steps(self) -> int:
        return self.branch.shape[0]


def build_almc_plan(cfg: MultAlmcConfig) -> AlmcPlan:
    L = cfg.steps
    lam = schedule_value(cfg.schedule.base, np.arange(L) / L)
    cs = cfg.schedule
    branch = np.select(
        [lam >= 1.0 - cs.lambda_delta, lam >= cs.lambda_tilde],
        [BRANCH_WARM, BRANCH_TARGET],
        default=BRANCH_NOISE,
    ).astype(np.int8)
    lamp = np.maximum(lam, cs.lambda_delta)
    live = branch != BRANCH_WARM
    ct = np.where(live, lamp ** -0.5, 0.0)
    one_minus = np.where(live, 1.0 - lamp, 1.0)
    cnu = np.where(live, one_minus ** -0.5, 0.0)
    h = np.where(branch == BRANCH_WARM,
                 cfg.h if cfg.warm_h is None else cfg.warm_h, cfg.h)
    fr = FrictionSchedule(cfg.gamma_min, cfg.gamma_max, L)
    return AlmcPlan(
        cfg=cfg,
        srock=chebyshev_coeffs(cfg.stages, cfg.eta),
        branch=branch,
        lamp=lamp,
        ct=ct,
        cnu=cnu,
        h=h,
        sq2h=np.sqrt(2.0 * h),
        gamma=fr.gamma_at(np.arange(L)),
        heff=cfg.h / cfg.eps,
        noise_slots=2 if cfg.kind == OVERDAMPED else 3,
        stop_after=cfg.steps if cfg.stop_after is None else cfg.stop_after,
    )


# ---------------------------------------------------------------------------
# reference steps (ensemble-at-once; the compiled core mirrors these)
# ---------------------------------------------------------------------------

def _fast_step(plan: AlmcPlan, l: int, x_new, y, target, noise):
    lamp = plan.lamp[l]
    base = plan.cfg.base
    if plan.cfg.fast_kind == FAST_MODIFIED_ITO:
        return modified_ito_update(lamp, x_new, y, target, base, plan.heff, noise)
    return srock_step(
        lambda K: _fast_drift_arrays(lamp, x_new, K, target, base),
        y, plan.heff, plan.srock, noise)


def step_overdamped(plan: AlmcPlan, l: int, x, y, target, noise):
    """Euler update of x, then the fast step at the updated position.

    ``noise`` holds the (slow, fast) standard-normal slots.  A zero step
    size leaves the state untouched.
    """
    br = plan.branch[l]
    h = plan.h[l]
    if h == 0.0:
        return x, y
    if br == BRANCH_WARM:
        x = x + h * target.grad_batch(x) + plan.sq2h[l] * noise[0]
        return x, y
    g = _slow_drift_arrays(br, plan.lamp[l], x, y, target, plan.cfg.base)
    x_new = x + h * g + plan.sq2h[l] * noise[0]
    return x_new, _fast_step(plan, l, x_new, y, target, noise[1])


def step_underdamped(plan: AlmcPlan, l: int, x, v, y, target, noise):
    """Kinetic update: friction/score half-kicks around a full position
    drift, with the fast step taken at the updated position.

    ``noise`` holds (opening, fast, closing) slots.  The annealing level is
    frozen across the step, so both half-kicks read the same lambda'.
    """
    br = plan.branch[l]
    h = plan.h[l]
    if h == 0.0:
        return x, v, y
    gamma, mass = plan.gamma[l], plan.cfg.mass
    if br == BRANCH_WARM:
        v2 = obabo_halfsteps(v, target.grad_batch(x), gamma, mass, h, noise[0])
        x_new = x + (h / mass) * v2
        v_new = obabo_halfsteps(v2, target.grad_batch(x_new), gamma, mass, h,
                                noise[2], closing=True)
        return x_new, v_new, y
    base, lamp = plan.cfg.base, plan.lamp[l]
    g1 = _slow_drift_arrays(br, lamp, x, y, target, base)
    v2 = obabo_halfsteps(v, g1, gamma, mass, h, noise[0])
    x_new = x + (h / mass) * v2
    y_new = _fast_step(plan, l, x_new, y, target, noise[1])
    g2 = _slow_drift_arrays(br, lamp, x_new, y_new, target, base)
    v_new = obabo_halfsteps(v2, g2, gamma, mass, h, noise[2], closing=True)
    return x_new, v_new, y_new


def run_overdamped(cfg: MultAlmcConfig, target, n_chains: int, seed: int,
                   backend: str | None = None):
    """Run the overdamped sampler; returns the engine's result record."""
    if cfg.kind != OVERDAMPED:
        raise ValueError("config is not overdamped")
    from .backend import run_almc_plan

    return run_almc_plan(build_almc_plan(cfg), target, n_chains, seed,
                         backend=backend)


def run_underdamped(cfg: MultAlmcConfig, target, n_chains: int, seed: int,
                    backend: str | None = None):
    """Run the underdamped sampler; returns the engine's result record."""
    if cfg.kind != UNDERDAMPED:
        raise ValueError("config is not underdamped")
    from .backend import run_almc_plan

    return run_almc_plan(build_almc_plan(cfg), target, n_chains, seed,
                         backend=backend)

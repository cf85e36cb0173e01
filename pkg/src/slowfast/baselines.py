"""Underdamped Langevin Monte Carlo directly on the target.

The baseline shares the kinetic OBABO machinery with the annealed sampler:
it is exactly the warm-phase step applied from the first iteration, so a
run is encoded as a step plan whose every entry is the warm branch.  Two
gradient calls per step.  Friction follows the flat-then-ramp protocol:
constant ``gamma_flat`` for the first half of the run, then a linear climb
to ``gamma_final`` (equilibration first, tighter mixing later).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .backend import run_almc_plan
from .multalmc import MultAlmcConfig, UNDERDAMPED, build_almc_plan
from .schedules import BRANCH_WARM, ClampedSchedule, parse_schedule


def ulmc_friction(steps: int, gamma_flat: float = 1.0,
                  gamma_final: float = 5.0) -> np.ndarray:
    """Per-step friction: flat for the first half, linear ramp after."""
    if steps < 1:
        raise ValueError("need at least one step")
    half = steps // 2
    return np.concatenate([
        np.full(half, float(gamma_flat)),
        np.linspace(gamma_flat, gamma_final, steps - half),
    ])


def ulmc_plan(h: float, steps: int, gamma_flat: float = 1.0,
              gamma_final: float = 5.0, mass: float = 1.0):
    """All-warm step plan: OBABO on the raw target for every step."""
    cfg = MultAlmcConfig(
        kind=UNDERDAMPED, eps=1.0, h=h, steps=steps,
        schedule=ClampedSchedule(parse_schedule("linear")),
        gamma_min=min(gamma_flat, gamma_final),
        gamma_max=max(gamma_flat, gamma_final),
        mass=mass)
    plan = build_almc_plan(cfg)
    warm = np.full(steps, BRANCH_WARM, dtype=np.int8)
    return replace(
        plan,
        branch=warm,
        lamp=np.ones(steps),
        ct=np.zeros(steps),
        cnu=np.zeros(steps),
        gamma=ulmc_friction(steps, gamma_flat, gamma_final),
    )


def run_ulmc(target, h: float, steps: int, n_chains: int, seed: int,
             gamma_flat: float = 1.0, gamma_final: float = 5.0,
             mass: float = 1.0, backend: str | None = None):
    """Run the baseline from a standard-Gaussian start; engine result."""
    plan = ulmc_plan(h, steps, gamma_flat, gamma_final, mass)
    return run_almc_plan(plan, target, n_chains, seed, backend=backend)

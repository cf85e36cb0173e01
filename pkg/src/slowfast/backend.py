"""Engine selection and run entry points.

Two interchangeable engines execute a step plan: a compiled core
(``slowfast._core``, Cython) and a pure-NumPy fallback (``_core_np``).
Selection order: explicit ``backend=`` argument, then the
``SLOWFAST_BACKEND`` environment variable (``cython`` / ``numpy``), then
whichever compiled core imports cleanly.  Both consume the identical
pre-drawn noise stream, so results match across engines to floating-point
reproducibility of the same operations.

RNG protocol: one PCG64 generator per run, seeded from the domain-tagged
sequence ([0, seed]).  Draw order is: initial x, then (if kinetic) initial
v, then initial y, then per-step noise blocks of shape (slots, n, d).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import _core_np
from .multalmc import FAST_LANGEVIN

try:  # pragma: no cover - exercised only where the extension is built
    from . import _core
except ImportError:  # pragma: no cover
    _core = None


@dataclass
class RunResult:
    """Final ensemble state plus accounting from one sampler run."""

    samples: np.ndarray            # (n, d) final slow positions
    velocity: np.ndarray | None    # (n, d) final velocities (kinetic runs)
    fast_state: np.ndarray | None  # (n, d) final fast variables
    eval_count: int                # target-gradient oracle invocations
    steps: int                     # steps actually executed
    aborts: list                   # (step, chain) retirement records
    alive: np.ndarray              # (n,) bool, chains still finite at the end

    @property
    def n_aborted(self) -> int:
        return int((~self.alive).sum())


class PrefetchedNoise:
    """Serves per-step standard-normal blocks from larger pre-drawn chunks.

    Filling a C-ordered (chunk, slots, n, d) array is stream-identical to
    filling (slots, n, d) once per step, so the chunk size is purely a
    memory/throughput knob — it never changes a sample.  Blocks must be
    requested with consecutive step indices starting at 0.
    """

    def __init__(self, rng, steps: int, slots: int, n: int, d: int,
                 max_bytes: int = 64 << 20):
        self._rng = rng
        self._steps = steps
        self._shape = (slots, n, d)
        per = 8 * slots * n * d
        self.chunk = max(1, min(steps, max_bytes // per if per else steps))
        self._buf = None
        self._base = 0

    def step_block(self, l: int) -> np.ndarray:
        if self._buf is None or l >= self._base + self._buf.shape[0]:
            if self._buf is not None:
                self._base += self._buf.shape[0]
            if l != self._base:
                raise RuntimeError("noise blocks must be consumed in order")
            count = min(self.chunk, self._steps - self._base)
            self._buf = self._rng.standard_normal((count,) + self._shape)
        return self._buf[l - self._base]


def _select(backend: str | None) -> str:
    choice = backend or os.environ.get("SLOWFAST_BACKEND", "")
    if choice not in ("", "auto", "cython", "numpy"):
        raise ValueError(f"unknown backend {choice!r}")
    if choice == "cython" and _core is None:
        raise RuntimeError("compiled core requested but not built")
    if choice in ("", "auto"):
        return "cython" if _core is not None else "numpy"
    return choice


def active_backend() -> str:
    """Name of the engine the auto selection would use right now."""
    return _select(None)


def _sampler_rng(seed: int):
    return np.random.default_rng(np.random.SeedSequence([0, int(seed)]))


def run_almc_plan(plan, target, n_chains: int, seed: int,
                  backend: str | None = None) -> RunResult:
    """Execute an annealed slow-fast plan over a fresh chain ensemble."""
    cfg = plan.cfg
    d = target.dim
    rng = _sampler_rng(seed)
    x = cfg.init_scale * rng.standard_normal((n_chains, d))
    v = None
    if plan.noise_slots == 3:
        v = math.sqrt(cfg.mass) * rng.standard_normal((n_chains, d))
    y = rng.standard_normal((n_chains, d))
    noise = PrefetchedNoise(rng, plan.stop_after, plan.noise_slots, n_chains, d)

    eng = _select(backend)
    # the compiled core covers the plain fast dynamics; heavy-tail fast
    # updates and custom targets run on the NumPy engine
    if (eng == "cython" and target.core_spec is not None
            and cfg.fast_kind == FAST_LANGEVIN):
        x, v, y, alive, aborts, steps, evals = _core.run_almc(
            plan, x, v, y, target.core_spec, noise)
        target.add_evals(evals)
    else:
        before = target.eval_counter
        x, v, y, alive, aborts, steps = _core_np.run_almc(
            plan, x, v, y, target, noise)
        evals = target.eval_counter - before
    return RunResult(samples=x, velocity=v, fast_state=y, eval_count=evals,
                     steps=steps, aborts=aborts, alive=alive)


def run_cdiff_plan(plan, target, n_chains: int, seed: int,
                   backend: str | None = None) -> RunResult:
    """Execute a reverse-diffusion plan over a fresh chain ensemble."""
    d = target.dim
    rng = _sampler_rng(seed)
    x = rng.standard_normal((n_chains, d))
    v = math.sqrt(plan.init_mass()) * rng.standard_normal((n_chains, d))
    y = rng.standard_normal((n_chains, d))
    noise = PrefetchedNoise(rng, plan.steps, plan.noise_slots, n_chains, d)

    eng = _select(backend)
    if eng == "cython" and target.core_spec is not None:
        x, v, y, alive, aborts, steps, evals = _core.run_cdiff(
            plan, x, v, y, target.core_spec, noise)
        target.add_evals(evals)
    else:
        before = target.eval_counter
        x, v, y, alive, aborts, steps = _core_np.run_cdiff(
            plan, x, v, y, target, noise)
        evals = target.eval_counter - before
    return RunResult(samples=x, velocity=v, fast_state=y, eval_count=evals,
                     steps=steps, aborts=aborts, alive=alive)

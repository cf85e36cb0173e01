"""Pure-NumPy sampling engines.

These loops drive the reference step functions over pre-drawn noise blocks.
They define the semantics the compiled core must reproduce bit-for-bit:
same noise stream, same update order, same retirement of chains whose
state turns non-finite (the offending step is discarded and the chain
keeps its last finite state to the end).
"""

from __future__ import annotations

import numpy as np

from .multalmc import OVERDAMPED, step_overdamped, step_underdamped
from .multcdiff import step_cdiff


def _finite_rows(*arrays):
    ok = None
    for a in arrays:
        if a is None:
            continue
        row = np.isfinite(a).all(axis=-1)
        ok = row if ok is None else ok & row
    return ok


def _retire(alive, ok, aborts, l):
    newly = alive & ~ok
    if newly.any():
        for c in np.nonzero(newly)[0]:
            aborts.append((l, int(c)))
        alive = alive & ok
        if not alive.any():
            raise RuntimeError(f"all chains aborted by step {l}")
    return alive


def run_almc(plan, x, v, y, target, noise):
    """Advance the annealed slow-fast chain ensemble through the plan.

    Returns (x, v, y, alive, aborts, steps_run).  Dead chains are frozen:
    their rows keep the last finite state while the noise stream keeps
    advancing identically for every chain.
    """
    alive = np.ones(x.shape[0], dtype=bool)
    aborts: list[tuple[int, int]] = []
    under = plan.cfg.kind != OVERDAMPED
    with np.errstate(all="ignore"):
        for l in range(plan.stop_after):
            blk = noise.step_block(l)
            if under:
                xn, vn, yn = step_underdamped(plan, l, x, v, y, target, blk)
            else:
                xn, yn = step_overdamped(plan, l, x, y, target, blk)
                vn = None
            alive = _retire(alive, _finite_rows(xn, vn, yn), aborts, l)
            m = alive[:, None]
            x = np.where(m, xn, x)
            y = np.where(m, yn, y)
            if under:
                v = np.where(m, vn, v)
    return x, v, y, alive, aborts, plan.stop_after


def run_cdiff(plan, x, v, y, target, noise):
    """Advance the reverse-diffusion ensemble; same contract as run_almc."""
    alive = np.ones(x.shape[0], dtype=bool)
    aborts: list[tuple[int, int]] = []
    with np.errstate(all="ignore"):
        for l in range(plan.steps):
            blk = noise.step_block(l)
            xn, vn, yn = step_cdiff(plan, l, x, v, y, target, blk)
            alive = _retire(alive, _finite_rows(xn, vn, yn), aborts, l)
            m = alive[:, None]
            x = np.where(m, xn, x)
            v = np.where(m, vn, v)
            y = np.where(m, yn, y)
    return x, v, y, alive, aborts, plan.steps

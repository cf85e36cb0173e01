"""Shared test helpers: finite-difference oracles and RNG fixtures."""

import numpy as np
import pytest


def fd_grad(f, x, rel=1e-5):
    """Central finite differences with per-coordinate step rel * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(1e-12, float(np.linalg.norm(b)))
    return float(np.linalg.norm(a - b)) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

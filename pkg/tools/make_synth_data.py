"""Regenerate the bundled classification datasets.

The two CSVs under src/slowfast/data/ are deterministic synthetic stand-ins
with the shapes, label alphabets, and rough class balance of the classic
radar-returns (351 rows, 34 features, one structurally-zero column, labels
g/b) and sonar-returns (208 rows, 60 features in [0, 1], labels M/R)
benchmarks.  Features carry a planted linear signal plus label noise, so a
logistic posterior is informative but not separable.  Run from the
repository root:

    python3 tools/make_synth_data.py
"""

import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "src" / "slowfast" / "data"


def _labels(rng, X, sharpness, flip, pos_frac):
    w = rng.standard_normal(X.shape[1])
    w /= np.linalg.norm(w)
    score = X @ w
    thresh = np.quantile(score, 1.0 - pos_frac)
    y = score > thresh
    noisy = rng.random(len(y)) < flip
    y = y ^ noisy
    # soften the boundary: resample a band around the threshold
    band = np.abs(score - thresh) < sharpness
    y[band] = rng.random(band.sum()) < pos_frac
    return y


def make_ionosphere_like(path):
    rng = np.random.default_rng(20240351)
    n, d = 351, 34
    # two latent pulse shapes plus per-row gain, mimicking paired
    # in-phase/quadrature channels
    tgrid = np.linspace(0.0, 1.0, d // 2)
    base_a = np.exp(-3.0 * tgrid) * np.cos(6.0 * tgrid)
    base_b = np.exp(-1.5 * tgrid) * np.sin(9.0 * tgrid)
    mix = rng.random(n)[:, None]
    gain = 0.4 + 0.6 * rng.random(n)[:, None]
    pulses = gain * (mix * base_a + (1 - mix) * base_b)
    X = np.empty((n, d))
    X[:, 0::2] = np.clip(pulses + 0.35 * rng.standard_normal((n, d // 2)), -1, 1)
    X[:, 1::2] = np.clip(0.6 * pulses + 0.45 * rng.standard_normal((n, d // 2)), -1, 1)
    X[:, 0] = 1.0                     # leading channel saturates
    X[:, 1] = 0.0                     # structurally dead column, as in the original
    y = _labels(rng, X, sharpness=0.3, flip=0.08, pos_frac=225 / 351)
    _write(path, X, y, pos="g", neg="b", fmt="%.5f")


def make_sonar_like(path):
    rng = np.random.default_rng(20240208)
    n, d = 208, 60
    freq = np.linspace(0.0, 1.0, d)
    # smooth band-energy envelopes with class-dependent peak location
    centers = rng.normal(0.45, 0.18, n)
    widths = 0.08 + 0.12 * rng.random(n)
    env = np.exp(-0.5 * ((freq[None, :] - centers[:, None]) / widths[:, None]) ** 2)
    X = env + 0.15 * rng.random((n, d)) * np.exp(-freq[None, :])
    X = np.clip(X / X.max(axis=1, keepdims=True), 0.0, 1.0)
    y = _labels(rng, X, sharpness=0.2, flip=0.10, pos_frac=111 / 208)
    _write(path, X, y, pos="M", neg="R", fmt="%.4f")


def _write(path, X, y, pos, neg, fmt):
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(X, y):
            cells = [fmt % v for v in row]
            cells.append(pos if label else neg)
            fh.write(",".join(cells) + "\n")
    print(f"wrote {path}  ({len(y)} rows, {X.shape[1]} features, "
          f"{int(y.sum())} positive)")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    make_ionosphere_like(OUT / "ionosphere_like.csv")
    make_sonar_like(OUT / "sonar_like.csv")

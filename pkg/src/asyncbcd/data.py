"""Datasets for the logistic-regression case study.

Features are dense ``N x m`` float arrays and labels are ``{0, 1}`` integers.
The sparse text format is one sample per line, ``label idx:val idx:val ...``
with 1-based strictly increasing indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    provenance: str = "unknown"

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-D array, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} samples")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


def generate_synthetic(N: int, m: int, separation: float, seed: int = 0,
                       latent_dim: int | None = None, noise: float = 1.0) -> Dataset:
    """Two Gaussian clouds whose means are ``separation`` apart along a random direction.

    Classes are balanced and shuffled.  With ``latent_dim = k`` the within-class
    spread lives on a random ``k``-dimensional subspace containing the separating
    direction and ``noise`` scales an isotropic component on top of it; without
    it the spread is isotropic with standard deviation ``noise``.
    """
    if N < 2:
        raise ValueError(f"need at least 2 samples, got N={N}")
    if m < 1:
        raise ValueError(f"need at least 1 feature, got m={m}")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(N) % 2)
    direction = rng.standard_normal(m)
    direction /= np.linalg.norm(direction)
    centers = np.where(labels[:, None] == 1, 0.5, -0.5) * separation * direction
    if latent_dim is None:
        spread = noise * rng.standard_normal((N, m))
    else:
        if not 1 <= latent_dim <= m:
            raise ValueError(f"latent_dim must lie in [1, {m}], got {latent_dim}")
        basis = rng.standard_normal((latent_dim, m)) / np.sqrt(m)
        basis[0] = direction   # classes overlap along the separating direction
        spread = rng.standard_normal((N, latent_dim)) @ basis + noise * rng.standard_normal((N, m))
    desc = f"synthetic(seed={seed}, N={N}, m={m}, separation={separation:g}"
    desc += ")" if latent_dim is None else f", latent_dim={latent_dim}, noise={noise:g})"
    return Dataset(centers + spread, labels, desc)


def _parse_label(tok: str, lineno: int) -> int:
    try:
        v = float(tok.replace("−", "-"))
    except ValueError:
        raise ValueError(f"line {lineno}: label {tok!r} is not a number") from None
    if v == 1:
        return 1
    if v in (0, -1):
        return 0
    raise ValueError(f"line {lineno}: label {tok!r} is not one of 0, 1, -1, +1")


def load_sparse_text(path, m: int | None = None) -> Dataset:
    """Read the sparse text format; unmentioned entries are 0.

    ``m`` fixes the feature count; by default it is the largest index present.
    """
    rows: list[tuple[list[int], list[float]]] = []
    labels: list[int] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            toks = line.split()
            if not toks:
                continue
            labels.append(_parse_label(toks[0], lineno))
            idx, val = [], []
            for tok in toks[1:]:
                k, sep, v = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    k_int, v_float = int(k), float(v.replace("−", "-"))
                except ValueError:
                    raise ValueError(f"line {lineno}: malformed entry {tok!r}, expected idx:val") from None
                if k_int < 1:
                    raise ValueError(f"line {lineno}: index {k_int} is not 1-based")
                if idx and k_int <= idx[-1]:
                    raise ValueError(f"line {lineno}: index {k_int} does not increase after {idx[-1]}")
                if m is not None and k_int > m:
                    raise ValueError(f"line {lineno}: index {k_int} exceeds the declared m={m}")
                idx.append(k_int)
                val.append(v_float)
            rows.append((idx, val))
    width = m if m is not None else max((r[0][-1] for r in rows if r[0]), default=0)
    X = np.zeros((len(rows), width))
    for r, (idx, val) in enumerate(rows):
        X[r, np.asarray(idx, dtype=np.int64) - 1] = val
    return Dataset(X, np.asarray(labels, dtype=np.int64), f"loaded({path})")


def save_sparse_text(d: Dataset, path) -> None:
    """Write ``d`` in the sparse text format, 17 significant digits, zeros omitted."""
    lines = []
    for x, y in zip(d.features, d.labels):
        nz = np.flatnonzero(x)
        lines.append(" ".join([str(int(y))] + [f"{k + 1}:{x[k]:.17g}" for k in nz]))
    Path(path).write_text("".join(line + "\n" for line in lines))


def standardize(X) -> np.ndarray:
    """Column mean 0 and unbiased variance 1; constant columns become 0."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError(f"standardization needs at least 2 samples, got {X.shape[0]}")
    centered = X - X.mean(axis=0)
    # Exact test on the raw column: a rounding-level sd would blow up noise.
    ok = np.ptp(X, axis=0) > 0
    # Scale first so squaring tiny columns cannot underflow to a zero deviation.
    scale = np.abs(centered[:, ok]).max(axis=0)
    scaled = centered[:, ok] / scale
    out = np.zeros_like(centered)
    out[:, ok] = scaled / scaled.std(axis=0, ddof=1)
    return out


def normalize_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"row {int(zero[0])} is all zero and cannot be scaled to unit norm")
    return X / norms[:, None]


def preprocess(d: Dataset) -> Dataset:
    """Standardize columns, then scale every row to unit Euclidean norm."""
    return Dataset(normalize_rows(standardize(d.features)), d.labels, d.provenance + "+preprocessed")

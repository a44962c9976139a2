"""Synthetic piecewise-constant (or piecewise-affine) regression problems with known truth."""

from __future__ import annotations

import numpy as np

from .model import Dataset, Kernel, NoiseSpec
from .solver import apply_kernel, least_squares


def cells_per_axis(k: int, d_prime: int) -> int:
    q = round(k ** (1.0 / d_prime))
    for cand in (q - 1, q, q + 1):
        if cand >= 1 and cand**d_prime == k:
            return cand
    raise ValueError(f"k={k} is not a perfect {d_prime}-th power")


def cell_sizes(n: int, k: int) -> np.ndarray:
    """``n // k`` samples per cell, remainder spread over the lowest-index cells."""
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    return sizes


def quantile_cells(P: np.ndarray, k: int) -> np.ndarray:
    """Assign each row of ``P`` to one of ``k`` equal-count axis-aligned cells.

    The first column is cut into ``q = k**(1/d')`` slabs by rank, each slab is
    cut by the second column, and so on. Cells are numbered row-major, and
    cell ``j`` receives ``cell_sizes(n, k)[j]`` samples.
    """
    n, dp = P.shape
    q = cells_per_axis(k, dp)
    sizes = cell_sizes(n, k)
    out = np.empty(n, dtype=np.int64)

    def split(idx, axis, first_cell):
        if axis == dp:
            out[idx] = first_cell
            return
        block = q ** (dp - axis - 1)
        idx = idx[np.argsort(P[idx, axis], kind="stable")]
        pos = 0
        for i in range(q):
            lo = first_cell + i * block
            size = int(sizes[lo : lo + block].sum())
            split(idx[pos : pos + size], axis + 1, lo)
            pos += size

    split(np.arange(n), 0, 0)
    return out


def gen_synthetic(
    n: int,
    d: int,
    d_prime: int,
    k: int,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    affine: bool = False,
) -> Dataset:
    """Standard normal features, equal-count true cells over the first ``d_prime`` coordinates.

    Each cell takes a constant drawn from U[0, 1]; with ``affine=True`` it is
    instead ``b + <w, x>`` with ``b ~ U[0, 1]`` and ``w ~ U[-1, 1]^d``. The
    remaining ``d - d_prime`` features do not influence the truth.
    """
    if noise is None:
        noise = NoiseSpec.gaussian(1.0)
    if not 1 <= d_prime <= d:
        raise ValueError("need 1 <= d_prime <= d")
    if k < 1 or n < k:
        raise ValueError(f"need 1 <= k <= n (got k={k}, n={n})")
    cells_per_axis(k, d_prime)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    cells = quantile_cells(X[:, :d_prime], k)
    if affine:
        b = rng.uniform(0.0, 1.0, size=k)
        w = rng.uniform(-1.0, 1.0, size=(k, d))
        truth = b[cells] + np.einsum("ij,ij->i", X, w[cells])
    else:
        values = rng.uniform(0.0, 1.0, size=k)
        truth = values[cells]
    eps = noise.sample(n, np.random.default_rng([seed, noise.seed, 0x5EED]))
    return Dataset(X, truth + eps, d_prime, truth=truth, cells=cells)


def true_fit_mse(dataset: Dataset, kernel: Kernel) -> float:
    """Oracle MSE of the least-squares fit on the true cells: the error floor of any partition search."""
    if dataset.cells is None or dataset.truth is None:
        raise ValueError("dataset carries no true cell assignment")
    pred = np.empty(dataset.n)
    phi = apply_kernel(kernel, dataset.features)
    for c in np.unique(dataset.cells):
        idx = np.flatnonzero(dataset.cells == c)
        theta, _, _ = least_squares(phi[idx], dataset.labels[idx])
        pred[idx] = phi[idx] @ theta
    diff = pred - dataset.truth
    return float(np.mean(diff * diff))

"""Kernel feature maps and per-rectangle least-squares fits."""

from __future__ import annotations

import numpy as np

from .model import FittedPiece, Kernel

RANK_RTOL = 1e-10


def apply_kernel(kernel: Kernel, x) -> np.ndarray:
    """Feature vector(s) of ``x``: ``[1]`` (constant), ``x`` (identity) or ``[x, 1]`` (affine)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if kernel.kind == "constant":
        out = np.ones((X.shape[0], 1))
    elif kernel.kind == "identity":
        out = X.copy()
    else:
        out = np.hstack([X, np.ones((X.shape[0], 1))])
    return out[0] if single else out


def least_squares(features, labels, rtol: float = RANK_RTOL):
    """Minimum-norm least-squares solution.

    Returns ``(theta, sse, effective_rank)``. Singular values below
    ``rtol * s_max`` are treated as zero, which both fixes the numerical rank
    and selects the minimum-norm minimiser when the system is rank deficient.
    """
    A = np.asarray(features, dtype=float)
    b = np.asarray(labels, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: features {A.shape}, labels {b.shape}")
    t, m = A.shape
    if t == 0:
        return np.zeros(m), 0.0, 0
    theta, _, rank, _ = np.linalg.lstsq(A, b, rcond=rtol)
    if rank == t:
        # full row rank: the fit interpolates, so the minimum is exactly zero
        return theta, 0.0, int(rank)
    r = b - A @ theta
    return theta, float(r @ r), int(rank)


def fit_rectangle(node, dataset, kernel: Kernel) -> FittedPiece:
    idx = np.asarray(node.sample_indices, dtype=np.int64)
    m = kernel.output_dim(dataset.d)
    if idx.size == 0:
        return FittedPiece(node.rect, np.zeros(m), 0.0, 0, 0)
    phi = apply_kernel(kernel, dataset.features[idx])
    theta, sse, rank = least_squares(phi, dataset.labels[idx])
    return FittedPiece(node.rect, theta, sse, int(idx.size), rank)


def fit_segments(kernel: Kernel, phi, y, starts, stops):
    """Fit every contiguous segment ``phi[s:e], y[s:e]``.

    Returns arrays ``theta (S, m)``, ``sse (S,)``, ``rank (S,)``. Constant
    kernels and single-row segments use closed forms that coincide with
    ``least_squares``; everything else goes through it segment by segment.
    A nonzero single row is interpolated, so its SSE is exactly zero.
    """
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    S, m = starts.size, phi.shape[1]
    theta = np.zeros((S, m))
    sse = np.zeros(S)
    rank = np.zeros(S, dtype=np.int64)
    if S == 0:
        return theta, sse, rank
    counts = stops - starts
    if kernel.kind == "constant":
        seg, pos = _gather(starts, counts)
        vals = y[pos]
        nz = counts > 0
        mean = np.zeros(S)
        mean[nz] = np.bincount(seg, vals, minlength=S)[nz] / counts[nz]
        resid = vals - mean[seg]
        sse[:] = np.bincount(seg, resid * resid, minlength=S)
        theta[:, 0] = mean
        rank[nz] = 1
        return theta, sse, rank

    single = counts == 1
    if single.any():
        rows = phi[starts[single]]
        norm2 = np.einsum("ij,ij->i", rows, rows)
        ok = norm2 > 0
        th = np.zeros_like(rows)
        th[ok] = rows[ok] * (y[starts[single]][ok] / norm2[ok])[:, None]
        theta[single] = th
        resid = np.where(ok, 0.0, y[starts[single]])
        sse[single] = resid * resid
        rank[single] = ok.astype(np.int64)
    for j in np.flatnonzero(counts > 1):
        th, s, r = least_squares(phi[starts[j] : stops[j]], y[starts[j] : stops[j]])
        theta[j], sse[j], rank[j] = th, s, r
    return theta, sse, rank


def _gather(starts, counts):
    """Segment id and row position of every row covered by the segments."""
    seg = np.repeat(np.arange(starts.size), counts)
    offsets = np.cumsum(counts) - counts
    pos = np.arange(int(counts.sum())) - np.repeat(offsets - starts, counts)
    return seg, pos

"""Independent reference implementations used as test oracles."""

import numpy as np

from segmerge.merge import MergeConfig, fit_merging
from segmerge.model import Dataset, Kernel
from segmerge.solver import apply_kernel


def oracle_fit(A, b):
    if b.size == 0:
        return 0.0
    theta = np.linalg.pinv(A, rcond=1e-10) @ b
    s = np.linalg.svd(A, compute_uv=False)
    if int(np.sum(s > 1e-10 * s[0])) == b.size:
        return 0.0
    r = b - A @ theta
    return float(r @ r)


def replay_oracle(X, y, sigma, stop, kernel):
    """Independent recomputation of every merge round for d'=1.

    Works directly on rank intervals: leaves start as the occupied unit
    cells, a group is any dyadic interval whose occupied halves are both
    current leaves (or one, if the other half is empty).
    """
    n = y.size
    ranks = np.empty(n, dtype=int)
    ranks[np.argsort(X[:, 0], kind="stable")] = np.arange(n)
    n_pad = 1
    while n_pad < n:
        n_pad *= 2
    phi = apply_kernel(kernel, X)

    def members(lo, hi):
        return np.flatnonzero((ranks >= lo) & (ranks < hi))

    def halves(lo, hi):
        mid = (lo + hi) // 2
        return [h for h in ((lo, mid), (mid, hi)) if members(*h).size]

    leaves = {(int(r), int(r) + 1) for r in ranks}
    steps = []
    while True:
        cands = []
        size = 2
        while size <= n_pad:
            for lo in range(0, n_pad, size):
                iv = (lo, lo + size)
                if members(*iv).size and iv not in leaves:
                    hs = halves(*iv)
                    if all(h in leaves for h in hs):
                        cands.append(iv)
            size *= 2
        if len(cands) <= stop:
            break
        errs = {}
        for iv in cands:
            idx = members(*iv)
            errs[iv] = oracle_fit(phi[idx], y[idx]) - sigma**2 * idx.size
        ranked = sorted(cands, key=lambda iv: (-errs[iv], iv[0], -(iv[1] - iv[0])))
        retained, merged = ranked[:stop], ranked[stop:]
        for iv in merged:
            leaves -= set(halves(*iv))
            leaves.add(iv)
        steps.append((ranked, [errs[iv] for iv in ranked], retained, merged))
    return steps, sorted(leaves)


def as_intervals(rects):
    return [(r.lo[0], r.hi[0]) for r in rects]


def replay_equivalent(rng, n):
    """Random d'=1 instance; True when every merge round matches the oracle."""
    kernel = Kernel(str(rng.choice(["constant", "identity", "affine"])))
    X = rng.standard_normal((n, 2))
    y = rng.standard_normal(n) * 3
    sigma = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
    stop = int(rng.integers(1, 4))
    ds = Dataset(X, y, 1)
    trace = []
    model = fit_merging(ds, MergeConfig(sigma, stop, kernel), trace)
    steps, final = replay_oracle(X, y, sigma, stop, kernel)
    if len(steps) != len(trace):
        return False
    for step, (ranked, errs, retained, merged) in zip(trace, steps):
        if as_intervals(step.ranked) != ranked:
            return False
        if as_intervals(step.retained) != retained or as_intervals(step.merged) != merged:
            return False
        if not np.allclose(step.errors, errs, atol=1e-9):
            return False
    return sorted(as_intervals(p.rect for p in model.pieces)) == final

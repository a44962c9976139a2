"""Best-first CART-style regression tree with constant leaves, grown to a leaf budget."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .model import Dataset


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True, eq=False)
class CartModel:
    """Binary tree; ``nodes[i]`` is either a :class:`Split` or a leaf value (float)."""

    nodes: tuple
    d: int

    @property
    def n_pieces(self) -> int:
        return sum(1 for nd in self.nodes if not isinstance(nd, Split))

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.d:
            raise ValueError(f"model expects {self.d} features, got {X.shape[1]}")
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            i, rows = stack.pop()
            nd = self.nodes[i]
            if isinstance(nd, Split):
                go_left = X[rows, nd.feature] <= nd.threshold
                stack.append((nd.left, rows[go_left]))
                stack.append((nd.right, rows[~go_left]))
            else:
                out[rows] = nd
        return float(out[0]) if single else out


def _sse(y):
    r = y - y.mean()
    return float(r @ r)


def best_split(X, y, coords):
    """Lowest total child SSE over all midpoint thresholds.

    Returns ``(total_sse, feature, threshold)`` or ``None`` when no coordinate
    has two distinct values. Ties go to the lowest coordinate, then the lowest
    threshold.
    """
    t = y.size
    if t < 2:
        return None
    yc = y - y.mean()
    best = None
    for j in coords:
        srt = np.argsort(X[:, j], kind="stable")
        xs, ys = X[srt, j], yc[srt]
        ok = np.flatnonzero(xs[1:] > xs[:-1]) + 1  # left child is ys[:i]
        if ok.size == 0:
            continue
        s = np.cumsum(ys)
        q = np.cumsum(ys * ys)
        nl = ok.astype(float)
        nr = t - nl
        sl, ql = s[ok - 1], q[ok - 1]
        sr, qr = s[-1] - sl, q[-1] - ql
        total = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        a = int(np.argmin(total))
        if best is None or total[a] < best[0]:
            i = ok[a]
            best = (float(total[a]), j, 0.5 * (xs[i - 1] + xs[i]))
    return best


def cart_fit(dataset: Dataset, max_leaves: int, allowed_coords: str = "all") -> CartModel:
    """Grow greedily, always splitting the leaf whose best split removes the most SSE.

    ``allowed_coords`` is ``"all"`` or ``"partition"`` (first ``d_prime``
    coordinates only). Growth stops at ``max_leaves`` leaves or when no split
    lowers the training SSE.
    """
    if max_leaves < 1:
        raise ValueError("max_leaves must be at least 1")
    if allowed_coords == "all":
        coords = range(dataset.d)
    elif allowed_coords == "partition":
        coords = range(dataset.d_prime)
    else:
        raise ValueError(f"allowed_coords must be 'all' or 'partition', got {allowed_coords!r}")
    X, y = dataset.features, dataset.labels
    nodes: list = [float(y.mean())]
    rows_of = {0: np.arange(dataset.n)}
    heap = []
    tick = 0

    def consider(i):
        nonlocal tick
        rows = rows_of[i]
        parent = _sse(y[rows])
        found = best_split(X[rows], y[rows], coords)
        if found is None:
            return
        total, j, thr = found
        gain = parent - total
        if gain > 1e-12 * max(parent, 1e-300):
            heapq.heappush(heap, (-gain, tick, i, j, thr))
            tick += 1

    consider(0)
    leaves = 1
    while leaves < max_leaves and heap:
        _, _, i, j, thr = heapq.heappop(heap)
        rows = rows_of.pop(i)
        mask = X[rows, j] <= thr
        left, right = len(nodes), len(nodes) + 1
        nodes.append(float(y[rows[mask]].mean()))
        nodes.append(float(y[rows[~mask]].mean()))
        nodes[i] = Split(j, float(thr), left, right)
        rows_of[left], rows_of[right] = rows[mask], rows[~mask]
        consider(left)
        consider(right)
        leaves += 1
    return CartModel(tuple(nodes), dataset.d)

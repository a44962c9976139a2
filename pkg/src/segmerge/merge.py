"""Bottom-up greedy merging of sibling leaf groups on the dyadic tree."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import DyadicTree, TreeNode, build_grid, build_tree
from .model import Dataset, DesignTable, FittedModel, FittedPiece, Kernel
from .solver import apply_kernel, fit_segments

TIE_CANONICAL = "canonical-order"


@dataclass(frozen=True)
class MergeConfig:
    """Merging parameters.

    sigma : noise scale in the regularised error ``sse - sigma**2 * count``.
    stop_count : number of highest-error sibling groups kept unmerged per
        round; merging stops once no more than this many groups remain.
    """

    sigma: float
    stop_count: int
    kernel: Kernel = field(default_factory=Kernel)
    tie_rule: str = TIE_CANONICAL

    def __post_init__(self):
        if self.stop_count < 1:
            raise ValueError("stop_count must be at least 1")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.tie_rule != TIE_CANONICAL:
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")


def default_stop_count(k: int, n: int, d_prime: int) -> int:
    """``k * ceil(log2 n) ** d_prime``, at least 1."""
    return max(1, k * math.ceil(math.log2(max(n, 1))) ** d_prime)


def regularized_error(piece: FittedPiece, sigma: float) -> float:
    return piece.sse - sigma * sigma * piece.count


def piece_count_bound(n_padded: int, d_prime: int, stop_count: int) -> int:
    """Upper bound on the number of pieces greedy_merge can return."""
    levels = n_padded.bit_length() - 1
    return (1 << d_prime) * stop_count * (levels + 2)


def sibling_groups(tree: DyadicTree, leaves=None) -> list[TreeNode]:
    """Internal nodes whose existing children are all leaves, in pre-order.

    ``leaves`` optionally gives node ids to treat as leaves, i.e. a cut of the
    tree after some merging; their descendants are ignored.
    """
    if leaves is None:
        return [nd for nd in tree.nodes if nd.children and all(ch.is_leaf for ch in nd.children)]
    leaves = set(leaves)
    out = []
    stack = [tree.root]
    while stack:
        nd = stack.pop()
        if nd.id in leaves or not nd.children:
            continue
        if all(ch.id in leaves or not ch.children for ch in nd.children):
            out.append(nd)
        else:
            stack.extend(reversed(nd.children))
    return sorted(out, key=lambda nd: nd.id)


@dataclass(frozen=True)
class MergeStep:
    """One round of merging, for inspection and replay."""

    iteration: int
    ranked: tuple  # candidate RankRects, largest regularised error first
    errors: tuple  # regularised errors aligned with ``ranked``
    retained: tuple
    merged: tuple
    leaves_after: int
    nodes_after: int


def greedy_merge(tree: DyadicTree, dataset: Dataset, config: MergeConfig, trace: list | None = None) -> FittedModel:
    """Merge sibling leaf groups until at most ``stop_count`` candidate groups remain.

    Each round fits every candidate group on the union of its samples, keeps
    the ``stop_count`` groups with the largest regularised error and
    collapses every other group into its parent. Ties are ranked by
    pre-order position, earlier first. If ``trace`` is a list, one
    :class:`MergeStep` per round is appended to it.
    """
    nodes = tree.nodes
    kernel, stop, s2 = config.kernel, config.stop_count, config.sigma**2
    order = tree.order
    phi = apply_kernel(kernel, dataset.features[order])
    y = dataset.labels[order]
    N = len(nodes)

    is_leaf = [nd.is_leaf for nd in nodes]
    pending = [sum(1 for ch in nd.children if not ch.is_leaf) for nd in nodes]
    counts = np.array([nd.count for nd in nodes], dtype=np.int64)
    theta = np.zeros((N, phi.shape[1]))
    sse = np.zeros(N)
    rank = np.zeros(N, dtype=np.int64)
    fitted = np.zeros(N, dtype=bool)

    def fit(ids):
        if not ids:
            return
        ids = np.asarray(ids, dtype=np.int64)
        starts = np.array([nodes[i].start for i in ids], dtype=np.int64)
        stops = np.array([nodes[i].stop for i in ids], dtype=np.int64)
        theta[ids], sse[ids], rank[ids] = fit_segments(kernel, phi, y, starts, stops)
        fitted[ids] = True

    fit([i for i in range(N) if is_leaf[i]])
    candidates = [nd.id for nd in nodes if nd.children and pending[nd.id] == 0]
    n_leaves = sum(is_leaf)
    n_live = N
    iteration = 0
    while len(candidates) > stop:
        single, multi = [], []
        for c in candidates:
            if not fitted[c]:
                (single if len(nodes[c].children) == 1 else multi).append(c)
        for c in single:
            # same samples as the only child, so the child's fit is the group fit
            ch = nodes[c].children[0].id
            theta[c], sse[c], rank[c] = theta[ch], sse[ch], rank[ch]
            fitted[c] = True
        fit(multi)

        cand = np.asarray(candidates, dtype=np.int64)
        err = sse[cand] - s2 * counts[cand]
        ranked = cand[np.lexsort((cand, -err))]
        retained, merged = ranked[:stop].tolist(), ranked[stop:].tolist()

        fresh = []
        for p in merged:
            is_leaf[p] = True
            k = len(nodes[p].children)
            n_leaves -= k - 1
            n_live -= k
            parent = nodes[p].parent_id
            if parent >= 0:
                pending[parent] -= 1
                if pending[parent] == 0:
                    fresh.append(parent)
        if trace is not None:
            err_by_id = dict(zip(cand.tolist(), err.tolist()))
            trace.append(
                MergeStep(
                    iteration,
                    tuple(nodes[i].rect for i in ranked.tolist()),
                    tuple(err_by_id[i] for i in ranked.tolist()),
                    tuple(nodes[i].rect for i in retained),
                    tuple(nodes[i].rect for i in merged),
                    n_leaves,
                    n_live,
                )
            )
        candidates = sorted(retained + fresh)
        iteration += 1

    pieces = []
    stack = [nodes[0]]
    while stack:
        nd = stack.pop()
        if is_leaf[nd.id]:
            i = nd.id
            pieces.append(FittedPiece(nd.rect, theta[i].copy(), max(float(sse[i]), 0.0), int(counts[i]), int(rank[i])))
        else:
            stack.extend(reversed(nd.children))
    design = DesignTable(dataset.partition_features, tree.ranks)
    return FittedModel(tuple(pieces), tree.grid, kernel, dataset.d, design=design)


def fit_merging(dataset: Dataset, config: MergeConfig, trace: list | None = None) -> FittedModel:
    """Grid, tree and merge in one call."""
    grid = build_grid(dataset)
    return greedy_merge(build_tree(grid, dataset), dataset, config, trace=trace)


def estimate_sigma(tree: DyadicTree, dataset: Dataset, kernel: Kernel) -> float:
    """Heuristic noise scale; not part of the merging procedure itself.

    Takes the smallest tree nodes holding at least ``m + 2`` samples, converts
    each node's residual sum of squares into a per-degree-of-freedom variance
    (median-corrected for its chi-square spread) and returns the square root
    of the median.
    """
    m = kernel.output_dim(dataset.d)
    need = m + 2
    chosen = [
        nd for nd in tree.nodes if nd.count >= need and all(ch.count < need for ch in nd.children)
    ]
    if not chosen:
        chosen = [tree.root]
    order = tree.order
    phi = apply_kernel(kernel, dataset.features[order])
    y = dataset.labels[order]
    starts = np.array([nd.start for nd in chosen])
    stops = np.array([nd.stop for nd in chosen])
    _, sse, rank = fit_segments(kernel, phi, y, starts, stops)
    dof = (stops - starts) - rank
    ok = dof > 0
    if not ok.any():
        return 0.0
    nu = dof[ok].astype(float)
    var = sse[ok] / nu / (1.0 - 2.0 / (9.0 * nu)) ** 3
    return float(math.sqrt(max(np.median(var), 0.0)))


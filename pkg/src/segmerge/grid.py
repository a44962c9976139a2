"""Data-dependent rank grid, the 2^d'-ary dyadic tree over it, and dyadic decompositions.

Samples are ordered along a Z-order (Morton) curve of their rank cells, with
the first partition coordinate taking the most significant bit at every
level. Every dyadic node then owns a contiguous slice of that order, and the
children of a node appear in row-major order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import Dataset, DatasetError, Grid, RankRect

_INT64_BITS = 62


def build_grid(dataset: Dataset) -> Grid:
    """Sorted per-coordinate sample values (duplicates kept), padded with the maximum."""
    n = dataset.n
    if n == 0:
        raise DatasetError("empty dataset")
    n_padded = 1 << (n - 1).bit_length()
    vals = np.sort(dataset.partition_features, axis=0).T
    if n_padded > n:
        pad = np.repeat(vals[:, -1:], n_padded - n, axis=1)
        vals = np.concatenate([vals, pad], axis=1)
    return Grid(vals, n=n)


def sample_ranks(dataset: Dataset) -> np.ndarray:
    """Rank cell of every training sample; ties go to the lower sample index first."""
    P = dataset.partition_features
    ranks = np.empty(P.shape, dtype=np.int64)
    pos = np.arange(dataset.n)
    for c in range(P.shape[1]):
        ranks[np.argsort(P[:, c], kind="stable"), c] = pos
    return ranks


def level_rectangles(grid: Grid, level: int) -> list[RankRect]:
    if not 0 <= level <= grid.levels:
        raise ValueError(f"level {level} outside [0, {grid.levels}]")
    per_axis = range(grid.n_padded >> level)
    return [RankRect.from_cell(cell, level) for cell in itertools.product(per_axis, repeat=grid.d_prime)]


# ---------------------------------------------------------------- Z-order codes


def _code_dtype(d_prime, levels):
    return np.int64 if d_prime * levels <= _INT64_BITS else object


def interleave(cells, nbits, d_prime) -> np.ndarray:
    """Morton code of integer cells (array of shape (N, d_prime)) with ``nbits`` bits per axis."""
    cells = np.asarray(cells)
    dtype = _code_dtype(d_prime, nbits)
    cells = cells.astype(dtype)
    code = np.zeros(cells.shape[0], dtype=dtype)
    for b in range(nbits):
        for c in range(d_prime):
            code |= ((cells[:, c] >> b) & 1) << (b * d_prime + d_prime - 1 - c)
    return code


def deinterleave(code: int, nbits: int, d_prime: int) -> tuple:
    cell = [0] * d_prime
    code = int(code)
    for b in range(nbits):
        for c in range(d_prime):
            cell[c] |= ((code >> (b * d_prime + d_prime - 1 - c)) & 1) << b
    return tuple(cell)


# ---------------------------------------------------------------- tree


class TreeNode:
    """Node of the dyadic tree; owns samples ``order[start:stop]``."""

    __slots__ = ("id", "parent_id", "level", "cell", "start", "stop", "children", "sample_indices")

    def __init__(self, level, cell, start, stop, children, sample_indices):
        self.id = -1
        self.parent_id = -1
        self.level = level
        self.cell = cell
        self.start = start
        self.stop = stop
        self.children = children
        self.sample_indices = sample_indices

    @property
    def rect(self) -> RankRect:
        return RankRect.from_cell(self.cell, self.level)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def count(self) -> int:
        return self.stop - self.start

    def __repr__(self):
        return f"TreeNode(id={self.id}, rect={self.rect}, count={self.count}, children={len(self.children)})"


@dataclass(frozen=True, eq=False)
class DyadicTree:
    """Complete dyadic tree restricted to non-empty nodes, stored in pre-order."""

    grid: Grid
    ranks: np.ndarray  # per-sample rank cell, (n, d_prime)
    order: np.ndarray  # sample indices sorted along the Z-order curve
    nodes: tuple  # pre-order; nodes[i].id == i

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def d_prime(self) -> int:
        return self.grid.d_prime

    def leaves(self):
        return [nd for nd in self.nodes if nd.is_leaf]


def build_tree(grid: Grid, dataset: Dataset) -> DyadicTree:
    if grid.n != dataset.n or grid.d_prime != dataset.d_prime:
        raise ValueError("grid was not built from this dataset")
    n, dp, L = dataset.n, grid.d_prime, grid.levels
    ranks = sample_ranks(dataset)
    codes = interleave(ranks, L, dp)
    order = np.argsort(codes, kind="stable")
    order.setflags(write=False)
    ranks.setflags(write=False)
    sorted_codes = codes[order]
    sorted_ranks = ranks[order]

    prev = None  # (nodes, starts) of the level below
    for level in range(L + 1):
        keys = sorted_codes >> (level * dp)
        cut = np.flatnonzero(keys[1:] != keys[:-1]) + 1
        starts = np.concatenate([[0], cut]).astype(np.int64)
        stops = np.concatenate([cut, [n]]).astype(np.int64)
        cells = (sorted_ranks[starts] >> level).tolist()
        if prev is None:
            child_groups = [()] * len(starts)
        else:
            below, below_starts = prev
            owner = np.searchsorted(starts, below_starts, side="right") - 1
            bounds = np.searchsorted(owner, np.arange(len(starts) + 1), side="left").tolist()
            child_groups = [tuple(below[bounds[j] : bounds[j + 1]]) for j in range(len(starts))]
        s_list, e_list = starts.tolist(), stops.tolist()
        level_nodes = [
            TreeNode(level, tuple(cells[j]), s_list[j], e_list[j], child_groups[j], order[s_list[j] : e_list[j]])
            for j in range(len(starts))
        ]
        prev = (level_nodes, starts)
    roots = prev[0]
    assert len(roots) == 1

    nodes = []
    stack = [(roots[0], -1)]
    while stack:
        nd, parent = stack.pop()
        nd.id = len(nodes)
        nd.parent_id = parent
        nodes.append(nd)
        stack.extend((ch, nd.id) for ch in reversed(nd.children))
    return DyadicTree(grid, ranks, order, tuple(nodes))


# ---------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class DyadicBox:
    """Product of per-axis aligned dyadic intervals; sides may differ between axes."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        for a, b in zip(self.lo, self.hi):
            size = b - a
            if not 0 <= a < b or size & (size - 1) or a % size:
                raise ValueError(f"[{a},{b}) is not an aligned dyadic interval")

    def cells(self):
        return itertools.product(*(range(a, b) for a, b in zip(self.lo, self.hi)))


def _check_range(lo, hi, n_padded):
    if n_padded < 1 or n_padded & (n_padded - 1):
        raise ValueError("n_padded must be a power of two")
    if not 0 <= lo < hi <= n_padded:
        raise ValueError(f"invalid rank range [{lo}, {hi}) for n_padded={n_padded}")


def dyadic_decompose_interval(lo: int, hi: int, n_padded: int) -> list[tuple[int, int]]:
    """Canonical minimal cover of ``[lo, hi)`` by disjoint aligned power-of-two intervals."""
    _check_range(lo, hi, n_padded)
    out = []
    while lo < hi:
        size = (lo & -lo) if lo else n_padded
        while lo + size > hi:
            size >>= 1
        out.append((lo, lo + size))
        lo += size
    return out


def decompose_rectangle(ranges, n_padded: int) -> list[DyadicBox]:
    """Cross product of per-axis dyadic covers of the box ``ranges = [(lo, hi), ...]``."""
    axes = [dyadic_decompose_interval(lo, hi, n_padded) for lo, hi in ranges]
    return [DyadicBox(tuple(a for a, _ in combo), tuple(b for _, b in combo)) for combo in itertools.product(*axes)]


def decompose_to_nodes(ranges, n_padded: int) -> list[RankRect]:
    """Fewest dyadic tree nodes (equal-side cubes) tiling the box ``ranges``."""
    for lo, hi in ranges:
        _check_range(lo, hi, n_padded)
    out = []
    d = len(ranges)
    level0 = n_padded.bit_length() - 1

    def visit(cell, level):
        side = 1 << level
        lo = [c * side for c in cell]
        inside = all(ranges[i][0] <= lo[i] and lo[i] + side <= ranges[i][1] for i in range(d))
        if inside:
            out.append(RankRect.from_cell(cell, level))
            return
        if any(lo[i] >= ranges[i][1] or lo[i] + side <= ranges[i][0] for i in range(d)):
            return
        for bits in itertools.product((0, 1), repeat=d):
            visit(tuple(2 * c + b for c, b in zip(cell, bits)), level - 1)

    visit((0,) * d, level0)
    return out


# ---------------------------------------------------------------- prediction routing


def _chebyshev(cell, child_cell, level):
    side = 1 << level
    dist = 0
    for q, c in zip(cell, child_cell):
        lo = c * side
        dist = max(dist, lo - q, q - (lo + side - 1))
    return dist


class PieceLocator:
    """Maps rank cells to the piece that predicts them.

    A cell inside a piece maps to that piece. Otherwise the query descends the
    tree skeleton implied by the pieces; whenever the child it belongs to is
    absent it moves to the existing sibling nearest in Chebyshev distance,
    lowest row-major index on ties.
    """

    def __init__(self, pieces, grid: Grid):
        self.d_prime = dp = grid.d_prime
        self.levels = L = grid.levels
        by_level = {}
        for i, p in enumerate(pieces):
            by_level.setdefault(p.rect.level, []).append((p.rect.cell, i))
        self._tables = []
        for level, items in sorted(by_level.items()):
            codes = interleave(np.array([c for c, _ in items], dtype=np.int64).reshape(-1, dp), L - level, dp)
            idx = np.array([i for _, i in items], dtype=np.int64)
            srt = np.argsort(codes, kind="stable")
            self._tables.append((level, codes[srt], idx[srt]))
        self._piece_at = {(p.rect.level, p.rect.cell): i for i, p in enumerate(pieces)}
        children = {}
        for level, cell in list(self._piece_at):
            while level < L:
                parent = tuple(c >> 1 for c in cell)
                kids = children.setdefault((level + 1, parent), set())
                if cell in kids:
                    break
                kids.add(cell)
                level, cell = level + 1, parent
        self._children = {k: sorted(v) for k, v in children.items()}

    def locate(self, ranks) -> np.ndarray:
        ranks = np.atleast_2d(np.asarray(ranks, dtype=np.int64))
        out = np.full(ranks.shape[0], -1, dtype=np.int64)
        if ranks.shape[0] == 0:
            return out
        q = interleave(ranks, self.levels, self.d_prime)
        for level, codes, idx in self._tables:
            pref = q >> (level * self.d_prime)
            pos = np.searchsorted(codes, pref)
            pos_c = np.minimum(pos, len(codes) - 1)
            hit = (pos < len(codes)) & (codes[pos_c] == pref)
            out[hit] = idx[pos_c[hit]]
        for i in np.flatnonzero(out < 0):
            out[i] = self._descend(tuple(int(v) for v in ranks[i]))
        return out

    def _descend(self, cell):
        level, node = self.levels, (0,) * self.d_prime
        while (level, node) not in self._piece_at:
            kids = self._children[(level, node)]
            want = tuple(c >> (level - 1) for c in cell)
            if want not in kids:
                want = min(kids, key=lambda k: (_chebyshev(cell, k, level - 1), k))
            level, node = level - 1, want
        return self._piece_at[(level, node)]

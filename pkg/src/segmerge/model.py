"""Shared domain types: datasets, noise specs, rank-space grids and fitted models."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed datasets or dataset files."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """n samples of d features and a scalar label.

    The first ``d_prime`` feature columns are the partition coordinates.
    ``truth`` holds the noiseless values when known, and ``cells`` the true
    piece index of each sample (synthetic data only).
    """

    features: np.ndarray
    labels: np.ndarray
    d_prime: int
    truth: Optional[np.ndarray] = None
    cells: Optional[np.ndarray] = None

    def __post_init__(self):
        X = _frozen(self.features)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        if X.ndim != 2:
            raise DatasetError("features must be a 2-d array")
        y = _frozen(self.labels)
        n, d = X.shape
        if n < 1:
            raise DatasetError("empty dataset")
        if y.shape != (n,):
            raise DatasetError(f"labels have shape {y.shape}, expected ({n},)")
        if not 1 <= int(self.d_prime) <= d:
            raise DatasetError(f"d_prime={self.d_prime} must lie in [1, {d}]")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DatasetError("non-finite values are not supported")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "d_prime", int(self.d_prime))
        if self.truth is not None:
            t = _frozen(self.truth)
            if t.shape != (n,):
                raise DatasetError(f"truth has shape {t.shape}, expected ({n},)")
            object.__setattr__(self, "truth", t)
        if self.cells is not None:
            c = _frozen(self.cells, dtype=np.int64)
            if c.shape != (n,):
                raise DatasetError(f"cells has shape {c.shape}, expected ({n},)")
            object.__setattr__(self, "cells", c)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def partition_features(self) -> np.ndarray:
        return self.features[:, : self.d_prime]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive i.i.d. noise: ``variance`` is s^2, ``variance_proxy`` the sub-Gaussian sigma^2."""

    kind: str = "gaussian"
    variance_proxy: float = 1.0
    variance: float = 1.0
    seed: int = 0

    KINDS = ("gaussian", "uniform", "none")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.variance < 0 or self.variance_proxy < 0:
            raise ValueError("variances must be non-negative")
        if self.variance > self.variance_proxy:
            raise ValueError("variance must not exceed the variance proxy")
        if self.kind == "gaussian" and self.variance != self.variance_proxy:
            raise ValueError("gaussian noise has variance equal to its proxy")
        if self.kind == "none" and (self.variance or self.variance_proxy):
            raise ValueError("noise kind 'none' requires zero variances")

    @classmethod
    def gaussian(cls, variance=1.0, seed=0):
        return cls("gaussian", variance, variance, seed)

    @classmethod
    def uniform(cls, variance=1.0, seed=0):
        # uniform noise is strictly sub-Gaussian: its optimal proxy equals its variance
        return cls("uniform", variance, variance, seed)

    @classmethod
    def none(cls, seed=0):
        return cls("none", 0.0, 0.0, seed)

    def sample(self, n, rng):
        if self.kind == "gaussian":
            return rng.normal(0.0, np.sqrt(self.variance), size=n)
        if self.kind == "uniform":
            half = np.sqrt(3.0 * self.variance)
            return rng.uniform(-half, half, size=n)
        return np.zeros(n)


@dataclass(frozen=True, eq=False)
class Grid:
    """Per-coordinate sorted sample values, padded to a power-of-two length."""

    boundaries: np.ndarray  # shape (d_prime, n_padded)
    n: int

    def __post_init__(self):
        b = _frozen(self.boundaries)
        if b.ndim != 2:
            raise ValueError("boundaries must be a 2-d array")
        n_padded = b.shape[1]
        if n_padded < 1 or n_padded & (n_padded - 1):
            raise ValueError("boundary arrays must have power-of-two length")
        if np.any(np.diff(b, axis=1) < 0):
            raise ValueError("boundary arrays must be non-decreasing")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_padded(self) -> int:
        return self.boundaries.shape[1]

    @property
    def d_prime(self) -> int:
        return self.boundaries.shape[0]

    @property
    def levels(self) -> int:
        return self.n_padded.bit_length() - 1


def rank_of(grid: Grid, x) -> np.ndarray:
    """Rank cell of query point(s) ``x``.

    For each partition coordinate the rank is the number of boundary values
    strictly below ``x_c``, clamped to ``[0, n_padded - 1]``. Accepts a single
    d-vector or an (N, d) array; only the first ``d_prime`` entries are used.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] < grid.d_prime:
        raise ValueError(f"query has {pts.shape[1]} coordinates, need at least {grid.d_prime}")
    out = np.empty((pts.shape[0], grid.d_prime), dtype=np.int64)
    for c in range(grid.d_prime):
        out[:, c] = np.searchsorted(grid.boundaries[c], pts[:, c], side="left")
    np.clip(out, 0, grid.n_padded - 1, out=out)
    return out[0] if single else out


@dataclass(frozen=True)
class RankRect:
    """Aligned half-open rank box ``[lo_c, hi_c)`` with side ``2**level`` in every coordinate."""

    lo: tuple
    hi: tuple
    level: int

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must be non-empty and of equal length")
        side = 1 << self.level
        for a, b in zip(lo, hi):
            if not 0 <= a < b or b - a != side or a % side:
                raise ValueError(f"invalid dyadic rectangle {lo}-{hi} at level {self.level}")

    @classmethod
    def from_cell(cls, cell, level):
        side = 1 << level
        lo = tuple(int(c) * side for c in cell)
        return cls(lo, tuple(a + side for a in lo), level)

    @property
    def d_prime(self) -> int:
        return len(self.lo)

    @property
    def side(self) -> int:
        return 1 << self.level

    @property
    def cell(self) -> tuple:
        """Index of this rectangle among the level-``level`` rectangles, per coordinate."""
        return tuple(a >> self.level for a in self.lo)

    def contains(self, ranks) -> np.ndarray | bool:
        r = np.asarray(ranks)
        inside = np.all((r >= self.lo) & (r < self.hi), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def within(self, n_padded) -> bool:
        return all(b <= n_padded for b in self.hi)

    def __str__(self):
        return "x".join(f"[{a},{b})" for a, b in zip(self.lo, self.hi))


@dataclass(frozen=True)
class Kernel:
    """Feature map applied before each per-piece linear fit."""

    kind: str = "affine"

    KINDS = ("constant", "identity", "affine")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {self.KINDS}")

    def output_dim(self, d: int) -> int:
        return {"constant": 1, "identity": d, "affine": d + 1}[self.kind]


@dataclass(frozen=True, eq=False)
class FittedPiece:
    rect: RankRect
    theta: np.ndarray
    sse: float
    count: int
    effective_rank: int

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(self.theta))
        if self.sse < 0 or self.count < 0:
            raise ValueError("sse and count must be non-negative")
        if self.effective_rank > min(self.count, self.theta.size):
            raise ValueError("effective rank exceeds min(count, m)")


FALLBACK_NEAREST_SIBLING = "nearest-sibling-chebyshev"


@dataclass(frozen=True, eq=False)
class DesignTable:
    """Rank cells of the training samples, keyed by their partition coordinates.

    Tied coordinate values are spread over several ranks during training, so
    counting boundaries cannot recover a design point's own cell. Queries that
    coincide with a design point use that point's cell (the lowest sample
    index wins among exact duplicates).
    """

    coords: np.ndarray  # (n, d_prime)
    ranks: np.ndarray  # (n, d_prime)

    def __post_init__(self):
        c = _frozen(self.coords)
        r = _frozen(self.ranks, dtype=np.int64)
        if c.ndim != 2 or c.shape != r.shape:
            raise ValueError("design coords and ranks must share a 2-d shape")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "ranks", r)
        lookup = {}
        for i, key in enumerate(map(tuple, c.tolist())):
            lookup.setdefault(key, i)
        object.__setattr__(self, "_lookup", lookup)

    def cells(self, grid: Grid, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = rank_of(grid, X)
        lookup = self._lookup
        for j, key in enumerate(map(tuple, X[:, : grid.d_prime].tolist())):
            i = lookup.get(key)
            if i is not None:
                out[j] = self.ranks[i]
        return out


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Piecewise linear predictor over a rank-space partition.

    ``pieces`` are pairwise disjoint dyadic rectangles, sorted in canonical
    (Z-order) position. Queries whose rank cell is not covered by any piece
    are routed by ``fallback``.
    """

    pieces: tuple
    grid: Grid
    kernel: Kernel
    d: int
    fallback: str = FALLBACK_NEAREST_SIBLING
    design: Optional[DesignTable] = None
    _locator: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if not self.pieces:
            raise ValueError("a model needs at least one piece")
        if self.fallback != FALLBACK_NEAREST_SIBLING:
            raise ValueError(f"unknown fallback rule {self.fallback!r}")
        m = self.kernel.output_dim(self.d)
        for p in self.pieces:
            if p.theta.shape != (m,):
                raise ValueError("piece coefficient length does not match the kernel")
            if p.rect.d_prime != self.grid.d_prime or not p.rect.within(self.grid.n_padded):
                raise ValueError(f"piece {p.rect} does not fit the grid")
        # imported here: the locator lives with the tree code
        from .grid import PieceLocator

        object.__setattr__(self, "_locator", PieceLocator(self.pieces, self.grid))

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @property
    def d_prime(self) -> int:
        return self.grid.d_prime

    def query_cells(self, X) -> np.ndarray:
        """Rank cell each row of ``X`` is routed through."""
        if self.design is not None:
            return self.design.cells(self.grid, X)
        return rank_of(self.grid, np.atleast_2d(np.asarray(X, dtype=float)))

    def piece_index(self, X) -> np.ndarray:
        """Index into ``pieces`` used to predict each row of ``X``."""
        return self._locator.locate(self.query_cells(X))

    def predict(self, X) -> np.ndarray | float:
        from .solver import apply_kernel

        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.d:
            raise ValueError(f"model expects {self.d} features, got {X.shape[1]}")
        idx = self.piece_index(X)
        thetas = np.stack([p.theta for p in self.pieces])
        phi = apply_kernel(self.kernel, X)
        out = np.einsum("ij,ij->i", phi, thetas[idx])
        return float(out[0]) if single else out

    @property
    def total_sse(self) -> float:
        return float(sum(p.sse for p in self.pieces))


# ---------------------------------------------------------------- CSV i/o


def read_csv(path, d_prime: int) -> Dataset:
    """Read ``f1..fd,y[,truth]`` rows. Raises DatasetError with the offending line."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError("missing header row", line=1) from None
        features, has_truth = _parse_header(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DatasetError(str(exc), line=lineno) from None
    if not rows:
        raise DatasetError("no data rows")
    a = np.array(rows)
    d = len(features)
    if not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(a), axis=1))[0])
        raise DatasetError("non-finite value", line=bad + 2)
    return Dataset(a[:, :d], a[:, d], d_prime, truth=a[:, d + 1] if has_truth else None)


def _parse_header(header):
    names = list(header)
    has_truth = names[-1] == "truth"
    if has_truth:
        names = names[:-1]
    if len(names) < 2 or names[-1] != "y":
        raise DatasetError("header must be f1,...,fd,y[,truth]", line=1)
    features = names[:-1]
    expected = [f"f{i + 1}" for i in range(len(features))]
    if features != expected:
        raise DatasetError(f"feature columns must be named {','.join(expected)}", line=1)
    return features, has_truth


def read_features_csv(path) -> np.ndarray:
    """Read a query file: ``f1..fd`` columns, optional extra ``y``/``truth`` columns are ignored."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return np.empty((0, 0))
        d = 0
        while d < len(header) and header[d] == f"f{d + 1}":
            d += 1
        if d == 0 or any(h not in ("y", "truth") for h in header[d:]):
            raise DatasetError("query header must start with f1,...,fd", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                rows.append([float(c) for c in row[:d]])
            except ValueError as exc:
                raise DatasetError(str(exc), line=lineno) from None
    return np.array(rows, dtype=float).reshape(len(rows), d)


def write_csv(dataset: Dataset, path, with_truth: bool = True) -> None:
    header = [f"f{i + 1}" for i in range(dataset.d)] + ["y"]
    truth = dataset.truth if with_truth else None
    if truth is not None:
        header.append("truth")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]] + [repr(float(dataset.labels[i]))]
            if truth is not None:
                row.append(repr(float(truth[i])))
            w.writerow(row)


def subset(dataset: Dataset, idx: Sequence[int]) -> Dataset:
    idx = np.asarray(idx, dtype=np.int64)
    return Dataset(
        dataset.features[idx],
        dataset.labels[idx],
        dataset.d_prime,
        truth=None if dataset.truth is None else dataset.truth[idx],
        cells=None if dataset.cells is None else dataset.cells[idx],
    )

import numpy as np

from segmerge.grid import build_grid, build_tree, sample_ranks
from segmerge.merge import piece_count_bound
from segmerge.model import Dataset, RankRect


def random_dataset(rng, n, d, d_prime, ties=False):
    X = rng.standard_normal((n, d))
    if ties:
        X[:, :d_prime] = np.round(X[:, :d_prime], 1)
    y = rng.standard_normal(n)
    return Dataset(X, y, d_prime, truth=y * 0.5)


def assert_valid_model(model, dataset, stop_count=None):
    """Partition, dyadic validity and (optionally) the piece-count bound."""
    grid = model.grid
    for p in model.pieces:
        r = p.rect
        RankRect(r.lo, r.hi, r.level)  # re-validates alignment
        assert r.within(grid.n_padded)
    ranks = sample_ranks(dataset)
    member = np.zeros(dataset.n, dtype=int)
    for p in model.pieces:
        inside = p.rect.contains(ranks)
        assert inside.sum() == p.count
        member += inside
    assert np.all(member == 1), "every sample must lie in exactly one piece"
    assert model.n_pieces <= dataset.n
    if stop_count is not None:
        assert model.n_pieces <= piece_count_bound(grid.n_padded, grid.d_prime, stop_count)


def tree_for(dataset):
    return build_tree(build_grid(dataset), dataset)

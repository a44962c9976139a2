import functools

import numpy as np
import pytest

import segmerge
import segmerge.bench
import segmerge.cli
import segmerge.merge

# ---------------------------------------------------------------- piece-count monitor
# Every model produced by greedy_merge anywhere in the run is checked against
# piece_count_bound; a violation fails the calling test immediately and is
# counted for the end-of-run acceptance report.

BOUND_LOG = {"models": 0, "violations": []}
_original_merge = segmerge.merge.greedy_merge


@functools.wraps(_original_merge)
def _checked_merge(tree, dataset, config, trace=None):
    model = _original_merge(tree, dataset, config, trace)
    bound = segmerge.merge.piece_count_bound(tree.grid.n_padded, tree.grid.d_prime, config.stop_count)
    BOUND_LOG["models"] += 1
    if model.n_pieces > bound:
        BOUND_LOG["violations"].append((dataset.n, tree.grid.d_prime, config.stop_count, model.n_pieces, bound))
        raise AssertionError(f"{model.n_pieces} pieces exceeds bound {bound}")
    return model


for _mod in (segmerge, segmerge.merge, segmerge.bench, segmerge.cli):
    _mod.greedy_merge = _checked_merge

# ---------------------------------------------------------------- acceptance report

ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE and not BOUND_LOG["models"]:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    if "C4" in ACCEPTANCE:
        # fold in every model built anywhere in the run, not only the dedicated sweep
        own, detail = ACCEPTANCE["C4"]
        suite = f"{BOUND_LOG['models']} merging models checked suite-wide, {len(BOUND_LOG['violations'])} violations"
        record("C4", own and not BOUND_LOG["violations"], f"{detail}; {suite}")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        passed, detail = ACCEPTANCE[key]
        tr.write_line(f"{key} {'PASS' if passed else 'FAIL'}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

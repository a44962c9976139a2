"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that the terminal summary prints as
``Cn PASS|FAIL: detail``. Thresholds are the stated ones; nothing here is
tuned to make a criterion pass.
"""

import gc
import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import BOUND_LOG, record
from oracles import replay_equivalent
from segmerge.baseline import cart_fit
from segmerge.bench import BenchSpec, loglog_slope, run_trials, summarize
from segmerge.evaluate import empirical_risk, oracle_mse
from segmerge.grid import build_grid, build_tree, decompose_rectangle, decompose_to_nodes, sample_ranks
from segmerge.merge import MergeConfig, fit_merging, greedy_merge, piece_count_bound
from segmerge.model import Dataset, Kernel, NoiseSpec, read_csv
from segmerge.persist import model_from_dict, model_to_dict
from segmerge.solver import apply_kernel, fit_segments, least_squares
from segmerge.synth import gen_synthetic

pytestmark = pytest.mark.slow

DATA = Path(__file__).parent / "data"
SWEEP_N = (500, 1000, 2000, 4000, 8000)
TARGET_PIECES = {16: 11, 8: 27, 4: 59, 2: 113}


@pytest.fixture(scope="module")
def sweep():
    """Default synthetic protocol: k=16, d=10, d'=2, unit Gaussian noise, 20 trials."""
    spec = BenchSpec(n_list=SWEEP_N, trials=20, stop_list=(16, 8, 4, 2), baseline_leaves=(16, 24))
    jobs = int(os.environ.get("SEGMERGE_JOBS", "1"))
    t0 = time.perf_counter()
    results = run_trials(spec, jobs=jobs)
    elapsed = time.perf_counter() - t0
    rows = {(r["method"], r["n"], r["param"]): r for r in summarize(results)}
    return spec, results, rows, elapsed


def test_criterion_1_rate(sweep):
    spec, _, rows, elapsed = sweep
    mse = [rows[("merging", n, spec.k // 2)]["mse_mean"] for n in SWEEP_N]
    ratio = mse[-1] / mse[0]
    slope = loglog_slope(SWEEP_N, mse)
    ok = ratio <= 0.25 and slope <= -0.4 and elapsed < 180.0
    record("C1", ok, f"stop=8 MSE {mse[0]:.4g} -> {mse[-1]:.4g}, ratio {ratio:.3f} (<=0.25), "
                     f"slope {slope:.3f} (<=-0.4), sweep {elapsed:.1f}s (<180s)")
    assert ratio <= 0.25
    assert slope <= -0.4
    assert elapsed < 180.0


def test_criterion_2_beats_cart(sweep):
    spec, _, rows, _ = sweep
    wins, parts = 0, []
    for n in (1000, 4000, 8000):
        best = min(rows[("merging", n, s)]["mse_mean"] for s in (16, 8, 4))
        c16, c24 = rows[("cart", n, 16)]["mse_mean"], rows[("cart", n, 24)]["mse_mean"]
        win = best < c16 and best < c24
        wins += win
        parts.append(f"n={n}: {best:.4g} vs {c16:.4g}/{c24:.4g}")
    record("C2", wins >= 2, f"merging wins {wins}/3 ({'; '.join(parts)})")
    assert wins >= 2


def test_criterion_3_piece_counts(sweep):
    _, _, rows, _ = sweep
    got = {s: rows[("merging", 8000, s)]["pieces_mean"] for s in TARGET_PIECES}
    within = {s: abs(got[s] - t) <= 0.5 * t for s, t in TARGET_PIECES.items()}
    # the same targets matched against the stop values in reverse order, for diagnosis only
    rev = dict(zip(sorted(TARGET_PIECES), [TARGET_PIECES[s] for s in sorted(TARGET_PIECES, reverse=True)]))
    rev_ok = all(abs(got[s] - rev[s]) <= 0.5 * rev[s] for s in got)
    detail = ", ".join(f"stop {s}: {got[s]:.1f} vs {t}" for s, t in TARGET_PIECES.items())
    record("C3", all(within.values()), f"{detail} (±50%); reversed target order {'matches' if rev_ok else 'does not match'}")
    for s, t in TARGET_PIECES.items():
        assert abs(got[s] - t) <= 0.5 * t, f"stop={s}: mean pieces {got[s]:.1f}, target {t}"


def test_criterion_4_piece_bound(sweep):
    spec, results, _, _ = sweep
    bad = 0
    checked = 0
    # sweep results (possibly produced in worker processes)
    n_pad = {n: 1 << (n - 1).bit_length() for n in spec.n_list}
    for r in results:
        if r.method == "merging":
            checked += 1
            bad += r.pieces > piece_count_bound(n_pad[r.n], spec.d_prime, r.param)
    # a deliberately varied set of shapes, kernels and stop counts
    rng = np.random.default_rng(4)
    for n, d_prime, kind, stop in itertools.product((7, 64, 300), (1, 2, 3), ("constant", "affine"), (1, 2, 7)):
        X = rng.standard_normal((n, d_prime + 1))
        X[: n // 3, 0] = 0.0  # heavy ties
        ds = Dataset(X, rng.standard_normal(n), d_prime)
        model = fit_merging(ds, MergeConfig(float(rng.uniform(0, 2)), stop, Kernel(kind)))
        checked += 1
        bad += model.n_pieces > piece_count_bound(model.grid.n_padded, d_prime, stop)
    record("C4", bad == 0 and not BOUND_LOG["violations"], f"{checked} models in dedicated sweep, {bad} violations")
    assert bad == 0


def _best_time(fn, repeats=5):
    """Minimum wall time over a few runs, with the garbage collector kept out of the timed region."""
    best = np.inf
    for _ in range(repeats):
        gc.collect()
        gc.disable()
        try:
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        finally:
            gc.enable()
    return best


def test_criterion_5_near_linear_runtime():
    ns = (1000, 2000, 4000, 8000)
    slopes = {}
    for kind in ("constant", "affine"):
        times = []
        for n in ns:
            ds = gen_synthetic(n, 10, 2, 16, seed=n)
            config = MergeConfig(1.0, 8, Kernel(kind))
            times.append(_best_time(lambda: greedy_merge(build_tree(build_grid(ds), ds), ds, config)))
        slopes[kind] = (loglog_slope(ns, times), times)
    ok = all(s <= 1.3 for s, _ in slopes.values())
    detail = "; ".join(f"{k}: slope {s:.3f}, {t[0] * 1e3:.0f}->{t[-1] * 1e3:.0f} ms" for k, (s, t) in slopes.items())
    record("C5", ok, f"{detail} (<=1.3)")
    for kind, (s, _) in slopes.items():
        assert s <= 1.3, kind


def test_criterion_6_replay_oracle():
    rng = np.random.default_rng(606)
    matches = sum(replay_equivalent(rng, 8) for _ in range(200))
    record("C6", matches == 200, f"{matches}/200 n=8 instances match the replay oracle round by round")
    assert matches == 200


def test_criterion_7_solver():
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(1000):
        t, m = int(rng.integers(5, 60)), int(rng.integers(1, 12))
        A = rng.standard_normal((t, m))
        b = rng.standard_normal(t) * 10
        theta, _, _ = least_squares(A, b)
        worst = max(worst, float(np.abs(A.T @ (b - A @ theta)).max() / np.linalg.norm(b)))
    # flat rectangles: a single affine truth per rectangle, Gaussian noise
    s2, ratios = 1.0, []
    for _ in range(200):
        t = int(rng.integers(20, 200))
        X = rng.standard_normal((t, 3))
        phi = apply_kernel(Kernel("affine"), X)
        f = phi @ rng.uniform(-1, 1, 4)
        y = f + rng.normal(0.0, np.sqrt(s2), t)
        theta, _, rank = least_squares(phi, y)
        ratios.append(float(np.sum((phi @ theta - f) ** 2)) / (s2 * rank))
    mean = float(np.mean(ratios))
    ok = worst <= 1e-8 and 0.5 <= mean <= 2.0
    record("C7", ok, f"max relative normal-equation residual {worst:.2e} (<=1e-8), "
                     f"mean ||f_hat-f||^2/(s^2 rank) {mean:.3f} (in [0.5, 2])")
    assert worst <= 1e-8
    assert 0.5 <= mean <= 2.0


def test_criterion_8_boston():
    ds = read_csv(DATA / "boston.csv", 2)
    tree = build_tree(build_grid(ds), ds)
    kernel = Kernel("identity")
    bad, worst_gap = [], -np.inf
    for sigma, stop in itertools.product((1.0, 2.0, 3.0), range(1, 7)):
        model = greedy_merge(tree, ds, MergeConfig(sigma, stop, kernel))
        risk = empirical_risk(model, ds)
        cart_risk = empirical_risk(cart_fit(ds, model.n_pieces), ds)
        worst_gap = max(worst_gap, risk - cart_risk)
        if not risk < cart_risk:
            bad.append((sigma, stop, model.n_pieces, risk, cart_risk))
        if (sigma, stop) == (2.0, 3):
            headline = (model.n_pieces, risk, cart_risk)
    pieces, risk, cart_risk = headline
    ok = not bad and risk <= 7.0
    record("C8", ok, f"merging below CART in {18 - len(bad)}/18 configs (largest gap {worst_gap:.3f}); "
                     f"sigma=2, stop=3: {pieces} pieces, risk {risk:.3f} (<=7.0) vs CART {cart_risk:.3f}")
    assert not bad, bad
    assert risk <= 7.0


def _count_grid(boxes, shape):
    cover = np.zeros(shape, dtype=int)
    for b in boxes:
        cover[tuple(slice(a, c) for a, c in zip(b.lo, b.hi))] += 1
    return cover


def test_criterion_9_invariants():
    rng = np.random.default_rng(909)
    failures = []
    # partition coverage, disjointness, sse refinement, determinism, persistence
    for n, d_prime, kind in itertools.product((9, 120, 700), (1, 2, 3), ("constant", "identity", "affine")):
        ds = gen_synthetic(n, d_prime + 2, d_prime, 1, seed=n * 7 + d_prime)
        tree = build_tree(build_grid(ds), ds)
        config = MergeConfig(float(rng.uniform(0, 1.5)), int(rng.integers(1, 5)), Kernel(kind))
        model = greedy_merge(tree, ds, config)
        ranks = sample_ranks(ds)
        member = sum(p.rect.contains(ranks).astype(int) for p in model.pieces)
        if not np.all(member == 1):
            failures.append(("partition", n, d_prime, kind))
        phi = apply_kernel(config.kernel, ds.features[tree.order])
        _, sse, _ = fit_segments(config.kernel, phi, ds.labels[tree.order],
                                 [nd.start for nd in tree.nodes], [nd.stop for nd in tree.nodes])
        for nd in tree.nodes:
            if nd.children and sse[nd.id] < sum(sse[c.id] for c in nd.children) - 1e-8:
                failures.append(("sse", n, d_prime, kind, nd.id))
        again = greedy_merge(build_tree(build_grid(ds), ds), ds, config)
        if model_to_dict(again) != model_to_dict(model):
            failures.append(("determinism", n, d_prime, kind))
        Q = rng.standard_normal((1000, ds.d)) * 1.5
        if not np.array_equal(model_from_dict(model_to_dict(model)).predict(Q), model.predict(Q)):
            failures.append(("persistence", n, d_prime, kind))
    if gen_synthetic(500, 4, 2, 16, seed=3).labels.tobytes() != gen_synthetic(500, 4, 2, 16, seed=3).labels.tobytes():
        failures.append(("seed determinism",))
    # exhaustive dyadic decomposition at n_padded = 16
    n = 16
    ivs = [(a, b) for a in range(n) for b in range(a + 1, n + 1)]
    for r in ivs:
        if not np.array_equal(_count_grid(decompose_rectangle([r], n), (n,)), _indicator([r], (n,))):
            failures.append(("decompose 1d", r))
        if not np.array_equal(_count_grid(decompose_to_nodes([r], n), (n,)), _indicator([r], (n,))):
            failures.append(("nodes 1d", r))
    for r0, r1 in itertools.product(ivs, repeat=2):
        target = _indicator([r0, r1], (n, n))
        boxes = decompose_rectangle([r0, r1], n)
        if len(boxes) > 64 or not np.array_equal(_count_grid(boxes, (n, n)), target):
            failures.append(("decompose 2d", r0, r1))
        if not np.array_equal(_count_grid(decompose_to_nodes([r0, r1], n), (n, n)), target):
            failures.append(("nodes 2d", r0, r1))
    record("C9", not failures, f"{len(failures)} invariant failures "
                               "(partition, sse refinement, determinism, persistence, exhaustive decomposition n=16)")
    assert not failures, failures[:5]


def _indicator(ranges, shape):
    out = np.zeros(shape, dtype=int)
    out[tuple(slice(a, b) for a, b in ranges)] = 1
    return out


def test_noise_none_dataset_is_noiseless():
    ds = gen_synthetic(100, 3, 2, 4, NoiseSpec.none(), seed=1)
    assert oracle_mse(fit_merging(ds, MergeConfig(0.0, 999, Kernel("constant"))), ds) == 0.0

"""Synthetic benchmark sweeps comparing merging, the CART baseline and the true-partition fit."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baseline import cart_fit
from .evaluate import oracle_mse
from .grid import build_grid, build_tree
from .merge import MergeConfig, greedy_merge
from .model import Kernel, NoiseSpec
from .synth import gen_synthetic, true_fit_mse

COLUMNS = ("method", "n", "param", "mse_mean", "mse_std", "pieces_mean", "time_ms")


@dataclass(frozen=True)
class BenchSpec:
    n_list: tuple
    trials: int = 20
    k: int = 16
    d: int = 10
    d_prime: int = 2
    sigma: float = 1.0
    stop_list: tuple = (16, 8, 4, 2)
    baseline_leaves: tuple = (16, 24)
    noise: str = "gaussian"
    variance: float = 1.0
    kernel: str = "constant"
    seed: int = 0

    def __post_init__(self):
        if not self.n_list or any(n < self.k for n in self.n_list):
            raise ValueError("every n must be at least k")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if any(s < 1 for s in self.stop_list) or any(b < 1 for b in self.baseline_leaves):
            raise ValueError("stop counts and leaf budgets must be positive")

    def noise_spec(self) -> NoiseSpec:
        if self.noise == "none":
            return NoiseSpec.none()
        if self.noise == "uniform":
            return NoiseSpec.uniform(self.variance)
        return NoiseSpec.gaussian(self.variance)


@dataclass(frozen=True)
class TrialResult:
    method: str
    n: int
    param: int
    trial: int
    mse: float
    pieces: int
    seconds: float


def trial_seed(seed: int, n: int, trial: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(n, trial)).generate_state(1)[0])


def run_trial(spec: BenchSpec, n: int, trial: int) -> list[TrialResult]:
    ds = gen_synthetic(n, spec.d, spec.d_prime, spec.k, spec.noise_spec(), seed=trial_seed(spec.seed, n, trial))
    kernel = Kernel(spec.kernel)
    out = []
    t0 = time.perf_counter()
    tree = build_tree(build_grid(ds), ds)
    tree_time = time.perf_counter() - t0
    for stop in spec.stop_list:
        t0 = time.perf_counter()
        model = greedy_merge(tree, ds, MergeConfig(spec.sigma, stop, kernel))
        dt = time.perf_counter() - t0 + tree_time
        out.append(TrialResult("merging", n, stop, trial, oracle_mse(model, ds), model.n_pieces, dt))
    for leaves in spec.baseline_leaves:
        t0 = time.perf_counter()
        model = cart_fit(ds, leaves)
        dt = time.perf_counter() - t0
        out.append(TrialResult("cart", n, leaves, trial, oracle_mse(model, ds), model.n_pieces, dt))
    t0 = time.perf_counter()
    mse = true_fit_mse(ds, kernel)
    out.append(TrialResult("true_fit", n, spec.k, trial, mse, spec.k, time.perf_counter() - t0))
    return out


def _run_task(args):
    return run_trial(*args)


def run_trials(spec: BenchSpec, jobs: int = 1) -> list[TrialResult]:
    """All trial results in sweep order (n, then trial)."""
    tasks = [(spec, n, t) for n in spec.n_list for t in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def summarize(results: list[TrialResult]) -> list[dict]:
    """One row per (method, n, param), in first-seen order."""
    groups: dict = {}
    for r in results:
        groups.setdefault((r.method, r.n, r.param), []).append(r)
    rows = []
    for (method, n, param), rs in groups.items():
        mse = np.array([r.mse for r in rs])
        rows.append(
            {
                "method": method,
                "n": n,
                "param": param,
                "mse_mean": float(mse.mean()),
                "mse_std": float(mse.std(ddof=1)) if mse.size > 1 else 0.0,
                "pieces_mean": float(np.mean([r.pieces for r in rs])),
                "time_ms": 1000.0 * float(np.mean([r.seconds for r in rs])),
            }
        )
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])

"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line in :data:`RESULTS`; the lines are
printed when the module runs as a script and in the pytest terminal summary.
Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import itertools
import math
import time

import mpmath
import numpy as np
import pytest

from dspider import theory
from dspider.algorithms import AlgoConfig, estimator_vector, init_ensemble, step
from dspider.harness import cost_to_threshold, run, write_csv
from dspider.problems import (
    KINDS,
    Objective,
    global_grad,
    make_synthetic,
    partition,
    per_sample_grad,
    replicate,
    shard_grad,
)
from dspider.topology import build_ring, validate

RESULTS: list[str] = []

ETA_GRID = (0.1, 0.05, 0.01, 0.005, 0.001)
SEEDS = range(5)


def check(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1. topology oracle


def test_criterion_01_topology():
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(3, 9):
        closed = np.sort([0.5 + 0.5 * math.cos(2 * math.pi * k / n) for k in range(n)])[::-1]
        worst = max(worst, float(np.max(np.abs(build_ring(n).eigenvalues - closed))))
    r8 = build_ring(8)
    ring8_ok = abs(r8.lambda2 - (0.5 + math.sqrt(2) / 4)) < 1e-9 and abs(r8.lambda_n) < 1e-9
    try:
        validate(np.eye(3))
        identity_rejected = False
    except ValueError:
        identity_rejected = True
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and ring8_ok and identity_rejected and dt < 1.0
    check(1, ok, f"max eigen error {worst:.1e}, ring-8 lambda2 {r8.lambda2:.6f}, "
                 f"identity rejected {identity_rejected}, {dt:.2f}s")


# 2. gradient oracle


def _fd(fun, x):
    g = np.empty_like(x)
    for j in range(len(x)):
        h = 1e-5 * (1 + abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def test_criterion_02_gradients():
    t0 = time.perf_counter()
    worst_fd = worst_mean = 0.0
    for kind in KINDS:
        obj = make_synthetic(kind, dim=8, m=500, seed=1)
        rng = np.random.default_rng(0)
        for _ in range(20):
            i = int(rng.integers(obj.sample_count))
            x = rng.standard_normal(obj.dim)
            g = per_sample_grad(obj, x, i)
            fd = _fd(lambda z: obj.sample_values(z, np.array([i]))[0], x)
            worst_fd = max(worst_fd, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12))
        shards = partition(obj, 5, "shuffled", 0)
        for _ in range(10):
            x = rng.standard_normal(obj.dim)
            worst_mean = max(
                worst_mean, float(np.max(np.abs(global_grad(obj, shards, x) - obj.full_grad(x))))
            )
    dt = time.perf_counter() - t0
    ok = worst_fd < 1e-5 and worst_mean <= 1e-12 and dt < 5.0
    check(2, ok, f"finite-difference rel err {worst_fd:.1e}, mean consistency {worst_mean:.1e}, "
                 f"{dt:.2f}s")


# 3. centralized equivalence


def test_criterion_03_centralized_equivalence():
    t0 = time.perf_counter()
    obj = make_synthetic("nonconvex-logistic", dim=10, m=500, seed=3)
    shards = partition(obj, 1)
    a = AlgoConfig("dspider", build_ring(1), 0.05, q=8, s1=64, s2=8, seed=42)
    c = AlgoConfig("cspider", build_ring(1), 0.05, q=8, s1=64, s2=8, seed=42)
    sa, sc = init_ensemble(obj, shards, a), init_ensemble(obj, shards, c)
    pa, pc = a.sampler(), c.sampler()
    identical = True
    for _ in range(50):
        sa, sc = step(sa, obj, a, pa), step(sc, obj, c, pc)
        identical &= np.array_equal(sa.x, sc.x)
    dt = time.perf_counter() - t0
    check(3, identical and dt < 1.0, f"50 iterates bit-identical {identical}, {dt:.2f}s")


# 4. hand trace


def test_criterion_04_hand_trace():
    obj = Objective("least-squares", np.array([[1.0]]), np.array([0.0]), lipschitz_estimate=1.0)
    cfg = AlgoConfig("dspider", build_ring(1), 0.1, s1=1, s2=1, sampling="full")
    st = init_ensemble(obj, partition(obj, 1), cfg, np.array([1.0]))
    x1 = step(st, obj, cfg)
    x2 = step(x1, obj, cfg)
    a, b = float(x1.x[0, 0]), float(x2.x[0, 0])
    check(4, abs(a - 0.9) <= 1e-15 and abs(b - 0.81) <= 1e-15, f"iterates {a!r}, {b!r}")


# 5. fixed point


def test_criterion_05_fixed_point():
    base = make_synthetic("least-squares", dim=5, m=40, seed=0, noise=0.5)
    obj, shards = replicate(base, 4)
    xs = base.stationary_point()
    W = build_ring(4)
    cfg = AlgoConfig("dspider", W, 0.05, q=10, sampling="full")
    st = init_ensemble(obj, shards, cfg, xs)
    dev = 0.0
    for _ in range(100):
        st = step(st, obj, cfg)
        dev = max(dev, float(np.max(np.abs(st.x - xs))))
    drifts = []
    for seed in SEEDS:
        p = AlgoConfig("dpsgd", W, 0.05, s2=1, seed=seed)
        sp, sampler = init_ensemble(obj, shards, p, xs), p.sampler()
        drift = 0.0
        for _ in range(100):
            sp = step(sp, obj, p, sampler)
            drift = max(drift, float(np.linalg.norm(sp.mean_iterate - xs)))
        drifts.append(drift)
    ok = np.linalg.norm(base.full_grad(xs)) < 1e-10 and dev < 1e-9 and min(drifts) > 1e-3
    check(5, ok, f"D-SPIDER max deviation {dev:.1e}, D-PSGD min drift over seeds {min(drifts):.2e}")


# 6. telescoping


def test_criterion_06_telescoping():
    obj = make_synthetic("nonconvex-logistic", dim=6, m=240, seed=4)
    shards = partition(obj, 4, "shuffled", 0)
    cfg = AlgoConfig("dspider", build_ring(4), 0.1, q=16, sampling="full")
    st = init_ensemble(obj, shards, cfg)
    worst = 0.0
    for _ in range(64):
        prev = st
        st = step(st, obj, cfg)
        g, _ = estimator_vector(st)
        for i, s in enumerate(shards):
            worst = max(worst, float(np.max(np.abs(g[i] - shard_grad(obj, s, prev.x[i])))))
    check(6, worst <= 1e-10, f"max |g - grad f_i| over 64 iterations {worst:.1e}")


# 7. cost accounting


def test_criterion_07_cost_accounting():
    t0 = time.perf_counter()
    obj = make_synthetic("least-squares", dim=3, m=800, seed=0)
    shards = partition(obj, 4, "shuffled", 0)
    cfg = AlgoConfig("dspider", build_ring(4), 0.01, q=16, s1=256, s2=16)
    rec = run(obj, shards, cfg, K=32, eval_stride=32)
    paper = rec.rows[-1].cum_paper_cost / 4
    raw = rec.rows[-1].cum_raw_evals / 4
    bound, exact_paper, exact_raw = theory.cost_bound(32, 16, 256, 16)
    dt = time.perf_counter() - t0
    ok = (paper, raw) == (992, 1472) == (exact_paper, exact_raw) and bound == 1488 >= paper
    check(7, ok and dt < 1.0, f"paper {paper:g}, raw {raw:g}, bound {bound}, {dt:.2f}s")


# 8. theory constants


def test_criterion_08_theory():
    mpmath.mp.dps = 50
    worst = 0.0
    grid = itertools.product([i / 10 for i in range(10)], [i / 10 for i in range(-3, 10)])
    for l2, ln in grid:
        tc = theory.constants(l2, ln, 1.0, 0.01, 10, 10)
        L2, LN = mpmath.mpf(l2), mpmath.mpf(ln)
        b = mpmath.sqrt(LN) if LN >= 0 else abs(LN - mpmath.sqrt(LN * LN - LN))
        c1 = max(1 / (1 - b**2), 1 / (1 - L2) ** 2)
        c2 = max(LN**2 / (1 - b**2), L2**2 / ((1 - mpmath.sqrt(L2)) ** 2 * (1 - L2)))
        worst = max(worst, float(abs(tc.c1 - c1) / c1))
        if c2 != 0:
            worst = max(worst, float(abs(tc.c2 - c2) / c2))
        elif tc.c2 != 0:
            worst = math.inf
    sched = theory.schedule(1.0, 0.1)
    check(8, worst <= 1e-12 and sched == (100, 10, 10),
          f"max relative error {worst:.1e}, schedule {sched}")


# 9. convergence ordering


def _first_hit_cost(obj, shards, cfg, threshold, K, stride):
    rec = run(obj, shards, cfg, K=K, eval_stride=stride, stop_below=threshold)
    hit = cost_to_threshold(rec, threshold)
    return math.inf if hit is None else hit[0] / cfg.n


@pytest.mark.slow
def test_criterion_09_convergence_ordering():
    t0 = time.perf_counter()
    obj = make_synthetic("nonconvex-logistic", dim=20, m=4000, seed=0)
    shards = partition(obj, 8, "shuffled", 0)
    W = build_ring(8)
    threshold, K, stride = 3e-2, 4000, 2
    best = {}
    for alg in ("dspider", "dpsgd", "d2"):
        per_eta = {}
        for eta in ETA_GRID:
            costs = [
                _first_hit_cost(
                    obj, shards, AlgoConfig(alg, W, eta, q=16, s1=256, s2=16, seed=s),
                    threshold, K, stride,
                )
                for s in SEEDS
            ]
            per_eta[eta] = float(np.mean(costs))
        eta_star = min(per_eta, key=per_eta.get)
        best[alg] = (per_eta[eta_star], eta_star)
    dt = time.perf_counter() - t0
    ok = best["dspider"][0] <= min(best["dpsgd"][0], best["d2"][0])
    detail = ", ".join(f"{a} {c:g} evals/worker at eta={e}" for a, (c, e) in best.items())
    check(9, ok, f"{detail}, {dt:.0f}s")


# 10. heterogeneity robustness


def _plateau(obj, shards, cfg, K, stride):
    rec = run(obj, shards, cfg, K=K, eval_stride=stride)
    tail = [r.grad_norm_mean for r in rec.rows if r.iter >= 0.8 * K]
    return float(np.mean(tail))


@pytest.mark.slow
def test_criterion_10_heterogeneity():
    t0 = time.perf_counter()
    obj = make_synthetic("nonconvex-logistic", dim=20, m=4000, seed=0)
    shards = partition(obj, 2, "unshuffled")
    W = build_ring(2)
    K, stride = 2000, 20
    best = {}
    for alg in ("dspider", "dpsgd"):
        per_eta = {
            eta: float(np.mean([
                _plateau(obj, shards, AlgoConfig(alg, W, eta, q=16, s1=256, s2=16, seed=s),
                         K, stride)
                for s in SEEDS
            ]))
            for eta in ETA_GRID
        }
        eta_star = min(per_eta, key=per_eta.get)
        best[alg] = (per_eta[eta_star], eta_star)
    ratio = best["dpsgd"][0] / best["dspider"][0]
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{a} plateau {p:.4g} at eta={e}" for a, (p, e) in best.items())
    check(10, ratio >= 3.0, f"{detail}, ratio {ratio:.2f} (need >= 3), {dt:.0f}s")


# 11. determinism


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    obj = make_synthetic("nonconvex-logistic", dim=10, m=800, seed=2)
    shards = partition(obj, 8, "shuffled", 2)
    W = build_ring(8)
    same = True
    for alg in ("dspider", "dpsgd", "d2", "cspider"):
        cfg = AlgoConfig(alg, W, 0.05, q=8, s1=64, s2=8, seed=7)
        blobs = []
        for i, threads in enumerate((1, 1, 8)):
            p = tmp_path / f"{alg}_{i}.csv"
            write_csv(run(obj, shards, cfg, K=100, eval_stride=5, threads=threads), p)
            blobs.append(p.read_bytes())
        same &= blobs[0] == blobs[1] == blobs[2]
    dt = time.perf_counter() - t0
    check(11, same and dt < 60, f"byte-identical CSVs across repeats and thread counts {same}, "
                                 f"{dt:.1f}s")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

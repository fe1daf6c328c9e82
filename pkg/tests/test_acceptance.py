"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python3 tests/test_acceptance.py``; the summary also appears at the end of
any pytest session that collects this module.
"""
import itertools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from merisc import cli
from merisc.beamforming import pinv_rank
from merisc.config import parse_config
from merisc.em import calibrate_state_table, uniform_sheet_reflection
from merisc.ga import GaParams, MemoryPool, adaptive_rates, optimize_step
from merisc.qos import build_context, dbm_to_watt, evaluate_batch
from merisc.scene import build_scene, make_snapshot

from conftest import LAMBDA_W, SIGMA2_W, tiny_config
from oracles import dense_channel, zf_throughput

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = range(10)
RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def session(name, seed):
    return cli.Session(parse_config(CONFIGS / name), seed, threads=1)


def test_criterion_01_zf_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        U = rng.standard_normal((3, 16)) + 1j * rng.standard_normal((3, 16))
        A, rank = pinv_rank(U)
        assert rank == 3
        nu, na = np.linalg.norm(U, 2), np.linalg.norm(A, 2)
        G = U @ A
        off = np.abs(G - np.diag(np.diag(G))).max() / nu
        res = [np.linalg.norm(U @ A @ U - U, 2) / nu, np.linalg.norm(A @ U @ A - A, 2) / na,
               np.linalg.norm(G - G.conj().T, 2), np.linalg.norm(A @ U - (A @ U).conj().T, 2)]
        worst = max(worst, off, *res)
    dt = time.perf_counter() - t0
    report(1, worst < 1e-9 and dt < 5, f"max residual {worst:.1e} (tol 1e-9), {dt:.2f} s")


def test_criterion_02_brute_force_equivalence():
    t0 = time.perf_counter()
    scene = build_scene(tiny_config())
    table = calibrate_state_table(1)
    assert (scene.P, scene.M, table.bits) == (4, 4, 1)
    snap = make_snapshot(1, np.array([[1.0, 3.0], [-1.5, 5.0]]), scene=scene)
    ctx = build_context(scene, table, snap, LAMBDA_W, SIGMA2_W)
    configs = np.array(list(itertools.product((1, 2), repeat=4)))
    rep = evaluate_batch(ctx, configs)
    rel = 0.0
    oracle_cost = []
    for i, s in enumerate(configs):
        rates, cost = zf_throughput(dense_channel(scene, table, s, snap.positions),
                                    LAMBDA_W, SIGMA2_W)
        oracle_cost.append(cost)
        rel = max(rel, abs(cost - rep.cost[i]) / cost,
                  np.max(np.abs(rates - rep.per_user[i]) / rates))
    best = configs[np.lexsort((-rep.total, rep.cost))[0]]
    assert np.argmin(oracle_cost) == np.argmin(rep.cost)
    hits = sum(np.array_equal(optimize_step(ctx, GaParams(population=20, max_iterations=100),
                                            MemoryPool(20), np.random.default_rng(s)).config, best)
               for s in SEEDS)
    dt = time.perf_counter() - t0
    report(2, rel < 1e-10 and hits >= 9 and dt < 30,
           f"max rel diff {rel:.1e} (tol 1e-10), optimum found {hits}/10, {dt:.1f} s")


def test_criterion_03_rate_endpoints():
    p = GaParams()
    hi, lo = adaptive_rates(p.sigma_max, p), adaptive_rates(0.0, p)
    report(3, hi == (0.02, 0.95) and lo == (0.06, 0.6),
           f"sigma=sigma_max -> {hi}, sigma=0 -> {lo}")


def test_criterion_04_monotone_convergence():
    sess = session("desk.json", 0)
    assert (sess.scene.P, sess.scene.M, sess.traj.L, sess.traj.C) == (64, 64, 2, 20)
    bad = 0
    for variant in ("me_risc", "ga_risc"):
        for step in sess.run(variant).per_step:
            costs = [r.best_cost for r in step.trace]
            bad += any(b > a for a, b in zip(costs, costs[1:]))
    report(4, bad == 0, f"{bad} of 40 steps with a cost increase")


def test_criterion_05_memory_benefit():
    t0 = time.perf_counter()
    wins, ds_me, ds_ga = 0, [], []
    for seed in SEEDS:
        sess = session("desk_periodic.json", seed)
        period = sess.traj.period
        me, ga = sess.run("me_risc"), sess.run("ga_risc")
        wins += np.median(me.worst[period:]) >= np.median(ga.worst[period:])
        ds_me += [r.delta_s_mean for r in me.per_step[period:]]
        ds_ga += [r.delta_s_mean for r in ga.per_step[period:]]
    dt = time.perf_counter() - t0
    a, b = np.mean(ds_me), np.mean(ds_ga)
    report(5, wins >= 8 and a < b and dt < 600,
           f"median T_worst ME >= GA in {wins}/10 seeds (need 8); "
           f"mean delta_s ME {a:.3f} vs GA {b:.3f}; {dt:.0f} s")


def test_criterion_06_ris_benefit():
    wins, gaps = 0, []
    for seed in SEEDS:
        sess = session("desk.json", seed)
        w, n = sess.run("me_risc").mean_worst, sess.run("no_ris").mean_worst
        wins += w > n
        gaps.append(w - n)
    report(6, wins >= 9, f"w/ RIS > w/o RIS in {wins}/10 seeds, mean gain {np.mean(gaps):.2f} bit/s/Hz")


def test_criterion_07_noise_monotonicity():
    sweep = parse_config(CONFIGS / "desk.json").noise_sweep_dbm
    assert tuple(sweep) == (-96.0, -76.0, -56.0)
    bad = []
    for seed in range(3):
        sess = session("desk.json", seed)
        for variant in ("me_risc", "ga_risc", "no_ris", "ris_only"):
            avg = [sess.run(variant, dbm_to_watt(d)).mean_worst for d in sweep]
            if not all(b < a for a, b in zip(avg, avg[1:])):
                bad.append((seed, variant, avg))
    report(7, not bad, f"{len(bad)} non-decreasing sweeps out of 12 (3 seeds x 4 variants)")


def test_criterion_08_environment_exploitation():
    wins = 0
    for seed in SEEDS:
        sess = session("desk_wall_shift.json", seed)
        wins += sess.run("me_risc").mean_worst >= sess.run("ris_only").mean_worst
    report(8, wins >= 8, f"w/ RIS >= RIS-only in {wins}/10 seeds")


def test_criterion_09_calibration():
    table = calibrate_state_table(3)
    r = uniform_sheet_reflection(table, 3.5e9)
    target = np.deg2rad(45.0 * np.arange(8))
    phase_err = np.abs(np.rad2deg(np.angle(r * np.exp(-1j * target)))).max()
    amp_err = np.abs(np.abs(r) / 0.9 - 1).max()
    spread = np.abs(r).max() / np.abs(r).min() - 1
    report(9, phase_err < 5 and amp_err < 0.02 and spread < 0.02,
           f"phase error {phase_err:.2e} deg, amplitude error {amp_err:.1e}, spread {spread:.1e}")


def test_criterion_10_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert cli.main(["compare", "--config", str(CONFIGS / "desk.json"), "--seed", "7",
                         "--out", str(d), "--no-timestamp", "--threads", "1"]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    same = all((dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names)
    report(10, same and "results.csv" in names, f"{len(names)} files compared: {', '.join(names)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))

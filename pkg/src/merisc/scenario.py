"""User trajectories, the time-step loop and the baseline variants."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .em import IncidenceMatrix, SusceptibilityTable, incidence_matrix
from .ga import GaParams, IterationRecord, MemoryPool, optimize_step
from .qos import ThroughputReport, build_context, evaluate_wall_only
from .scene import SceneGeometry, UserSnapshot, make_snapshot

log = logging.getLogger(__name__)

VARIANTS = ("me_risc", "ga_risc", "no_ris", "ris_only")
_VARIANT_CODE = {name: i for i, name in enumerate(VARIANTS)}


# ---------------------------------------------------------------------------
# seeds
# ---------------------------------------------------------------------------

def trajectory_rng(master_seed: int) -> np.random.Generator:
    """Trajectory stream: SeedSequence([seed, 0])."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), 0]))


def variant_rng(master_seed: int, variant: str) -> np.random.Generator:
    """Optimizer stream of one variant: SeedSequence([seed, 1, variant index])."""
    if variant not in _VARIANT_CODE:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), 1, _VARIANT_CODE[variant]]))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    kind: str  # aperiodic | periodic | imported
    snapshots: List[UserSnapshot]
    period: Optional[int] = None
    v_max: float = 1.5
    dt: float = 1.0

    @property
    def C(self) -> int:
        return len(self.snapshots)

    @property
    def L(self) -> int:
        return self.snapshots[0].L

    def positions(self) -> np.ndarray:
        return np.stack([s.positions for s in self.snapshots])

    def max_step(self) -> float:
        pos = self.positions()
        if len(pos) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(pos, axis=0), axis=-1).max())


def _snapshots(pos: np.ndarray, area, height, min_sep) -> List[UserSnapshot]:
    return [make_snapshot(c + 1, p, area=area, height=height, min_separation=min_sep)
            for c, p in enumerate(pos)]


def _separated(pos: np.ndarray, min_sep: float) -> bool:
    if pos.shape[1] < 2:
        return True
    d = np.linalg.norm(pos[:, :, None, :] - pos[:, None, :, :], axis=-1)
    iu = np.triu_indices(pos.shape[1], 1)
    return bool(d[:, iu[0], iu[1]].min() >= min_sep)


def gen_aperiodic(area, L: int, C: int, v_max: float = 1.5, dt: float = 1.0,
                  rng: Optional[np.random.Generator] = None, height: float = 1.5,
                  min_separation: float = 0.1, max_tries: int = 100) -> Trajectory:
    """Random-waypoint walks at constant speed ``v_max``."""
    if L < 1 or C < 1:
        raise ValueError("need L >= 1 and C >= 1")
    x0, x1, y0, y1 = area
    if not (x1 > x0 and y1 > y0):
        raise ValueError("area must have positive extent")
    rng = np.random.default_rng() if rng is None else rng
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    step = v_max * dt
    for _ in range(max_tries):
        pos = np.empty((C, L, 2))
        cur = rng.uniform(lo, hi, size=(L, 2))
        way = rng.uniform(lo, hi, size=(L, 2))
        for c in range(C):
            pos[c] = cur
            for l in range(L):
                d = way[l] - cur[l]
                dist = np.hypot(*d)
                if dist <= step:
                    cur[l] = way[l]
                    way[l] = rng.uniform(lo, hi)
                else:
                    cur[l] = cur[l] + d * (step / dist)
        full = np.concatenate([pos, np.full((C, L, 1), height)], axis=-1)
        if _separated(full, min_separation):
            return Trajectory("aperiodic", _snapshots(full, area, height, min_separation),
                              None, v_max, dt)
    raise RuntimeError("could not draw a trajectory respecting the user separation")


def _loop(area, period, step, rng, n_way=4):
    x0, x1, y0, y1 = area
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    way = rng.uniform(lo, hi, size=(n_way, 2))
    closed = np.vstack([way, way[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    perim = seg.sum()
    if perim > period * step:
        c = way.mean(axis=0)
        way = c + (way - c) * (period * step / perim)
        closed = np.vstack([way, way[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        perim = seg.sum()
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = perim * np.arange(period) / period
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, n_way - 1)
    t = np.where(seg[k] > 0, (s - cum[k]) / np.where(seg[k] > 0, seg[k], 1.0), 0.0)
    return closed[k] + t[:, None] * (closed[k + 1] - closed[k])


def gen_periodic(area, L: int, C: int, period: int, rng: Optional[np.random.Generator] = None,
                 v_max: float = 1.5, dt: float = 1.0, height: float = 1.5,
                 min_separation: float = 0.1, max_tries: int = 100) -> Trajectory:
    """Each user cycles through a closed waypoint loop of ``period`` steps."""
    if period < 2:
        raise ValueError("period must be >= 2")
    if period > C:
        raise ValueError("period must not exceed C")
    rng = np.random.default_rng() if rng is None else rng
    step = v_max * dt
    for _ in range(max_tries):
        loops = np.stack([_loop(area, period, step, rng) for _ in range(L)], axis=1)
        idx = np.arange(C) % period
        pos = loops[idx]
        full = np.concatenate([pos, np.full((C, L, 1), height)], axis=-1)
        if _separated(full, min_separation):
            return Trajectory("periodic", _snapshots(full, area, height, min_separation),
                              period, v_max, dt)
    raise RuntimeError("could not draw a trajectory respecting the user separation")


def merge_users(trajectories: Sequence[Trajectory], kind: Optional[str] = None) -> Trajectory:
    """Stack the users of several equally long trajectories into one."""
    C = trajectories[0].C
    if any(t.C != C for t in trajectories):
        raise ValueError("trajectories must have the same number of steps")
    snaps = [UserSnapshot(c + 1, np.vstack([t.snapshots[c].positions for t in trajectories]))
             for c in range(C)]
    t0 = trajectories[0]
    return Trajectory(kind or t0.kind, snaps, t0.period, t0.v_max, t0.dt)


TRAJECTORY_HEADER = ["step", "user", "x", "y", "z"]


def export_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for snap in traj.snapshots:
            for l, p in enumerate(snap.positions, 1):
                w.writerow([snap.c, l, repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])


def import_trajectory(path, area=None, v_max: float = 1.5, dt: float = 1.0,
                      min_separation: Optional[float] = None) -> Trajectory:
    """Read ``step,user,x,y,z`` rows (metres, 1-based contiguous steps)."""
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty trajectory file")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: header must be {','.join(TRAJECTORY_HEADER)}")
    for n, rec in enumerate(reader, 2):
        if len(rec) != 5:
            raise ValueError(f"{path}: row {n} has {len(rec)} fields, expected 5")
        try:
            rows.append((int(rec[0]), int(rec[1]), float(rec[2]), float(rec[3]), float(rec[4])))
        except ValueError as exc:
            raise ValueError(f"{path}: row {n} is malformed ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no trajectory rows")
    steps = sorted({r[0] for r in rows})
    if steps != list(range(1, len(steps) + 1)):
        raise ValueError(f"{path}: steps must be 1-based and contiguous")
    by_step = {s: {} for s in steps}
    for s, u, x, y, z in rows:
        if u in by_step[s]:
            raise ValueError(f"{path}: duplicate row for step {s}, user {u}")
        by_step[s][u] = (x, y, z)
    users = sorted(by_step[1])
    if users != list(range(1, len(users) + 1)):
        raise ValueError(f"{path}: users must be numbered 1..L")
    snaps = []
    for s in steps:
        if sorted(by_step[s]) != users:
            raise ValueError(f"{path}: step {s} has a different set of users")
        pos = np.array([by_step[s][u] for u in users])
        snaps.append(make_snapshot(s, pos, area=area, min_separation=min_separation))
    traj = Trajectory("imported", snaps, None, v_max, dt)
    if traj.max_step() > v_max * dt + 1e-9:
        warnings.warn(f"{path}: a user moves {traj.max_step():.3g} m in one step "
                      f"(limit {v_max * dt:.3g} m)")
    return traj


# ---------------------------------------------------------------------------
# simulation loop
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    c: int
    config: Optional[np.ndarray]
    report: ThroughputReport
    iterations: int = 0
    stored: int = 0
    restored: int = 0
    delta_s: Optional[np.ndarray] = None
    first_best_cost: float = float("nan")
    initial_cost: float = float("nan")
    trace: List[IterationRecord] = field(default_factory=list)

    @property
    def delta_s_mean(self) -> float:
        return float(np.mean(self.delta_s)) if self.delta_s is not None else float("nan")


@dataclass
class RunResult:
    variant: str
    per_step: List[StepRecord]

    @property
    def worst(self) -> np.ndarray:
        return np.array([r.report.worst for r in self.per_step])

    @property
    def mean_worst(self) -> float:
        return float(np.mean(self.worst))

    @property
    def trace(self) -> List[IterationRecord]:
        return [rec for r in self.per_step for rec in r.trace]


def run(variant: str, scene: SceneGeometry, table: SusceptibilityTable, traj: Trajectory,
        total_power: float, noise_power: float, params: GaParams,
        rng: np.random.Generator, inc: Optional[IncidenceMatrix] = None,
        threads: int = 1, averaging="incident", memory: Optional[MemoryPool] = None) -> RunResult:
    """Simulate one variant over every snapshot of ``traj``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if variant == "ris_only":
        if scene.Q:
            scene = scene.without_wall()
            inc = None
    if inc is None:
        inc = incidence_matrix(scene)
    if variant == "ga_risc":
        params = params.without_memory()
        memory = None
    elif variant in ("me_risc", "ris_only") and memory is None:
        memory = MemoryPool(params.memory_capacity)

    records = []
    for snap in traj.snapshots:
        ctx = build_context(scene, table, snap, total_power, noise_power, inc=inc,
                            averaging=averaging, threads=threads)
        if variant == "no_ris":
            records.append(StepRecord(snap.c, None, evaluate_wall_only(ctx)))
            continue
        out = optimize_step(ctx, params, memory, rng, c=snap.c)
        records.append(StepRecord(snap.c, out.config, out.report, out.iterations, out.stored,
                                  out.restored, out.delta_s, out.first_best_cost,
                                  out.initial_cost, out.trace))
        log.debug("%s c=%d T_worst=%.4f iters=%d", variant, snap.c, out.report.worst,
                  out.iterations)
    return RunResult(variant, records)


def results_header(L: int) -> List[str]:
    return (["step", "variant", "T_worst"] + [f"T_{l}" for l in range(1, L + 1)]
            + ["cost", "iterations", "stored", "restored", "delta_s_mean"])


def result_rows(result: RunResult):
    for r in result.per_step:
        yield ([r.c, result.variant, repr(r.report.worst)]
               + [repr(float(t)) for t in r.report.per_user]
               + [repr(r.report.cost), r.iterations, r.stored, r.restored,
                  repr(r.delta_s_mean)])


def write_results(path, results: Sequence[RunResult], comment: Optional[str] = None) -> None:
    """One row per (step, variant); steps in time order, variants in given order."""
    L = results[0].per_step[0].report.per_user.size
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(results_header(L))
        rows = [list(result_rows(r)) for r in results]
        for c in range(len(rows[0])):
            for rr in rows:
                w.writerow(rr[c])

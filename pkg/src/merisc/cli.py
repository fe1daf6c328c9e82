"""Command-line front end: single runs, comparisons, noise sweeps, footprints.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
errors.  Files written by a failed invocation are removed.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import itertools
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .beamforming import zf_weights
from .config import ConfigError, RunConfig, parse_config
from .em import (calibrate_state_table, cascaded_matrix, footprint, grid_points,
                 incidence_matrix, load_table, radiation_matrix)
from .ga import write_trace
from .qos import build_context, dbm_to_watt, evaluate_batch
from .scenario import (VARIANTS, Trajectory, export_trajectory, gen_aperiodic, gen_periodic,
                       import_trajectory, merge_users, run, trajectory_rng, variant_rng,
                       write_results)
from .scene import build_scene, make_snapshot

log = logging.getLogger("merisc")

UNITS = "units: T in bit/s/Hz; cost = 1/T_worst in s*Hz/bit; delta_s in state steps"
TRACE_UNITS = "units: Phi_best = 1/T_worst in s*Hz/bit; sigma_v in squared state steps"
SHORT = {"me_risc": "me", "ga_risc": "ga", "no_ris": "no_ris", "ris_only": "ris_only"}
BRUTE_FORCE_LIMIT = 2 ** 20


class Outputs:
    """Tracks written files so a failed command can remove them."""

    def __init__(self, directory: Path, timestamp: bool):
        self.directory = directory
        self.timestamp = timestamp
        self.written: List[Path] = []
        self._created_dir = False

    def path(self, name: str) -> Path:
        if not self.directory.exists():
            self.directory.mkdir(parents=True)
            self._created_dir = True
        p = self.directory / name
        self.written.append(p)
        return p

    def comment(self, *parts: str) -> str:
        lines = list(parts)
        if self.timestamp:
            now = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
            lines.insert(0, f"generated {now} by merisc {__version__}")
        return "\n# ".join(lines)

    def cleanup(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if self._created_dir:
            try:
                self.directory.rmdir()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def make_table(cfg: RunConfig):
    t = cfg.table
    if t.path:
        table = load_table(cfg.resolve(t.path))
    else:
        law = list(t.phase_law) if isinstance(t.phase_law, tuple) else t.phase_law
        table = calibrate_state_table(t.bits, t.amplitude, law, cfg.scene.f0,
                                      t.wall_eps_r, t.wall_sigma, t.wall_thickness)
    return table


def make_trajectory(cfg: RunConfig, scene, seed: int) -> Trajectory:
    s = cfg.scenario
    rng = trajectory_rng(seed)
    area = scene.user_area
    if s.kind == "imported":
        return import_trajectory(cfg.resolve(s.path), area=area, v_max=s.v_max, dt=s.dt,
                                 min_separation=scene.min_user_separation)
    n_move = s.L - len(s.static_users)
    parts = []
    if s.static_users:
        snaps = [make_snapshot(c + 1, np.array(s.static_users), scene=scene) for c in range(s.C)]
        parts.append(Trajectory(s.kind, snaps, s.period, s.v_max, s.dt))
    if n_move:
        kw = dict(rng=rng, v_max=s.v_max, dt=s.dt, height=scene.user_height,
                  min_separation=scene.min_user_separation)
        if s.kind == "periodic":
            parts.append(gen_periodic(area, n_move, s.C, s.period, **kw))
        else:
            parts.append(gen_aperiodic(area, n_move, s.C, **kw))
    traj = parts[0] if len(parts) == 1 else merge_users(parts, s.kind)
    for snap in traj.snapshots:  # separation between static and moving users
        make_snapshot(snap.c, snap.positions, scene=scene)
    return traj


class Session:
    def __init__(self, cfg: RunConfig, seed: int, threads: int):
        self.cfg = cfg
        self.seed = seed
        self.threads = threads
        self.scene = build_scene(cfg.scene)
        self.table = make_table(cfg)
        self.inc = incidence_matrix(self.scene)
        self.traj = make_trajectory(cfg, self.scene, seed)
        if self.scene.M < self.traj.L:
            raise ConfigError(f"zero forcing needs M >= L (M={self.scene.M}, L={self.traj.L})")

    def run(self, variant: str, noise_power: Optional[float] = None):
        log.info("running %s over %d steps", variant, self.traj.C)
        return run(variant, self.scene, self.table, self.traj, self.cfg.total_power,
                   self.cfg.noise_power if noise_power is None else noise_power,
                   self.cfg.ga, variant_rng(self.seed, variant),
                   inc=self.inc if variant != "ris_only" else None,
                   threads=self.threads, averaging=self.cfg.averaging)


def _variants(args, cfg) -> List[str]:
    v = ["me_risc", "ga_risc", "no_ris"]
    if args.ris_only or cfg.outputs.include_ris_only:
        v.append("ris_only")
    return v


def _write_traces(out: Outputs, results, prefix="trace_"):
    for r in results:
        if r.variant == "no_ris":
            continue
        write_trace(out.path(f"{prefix}{SHORT[r.variant]}.csv"), r.trace,
                    comment=out.comment(TRACE_UNITS))


# ---------------------------------------------------------------------------
# sub-commands
# ---------------------------------------------------------------------------

def cmd_run(args, cfg: RunConfig, out: Outputs):
    sess = Session(cfg, args.seed, args.threads)
    res = sess.run(args.variant)
    export_trajectory(sess.traj, out.path("trajectory.csv"))
    write_results(out.path("results.csv"), [res], out.comment(UNITS))
    if res.variant != "no_ris":
        write_trace(out.path("trace.csv"), res.trace, comment=out.comment(TRACE_UNITS))
    log.info("%s: mean T_worst %.4f bit/s/Hz", res.variant, res.mean_worst)


def cmd_compare(args, cfg: RunConfig, out: Outputs):
    sess = Session(cfg, args.seed, args.threads)
    results = [sess.run(v) for v in _variants(args, cfg)]
    export_trajectory(sess.traj, out.path("trajectory.csv"))
    write_results(out.path("results.csv"), results, out.comment(UNITS))
    _write_traces(out, results)
    for r in results:
        log.info("%s: mean T_worst %.4f bit/s/Hz", r.variant, r.mean_worst)


def cmd_sweep_noise(args, cfg: RunConfig, out: Outputs):
    sess = Session(cfg, args.seed, args.threads)
    variants = _variants(args, cfg)
    rows = []
    for dbm in cfg.noise_sweep_dbm:
        res = [sess.run(v, dbm_to_watt(dbm)) for v in variants]
        rows.append([repr(float(dbm))] + [repr(r.mean_worst) for r in res])
    with open(out.path("sweep_noise.csv"), "w", newline="") as fh:
        fh.write("# " + out.comment("units: noise in dBm; T_worst_avg in bit/s/Hz") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["noise_dbm"] + [f"T_worst_avg_{v}" for v in variants])
        w.writerows(rows)


def cmd_footprint(args, cfg: RunConfig, out: Outputs):
    sess = Session(cfg, args.seed, args.threads)
    fp = cfg.outputs.footprint
    variants = [args.variant] if args.variant_given else list(fp.variants)
    steps = sorted(set(fp.steps))
    if steps[-1] > sess.traj.C:
        raise ConfigError(f"outputs.footprint.steps: step {steps[-1]} exceeds C={sess.traj.C}")
    if max(fp.beams) > sess.traj.L:
        raise ConfigError(f"outputs.footprint.beams: beam {max(fp.beams)} exceeds L={sess.traj.L}")
    for variant in variants:
        res = sess.run(variant)
        scene = sess.scene.without_wall() if variant == "ris_only" else sess.scene
        inc = incidence_matrix(scene) if variant == "ris_only" else sess.inc
        table = sess.table.with_all_states_as_wall() if variant == "no_ris" else sess.table
        pts = grid_points(scene, fp.nx, fp.ny)
        for c in steps:
            rec = res.per_step[c - 1]
            s = rec.config if rec.config is not None else np.ones(scene.P, int)
            snap = sess.traj.snapshots[c - 1]
            rad = radiation_matrix(scene, snap.positions, inc.nodes, inc.weights)
            ups = cascaded_matrix(scene, table, s, inc, rad, cfg.averaging)
            A = zf_weights(ups, cfg.total_power).A
            for b in fp.beams:
                power = footprint(scene, table, s, A, pts, b - 1, inc, cfg.averaging)
                name = f"footprint_{SHORT[variant]}_c{c}_b{b}.csv"
                with open(out.path(name), "w", newline="") as fh:
                    fh.write("# " + out.comment(
                        f"variant {variant}, step {c}, beam {b}; units: x, y in m; power in W")
                        + "\n")
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["x", "y", "power"])
                    for (x, y, _), p in zip(pts, power):
                        w.writerow([repr(float(x)), repr(float(y)), repr(float(p))])


def cmd_brute_force(args, cfg: RunConfig, out: Outputs):
    sess = Session(cfg, args.seed, args.threads)
    S, P = sess.table.num_states, sess.scene.P
    if S ** P > BRUTE_FORCE_LIMIT:
        raise ConfigError(f"brute force over {S}^{P} configurations is too large "
                          f"(limit {BRUTE_FORCE_LIMIT})")
    snap = sess.traj.snapshots[0]
    ctx = build_context(sess.scene, sess.table, snap, cfg.total_power, cfg.noise_power,
                        inc=sess.inc, averaging=cfg.averaging, threads=args.threads)
    configs = np.array(list(itertools.product(range(1, S + 1), repeat=P)), dtype=np.int64)
    rep = evaluate_batch(ctx, configs)
    L = snap.L
    with open(out.path("brute_force.csv"), "w", newline="") as fh:
        fh.write("# " + out.comment(f"exhaustive enumeration at step {snap.c}; " + UNITS) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config", "T_worst"] + [f"T_{l}" for l in range(1, L + 1)] + ["cost"])
        for cfg_row, t, worst, cost in zip(configs, rep.per_user, rep.worst, rep.cost):
            w.writerow(["-".join(map(str, cfg_row)), repr(float(worst))]
                       + [repr(float(x)) for x in t] + [repr(float(cost))])
    best = int(np.lexsort((-rep.total, rep.cost))[0])
    log.info("optimum %s with T_worst %.6f", "-".join(map(str, configs[best])), rep.worst[best])


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep-noise": cmd_sweep_noise,
            "footprint": cmd_footprint, "brute-force": cmd_brute_force}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="merisc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"merisc {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (default: ga.rng_seed or 0)")
    common.add_argument("--variant", choices=VARIANTS, default=None,
                        help="variant for run/footprint (default me_risc)")
    common.add_argument("--out", default=None, help="output directory (overrides config)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="fitness-evaluation threads")
    common.add_argument("--ris-only", action="store_true",
                        help="add the ris_only variant to compare/sweep-noise")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp header line from CSV files")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"merisc: config error: {exc}", file=sys.stderr)
        return 1
    args.variant_given = args.variant is not None
    args.variant = args.variant or "me_risc"
    if args.seed is None:
        args.seed = cfg.ga.rng_seed if isinstance(cfg.ga.rng_seed, int) else 0
    args.threads = max(1, args.threads)
    out = Outputs(Path(args.out) if args.out else Path(cfg.outputs.directory),
                  timestamp=not args.no_timestamp)
    try:
        COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        out.cleanup()
        print(f"merisc: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        out.cleanup()
        log.debug("runtime failure", exc_info=True)
        print(f"merisc: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Per-user throughput, worst-case throughput and the max-min cost.

Power bookkeeping convention (kept in :func:`noise_term` only): the field
matrix ``F`` is computed with beam weights whose columns carry power
``Lambda / B`` each, and the noise term of the SINR denominator is the
dimensionless ratio ``L * sigma2 / Lambda``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .beamforming import DEFAULT_RTOL, normalize_columns, pinv_rank
from .em import (ChannelFactors, IncidenceMatrix, SusceptibilityTable, channel_factors,
                 incidence_matrix, parse_averaging, radiation_matrix)
from .scene import SceneGeometry, UserSnapshot


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def noise_term(total_power: float, noise_power: float, L: int) -> float:
    return L * noise_power / total_power


@dataclass(frozen=True)
class ThroughputReport:
    per_user: np.ndarray  # bit/s/Hz
    worst: float
    cost: float
    zf_degenerate: bool = False

    @property
    def total(self) -> float:
        return float(np.sum(self.per_user))


def _cost(worst):
    worst = np.asarray(worst, float)
    with np.errstate(divide="ignore"):
        return np.where(worst > 0, 1.0 / np.where(worst > 0, worst, 1.0), np.inf)


def throughput_arrays(F: np.ndarray, total_power: float, noise_power: float):
    """Vectorised core: F is (..., L, L); returns (per_user, worst, cost)."""
    F = np.asarray(F)
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite field entries")
    L = F.shape[-1]
    p = np.abs(F) ** 2
    sig = np.diagonal(p, axis1=-2, axis2=-1)
    interf = p.sum(axis=-1) - sig
    t = np.log2(1.0 + sig / (interf + noise_term(total_power, noise_power, L)))
    worst = t.min(axis=-1)
    return t, worst, _cost(worst)


def throughput(F: np.ndarray, total_power: float, noise_power: float,
               zf_degenerate: bool = False) -> ThroughputReport:
    F = np.asarray(F)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("F must be an L x L matrix (one beam per user)")
    t, worst, cost = throughput_arrays(F, total_power, noise_power)
    return ThroughputReport(t, float(worst), float(cost), bool(zf_degenerate))


def cost_order(cost: np.ndarray, total: np.ndarray) -> np.ndarray:
    """Indices from best to worst: lower cost first, ties by larger total throughput."""
    return np.lexsort((-np.asarray(total), np.asarray(cost)))


@dataclass(frozen=True)
class EvalContext:
    """Everything needed to score RIS configurations at one time step."""
    scene: SceneGeometry
    table: SusceptibilityTable
    snapshot: UserSnapshot
    total_power: float
    noise_power: float
    X: np.ndarray  # (L, 4, Nr) RIS-node factors
    Y: np.ndarray  # (4 * Nr, M)
    ris_patch: np.ndarray  # (Nr,) patch index of every RIS node
    upsilon_fixed: np.ndarray  # (L, M) wall contribution
    coef: np.ndarray  # (S, 4) channel coefficients per state
    wall_coef: np.ndarray  # (4,)
    rtol: float = DEFAULT_RTOL
    threads: int = 1

    @property
    def L(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        return self.scene.P

    @property
    def num_states(self) -> int:
        return self.coef.shape[0]


def _coef_rows(ke, kh):
    ke = np.atleast_2d(ke)
    kh = np.atleast_2d(kh)
    return np.stack([ke[:, 0], ke[:, 1], kh[:, 0], kh[:, 1]], axis=-1)


def build_context(scene: SceneGeometry, table: SusceptibilityTable, snapshot: UserSnapshot,
                  total_power: float, noise_power: float,
                  inc: Optional[IncidenceMatrix] = None, averaging="incident",
                  rtol: float = DEFAULT_RTOL, threads: int = 1) -> EvalContext:
    if total_power <= 0 or noise_power <= 0:
        raise ValueError("powers must be positive")
    if scene.M < snapshot.L:
        raise ValueError(f"zero forcing needs M >= L (M={scene.M}, L={snapshot.L})")
    if inc is None:
        inc = incidence_matrix(scene)
    rad = radiation_matrix(scene, snapshot.positions, inc.nodes, inc.weights)
    fac: ChannelFactors = channel_factors(scene, inc, rad, parse_averaging(averaging))
    is_ris = inc.patch_index < scene.P
    wall = ~is_ris
    wall_coef = _coef_rows(table.wall_ke, table.wall_kh)[0]
    if wall.any():
        kw = np.broadcast_to(wall_coef[:, None], (4, int(wall.sum())))
        Xw = (fac.X[:, :, wall] * kw[None]).reshape(fac.X.shape[0], -1)
        ups_wall = Xw @ fac.Y[:, wall].reshape(-1, scene.M)
    else:
        ups_wall = np.zeros((snapshot.L, scene.M), complex)
    X = np.ascontiguousarray(fac.X[:, :, is_ris])
    Y = np.ascontiguousarray(fac.Y[:, is_ris].reshape(-1, scene.M))
    return EvalContext(scene=scene, table=table, snapshot=snapshot,
                       total_power=float(total_power), noise_power=float(noise_power),
                       X=X, Y=Y, ris_patch=inc.patch_index[is_ris], upsilon_fixed=ups_wall,
                       coef=_coef_rows(table.ke, table.kh), wall_coef=wall_coef,
                       rtol=rtol, threads=max(1, int(threads)))


@dataclass
class BatchReport:
    per_user: np.ndarray  # (G, L)
    worst: np.ndarray
    cost: np.ndarray
    zf_degenerate: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.per_user.sum(axis=1)

    def report(self, i: int) -> ThroughputReport:
        return ThroughputReport(self.per_user[i].copy(), float(self.worst[i]),
                                float(self.cost[i]), bool(self.zf_degenerate[i]))


def channels(ctx: EvalContext, configs: np.ndarray) -> np.ndarray:
    """Cascaded channels (G, L, M) of a stack of configurations (G, P)."""
    configs = np.asarray(configs)
    k = ctx.coef[configs[:, ctx.ris_patch] - 1]  # (G, Nr, 4)
    return _assemble(ctx, np.swapaxes(k, 1, 2))


def _assemble(ctx: EvalContext, k: np.ndarray) -> np.ndarray:
    G = k.shape[0]
    Xk = (ctx.X[None] * k[:, None]).reshape(G, ctx.L, -1)
    return Xk @ ctx.Y + ctx.upsilon_fixed


def _score(ctx: EvalContext, ups: np.ndarray):
    a_raw, rank = pinv_rank(ups, ctx.rtol)
    A = normalize_columns(a_raw, ctx.total_power)
    t, worst, cost = throughput_arrays(ups @ A, ctx.total_power, ctx.noise_power)
    return t, worst, cost, rank < ctx.L


def _validate(ctx: EvalContext, configs: np.ndarray) -> np.ndarray:
    configs = np.atleast_2d(np.asarray(configs))
    if configs.shape[1] != ctx.P:
        raise ValueError(f"configurations must have {ctx.P} states")
    if configs.size and (configs.min() < 1 or configs.max() > ctx.num_states):
        raise ValueError(f"state index outside 1..{ctx.num_states}")
    return configs.astype(np.int64)


def evaluate_batch(ctx: EvalContext, configs, threads: Optional[int] = None) -> BatchReport:
    """Score a stack of configurations; rows are scored independently.

    Each row goes through identically shaped kernels, so results do not
    depend on how the stack is split across threads.
    """
    configs = _validate(ctx, configs)
    G = configs.shape[0]
    threads = ctx.threads if threads is None else max(1, int(threads))

    def work(lo, hi):
        return _score(ctx, channels(ctx, configs[lo:hi]))

    if threads == 1 or G < 2 * threads:
        parts = [work(0, G)]
    else:
        bounds = np.linspace(0, G, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda b: work(*b), zip(bounds[:-1], bounds[1:])))
    t, worst, cost, deg = (np.concatenate(x) for x in zip(*parts))
    return BatchReport(t, worst, cost, deg)


def evaluate_cost(s, ctx: EvalContext) -> ThroughputReport:
    """Max-min cost of one RIS configuration under zero-forcing weights."""
    return evaluate_batch(ctx, np.asarray(s)[None, :], threads=1).report(0)


def evaluate_wall_only(ctx: EvalContext) -> ThroughputReport:
    """Score the scene with every RIS patch replaced by plain wall."""
    k = np.broadcast_to(ctx.wall_coef[:, None], (4, ctx.X.shape[2]))[None]
    t, worst, cost, deg = _score(ctx, _assemble(ctx, k))
    return ThroughputReport(t[0], float(worst[0]), float(cost[0]), bool(deg[0]))

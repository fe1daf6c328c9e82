"""Memory-enhanced genetic optimizer for discrete RIS configurations.

One call of :func:`optimize_step` solves one time step.  The population
loop adapts its mutation/crossover rates to the population variance,
re-seeds a variance-dependent fraction of the worst individuals, and uses
the effectiveness indicator ``theta`` to decide between storing the
best-so-far configuration in a bounded memory pool and restoring the
memory's best (re-scored under the current step) into the population.
The pool is the only state carried from one time step to the next.
"""
from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .qos import EvalContext, ThroughputReport, cost_order, evaluate_batch

log = logging.getLogger(__name__)

POLARITIES = ("paper", "inverted")


@dataclass(frozen=True)
class GaParams:
    population: int = 100
    max_iterations: int = 100
    rho_min: float = 0.02
    rho_max: float = 0.06
    psi_min: float = 0.6
    psi_max: float = 0.95
    sigma_max: float = 1.0
    window: int = 3
    nu_max: float = 0.2
    beta_max: float = 0.2
    kappa_max: float = 0.2
    delta: float = 1e-6
    memory_capacity: int = 20
    rng_seed: Optional[int] = None
    memory_trigger_polarity: str = "paper"
    # beyond the core parameter set
    tournament_size: int = 2
    elitism: int = 0
    recall_on_step_start: bool = True

    def __post_init__(self):
        if not 0 <= self.rho_min <= self.rho_max <= 1:
            raise ValueError("need 0 <= rho_min <= rho_max <= 1")
        if not 0 <= self.psi_min <= self.psi_max <= 1:
            raise ValueError("need 0 <= psi_min <= psi_max <= 1")
        for name in ("nu_max", "beta_max", "kappa_max"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.delta <= 0 or self.sigma_max <= 0:
            raise ValueError("delta and sigma_max must be positive")
        if self.memory_capacity < 0:
            raise ValueError("memory_capacity must be >= 0")
        if self.memory_trigger_polarity not in POLARITIES:
            raise ValueError(f"memory_trigger_polarity must be one of {POLARITIES}")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be in [0, population)")

    def without_memory(self) -> "GaParams":
        """The plain adaptive GA: no replacement, no store, no restore."""
        return replace(self, nu_max=0.0, beta_max=0.0, kappa_max=0.0)


@dataclass
class Population:
    individuals: np.ndarray  # (G, P) int, states in 1..2**B
    fitness: np.ndarray  # (G,) cost, NaN = not evaluated for this step
    total: np.ndarray  # (G,) sum of per-user throughputs (tie-break)
    iteration: int = 0

    @property
    def size(self) -> int:
        return self.individuals.shape[0]

    def stale(self) -> np.ndarray:
        return np.isnan(self.fitness)

    def order(self) -> np.ndarray:
        """Indices from best to worst."""
        return cost_order(self.fitness, self.total)


@dataclass
class MemoryEntry:
    config: np.ndarray
    stored_at: Tuple[int, int]
    fitness_at_store: float


class MemoryPool:
    """Bounded FIFO archive of elite configurations, no duplicates."""

    def __init__(self, capacity: int = 20):
        self.capacity = int(capacity)
        self._entries: deque = deque()
        self._keys: set = set()

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> List[MemoryEntry]:
        return list(self._entries)

    def __contains__(self, config) -> bool:
        return np.asarray(config, np.int64).tobytes() in self._keys

    def store(self, config, stored_at=(0, 0), fitness=np.nan) -> bool:
        if self.capacity == 0:
            return False
        cfg = np.array(config, dtype=np.int64)
        key = cfg.tobytes()
        if key in self._keys:
            return False
        if len(self._entries) >= self.capacity:
            old = self._entries.popleft()
            self._keys.discard(old.config.tobytes())
        cfg.setflags(write=False)
        self._entries.append(MemoryEntry(cfg, tuple(stored_at), float(fitness)))
        self._keys.add(key)
        return True

    def best_under(self, ctx: EvalContext):
        """Re-score every entry under ``ctx``; return (config, cost, total) of the best."""
        if not self._entries:
            return None
        configs = np.stack([e.config for e in self._entries])
        rep = evaluate_batch(ctx, configs)
        i = cost_order(rep.cost, rep.total)[0]
        return configs[i].copy(), float(rep.cost[i]), float(rep.total[i])


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def init_population(P: int, B: int, gamma: int, rng: np.random.Generator) -> Population:
    ind = rng.integers(1, 2 ** B + 1, size=(gamma, P))
    return Population(ind, np.full(gamma, np.nan), np.full(gamma, np.nan), 0)


def population_variance(pop) -> float:
    """Mean squared distance of the individuals from the gene-wise mean."""
    x = pop.individuals if isinstance(pop, Population) else np.asarray(pop)
    x = np.atleast_2d(x).astype(float)
    return float(np.sum(np.mean((x - x.mean(axis=0)) ** 2, axis=0)))


def _ratio(sigma: float, params: GaParams) -> float:
    return min(sigma / params.sigma_max, 1.0)


def adaptive_rates(sigma: float, params: GaParams) -> Tuple[float, float]:
    r = _ratio(sigma, params)
    # convex weights hit both endpoints bit-exactly
    rho = params.rho_max * (1.0 - r) + params.rho_min * r
    psi = params.psi_min * (1.0 - r) + params.psi_max * r
    return rho, psi


def replacement_fraction(sigma: float, params: GaParams) -> float:
    return params.nu_max * (1.0 - _ratio(sigma, params))


def _crossover_pairs(a: np.ndarray, b: np.ndarray, psi: float, rng: np.random.Generator):
    n, P = a.shape
    do = rng.random(n) < psi
    cut = rng.integers(1, P, size=n) if P > 1 else np.ones(n, int)
    if P == 1:
        do[:] = False
    loci = np.arange(P)[None, :]
    swap = do[:, None] & (loci >= cut[:, None])
    return np.where(swap, b, a), np.where(swap, a, b)


def _mutate_array(x: np.ndarray, rho: float, n_states: int, rng: np.random.Generator):
    hit = rng.random(x.shape) < rho
    shift = rng.integers(1, n_states, size=x.shape) if n_states > 1 else np.zeros(x.shape, int)
    return np.where(hit, (x - 1 + shift) % n_states + 1, x)


def crossover(parent_a, parent_b, psi: float, rng: np.random.Generator,
              cut: Optional[int] = None):
    """Single-point crossover applied with probability ``psi``.

    With an explicit ``cut`` k the exchange always happens and the first
    child is ``a[:k] + b[k:]``.
    """
    a = np.asarray(parent_a)
    b = np.asarray(parent_b)
    if a.shape != b.shape:
        raise ValueError("parents must have equal length")
    if cut is not None:
        if not 0 <= cut <= a.size:
            raise ValueError("cut must lie in 0..P")
        return np.concatenate([a[:cut], b[cut:]]), np.concatenate([b[:cut], a[cut:]])
    ca, cb = _crossover_pairs(a[None], b[None], psi, rng)
    return ca[0], cb[0]


def mutate(ind, rho: float, B: int, rng: np.random.Generator) -> np.ndarray:
    """Resample each gene with probability ``rho`` to one of the other states."""
    return _mutate_array(np.asarray(ind)[None], rho, 2 ** B, rng)[0]


def tournament(pop: Population, n: int, rng: np.random.Generator, size: int = 2) -> np.ndarray:
    rank = np.empty(pop.size, int)
    rank[pop.order()] = np.arange(pop.size)
    picks = rng.integers(0, pop.size, size=(n, size))
    return picks[np.arange(n), np.argmin(rank[picks], axis=1)]


def next_generation(pop: Population, rho: float, psi: float, params: GaParams,
                    n_states: int, rng: np.random.Generator) -> Population:
    G = pop.size
    n_elite = params.elitism
    n_off = G - n_elite
    parents = pop.individuals[tournament(pop, n_off, rng, params.tournament_size)]
    kids = parents.copy()
    n_pairs = n_off // 2
    if n_pairs:
        a, b = _crossover_pairs(parents[0:2 * n_pairs:2], parents[1:2 * n_pairs:2], psi, rng)
        kids[0:2 * n_pairs:2] = a
        kids[1:2 * n_pairs:2] = b
    kids = _mutate_array(kids, rho, n_states, rng)
    fit = np.full(G, np.nan)
    tot = np.full(G, np.nan)
    ind = np.empty_like(pop.individuals)
    if n_elite:
        el = pop.order()[:n_elite]
        ind[:n_elite] = pop.individuals[el]
        fit[:n_elite] = pop.fitness[el]
        tot[:n_elite] = pop.total[el]
    ind[n_elite:] = kids
    return Population(ind, fit, tot, pop.iteration + 1)


def evaluate_population(pop: Population, ctx: EvalContext) -> int:
    """Score the stale individuals in place; returns how many were scored."""
    idx = np.flatnonzero(pop.stale())
    if idx.size:
        rep = evaluate_batch(ctx, pop.individuals[idx])
        pop.fitness[idx] = rep.cost
        pop.total[idx] = rep.total
    return int(idx.size)


def replace_worst(pop: Population, sigma: float, params: GaParams, rng: np.random.Generator,
                  n_states: int) -> Tuple[Population, int]:
    """Swap the floor(nu * G) worst individuals for fresh random ones (marked stale)."""
    k = int(np.floor(replacement_fraction(sigma, params) * pop.size + 1e-12))
    if k <= 0:
        return pop, 0
    worst = pop.order()[pop.size - k:]
    ind = pop.individuals.copy()
    ind[worst] = rng.integers(1, n_states + 1, size=(k, ind.shape[1]))
    fit = pop.fitness.copy()
    tot = pop.total.copy()
    fit[worst] = np.nan
    tot[worst] = np.nan
    return Population(ind, fit, tot, pop.iteration), k


def effectiveness(history, v: int, window: int) -> float:
    """Weighted recent change of the iteration-local best cost.

    ``history[i]`` is the best cost of iteration ``i + 1``.
    """
    if v <= 1:
        return 0.0
    h = history
    theta = 0.0
    for k in range(1, min(window, v - 1) + 1):
        d = h[v - 1] - h[v - 1 - k]
        if np.isnan(d):  # inf - inf
            d = 0.0
        theta += d / 2.0 ** k
    return float(theta)


def _restore(pop: Population, memory: MemoryPool, ctx: EvalContext) -> bool:
    found = memory.best_under(ctx)
    if found is None:
        return False
    cfg, cost, total = found
    worst = pop.order()[-1]
    # only an improvement over the current worst is accepted
    if cost_order(np.array([cost, pop.fitness[worst]]),
                  np.array([total, pop.total[worst]]))[0] != 0:
        return False
    pop.individuals[worst] = cfg
    pop.fitness[worst] = cost
    pop.total[worst] = total
    return True


def memory_step(pop: Population, theta: float, theta_history, memory: MemoryPool,
                params: GaParams, ctx: EvalContext, rng: np.random.Generator,
                best: Optional[np.ndarray] = None, best_cost: float = np.nan,
                stored_at=(0, 0)):
    """Store or restore according to the sign of ``theta``.

    Returns ``(pop, memory, event, beta, kappa)`` where ``event`` is one of
    ``"stored"``, ``"restored"`` or ``"none"``.  Exactly one uniform draw is
    consumed per call.
    """
    theta_max = max((abs(t) for t in theta_history), default=0.0)
    theta_max = max(theta_max, abs(theta))
    if theta_max > 0 and np.isfinite(theta_max):
        ratio = min(max(abs(theta) / theta_max, 0.0), 1.0)
    elif theta_max > 0:
        ratio = 1.0 if not np.isfinite(theta) else 0.0
    else:
        ratio = 0.0
    learn = theta >= 0
    if params.memory_trigger_polarity == "inverted":
        learn = not learn
    u = rng.random()
    if learn:
        beta = ratio * params.beta_max
        if u < beta and best is not None and memory.store(best, stored_at, best_cost):
            return pop, memory, "stored", beta, 0.0
        return pop, memory, "none", beta, 0.0
    kappa = ratio * params.kappa_max
    if u < kappa and len(memory) and _restore(pop, memory, ctx):
        return pop, memory, "restored", 0.0, kappa
    return pop, memory, "none", 0.0, kappa


# ---------------------------------------------------------------------------
# one time step
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    c: int
    v: int
    best_cost: float
    sigma: float
    rho: float
    psi: float
    theta: float
    beta: float
    kappa: float
    event: str


TRACE_HEADER = ["c", "v", "Phi_best", "sigma_v", "rho_v", "psi_v", "Theta_v",
                "beta_v", "kappa_v", "event"]


@dataclass
class StepOutcome:
    config: np.ndarray
    report: ThroughputReport
    memory: Optional[MemoryPool]
    trace: List[IterationRecord]
    first_best: np.ndarray  # best-so-far after the first iteration
    first_best_cost: float
    initial_cost: float  # best of the random initial population
    iterations: int
    stored: int = 0
    restored: int = 0
    evaluations: int = 0

    @property
    def delta_s(self) -> np.ndarray:
        return np.abs(self.first_best - self.config)


def _better(cost, total, ref_cost, ref_total) -> bool:
    if cost < ref_cost:
        return True
    return cost == ref_cost and total > ref_total


def optimize_step(ctx: EvalContext, params: GaParams, memory: Optional[MemoryPool],
                  rng: np.random.Generator, c: int = 1) -> StepOutcome:
    B = ctx.table.bits
    S = 2 ** B
    pop = init_population(ctx.P, B, params.population, rng)
    trace: List[IterationRecord] = []
    local_hist: List[float] = []
    best_hist: List[float] = []
    thetas: List[float] = []
    best = None
    best_cost, best_total = np.inf, -np.inf
    first_best = None
    first_cost = initial_cost = np.nan
    stored = restored = evals = 0
    rho, psi = adaptive_rates(0.0, params)

    def track(p: Population):
        nonlocal best, best_cost, best_total
        i = p.order()[0]
        if best is None or _better(p.fitness[i], p.total[i], best_cost, best_total):
            best = p.individuals[i].copy()
            best_cost, best_total = float(p.fitness[i]), float(p.total[i])

    v = 0
    for v in range(1, params.max_iterations + 1):
        if v > 1:
            pop = next_generation(pop, rho, psi, params, S, rng)
        evals += evaluate_population(pop, ctx)
        recalled = False
        if v == 1:
            initial_cost = float(pop.fitness[pop.order()[0]])
            if (params.recall_on_step_start and params.kappa_max > 0
                    and memory is not None and len(memory)):
                evals += len(memory)
                recalled = _restore(pop, memory, ctx)
                restored += int(recalled)
        local_hist.append(float(pop.fitness[pop.order()[0]]))
        track(pop)

        sigma = population_variance(pop)
        rho, psi = adaptive_rates(sigma, params)
        pop, _ = replace_worst(pop, sigma, params, rng, S)
        evals += evaluate_population(pop, ctx)

        theta = effectiveness(local_hist, v, params.window)
        pool = memory if memory is not None else MemoryPool(0)
        n_mem = len(pool)
        pop, pool, event, beta, kappa = memory_step(
            pop, theta, thetas, pool, params, ctx, rng, best, best_cost, (c, v))
        thetas.append(theta)
        if event == "restored":
            evals += n_mem
            restored += 1
        elif event == "stored":
            stored += 1
        elif recalled:
            event = "recalled"
        track(pop)
        best_hist.append(best_cost)
        if v == 1:
            first_best, first_cost = best.copy(), best_cost
        trace.append(IterationRecord(c, v, best_cost, sigma, rho, psi, theta, beta, kappa, event))

        if v > params.window:
            recent = np.mean(best_hist[-params.window - 1:-1])
            if abs(best_cost - recent) < params.delta:
                break
    report = evaluate_batch(ctx, best[None, :]).report(0)
    return StepOutcome(config=best, report=report, memory=memory, trace=trace,
                       first_best=first_best, first_best_cost=first_cost,
                       initial_cost=initial_cost, iterations=v, stored=stored,
                       restored=restored, evaluations=evals)


def write_trace(path, records, header: bool = True, comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([r.c, r.v, repr(r.best_cost), repr(r.sigma), repr(r.rho), repr(r.psi),
                        repr(r.theta), repr(r.beta), repr(r.kappa), r.event])

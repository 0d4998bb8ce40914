"""Master-slave parallel genetic algorithm over the OLSR parameter space.

The master owns all evolutionary state and randomness; fitness
evaluations (one simulation each) are farmed out to a fixed pool of
worker processes with a synchronous barrier per generation. Evaluation
seeds depend only on (master_seed, generation, index), so results are
bit-identical for any worker count.

Fitness rewards energy savings relative to the standard-defaults
reference run and mildly rewards delivery; configurations whose PDR
falls below 85% of the reference get an additive penalty. Lower is
better throughout.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .olsr import OlsrConfig, ParamSpace, decode_genome, rfc_default
from .scenario import Scenario
from .seeding import derive_rng, derive_seed
from .sim import NicProfile, SimMetrics, run_simulation

__all__ = [
    "Individual",
    "FitnessRecord",
    "FitnessContext",
    "GaSettings",
    "GenerationStats",
    "WORST_FITNESS",
    "fitness",
    "penalized_fitness",
    "score",
    "calibrate_context",
    "evaluate",
    "eval_seed",
    "diagonal_init",
    "arithmetic_crossover",
    "blend",
    "mutate",
    "MUTATION_MOVES",
    "tournament_select",
    "evolve",
    "parameter_setting_grid",
    "HISTORY_COLUMNS",
]

log = logging.getLogger(__name__)

# sentinel for failed evaluations: above any achievable penalized fitness
WORST_FITNESS = 1.85


@dataclass(frozen=True)
class FitnessContext:
    """Reference values and weights for the fitness function."""

    e_rfc: float
    pdr_rfc: float
    w1: float = 0.9
    w2: float = -0.1
    delta: float = 0.1
    pdr_max: float = 100.0
    admission: float = 0.85  # PDR floor as a fraction of the reference

    def __post_init__(self):
        if self.e_rfc <= 0:
            raise ConfigurationError("e_rfc must be positive")
        if not 0 < self.pdr_rfc <= 100:
            raise ConfigurationError("pdr_rfc must be in (0, 100]")
        if abs(self.w1 + abs(self.w2) - 1.0) > 1e-12:
            raise ConfigurationError("weights must satisfy w1 + |w2| = 1")


def fitness(energy: float, pdr: float, ctx: FitnessContext) -> float:
    """Unpenalized fitness: delta + w1*E/E_ref + w2*PDR/PDR_max."""
    return ctx.delta + ctx.w1 * energy / ctx.e_rfc + ctx.w2 * pdr / ctx.pdr_max


def penalized_fitness(energy: float, pdr: float, ctx: FitnessContext) -> float:
    """Fitness plus the low-PDR penalty (use when pdr < admission * ref)."""
    penalty = ctx.admission * (ctx.pdr_rfc - pdr) / ctx.pdr_rfc * energy / ctx.e_rfc
    return fitness(energy, pdr, ctx) + penalty


def score(energy: float, pdr: float, ctx: FitnessContext) -> tuple:
    """(f, f_raw, penalized) applying the admission threshold."""
    f_raw = fitness(energy, pdr, ctx)
    if pdr < ctx.admission * ctx.pdr_rfc:
        return penalized_fitness(energy, pdr, ctx), f_raw, True
    return f_raw, f_raw, False


@dataclass(frozen=True)
class FitnessRecord:
    f: float
    f_raw: float
    penalized: bool
    energy: float  # millijoules
    pdr: float  # percent
    metrics: SimMetrics | None


@dataclass(frozen=True)
class Individual:
    genes: tuple
    id: tuple  # (generation, index)
    fitness: FitnessRecord | None = None


@dataclass(frozen=True)
class GaSettings:
    pop_size: int = 24
    p_c: float = 0.7
    p_m: float = 0.25
    generations: int = 100
    workers: int = 1
    master_seed: int = 1
    elitism: int = 1

    def __post_init__(self):
        if self.pop_size < 2 or self.pop_size % 2:
            raise ConfigurationError("pop_size must be even and >= 2")
        if not (0 <= self.p_c <= 1 and 0 <= self.p_m <= 1):
            raise ConfigurationError("p_c and p_m must be in [0, 1]")
        if self.generations < 0:
            raise ConfigurationError("generations must be >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if not 0 <= self.elitism < self.pop_size:
            raise ConfigurationError("elitism must be in [0, pop_size)")


def eval_seed(master_seed: int, generation: int, index: int) -> int:
    """Simulation seed for individual (generation, index): independent of
    worker count and scheduling by construction."""
    return derive_seed(master_seed, "eval", generation, index)


def calibrate_context(
    scenario: Scenario, nic: NicProfile, master_seed: int
) -> FitnessContext:
    """Measure the reference energy and PDR with one standard-defaults run
    seeded by the master seed."""
    m = run_simulation(scenario, rfc_default(), nic, master_seed)
    if m.pdr is None or m.pdr <= 0:
        raise DomainError("reference run delivered nothing; scenario unusable for tuning")
    return FitnessContext(e_rfc=m.energy.e_total, pdr_rfc=m.pdr)


def evaluate(
    ind: Individual,
    scenario: Scenario,
    nic: NicProfile,
    ctx: FitnessContext,
    seed_policy,
    space: ParamSpace,
) -> FitnessRecord:
    """Decode, simulate with the individual's derived seed, and score.

    Failures never abort a run: the individual gets the worst-fitness
    sentinel and the error is logged.
    """
    generation, index = ind.id
    seed = seed_policy(generation, index)
    try:
        config = decode_genome(ind.genes, space)
        metrics = run_simulation(scenario, config, nic, seed)
        if metrics.pdr is None:
            raise DomainError("no data traffic in evaluation run")
    except Exception:
        log.exception("evaluation failed for individual %s", ind.id)
        return FitnessRecord(
            f=WORST_FITNESS,
            f_raw=WORST_FITNESS,
            penalized=True,
            energy=math.inf,
            pdr=0.0,
            metrics=None,
        )
    energy = metrics.energy.e_total
    f, f_raw, penalized = score(energy, metrics.pdr, ctx)
    return FitnessRecord(
        f=f, f_raw=f_raw, penalized=penalized, energy=energy, pdr=metrics.pdr, metrics=metrics
    )


def _wrap(value: float, lo: float, hi: float) -> float:
    span = hi - lo
    return lo + ((value - lo) % span)


def _round_willingness(genes: list, space: ParamSpace) -> list:
    for k in space.integer_genes:
        lo, hi = space.bounds[k]
        g = math.floor(genes[k] + 0.5)
        genes[k] = float(min(max(g, lo), hi))
    return genes


def diagonal_init(space: ParamSpace, pop_size: int, rng) -> list:
    """Seed individual p inside the p-th diagonal band of the space.

    Each gene starts from the standard default plus an offset covering
    ((p + beta)/pop_size) of the gene's span, wrapped back into range, so
    the initial population spreads across the whole space instead of
    clustering around the defaults.
    """
    if pop_size < 1:
        raise ConfigurationError("pop_size must be >= 1")
    population = []
    for p in range(pop_size):
        genes = []
        for i in range(space.n_genes):
            lo, hi = space.bounds[i]
            beta = rng.random()
            alpha = ((p + beta) / pop_size) * (hi - lo)
            genes.append(_wrap(space.rfc[i] + alpha, lo, hi))
        genes = _round_willingness(genes, space)
        population.append(Individual(genes=tuple(genes), id=(0, p)))
    return population


def blend(parent_p, parent_q, sigma: float) -> tuple:
    """Raw arithmetic blend, no rounding or clamping: children conserve
    per-gene sums for every sigma."""
    c1 = tuple(sigma * p + (1 - sigma) * q for p, q in zip(parent_p, parent_q))
    c2 = tuple((1 - sigma) * p + sigma * q for p, q in zip(parent_p, parent_q))
    return c1, c2


def arithmetic_crossover(parent_p, parent_q, sigma: float, space: ParamSpace) -> tuple:
    """Weighted recombination; the caller passes the fitter parent first
    so sigma >= 0.5 biases both children toward it."""
    if not 0 <= sigma <= 1:
        raise ConfigurationError("sigma must be in [0, 1]")
    c1, c2 = blend(parent_p, parent_q, sigma)
    out = []
    for child in (c1, c2):
        genes = []
        for i, g in enumerate(child):
            lo, hi = space.bounds[i]
            genes.append(min(max(g, lo), hi))
        out.append(tuple(_round_willingness(genes, space)))
    return out[0], out[1]


def _resample(genes, idxs, rng, space):
    for i in idxs:
        lo, hi = space.bounds[i]
        genes[i] = lo + rng.random() * (hi - lo)


def _clamp_gene(genes, i, value, space):
    lo, hi = space.bounds[i]
    genes[i] = min(max(value, lo), hi)


# the 22-movement catalog over the genome
# (hello, refresh, tc, willingness, neighb, mid, top, dup):
#   1-8   resample one gene uniformly in its range
#   9-12  paired resamples: hello+neighb, tc+top, tc+mid, refresh+hello
#   13-15 standard ratios: neighb=3*hello, top=3*tc, mid=3*tc
#   16-17 scale hello / tc by a uniform factor in [0.5, 2]
#   18    willingness +-1
#   19    resample the four hold times
#   20    resample the three intervals
#   21    reset one uniformly chosen gene to its default
#   22    resample the full genome
MUTATION_MOVES = 22


def mutate(genes, rng, space: ParamSpace) -> tuple:
    """Apply one uniformly chosen movement from the 22-entry catalog."""
    out = list(genes)
    move = rng.randrange(MUTATION_MOVES) + 1
    if 1 <= move <= 8:
        _resample(out, (move - 1,), rng, space)
    elif move == 9:
        _resample(out, (0, 4), rng, space)
    elif move == 10:
        _resample(out, (2, 6), rng, space)
    elif move == 11:
        _resample(out, (2, 5), rng, space)
    elif move == 12:
        _resample(out, (1, 0), rng, space)
    elif move == 13:
        _clamp_gene(out, 4, 3.0 * out[0], space)
    elif move == 14:
        _clamp_gene(out, 6, 3.0 * out[2], space)
    elif move == 15:
        _clamp_gene(out, 5, 3.0 * out[2], space)
    elif move == 16:
        _clamp_gene(out, 0, out[0] * rng.uniform(0.5, 2.0), space)
    elif move == 17:
        _clamp_gene(out, 2, out[2] * rng.uniform(0.5, 2.0), space)
    elif move == 18:
        delta = 1.0 if rng.random() < 0.5 else -1.0
        _clamp_gene(out, 3, out[3] + delta, space)
    elif move == 19:
        _resample(out, (4, 5, 6, 7), rng, space)
    elif move == 20:
        _resample(out, (0, 1, 2), rng, space)
    elif move == 21:
        k = rng.randrange(space.n_genes)
        out[k] = space.rfc[k]
    else:  # move == 22
        _resample(out, range(space.n_genes), rng, space)
    return tuple(_round_willingness(out, space))


def _rank_key(ind: Individual) -> tuple:
    return (ind.fitness.f, ind.id[1])


def tournament_select(population, rng) -> Individual:
    """Binary tournament, minimizing fitness; ties go to the lower index."""
    n = len(population)
    if n < 2:
        raise DomainError("population too small for a tournament")
    i = rng.randrange(n)
    j = rng.randrange(n - 1)
    if j >= i:
        j += 1
    a, b = population[i], population[j]
    return a if _rank_key(a) <= _rank_key(b) else b


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_f: float
    avg_f: float
    best_energy: float
    best_pdr: float
    penalized_count: int


HISTORY_COLUMNS = ("generation", "best_f", "avg_f", "best_energy", "best_pdr", "penalized_count")


# worker-side cache: the constant evaluation payload is shipped once per
# worker via the pool initializer instead of with every task
_worker_payload = None


def _init_worker(payload):
    global _worker_payload
    _worker_payload = payload


def _eval_task(args):
    genes, ind_id = args
    scenario, nic, ctx, space, master_seed, pad_s = _worker_payload
    if pad_s > 0:
        time.sleep(pad_s)  # emulates a heavier simulator for scaling runs
    ind = Individual(genes=genes, id=ind_id)

    def policy(g, p):
        return eval_seed(master_seed, g, p)

    return evaluate(ind, scenario, nic, ctx, policy, space)


class _Evaluator:
    """Evaluates a batch of individuals, in-process or on a worker pool."""

    def __init__(self, settings: GaSettings, scenario, nic, ctx, space, eval_pad_s=0.0):
        self.payload = (scenario, nic, ctx, space, settings.master_seed, eval_pad_s)
        self.pool = None
        if settings.workers > 1:
            self.pool = ProcessPoolExecutor(
                max_workers=settings.workers,
                initializer=_init_worker,
                initargs=(self.payload,),
            )

    def run(self, population) -> list:
        args = [(ind.genes, ind.id) for ind in population]
        if self.pool is None:
            _init_worker(self.payload)
            records = [_eval_task(a) for a in args]
        else:
            records = list(self.pool.map(_eval_task, args))
        return [replace(ind, fitness=rec) for ind, rec in zip(population, records)]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _gen_stats(generation: int, population) -> GenerationStats:
    best = min(population, key=_rank_key)
    avg = float(np.mean([ind.fitness.f for ind in population]))
    return GenerationStats(
        generation=generation,
        best_f=best.fitness.f,
        avg_f=avg,
        best_energy=best.fitness.energy,
        best_pdr=best.fitness.pdr,
        penalized_count=sum(1 for ind in population if ind.fitness.penalized),
    )


def evolve(
    settings: GaSettings,
    space: ParamSpace,
    scenario: Scenario,
    nic: NicProfile,
    ctx: FitnessContext | None = None,
    eval_pad_s: float = 0.0,
) -> tuple:
    """Run the generational GA; returns (best Individual, history).

    If `ctx` is None the reference values are calibrated with one
    standard-defaults run seeded by the master seed. History holds one
    GenerationStats per generation including the initial population.
    `eval_pad_s` pads every evaluation (benchmark workloads only); it
    never changes the results.
    """
    if ctx is None:
        ctx = calibrate_context(scenario, nic, settings.master_seed)
    rng = derive_rng(settings.master_seed, "ga")
    evaluator = _Evaluator(settings, scenario, nic, ctx, space, eval_pad_s)
    try:
        population = evaluator.run(diagonal_init(space, settings.pop_size, rng))
        history = [_gen_stats(0, population)]
        best = min(population, key=_rank_key)

        for g in range(1, settings.generations + 1):
            offspring = []
            while len(offspring) < settings.pop_size:
                a = tournament_select(population, rng)
                b = tournament_select(population, rng)
                if _rank_key(b) < _rank_key(a):
                    a, b = b, a
                if rng.random() < settings.p_c:
                    sigma = 0.5 + 0.5 * rng.random()
                    g1, g2 = arithmetic_crossover(a.genes, b.genes, sigma, space)
                else:
                    g1, g2 = a.genes, b.genes
                for genes in (g1, g2):
                    if rng.random() < settings.p_m:
                        genes = mutate(genes, rng, space)
                    offspring.append(Individual(genes=genes, id=(g, len(offspring))))
            offspring = evaluator.run(offspring)

            if settings.elitism:
                elite = sorted(population, key=_rank_key)[: settings.elitism]
                worst = sorted(offspring, key=_rank_key)[len(offspring) - settings.elitism :]
                worst_ids = {ind.id for ind in worst}
                merged = [ind for ind in offspring if ind.id not in worst_ids]
                merged.extend(elite)
                population = merged
            else:
                population = offspring

            gen_best = min(population, key=_rank_key)
            if gen_best.fitness.f < best.fitness.f:
                best = gen_best
            history.append(_gen_stats(g, population))
        return best, history
    finally:
        evaluator.close()


def parameter_setting_grid(
    pc_values,
    pm_values,
    repetitions: int,
    base: GaSettings,
    space: ParamSpace,
    scenario: Scenario,
    nic: NicProfile,
    ctx: FitnessContext | None = None,
) -> list:
    """Run `evolve` for every (p_c, p_m) combination, `repetitions` times
    each with distinct derived seeds; one summary row per combination."""
    from .analysis import gap_energy, gap_pdr

    if not pc_values or not pm_values or repetitions < 1:
        raise ConfigurationError("grid needs candidates and repetitions >= 1")
    if ctx is None:
        ctx = calibrate_context(scenario, nic, base.master_seed)
    rows = []
    for p_c in pc_values:
        for p_m in pm_values:
            finals = []
            energies = []
            pdrs = []
            for rep in range(repetitions):
                seed = derive_seed(base.master_seed, "grid", p_c, p_m, rep)
                settings = replace(base, p_c=p_c, p_m=p_m, master_seed=seed)
                best, _history = evolve(settings, space, scenario, nic, ctx)
                finals.append(best.fitness.f)
                energies.append(best.fitness.energy)
                pdrs.append(best.fitness.pdr)
            avg_e = float(np.mean(energies))
            avg_pdr = float(np.mean(pdrs))
            rows.append(
                {
                    "p_c": p_c,
                    "p_m": p_m,
                    "avg_f": float(np.mean(finals)),
                    "stdev_f": float(np.std(finals, ddof=1)) if repetitions > 1 else 0.0,
                    "best_f": float(min(finals)),
                    "avg_energy": avg_e,
                    "avg_pdr": avg_pdr,
                    "gap_energy": gap_energy(avg_e, ctx.e_rfc),
                    "gap_pdr": gap_pdr(avg_pdr, ctx.pdr_rfc),
                }
            )
    return rows

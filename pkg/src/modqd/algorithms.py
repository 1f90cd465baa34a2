"""Search algorithms: single-objective EA, diversity-objective NSGA-II,
and curiosity-driven MAP-Elites over a structured morphology archive.

All three share one variation pipeline (branch-exchange crossover, then
structural mutation, then controller mutation) and one batch size, and
draw randomness from named streams split off a master seed so runs
replay exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evaluator import EvaluationResult
from .morphology import (
    MAX_MODULES,
    Descriptor,
    MorphologyTree,
    crossover_branch_exchange,
    iter_nodes,
    mutate_morphology,
    random_morphology,
)
from .controller import mutate_params

BATCH_SIZE = 200
SOFO_POP = 200
SOFO_ELITES = 10
MOFD_POP = 200
QDSA_INIT = 1000

ALGORITHMS = ("sofo", "mofd", "qdsa")

EvaluateBatch = Callable[[Sequence[MorphologyTree]], list[EvaluationResult]]


# ---------------------------------------------------------------------------
# seeding discipline
# ---------------------------------------------------------------------------

_STREAM_NAMES = ("init", "selection", "variation", "tiebreak")


@dataclass
class RandomStreams:
    """Independent named RNG streams derived from one master seed."""

    init: np.random.Generator
    selection: np.random.Generator
    variation: np.random.Generator
    tiebreak: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int) -> "RandomStreams":
        gens = {
            name: np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(entropy=master_seed, spawn_key=(k,))))
            for k, name in enumerate(_STREAM_NAMES)
        }
        return cls(**gens)


@dataclass(eq=False)
class Individual:
    id: int
    genome: MorphologyTree
    fitness: float
    descriptor: Descriptor
    parent_ids: tuple[int, ...]
    birth_eval: int
    curiosity: float = 0.0


@dataclass(frozen=True)
class VariationConfig:
    p_crossover: float = 0.2
    p_morph_mut: float = 0.2
    p_controller_mut: float = 1.0
    sigma: float = 0.01

    @classmethod
    def for_algorithm(cls, algorithm: str) -> "VariationConfig":
        if algorithm == "qdsa":
            return cls(p_morph_mut=0.4, sigma=0.005)
        return cls()


def variation(parents: Sequence[Individual], cfg: VariationConfig,
              rng: np.random.Generator) -> tuple[MorphologyTree, tuple[int, ...]]:
    """Produce one child genome; reports which parents actually contributed.

    Crossover fires with p_crossover when two parents are available and
    both have exchangeable branches (first offspring kept); otherwise the
    child starts as a clone of the first parent.  Structural mutation
    follows with p_morph_mut, then every servo controller is perturbed
    with p_controller_mut.
    """
    genome: MorphologyTree | None = None
    used: tuple[int, ...] = (parents[0].id,)
    if len(parents) == 2 and rng.random() < cfg.p_crossover:
        result = crossover_branch_exchange(parents[0].genome, parents[1].genome, rng)
        if result.swapped:
            genome = result.child_a
            used = (parents[0].id, parents[1].id)
    if genome is None:
        genome = parents[0].genome.clone()
    if rng.random() < cfg.p_morph_mut:
        genome = mutate_morphology(genome, rng)
    if rng.random() < cfg.p_controller_mut:
        for _, node in iter_nodes(genome):
            if node.controller is not None:
                node.controller = mutate_params(node.controller, cfg.sigma, rng)
    return genome, used


# ---------------------------------------------------------------------------
# selection helpers
# ---------------------------------------------------------------------------

def binary_tournament(pool: Sequence, key: Callable, selection: np.random.Generator,
                      tiebreak: np.random.Generator):
    """Pick two uniformly with replacement, keep the better; ties flip a coin."""
    a = pool[int(selection.integers(len(pool)))]
    b = pool[int(selection.integers(len(pool)))]
    ka, kb = key(a), key(b)
    if ka > kb:
        return a
    if kb > ka:
        return b
    return a if tiebreak.random() < 0.5 else b


def _fitness_rank_key(ind) -> tuple[float, int]:
    # descending fitness, ascending id: deterministic truncation order
    return (-ind.fitness, ind.id)


# ---------------------------------------------------------------------------
# multi-objective machinery
# ---------------------------------------------------------------------------

def nondominated_sort(points: Sequence[Sequence[float]],
                      maximize: Sequence[bool] | None = None,
                      ) -> tuple[list[list[int]], list[int]]:
    """Fast non-dominated sort; returns (fronts, rank per point).

    A point dominates another when it is no worse on every objective and
    strictly better on at least one; all objectives are maximized unless
    flagged otherwise.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array-like")
    if maximize is not None:
        flip = np.where(np.asarray(maximize, dtype=bool), 1.0, -1.0)
        pts = pts * flip
    n = len(pts)
    ge = (pts[:, None, :] >= pts[None, :, :]).all(axis=2)
    gt = (pts[:, None, :] > pts[None, :, :]).any(axis=2)
    dominates = ge & gt  # [i, j] True when i dominates j
    dominator_count = dominates.sum(axis=0)
    ranks = np.full(n, -1, dtype=int)
    fronts: list[list[int]] = []
    current = np.flatnonzero(dominator_count == 0)
    level = 0
    assigned = 0
    while len(current) > 0:
        fronts.append([int(i) for i in current])
        ranks[current] = level
        assigned += len(current)
        dominator_count = dominator_count - dominates[current].sum(axis=0)
        dominator_count[current] = -1
        current = np.flatnonzero(dominator_count == 0)
        level += 1
    assert assigned == n
    return fronts, [int(r) for r in ranks]


def crowding_distance(front_points: Sequence[Sequence[float]]) -> list[float]:
    """Per-point crowding distance within one front; boundaries get inf."""
    pts = np.asarray(front_points, dtype=float)
    n = len(pts)
    if n <= 2:
        return [math.inf] * n
    dist = np.zeros(n)
    for k in range(pts.shape[1]):
        vals = pts[:, k]
        order = np.argsort(vals, kind="stable")
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        span = vals[order[-1]] - vals[order[0]]
        if span == 0:
            continue
        gaps = (vals[order[2:]] - vals[order[:-2]]) / span
        dist[order[1:-1]] += gaps
    return [float(d) for d in dist]


def mofd_objectives(population: Sequence[Individual]) -> list[tuple[float, float, float]]:
    """(fitness, descriptor diversity in m, diversity in j) per individual.

    Pairwise descriptor distance saturates exponentially per component;
    an individual's diversity is the mean distance to the whole
    population, itself included (contributing zero).
    """
    m = np.array([ind.descriptor.m for ind in population], dtype=float)
    j = np.array([ind.descriptor.j for ind in population], dtype=float)
    f = [ind.fitness for ind in population]
    div_m = (1.0 - np.exp(-np.abs(m[:, None] - m[None, :]))).mean(axis=1)
    div_j = (1.0 - np.exp(-np.abs(j[:, None] - j[None, :]))).mean(axis=1)
    return [(f[i], float(div_m[i]), float(div_j[i])) for i in range(len(population))]


def _rank_and_crowding(objectives: list[tuple[float, float, float]],
                       ) -> tuple[list[int], list[float]]:
    fronts, ranks = nondominated_sort(objectives)
    crowd = [0.0] * len(objectives)
    for front in fronts:
        dist = crowding_distance([objectives[i] for i in front])
        for i, d in zip(front, dist):
            crowd[i] = d
    return ranks, crowd


def nsga2_survivors(union: list[Individual], pop_size: int) -> list[Individual]:
    """Environmental selection: fill by front, cut the boundary front by crowding."""
    objectives = mofd_objectives(union)
    fronts, _ = nondominated_sort(objectives)
    survivors: list[Individual] = []
    for front in fronts:
        if len(survivors) + len(front) <= pop_size:
            survivors.extend(union[i] for i in front)
            continue
        dist = crowding_distance([objectives[i] for i in front])
        ordered = sorted(zip(front, dist), key=lambda t: (-t[1], union[t[0]].id))
        need = pop_size - len(survivors)
        survivors.extend(union[i] for i, _ in ordered[:need])
        break
    return survivors


# ---------------------------------------------------------------------------
# structured archive
# ---------------------------------------------------------------------------

class Archive:
    """2-D grid keyed by descriptor (m, j); keeps the single best per cell."""

    def __init__(self) -> None:
        self.cells: dict[tuple[int, int], Individual] = {}

    @staticmethod
    def cell_of(descriptor: Descriptor) -> tuple[int, int]:
        m, j = descriptor
        assert m >= 1 and j >= 0 and m + j <= MAX_MODULES, f"descriptor {descriptor} off-grid"
        return (m - 1, j)

    @staticmethod
    def n_reachable_cells() -> int:
        return sum(MAX_MODULES + 1 - m for m in range(1, MAX_MODULES + 1))

    def occupancy(self) -> int:
        return len(self.cells)

    def occupants(self) -> list[Individual]:
        return [self.cells[c] for c in sorted(self.cells)]

    def elite_at(self, descriptor: Descriptor) -> Individual | None:
        return self.cells.get(self.cell_of(descriptor))


def qdsa_insert(archive: Archive, child: Individual,
                parents: Sequence[Individual] = ()) -> bool:
    """Insert on strict improvement only; parents' curiosity tracks the outcome."""
    cell = Archive.cell_of(child.descriptor)
    incumbent = archive.cells.get(cell)
    inserted = incumbent is None or child.fitness > incumbent.fitness
    if inserted:
        archive.cells[cell] = child
    seen: set[int] = set()
    for p in parents:
        if p.id in seen:
            continue
        seen.add(p.id)
        p.curiosity += 1.0 if inserted else -0.5
    return inserted


# ---------------------------------------------------------------------------
# algorithm states and steps
# ---------------------------------------------------------------------------

@dataclass
class SofoState:
    population: list[Individual] = field(default_factory=list)
    eval_count: int = 0
    next_id: int = 0


@dataclass
class MofdState:
    population: list[Individual] = field(default_factory=list)
    eval_count: int = 0
    next_id: int = 0


@dataclass
class QdsaState:
    archive: Archive = field(default_factory=Archive)
    eval_count: int = 0
    next_id: int = 0


AlgorithmState = SofoState | MofdState | QdsaState


def _make_children(state: AlgorithmState, parent_pairs: list[tuple[Individual, Individual]],
                   cfg: VariationConfig, evaluate_batch: EvaluateBatch,
                   streams: RandomStreams) -> list[Individual]:
    genomes: list[MorphologyTree] = []
    used_ids: list[tuple[int, ...]] = []
    for p1, p2 in parent_pairs:
        genome, used = variation((p1, p2), cfg, streams.variation)
        genomes.append(genome)
        used_ids.append(used)
    results = evaluate_batch(genomes)
    children = [
        Individual(
            id=state.next_id + i,
            genome=genomes[i],
            fitness=results[i].fitness,
            descriptor=results[i].descriptor,
            parent_ids=used_ids[i],
            birth_eval=state.eval_count + i,
        )
        for i in range(len(genomes))
    ]
    state.next_id += len(children)
    state.eval_count += len(children)
    return children


def init_individuals(n: int, evaluate_batch: EvaluateBatch, streams: RandomStreams,
                     start_id: int = 0, start_eval: int = 0) -> list[Individual]:
    """Evaluate n random parentless genomes, ids and birth indices in order."""
    genomes = [random_morphology(streams.init, MAX_MODULES) for _ in range(n)]
    results = evaluate_batch(genomes)
    return [
        Individual(id=start_id + i, genome=genomes[i], fitness=results[i].fitness,
                   descriptor=results[i].descriptor, parent_ids=(),
                   birth_eval=start_eval + i)
        for i in range(n)
    ]


def sofo_survivors(old_pop: list[Individual], children: list[Individual],
                   n_elites: int = SOFO_ELITES, pop_size: int = SOFO_POP,
                   ) -> list[Individual]:
    elites = sorted(old_pop, key=_fitness_rank_key)[:n_elites]
    best_children = sorted(children, key=_fitness_rank_key)[: pop_size - n_elites]
    return elites + best_children


def sofo_step(state: SofoState, cfg: VariationConfig, evaluate_batch: EvaluateBatch,
              streams: RandomStreams) -> list[Individual]:
    """One generation: fitness tournaments, variation, elitist truncation."""
    pop = state.population
    key = lambda ind: ind.fitness
    pairs = [
        (binary_tournament(pop, key, streams.selection, streams.tiebreak),
         binary_tournament(pop, key, streams.selection, streams.tiebreak))
        for _ in range(BATCH_SIZE)
    ]
    children = _make_children(state, pairs, cfg, evaluate_batch, streams)
    state.population = sofo_survivors(pop, children)
    return children


def mofd_step(state: MofdState, cfg: VariationConfig, evaluate_batch: EvaluateBatch,
              streams: RandomStreams) -> list[Individual]:
    """One generation: rank/crowding tournaments, variation, environmental
    selection over the parent+child union with objectives recomputed there."""
    pop = state.population
    ranks, crowd = _rank_and_crowding(mofd_objectives(pop))
    index = {id(ind): i for i, ind in enumerate(pop)}
    key = lambda ind: (-ranks[index[id(ind)]], crowd[index[id(ind)]])
    pairs = [
        (binary_tournament(pop, key, streams.selection, streams.tiebreak),
         binary_tournament(pop, key, streams.selection, streams.tiebreak))
        for _ in range(BATCH_SIZE)
    ]
    children = _make_children(state, pairs, cfg, evaluate_batch, streams)
    state.population = nsga2_survivors(pop + children, MOFD_POP)
    return children


def qdsa_step(state: QdsaState, cfg: VariationConfig, evaluate_batch: EvaluateBatch,
              streams: RandomStreams) -> list[Individual]:
    """One batch: curiosity tournaments over occupants, variation, strict-
    improvement insertion with curiosity feedback."""
    occupants = state.archive.occupants()
    key = lambda ind: ind.curiosity
    pairs = [
        (binary_tournament(occupants, key, streams.selection, streams.tiebreak),
         binary_tournament(occupants, key, streams.selection, streams.tiebreak))
        for _ in range(BATCH_SIZE)
    ]
    children = _make_children(state, pairs, cfg, evaluate_batch, streams)
    for child, (p1, p2) in zip(children, pairs):
        parents = (p1, p2) if len(child.parent_ids) == 2 else (p1,)
        qdsa_insert(state.archive, child, parents)
    return children

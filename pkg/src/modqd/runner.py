"""Run orchestration: configs, event logs, transitions, sweeps, exports.

A run writes an append-only NDJSON event log (header, one birth record
per evaluation, a snapshot per batch) plus a final-state JSON.  Logs are
byte-deterministic for a given config and seed regardless of evaluation
parallelism.  Transition runs continue id and evaluation counters from
their source so lineages stay traceable across environment switches.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path as FsPath
from types import SimpleNamespace
from typing import Callable, Sequence

import numpy as np

from .algorithms import (
    ALGORITHMS,
    BATCH_SIZE,
    MOFD_POP,
    QDSA_INIT,
    SOFO_POP,
    Archive,
    Individual,
    MofdState,
    QdsaState,
    RandomStreams,
    SofoState,
    VariationConfig,
    _fitness_rank_key,
    init_individuals,
    mofd_step,
    nsga2_survivors,
    qdsa_insert,
    qdsa_step,
    sofo_step,
    sofo_survivors,
)
from .evaluator import (
    DEFAULT_TIMEOUT,
    ENVIRONMENTS,
    EnvironmentSpec,
    EvaluationResult,
    ExternalEvaluator,
    evaluate,
)
from .genealogy import AncestryDag, BirthRecord, ancestry_qd, extract_ancestry, ols_fit
from .metrics import (
    Projection,
    mann_whitney_u,
    holm_correct,
    project_population,
    projection_to_csv,
    projection_to_svg,
)
from .morphology import Descriptor, MorphologyTree, tree_from_dict, tree_to_dict

FORMAT_VERSION = 1
EVENTS_FILE = "events.ndjson"
FINAL_STATE_FILE = "final_state.json"

INIT_SIZES = {"sofo": SOFO_POP, "mofd": MOFD_POP, "qdsa": QDSA_INIT}
POP_SIZES = {"sofo": SOFO_POP, "mofd": MOFD_POP}

DESK_EVALS = 10_000
PAPER_EVALS = 100_000
TRANSITION_EVALS = 50_000

SWEEP_P_MORPH = (0.005, 0.01, 0.05, 0.1, 0.2, 0.4)
SWEEP_SIGMA = (0.005, 0.01, 0.05, 0.1, 0.2)


class ConfigError(ValueError):
    """Bad run configuration or unusable inputs; exit code 1 territory."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    algorithm: str
    env: str
    out_dir: str
    evals: int = PAPER_EVALS
    seed: int = 0
    p_crossover: float | None = None
    p_morph_mut: float | None = None
    p_controller_mut: float | None = None
    sigma: float | None = None
    evaluator: str = "surrogate"
    workers: int = 1
    timeout: float = DEFAULT_TIMEOUT

    def variation_config(self) -> VariationConfig:
        base = VariationConfig.for_algorithm(self.algorithm)
        overrides = {
            name: getattr(self, name)
            for name in ("p_crossover", "p_morph_mut", "p_controller_mut", "sigma")
            if getattr(self, name) is not None
        }
        return replace(base, **overrides)

    def validate(self, transition: bool = False) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; pick from {ALGORITHMS}")
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env!r}; "
                              f"pick from {tuple(ENVIRONMENTS)}")
        init = 0 if transition else INIT_SIZES[self.algorithm]
        if self.evals < init or (self.evals - init) % BATCH_SIZE != 0:
            raise ConfigError(
                f"evals must be {init} plus a multiple of {BATCH_SIZE}, got {self.evals}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        vc = self.variation_config()
        for name in ("p_crossover", "p_morph_mut", "p_controller_mut"):
            v = getattr(vc, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if vc.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {vc.sigma}")
        if self.evaluator != "surrogate" and not self.evaluator.startswith("external:"):
            raise ConfigError(
                f"evaluator must be 'surrogate' or 'external:CMD', got {self.evaluator!r}")

    def semantic_dict(self) -> dict:
        """The config fields that define run semantics (not execution knobs)."""
        vc = self.variation_config()
        return {
            "algorithm": self.algorithm,
            "env": self.env,
            "evals": self.evals,
            "seed": self.seed,
            "p_crossover": vc.p_crossover,
            "p_morph_mut": vc.p_morph_mut,
            "p_controller_mut": vc.p_controller_mut,
            "sigma": vc.sigma,
            "evaluator": self.evaluator,
        }


def load_config_file(path: str | FsPath) -> dict:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    allowed = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"config file {path} has unknown keys: {sorted(unknown)}")
    return data


# ---------------------------------------------------------------------------
# evaluation backends
# ---------------------------------------------------------------------------

def _make_evaluate_batch(cfg: RunConfig, env: EnvironmentSpec,
                         ) -> tuple[Callable, Callable[[], None]]:
    if cfg.evaluator == "surrogate":
        if cfg.workers <= 1:
            return (lambda genomes: [evaluate(g, env) for g in genomes], lambda: None)
        pool = ThreadPoolExecutor(max_workers=cfg.workers)

        def batch(genomes: Sequence[MorphologyTree]) -> list[EvaluationResult]:
            return list(pool.map(lambda g: evaluate(g, env), genomes))

        return batch, lambda: pool.shutdown(wait=True)

    command = cfg.evaluator.split(":", 1)[1]
    if not command.strip():
        raise ConfigError("external evaluator command is empty")
    ext = ExternalEvaluator(command, timeout=cfg.timeout)
    counter = {"n": 0}

    def batch_ext(genomes: Sequence[MorphologyTree]) -> list[EvaluationResult]:
        out = []
        for g in genomes:
            out.append(ext.evaluate(g, env, request_id=counter["n"]))
            counter["n"] += 1
        return out

    return batch_ext, ext.close


# ---------------------------------------------------------------------------
# event log
# ---------------------------------------------------------------------------

class EventLogWriter:
    def __init__(self, path: FsPath):
        self._f = open(path, "w", encoding="utf-8", newline="\n")

    def write(self, record: dict) -> None:
        self._f.write(_dump(record) + "\n")

    def birth(self, ind: Individual) -> None:
        self.write({
            "type": "birth",
            "id": ind.id,
            "parent_ids": list(ind.parent_ids),
            "birth_eval": ind.birth_eval,
            "fitness": ind.fitness,
            "descriptor": [ind.descriptor.m, ind.descriptor.j],
            "genome": tree_to_dict(ind.genome),
        })

    def snapshot(self, eval_count: int, members: Sequence[Individual]) -> None:
        proj = project_population(members)
        self.write({
            "type": "snapshot",
            "eval": eval_count,
            "best_fitness": max(ind.fitness for ind in members),
            "coverage": proj.coverage(),
            "qd_score": proj.qd_score(),
        })

    def close(self) -> None:
        self._f.close()

    def __enter__(self) -> "EventLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_event_log(path: str | FsPath) -> tuple[dict, list[dict], list[dict]]:
    """Parse an event log into (header, births, snapshots) with validation."""
    births: list[dict] = []
    snapshots: list[dict] = []
    header: dict | None = None
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: bad JSON: {exc}") from exc
                kind = rec.get("type")
                if kind == "header":
                    if header is not None:
                        raise ValueError(f"{path}:{lineno}: duplicate header")
                    header = rec
                elif kind == "birth":
                    births.append(rec)
                elif kind == "snapshot":
                    snapshots.append(rec)
                else:
                    raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
    except OSError as exc:
        raise ValueError(f"cannot read event log {path}: {exc}") from exc
    if header is None:
        raise ValueError(f"{path}: missing header record")
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
    last = -1
    for rec in births:
        if rec["birth_eval"] <= last:
            raise ValueError(f"{path}: birth records out of order at id {rec['id']}")
        last = rec["birth_eval"]
    return header, births, snapshots


# ---------------------------------------------------------------------------
# run loops
# ---------------------------------------------------------------------------

def _members(state) -> list[Individual]:
    return state.archive.occupants() if isinstance(state, QdsaState) else state.population


def _step_fn(algorithm: str):
    return {"sofo": sofo_step, "mofd": mofd_step, "qdsa": qdsa_step}[algorithm]


def _final_state_dict(run_id: str, cfg: RunConfig, state) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "run_id": run_id,
        "algorithm": cfg.algorithm,
        "env": cfg.env,
        "seed": cfg.seed,
        "eval_count": state.eval_count,
        "next_id": state.next_id,
        "individuals": [
            {
                "id": ind.id,
                "parent_ids": list(ind.parent_ids),
                "birth_eval": ind.birth_eval,
                "fitness": ind.fitness,
                "descriptor": [ind.descriptor.m, ind.descriptor.j],
                "curiosity": ind.curiosity,
                "genome": tree_to_dict(ind.genome),
            }
            for ind in _members(state)
        ],
    }


def _prepare_out_dir(out_dir: str | FsPath) -> FsPath:
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if (out / EVENTS_FILE).exists():
        raise ConfigError(f"{out / EVENTS_FILE} already exists; refusing to overwrite a run")
    return out


def _run_loop(cfg: RunConfig, state, writer: EventLogWriter, evaluate_batch,
              streams: RandomStreams, target_evals: int) -> None:
    step = _step_fn(cfg.algorithm)
    vcfg = cfg.variation_config()
    while state.eval_count < target_evals:
        children = step(state, vcfg, evaluate_batch, streams)
        for child in children:
            writer.birth(child)
        writer.snapshot(state.eval_count, _members(state))


def run_evolve(cfg: RunConfig) -> FsPath:
    """Fresh run: random init batch, then generational batches to budget."""
    cfg.validate()
    out = _prepare_out_dir(cfg.out_dir)
    run_id = f"{cfg.algorithm}-{cfg.env}-seed{cfg.seed}"
    streams = RandomStreams.from_seed(cfg.seed)
    env = ENVIRONMENTS[cfg.env]()
    evaluate_batch, closer = _make_evaluate_batch(cfg, env)
    n_init = INIT_SIZES[cfg.algorithm]
    try:
        with EventLogWriter(out / EVENTS_FILE) as writer:
            writer.write({
                "type": "header",
                "format_version": FORMAT_VERSION,
                "run_id": run_id,
                "seed": cfg.seed,
                "config": cfg.semantic_dict(),
                "n_init": n_init,
                "transition": None,
            })
            inits = init_individuals(n_init, evaluate_batch, streams)
            for ind in inits:
                writer.birth(ind)
            if cfg.algorithm == "qdsa":
                state = QdsaState(eval_count=n_init, next_id=n_init)
                for ind in inits:
                    qdsa_insert(state.archive, ind)
            elif cfg.algorithm == "mofd":
                state = MofdState(population=inits, eval_count=n_init, next_id=n_init)
            else:
                state = SofoState(population=inits, eval_count=n_init, next_id=n_init)
            writer.snapshot(state.eval_count, _members(state))
            _run_loop(cfg, state, writer, evaluate_batch, streams, cfg.evals)
    finally:
        closer()
    (out / FINAL_STATE_FILE).write_text(_dump(_final_state_dict(run_id, cfg, state)) + "\n")
    return out


def load_final_state(run_dir: str | FsPath) -> dict:
    path = FsPath(run_dir) / FINAL_STATE_FILE
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"missing final state {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"corrupt final state {path}: {exc}") from exc
    if data.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format_version")
    return data


def run_transition(source_dir: str | FsPath, cfg: RunConfig) -> FsPath:
    """Continue a finished run in a new environment or algorithm.

    Source survivors are re-evaluated in the target environment first
    (these re-births link back to their source ids), then evolution
    continues under the target algorithm for cfg.evals evaluations.
    Population targets truncate or pad the seed set to population size;
    the archive target re-inserts every seed into a fresh archive.
    """
    cfg.validate(transition=True)
    source = load_final_state(source_dir)
    out = _prepare_out_dir(cfg.out_dir)
    run_id = f"{cfg.algorithm}-{cfg.env}-seed{cfg.seed}-from-{source['run_id']}"
    streams = RandomStreams.from_seed(cfg.seed)
    env = ENVIRONMENTS[cfg.env]()
    evaluate_batch, closer = _make_evaluate_batch(cfg, env)

    next_id = source["next_id"]
    eval_count = source["eval_count"]
    seed_genomes = [tree_from_dict(ind["genome"]) for ind in source["individuals"]]
    source_ids = [ind["id"] for ind in source["individuals"]]
    try:
        results = evaluate_batch(seed_genomes)
        seeds = [
            Individual(id=next_id + i, genome=seed_genomes[i], fitness=results[i].fitness,
                       descriptor=results[i].descriptor, parent_ids=(source_ids[i],),
                       birth_eval=eval_count + i)
            for i in range(len(seed_genomes))
        ]
        next_id += len(seeds)
        eval_count += len(seeds)
        block = seeds
        if cfg.algorithm != "qdsa" and len(seeds) < POP_SIZES[cfg.algorithm]:
            pads = init_individuals(POP_SIZES[cfg.algorithm] - len(seeds), evaluate_batch,
                                    streams, start_id=next_id, start_eval=eval_count)
            block = seeds + pads
            next_id += len(pads)
            eval_count += len(pads)

        with EventLogWriter(out / EVENTS_FILE) as writer:
            writer.write({
                "type": "header",
                "format_version": FORMAT_VERSION,
                "run_id": run_id,
                "seed": cfg.seed,
                "config": cfg.semantic_dict(),
                "n_init": len(block),
                "transition": {
                    "source_dir": str(source_dir),
                    "source_run_id": source["run_id"],
                    "source_eval_count": source["eval_count"],
                    "n_seeds": len(seeds),
                },
            })
            for ind in block:
                writer.birth(ind)
            if cfg.algorithm == "qdsa":
                state = QdsaState(eval_count=eval_count, next_id=next_id)
                for ind in block:
                    qdsa_insert(state.archive, ind)
            else:
                population = sorted(block, key=_fitness_rank_key)[: POP_SIZES[cfg.algorithm]]
                cls = MofdState if cfg.algorithm == "mofd" else SofoState
                state = cls(population=population, eval_count=eval_count, next_id=next_id)
            writer.snapshot(state.eval_count, _members(state))
            _run_loop(cfg, state, writer, evaluate_batch, streams,
                      eval_count + cfg.evals)
    finally:
        closer()
    (out / FINAL_STATE_FILE).write_text(_dump(_final_state_dict(run_id, cfg, state)) + "\n")
    return out


# ---------------------------------------------------------------------------
# replay verification
# ---------------------------------------------------------------------------

def _lite(rec: dict) -> SimpleNamespace:
    return SimpleNamespace(
        id=rec["id"],
        parent_ids=tuple(rec["parent_ids"]),
        birth_eval=rec["birth_eval"],
        fitness=rec["fitness"],
        descriptor=Descriptor(*rec["descriptor"]),
        curiosity=0.0,
        genome=rec["genome"],
    )


def replay_final_state(run_dir: str | FsPath) -> dict:
    """Rebuild the final population/archive purely from the event log.

    Uses the same survivor and insertion rules as the live engine but
    touches no RNG and re-evaluates nothing, so a diff against
    final_state.json certifies the log captures the whole run.
    """
    header, births, _ = read_event_log(FsPath(run_dir) / EVENTS_FILE)
    algorithm = header["config"]["algorithm"]
    n_init = header["n_init"]
    inds = [_lite(rec) for rec in births]
    by_id = {ind.id: ind for ind in inds}
    block, rest = inds[:n_init], inds[n_init:]
    assert len(block) == n_init, "log shorter than its init block"
    assert len(rest) % BATCH_SIZE == 0, "log has a partial generation"

    if algorithm == "qdsa":
        archive = Archive()
        for ind in block:
            qdsa_insert(archive, ind)
        for k in range(0, len(rest), BATCH_SIZE):
            for child in rest[k: k + BATCH_SIZE]:
                parents = [by_id[pid] for pid in child.parent_ids]
                qdsa_insert(archive, child, parents)
        members = archive.occupants()
    else:
        pop_size = POP_SIZES[algorithm]
        if header["transition"] is not None:
            population = sorted(block, key=_fitness_rank_key)[:pop_size]
        else:
            population = list(block)
        for k in range(0, len(rest), BATCH_SIZE):
            batch = rest[k: k + BATCH_SIZE]
            if algorithm == "sofo":
                population = sofo_survivors(population, batch)
            else:
                population = nsga2_survivors(population + batch, pop_size)
        members = population

    return {
        "format_version": FORMAT_VERSION,
        "run_id": header["run_id"],
        "algorithm": algorithm,
        "env": header["config"]["env"],
        "seed": header["seed"],
        "eval_count": (births[-1]["birth_eval"] + 1) if births else 0,
        "next_id": (max(b["id"] for b in births) + 1) if births else 0,
        "individuals": [
            {
                "id": ind.id,
                "parent_ids": list(ind.parent_ids),
                "birth_eval": ind.birth_eval,
                "fitness": ind.fitness,
                "descriptor": [ind.descriptor.m, ind.descriptor.j],
                "curiosity": ind.curiosity,
                "genome": ind.genome,
            }
            for ind in members
        ],
    }


# ---------------------------------------------------------------------------
# genealogy over run directories
# ---------------------------------------------------------------------------

def load_ancestry_dag(run_dir: str | FsPath, follow_sources: bool = True) -> AncestryDag:
    """Birth records of a run, chained through transition sources."""
    records: list[BirthRecord] = []
    current: FsPath | None = FsPath(run_dir)
    while current is not None:
        header, births, _ = read_event_log(current / EVENTS_FILE)
        for rec in births:
            records.append(BirthRecord(
                id=rec["id"], parent_ids=tuple(rec["parent_ids"]),
                birth_eval=rec["birth_eval"], fitness=rec["fitness"],
                descriptor=Descriptor(*rec["descriptor"])))
        transition = header.get("transition")
        if transition and follow_sources:
            current = FsPath(transition["source_dir"])
            if not (current / EVENTS_FILE).exists():
                raise ValueError(
                    f"transition source log missing: {current / EVENTS_FILE}")
        else:
            current = None
    return AncestryDag(records)


def final_metrics(run_dir: str | FsPath) -> dict:
    _, _, snapshots = read_event_log(FsPath(run_dir) / EVENTS_FILE)
    if not snapshots:
        raise ValueError(f"{run_dir}: no snapshots in event log")
    return snapshots[-1]


# ---------------------------------------------------------------------------
# parameter sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    algorithm: str
    out_dir: str
    env: str = "flat"
    p_values: tuple[float, ...] = SWEEP_P_MORPH
    sigma_values: tuple[float, ...] = SWEEP_SIGMA
    reps: int = 2
    evals: int = 2000
    seed: int = 0
    workers: int = 1


def run_sweep(sweep: SweepConfig) -> dict:
    """Grid of (p_morph_mut, sigma) runs; fits best ~ 1 + p + s + p*s.

    Writes one CSV row per grid combo plus a JSON model report with the
    fitted coefficients and the predicted-best combo.
    """
    if sweep.reps < 1:
        raise ConfigError("sweep reps must be >= 1")
    if not sweep.p_values or not sweep.sigma_values:
        raise ConfigError("sweep grids must be non-empty")
    if len(set(sweep.p_values)) < 2 or len(set(sweep.sigma_values)) < 2:
        raise ConfigError("sweep needs two distinct values per axis "
                          "to fit the interaction model")
    out = FsPath(sweep.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    run_index = 0
    for p in sweep.p_values:
        for s in sweep.sigma_values:
            bests = []
            for rep in range(sweep.reps):
                cfg = RunConfig(
                    algorithm=sweep.algorithm, env=sweep.env,
                    out_dir=str(out / f"run_p{p:g}_s{s:g}_r{rep}"),
                    evals=sweep.evals, seed=sweep.seed + run_index,
                    p_morph_mut=p, sigma=s, workers=sweep.workers)
                run_dir = run_evolve(cfg)
                bests.append(final_metrics(run_dir)["best_fitness"])
                run_index += 1
            rows.append({
                "p_morph_mut": p, "sigma": s,
                "median_best": float(np.median(bests)),
                "mean_best": float(np.mean(bests)),
                "n_runs": len(bests),
                "bests": bests,
            })

    design = []
    response = []
    for row in rows:
        for best in row["bests"]:
            design.append([1.0, row["p_morph_mut"], row["sigma"],
                           row["p_morph_mut"] * row["sigma"]])
            response.append(best)
    beta, r2 = ols_fit(np.array(design), np.array(response))
    predictions = {
        (row["p_morph_mut"], row["sigma"]): float(
            beta[0] + beta[1] * row["p_morph_mut"] + beta[2] * row["sigma"]
            + beta[3] * row["p_morph_mut"] * row["sigma"])
        for row in rows
    }
    best_pred = max(predictions, key=lambda k: (predictions[k], -k[0], -k[1]))
    best_obs = max(rows, key=lambda r: r["median_best"])

    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["p_morph_mut", "sigma", "median_best", "mean_best", "n_runs"])
        for row in rows:
            w.writerow([row["p_morph_mut"], row["sigma"], repr(row["median_best"]),
                        repr(row["mean_best"]), row["n_runs"]])
    report = {
        "coefficients": {
            "intercept": float(beta[0]), "p_morph_mut": float(beta[1]),
            "sigma": float(beta[2]), "interaction": float(beta[3]),
        },
        "r_squared": float(r2),
        "predicted_best": {"p_morph_mut": best_pred[0], "sigma": best_pred[1]},
        "observed_best": {"p_morph_mut": best_obs["p_morph_mut"],
                          "sigma": best_obs["sigma"],
                          "median_best": best_obs["median_best"]},
        "n_runs": run_index,
    }
    (out / "sweep_model.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

EXPORT_KINDS = ("heatmap-max", "heatmap-mean", "heatmap-hits",
                "fitness-curve", "qd-curves", "ancestry-csv")


def _state_projection(run_dir: FsPath) -> tuple[dict, Projection]:
    state = load_final_state(run_dir)
    items = [SimpleNamespace(fitness=ind["fitness"], descriptor=Descriptor(*ind["descriptor"]))
             for ind in state["individuals"]]
    return state, project_population(items)


def _bootstrap_band(samples: np.ndarray, n_resamples: int = 1000,
                    seed: int = 0) -> tuple[float, float]:
    """95% percentile bootstrap interval for the median of `samples`."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(samples), size=(n_resamples, len(samples)))
    medians = np.median(samples[idx], axis=1)
    lo, hi = np.percentile(medians, [2.5, 97.5])
    return float(lo), float(hi)


def _curve_svg(title: str, xs: Sequence[float],
               series: dict[str, Sequence[float]],
               band: tuple[Sequence[float], Sequence[float]] | None = None) -> str:
    width, height = 640, 400
    ml, mr, mt, mb = 60, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    all_vals = [v for vs in series.values() for v in vs]
    if band:
        all_vals += list(band[0]) + list(band[1])
    ymin = min(all_vals + [0.0])
    ymax = max(all_vals) if all_vals else 1.0
    if ymax == ymin:
        ymax = ymin + 1.0
    xmin, xmax = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if xmax == xmin:
        xmax = xmin + 1.0

    def sx(x: float) -> float:
        return ml + (x - xmin) / (xmax - xmin) * pw

    def sy(y: float) -> float:
        return mt + ph - (y - ymin) / (ymax - ymin) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml}" y="18" font-size="13" font-family="sans-serif">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml + pw / 2}" y="{height - 10}" font-size="11" text-anchor="middle" '
        f'font-family="sans-serif">evaluations</text>',
        f'<text x="{ml - 8}" y="{mt + ph}" font-size="10" text-anchor="end" '
        f'font-family="sans-serif">{ymin:.3g}</text>',
        f'<text x="{ml - 8}" y="{mt + 10}" font-size="10" text-anchor="end" '
        f'font-family="sans-serif">{ymax:.3g}</text>',
        f'<text x="{ml}" y="{mt + ph + 14}" font-size="10" text-anchor="middle" '
        f'font-family="sans-serif">{xmin:.4g}</text>',
        f'<text x="{ml + pw}" y="{mt + ph + 14}" font-size="10" text-anchor="middle" '
        f'font-family="sans-serif">{xmax:.4g}</text>',
    ]
    if band is not None:
        lo, hi = band
        pts = [f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, hi)]
        pts += [f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(reversed(list(xs)), reversed(list(lo)))]
        parts.append(f'<polygon points="{" ".join(pts)}" fill="#aac8e8" opacity="0.6"/>')
    palette = ("#1f5fa8", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e")
    for i, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, vals))
        color = palette[i % len(palette)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        parts.append(f'<text x="{ml + pw - 4}" y="{mt + 14 + 14 * i}" font-size="10" '
                     f'text-anchor="end" fill="{color}" font-family="sans-serif">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _curves_from_snapshots(run_dirs: Sequence[FsPath], key: str,
                           monotone: bool) -> tuple[list[int], dict[str, list[float]]]:
    per_run: dict[str, list[tuple[int, float]]] = {}
    for rd in run_dirs:
        _, _, snaps = read_event_log(rd / EVENTS_FILE)
        vals = []
        best = -math.inf
        for s in snaps:
            v = float(s[key])
            if monotone:
                best = max(best, v)
                v = best
            vals.append((int(s["eval"]), v))
        per_run[rd.name] = vals
    grids = [tuple(e for e, _ in vals) for vals in per_run.values()]
    common = sorted(set(grids[0]).intersection(*grids[1:])) if len(grids) > 1 else list(grids[0])
    series = {
        name: [v for e, v in vals if e in set(common)]
        for name, vals in per_run.items()
    }
    return [int(e) for e in common], series


def export_run(run_dirs: Sequence[str | FsPath], what: str,
               out_dir: str | FsPath | None = None) -> list[FsPath]:
    """Produce CSV (always) and SVG views of one or more finished runs."""
    if what not in EXPORT_KINDS:
        raise ConfigError(f"unknown export kind {what!r}; pick from {EXPORT_KINDS}")
    dirs = [FsPath(d) for d in run_dirs]
    if not dirs:
        raise ConfigError("at least one run directory is required")
    out = FsPath(out_dir) if out_dir is not None else dirs[0] / "exports"
    out.mkdir(parents=True, exist_ok=True)
    written: list[FsPath] = []

    def emit(name: str, text: str) -> None:
        path = out / name
        path.write_text(text)
        written.append(path)

    if what.startswith("heatmap-"):
        value = {"heatmap-max": "max", "heatmap-mean": "mean", "heatmap-hits": "count"}[what]
        all_items = []
        for rd in dirs:
            state, proj = _state_projection(rd)
            emit(f"{rd.name}_{what}.csv", projection_to_csv(proj))
            emit(f"{rd.name}_{what}.svg", projection_to_svg(proj, value))
            all_items.extend(
                SimpleNamespace(fitness=i["fitness"], descriptor=Descriptor(*i["descriptor"]))
                for i in state["individuals"])
        if len(dirs) > 1:
            proj = project_population(all_items)
            emit(f"aggregate_{what}.csv", projection_to_csv(proj))
            emit(f"aggregate_{what}.svg", projection_to_svg(proj, value))
        return written

    if what == "fitness-curve":
        keys = [("best_fitness", True)]
    elif what == "qd-curves":
        keys = [("coverage", False), ("qd_score", False)]
    else:  # ancestry-csv
        runs_rows = []
        for rd in dirs:
            dag = load_ancestry_dag(rd)
            state = load_final_state(rd)
            now_eval = state["eval_count"]
            buf = io.StringIO()
            w = csv.writer(buf)
            w.writerow(["focal_id", "n_ancestors", "anc_coverage", "anc_qdscore", "age"])
            for ind in state["individuals"]:
                ancestors = extract_ancestry(dag, ind["id"])
                cov, qd = ancestry_qd(dag, ind["id"])
                w.writerow([ind["id"], len(ancestors), cov, repr(qd),
                            now_eval - ind["birth_eval"]])
            emit(f"{rd.name}_ancestry.csv", buf.getvalue())
            fm = final_metrics(rd)
            runs_rows.append([state["run_id"], state["algorithm"],
                              repr(float(fm["best_fitness"])), fm["coverage"],
                              repr(float(fm["qd_score"]))])
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["run_id", "algorithm", "max_fitness", "final_coverage", "final_qdscore"])
        w.writerows(runs_rows)
        emit("runs.csv", buf.getvalue())
        return written

    for key, monotone in keys:
        xs, series = _curves_from_snapshots(dirs, key, monotone)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["eval"] + list(series))
        for i, x in enumerate(xs):
            w.writerow([x] + [repr(series[name][i]) for name in series])
        emit(f"{what}_{key}.csv", buf.getvalue())
        band = None
        agg_series: dict[str, Sequence[float]] = series
        if len(dirs) > 1:
            mat = np.array([series[name] for name in series])
            med = np.median(mat, axis=0)
            lo, hi = [], []
            for col in range(mat.shape[1]):
                b_lo, b_hi = _bootstrap_band(mat[:, col])
                lo.append(b_lo)
                hi.append(b_hi)
            band = (lo, hi)
            agg_series = {"median": [float(v) for v in med]}
            buf = io.StringIO()
            w = csv.writer(buf)
            w.writerow(["eval", "median", "lo95", "hi95"])
            for i, x in enumerate(xs):
                w.writerow([x, repr(float(med[i])), repr(lo[i]), repr(hi[i])])
            emit(f"{what}_{key}_aggregate.csv", buf.getvalue())
        emit(f"{what}_{key}.svg", _curve_svg(key, xs, agg_series, band))
    return written


# ---------------------------------------------------------------------------
# run comparison
# ---------------------------------------------------------------------------

STATS_METRICS = ("best_fitness", "coverage", "qd_score")


def stats_compare(groups: dict[str, Sequence[str | FsPath]],
                  metric: str = "best_fitness") -> list[dict]:
    """Pairwise Mann-Whitney tests between labeled run groups, Holm-corrected."""
    if metric not in STATS_METRICS:
        raise ConfigError(f"unknown metric {metric!r}; pick from {STATS_METRICS}")
    if len(groups) < 2:
        raise ConfigError("need at least two groups to compare")
    values: dict[str, list[float]] = {}
    for label, dirs in groups.items():
        if len(dirs) < 2:
            raise ConfigError(f"group {label!r} needs at least two runs")
        values[label] = [float(final_metrics(d)[metric]) for d in dirs]
    pairs = list(combinations(sorted(groups), 2))
    raw = []
    us = []
    for a, b in pairs:
        u, p = mann_whitney_u(values[a], values[b])
        us.append(u)
        raw.append(p)
    adjusted = holm_correct(raw)
    return [
        {
            "group_a": a, "group_b": b,
            "n_a": len(values[a]), "n_b": len(values[b]),
            "median_a": float(np.median(values[a])),
            "median_b": float(np.median(values[b])),
            "u": us[i], "p_raw": raw[i], "p_holm": adjusted[i],
            "significant": adjusted[i] < 0.05,
        }
        for i, (a, b) in enumerate(pairs)
    ]

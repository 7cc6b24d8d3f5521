"""Generation loop for mixed MAPLE / MATPG populations.

Randomness comes from two places, both derived from ``EvolutionConfig.seed``:

* one ``numpy.random.Generator`` drives selection and variation, and is
  saved in checkpoints;
* episode seeds are hashed from ``(seed, purpose, generation, slot, task,
  episode)`` with ``SeedSequence``, so scores do not depend on evaluation
  order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .environments import EnvironmentSuite, run_episode
from .graph import Root, RootKind, VertexStore, gc, run_agent, store_from_dict, store_to_dict
from .selection import (
    ScoreMatrix,
    SelectionConfig,
    aggregate_fitness,
    epsilon_lexicase_select,
    tournament_select,
)
from .variation import (
    MutationConfig,
    clone_root,
    mutate_root,
    random_action_vertex,
    random_team,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

TRAIN, VALID, COMBINED = 0, 1, 2


class CheckpointError(RuntimeError):
    pass


@dataclass
class EvolutionConfig:
    n_agents: int = 1500
    maple_proportion: float = 2.0 / 3.0
    n_generations: int = 2000
    train_episodes_per_task: int = 3
    valid_episodes_per_task: int = 5
    validation_frequency: int = 50
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.selection, dict):
            self.selection = SelectionConfig(**self.selection)
        if isinstance(self.mutation, dict):
            self.mutation = MutationConfig(**self.mutation)
        for name in ("n_agents", "n_generations", "train_episodes_per_task",
                     "valid_episodes_per_task", "validation_frequency"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.maple_proportion <= 1.0:
            raise ValueError("maple_proportion must lie in [0, 1]")

    @property
    def n_maple(self) -> int:
        return int(round(self.n_agents * self.maple_proportion))

    @property
    def n_matpg(self) -> int:
        return self.n_agents - self.n_maple

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> EvolutionConfig:
        return cls(**data)


@dataclass
class GenerationStats:
    generation: int
    best: list[float]
    mean: list[float]
    std: list[float]
    champion_id: int
    seconds: float = 0.0
    faults: int = 0


@dataclass
class ValidationResult:
    generation: int
    ids: list[int]
    task_scores: np.ndarray  # (n_agents, n_tasks)
    combined: np.ndarray  # (n_agents,)
    champion_id: int

    def champion_row(self) -> int:
        return self.ids.index(self.champion_id)


@dataclass
class EvolutionState:
    config: EvolutionConfig
    store: VertexStore
    maple: list[int]
    matpg: list[int]
    rng: np.random.Generator
    generation: int = 0
    champion_id: int | None = None
    meta: dict = field(default_factory=dict)

    def roots(self) -> list[Root]:
        return [Root(RootKind.MAPLE, v) for v in self.maple] + [
            Root(RootKind.MATPG, v) for v in self.matpg
        ]

    def sync_store_roots(self) -> None:
        self.store.roots = self.roots()


def derive_seed(seed: int, purpose: int, *keys: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(purpose, *keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def init_state(cfg: EvolutionConfig, observation_dim: int, action_dim: int,
               meta: dict | None = None) -> EvolutionState:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(99,)))
    store = VertexStore(observation_dim, action_dim)
    size = cfg.mutation.init_program_size
    maple = [
        store.add_root(random_action_vertex(rng, observation_dim, action_dim, size)).vertex
        for _ in range(cfg.n_maple)
    ]
    matpg = [store.add_root(random_team(rng, cfg.mutation, store)).vertex
             for _ in range(cfg.n_matpg)]
    state = EvolutionState(cfg, store, maple, matpg, rng, meta=dict(meta or {}))
    state.sync_store_roots()
    return state


# -- evaluation ----------------------------------------------------------------


def evaluate_agent(
    root: Root,
    store: VertexStore,
    suite: EnvironmentSuite,
    seeds: Sequence[Sequence[int]],
    default: float = 0.0,
) -> tuple[list[float], int]:
    """Mean return per task over the episodes seeded by ``seeds[task]``.

    Returns ``(scores, faults)``.
    """
    def policy(obs):
        return run_agent(root, obs, store, default)

    scores = []
    faults = 0
    for t in range(suite.n_tasks):
        env = suite.env(t)
        returns = []
        for s in seeds[t]:
            ret, faulted = run_episode(policy, env, s)
            returns.append(ret)
            faults += faulted
        scores.append(sum(returns) / len(returns))
    return scores, faults


def evaluate_combined(root: Root, store: VertexStore, suite: EnvironmentSuite,
                      seeds: Sequence[int], default: float = 0.0) -> tuple[float, int]:
    def policy(obs):
        return run_agent(root, obs, store, default)

    env = suite.combined()
    total, faults = 0.0, 0
    for s in seeds:
        ret, faulted = run_episode(policy, env, s)
        total += ret
        faults += faulted
    return total / len(seeds), faults


_SHARED: dict = {}


def _job(args):
    kind, root, seeds = args
    store, suite = _SHARED["store"], _SHARED["suite"]
    if kind == "tasks":
        return evaluate_agent(root, store, suite, seeds)
    return evaluate_combined(root, store, suite, seeds)


def _map(jobs: list, store: VertexStore, suite: EnvironmentSuite, workers: int) -> list:
    if workers <= 1 or len(jobs) < 2:
        _SHARED.update(store=store, suite=suite)
        try:
            return [_job(j) for j in jobs]
        finally:
            _SHARED.clear()
    # fork shares the frozen store with the children without pickling it
    _SHARED.update(store=store, suite=suite)
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            chunk = max(1, len(jobs) // (4 * workers))
            return pool.map(_job, jobs, chunksize=chunk)
    finally:
        _SHARED.clear()


def evaluate_population(state: EvolutionState, suite: EnvironmentSuite,
                        workers: int = 1) -> tuple[ScoreMatrix, int]:
    cfg = state.config
    gen = state.generation
    jobs = []
    roots = state.roots()
    for slot, root in enumerate(roots):
        seeds = [[derive_seed(cfg.seed, TRAIN, gen, slot, t, e)
                  for e in range(cfg.train_episodes_per_task)]
                 for t in range(suite.n_tasks)]
        jobs.append(("tasks", root, seeds))
    results = _map(jobs, state.store, suite, workers)
    values = np.array([r[0] for r in results], dtype=float).reshape(len(roots), suite.n_tasks)
    faults = sum(r[1] for r in results)
    return ScoreMatrix([r.vertex for r in roots], values), faults


# -- one generation --------------------------------------------------------------


def _select(scores: ScoreMatrix, cfg: SelectionConfig,
            rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Return ``(retained, parents)`` for one sub-population."""
    if not scores.ids:
        return [], []
    if cfg.method == "tournament":
        elites, winners = tournament_select(scores, cfg, rng)
        return elites, winners or elites
    survivors = epsilon_lexicase_select(scores, cfg, rng)
    return survivors, survivors


def _subset(scores: ScoreMatrix, ids: Sequence[int]) -> ScoreMatrix:
    rows = {a: k for k, a in enumerate(scores.ids)}
    values = scores.values[[rows[a] for a in ids]].reshape(len(ids), scores.n_tasks)
    return ScoreMatrix(list(ids), values)


def champion_by_fitness(scores: ScoreMatrix) -> int:
    fitness = [aggregate_fitness(r) for r in scores.values]
    return min(range(len(scores.ids)), key=lambda k: (-fitness[k], scores.ids[k]))


def run_generation(state: EvolutionState, suite: EnvironmentSuite,
                   workers: int = 1) -> GenerationStats:
    """Evaluate, select per sub-population, refill with mutated clones, gc."""
    start = time.perf_counter()
    cfg = state.config
    scores, faults = evaluate_population(state, suite, workers)
    values = scores.values
    stats = GenerationStats(
        generation=state.generation,
        best=[float(x) for x in values.max(axis=0)],
        mean=[float(x) for x in values.mean(axis=0)],
        std=[float(x) for x in values.std(axis=0)],
        champion_id=scores.ids[champion_by_fitness(scores)],
        faults=faults,
    )

    rng = state.rng
    store = state.store
    next_pops = []
    for ids, size in ((state.maple, cfg.n_maple), (state.matpg, cfg.n_matpg)):
        retained, parents = _select(_subset(scores, ids), cfg.selection, rng)
        next_pops.append((sorted(retained), parents, size))
    state.maple = next_pops[0][0]
    state.matpg = next_pops[1][0]
    state.sync_store_roots()

    for (retained, parents, size), kind in zip(next_pops, (RootKind.MAPLE, RootKind.MATPG)):
        target = state.maple if kind is RootKind.MAPLE else state.matpg
        while len(target) < size:
            parent = parents[int(rng.integers(len(parents)))]
            child = clone_root(Root(kind, parent), store)
            mutate_root(child, rng, cfg.mutation, store)
            target.append(child.vertex)
    state.sync_store_roots()
    gc(store)
    state.generation += 1
    stats.seconds = time.perf_counter() - start
    return stats


# -- validation ----------------------------------------------------------------


def validate(state: EvolutionState, suite: EnvironmentSuite, workers: int = 1) -> ValidationResult:
    """Score every root on held-out episodes and pick the champion.

    Validation episodes are shared by all agents of a generation. The
    combined score is the mean return over combined episodes when the suite
    supports them, otherwise the mean of the per-task scores.
    """
    cfg = state.config
    gen = state.generation
    roots = state.roots()
    n_ep = cfg.valid_episodes_per_task
    task_seeds = [[derive_seed(cfg.seed, VALID, gen, t, e) for e in range(n_ep)]
                  for t in range(suite.n_tasks)]
    jobs = [("tasks", root, task_seeds) for root in roots]
    results = _map(jobs, state.store, suite, workers)
    task_scores = np.array([r[0] for r in results], dtype=float).reshape(len(roots), suite.n_tasks)
    if suite.supports_combined and suite.n_tasks > 1:
        comb_seeds = [derive_seed(cfg.seed, COMBINED, gen, e) for e in range(n_ep)]
        jobs = [("combined", root, comb_seeds) for root in roots]
        combined = np.array([r[0] for r in _map(jobs, state.store, suite, workers)])
    else:
        combined = task_scores.mean(axis=1)
    ids = [r.vertex for r in roots]
    per_task_mean = task_scores.mean(axis=1)
    best = min(range(len(ids)), key=lambda k: (-combined[k], -per_task_mean[k], ids[k]))
    state.champion_id = ids[best]
    return ValidationResult(gen, ids, task_scores, combined, ids[best])


# -- checkpoints -----------------------------------------------------------------


def state_to_dict(state: EvolutionState) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "config": state.config.to_dict(),
        "meta": state.meta,
        "generation": state.generation,
        "champion_id": state.champion_id,
        "rng": state.rng.bit_generator.state,
        "maple": state.maple,
        "matpg": state.matpg,
        "store": store_to_dict(state.store),
    }


def state_from_dict(data: dict) -> EvolutionState:
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {data.get('version')!r} is not supported")
    cfg = EvolutionConfig.from_dict(data["config"])
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng"]
    store = store_from_dict(data["store"])
    state = EvolutionState(cfg, store, [int(v) for v in data["maple"]],
                           [int(v) for v in data["matpg"]], rng,
                           int(data["generation"]), data.get("champion_id"), data.get("meta", {}))
    if state.roots() != store.roots:
        raise CheckpointError("population lists disagree with the store roots")
    return state


def dumps_state(state: EvolutionState) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True, separators=(",", ":"))


def save_checkpoint(state: EvolutionState, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_state(state))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | os.PathLike) -> EvolutionState:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(data, dict):
        raise CheckpointError(f"{path} is not a checkpoint")
    try:
        return state_from_dict(data)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None


# -- driver ------------------------------------------------------------------------

STATS_HEADER = ["gen", "task", "best", "mean", "std", "champion_id"]
VALIDATION_HEADER = ["gen", "task", "champion_id", "champion_score", "population_best",
                     "population_mean"]


def stats_rows(stats: GenerationStats, task_names: Sequence[str]) -> list[list]:
    return [[stats.generation, name, repr(stats.best[t]), repr(stats.mean[t]),
             repr(stats.std[t]), stats.champion_id]
            for t, name in enumerate(task_names)]


def validation_rows(result: ValidationResult, task_names: Sequence[str]) -> list[list]:
    k = result.champion_row()
    rows = [[result.generation, name, result.champion_id, repr(float(result.task_scores[k, t])),
             repr(float(result.task_scores[:, t].max())),
             repr(float(result.task_scores[:, t].mean()))]
            for t, name in enumerate(task_names)]
    rows.append([result.generation, "combined", result.champion_id,
                 repr(float(result.combined[k])), repr(float(result.combined.max())),
                 repr(float(result.combined.mean()))])
    return rows


def _rewrite_csv(path: Path, header: list[str], keep_before: int) -> None:
    """Start ``path`` fresh, keeping rows of generations < ``keep_before`` (resume)."""
    rows = []
    if path.exists() and keep_before > 0:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            rows = [r for r in reader if r and int(r[0]) < keep_before]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _append_csv(path: Path, rows: list[list]) -> None:
    with path.open("a", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def run(
    state: EvolutionState,
    suite: EnvironmentSuite,
    out_dir: str | os.PathLike | None = None,
    n_generations: int | None = None,
    workers: int = 1,
    checkpoint_every: int | None = None,
    on_generation: Callable[[GenerationStats], None] | None = None,
) -> list[GenerationStats]:
    """Run generations ``state.generation .. n_generations - 1``, then validate.

    Validation runs every ``validation_frequency`` generations and once more
    on the final population. With ``out_dir``, writes ``stats.csv``,
    ``validation.csv`` and ``checkpoints/``.
    """
    cfg = state.config
    total = cfg.n_generations if n_generations is None else n_generations
    names = suite.names
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        _rewrite_csv(out / "stats.csv", STATS_HEADER, state.generation)
        _rewrite_csv(out / "validation.csv", VALIDATION_HEADER, state.generation)
    history = []
    while state.generation < total:
        if state.generation % cfg.validation_frequency == 0:
            result = validate(state, suite, workers)
            if out is not None:
                _append_csv(out / "validation.csv", validation_rows(result, names))
        stats = run_generation(state, suite, workers)
        history.append(stats)
        log.info("gen %d best=%s champion=%d (%.1fs)", stats.generation,
                 [round(b, 2) for b in stats.best], stats.champion_id, stats.seconds)
        if out is not None:
            _append_csv(out / "stats.csv", stats_rows(stats, names))
            if checkpoint_every and state.generation % checkpoint_every == 0:
                save_checkpoint(state, out / "checkpoints" / f"gen_{state.generation:05d}.json")
        if on_generation is not None:
            on_generation(stats)
    if out is not None and not _validated_at(out / "validation.csv", state.generation):
        result = validate(state, suite, workers)
        _append_csv(out / "validation.csv", validation_rows(result, names))
    elif out is None:
        validate(state, suite, workers)
    if out is not None:
        save_checkpoint(state, out / "checkpoints" / "last.json")
    return history


def _validated_at(path: Path, generation: int) -> bool:
    with path.open(newline="") as fh:
        return any(r and r[0] == str(generation) for r in csv.reader(fh))

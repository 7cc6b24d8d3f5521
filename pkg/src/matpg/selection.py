"""Survivor selection: tournament with elitism and epsilon-lexicase.

Scores are "higher is better" mean episode returns, one column per task.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class SelectionConfig:
    method: str = "tournament"  # "tournament" | "lexicase"
    elite_proportion: float = 0.05
    tournament_size: int = 3
    survivor_proportion: float = 0.05
    epsilon_coefficient: float = 0.1

    def __post_init__(self):
        if self.method not in ("tournament", "lexicase"):
            raise ValueError(f"unknown selection method {self.method!r}")
        for name in ("elite_proportion", "survivor_proportion"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name}={value} must lie in (0, 1]")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")


@dataclass
class ScoreMatrix:
    ids: tuple[int, ...]
    values: np.ndarray  # shape (len(ids), n_tasks)

    def __post_init__(self):
        self.ids = tuple(int(i) for i in self.ids)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise ValueError("score matrix must have one row per id")
        self.index = {agent: k for k, agent in enumerate(self.ids)}

    @property
    def n_tasks(self) -> int:
        return self.values.shape[1]

    def row(self, agent_id: int) -> np.ndarray:
        return self.values[self.index[agent_id]]


def aggregate_fitness(row: Sequence[float], weights: Sequence[float] | None = None) -> float:
    row = np.asarray(row, dtype=float)
    if weights is None:
        weights = np.ones_like(row)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != row.shape:
        raise ValueError(f"{len(weights)} weights for {len(row)} task scores")
    return float(np.dot(row, weights) / weights.sum())


def _best(candidates: Sequence[int], fitness: dict[int, float]) -> int:
    """Highest fitness, ties to the lower id."""
    return min(candidates, key=lambda i: (-fitness[i], i))


def tournament_winners(groups: Sequence[Sequence[int]], fitness: dict[int, float]) -> list[int]:
    return [_best(g, fitness) for g in groups if len(g)]


def tournament_select(
    scores: ScoreMatrix,
    cfg: SelectionConfig,
    rng: np.random.Generator,
    weights: Sequence[float] | None = None,
) -> tuple[list[int], list[int]]:
    """Return ``(elites, winners)``.

    Elites are the top ``ceil(elite_proportion * N)`` agents; the rest are
    shuffled into groups of ``tournament_size`` (last group may be short)
    and each group's best becomes a winner.
    """
    fitness = {i: aggregate_fitness(r, weights) for i, r in zip(scores.ids, scores.values)}
    ranked = sorted(scores.ids, key=lambda i: (-fitness[i], i))
    n_elite = min(len(ranked), math.ceil(cfg.elite_proportion * len(ranked)))
    elites = ranked[:n_elite]
    rest = sorted(ranked[n_elite:])
    order = [rest[int(k)] for k in rng.permutation(len(rest))]
    size = cfg.tournament_size
    groups = [order[k:k + size] for k in range(0, len(order), size)]
    return elites, tournament_winners(groups, fitness)


def median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def mad(values: Sequence[float]) -> float:
    """Median absolute deviation from the median."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("mad of an empty sequence")
    centre = median(values)
    return median([abs(v - centre) for v in values])


def lexicase_select_one(
    scores: ScoreMatrix,
    pool: Sequence[int],
    task_order: Sequence[int],
    epsilons: Sequence[float],
    rng: np.random.Generator,
) -> int:
    """Filter ``pool`` task by task keeping agents within epsilon of the best.

    A uniform random draw breaks any remaining tie.
    """
    if not pool:
        raise ValueError("empty lexicase pool")
    index = scores.index
    values = scores.values
    survivors = list(pool)
    for t in task_order:
        column = [values[index[a], t] for a in survivors]
        threshold = max(column) - epsilons[t]
        survivors = [a for a, s in zip(survivors, column) if s >= threshold]
        if len(survivors) == 1:
            break
    if len(survivors) == 1:
        return survivors[0]
    return survivors[int(rng.integers(len(survivors)))]


def lexicase_epsilons(scores: ScoreMatrix, coefficient: float) -> list[float]:
    return [coefficient * mad(scores.values[:, t]) for t in range(scores.n_tasks)]


def epsilon_lexicase_select(
    scores: ScoreMatrix,
    cfg: SelectionConfig,
    rng: np.random.Generator,
    max_draws_factor: int = 10,
) -> list[int]:
    """Distinct survivors, ``ceil(survivor_proportion * N)`` of them.

    Selection draws with replacement (duplicates dropped). If the draw
    budget runs out before enough distinct agents appear, the remaining
    slots are filled by lexicase over the agents not yet chosen.
    """
    n = len(scores.ids)
    if n == 0:
        raise ValueError("empty population")
    wanted = min(n, math.ceil(cfg.survivor_proportion * n))
    if wanted == n:
        return list(scores.ids)
    eps = lexicase_epsilons(scores, cfg.epsilon_coefficient)
    pool = list(scores.ids)
    chosen: list[int] = []
    seen: set[int] = set()
    for _ in range(max_draws_factor * wanted):
        order = [int(t) for t in rng.permutation(scores.n_tasks)]
        pick = lexicase_select_one(scores, pool, order, eps, rng)
        if pick not in seen:
            seen.add(pick)
            chosen.append(pick)
            if len(chosen) == wanted:
                return chosen
    while len(chosen) < wanted:
        rest = [a for a in pool if a not in seen]
        order = [int(t) for t in rng.permutation(scores.n_tasks)]
        pick = lexicase_select_one(scores, rest, order, eps, rng)
        seen.add(pick)
        chosen.append(pick)
    return chosen

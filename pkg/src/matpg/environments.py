"""Environment interface and a small multi-task point-mass suite.

The built-in suite drives a 1-D point mass along a track split into
sections. Each section holds one zone (an obstacle) whose far edge is a
closed gate until the section's task is solved; touching a closed gate ends
the episode. Reward is forward progress plus a bonus when a gate opens
(REVERSE also pays a smaller bonus on first entering its zone).

Every task needs the auxiliary actuator held in its own band while in the
zone, and a task-specific motion:

========== =====================================================  =============
task       gate condition (inside the zone)                        aux band
========== =====================================================  =============
REACH      stay in band for ``dwell_steps`` consecutive steps      [0.6, 1]
BRAKE      as REACH, entering below ``brake_speed`` (else crash)   [-0.6, -0.2)
OSCILLATE  track ``1 + sin(phase)`` in velocity for a few steps    [0.2, 0.6)
REVERSE    enter, then back out behind the zone, then proceed      [-1, -0.6)
HOLD       stay nearly still for consecutive steps                 [-0.2, 0.2)
========== =====================================================  =============

The bands are disjoint and an out-of-band step inside the zone resets the
progress count, so an aux signal that opens one gate cannot open another.
A policy transfers between tasks only by reading the task id.
Bands are not monotone in the task id, so a linear function of the id does
not solve several tasks at once.

Observation: ``[velocity, sin(phase), cos(phase), gate, task_id, center - x]``
where ``gate`` is 1 once the current section is cleared, -1 while REVERSE
waits for the agent to back out, and 0 otherwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np


class ConfigError(ValueError):
    pass


class Task(enum.IntEnum):
    REACH = 0
    BRAKE = 1
    OSCILLATE = 2
    REVERSE = 3
    HOLD = 4


N_TASKS = len(Task)

# aux-actuator band index per task; bands split [-1, 1] into five equal slices
_BAND_OF_TASK = {Task.REACH: 4, Task.BRAKE: 1, Task.OSCILLATE: 3, Task.REVERSE: 0, Task.HOLD: 2}


def aux_band(task: int) -> tuple[float, float]:
    k = _BAND_OF_TASK[Task(task)]
    return -1.0 + 0.4 * k, -1.0 + 0.4 * (k + 1)


@dataclass(frozen=True)
class EnvironmentSpec:
    observation_dim: int
    action_dim: int
    action_bounds: tuple[tuple[float, float], ...]
    max_steps: int
    task_id: int
    default_action: float = 0.0

    def __post_init__(self):
        if self.observation_dim < 1 or self.action_dim < 1:
            raise ConfigError("dimensions must be >= 1")
        if len(self.action_bounds) != self.action_dim:
            raise ConfigError("one (low, high) pair per action dimension")
        for low, high in self.action_bounds:
            if not low < high:
                raise ConfigError(f"empty action range [{low}, {high}]")


@dataclass(slots=True)
class StepResult:
    observation: list[float]
    reward: float
    done: bool


class Environment(Protocol):
    def reset(self, seed: int) -> list[float]: ...

    def step(self, action: Sequence[float]) -> StepResult: ...

    def spec(self) -> EnvironmentSpec: ...


@dataclass
class PointMassConfig:
    dt: float = 0.1
    force: float = 20.0
    drag: float = 4.0
    section_length: float = 10.0
    center_interval: tuple[float, float] = (0.4, 0.5)  # fraction of section_length
    zone_half_width: float = 1.0
    max_steps: int = 100
    completion_bonus: float = 20.0
    stage_bonus: float = 5.0  # REVERSE: paid once on entering the zone
    phase_period: int = 20
    brake_speed: float = 1.5
    dwell_steps: int = 3  # REACH / BRAKE: consecutive in-band steps inside the zone
    oscillate_tolerance: float = 0.75
    oscillate_steps: int = 5
    reverse_margin: float = 0.5
    hold_speed: float = 0.3
    hold_steps: int = 6
    action_dim: int = 2
    randomize: bool = True  # False pins every zone at the middle of center_interval

    def __post_init__(self):
        low, high = self.center_interval
        if not 0.0 <= low <= high <= 1.0:
            raise ConfigError(f"bad center_interval {self.center_interval}")
        if not 2 <= self.action_dim <= 6:
            raise ConfigError("action_dim must be between 2 and 6")
        if self.drag * self.dt >= 1.0:
            raise ConfigError("drag * dt must be < 1 for a stable Euler step")


OBSERVATION_DIM = 6


class PointMassEnv:
    """One episode walks through ``sections`` (a list of task ids) in order.

    With ``shuffle`` the section order is redrawn from the seed on reset.
    Only action 0 (force) and action 1 (aux) act on the body; any extra
    action dimensions are accepted and ignored.
    """

    def __init__(self, sections: Sequence[int], cfg: PointMassConfig | None = None,
                 shuffle: bool = False, max_steps: int | None = None):
        if not sections:
            raise ConfigError("an episode needs at least one section")
        for t in sections:
            if not 0 <= t < N_TASKS:
                raise ConfigError(f"unknown task id {t}")
        self.cfg = cfg or PointMassConfig()
        self.base_sections = [int(t) for t in sections]
        self.shuffle = shuffle
        self.max_steps = max_steps or self.cfg.max_steps * len(sections)
        self.sections = list(self.base_sections)
        self._bands = [aux_band(t) for t in self.sections]
        self.centers: list[float] = []
        self.reset(0)

    def spec(self) -> EnvironmentSpec:
        return EnvironmentSpec(
            observation_dim=OBSERVATION_DIM,
            action_dim=self.cfg.action_dim,
            action_bounds=((-1.0, 1.0),) * self.cfg.action_dim,
            max_steps=self.max_steps,
            task_id=self.base_sections[0] if len(self.base_sections) == 1 else -1,
        )

    def reset(self, seed: int) -> list[float]:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        sections = list(self.base_sections)
        if self.shuffle:
            sections = [sections[int(i)] for i in rng.permutation(len(sections))]
        self.sections = sections
        self._bands = [aux_band(t) for t in sections]
        low, high = cfg.center_interval
        length = cfg.section_length
        if cfg.randomize:
            offsets = rng.uniform(low * length, high * length, size=len(sections))
        else:
            offsets = [0.5 * (low + high) * length] * len(sections)
        self.centers = [k * length + float(o) for k, o in enumerate(offsets)]
        self.x = 0.0
        self.v = 0.0
        self.t = 0
        self.opened = [False] * len(sections)
        self.stage = [0] * len(sections)  # REVERSE progress
        self.count = [0] * len(sections)  # OSCILLATE / HOLD progress
        self.section = 0
        self.done = False
        return self._observe()

    def _observe(self) -> list[float]:
        k = self.section
        phase = 2.0 * math.pi * self.t / self.cfg.phase_period
        if self.opened[k]:
            gate = 1.0
        elif self.stage[k] == 1:
            gate = -1.0
        else:
            gate = 0.0
        return [self.v, math.sin(phase), math.cos(phase), gate,
                float(self.sections[k]), self.centers[k] - self.x]

    def step(self, action: Sequence[float]) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode")
        cfg = self.cfg
        force = _clean(action[0])
        aux = _clean(action[1])

        x_old, v_old = self.x, self.v
        phase = 2.0 * math.pi * self.t / cfg.phase_period
        x = x_old + cfg.dt * v_old
        v = v_old + cfg.dt * (cfg.force * force - cfg.drag * v_old)
        reward = 0.0
        crashed = False

        k = self.section
        task = self.sections[k]
        c = self.centers[k]
        entry, exit_ = c - cfg.zone_half_width, c + cfg.zone_half_width
        if not self.opened[k]:
            lo, hi = self._bands[k]
            in_band = lo <= aux < hi or aux == hi == 1.0
            inside = entry <= x <= exit_
            if task == Task.BRAKE and x_old < entry <= x and v_old > cfg.brake_speed:
                crashed = True
            elif inside and in_band:
                if task == Task.REACH or task == Task.BRAKE:
                    self.count[k] += 1
                    self.opened[k] = self.count[k] >= cfg.dwell_steps
                elif task == Task.OSCILLATE:
                    if abs(v - (1.0 + math.sin(phase))) <= cfg.oscillate_tolerance:
                        self.count[k] += 1
                    self.opened[k] = self.count[k] >= cfg.oscillate_steps
                elif task == Task.HOLD:
                    self.count[k] = self.count[k] + 1 if abs(v) <= cfg.hold_speed else 0
                    self.opened[k] = self.count[k] >= cfg.hold_steps
                elif task == Task.REVERSE and self.stage[k] == 0:
                    self.stage[k] = 1
                    reward += cfg.stage_bonus
            elif inside:
                # leaving the band inside the zone restarts any progress count
                self.count[k] = 0
            if task == Task.REVERSE and self.stage[k] == 1 and x < entry - cfg.reverse_margin:
                self.opened[k] = True
            if self.opened[k]:
                reward += cfg.completion_bonus
            elif x > exit_:
                x = exit_
                crashed = True

        reward += x - x_old
        self.x, self.v = x, v
        self.t += 1
        length = cfg.section_length
        self.section = min(max(int(x // length), 0), len(self.sections) - 1)
        # never enter a section whose predecessors are still closed
        while self.section > 0 and not self.opened[self.section - 1]:
            self.section -= 1
        self.done = crashed or self.t >= self.max_steps
        return StepResult(self._observe(), reward, self.done)


def _clean(value: float) -> float:
    if value != value:
        return 0.0
    return min(1.0, max(-1.0, float(value)))


@dataclass
class EnvironmentSuite:
    """Per-task environment factories plus an optional combined-episode factory."""

    task_ids: list[int]
    factories: list[Callable[[], Environment]]
    combined_factory: Callable[[], Environment] | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.factories or len(self.factories) != len(self.task_ids):
            raise ConfigError("one factory per task is required")
        if not self.names:
            self.names = [str(t) for t in self.task_ids]

    @property
    def n_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def supports_combined(self) -> bool:
        return self.combined_factory is not None

    def env(self, task_index: int) -> Environment:
        return self.factories[task_index]()

    def combined(self) -> Environment:
        if self.combined_factory is None:
            raise ConfigError("this suite cannot build combined episodes")
        return self.combined_factory()

    def spec(self) -> EnvironmentSpec:
        return self.env(0).spec()


def make_suite(task_ids: Sequence[int], cfg: PointMassConfig | None = None,
               combined: bool = True) -> EnvironmentSuite:
    task_ids = [int(t) for t in task_ids]
    if not task_ids:
        raise ConfigError("at least one task is required")
    if len(set(task_ids)) != len(task_ids):
        raise ConfigError(f"duplicate task ids in {task_ids}")
    for t in task_ids:
        if not 0 <= t < N_TASKS:
            raise ConfigError(f"unknown task id {t} (valid: 0..{N_TASKS - 1})")
    cfg = cfg or PointMassConfig()
    factories = [lambda t=t: PointMassEnv([t], cfg) for t in task_ids]
    combined_factory = (lambda: PointMassEnv(task_ids, cfg, shuffle=True)) if combined else None
    return EnvironmentSuite(task_ids, factories, combined_factory,
                            [Task(t).name for t in task_ids])


def run_episode(
    policy: Callable[[list[float]], Sequence[float]],
    env: Environment,
    seed: int,
) -> tuple[float, bool]:
    """Roll out one episode; return ``(return, faulted)``.

    Actions are clamped to the spec bounds. An exception raised by the
    environment aborts the episode with the return accumulated so far.
    """
    spec = env.spec()
    bounds = spec.action_bounds
    total = 0.0
    try:
        obs = env.reset(seed)
    except Exception:
        return 0.0, True
    for _ in range(spec.max_steps):
        raw = policy(obs)
        action = [spec.default_action if a != a else min(hi, max(lo, a))
                  for a, (lo, hi) in zip(raw, bounds)]
        try:
            result = env.step(action)
        except Exception:
            return total, True
        total += result.reward
        if result.done:
            break
        obs = result.observation
    return total, False

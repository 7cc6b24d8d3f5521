"""Mutation operators for programs, action vertices, teams and whole roots.

Operators take a numpy ``Generator`` and never modify their inputs; they
return fresh objects. Vertices shared through the store are never edited
in place, so mutating one root cannot change another root's behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .graph import (
    ActionEdge,
    ActionVertex,
    Root,
    RootKind,
    Team,
    TeamEdge,
    VertexStore,
)
from .lgp import N_REGISTERS, Instruction, Opcode, Operand, Program

N_OPCODES = len(Opcode)


@dataclass
class MutationConfig:
    p_team_add_edge: float = 0.7
    p_team_del_edge: float = 0.7
    p_team_mut_edge: float = 0.5
    p_team_mut_action: float = 0.5
    p_team_dest_change: float = 0.5
    p_team_dest_change_action: float = 0.99
    p_action_add_edge: float = 0.2
    p_action_del_edge: float = 0.1
    p_action_mut_edge: float = 0.5
    p_action_mut_act_edge: float = 0.2
    p_action_swap_edges: float = 0.1
    p_program_add_line: float = 0.9
    p_program_del_line: float = 0.5
    p_program_swap_lines: float = 1.0
    p_program_mutate_constant: float = 0.5
    init_program_size: int = 100
    max_program_size: int | None = None  # None = unbounded
    init_team_edges: int = 2

    def __post_init__(self):
        for f in fields(self):
            if f.name.startswith("p_"):
                value = getattr(self, f.name)
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"{f.name}={value} is not a probability")
        if self.init_program_size < 1:
            raise ValueError("init_program_size must be >= 1")
        if self.max_program_size is not None and self.max_program_size < 1:
            raise ValueError("max_program_size must be >= 1 or None")
        if self.init_team_edges < 2:
            raise ValueError("init_team_edges must be >= 2")

    @classmethod
    def zero(cls, **overrides) -> MutationConfig:
        """Config with every probability at 0 (useful for forcing single branches)."""
        probs = {f.name: 0.0 for f in fields(cls) if f.name.startswith("p_")}
        probs.update(overrides)
        return cls(**probs)


# -- programs ----------------------------------------------------------------


def random_operand(rng: np.random.Generator, n_inputs: int) -> Operand:
    if rng.random() < 0.5:
        return Operand("r", int(rng.integers(N_REGISTERS)))
    return Operand("s", int(rng.integers(n_inputs)))


def random_instruction(rng: np.random.Generator, n_inputs: int) -> Instruction:
    dest = int(rng.integers(N_REGISTERS))
    op = Opcode(int(rng.integers(N_OPCODES)))
    lhs = random_operand(rng, n_inputs)
    rhs = random_operand(rng, n_inputs)
    return Instruction(dest, op, lhs, rhs, float(rng.uniform(-1.0, 1.0)))


def random_program(rng: np.random.Generator, n_inputs: int, size: int) -> Program:
    return Program([random_instruction(rng, n_inputs) for _ in range(size)], n_inputs)


def mutate_constant(c: float, rng: np.random.Generator, branch: int | None = None) -> float:
    """Scale by U[0.5, 2], flip the sign, or redraw from U[-1, 1], each with p=1/3."""
    if branch is None:
        branch = int(rng.integers(3))
    if branch == 0:
        out = c * float(rng.uniform(0.5, 2.0))
    elif branch == 1:
        out = -c
    else:
        out = float(rng.uniform(-1.0, 1.0))
    if not math.isfinite(out):
        out = float(rng.uniform(-1.0, 1.0))
    return out


def mutate_program(p: Program, rng: np.random.Generator, cfg: MutationConfig) -> Program:
    lines = list(p.lines)
    cap = cfg.max_program_size
    if rng.random() < cfg.p_program_add_line and (cap is None or len(lines) < cap):
        lines.insert(int(rng.integers(len(lines) + 1)), random_instruction(rng, p.n_inputs))
    if rng.random() < cfg.p_program_del_line and len(lines) > 1:
        del lines[int(rng.integers(len(lines)))]
    if rng.random() < cfg.p_program_swap_lines and len(lines) > 1:
        i, j = (int(k) for k in rng.choice(len(lines), size=2, replace=False))
        lines[i], lines[j] = lines[j], lines[i]
    if rng.random() < cfg.p_program_mutate_constant:
        i = int(rng.integers(len(lines)))
        ins = lines[i]
        lines[i] = Instruction(ins.dest, ins.op, ins.lhs, ins.rhs, mutate_constant(ins.const, rng))
    if tuple(lines) == p.lines:
        return p.copy()
    return Program(lines, p.n_inputs)


# -- action vertices -----------------------------------------------------------


def random_action_vertex(
    rng: np.random.Generator, n_inputs: int, action_dim: int, program_size: int
) -> ActionVertex:
    """A MAPLE-style vertex with one program for every action class."""
    return ActionVertex(
        tuple(
            ActionEdge(random_program(rng, n_inputs, program_size), c)
            for c in range(action_dim)
        )
    )


def copy_action_vertex(av: ActionVertex) -> ActionVertex:
    return ActionVertex(tuple(ActionEdge(e.program.copy(), e.action_class) for e in av.edges))


def mutate_action_vertex(
    av: ActionVertex, rng: np.random.Generator, cfg: MutationConfig, action_dim: int
) -> ActionVertex:
    edges = list(av.edges)
    n_inputs = edges[0].program.n_inputs

    def unused() -> list[int]:
        taken = {e.action_class for e in edges}
        return [c for c in range(action_dim) if c not in taken]

    if rng.random() < cfg.p_action_add_edge:
        free = unused()
        if free:
            cls = free[int(rng.integers(len(free)))]
            edges.append(ActionEdge(random_program(rng, n_inputs, cfg.init_program_size), cls))
    if rng.random() < cfg.p_action_del_edge and len(edges) > 1:
        del edges[int(rng.integers(len(edges)))]
    if rng.random() < cfg.p_action_mut_edge:
        i = int(rng.integers(len(edges)))
        edges[i] = ActionEdge(mutate_program(edges[i].program, rng, cfg), edges[i].action_class)
    if rng.random() < cfg.p_action_mut_act_edge:
        free = unused()
        if free:
            i = int(rng.integers(len(edges)))
            edges[i] = ActionEdge(edges[i].program, free[int(rng.integers(len(free)))])
    if rng.random() < cfg.p_action_swap_edges and len(edges) > 1:
        i, j = (int(k) for k in rng.choice(len(edges), size=2, replace=False))
        ci, cj = edges[i].action_class, edges[j].action_class
        edges[i] = ActionEdge(edges[i].program, cj)
        edges[j] = ActionEdge(edges[j].program, ci)
    return ActionVertex(tuple(edges))


# -- teams -------------------------------------------------------------------


def _draw_destination(
    rng: np.random.Generator,
    cfg: MutationConfig,
    store: VertexStore,
    exclude: int | None,
    force_action: bool = False,
) -> int:
    """A MAPLE root vertex with p_team_dest_change_action, otherwise a random team."""
    if not force_action and rng.random() >= cfg.p_team_dest_change_action:
        teams = [t for t in store.teams() if t != exclude]
        if teams:
            return teams[int(rng.integers(len(teams)))]
    maple = store.maple_roots()
    if maple:
        return maple[int(rng.integers(len(maple)))].vertex
    avs = store.action_vertices()
    return avs[int(rng.integers(len(avs)))]


def mutate_team(
    team: Team,
    rng: np.random.Generator,
    cfg: MutationConfig,
    store: VertexStore,
    self_id: int | None = None,
) -> Team:
    """Mutated copy of ``team``.

    May register new action vertices in ``store`` (copy-on-write when an
    edge's action vertex is mutated). ``self_id`` keeps the team from
    pointing at itself.
    """
    edges = list(team.edges)
    vertices = store.vertices

    def is_action(edge: TeamEdge) -> bool:
        return isinstance(vertices[edge.destination], ActionVertex)

    def n_action() -> int:
        return sum(is_action(e) for e in edges)

    if rng.random() < cfg.p_team_add_edge:
        program = random_program(rng, store.n_inputs, cfg.init_program_size)
        edges.append(TeamEdge(program, _draw_destination(rng, cfg, store, self_id)))
    if rng.random() < cfg.p_team_del_edge:
        i = int(rng.integers(len(edges)))
        if len(edges) > 2 and not (is_action(edges[i]) and n_action() == 1):
            del edges[i]
    if rng.random() < cfg.p_team_mut_edge:
        i = int(rng.integers(len(edges)))
        edge = edges[i]
        if rng.random() < cfg.p_team_dest_change:
            last_action = is_action(edge) and n_action() == 1
            dest = _draw_destination(rng, cfg, store, self_id, force_action=last_action)
            edges[i] = TeamEdge(edge.program, dest)
        elif is_action(edge) and rng.random() < cfg.p_team_mut_action:
            av = mutate_action_vertex(
                copy_action_vertex(vertices[edge.destination]), rng, cfg, store.action_dim
            )
            edges[i] = TeamEdge(edge.program, store.add(av))
        else:
            edges[i] = TeamEdge(mutate_program(edge.program, rng, cfg), edge.destination)
    return Team(tuple(edges))


def random_team(
    rng: np.random.Generator, cfg: MutationConfig, store: VertexStore
) -> Team:
    """Initial team: ``init_team_edges`` edges to distinct action vertices.

    Destinations come from the MAPLE sub-population when one exists,
    otherwise fresh action vertices are created.
    """
    maple = [r.vertex for r in store.maple_roots()]
    k = cfg.init_team_edges
    if len(maple) >= k:
        dests = [maple[int(i)] for i in rng.choice(len(maple), size=k, replace=False)]
    else:
        dests = [
            store.add(
                random_action_vertex(rng, store.n_inputs, store.action_dim, cfg.init_program_size)
            )
            for _ in range(k)
        ]
    return Team(
        tuple(
            TeamEdge(random_program(rng, store.n_inputs, cfg.init_program_size), d)
            for d in dests
        )
    )


# -- roots -------------------------------------------------------------------


def clone_root(root: Root, store: VertexStore) -> Root:
    """Register a copy of ``root``; team destinations stay shared."""
    vertex = store[root.vertex]
    if root.kind is RootKind.MATPG:
        twin = Team(tuple(TeamEdge(e.program.copy(), e.destination) for e in vertex.edges))
    else:
        twin = copy_action_vertex(vertex)
    return store.add_root(twin)


def mutate_root(
    root: Root,
    rng: np.random.Generator,
    cfg: MutationConfig,
    store: VertexStore,
    max_passes: int = 100,
) -> bool:
    """Mutate a freshly cloned, unshared root in place in the store.

    Passes repeat until the vertex actually changes (at most ``max_passes``).
    Returns whether a change happened.
    """
    original = store[root.vertex]
    for _ in range(max_passes):
        if root.kind is RootKind.MATPG:
            new = mutate_team(original, rng, cfg, store, self_id=root.vertex)
        else:
            new = mutate_action_vertex(original, rng, cfg, store.action_dim)
        if new != original:
            store.replace(root.vertex, new)
            return True
    return False

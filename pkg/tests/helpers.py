"""Builders and oracles shared by the test modules."""

import ast

import numpy as np

from matpg.graph import ActionEdge, ActionVertex, Root, RootKind, Team, TeamEdge, VertexStore
from matpg.lgp import Instruction, Opcode, Operand, Program
from matpg.variation import random_program

N_IN = 6


def const_prog(c: float, n_inputs: int = N_IN) -> Program:
    """Always returns ``c`` (c * exp(r1) with r1 = 0)."""
    return Program([Instruction(0, Opcode.EXP, Operand("r", 1), Operand("r", 1), c)], n_inputs)


def input_prog(k: int, scale: float = 1.0, n_inputs: int = N_IN) -> Program:
    """Returns ``scale * s[k]``."""
    return Program([Instruction(0, Opcode.ADD, Operand("s", k), Operand("r", 1), scale)], n_inputs)


def fig6_store(bids_t0=(0.1, 0.2, 0.9), bids_t1=(0.3, 0.8, 0.1)):
    """Two teams, five action vertices; T0 -> A0, A1, T1 and T1 -> A2, A3, A4.

    Action vertex A_k emits ``k + 0.5`` on class 0 (plus class 1 for A4,
    so the agent carries six action-vertex programs).
    """
    store = VertexStore(N_IN, 2)
    avs = []
    for k in range(5):
        edges = [ActionEdge(const_prog(k + 0.5), 0)]
        if k == 4:
            edges.append(ActionEdge(const_prog(-1.0), 1))
        avs.append(store.add(ActionVertex(tuple(edges))))
    t1 = store.add(Team(tuple(TeamEdge(const_prog(b), d) for b, d in zip(bids_t1, avs[2:]))))
    t0_dests = (avs[0], avs[1], t1)
    root = store.add_root(Team(tuple(TeamEdge(const_prog(b), d) for b, d in zip(bids_t0, t0_dests))))
    return store, root, avs, t1


def random_store(rng: np.random.Generator, n_teams: int, n_avs: int, action_dim: int = 3,
                 n_inputs: int = N_IN, cycles: bool = True, max_extra: int = 4,
                 program_size: int = 4) -> VertexStore:
    """A valid store with random wiring; with ``cycles`` teams form a ring both ways."""
    ids_av = list(range(n_avs))
    ids_team = list(range(n_avs, n_avs + n_teams))
    vertices = {}
    for vid in ids_av:
        k = int(rng.integers(1, action_dim + 1))
        classes = rng.choice(action_dim, size=k, replace=False)
        vertices[vid] = ActionVertex(tuple(
            ActionEdge(random_program(rng, n_inputs, int(rng.integers(1, program_size + 1))), int(c))
            for c in classes))
    for i, vid in enumerate(ids_team):
        dests = [ids_av[int(rng.integers(n_avs))]]
        if cycles and n_teams > 1:
            dests.append(ids_team[(i + 1) % n_teams])
            dests.append(ids_team[(i - 1) % n_teams])
        everything = ids_av + ids_team
        for _ in range(int(rng.integers(0, max_extra + 1))):
            dests.append(everything[int(rng.integers(len(everything)))])
        while len(dests) < 2:
            dests.append(ids_av[int(rng.integers(n_avs))])
        order = rng.permutation(len(dests))
        vertices[vid] = Team(tuple(
            TeamEdge(random_program(rng, n_inputs, int(rng.integers(1, program_size + 1))),
                     dests[int(j)]) for j in order))
    roots = []
    for vid in ids_team:
        if rng.random() < 0.5:
            roots.append(Root(RootKind.MATPG, vid))
    for vid in ids_av:
        if rng.random() < 0.3:
            roots.append(Root(RootKind.MAPLE, vid))
    if not roots:
        roots.append(Root(RootKind.MATPG, ids_team[0]) if ids_team else Root(RootKind.MAPLE, 0))
    store = VertexStore(n_inputs, action_dim, vertices, roots, n_avs + n_teams)
    store.check()
    return store


def brute_force_reachable(store: VertexStore, start: int) -> set:
    """Fixpoint closure over the edge relation (no queue, no early exit)."""
    edges = {vid: {e.destination for e in v.edges} if isinstance(v, Team) else set()
             for vid, v in store.vertices.items()}
    closure = {start}
    while True:
        grown = closure | {d for v in closure for d in edges[v]}
        if grown == closure:
            return closure
        closure = grown


def _log(x):
    return np.log(x) if x > 0 else np.float64(np.nan)


FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": _log,
         "max": np.maximum, "mod": np.fmod}
BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def evaluate_text(text, obs):
    """Evaluate rendered text with float64 semantics, independent of the lgp module."""
    env = {f"s{k}": np.float64(v) for k, v in enumerate(obs)}
    env.update(inf=np.float64(np.inf), nan=np.float64(np.nan))

    def ev(node):
        if isinstance(node, ast.Constant):
            return np.float64(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.BinOp):
            return BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Call):
            return FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise AssertionError(f"unexpected syntax {ast.dump(node)}")

    with np.errstate(all="ignore"):
        result = None
        for stmt in ast.parse(text).body:
            if isinstance(stmt, ast.Assign):
                env[stmt.targets[0].id] = ev(stmt.value)
            else:
                result = ev(stmt.value)
    return float(result)


def close(a, b, rel=1e-9):
    """Equal within ``rel`` relative error; NaN matches NaN, infinities match exactly."""
    if np.isnan(a) or np.isnan(b):
        return np.isnan(a) and np.isnan(b)
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= rel * max(abs(a), abs(b))

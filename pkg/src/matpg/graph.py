"""Tangled program graph data model and inference.

Teams route control flow along their highest-bidding edge; action vertices
emit a continuous action vector with one program per action class. All
vertices live in a shared :class:`VertexStore` so several roots may point
at the same subgraph.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .lgp import Program, sanitize_bid


class GraphError(ValueError):
    """A store or vertex violates a structural invariant."""


@dataclass(frozen=True)
class TeamEdge:
    program: Program
    destination: int


@dataclass(frozen=True)
class ActionEdge:
    program: Program
    action_class: int


@dataclass(frozen=True)
class Team:
    edges: tuple[TeamEdge, ...]


@dataclass(frozen=True)
class ActionVertex:
    edges: tuple[ActionEdge, ...]

    def classes(self) -> list[int]:
        return [e.action_class for e in self.edges]


Vertex = Union[Team, ActionVertex]


class RootKind(str, enum.Enum):
    MAPLE = "maple"
    MATPG = "matpg"


@dataclass(frozen=True)
class Root:
    kind: RootKind
    vertex: int


@dataclass
class VertexStore:
    """Arena of vertices shared by every root of a population.

    Ids are handed out from a monotone counter and never reused.
    """

    n_inputs: int
    action_dim: int
    vertices: dict[int, Vertex] = field(default_factory=dict)
    roots: list[Root] = field(default_factory=list)
    next_id: int = 0

    def add(self, vertex: Vertex) -> int:
        vid = self.next_id
        self.next_id += 1
        self.vertices[vid] = vertex
        return vid

    def replace(self, vid: int, vertex: Vertex) -> None:
        if vid not in self.vertices:
            raise GraphError(f"unknown vertex {vid}")
        self.vertices[vid] = vertex

    def __getitem__(self, vid: int) -> Vertex:
        return self.vertices[vid]

    def __contains__(self, vid: int) -> bool:
        return vid in self.vertices

    def __len__(self) -> int:
        return len(self.vertices)

    def add_root(self, vertex: Vertex) -> Root:
        kind = RootKind.MATPG if isinstance(vertex, Team) else RootKind.MAPLE
        root = Root(kind, self.add(vertex))
        self.roots.append(root)
        return root

    def remove_roots(self, doomed: Iterable[Root]) -> None:
        doomed = set(doomed)
        self.roots = [r for r in self.roots if r not in doomed]

    def teams(self) -> list[int]:
        return [vid for vid, v in self.vertices.items() if isinstance(v, Team)]

    def action_vertices(self) -> list[int]:
        return [vid for vid, v in self.vertices.items() if isinstance(v, ActionVertex)]

    def maple_roots(self) -> list[Root]:
        return [r for r in self.roots if r.kind is RootKind.MAPLE]

    def check(self) -> None:
        """Raise GraphError on the first broken invariant."""
        for root in self.roots:
            vertex = self.vertices.get(root.vertex)
            if vertex is None:
                raise GraphError(f"root {root.vertex} missing from store")
            if (root.kind is RootKind.MATPG) != isinstance(vertex, Team):
                raise GraphError(f"root {root.vertex} has the wrong kind")
        for vid, vertex in self.vertices.items():
            if isinstance(vertex, Team):
                check_team(vertex, self, vid)
            else:
                check_action_vertex(vertex, self.action_dim, vid)


def check_team(team: Team, store: VertexStore, vid: int | None = None) -> None:
    if len(team.edges) < 2:
        raise GraphError(f"team {vid} has fewer than 2 edges")
    n_action = 0
    for edge in team.edges:
        dest = store.vertices.get(edge.destination)
        if dest is None:
            raise GraphError(f"team {vid} has a dangling edge to {edge.destination}")
        n_action += isinstance(dest, ActionVertex)
    if n_action == 0:
        raise GraphError(f"team {vid} has no edge to an action vertex")


def check_action_vertex(av: ActionVertex, action_dim: int, vid: int | None = None) -> None:
    classes = av.classes()
    if not 1 <= len(classes) <= action_dim:
        raise GraphError(f"action vertex {vid} has {len(classes)} edges")
    if len(set(classes)) != len(classes):
        raise GraphError(f"action vertex {vid} repeats an action class")
    if any(not 0 <= c < action_dim for c in classes):
        raise GraphError(f"action vertex {vid} has an out-of-range class")


def route_team(
    team: Team,
    observation: Sequence[float],
    visited: set[int],
    store: VertexStore,
) -> int:
    """Destination of the highest-bidding edge not leading to a visited team.

    Ties go to the lowest edge index; NaN bids count as -inf.
    """
    best_dest = -1
    best_bid = -math.inf
    vertices = store.vertices
    for edge in team.edges:
        dest = edge.destination
        if dest in visited and isinstance(vertices[dest], Team):
            continue
        bid = sanitize_bid(edge.program(observation))
        if best_dest < 0 or bid > best_bid:
            best_dest, best_bid = dest, bid
    if best_dest < 0:
        raise GraphError("team has no admissible edge")
    return best_dest


def emit_actions(
    av: ActionVertex,
    observation: Sequence[float],
    action_dim: int,
    default: float = 0.0,
) -> list[float]:
    """Action vector with one slot per class; missing classes and NaN get ``default``."""
    actions = [default] * action_dim
    for edge in av.edges:
        value = edge.program(observation)
        actions[edge.action_class] = default if value != value else value
    return actions


def run_agent(
    root: Root,
    observation: Sequence[float],
    store: VertexStore,
    default: float = 0.0,
    trace: list[int] | None = None,
) -> list[float]:
    """Traverse from ``root`` to an action vertex and return its action vector.

    ``trace``, if given, receives the ids of every vertex visited, in order.
    """
    observation = [float(x) for x in observation]
    vid = root.vertex
    vertex = store.vertices[vid]
    visited: set[int] = set()
    while isinstance(vertex, Team):
        visited.add(vid)
        if trace is not None:
            trace.append(vid)
        vid = route_team(vertex, observation, visited, store)
        vertex = store.vertices[vid]
    if trace is not None:
        trace.append(vid)
    return emit_actions(vertex, observation, store.action_dim, default)


def successors(vertex: Vertex) -> list[int]:
    if isinstance(vertex, Team):
        return [e.destination for e in vertex.edges]
    return []


def reachable_set(root: Root | int, store: VertexStore) -> set[int]:
    start = root.vertex if isinstance(root, Root) else root
    seen = {start}
    queue = deque([start])
    while queue:
        for nxt in successors(store.vertices[queue.popleft()]):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def gc(store: VertexStore) -> int:
    """Drop every vertex unreachable from all roots; return how many were removed."""
    live: set[int] = set()
    for root in store.roots:
        if root.vertex not in live:
            live |= reachable_set(root, store)
    dead = [vid for vid in store.vertices if vid not in live]
    for vid in dead:
        del store.vertices[vid]
    return len(dead)


# -- serialization ---------------------------------------------------------


def vertex_to_dict(vertex: Vertex) -> dict:
    if isinstance(vertex, Team):
        return {
            "type": "team",
            "edges": [[e.destination, e.program.to_dict()] for e in vertex.edges],
        }
    return {
        "type": "action",
        "edges": [[e.action_class, e.program.to_dict()] for e in vertex.edges],
    }


def vertex_from_dict(data: dict) -> Vertex:
    if data["type"] == "team":
        return Team(tuple(TeamEdge(Program.from_dict(p), int(d)) for d, p in data["edges"]))
    if data["type"] == "action":
        return ActionVertex(
            tuple(ActionEdge(Program.from_dict(p), int(c)) for c, p in data["edges"])
        )
    raise GraphError(f"unknown vertex type {data['type']!r}")


def store_to_dict(store: VertexStore) -> dict:
    return {
        "n_inputs": store.n_inputs,
        "action_dim": store.action_dim,
        "next_id": store.next_id,
        "vertices": [[vid, vertex_to_dict(v)] for vid, v in sorted(store.vertices.items())],
        "roots": [[r.kind.value, r.vertex] for r in store.roots],
    }


def store_from_dict(data: dict) -> VertexStore:
    store = VertexStore(int(data["n_inputs"]), int(data["action_dim"]))
    store.vertices = {int(vid): vertex_from_dict(v) for vid, v in data["vertices"]}
    store.roots = [Root(RootKind(kind), int(vid)) for kind, vid in data["roots"]]
    store.next_id = int(data["next_id"])
    store.check()
    return store

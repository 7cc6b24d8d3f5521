"""Champion inspection: reachable-subgraph pruning, expression rendering, DOT export.

Labels are deterministic: teams ``T<k>`` and action vertices ``A<k>`` in
breadth-first encounter order from the root; programs ``p<k>`` over the
team edges first (team order, edge order), then action-vertex edges.

In DOT output, each action-vertex program is drawn as a self-loop on its
vertex labelled ``p<k>: a<class>``, so the node set is exactly the pruned
vertex set.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .graph import ActionVertex, Root, Team, VertexStore
from .lgp import Opcode, Program, apply_opcode


@dataclass
class PrunedAgent:
    root: Root
    store: VertexStore
    labels: dict[int, str]  # vertex id -> "T0" / "A3"
    order: list[int]  # vertex ids, teams first then action vertices
    program_labels: dict[tuple[int, int], str]  # (vertex id, edge index) -> "p5"

    @property
    def teams(self) -> list[int]:
        return [v for v in self.order if isinstance(self.store[v], Team)]

    @property
    def action_vertices(self) -> list[int]:
        return [v for v in self.order if isinstance(self.store[v], ActionVertex)]


def prune(root: Root, store: VertexStore) -> PrunedAgent:
    teams, avs = [], []
    seen = {root.vertex}
    queue = deque([root.vertex])
    while queue:
        vid = queue.popleft()
        vertex = store[vid]
        if isinstance(vertex, Team):
            teams.append(vid)
            for edge in vertex.edges:
                if edge.destination not in seen:
                    seen.add(edge.destination)
                    queue.append(edge.destination)
        else:
            avs.append(vid)
    labels = {v: f"T{k}" for k, v in enumerate(teams)}
    labels.update({v: f"A{k}" for k, v in enumerate(avs)})
    order = teams + avs
    program_labels = {}
    for vid in order:
        for i in range(len(store[vid].edges)):
            program_labels[(vid, i)] = f"p{len(program_labels)}"
    sub = VertexStore(store.n_inputs, store.action_dim,
                      {v: store[v] for v in sorted(seen)}, [root], store.next_id)
    return PrunedAgent(root, sub, labels, order, program_labels)


# -- expressions -----------------------------------------------------------------

_ATOM, _UNARY, _MUL, _ADD = 4, 3, 2, 1
_INFIX = {Opcode.ADD: ("+", _ADD), Opcode.SUB: ("-", _ADD),
          Opcode.MUL: ("*", _MUL), Opcode.DIV: ("/", _MUL)}


class _Node:
    __slots__ = ("kind", "value", "op", "const", "args")

    def __init__(self, kind, value=None, op=None, const=None, args=()):
        self.kind = kind  # "num" | "var" | "op"
        self.value = value
        self.op = op
        self.const = const
        self.args = args


def _number(value: float, digits: int | None) -> tuple[str, int]:
    if value == 0.0 and str(value)[0] != "-":
        return "0", _ATOM
    text = repr(value) if digits is None else f"{value:.{digits}g}"
    return text, (_UNARY if text.startswith("-") else _ATOM)


def _build(program: Program) -> _Node:
    zero = _Node("num", 0.0)
    regs = [zero] * 8
    for ins in program.lines:
        a = regs[ins.lhs.index] if ins.lhs.kind == "r" else _Node("var", ins.lhs.index)
        args = (a,)
        if ins.op.arity == 2:
            b = regs[ins.rhs.index] if ins.rhs.kind == "r" else _Node("var", ins.rhs.index)
            args = (a, b)
        if all(x.kind == "num" for x in args):
            vals = [x.value for x in args] + [0.0]
            regs[ins.dest] = _Node("num", ins.const * apply_opcode(ins.op, vals[0], vals[1]))
        else:
            regs[ins.dest] = _Node("op", op=ins.op, const=ins.const, args=args)
    return regs[0]


def _wrap(text: str, prec: int, need: int) -> str:
    return text if prec >= need else f"({text})"


class _Renderer:
    def __init__(self, digits, hoisted=None):
        self.digits = digits
        self.hoisted = {} if hoisted is None else hoisted
        self.memo = {}

    def __call__(self, node: _Node, top: bool = False) -> tuple[str, int]:
        if not top and id(node) in self.hoisted:
            return self.hoisted[id(node)], _ATOM
        key = id(node)
        if key in self.memo:
            return self.memo[key]
        if node.kind == "num":
            out = _number(node.value, self.digits)
        elif node.kind == "var":
            out = f"s{node.value}", _ATOM
        else:
            parts = [self(a) for a in node.args]
            if node.op in _INFIX:
                sym, prec = _INFIX[node.op]
                inner = (f"{_wrap(*parts[0], prec)} {sym} {_wrap(*parts[1], prec + 1)}", prec)
            else:
                inner = (f"{node.op.name.lower()}({', '.join(p[0] for p in parts)})", _ATOM)
            if node.const == 1.0:
                out = inner
            else:
                c, cprec = _number(node.const, self.digits)
                out = (f"{c} * {_wrap(*inner, _UNARY)}", _MUL)
        self.memo[key] = out
        return out


def _inline_length(node: _Node, memo: dict) -> int:
    key = id(node)
    if key not in memo:
        memo[key] = 12 + sum(_inline_length(a, memo) for a in node.args)
    return memo[key]


def render_expression(program: Program, digits: int | None = None, max_length: int = 4000) -> str:
    """Closed-form expression for the program's output.

    Observation inputs render as ``s<k>``, never-written registers as ``0``;
    sub-expressions whose inputs are all constant are folded. With the
    default ``digits=None`` constants are exact (``repr``). When full
    inlining would exceed ``max_length`` characters, shared sub-expressions
    are bound to temporaries: ``t0 = ...; t1 = ...; <expression>``.
    """
    root = _build(program)
    if _inline_length(root, {}) <= max_length:
        return _Renderer(digits)(root)[0]

    uses: dict[int, int] = {}
    nodes: dict[int, _Node] = {}
    post: list[_Node] = []
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            post.append(node)
            continue
        uses[id(node)] = uses.get(id(node), 0) + 1
        if id(node) in nodes:
            continue
        nodes[id(node)] = node
        stack.append((node, True))
        stack.extend((a, False) for a in node.args)
    hoisted: dict[int, str] = {}
    statements = []
    renderer = _Renderer(digits, hoisted)
    for node in post:
        if node is not root and node.kind == "op" and uses[id(node)] > 1:
            name = f"t{len(hoisted)}"
            statements.append(f"{name} = {renderer(node, top=True)[0]}")
            hoisted[id(node)] = name
    statements.append(renderer(root, top=True)[0])
    return "; ".join(statements)


def expression_listing(agent: PrunedAgent, digits: int | None = 6) -> str:
    """One ``p<k> <- expression`` line per program, preceded by a wiring summary."""
    store = agent.store
    lines = []
    for vid in agent.order:
        vertex = store[vid]
        if isinstance(vertex, Team):
            wiring = ", ".join(
                f"{agent.program_labels[(vid, i)]} -> {agent.labels[e.destination]}"
                for i, e in enumerate(vertex.edges))
        else:
            wiring = ", ".join(
                f"{agent.program_labels[(vid, i)]} -> a{e.action_class}"
                for i, e in enumerate(vertex.edges))
        lines.append(f"# {agent.labels[vid]}: {wiring}")
    for vid in agent.order:
        for i, edge in enumerate(store[vid].edges):
            lines.append(f"{agent.program_labels[(vid, i)]} <- "
                         f"{render_expression(edge.program, digits)}")
    return "\n".join(lines) + "\n"


def to_dot(agent: PrunedAgent, name: str = "agent") -> str:
    store = agent.store
    out = [f"digraph {name} {{", "  rankdir=TB;"]
    for vid in agent.order:
        label = agent.labels[vid]
        shape = "box" if isinstance(store[vid], Team) else "ellipse"
        root_mark = ", peripheries=2" if vid == agent.root.vertex else ""
        out.append(f'  {label} [shape={shape}, label="{label}"{root_mark}];')
    for vid in agent.order:
        vertex = store[vid]
        src = agent.labels[vid]
        for i, edge in enumerate(vertex.edges):
            plabel = agent.program_labels[(vid, i)]
            if isinstance(vertex, Team):
                out.append(f'  {src} -> {agent.labels[edge.destination]} [label="{plabel}"];')
            else:
                out.append(f'  {src} -> {src} [label="{plabel}: a{edge.action_class}"];')
    out.append("}")
    return "\n".join(out) + "\n"

import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import N_IN, close, evaluate_text, fig6_store, random_store
from matpg.graph import ActionEdge, ActionVertex, VertexStore, run_agent
from matpg.interpret import expression_listing, prune, render_expression, to_dot
from matpg.lgp import Instruction, Opcode, Operand, Program, execute_program
from matpg.variation import random_program


def line(dest, op, lhs, rhs, const):
    return Instruction(dest, op, Operand.parse(lhs), Operand.parse(rhs), const)


def test_fig6_labels_and_programs():
    store, root, avs, t1 = fig6_store()
    agent = prune(root, store)
    assert agent.labels[root.vertex] == "T0" and agent.labels[t1] == "T1"
    assert [agent.labels[v] for v in agent.action_vertices] == ["A0", "A1", "A2", "A3", "A4"]
    team_programs = [agent.program_labels[(v, i)] for v in agent.teams for i in range(3)]
    assert team_programs == [f"p{k}" for k in range(6)]
    assert len(agent.program_labels) == 12


def test_fig6_dot_counts():
    store, root, _, _ = fig6_store()
    dot = to_dot(prune(root, store))
    nodes = re.findall(r"^\s+(\w+) \[shape=", dot, re.M)
    edges = re.findall(r"^\s+\w+ -> \w+", dot, re.M)
    assert len(nodes) == 7 and len(edges) == 12
    assert dot.count("shape=box") == 2 and dot.count("shape=ellipse") == 5
    assert 'T0 -> A0 [label="p0"]' in dot and 'T0 -> T1 [label="p2"]' in dot
    assert dot == to_dot(prune(root, store))


def test_maple_agent_is_a_star():
    store = VertexStore(N_IN, 3)
    root = store.add_root(ActionVertex(tuple(
        ActionEdge(random_program(np.random.default_rng(c), N_IN, 3), c) for c in (2, 0))))
    agent = prune(root, store)
    assert agent.order == [root.vertex] and agent.teams == []
    dot = to_dot(agent)
    assert 'A0 -> A0 [label="p0: a2"]' in dot and 'A0 -> A0 [label="p1: a0"]' in dot
    listing = expression_listing(agent)
    assert listing.startswith("# A0: p0 -> a2, p1 -> a0\n")


def test_prune_drops_unreachable_vertices():
    store, root, avs, t1 = fig6_store()
    stray = store.add_root(ActionVertex((ActionEdge(random_program(np.random.default_rng(0), N_IN, 2), 0),)))
    agent = prune(root, store)
    assert stray.vertex not in agent.store.vertices
    assert set(agent.store.vertices) == set(avs) | {t1, root.vertex}
    agent.store.check()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_prune_is_idempotent_and_preserves_behaviour(seed):
    rng = np.random.default_rng(seed)
    store = random_store(rng, 5, 5)
    for root in store.roots:
        agent = prune(root, store)
        again = prune(root, agent.store)
        assert again.store == agent.store and again.labels == agent.labels
        assert again.program_labels == agent.program_labels
        for _ in range(100):
            obs = list(rng.normal(size=N_IN) * 5)
            assert np.array_equal(run_agent(root, obs, agent.store), run_agent(root, obs, store),
                                  equal_nan=True)


def test_render_sin_cos_nesting():
    prog = Program([line(1, Opcode.COS, "s18", "s0", 1.0),
                    line(0, Opcode.SIN, "r1", "r1", 1.0)], 19)
    assert render_expression(prog) == "sin(cos(s18))"
    prog = Program([line(1, Opcode.COS, "s18", "s0", 0.064883),
                    line(0, Opcode.SIN, "r1", "r1", 1.0)], 19)
    assert render_expression(prog) == "sin(0.064883 * cos(s18))"


def test_render_folds_initial_registers():
    assert render_expression(Program([line(0, Opcode.ADD, "r1", "r2", 1.0)], 2)) == "0"
    prog = Program([line(1, Opcode.EXP, "r2", "r2", 2.5), line(0, Opcode.MUL, "r1", "s0", 1.0)], 2)
    assert render_expression(prog) == "2.5 * s0"


def test_render_drops_dead_code_and_precedence():
    prog = Program([line(3, Opcode.ADD, "s0", "s1", 1.0),
                    line(2, Opcode.SUB, "s1", "s0", 1.0),
                    line(5, Opcode.LOG, "s1", "s1", 7.0),
                    line(0, Opcode.DIV, "r2", "r3", -2.0)], 2)
    assert render_expression(prog) == "-2.0 * ((s1 - s0) / (s0 + s1))"
    prog = Program([line(1, Opcode.ADD, "s0", "s1", 1.0),
                    line(0, Opcode.SUB, "s0", "r1", 1.0)], 2)
    assert render_expression(prog) == "s0 - (s0 + s1)"


def test_render_digits():
    prog = Program([line(0, Opcode.MAX, "s0", "s1", 0.123456789)], 2)
    assert render_expression(prog, digits=3) == "0.123 * max(s0, s1)"


programs = st.integers(0, 2**32 - 1).map(
    lambda seed: random_program(np.random.default_rng(seed), N_IN,
                                int(np.random.default_rng(seed + 1).integers(1, 30))))


@settings(max_examples=200, deadline=None)
@given(programs, st.integers(0, 2**32 - 1))
def test_rendered_expression_round_trip(prog, seed):
    text = render_expression(prog)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        obs = [float(x) for x in rng.normal(size=N_IN) * 3]
        assert close(evaluate_text(text, obs), execute_program(prog, obs)), text


def test_hoisting_keeps_long_expressions_bounded():
    # each line doubles the inlined tree: r1 <- r1 + r1
    lines = [line(1, Opcode.ADD, "s0", "s1", 1.0)]
    lines += [line(1, Opcode.ADD, "r1", "r1", 0.5) for _ in range(40)]
    lines.append(line(0, Opcode.SIN, "r1", "r1", 1.0))
    prog = Program(lines, 2)
    text = render_expression(prog)
    assert len(text) < 5000 and text.startswith("t0 = ")
    rng = np.random.default_rng(0)
    for _ in range(20):
        obs = list(rng.normal(size=2))
        assert close(evaluate_text(text, obs), execute_program(prog, obs))


def test_listing_covers_every_program():
    store, root, _, _ = fig6_store()
    agent = prune(root, store)
    listing = expression_listing(agent)
    assert listing.splitlines()[0] == "# T0: p0 -> A0, p1 -> A1, p2 -> T1"
    assert sum(l.startswith("p") for l in listing.splitlines()) == 12
    assert listing.splitlines()[-1] == "p11 <- -1"

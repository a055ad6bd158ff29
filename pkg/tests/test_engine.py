"""Worklist-engine tests: the algorithm, orders, budgets, and the ART."""

import random

import pytest

from cmcheck import conditions as C
from cmcheck import domains as D
from cmcheck import engine, lang
from cmcheck import solver as S
from cmcheck.assumptions import CompositeCpa

from helpers import engine_reached_states, random_cfa, reference_reached


def location_run(cfa, order="dfs"):
    return engine_reached_states(cfa, D.LocationCpa(), order=order)


def test_straight_line_reaches_every_location():
    cfa = lang.parse_cfa(
        "vars: x;\ninit: L0;\nL0 -> L1: x := x + 1;\nL1 -> L2: x := x + 1;\n")
    states, _ = location_run(cfa)
    assert sorted(states) == [0, 1, 2]


def test_diamond_covers_second_join_visit():
    cfa = lang.parse_cfa(
        "vars: x;\n"
        "init: L0;\n"
        "L0 -> L1: assume x <= 0;\n"
        "L0 -> L2: assume x > 0;\n"
        "L1 -> L3: x := x + 1;\n"
        "L2 -> L3: x := x - 1;\n")
    states, rs = location_run(cfa)
    # Hand simulation: L0, then both branch targets, then the join once;
    # the second arrival at L3 is covered, not added.
    assert sorted(states) == [0, 1, 2, 3]
    covered = [n for n in rs.nodes if n.covered_by is not None]
    assert len(covered) == 1
    assert covered[0].state == 3


def test_explicit_loop_enumerates_values():
    cfa = lang.parse_program("int x; x := 0; while (x < 3) { x := x + 1; }")
    solver = S.Solver()
    cpa = CompositeCpa(cfa, D.ExplicitDomain(), solver)
    states, _ = engine_reached_states(cfa, cpa)
    head = cfa.edges[1].source
    vals = sorted(s.domain.get("x") for s in states if s.location == head)
    assert vals == [0, 1, 2, 3]


def test_choose_next_orders():
    assert engine.choose_next(["a", "b", "c"], "dfs") == "c"
    assert engine.choose_next(["a", "b", "c"], "bfs") == "a"
    with pytest.raises(ValueError):
        engine.choose_next(["a"], "random")


def test_choose_next_matches_reference_trace():
    rng = random.Random(4)
    ops = [("push", rng.randint(0, 99)) if rng.random() < 0.6 else ("pop", None)
           for _ in range(80)]
    for order in ("dfs", "bfs"):
        items, reference, trace, expected = [], [], [], []
        for kind, value in ops:
            if kind == "push":
                items.append(value)
                reference.append(value)
            elif items:
                trace.append(engine.choose_next(items, order))
                items.pop(-1 if order == "dfs" else 0)
                expected.append(reference.pop(-1 if order == "dfs" else 0))
        assert trace == expected


def test_fuel_budget_is_exact():
    cfa = lang.parse_program("int x; x := 0; while (x >= 0) { x := x + 1; }")
    solver = S.Solver()
    cpa = CompositeCpa(cfa, D.ExplicitDomain(), solver)
    for fuel in (17, 100, 500):
        rs = engine.RunState(cfa, cpa)
        monitor = C.GlobalMonitor(max_fuel=fuel)
        result = engine.run_cpa(rs, monitor=monitor)
        assert result.status == "halted"
        assert monitor.fuel_spent == fuel
        assert rs.waitlist_nodes()  # residual frontier is returned, not dropped


def test_merge_replaces_in_reached_and_waitlist():
    # Two paths reach the same explicit store with different path lengths;
    # the composite merge keeps one state with the max counters.
    cfa = lang.parse_program(
        "int x; int y; havoc y; if (y > 0) { x := 1; x := x + 1; } else { x := 2; } x := 0;")
    solver = S.Solver()
    cpa = CompositeCpa(cfa, D.ExplicitDomain(), solver,
                       condition_components=[C.PathStatsComponent(max_length=50)])
    states, rs = engine_reached_states(cfa, cpa)
    by_key = {}
    for s in states:
        by_key.setdefault((s.location, s.domain), []).append(s)
    for key, group in by_key.items():
        assert len(group) == 1, f"duplicate states for {key}"


def test_art_parent_chain_replays_states():
    rng = random.Random(12)
    solver = S.Solver()
    for _ in range(10):
        cfa = random_cfa(rng, n_vars=2)
        cpa = CompositeCpa(cfa, D.ExplicitDomain(), solver)
        states, rs = engine_reached_states(cfa, cpa)
        for node in rs.reached_nodes():
            if node.parent is None:
                continue
            nodes, edges = node.path_from_root()
            assert nodes[0] is rs.root
            state = rs.root.state
            for e, n in zip(edges, nodes[1:]):
                succs = [s for s, _ in cpa.successors(state, e)]
                assert n.state in succs or any(
                    cpa.covers(n.state, s) and cpa.covers(s, n.state) for s in succs)
                state = n.state


def test_transfer_closure_on_random_programs():
    rng = random.Random(42)
    solver = S.Solver()
    for _ in range(12):
        cfa = random_cfa(rng, n_vars=2)
        cpa = CompositeCpa(cfa, D.ExplicitDomain(), solver)
        states, rs = engine_reached_states(cfa, cpa)
        reached = [n.state for n in rs.reached_nodes()]
        for state in reached:
            if cpa.is_excluded(state):
                continue
            for edge in cfa.edges_from(state.location):
                for succ, _ in cpa.successors(state, edge):
                    assert any(cpa.covers(succ, r) for r in reached), \
                        f"successor of {state} along {edge} escapes the reached set"


def test_engine_matches_reference_location_cpa():
    rng = random.Random(8)
    for _ in range(15):
        cfa = random_cfa(rng)
        states, _ = location_run(cfa)
        ref = reference_reached(cfa, D.LocationCpa())
        assert sorted(states) == sorted(ref)


def test_engine_matches_reference_explicit_composite():
    rng = random.Random(9)
    solver = S.Solver()
    for _ in range(12):
        cfa = random_cfa(rng, n_vars=2)
        cpa = CompositeCpa(cfa, D.ExplicitDomain(), solver)
        states, _ = engine_reached_states(cfa, cpa)
        ref = reference_reached(cfa, cpa)
        proj = sorted((s.location, s.domain.bindings) for s in states)
        proj_ref = sorted((s.location, s.domain.bindings) for s in ref)
        assert proj == proj_ref

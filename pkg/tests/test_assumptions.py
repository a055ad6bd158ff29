"""Assumption machinery: composite CPA, strengthen, psi, the automaton."""

import random

import pytest

from cmcheck import assumptions as A
from cmcheck import conditions as C
from cmcheck import domains as D
from cmcheck import engine, formula as F, lang
from cmcheck import solver as S


@pytest.fixture(scope="module")
def solver():
    return S.Solver()


def an_edge(op="havoc x", src=0, dst=1, eid=0) -> lang.Edge:
    cfa = lang.parse_cfa(f"vars: x, y;\ninit: L{src};\nL{src} -> L{dst}: {op};\n")
    return cfa.edges[0]


# -- assumption component ---------------------------------------------------------

def test_assumption_transfer():
    assert A.assumption_transfer(F.TRUE, an_edge()) == [F.TRUE]
    assert A.assumption_transfer(F.parse_formula("x >= 1"), an_edge()) == [F.TRUE]
    assert A.assumption_transfer(F.FALSE, an_edge()) == []


def test_assumption_merge():
    phi = F.parse_formula("x >= 1")
    assert A.assumption_merge(F.TRUE, phi) == phi
    assert A.assumption_merge(F.FALSE, phi) == F.FALSE
    assert A.assumption_merge(phi, phi) == phi  # idempotent after canonicalization


def test_assumption_stop(solver):
    phi = F.parse_formula("x >= 1")
    assert A.assumption_stop(solver, F.TRUE, [phi])
    assert not A.assumption_stop(solver, phi, [F.TRUE])
    assert A.assumption_stop(solver, phi, [F.parse_formula("x >= 5")])


# -- overflow component -------------------------------------------------------------

def test_overflow_transfer_assignment_bounds():
    bounds = (-(2 ** 31), 2 ** 31 - 1)
    phi = A.overflow_transfer(F.TRUE, an_edge("x := y + 1"), bounds)
    assert phi == F.f_and([
        F.parse_formula(f"x >= {-(2**31)}"),
        F.parse_formula(f"x <= {2**31 - 1}"),
    ])
    assert A.overflow_transfer(F.TRUE, an_edge("assume x < 1"), bounds) == F.TRUE
    a = F.parse_formula("x <= 5")
    b = F.parse_formula("y <= 5")
    assert A.overflow_merge(a, b) == F.f_and([a, b])


# -- strengthen ------------------------------------------------------------------------

def comp_state(**kw):
    base = dict(assumption=F.TRUE, location=1, conds=(), observer=None,
                overflow=None, domain=F.TRUE)
    base.update(kw)
    return A.CompositeState(**base)


def test_strengthen_exceeded_excludes():
    out, label = A.strengthen(comp_state(), exceeded=True, overflow_phi=None,
                              predicate_domain=True)
    assert out.assumption == F.FALSE and label == F.FALSE


def test_strengthen_overflow_feeds_assumption_and_predicate():
    phi = F.parse_formula("x <= 100")
    out, label = A.strengthen(comp_state(), exceeded=False, overflow_phi=phi,
                              predicate_domain=True)
    assert out.assumption == phi and out.domain == phi and label == phi


def test_strengthen_identity():
    s = comp_state()
    out, label = A.strengthen(s, exceeded=False, overflow_phi=F.TRUE,
                              predicate_domain=True)
    assert out == s and label == F.TRUE


# -- composite merge / stop ------------------------------------------------------------

def composite(cfa, solver, **kw):
    return A.CompositeCpa(cfa, kw.pop("domain", D.NoDomain()), solver, **kw)


def test_composite_merge_requires_equal_location_and_domain(solver):
    cfa = lang.parse_program("int x; x := 0;")
    cpa = composite(cfa, solver, domain=D.PredicateDomain(solver, D.Precision()),
                    condition_components=[C.RepeatComponent(5)])
    a = A.CompositeState(F.TRUE, 1, (C.RepeatState(((1, 2),), False),), None, None, F.TRUE)
    b = A.CompositeState(F.parse_formula("x >= 1"), 1,
                         (C.RepeatState(((1, 4),), False),), None, None, F.TRUE)
    merged = cpa.merge(a, b)
    assert merged.assumption == F.parse_formula("x >= 1")
    assert merged.conds[0] == C.RepeatState(((1, 4),), False)
    # differing domain parts do not merge
    c = A.CompositeState(F.TRUE, 1, (C.RepeatState((), False),), None, None,
                         F.parse_formula("x >= 1"))
    assert cpa.merge(c, b) is b


def test_composite_stop_is_conjunction(solver):
    cfa = lang.parse_program("int x; x := 0;")
    cpa = composite(cfa, solver, domain=D.PredicateDomain(solver, D.Precision()))
    strong = A.CompositeState(F.TRUE, 1, (), None, None, F.parse_formula("x >= 5"))
    weak = A.CompositeState(F.TRUE, 1, (), None, None, F.parse_formula("x >= 1"))
    assert cpa.covers(strong, weak)
    assert not cpa.covers(weak, strong)
    elsewhere = A.CompositeState(F.TRUE, 2, (), None, None, F.parse_formula("x >= 1"))
    assert not cpa.covers(strong, elsewhere)
    # a reached state with a stricter assumption covers a weaker one
    stricter = A.CompositeState(F.parse_formula("x >= 9"), 1, (), None, None,
                                F.parse_formula("x >= 1"))
    assert cpa.covers(weak, stricter)
    assert A.composite_stop(cpa, strong, [elsewhere, weak])


# -- post-processing ---------------------------------------------------------------------

def seeded_run(cfa, solver, states):
    """Build a RunState whose reached set is exactly the given states."""
    cpa = composite(cfa, solver, domain=D.PredicateDomain(solver, D.Precision()))
    rs = engine.RunState(cfa, cpa)
    rs.pop_waitlist()  # the synthetic fixture drives everything by hand
    for i, (state, waitlisted) in enumerate(states):
        node = rs.new_reached_node(rs.root, cfa.edges[i % len(cfa.edges)], F.TRUE, state)
        if waitlisted:
            rs.add_to_waitlist(node)
        else:
            rs.remove_from_waitlist(node)
    return rs


FIXTURE_CFA = """
vars: x;
init: L0;
error: L9;
L0 -> L1: x := x + 1;
L1 -> L5: assume x >= 1;
L1 -> L9: assume x < 1;
"""


def test_postprocess_trivial_true(solver):
    cfa = lang.parse_cfa("vars: x;\ninit: L0;\nL0 -> L1: x := 1;\n")
    rs = seeded_run(cfa, solver, [])
    rs.replace_state(rs.root, A.CompositeState(F.TRUE, 0, (), None, None, F.TRUE))
    report = A.postprocess(rs)
    assert report.verdict == "TRUE"
    assert report.psi == F.TRUE


def test_postprocess_three_node_fixture_golden(solver):
    cfa = lang.parse_cfa(FIXTURE_CFA)
    waitlist_state = A.CompositeState(F.TRUE, 5, (), None, None,
                                      F.parse_formula("x >= 1"))
    error_state = A.CompositeState(F.TRUE, 9, (), None, None,
                                   F.parse_formula("x <= 0"))
    settled_state = A.CompositeState(F.parse_formula("x <= 7"), 1, (), None, None,
                                     F.parse_formula("x >= 1"))
    rs = seeded_run(cfa, solver, [
        (waitlist_state, True),
        (error_state, False),
        (settled_state, False),
    ])
    report = A.postprocess(rs)
    assert report.verdict == "CONDITION"
    golden = (
        "# psi\n"
        "(pc = 1) -> ((x <= 0) | (x <= 7))\n"
        "(pc = 5) -> ((x <= 0))\n"
        "(pc = 9) -> ((x >= 1))\n"
    )
    assert A.serialize_condition(report.psi) == golden
    assert A.parse_condition(golden) == report.psi


def test_postprocess_waitlist_clause(solver):
    cfa = lang.parse_cfa(FIXTURE_CFA)
    state = A.CompositeState(F.TRUE, 5, (), None, None, F.parse_formula("x >= 1"))
    rs = seeded_run(cfa, solver, [(state, True)])
    report = A.postprocess(rs)
    clause = F.f_implies(A.pc_equals(5), F.f_not(F.parse_formula("x >= 1")))
    assert clause in (report.psi,) or clause in getattr(report.psi, "args", ())


def test_verdict_true_iff_psi_true(solver):
    cfa = lang.parse_cfa(FIXTURE_CFA)
    state = A.CompositeState(F.FALSE, 1, (), None, None, F.TRUE)
    rs = seeded_run(cfa, solver, [(state, False)])
    report = A.postprocess(rs)
    assert report.verdict == "CONDITION"
    assert report.psi != F.TRUE


# -- automaton -----------------------------------------------------------------------------

def run_program(src_or_cfa, solver, domain=None, **kw):
    from cmcheck import driver

    cfa = src_or_cfa if isinstance(src_or_cfa, lang.Cfa) else lang.parse_program(src_or_cfa)
    cfg = driver.AnalysisConfig(name="t", domain=domain or "explicit", **kw)
    return cfa, driver.run_analysis(cfa, cfg)


def test_fully_verified_program_exports_single_sink():
    cfa, report = run_program("int x; x := 0; assert(x == 0);", None)
    assert report.verdict == "TRUE"
    aut = report.automaton
    assert aut.initial == "T"
    assert aut.transitions == {}
    text = A.serialize_automaton(aut)
    assert "state T T;" in text and "state T init;" in text


def test_automaton_roundtrip_bytes():
    cfa, report = run_program(
        "int x; x := 0; while (x >= 0) { x := x + 1; }", None, fuel=50)
    assert report.verdict == "CONDITION"
    text = A.serialize_automaton(report.automaton)
    again = A.parse_automaton(text)
    assert A.serialize_automaton(again) == text
    A.validate_automaton(again, cfa)


def test_automaton_mismatch_detected():
    cfa, report = run_program("int x; x := 0; while (x >= 0) { x := x + 1; }",
                              None, fuel=50)
    other = lang.parse_program("int x; x := 0;")
    with pytest.raises(A.AutomatonMismatch):
        A.validate_automaton(report.automaton, other)


def test_observer_sink_semantics():
    aut = A.AssumptionAutomaton(
        initial="q0",
        flags={"q0": ("init",), "T": ("T",), "U": ("U",)},
        transitions={("q0", 0): (F.TRUE, "T"), ("q0", 1): (F.TRUE, "q0")},
        edge_count=3,
    )
    cfa = lang.parse_cfa(
        "vars: x;\ninit: L0;\nL0 -> L0: x := x + 1;\nL0 -> L0: x := x + 2;\n"
        "L0 -> L0: x := x + 3;\n")
    obs = A.ObserverComponent(aut, cfa)
    assert obs.step("q0", cfa.edges[0]) is A.PRUNED  # into T: verified, prune
    assert obs.step("q0", cfa.edges[1]) == "q0"
    assert obs.step("q0", cfa.edges[2]) == A.SINK_UNKNOWN  # no match
    assert obs.step("U", cfa.edges[0]) == A.SINK_UNKNOWN  # unrestricted below U


def test_second_run_explores_only_unverified_paths(solver):
    # First run verifies one branch and gives up on the loop; the second
    # run restricted by the automaton must not re-enter the verified branch.
    src = """
    int x; int i;
    havoc x;
    if (x <= 0) {
      x := 0;
    } else {
      i := 0;
      while (i < 1000) { i := i + 1; }
    }
    """
    cfa, report1 = run_program(src, None, fuel=60)
    assert report1.verdict == "CONDITION"
    from cmcheck import driver

    report2 = driver.run_analysis(
        cfa, driver.AnalysisConfig(name="second", domain="explicit", fuel=10_000),
        input_automaton=report1.automaton)
    # Every path explored by the second run stays out of the first run's
    # collapsed-T region: replaying it through the automaton never hits T.
    aut = report1.automaton
    rs2 = report2.run
    for node in rs2.reached_nodes():
        sid = aut.initial
        for e in node.path_from_root()[1]:
            assert sid != A.SINK_VERIFIED
            if sid == A.SINK_UNKNOWN:
                break
            hit = aut.transitions.get((sid, e.id))
            sid = hit[1] if hit else A.SINK_UNKNOWN
        assert sid != A.SINK_VERIFIED


def test_overflow_analysis_reports_condition_with_bounds():
    from cmcheck import driver

    cfa = lang.parse_program("int x; x := 2000000000; x := x + x; assert(x >= 0);")
    report = driver.run_analysis(cfa, driver.AnalysisConfig(
        name="explicit-overflow", domain="explicit", overflow=True))
    # sound only under the generated no-overflow assumptions, never TRUE
    assert report.verdict == "CONDITION"
    text = A.serialize_condition(report.psi)
    assert str(2 ** 31 - 1) in text
    rs = report.run
    assert any(s.overflow is not None for s in
               (n.state for n in rs.reached_nodes()))


def test_overflow_off_by_default():
    from cmcheck import driver

    cfa = lang.parse_program("int x; x := 2000000000; x := x + x; assert(x >= 0);")
    report = driver.run_analysis(cfa, driver.AnalysisConfig(
        name="explicit", domain="explicit"))
    assert report.verdict == "TRUE"  # unbounded integers by default


def test_pf_atom_limit_blocks_bug_confirmation():
    from cmcheck import driver

    cfa = lang.parse_program("int x; havoc x; assert(x >= 1);")
    plain = driver.run_analysis(cfa, driver.AnalysisConfig(
        name="explicit", domain="explicit"))
    assert plain.verdict == "FALSE"
    guarded = driver.run_analysis(cfa, driver.AnalysisConfig(
        name="explicit", domain="explicit", pf_atoms=0))
    assert guarded.verdict == "CONDITION"  # solver never ran, bug unconfirmed


def test_nonlinear_automaton_structure(nonlinear_square_cfa):
    # The condition automaton mirrors the giving-up shape: a straight spine
    # to the unverified assertion, everything else collapsed into T.
    from cmcheck import driver

    report = driver.run_analysis(nonlinear_square_cfa, driver.AnalysisConfig(
        name="predicate", domain="predicate"))
    aut = report.automaton
    named = [s for s in aut.flags if s not in ("T", "U")]
    assert len(named) == 4  # root, two straight-line states, the excluded leaf
    sources = {src for src, _ in aut.transitions}
    leaves = set(named) - sources
    assert len(leaves) == 1  # exactly one give-up state, every match goes to U
    assert sum(1 for (_, _), (_, dst) in aut.transitions.items()
               if dst == "T") >= 1


def test_restriction_completeness_on_small_programs():
    # Union of the first run's non-excluded region and the second run's
    # exploration covers everything an unconditioned run reaches
    # (projection to location x explicit store).
    import random as random_mod

    from cmcheck import driver
    from helpers import random_cfa

    rng = random_mod.Random(4711)
    compared = 0
    for _ in range(12):
        cfa = random_cfa(rng, n_vars=2)
        first = driver.run_analysis(cfa, driver.AnalysisConfig(
            name="first", domain="explicit", repeat_loc=2, fuel=300))
        if first.verdict != "CONDITION":
            continue
        second = driver.run_analysis(cfa, driver.AnalysisConfig(
            name="second", domain="explicit", fuel=20_000),
            input_automaton=first.automaton)
        reference = driver.run_analysis(cfa, driver.AnalysisConfig(
            name="ref", domain="explicit", fuel=20_000))

        def proj(report, only_verified):
            out = set()
            rs = report.run
            for n in rs.reached_nodes():
                s = n.state
                if only_verified and rs.cpa.is_excluded(s):
                    continue
                out.add((s.location, s.domain))
            return out

        union = proj(first, True) | proj(second, False)
        missing = proj(reference, False) - union
        assert not missing, f"states analyzed by neither run: {missing}"
        compared += 1
    assert compared >= 3


def test_condition_and_automaton_agree_on_verified_regions(nonlinear_square_cfa):
    # Locations psi constrains are exactly where the automaton refuses to
    # collapse: the guarded locations all belong to excluded or waitlist
    # states, never to regions routed into T.
    from cmcheck import driver, oracle

    report = driver.run_analysis(nonlinear_square_cfa, driver.AnalysisConfig(
        name="predicate", domain="predicate"))
    by_loc, general = oracle.split_condition_by_location(report.psi)
    assert not general
    rs = report.run
    frontier_locs = {
        rs.cpa.location_of(n.state)
        for n in rs.reached_nodes()
        if rs.cpa.is_excluded(n.state) or n.in_waitlist
    }
    assert set(by_loc) == frontier_locs

"""Assumption tracking, the composite CPA, and condition output.

The composite state is the tuple (assumption, location, condition states,
observer state, overflow state, domain state).  Component transfers run in
lockstep along each CFA edge; the strengthen operator then folds condition
violations and overflow facts into the assumption (and, for predicate
domains, into the abstraction).  A state whose assumption is false is an
excluded leaf: it stays in the reached set for post-processing but is
never expanded.

Post-processing turns a finished run into the condition formula: waitlist
and error-location states contribute ``(pc = l) -> !state``, settled ones
``(pc = l) -> (!state | assumption)``; the exported assumption automaton
encodes the same condition path-sensitively over CFA edges with verified
regions collapsed into the sink T and unverified frontiers falling
through to the sink U.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence

from . import conditions as C
from . import domains as D
from . import engine, formula as F, lang
from . import solver as solver_mod


class AutomatonMismatch(Exception):
    """The input automaton does not belong to the analyzed CFA."""


# ---------------------------------------------------------------------------
# Assumption component (plain formulas)
# ---------------------------------------------------------------------------

def assumption_transfer(state: F.Formula, edge: lang.Edge) -> list[F.Formula]:
    """Successor is always the no-assumption state; false stops the path."""
    if isinstance(state, F.FalseF):
        return []
    return [F.TRUE]


def assumption_merge(a: F.Formula, b: F.Formula) -> F.Formula:
    return F.f_and([a, b])


def assumption_stop(solver: solver_mod.Solver, state: F.Formula,
                    reached: Iterable[F.Formula]) -> bool:
    """Covered iff some reached state carries a stricter assumption."""
    return any(r == state or solver.entails(r, state) for r in reached)


# ---------------------------------------------------------------------------
# Overflow monitoring component
# ---------------------------------------------------------------------------

@dataclass
class OverflowComponent:
    """Emits machine-bound assumptions for assignments."""

    min_value: int = -(2 ** 31)
    max_value: int = 2 ** 31 - 1

    def transfer(self, edge: lang.Edge) -> F.Formula:
        if isinstance(edge.op, lang.Assign):
            v = F.lin_var(edge.op.var)
            lower = F.mk_atom(F.lin_scale(v, -1), F.LE, -self.min_value)
            upper = F.mk_atom(v, F.LE, self.max_value)
            return F.f_and([lower, upper])
        return F.TRUE


def overflow_transfer(state: F.Formula, edge: lang.Edge,
                      bounds: tuple[int, int]) -> F.Formula:
    return OverflowComponent(bounds[0], bounds[1]).transfer(edge)


def overflow_merge(a: F.Formula, b: F.Formula) -> F.Formula:
    return F.f_and([a, b])


# ---------------------------------------------------------------------------
# Composite states and the strengthen operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class CompositeState:
    assumption: F.Formula
    location: int
    conds: tuple
    observer: Optional[str]
    overflow: Optional[F.Formula]
    domain: Any


def strengthen(candidate: CompositeState, exceeded: bool,
               overflow_phi: Optional[F.Formula],
               predicate_domain: bool) -> tuple[CompositeState, F.Formula]:
    """Apply the composite strengthen operator to a fresh successor tuple.

    Returns the adjusted state plus the assumption label for its ART edge:
    false when the path is excluded, the overflow fact when one was
    generated, true otherwise.
    """
    if exceeded:
        return replace(candidate, assumption=F.FALSE), F.FALSE
    if overflow_phi is not None and not isinstance(overflow_phi, F.TrueF):
        domain = candidate.domain
        if predicate_domain:
            domain = F.f_and([domain, overflow_phi])
        strengthened = replace(
            candidate,
            assumption=F.f_and([candidate.assumption, overflow_phi]),
            domain=domain,
        )
        return strengthened, overflow_phi
    return candidate, F.TRUE


class CompositeCpa(engine.Cpa):
    """Assumption x location x conditions x observer x overflow x domain."""

    def __init__(self, cfa: lang.Cfa, domain, solver: solver_mod.Solver,
                 condition_components: Sequence = (),
                 observer: Optional["ObserverComponent"] = None,
                 overflow: Optional[OverflowComponent] = None):
        self.cfa = cfa
        self.domain = domain
        self.solver = solver
        self.condition_components = tuple(condition_components)
        self.observer = observer
        self.overflow = overflow
        self._is_predicate = isinstance(domain, D.PredicateDomain)
        self._is_explicit = isinstance(domain, D.ExplicitDomain)

    # -- Cpa interface -------------------------------------------------------

    def initial_state(self, cfa: lang.Cfa) -> CompositeState:
        return CompositeState(
            assumption=F.TRUE,
            location=cfa.initial,
            conds=tuple(c.initial() for c in self.condition_components),
            observer=self.observer.initial() if self.observer else None,
            overflow=F.TRUE if self.overflow else None,
            domain=self.domain.initial(cfa),
        )

    def location_of(self, state: CompositeState) -> int:
        return state.location

    def is_excluded(self, state: CompositeState) -> bool:
        return isinstance(state.assumption, F.FalseF)

    def successors(self, state: CompositeState, edge: lang.Edge):
        if edge.source != state.location or self.is_excluded(state):
            return []
        obs2 = None
        if self.observer is not None:
            obs2 = self.observer.step(state.observer, edge)
            if obs2 is PRUNED:
                return []
        conds2 = tuple(c.transfer(s, edge)
                       for c, s in zip(self.condition_components, state.conds))
        exceeded = any(c.exceeded(s) for c, s in
                       zip(self.condition_components, conds2))
        overflow_phi = self.overflow.transfer(edge) if self.overflow else None
        try:
            domain_succs = self.domain.transfer(state.domain, edge)
        except D.AbstractionFailure:
            domain_succs = [self.domain.top()]
            exceeded = True  # absorb the failure into an excluding assumption
        out = []
        for d2 in domain_succs:
            candidate = CompositeState(
                assumption=F.TRUE,
                location=edge.target,
                conds=conds2,
                observer=obs2,
                overflow=overflow_phi if self.overflow else None,
                domain=d2,
            )
            strengthened, label = strengthen(candidate, exceeded, overflow_phi,
                                             self._is_predicate)
            out.append((strengthened, label))
        return out

    def excluded_successor(self, state: CompositeState, edge: lang.Edge):
        """Stand-in for a post computation skipped by the busy-edge monitor."""
        if edge.source != state.location or self.is_excluded(state):
            return None
        obs2 = None
        if self.observer is not None:
            obs2 = self.observer.step(state.observer, edge)
            if obs2 is PRUNED:
                return None
        conds2 = tuple(c.transfer(s, edge)
                       for c, s in zip(self.condition_components, state.conds))
        return CompositeState(
            assumption=F.FALSE,
            location=edge.target,
            conds=conds2,
            observer=obs2,
            overflow=F.TRUE if self.overflow else None,
            domain=self.domain.top(),
        )

    def covers(self, state: CompositeState, candidate: CompositeState) -> bool:
        if state.location != candidate.location or state.observer != candidate.observer:
            return False
        if not self.domain.covers(state.domain, candidate.domain):
            return False
        if candidate.assumption == state.assumption:
            return True
        return self.solver.entails(candidate.assumption, state.assumption)

    def merge_key(self, state: CompositeState):
        return (state.location, state.observer, state.domain)

    def merge(self, new_state: CompositeState, old_state: CompositeState) -> CompositeState:
        assumption = assumption_merge(new_state.assumption, old_state.assumption)
        conds = tuple(c.merge(a, b) for c, a, b in
                      zip(self.condition_components, new_state.conds, old_state.conds))
        overflow = old_state.overflow
        if self.overflow is not None:
            overflow = overflow_merge(new_state.overflow, old_state.overflow)
        merged = CompositeState(
            assumption=assumption,
            location=old_state.location,
            conds=conds,
            observer=old_state.observer,
            overflow=overflow,
            domain=old_state.domain,
        )
        return old_state if merged == old_state else merged

    def group_key(self, state: CompositeState):
        if self._is_explicit:
            return (state.location, state.observer, state.domain)
        return (state.location, state.observer)

    def stop_candidates(self, state: CompositeState, rs: engine.RunState):
        if self._is_explicit:
            for weaker in self.domain.cover_keys(state.domain):
                bucket = rs.group_bucket((state.location, state.observer, weaker))
                yield from bucket
        else:
            yield from rs.group_bucket((state.location, state.observer))

    def render_domain(self, state: CompositeState) -> F.Formula:
        return self.domain.render(state.domain)


def composite_stop(cpa: CompositeCpa, state: CompositeState,
                   reached: Iterable[CompositeState]) -> bool:
    """Conjunction of the component coverage checks, one witness state."""
    return any(cpa.covers(state, r) for r in reached)


# ---------------------------------------------------------------------------
# Assumption automaton
# ---------------------------------------------------------------------------

SINK_VERIFIED = "T"
SINK_UNKNOWN = "U"
PRUNED = object()  # observer step result inside a verified region


@dataclass
class AssumptionAutomaton:
    initial: str
    flags: dict[str, tuple[str, ...]]  # state id -> markers among init/T/U
    transitions: dict[tuple[str, int], tuple[F.Formula, str]]
    edge_count: int

    def states(self) -> list[str]:
        return sorted(self.flags)


def serialize_automaton(aut: AssumptionAutomaton) -> str:
    lines = [f"# edges: {aut.edge_count}"]
    for sid in sorted(aut.flags):
        for flag in sorted(aut.flags[sid]):
            lines.append(f"state {sid} {flag};")
    for (src, edge_id), (assumption, dst) in sorted(
            aut.transitions.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        lines.append(
            f"trans {src} edge={edge_id} assume={F.render_formula(assumption)} -> {dst};")
    return "\n".join(lines) + "\n"


def parse_automaton(text: str) -> AssumptionAutomaton:
    edge_count = -1
    flags: dict[str, set[str]] = {}
    transitions: dict[tuple[str, int], tuple[F.Formula, str]] = {}
    initial = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("edges:"):
                edge_count = int(body.split(":", 1)[1])
            continue
        if not line.endswith(";"):
            raise ValueError(f"missing ';' in automaton line: {raw!r}")
        line = line[:-1].strip()
        if line.startswith("state "):
            _, sid, flag = line.split()
            flags.setdefault(sid, set()).add(flag)
            if flag == "init":
                initial = sid
            continue
        if line.startswith("trans "):
            head, dst = line.rsplit(" -> ", 1)
            head = head[len("trans "):]
            src, rest = head.split(" edge=", 1)
            edge_text, assume_text = rest.split(" assume=", 1)
            key = (src.strip(), int(edge_text))
            if key in transitions:
                raise ValueError(f"duplicate transition for {key}")
            transitions[key] = (F.parse_formula(assume_text.strip()), dst.strip())
            continue
        raise ValueError(f"unrecognized automaton line: {raw!r}")
    if initial is None:
        raise ValueError("automaton has no init state")
    if edge_count < 0:
        raise ValueError("automaton has no '# edges:' header")
    return AssumptionAutomaton(
        initial=initial,
        flags={sid: tuple(sorted(fl)) for sid, fl in flags.items()},
        transitions=transitions,
        edge_count=edge_count,
    )


def validate_automaton(aut: AssumptionAutomaton, cfa: lang.Cfa) -> None:
    if aut.edge_count != len(cfa.edges):
        raise AutomatonMismatch(
            f"automaton was built for a CFA with {aut.edge_count} edges, "
            f"this one has {len(cfa.edges)}")
    for (_, edge_id) in aut.transitions:
        if not 0 <= edge_id < len(cfa.edges):
            raise AutomatonMismatch(f"transition references unknown edge {edge_id}")


class ObserverComponent:
    """Runs an input automaton in parallel with the analysis.

    Entering T prunes the path (already verified by the producing run);
    unmatched edges fall into U, below which exploration is unrestricted.
    """

    def __init__(self, automaton: AssumptionAutomaton, cfa: lang.Cfa):
        validate_automaton(automaton, cfa)
        self.automaton = automaton

    def initial(self) -> str:
        return self.automaton.initial

    def step(self, sid: str, edge: lang.Edge):
        if sid == SINK_VERIFIED:
            return PRUNED
        if sid == SINK_UNKNOWN:
            return SINK_UNKNOWN
        hit = self.automaton.transitions.get((sid, edge.id))
        if hit is None:
            return SINK_UNKNOWN
        dst = hit[1]
        return PRUNED if dst == SINK_VERIFIED else dst


def observer_transfer(observer: ObserverComponent, sid: str, edge: lang.Edge):
    """Sink-aware single step; PRUNED stands for entering T."""
    return observer.step(sid, edge)


def export_automaton(rs: engine.RunState) -> AssumptionAutomaton:
    """Collapse the ART into an assumption automaton.

    A node is retained iff an excluded node, a waitlist member, or a
    non-true edge assumption is reachable below it (through covered-node
    redirects); everything else is verified and collapses into T.
    Fully-expanded retained nodes get explicit T-transitions for edges
    whose successor computation produced nothing (proven infeasible).
    """
    cpa = rs.cpa
    alive = [n for n in rs.nodes if not n.removed]
    waitlisted = {id(n) for n in rs.waitlist_nodes()}

    def interesting(node: engine.ArtNode) -> bool:
        if not isinstance(node.assumption, F.TrueF):
            return True
        if node.covered_by is not None:
            return False
        return cpa.is_excluded(node.state) or id(node) in waitlisted

    preds: dict[int, list[engine.ArtNode]] = {}
    for n in alive:
        for c in n.children:
            if not c.removed:
                preds.setdefault(id(c), []).append(n)
        if n.covered_by is not None and not n.covered_by.removed:
            preds.setdefault(id(n.covered_by), []).append(n)

    retained: set[int] = set()
    stack = [n for n in alive if interesting(n)]
    while stack:
        n = stack.pop()
        if id(n) in retained:
            continue
        retained.add(id(n))
        stack.extend(preds.get(id(n), ()))

    named = [n for n in alive if id(n) in retained and n.covered_by is None]
    named.sort(key=lambda n: n.nid)
    qid = {id(n): f"q{i}" for i, n in enumerate(named)}

    def resolve(node: engine.ArtNode) -> str:
        target = node.covered_by if node.covered_by is not None else node
        return qid.get(id(target), SINK_VERIFIED)

    flags: dict[str, set[str]] = {SINK_VERIFIED: {"T"}, SINK_UNKNOWN: {"U"}}
    transitions: dict[tuple[str, int], tuple[F.Formula, str]] = {}
    for n in named:
        sid = qid[id(n)]
        flags.setdefault(sid, set())
        if cpa.is_excluded(n.state) or id(n) in waitlisted:
            continue  # all matches fall through to U at run time
        by_edge: dict[int, list[engine.ArtNode]] = {}
        for c in n.children:
            if not c.removed:
                by_edge.setdefault(c.edge.id, []).append(c)
        for edge_id, kids in by_edge.items():
            # Re-expansions (after counter merges) can record several
            # attempts along one edge; fold them into one deterministic
            # transition.  The genuine successor's target wins, covered
            # duplicates redirect there anyway, and the labels conjoin.
            main = next((c for c in kids if c.covered_by is None), None)
            if main is None:
                main = min(kids, key=lambda c: c.covered_by.nid)
            label = F.f_and(c.assumption for c in kids)
            transitions[(sid, edge_id)] = (label, resolve(main))
        loc = cpa.location_of(n.state)
        for edge in rs.cfa.edges_from(loc):
            if edge.id not in by_edge:
                transitions[(sid, edge.id)] = (F.TRUE, SINK_VERIFIED)

    init_id = resolve(rs.root)
    flags.setdefault(init_id, set()).add("init")
    return AssumptionAutomaton(
        initial=init_id,
        flags={sid: tuple(sorted(fl)) for sid, fl in flags.items()},
        transitions=transitions,
        edge_count=len(rs.cfa.edges),
    )


# ---------------------------------------------------------------------------
# Post-processing into the condition report
# ---------------------------------------------------------------------------

@dataclass
class ConditionReport:
    verdict: str  # 'TRUE' | 'FALSE' | 'CONDITION'
    psi: F.Formula
    automaton: AssumptionAutomaton
    stats: dict = field(default_factory=dict)
    witness: Optional[list] = None
    error_description: Optional[str] = None
    run: Optional[engine.RunState] = None  # the ART, kept as proof artifact


def pc_equals(loc: int) -> F.Formula:
    return F.mk_atom(F.lin_var("pc"), F.EQ, loc)


def postprocess(rs: engine.RunState, confirmed_witness: Optional[list] = None,
                error_description: Optional[str] = None,
                stats: Optional[dict] = None) -> ConditionReport:
    """Assemble the final invariant and verdict from a finished run."""
    cpa = rs.cpa
    cfa = rs.cfa
    waitlisted = {id(n) for n in rs.waitlist_nodes()}
    clauses = []
    all_assumptions_true = True
    error_reached = False
    for node in rs.reached_nodes():
        state = node.state
        loc = cpa.location_of(state)
        frontier = id(node) in waitlisted or loc in cfa.error_locations
        if loc in cfa.error_locations:
            error_reached = True
        e_a = state.assumption
        if not isinstance(e_a, F.TrueF):
            all_assumptions_true = False
        elif not frontier:
            continue  # settled, no assumption: the clause is trivially true
        rendered = cpa.render_domain(state)
        if frontier:
            clause = F.f_implies(pc_equals(loc), F.f_not(rendered))
        else:
            clause = F.f_implies(pc_equals(loc), F.f_or([F.f_not(rendered), e_a]))
        if not isinstance(clause, F.TrueF):
            clauses.append(clause)
    psi = F.f_and(clauses)
    if confirmed_witness is not None:
        verdict = "FALSE"
    elif not waitlisted and not error_reached and all_assumptions_true:
        verdict = "TRUE"
    else:
        verdict = "CONDITION"
    if verdict == "TRUE":
        assert isinstance(psi, F.TrueF), "verdict TRUE must carry psi = true"
    return ConditionReport(
        verdict=verdict,
        psi=psi,
        automaton=export_automaton(rs),
        stats=dict(stats or {}),
        witness=confirmed_witness,
        error_description=error_description,
        run=rs,
    )


def serialize_condition(psi: F.Formula) -> str:
    """Assumption-formula file: '# psi' header, one implication per line.

    Clauses are ordered by the location their pc-guard names, then text.
    """
    lines = ["# psi"]
    clauses = list(psi.args) if isinstance(psi, F.AndF) else [psi]
    lines.extend(text for _, text in sorted(_render_clause(c) for c in clauses))
    return "\n".join(lines) + "\n"


def _render_clause(clause: F.Formula) -> tuple:
    """(sort key, text) for one psi clause."""
    if isinstance(clause, F.OrF):
        guard = None
        rest = []
        for arg in clause.args:
            if guard is None and isinstance(arg, F.NotF) and isinstance(arg.arg, F.AtomF):
                a = arg.arg.atom
                if (a.op == F.EQ and len(a.terms) == 1
                        and isinstance(a.terms[0][0], F.VarTerm)
                        and a.terms[0][0].name == "pc" and a.terms[0][1] == 1):
                    guard = a
                    continue
            rest.append(arg)
        if guard is not None:
            body = F.f_or(rest)
            return (guard.bound, f"({F.render_atom(guard)}) -> ({F.render_formula(body)})")
    return (-1, F.render_formula(clause))


def parse_condition(text: str) -> F.Formula:
    clauses = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        clauses.append(F.parse_formula(line))
    return F.f_and(clauses)

"""Three-valued satisfiability, entailment, and SSA path formulas.

The decision procedure is deliberately self-contained: normalize to DNF
(bounded), then per conjunct run integer Fourier-Motzkin elimination
(combination results are gcd-reduced with floor-tightened bounds) and, if
rationally satisfiable, search a bounded integer box for a witness.

Unsat answers are sound; Sat is only reported with a concrete integer
witness; everything else is MaybeSat.  Opaque product terms are free
dimensions here, which keeps all answers conservative for nonlinear
programs.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Iterable, Optional, Sequence

from . import _kernels as kernels
from . import formula as F
from . import lang

UNSAT = "unsat"
SAT = "sat"
MAYBE = "maybe"


@dataclass(frozen=True)
class SatResult:
    kind: str
    witness: Optional[dict] = None  # Term -> int, only for SAT


@dataclass(frozen=True)
class SolverConfig:
    dnf_clause_bound: int = 4096
    witness_box: int = 32
    fm_constraint_bound: int = 4000


def _floor_div(a: int, b: int) -> int:
    return a // b  # Python floor division


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


# ---------------------------------------------------------------------------
# DNF
# ---------------------------------------------------------------------------

def _neq_clauses(atom: F.Atom) -> tuple[F.Atom, F.Atom]:
    """not(t = k)  ->  (t <= k-1) or (-t <= -k-1), both canonical atoms."""
    low = F.mk_atom(F.LinExpr(atom.terms, 0), F.LE, atom.bound - 1)
    neg = tuple((t, -c) for t, c in atom.terms)
    high = F.mk_atom(F.LinExpr(neg, 0), F.LE, -atom.bound - 1)
    assert isinstance(low, F.AtomF) and isinstance(high, F.AtomF)
    return low.atom, high.atom


def to_dnf(f: F.Formula, clause_bound: int) -> list[tuple[F.Atom, ...]]:
    """Disjunctive normal form as atom tuples; raises FormulaTooLarge."""

    def walk(g: F.Formula) -> list[tuple[F.Atom, ...]]:
        if isinstance(g, F.TrueF):
            return [()]
        if isinstance(g, F.FalseF):
            return []
        if isinstance(g, F.AtomF):
            return [(g.atom,)]
        if isinstance(g, F.NotF):
            inner = g.arg
            if isinstance(inner, F.AtomF) and inner.atom.op == F.EQ:
                a, b = _neq_clauses(inner.atom)
                return [(a,), (b,)]
            return walk(F.f_not(inner))
        if isinstance(g, F.OrF):
            out: list[tuple[F.Atom, ...]] = []
            for a in g.args:
                out.extend(walk(a))
                if len(out) > clause_bound:
                    raise F.FormulaTooLarge(f"DNF exceeds {clause_bound} clauses")
            return out
        assert isinstance(g, F.AndF)
        acc: list[tuple[F.Atom, ...]] = [()]
        for a in g.args:
            sub = walk(a)
            nxt: list[tuple[F.Atom, ...]] = []
            for left in acc:
                for right in sub:
                    merged = dict.fromkeys(left)
                    merged.update(dict.fromkeys(right))
                    nxt.append(tuple(merged))
                    if len(nxt) > clause_bound:
                        raise F.FormulaTooLarge(f"DNF exceeds {clause_bound} clauses")
            acc = nxt
        return acc

    return walk(f)


# ---------------------------------------------------------------------------
# Conjunct decision: interval propagation + Fourier-Motzkin + box witness
# ---------------------------------------------------------------------------

def _as_le_constraints(atoms: Sequence[F.Atom]) -> list[tuple[dict, int]]:
    """Each constraint means sum(coeff * term) <= bound; equalities split."""
    cs: list[tuple[dict, int]] = []
    for a in atoms:
        coeffs = {t: c for t, c in a.terms}
        cs.append((coeffs, a.bound))
        if a.op == F.EQ:
            cs.append(({t: -c for t, c in coeffs.items()}, -a.bound))
    return cs


def _fm_unsat(atoms: Sequence[F.Atom], max_constraints: int) -> Optional[bool]:
    """True = integer-unsat proven, False = rationally satisfiable, None = gave up."""
    constraints = _as_le_constraints(atoms)
    live: list[tuple[dict, int]] = []
    for coeffs, bound in constraints:
        if not coeffs:
            if bound < 0:
                return True
        else:
            live.append((coeffs, bound))

    while live:
        terms = {}
        for coeffs, _ in live:
            for t in coeffs:
                terms.setdefault(F.term_key(t), t)
        if not terms:
            break
        # Pick the cheapest variable to eliminate, deterministically.
        best = None
        for key, t in sorted(terms.items()):
            ups = sum(1 for c, _ in live if c.get(t, 0) > 0)
            downs = sum(1 for c, _ in live if c.get(t, 0) < 0)
            cost = ups * downs
            if best is None or cost < best[0]:
                best = (cost, key, t)
        _, _, var = best
        uppers = [(c, b) for c, b in live if c.get(var, 0) > 0]
        lowers = [(c, b) for c, b in live if c.get(var, 0) < 0]
        rest = [(c, b) for c, b in live if c.get(var, 0) == 0]
        nxt = rest
        for uc, ub in uppers:
            a = uc[var]
            for lc, lb in lowers:
                b = -lc[var]
                comb: dict = {}
                for t, c in uc.items():
                    if t != var:
                        comb[t] = comb.get(t, 0) + b * c
                for t, c in lc.items():
                    if t != var:
                        comb[t] = comb.get(t, 0) + a * c
                comb = {t: c for t, c in comb.items() if c}
                bound = b * ub + a * lb
                if not comb:
                    if bound < 0:
                        return True
                    continue
                g = 0
                for c in comb.values():
                    g = gcd(g, abs(c))
                if g > 1:
                    comb = {t: c // g for t, c in comb.items()}
                    bound = _floor_div(bound, g)  # integer tightening on derived bounds
                nxt.append((comb, bound))
                if len(nxt) > max_constraints:
                    return None
        live = nxt
    return False


def _propagate_box(atoms: Sequence[F.Atom], terms: Sequence, width: int):
    """Per-term integer bounds within [-width, width]; None when a range empties."""
    lows = {F.term_key(t): -width for t in terms}
    highs = {F.term_key(t): width for t in terms}
    constraints = _as_le_constraints(atoms)
    for _ in range(4):
        changed = False
        for coeffs, bound in constraints:
            for tj, cj in coeffs.items():
                kj = F.term_key(tj)
                rest_min = 0
                for ti, ci in coeffs.items():
                    if ti is tj:
                        continue
                    ki = F.term_key(ti)
                    rest_min += min(ci * lows[ki], ci * highs[ki])
                slack = bound - rest_min
                if cj > 0:
                    hi = _floor_div(slack, cj)
                    if hi < highs[kj]:
                        highs[kj] = hi
                        changed = True
                else:
                    lo = _ceil_div(slack, cj)
                    if lo > lows[kj]:
                        lows[kj] = lo
                        changed = True
        if not changed:
            break
    for t in terms:
        k = F.term_key(t)
        if lows[k] > highs[k]:
            return None
    return lows, highs


class Solver:
    """Decision procedures with per-instance result caches."""

    def __init__(self, config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self._sat_cache: dict[F.Formula, SatResult] = {}
        self._entails_cache: dict[tuple[F.Formula, F.Formula], bool] = {}
        self.stats = {"sat_queries": 0, "witness_searches": 0}

    # -- satisfiability ----------------------------------------------------

    def check_sat(self, f: F.Formula) -> SatResult:
        cached = self._sat_cache.get(f)
        if cached is not None:
            return cached
        self.stats["sat_queries"] += 1
        if isinstance(f, F.TrueF):
            r = SatResult(SAT, {})
        elif isinstance(f, F.FalseF):
            r = SatResult(UNSAT)
        else:
            r = self._check_sat_uncached(f)
        self._sat_cache[f] = r
        return r

    def _check_sat_uncached(self, f: F.Formula) -> SatResult:
        clauses = to_dnf(f, self.config.dnf_clause_bound)
        saw_maybe = False
        for clause in clauses:
            r = self._clause_sat(clause)
            if r.kind == SAT:
                return r
            if r.kind == MAYBE:
                saw_maybe = True
        return SatResult(MAYBE) if saw_maybe else SatResult(UNSAT)

    def _clause_sat(self, atoms: tuple[F.Atom, ...]) -> SatResult:
        if not atoms:
            return SatResult(SAT, {})
        fm = _fm_unsat(atoms, self.config.fm_constraint_bound)
        if fm is True:
            return SatResult(UNSAT)
        terms = []
        seen = set()
        for a in atoms:
            for t, _ in a.terms:
                k = F.term_key(t)
                if k not in seen:
                    seen.add(k)
                    terms.append(t)
        box = _propagate_box(atoms, terms, self.config.witness_box)
        if box is None:
            # Empty integer box: rationally satisfiable but no integer
            # witness in range (divisibility gap); stay conservative.
            return SatResult(MAYBE)
        lows, highs = box
        # Most-constrained dimension first keeps the search shallow.
        order = sorted(terms, key=lambda t: (highs[F.term_key(t)] - lows[F.term_key(t)], F.term_key(t)))
        index = {F.term_key(t): i for i, t in enumerate(order)}
        enc = []
        for a in atoms:
            enc.append((0 if a.op == F.LE else 1, a.bound,
                        tuple((index[F.term_key(t)], c) for t, c in a.terms)))
        self.stats["witness_searches"] += 1
        point = kernels.find_conjunction_witness(
            len(order),
            [lows[F.term_key(t)] for t in order],
            [highs[F.term_key(t)] for t in order],
            enc,
        )
        if point is None:
            return SatResult(MAYBE)
        return SatResult(SAT, {t: point[i] for i, t in enumerate(order)})

    def is_satisfiable(self, f: F.Formula) -> str:
        """Kind only: 'unsat' | 'sat' | 'maybe'.  Raises FormulaTooLarge."""
        return self.check_sat(f).kind

    # -- entailment ---------------------------------------------------------

    def entails(self, f: F.Formula, g: F.Formula) -> bool:
        """Yes (True) iff f & !g is provably unsat; Unknown (False) otherwise."""
        key = (f, g)
        cached = self._entails_cache.get(key)
        if cached is not None:
            return cached
        try:
            r = self.check_sat(F.f_and([f, F.f_not(g)])).kind == UNSAT
        except F.FormulaTooLarge:
            r = False
        self._entails_cache[key] = r
        return r


# ---------------------------------------------------------------------------
# SSA path formulas
# ---------------------------------------------------------------------------

def ssa_name(var: str, idx: int) -> str:
    return f"{var}@{idx}"


@dataclass
class PathFormula:
    """Strongest-postcondition encoding of an edge sequence."""

    constraints: tuple[F.Formula, ...]
    ssa: dict[str, int]

    @property
    def formula(self) -> F.Formula:
        return F.f_and(self.constraints)

    def atom_count(self) -> int:
        return sum(F.atom_count(c) for c in self.constraints)


def extend_path_formula(pf: PathFormula, edge: lang.Edge) -> PathFormula:
    idx = dict(pf.ssa)

    def var_fn(name: str) -> F.LinExpr:
        return F.lin_var(ssa_name(name, idx.get(name, 0)))

    op = edge.op
    constraints = pf.constraints
    if isinstance(op, lang.Assign):
        rhs = F.linearize(op.expr, var_fn)
        k = idx.get(op.var, 0) + 1
        idx[op.var] = k
        lhs = F.lin_var(ssa_name(op.var, k))
        constraints = constraints + (F.mk_atom(F.lin_sub(lhs, rhs), F.EQ, 0),)
    elif isinstance(op, lang.Assume):
        constraints = constraints + (F.bexpr_to_formula(op.expr, var_fn),)
    else:
        assert isinstance(op, lang.Havoc)
        idx[op.var] = idx.get(op.var, 0) + 1
    return PathFormula(constraints, idx)


def build_path_formula(edges: Iterable[lang.Edge]) -> PathFormula:
    pf = PathFormula((), {})
    for e in edges:
        pf = extend_path_formula(pf, e)
    return pf


def atom_count(f) -> int:
    """Atom occurrences in a Formula or PathFormula."""
    if isinstance(f, PathFormula):
        return f.atom_count()
    return F.atom_count(f)


# ---------------------------------------------------------------------------
# Compilation to the box-evaluation kernels (concrete product semantics)
# ---------------------------------------------------------------------------

def compile_box_formula(f: F.Formula, var_names: Sequence[str]):
    """Encode a formula for kernel box evaluation over the given variables.

    Unlike the satisfiability procedure, products are evaluated exactly
    here (derived values), which is what brute-force oracles need.
    """
    var_index = {name: i for i, name in enumerate(var_names)}
    derived: list = []
    derived_index: dict = {}

    def lin_encode(terms: tuple, const: int):
        enc = []
        for t, c in terms:
            enc.append((term_dim(t), c))
        return (const, tuple(enc))

    def term_dim(t: F.Term) -> int:
        if isinstance(t, F.VarTerm):
            return var_index[t.name]
        key = F.term_key(t)
        if key in derived_index:
            return derived_index[key]
        left = lin_encode(t.left.terms, t.left.const)
        right = lin_encode(t.right.terms, t.right.const)
        derived.append((left, right))
        dim = len(var_names) + len(derived) - 1
        derived_index[key] = dim
        return dim

    atoms: list = []
    atom_index: dict = {}
    code: list[int] = []

    def emit(g: F.Formula):
        if isinstance(g, F.TrueF):
            code.append(-4)
        elif isinstance(g, F.FalseF):
            code.append(-5)
        elif isinstance(g, F.AtomF):
            key = F.atom_key(g.atom)
            if key not in atom_index:
                atom_index[key] = len(atoms)
                atoms.append((0 if g.atom.op == F.LE else 1, g.atom.bound,
                              lin_encode(g.atom.terms, 0)))
            code.append(atom_index[key])
        elif isinstance(g, F.NotF):
            emit(g.arg)
            code.append(-3)
        elif isinstance(g, F.AndF):
            emit(g.args[0])
            for a in g.args[1:]:
                emit(a)
                code.append(-1)
        else:
            assert isinstance(g, F.OrF)
            emit(g.args[0])
            for a in g.args[1:]:
                emit(a)
                code.append(-2)

    emit(f)
    return (len(var_names), tuple(derived), tuple(atoms), tuple(code))


def box_model(f: F.Formula, var_names: Sequence[str], lo: int, hi: int):
    """First integer model of f in [lo, hi]^n under exact product semantics."""
    prog = compile_box_formula(f, var_names)
    n = len(var_names)
    point = kernels.box_find_model(prog, [lo] * n, [hi] * n)
    if point is None:
        return None
    return dict(zip(var_names, point))


def box_equivalent(f: F.Formula, g: F.Formula, var_names: Sequence[str], lo: int, hi: int):
    """None if f and g agree on every box point, else a differing point."""
    pf = compile_box_formula(f, var_names)
    pg = compile_box_formula(g, var_names)
    n = len(var_names)
    point = kernels.box_find_disagreement(pf, pg, [lo] * n, [hi] * n)
    if point is None:
        return None
    return dict(zip(var_names, point))

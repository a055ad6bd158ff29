"""Pure-Python kernels: integer box search and formula-over-box evaluation.

Mirror of the compiled extension in ``_core.pyx``; both operate on the
same flat encodings and must visit points in identical lexicographic
order so results are backend-independent.

Encodings:
  conjunction atoms: ``(op, bound, ((dim, coeff), ...))`` with op 0 for
  ``<=`` and 1 for ``=``; a point satisfies the atom when the dot product
  compares against ``bound``.

  formula program: ``(n_dims, derived, atoms, code)``.  ``derived`` holds
  opaque-product definitions ``(lin_a, lin_b)`` evaluated as exact integer
  products; each ``lin`` is ``(const, ((idx, coeff), ...))`` over earlier
  values.  ``code`` is a postfix program: index >= 0 pushes an atom's
  truth value, -1 and, -2 or, -3 not, -4 true, -5 false.
"""

from __future__ import annotations


def find_conjunction_witness(n_dims, lows, highs, atoms):
    """First point of the box satisfying every atom, or None.

    Atoms are bucketed by their highest dimension so partial assignments
    prune early; iteration is lexicographic in dimension order.
    """
    for lo, hi in zip(lows, highs):
        if lo > hi:
            return None
    if n_dims == 0:
        for op, bound, terms in atoms:
            if op == 0:
                if not (0 <= bound):
                    return None
            elif bound != 0:
                return None
        return ()

    buckets: list[list] = [[] for _ in range(n_dims)]
    for op, bound, terms in atoms:
        if not terms:
            ok = (0 <= bound) if op == 0 else (bound == 0)
            if not ok:
                return None
            continue
        top = max(d for d, _ in terms)
        buckets[top].append((op, bound, terms))

    vals = [0] * n_dims
    level = 0
    vals[0] = lows[0]
    while True:
        ok = True
        for op, bound, terms in buckets[level]:
            s = 0
            for d, c in terms:
                s += c * vals[d]
            if (s > bound) if op == 0 else (s != bound):
                ok = False
                break
        if ok:
            if level == n_dims - 1:
                return tuple(vals)
            level += 1
            vals[level] = lows[level]
            continue
        while vals[level] >= highs[level]:
            level -= 1
            if level < 0:
                return None
        vals[level] += 1
    return None


def _eval_point(prog, vals):
    n_dims, derived, atoms, code = prog
    values = list(vals)
    for lin_a, lin_b in derived:
        ca, ta = lin_a
        a = ca
        for idx, coeff in ta:
            a += coeff * values[idx]
        cb, tb = lin_b
        b = cb
        for idx, coeff in tb:
            b += coeff * values[idx]
        values.append(a * b)
    truths = []
    for op, bound, (const, terms) in atoms:
        s = const
        for idx, coeff in terms:
            s += coeff * values[idx]
        truths.append(s <= bound if op == 0 else s == bound)
    stack = []
    for instr in code:
        if instr >= 0:
            stack.append(truths[instr])
        elif instr == -1:
            b = stack.pop()
            stack[-1] = stack[-1] and b
        elif instr == -2:
            b = stack.pop()
            stack[-1] = stack[-1] or b
        elif instr == -3:
            stack[-1] = not stack[-1]
        elif instr == -4:
            stack.append(True)
        else:
            stack.append(False)
    return stack[-1]


def _box_points(n_dims, lows, highs):
    if n_dims == 0:
        yield ()
        return
    vals = list(lows)
    while True:
        yield tuple(vals)
        i = n_dims - 1
        while i >= 0 and vals[i] >= highs[i]:
            vals[i] = lows[i]
            i -= 1
        if i < 0:
            return
        vals[i] += 1


def box_find_model(prog, lows, highs):
    """First point of the box satisfying the compiled formula, or None."""
    n_dims = prog[0]
    for lo, hi in zip(lows, highs):
        if lo > hi:
            return None
    for pt in _box_points(n_dims, lows, highs):
        if _eval_point(prog, pt):
            return pt
    return None


def box_find_disagreement(prog_a, prog_b, lows, highs):
    """First point where the two compiled formulas differ, or None."""
    n_dims = prog_a[0]
    for lo, hi in zip(lows, highs):
        if lo > hi:
            return None
    for pt in _box_points(n_dims, lows, highs):
        if _eval_point(prog_a, pt) != _eval_point(prog_b, pt):
            return pt
    return None

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: integer box search and formula-over-box evaluation.

Semantics and iteration order match ``pure.py`` exactly; see that module
for the encodings.  Values are 64-bit; callers keep coefficients and box
widths small enough that dot products and opaque-product evaluations fit.
"""

from libc.stdlib cimport malloc, free


cdef struct _Atoms:
    int n_atoms
    int *op
    long long *bound
    int *off        # n_atoms + 1 offsets into the term arrays
    int *term_dim
    long long *term_coeff


cdef int _fill_atoms(object atoms, _Atoms *out) except -1:
    cdef int n = len(atoms)
    cdef int total = 0
    cdef int i, j, k
    for i in range(n):
        total += len(atoms[i][2])
    out.n_atoms = n
    out.op = <int *> malloc(n * sizeof(int))
    out.bound = <long long *> malloc(n * sizeof(long long))
    out.off = <int *> malloc((n + 1) * sizeof(int))
    out.term_dim = <int *> malloc((total if total else 1) * sizeof(int))
    out.term_coeff = <long long *> malloc((total if total else 1) * sizeof(long long))
    k = 0
    for i in range(n):
        out.op[i] = atoms[i][0]
        out.bound[i] = atoms[i][1]
        out.off[i] = k
        terms = atoms[i][2]
        for j in range(len(terms)):
            out.term_dim[k] = terms[j][0]
            out.term_coeff[k] = terms[j][1]
            k += 1
    out.off[n] = k
    return 0


cdef void _free_atoms(_Atoms *a):
    free(a.op)
    free(a.bound)
    free(a.off)
    free(a.term_dim)
    free(a.term_coeff)


def find_conjunction_witness(int n_dims, lows, highs, atoms):
    cdef int i, j, t, level, top
    cdef long long s
    cdef bint ok

    for i in range(n_dims):
        if lows[i] > highs[i]:
            return None

    ground = []
    dimmed = []
    for a in atoms:
        if len(a[2]) == 0:
            ground.append(a)
        else:
            dimmed.append(a)
    for a in ground:
        if a[0] == 0:
            if not (0 <= a[1]):
                return None
        elif a[1] != 0:
            return None
    if n_dims == 0:
        return ()

    # Bucket atoms by their highest dimension, preserving input order.
    buckets = [[] for _ in range(n_dims)]
    for a in dimmed:
        top = 0
        for d, _ in a[2]:
            if d > top:
                top = d
        buckets[top].append(a)
    ordered = []
    cdef int *bstart = <int *> malloc((n_dims + 1) * sizeof(int))
    for i in range(n_dims):
        bstart[i] = len(ordered)
        ordered.extend(buckets[i])
    bstart[n_dims] = len(ordered)

    cdef _Atoms A
    _fill_atoms(ordered, &A)

    cdef long long *lo = <long long *> malloc(n_dims * sizeof(long long))
    cdef long long *hi = <long long *> malloc(n_dims * sizeof(long long))
    cdef long long *vals = <long long *> malloc(n_dims * sizeof(long long))
    for i in range(n_dims):
        lo[i] = lows[i]
        hi[i] = highs[i]

    result = None
    level = 0
    vals[0] = lo[0]
    while True:
        ok = True
        for i in range(bstart[level], bstart[level + 1]):
            s = 0
            for t in range(A.off[i], A.off[i + 1]):
                s += A.term_coeff[t] * vals[A.term_dim[t]]
            if A.op[i] == 0:
                if s > A.bound[i]:
                    ok = False
                    break
            elif s != A.bound[i]:
                ok = False
                break
        if ok:
            if level == n_dims - 1:
                result = tuple(vals[i] for i in range(n_dims))
                break
            level += 1
            vals[level] = lo[level]
            continue
        while vals[level] >= hi[level]:
            level -= 1
            if level < 0:
                break
        if level < 0:
            break
        vals[level] += 1

    _free_atoms(&A)
    free(bstart)
    free(lo)
    free(hi)
    free(vals)
    return result


cdef struct _Lin:
    long long c0
    int start
    int count


cdef struct _Prog:
    int n_dims
    int n_derived
    int n_atoms
    int n_code
    _Lin *der_a
    _Lin *der_b
    _Lin *atom_lin
    int *atom_op
    long long *atom_bound
    int *lin_dim        # shared term pool
    long long *lin_coeff
    int *code
    long long *values   # n_dims + n_derived scratch
    unsigned char *truth
    unsigned char *stack


cdef int _lin_fill(object lin, _Lin *out, list pool) except -1:
    out.c0 = lin[0]
    out.start = len(pool)
    out.count = len(lin[1])
    for idx, coeff in lin[1]:
        pool.append((idx, coeff))
    return 0


cdef _Prog *_build_prog(object prog) except NULL:
    cdef _Prog *P = <_Prog *> malloc(sizeof(_Prog))
    n_dims, derived, atoms, code = prog
    P.n_dims = n_dims
    P.n_derived = len(derived)
    P.n_atoms = len(atoms)
    P.n_code = len(code)
    P.der_a = <_Lin *> malloc((P.n_derived if P.n_derived else 1) * sizeof(_Lin))
    P.der_b = <_Lin *> malloc((P.n_derived if P.n_derived else 1) * sizeof(_Lin))
    P.atom_lin = <_Lin *> malloc((P.n_atoms if P.n_atoms else 1) * sizeof(_Lin))
    P.atom_op = <int *> malloc((P.n_atoms if P.n_atoms else 1) * sizeof(int))
    P.atom_bound = <long long *> malloc((P.n_atoms if P.n_atoms else 1) * sizeof(long long))
    pool = []
    cdef int i
    for i in range(P.n_derived):
        _lin_fill(derived[i][0], &P.der_a[i], pool)
        _lin_fill(derived[i][1], &P.der_b[i], pool)
    for i in range(P.n_atoms):
        P.atom_op[i] = atoms[i][0]
        P.atom_bound[i] = atoms[i][1]
        _lin_fill(atoms[i][2], &P.atom_lin[i], pool)
    cdef int npool = len(pool)
    P.lin_dim = <int *> malloc((npool if npool else 1) * sizeof(int))
    P.lin_coeff = <long long *> malloc((npool if npool else 1) * sizeof(long long))
    for i in range(npool):
        P.lin_dim[i] = pool[i][0]
        P.lin_coeff[i] = pool[i][1]
    P.code = <int *> malloc((P.n_code if P.n_code else 1) * sizeof(int))
    for i in range(P.n_code):
        P.code[i] = code[i]
    P.values = <long long *> malloc((P.n_dims + P.n_derived if P.n_dims + P.n_derived else 1) * sizeof(long long))
    P.truth = <unsigned char *> malloc((P.n_atoms if P.n_atoms else 1) * sizeof(unsigned char))
    P.stack = <unsigned char *> malloc((P.n_code if P.n_code else 1) * sizeof(unsigned char))
    return P


cdef void _free_prog(_Prog *P):
    free(P.der_a)
    free(P.der_b)
    free(P.atom_lin)
    free(P.atom_op)
    free(P.atom_bound)
    free(P.lin_dim)
    free(P.lin_coeff)
    free(P.code)
    free(P.values)
    free(P.truth)
    free(P.stack)
    free(P)


cdef inline long long _lin_eval(_Prog *P, _Lin *lin) nogil:
    cdef long long s = lin.c0
    cdef int t
    for t in range(lin.start, lin.start + lin.count):
        s += P.lin_coeff[t] * P.values[P.lin_dim[t]]
    return s


cdef bint _prog_eval(_Prog *P, long long *point) nogil:
    cdef int i
    cdef long long s
    cdef int sp = 0
    cdef unsigned char b
    for i in range(P.n_dims):
        P.values[i] = point[i]
    for i in range(P.n_derived):
        P.values[P.n_dims + i] = _lin_eval(P, &P.der_a[i]) * _lin_eval(P, &P.der_b[i])
    for i in range(P.n_atoms):
        s = _lin_eval(P, &P.atom_lin[i])
        if P.atom_op[i] == 0:
            P.truth[i] = s <= P.atom_bound[i]
        else:
            P.truth[i] = s == P.atom_bound[i]
    for i in range(P.n_code):
        if P.code[i] >= 0:
            P.stack[sp] = P.truth[P.code[i]]
            sp += 1
        elif P.code[i] == -1:
            b = P.stack[sp - 1]
            sp -= 1
            P.stack[sp - 1] = P.stack[sp - 1] and b
        elif P.code[i] == -2:
            b = P.stack[sp - 1]
            sp -= 1
            P.stack[sp - 1] = P.stack[sp - 1] or b
        elif P.code[i] == -3:
            P.stack[sp - 1] = not P.stack[sp - 1]
        elif P.code[i] == -4:
            P.stack[sp] = 1
            sp += 1
        else:
            P.stack[sp] = 0
            sp += 1
    return P.stack[sp - 1]


def box_find_model(prog, lows, highs):
    cdef int n_dims = prog[0]
    cdef int i
    for i in range(n_dims):
        if lows[i] > highs[i]:
            return None
    cdef _Prog *P = _build_prog(prog)
    cdef long long *lo = <long long *> malloc((n_dims if n_dims else 1) * sizeof(long long))
    cdef long long *hi = <long long *> malloc((n_dims if n_dims else 1) * sizeof(long long))
    cdef long long *pt = <long long *> malloc((n_dims if n_dims else 1) * sizeof(long long))
    for i in range(n_dims):
        lo[i] = lows[i]
        hi[i] = highs[i]
        pt[i] = lo[i]
    result = None
    cdef bint done = 0
    while not done:
        if _prog_eval(P, pt):
            result = tuple(pt[i] for i in range(n_dims))
            break
        if n_dims == 0:
            break
        i = n_dims - 1
        while i >= 0 and pt[i] >= hi[i]:
            pt[i] = lo[i]
            i -= 1
        if i < 0:
            done = 1
        else:
            pt[i] += 1
    _free_prog(P)
    free(lo)
    free(hi)
    free(pt)
    return result


def box_find_disagreement(prog_a, prog_b, lows, highs):
    cdef int n_dims = prog_a[0]
    cdef int i
    for i in range(n_dims):
        if lows[i] > highs[i]:
            return None
    cdef _Prog *A = _build_prog(prog_a)
    cdef _Prog *B = _build_prog(prog_b)
    cdef long long *lo = <long long *> malloc((n_dims if n_dims else 1) * sizeof(long long))
    cdef long long *hi = <long long *> malloc((n_dims if n_dims else 1) * sizeof(long long))
    cdef long long *pt = <long long *> malloc((n_dims if n_dims else 1) * sizeof(long long))
    for i in range(n_dims):
        lo[i] = lows[i]
        hi[i] = highs[i]
        pt[i] = lo[i]
    result = None
    cdef bint done = 0
    while not done:
        if _prog_eval(A, pt) != _prog_eval(B, pt):
            result = tuple(pt[i] for i in range(n_dims))
            break
        if n_dims == 0:
            break
        i = n_dims - 1
        while i >= 0 and pt[i] >= hi[i]:
            pt[i] = lo[i]
            i -= 1
        if i < 0:
            done = 1
        else:
            pt[i] += 1
    _free_prog(A)
    _free_prog(B)
    free(lo)
    free(hi)
    free(pt)
    return result

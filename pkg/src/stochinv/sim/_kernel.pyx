# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernel.

Same semantics, draw order and evaluation order as ``_pykernel``; the
runs it produces are bit-identical for equal seeds.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, ceil, floor
from numpy.random cimport bitgen_t

import numpy as np

cimport numpy as cnp

cnp.import_array()

# must match _compiled.py
cdef enum:
    OUT_TERMINATED = 0
    OUT_EVENT = 1
    OUT_CENSORED = 2
    ERR_GUARD_GAP = -1
    ERR_UNBOUNDED_CHOOSE = -2
    ERR_SCRIPT = -3


cdef struct Tables:
    Py_ssize_t nvars
    Py_ssize_t init_loc
    const double *init_val
    const long long *loc_kind
    const long long *loc_terminal
    const long long *loc_e0
    const long long *loc_e1
    const long long *e_target
    const long long *e_var
    const long long *e_utype
    const double *e_prob
    const double *e_aff
    const long long *e_dist
    const double *e_scale
    const long long *e_g0
    const long long *e_g1
    const long long *e_i0
    const long long *e_i1
    const double *iv_lo
    const double *iv_hi
    const long long *iv_int
    const long long *d_family
    const double *d_a
    const double *d_b
    const long long *dj_c0
    const long long *dj_c1
    const double *c_aff
    const long long *c_strict
    const long long *ev_d0
    const long long *ev_d1


cdef inline const long long *_ip(cnp.ndarray a):
    return <const long long *> cnp.PyArray_DATA(a)


cdef inline const double *_dp(cnp.ndarray a):
    return <const double *> cnp.PyArray_DATA(a)


cdef class _Holder:
    """Keeps the arrays alive while their pointers are in use."""
    cdef Tables t
    cdef list keep

    def __init__(self, cp):
        def i64(a):
            a = np.ascontiguousarray(a, dtype=np.int64)
            self.keep.append(a)
            return a

        def f64(a):
            a = np.ascontiguousarray(a, dtype=np.float64)
            self.keep.append(a)
            return a

        self.keep = []
        self.t.nvars = cp.nvars
        self.t.init_loc = cp.init_loc
        self.t.init_val = _dp(f64(cp.init_val))
        self.t.loc_kind = _ip(i64(cp.loc_kind))
        self.t.loc_terminal = _ip(i64(cp.loc_terminal))
        self.t.loc_e0 = _ip(i64(cp.loc_e0))
        self.t.loc_e1 = _ip(i64(cp.loc_e1))
        self.t.e_target = _ip(i64(cp.e_target))
        self.t.e_var = _ip(i64(cp.e_var))
        self.t.e_utype = _ip(i64(cp.e_utype))
        self.t.e_prob = _dp(f64(cp.e_prob))
        self.t.e_aff = _dp(f64(cp.e_aff))
        self.t.e_dist = _ip(i64(cp.e_dist))
        self.t.e_scale = _dp(f64(cp.e_scale))
        self.t.e_g0 = _ip(i64(cp.e_g0))
        self.t.e_g1 = _ip(i64(cp.e_g1))
        self.t.e_i0 = _ip(i64(cp.e_i0))
        self.t.e_i1 = _ip(i64(cp.e_i1))
        self.t.iv_lo = _dp(f64(cp.iv_lo))
        self.t.iv_hi = _dp(f64(cp.iv_hi))
        self.t.iv_int = _ip(i64(cp.iv_int))
        self.t.d_family = _ip(i64(cp.d_family))
        self.t.d_a = _dp(f64(cp.d_a))
        self.t.d_b = _dp(f64(cp.d_b))
        self.t.dj_c0 = _ip(i64(cp.dj_c0))
        self.t.dj_c1 = _ip(i64(cp.dj_c1))
        self.t.c_aff = _dp(f64(cp.c_aff))
        self.t.c_strict = _ip(i64(cp.c_strict))
        self.t.ev_d0 = _ip(i64(cp.ev_d0))
        self.t.ev_d1 = _ip(i64(cp.ev_d1))


cdef inline double _affine(const double *row, const double *x, Py_ssize_t n) noexcept nogil:
    cdef double v = row[0]
    cdef Py_ssize_t i
    for i in range(n):
        v = v + row[i + 1] * x[i]
    return v


cdef inline bint _holds(Tables *t, long long d0, long long d1, const double *x) noexcept nogil:
    cdef long long d, c
    cdef double v
    cdef bint ok
    cdef Py_ssize_t w = t.nvars + 1
    for d in range(d0, d1):
        ok = True
        for c in range(t.dj_c0[d], t.dj_c1[d]):
            v = _affine(t.c_aff + c * w, x, t.nvars)
            if (v >= 0.0) if t.c_strict[c] else (v > 0.0):
                ok = False
                break
        if ok:
            return True
    return False


cdef inline double _width(Tables *t, long long k) noexcept nogil:
    if t.iv_int[k]:
        return floor(t.iv_hi[k]) - ceil(t.iv_lo[k]) + 1.0
    return t.iv_hi[k] - t.iv_lo[k]


cdef bint _choose(Tables *t, long long i0, long long i1, int rule, bitgen_t *rng, double *out) noexcept nogil:
    cdef double lo, hi, u, total, r, w, v
    cdef long long k
    if rule == 1:
        lo = t.iv_lo[i0]
        hi = t.iv_hi[i0]
        if lo != -INFINITY:
            out[0] = ceil(lo) if t.iv_int[i0] else lo
            return True
        if hi != INFINITY:
            out[0] = floor(hi) if t.iv_int[i0] else hi
            return True
        return False
    u = rng.next_double(rng.state)
    total = 0.0
    for k in range(i0, i1):
        if t.iv_lo[k] == -INFINITY or t.iv_hi[k] == INFINITY:
            return False
        total += _width(t, k)
    if total <= 0.0:
        out[0] = ceil(t.iv_lo[i0]) if t.iv_int[i0] else t.iv_lo[i0]
        return True
    r = u * total
    for k in range(i0, i1):
        w = _width(t, k)
        if r < w or k == i1 - 1:
            if t.iv_int[k]:
                v = ceil(t.iv_lo[k]) + floor(r)
                out[0] = v if v < floor(t.iv_hi[k]) else floor(t.iv_hi[k])
            else:
                v = t.iv_lo[k] + r
                out[0] = v if v < t.iv_hi[k] else t.iv_hi[k]
            return True
        r -= w
    return False


cdef int _run(
    Tables *t,
    bitgen_t *rng,
    long long max_steps,
    int nondet_rule,
    int choose_rule,
    const long long *script,
    Py_ssize_t script_len,
    double *x,
    long long *steps_out,
    long long *loc_out,
) noexcept nogil:
    cdef long long loc = t.init_loc
    cdef long long step = 0
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t i
    cdef long long e, e0, e1, j, k, n, kind, ut, d, fam
    cdef double u, acc, a, val, v
    cdef Py_ssize_t w = t.nvars + 1
    cdef int code
    for i in range(t.nvars):
        x[i] = t.init_val[i]
    while True:
        if _holds(t, t.ev_d0[loc], t.ev_d1[loc], x):
            code = OUT_EVENT
            break
        if t.loc_terminal[loc]:
            code = OUT_TERMINATED
            break
        if step >= max_steps:
            code = OUT_CENSORED
            break
        e0 = t.loc_e0[loc]
        e1 = t.loc_e1[loc]
        kind = t.loc_kind[loc]
        e = -1
        if kind == 0:
            for j in range(e0, e1):
                if _holds(t, t.e_g0[j], t.e_g1[j], x):
                    e = j
                    break
            if e < 0:
                code = ERR_GUARD_GAP
                break
        elif kind == 1:
            u = rng.next_double(rng.state)
            acc = 0.0
            e = e1 - 1
            for j in range(e0, e1):
                acc += t.e_prob[j]
                if u < acc:
                    e = j
                    break
        else:
            n = e1 - e0
            if nondet_rule == 0:
                k = <long long> (rng.next_double(rng.state) * n)
                e = e0 + (k if k < n else n - 1)
            elif nondet_rule == 2 and pos < script_len:
                k = script[pos]
                pos += 1
                if k < 0 or k >= n:
                    code = ERR_SCRIPT
                    break
                e = e0 + k
            else:
                e = e0
        ut = t.e_utype[e]
        if ut == 1:
            x[t.e_var[e]] = _affine(t.e_aff + e * w, x, t.nvars)
        elif ut == 2:
            d = t.e_dist[e]
            fam = t.d_family[d]
            if fam == 0:
                a = t.d_a[d]
                val = a + (t.d_b[d] - a) * rng.next_double(rng.state)
            elif fam == 1:
                val = 1.0 if rng.next_double(rng.state) < t.d_a[d] else 0.0
            else:
                val = t.d_a[d]
            x[t.e_var[e]] = _affine(t.e_aff + e * w, x, t.nvars) + t.e_scale[e] * val
        elif ut == 3:
            if not _choose(t, t.e_i0[e], t.e_i1[e], choose_rule, rng, &v):
                code = ERR_UNBOUNDED_CHOOSE
                break
            x[t.e_var[e]] = v
        loc = t.e_target[e]
        step += 1
    steps_out[0] = step
    loc_out[0] = loc
    return code


cdef bitgen_t *_bitgen(object bg) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(bg.capsule, "BitGenerator")


def run_single(cp, bitgen, long long max_steps, int nondet_rule, int choose_rule, script):
    cdef _Holder h = _Holder(cp)
    cdef cnp.ndarray sc = np.ascontiguousarray(script, dtype=np.int64)
    cdef cnp.ndarray xs = np.zeros(max(cp.nvars, 1), dtype=np.float64)
    cdef long long steps = 0, loc = 0
    cdef int code
    cdef bitgen_t *rng = _bitgen(bitgen)
    cdef const long long *sp = _ip(sc)
    cdef Py_ssize_t slen = sc.shape[0]
    cdef double *xp = <double *> cnp.PyArray_DATA(xs)
    with bitgen.lock, nogil:
        code = _run(&h.t, rng, max_steps, nondet_rule, choose_rule, sp, slen, xp, &steps, &loc)
    return code, steps, loc, xs[: cp.nvars].tolist()


def run_replicas(cp, seed, long long first, Py_ssize_t count, long long max_steps,
                 int nondet_rule, int choose_rule, script):
    cdef _Holder h = _Holder(cp)
    cdef cnp.ndarray sc = np.ascontiguousarray(script, dtype=np.int64)
    cdef cnp.ndarray xs = np.zeros(max(cp.nvars, 1), dtype=np.float64)
    cdef cnp.ndarray codes = np.empty(count, dtype=np.int8)
    cdef cnp.ndarray steps = np.empty(count, dtype=np.int64)
    cdef signed char[::1] cv = codes
    cdef long long[::1] sv = steps
    cdef long long n = 0, loc = 0
    cdef int code
    cdef Py_ssize_t r
    cdef bitgen_t *rng
    cdef const long long *sp = _ip(sc)
    cdef Py_ssize_t slen = sc.shape[0]
    cdef double *xp = <double *> cnp.PyArray_DATA(xs)
    SeedSequence = np.random.SeedSequence
    PCG64 = np.random.PCG64
    for r in range(count):
        bg = PCG64(SeedSequence(seed, spawn_key=(first + r,)))
        rng = _bitgen(bg)
        with nogil:
            code = _run(&h.t, rng, max_steps, nondet_rule, choose_rule, sp, slen, xp, &n, &loc)
        cv[r] = <signed char> code
        sv[r] = n
        if code < 0:
            return codes[: r + 1], steps[: r + 1]
    return codes, steps

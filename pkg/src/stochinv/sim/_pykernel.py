"""Pure-Python simulation kernel.

Mirrors ``_kernel.pyx`` operation for operation (same draw order, same
floating-point evaluation order), so both produce identical runs for the
same seed.
"""

from __future__ import annotations

import math

import numpy as np

from ._compiled import (
    D_BERNOULLI,
    D_UNIFORM,
    ERR_GUARD_GAP,
    ERR_SCRIPT,
    ERR_UNBOUNDED_CHOOSE,
    K_DET,
    K_PROB,
    OUT_CENSORED,
    OUT_EVENT,
    OUT_TERMINATED,
    U_AFFINE,
    U_CHOOSE,
    U_ID,
    U_SAMPLE,
    CompiledPcfg,
)


class _Lists:
    """The compiled arrays as Python lists; indexing lists is several
    times faster than indexing numpy arrays element by element."""

    def __init__(self, cp: CompiledPcfg):
        for name, value in vars(cp).items():
            setattr(self, name, value.tolist() if isinstance(value, np.ndarray) else value)


def _affine(row: list[float], x: list[float]) -> float:
    v = row[0]
    for i in range(len(x)):
        v = v + row[i + 1] * x[i]
    return v


def _holds(t: _Lists, d0: int, d1: int, x: list[float]) -> bool:
    for d in range(d0, d1):
        ok = True
        for c in range(t.dj_c0[d], t.dj_c1[d]):
            v = _affine(t.c_aff[c], x)
            if (v >= 0.0) if t.c_strict[c] else (v > 0.0):
                ok = False
                break
        if ok:
            return True
    return False


def _choose(t: _Lists, i0: int, i1: int, rule: int, rand) -> float | None:
    if rule == 1:
        lo, hi, integral = t.iv_lo[i0], t.iv_hi[i0], t.iv_int[i0]
        if lo != -math.inf:
            return float(math.ceil(lo)) if integral else lo
        if hi != math.inf:
            return float(math.floor(hi)) if integral else hi
        return None
    u = rand()
    total = 0.0
    for k in range(i0, i1):
        lo, hi = t.iv_lo[k], t.iv_hi[k]
        if lo == -math.inf or hi == math.inf:
            return None
        total += (math.floor(hi) - math.ceil(lo) + 1.0) if t.iv_int[k] else (hi - lo)
    lo0 = t.iv_lo[i0]
    if total <= 0.0:
        return float(math.ceil(lo0)) if t.iv_int[i0] else lo0
    r = u * total
    for k in range(i0, i1):
        lo, hi, integral = t.iv_lo[k], t.iv_hi[k], t.iv_int[k]
        w = (math.floor(hi) - math.ceil(lo) + 1.0) if integral else (hi - lo)
        if r < w or k == i1 - 1:
            if integral:
                return min(math.ceil(lo) + math.floor(r), math.floor(hi)) * 1.0
            return min(lo + r, hi)
        r -= w
    return None  # unreachable


def run_one(
    t: _Lists,
    rand,
    max_steps: int,
    nondet_rule: int,
    choose_rule: int,
    script: list[int],
    x: list[float],
) -> tuple[int, int, int]:
    """Run from the initial configuration; returns (code, steps, location)
    and leaves the final valuation in ``x``."""
    loc = t.init_loc
    x[:] = t.init_val
    pos = 0
    step = 0
    while True:
        if _holds(t, t.ev_d0[loc], t.ev_d1[loc], x):
            return OUT_EVENT, step, loc
        if t.loc_terminal[loc]:
            return OUT_TERMINATED, step, loc
        if step >= max_steps:
            return OUT_CENSORED, step, loc
        e0, e1 = t.loc_e0[loc], t.loc_e1[loc]
        kind = t.loc_kind[loc]
        e = -1
        if kind == K_DET:
            for j in range(e0, e1):
                if _holds(t, t.e_g0[j], t.e_g1[j], x):
                    e = j
                    break
            if e < 0:
                return ERR_GUARD_GAP, step, loc
        elif kind == K_PROB:
            u = rand()
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
                k = int(rand() * n)
                e = e0 + (k if k < n else n - 1)
            elif nondet_rule == 2 and pos < len(script):
                k = script[pos]
                pos += 1
                if not 0 <= k < n:
                    return ERR_SCRIPT, step, loc
                e = e0 + k
            else:
                e = e0
        ut = t.e_utype[e]
        if ut == U_AFFINE:
            x[t.e_var[e]] = _affine(t.e_aff[e], x)
        elif ut == U_SAMPLE:
            d = t.e_dist[e]
            fam = t.d_family[d]
            if fam == D_UNIFORM:
                a = t.d_a[d]
                val = a + (t.d_b[d] - a) * rand()
            elif fam == D_BERNOULLI:
                val = 1.0 if rand() < t.d_a[d] else 0.0
            else:
                val = t.d_a[d]
            x[t.e_var[e]] = _affine(t.e_aff[e], x) + t.e_scale[e] * val
        elif ut == U_CHOOSE:
            v = _choose(t, t.e_i0[e], t.e_i1[e], choose_rule, rand)
            if v is None:
                return ERR_UNBOUNDED_CHOOSE, step, loc
            x[t.e_var[e]] = v
        elif ut != U_ID:
            raise ValueError(f"bad update code {ut}")
        loc = t.e_target[e]
        step += 1


def run_single(cp: CompiledPcfg, bitgen, max_steps, nondet_rule, choose_rule, script):
    t = _Lists(cp)
    x = [0.0] * cp.nvars
    rand = np.random.Generator(bitgen).random
    code, steps, loc = run_one(t, rand, max_steps, nondet_rule, choose_rule, list(script), x)
    return code, steps, loc, x


def run_replicas(
    cp: CompiledPcfg,
    seed: int,
    first: int,
    count: int,
    max_steps: int,
    nondet_rule: int,
    choose_rule: int,
    script,
) -> tuple[np.ndarray, np.ndarray]:
    t = _Lists(cp)
    x = [0.0] * cp.nvars
    script = list(script)
    codes = np.empty(count, dtype=np.int8)
    steps = np.empty(count, dtype=np.int64)
    for r in range(count):
        bitgen = np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(first + r,)))
        rand = np.random.Generator(bitgen).random
        code, n, _ = run_one(t, rand, max_steps, nondet_rule, choose_rule, script, x)
        codes[r] = code
        steps[r] = n
        if code < 0:
            return codes[: r + 1], steps[: r + 1]
    return codes, steps

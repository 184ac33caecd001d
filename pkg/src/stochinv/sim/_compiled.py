"""Flat array form of a pCFG shared by both simulation kernels.

Affine expressions are rows ``[const, a_0, ..., a_{n-1}]`` evaluated as
``const + a_0*x_0 + ... + a_{n-1}*x_{n-1}`` in that order, so the two
kernels round identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..frontend import DistributionSpec
from ..pcfg import AffineUpdate, ChooseUpdate, Identity, LocKind, Pcfg, SampleUpdate
from ..polyhedra import AffineExpr, Plp

# update codes
U_ID, U_AFFINE, U_SAMPLE, U_CHOOSE = 0, 1, 2, 3
# location kinds
K_DET, K_PROB, K_NONDET = 0, 1, 2
# distribution families
D_UNIFORM, D_BERNOULLI, D_DIRAC = 0, 1, 2
# outcome codes; negative values are errors raised by the caller
OUT_TERMINATED, OUT_EVENT, OUT_CENSORED = 0, 1, 2
ERR_GUARD_GAP, ERR_UNBOUNDED_CHOOSE, ERR_SCRIPT = -1, -2, -3

_KINDS = {LocKind.DET: K_DET, LocKind.PROB: K_PROB, LocKind.NONDET: K_NONDET}
_FAMILIES = {"uniform": D_UNIFORM, "bernoulli": D_BERNOULLI, "dirac": D_DIRAC}


class UnsupportedDistribution(ValueError):
    pass


@dataclass(frozen=True)
class CompiledPcfg:
    nvars: int
    init_loc: int
    init_val: np.ndarray
    loc_ids: tuple[str, ...]
    loc_kind: np.ndarray
    loc_terminal: np.ndarray
    loc_e0: np.ndarray
    loc_e1: np.ndarray
    e_target: np.ndarray
    e_var: np.ndarray
    e_utype: np.ndarray
    e_prob: np.ndarray
    e_aff: np.ndarray
    e_dist: np.ndarray
    e_scale: np.ndarray
    e_g0: np.ndarray
    e_g1: np.ndarray
    e_i0: np.ndarray
    e_i1: np.ndarray
    iv_lo: np.ndarray
    iv_hi: np.ndarray
    iv_int: np.ndarray
    d_family: np.ndarray
    d_a: np.ndarray
    d_b: np.ndarray
    dj_c0: np.ndarray
    dj_c1: np.ndarray
    c_aff: np.ndarray
    c_strict: np.ndarray
    ev_d0: np.ndarray
    ev_d1: np.ndarray


def _row(expr: AffineExpr, n: int) -> list[float]:
    row = [float(expr.const)] + [0.0] * n
    for i, a in expr.coeffs:
        row[1 + i] = float(a)
    return row


class _Tables:
    def __init__(self, n: int):
        self.n = n
        self.dj_c0: list[int] = []
        self.dj_c1: list[int] = []
        self.c_aff: list[list[float]] = []
        self.c_strict: list[int] = []

    def plp(self, plp: Plp) -> tuple[int, int]:
        start = len(self.dj_c0)
        for disj in plp:
            self.dj_c0.append(len(self.c_aff))
            for c in disj:
                self.c_aff.append(_row(c.expr, self.n))
                self.c_strict.append(int(c.strict))
            self.dj_c1.append(len(self.c_aff))
        return start, len(self.dj_c0)


def _dist(spec: DistributionSpec) -> tuple[int, float, float]:
    family = _FAMILIES.get(spec.family)
    if family is None:
        raise UnsupportedDistribution(f"cannot sample {spec.id!r}: only uniform, bernoulli and dirac are simulated")
    params = [float(p) for p in spec.params] + [0.0, 0.0]
    return family, params[0], params[1]


def compile_pcfg(pcfg: Pcfg, event: Mapping[str, Plp] | None = None) -> CompiledPcfg:
    n = pcfg.nvars
    index = {loc: i for i, loc in enumerate(pcfg.loc_ids)}
    dist_index = {name: i for i, name in enumerate(pcfg.dists)}
    dists = [_dist(spec) for spec in pcfg.dists.values()]
    tables = _Tables(n)
    loc_e0, loc_e1, edges = [], [], []
    for loc in pcfg.locations:
        loc_e0.append(len(edges))
        edges += pcfg.outgoing(loc.id)
        loc_e1.append(len(edges))
    cols: dict[str, list] = {k: [] for k in ("target", "var", "utype", "prob", "aff", "dist", "scale", "g0", "g1", "i0", "i1")}
    iv_lo: list[float] = []
    iv_hi: list[float] = []
    iv_int: list[int] = []
    for t in edges:
        u = t.update
        aff = [0.0] * (n + 1)
        dist, scale, i0, i1 = -1, 0.0, 0, 0
        if isinstance(u, Identity):
            utype = U_ID
        elif isinstance(u, AffineUpdate):
            utype, aff = U_AFFINE, _row(u.expr, n)
        elif isinstance(u, SampleUpdate):
            utype, aff, dist, scale = U_SAMPLE, _row(u.base, n), dist_index[u.dist], float(u.scale)
        elif isinstance(u, ChooseUpdate):
            utype = U_CHOOSE
            i0 = len(iv_lo)
            for iv in u.domain:
                iv_lo.append(float(iv.lo) if iv.lo is not None else -np.inf)
                iv_hi.append(float(iv.hi) if iv.hi is not None else np.inf)
                iv_int.append(int(iv.integral))
            i1 = len(iv_lo)
        else:
            raise TypeError(f"unknown update {u!r}")
        g0, g1 = tables.plp(t.guard if t.guard is not None else Plp.true())
        for key, value in zip(cols, (index[t.target], t.var, utype, float(t.prob or 0), aff, dist, scale, g0, g1, i0, i1)):
            cols[key].append(value)
    ev_d0, ev_d1 = [], []
    for loc in pcfg.loc_ids:
        a, b = tables.plp((event or {}).get(loc, Plp.false()))
        ev_d0.append(a)
        ev_d1.append(b)

    def i64(xs) -> np.ndarray:
        return np.ascontiguousarray(xs, dtype=np.int64)

    def f64(xs, shape=None) -> np.ndarray:
        arr = np.ascontiguousarray(xs, dtype=np.float64)
        return arr.reshape(shape) if shape is not None else arr

    return CompiledPcfg(
        nvars=n,
        init_loc=index[pcfg.init_loc],
        init_val=f64([float(v) for v in pcfg.init_val]),
        loc_ids=pcfg.loc_ids,
        loc_kind=i64([_KINDS[loc.kind] for loc in pcfg.locations]),
        loc_terminal=i64([int(loc.terminal) for loc in pcfg.locations]),
        loc_e0=i64(loc_e0),
        loc_e1=i64(loc_e1),
        e_target=i64(cols["target"]),
        e_var=i64(cols["var"]),
        e_utype=i64(cols["utype"]),
        e_prob=f64(cols["prob"]),
        e_aff=f64(cols["aff"], (len(edges), n + 1)),
        e_dist=i64(cols["dist"]),
        e_scale=f64(cols["scale"]),
        e_g0=i64(cols["g0"]),
        e_g1=i64(cols["g1"]),
        e_i0=i64(cols["i0"]),
        e_i1=i64(cols["i1"]),
        iv_lo=f64(iv_lo),
        iv_hi=f64(iv_hi),
        iv_int=i64(iv_int),
        d_family=i64([d[0] for d in dists]),
        d_a=f64([d[1] for d in dists]),
        d_b=f64([d[2] for d in dists]),
        dj_c0=i64(tables.dj_c0),
        dj_c1=i64(tables.dj_c1),
        c_aff=f64(tables.c_aff, (len(tables.c_aff), n + 1)),
        c_strict=i64(tables.c_strict),
        ev_d0=i64(ev_d0),
        ev_d1=i64(ev_d1),
    )

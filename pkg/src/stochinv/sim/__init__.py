"""Seeded Monte Carlo execution of pCFGs.

Runs are driven by a compiled kernel when the extension is built and by a
pure-Python kernel otherwise (or when ``STOCHINV_PURE_PYTHON`` is set);
``BACKEND`` says which one was picked.  Both give identical results for
identical seeds.

Replica ``i`` of a batch seeded with ``seed`` draws from
``PCG64(SeedSequence(seed, spawn_key=(i,)))``, so results do not depend on
how replicas are split across workers.
"""

from __future__ import annotations

import csv
import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np
from scipy.stats import beta

from ..pcfg import ChooseUpdate, LocKind, Pcfg
from ..polyhedra import Plp
from . import _pykernel
from ._compiled import (
    ERR_GUARD_GAP,
    ERR_SCRIPT,
    ERR_UNBOUNDED_CHOOSE,
    OUT_CENSORED,
    OUT_EVENT,
    OUT_TERMINATED,
    CompiledPcfg,
    UnsupportedDistribution,
    compile_pcfg,
)

__all__ = [
    "BACKEND",
    "ChooseRule",
    "Estimate",
    "GuardGap",
    "NondetRule",
    "Outcome",
    "RunOutcome",
    "SchedulerPolicy",
    "SimulationError",
    "UnboundedChoose",
    "UnsupportedDistribution",
    "clopper_pearson",
    "compile_pcfg",
    "estimate",
    "kernel",
    "run",
    "run_batch",
    "write_csv",
]


def _select_kernel():
    if os.environ.get("STOCHINV_PURE_PYTHON"):
        return _pykernel, "python"
    try:
        from . import _kernel
    except ImportError:
        return _pykernel, "python"
    return _kernel, "cython"


kernel, BACKEND = _select_kernel()


class SimulationError(RuntimeError):
    pass


class GuardGap(SimulationError):
    pass


class UnboundedChoose(SimulationError):
    pass


class NondetRule(enum.Enum):
    UNIFORM = 0
    FIRST = 1
    SCRIPTED = 2


class ChooseRule(enum.Enum):
    UNIFORM = 0
    ENDPOINT = 1


@dataclass(frozen=True)
class SchedulerPolicy:
    """How the simulator resolves nondeterminism.

    ``script`` lists successor indices for consecutive nondeterministic
    locations; once it is used up the first listed successor is taken.
    ``ENDPOINT`` picks the lower end of the first domain interval (the
    upper end if the lower is infinite).
    """

    nondet: NondetRule = NondetRule.UNIFORM
    choose: ChooseRule = ChooseRule.UNIFORM
    script: tuple[int, ...] = ()

    def __post_init__(self):
        if self.script and self.nondet is not NondetRule.SCRIPTED:
            raise ValueError("a script needs the scripted rule")

    @classmethod
    def scripted(cls, script: Sequence[int], choose: ChooseRule = ChooseRule.UNIFORM) -> "SchedulerPolicy":
        return cls(NondetRule.SCRIPTED, choose, tuple(script))

    def args(self) -> tuple[int, int, np.ndarray]:
        return self.nondet.value, self.choose.value, np.asarray(self.script, dtype=np.int64)


class Outcome(enum.Enum):
    TERMINATED = OUT_TERMINATED
    EVENT = OUT_EVENT
    CENSORED = OUT_CENSORED


@dataclass(frozen=True)
class RunOutcome:
    kind: Outcome
    steps: int
    loc: str = ""
    val: tuple[float, ...] = ()


def _raise(code: int, where: str = "") -> None:
    if code == ERR_GUARD_GAP:
        raise GuardGap(f"no guard enabled{where}; the pCFG is invalid")
    if code == ERR_UNBOUNDED_CHOOSE:
        raise UnboundedChoose(f"nondeterministic choice over an unbounded set{where}")
    if code == ERR_SCRIPT:
        raise SimulationError(f"scripted successor out of range{where}")
    raise SimulationError(f"kernel error {code}")


def run(
    pcfg: Pcfg | CompiledPcfg,
    policy: SchedulerPolicy = SchedulerPolicy(),
    max_steps: int = 10_000,
    seed: int = 0,
    event: Mapping[str, Plp] | None = None,
    replica: int = 0,
) -> RunOutcome:
    """One run from the initial configuration, stopped on a terminal
    location, on entering ``event`` (checked before every step, including
    the first) or after ``max_steps`` steps."""
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    cp = pcfg if isinstance(pcfg, CompiledPcfg) else compile_pcfg(pcfg, event)
    bitgen = np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,)))
    code, steps, loc, val = kernel.run_single(cp, bitgen, max_steps, *policy.args())
    if code < 0:
        _raise(code, f" at {cp.loc_ids[loc]} after {steps} steps")
    return RunOutcome(Outcome(code), int(steps), cp.loc_ids[loc], tuple(val))


def _chunk(args):
    cp, seed, first, count, max_steps, policy_args = args
    return kernel.run_replicas(cp, seed, first, count, max_steps, *policy_args)


def run_batch(
    pcfg: Pcfg | CompiledPcfg,
    runs: int,
    max_steps: int,
    seed: int,
    event: Mapping[str, Plp] | None = None,
    policy: SchedulerPolicy = SchedulerPolicy(),
    jobs: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Outcome codes and step counts of replicas ``0 .. runs-1``."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    cp = pcfg if isinstance(pcfg, CompiledPcfg) else compile_pcfg(pcfg, event)
    pargs = policy.args()
    if jobs <= 1:
        codes, steps = kernel.run_replicas(cp, seed, 0, runs, max_steps, *pargs)
    else:
        size = -(-runs // (jobs * 4))
        tasks = [(cp, seed, a, min(size, runs - a), max_steps, pargs) for a in range(0, runs, size)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_chunk, tasks))
        codes = np.concatenate([p[0] for p in parts])
        steps = np.concatenate([p[1] for p in parts])
    bad = np.flatnonzero(codes < 0)
    if bad.size:
        _raise(int(codes[bad[0]]), f" in replica {int(bad[0])}")
    return codes, steps


def clopper_pearson(k: int, n: int, confidence: float = 0.99, alternative: str = "two-sided") -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials.

    ``alternative`` is ``"two-sided"``, ``"lower"`` (one-sided lower bound,
    upper end 1) or ``"upper"`` (one-sided upper bound, lower end 0).
    """
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    if not 0 <= k <= n or n < 1:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    alpha = 1 - confidence
    tail = alpha / 2 if alternative == "two-sided" else alpha
    if alternative not in ("two-sided", "lower", "upper"):
        raise ValueError(f"unknown alternative {alternative!r}")
    lo = 0.0 if k == 0 or alternative == "upper" else float(beta.ppf(tail, k, n - k + 1))
    hi = 1.0 if k == n or alternative == "lower" else float(beta.ppf(1 - tail, k + 1, n - k))
    return lo, hi


@dataclass
class Estimate:
    runs: int
    events: int
    terminated: int
    censored: int
    confidence: float
    interval: tuple[float, float]
    mean_steps_terminated: float | None
    mean_steps_event: float | None = None
    demonic: bool = False
    codes: np.ndarray = field(default=None, repr=False)
    steps: np.ndarray = field(default=None, repr=False)

    @property
    def frequency(self) -> float:
        return self.events / self.runs

    def summary(self) -> str:
        lines = [
            f"runs: {self.runs}",
            f"events: {self.events}",
            f"terminated: {self.terminated}",
            f"censored: {self.censored}",
            f"frequency: {self.frequency:.6g}",
            f"interval ({self.confidence:g}, Clopper-Pearson): [{self.interval[0]:.6g}, {self.interval[1]:.6g}]",
        ]
        if self.mean_steps_terminated is not None:
            lines.append(f"mean steps to termination: {self.mean_steps_terminated:.6g}")
        if self.mean_steps_event is not None:
            lines.append(f"mean steps to event: {self.mean_steps_event:.6g}")
        if self.demonic:
            lines.append("note: nondeterminism resolved by a fixed policy; frequencies under-approximate the worst case over schedulers")
        return "\n".join(lines)


def _has_nondeterminism(pcfg: Pcfg | CompiledPcfg) -> bool:
    if isinstance(pcfg, CompiledPcfg):
        return bool((pcfg.loc_kind == 2).any() or (pcfg.e_utype == 3).any())
    return any(loc.kind is LocKind.NONDET for loc in pcfg.locations) or any(
        isinstance(t.update, ChooseUpdate) for t in pcfg.transitions
    )


def estimate(
    pcfg: Pcfg,
    policy: SchedulerPolicy = SchedulerPolicy(),
    event: Mapping[str, Plp] | None = None,
    runs: int = 10_000,
    max_steps: int = 10_000,
    seed: int = 0,
    confidence: float = 0.99,
    jobs: int = 1,
) -> Estimate:
    """Frequency of entering ``event`` over independent replicas, with a
    two-sided Clopper-Pearson interval.  Censored runs count as misses."""
    codes, steps = run_batch(pcfg, runs, max_steps, seed, event, policy, jobs)
    events = int(np.count_nonzero(codes == OUT_EVENT))
    term = codes == OUT_TERMINATED
    hit = codes == OUT_EVENT
    mean = float(steps[term].mean()) if term.any() else None
    mean_event = float(steps[hit].mean()) if hit.any() else None
    return Estimate(
        runs=runs,
        events=events,
        terminated=int(term.sum()),
        censored=int(np.count_nonzero(codes == OUT_CENSORED)),
        confidence=confidence,
        interval=clopper_pearson(events, runs, confidence),
        mean_steps_terminated=mean,
        mean_steps_event=mean_event,
        demonic=_has_nondeterminism(pcfg),
        codes=codes,
        steps=steps,
    )


_NAMES = {OUT_TERMINATED: "terminated", OUT_EVENT: "event", OUT_CENSORED: "censored"}


def write_csv(stream: IO[str], codes: np.ndarray, steps: np.ndarray) -> None:
    """``replica,outcome,steps`` rows."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["replica", "outcome", "steps"])
    for i, (c, s) in enumerate(zip(codes.tolist(), steps.tolist())):
        w.writerow([i, _NAMES[c], s])

"""Reliability index computation.

LOLP comes analytically from a partition (the summed probability of the
failed intervals, no shedding evaluations needed).  EENS is estimated by
Monte Carlo restricted to the failed region: draw an interval with
probability proportional to its mass, draw a state inside it, evaluate
its shed.  State enumeration and plain Monte Carlo baselines are
provided for comparison runs.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import AssessmentError
from .lattice import State, sample_state
from .opf import EPS_SHED, DcOpf, solver_for
from .partition import PartitionLedger
from .system_model import SystemModel

MIN_SAMPLES = 30          # draws before the convergence statistic is trusted
FULL_ENUMERATION_LIMIT = 30   # refuse full sweeps beyond 2**30 states


@dataclass
class IndexReport:
    """Summary of one assessment run."""

    lolp: float
    eens: float | None
    eens_stderr: float | None
    beta: float | None
    opf_evaluations: int
    samples: int
    elapsed: float

    def to_dict(self) -> dict:
        return {
            "lolp": self.lolp,
            "eens": self.eens,
            "eens_stderr": self.eens_stderr,
            "beta": self.beta,
            "opf_evaluations": self.opf_evaluations,
            "samples": self.samples,
        }


class SampleAccumulator:
    """Running mean / second moment of shed samples (Welford)."""

    __slots__ = ("count", "mean", "_m2")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, value: float):
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    @property
    def variance(self) -> float:
        """Unbiased sample variance; zero until two samples exist."""
        if self.count < 2:
            return 0.0
        return self._m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count == 0:
            return 0.0
        return math.sqrt(self.variance / self.count)

    @property
    def beta(self) -> float:
        """Coefficient of variation of the sample-mean estimator."""
        if self.mean == 0.0:
            return math.inf
        return self.stderr / self.mean


def lolp_from_partition(ledger: PartitionLedger) -> float:
    """Loss-of-load probability lower bound: total failed-interval mass."""
    return math.fsum(f.probability for f in ledger.failed)


def fmcs_eens(
    model: SystemModel,
    ledger: PartitionLedger,
    beta_target: float | None,
    rng: np.random.Generator,
    *,
    max_samples: int | None = None,
    solver: DcOpf | None = None,
    trace_hook=None,
) -> IndexReport:
    """EENS by Monte Carlo restricted to the discovered failed region.

    Every draw lands on a failed state, so the shed factor converges at
    a rate independent of how rare failures are overall.  Stops when the
    coefficient of variation of the estimator drops below beta_target
    (never before MIN_SAMPLES draws) or when max_samples is reached.
    """
    if not ledger.failed:
        raise AssessmentError("no failed region: partition discovered no failed intervals")
    if beta_target is None and max_samples is None:
        raise ValueError("need beta_target or max_samples")
    if beta_target is not None and beta_target <= 0:
        raise ValueError("beta_target must be positive")
    if solver is None:
        solver = solver_for(model)
    start = time.perf_counter()

    lolp = lolp_from_partition(ledger)
    weights = np.array([f.probability for f in ledger.failed])
    cumulative = np.cumsum(weights / weights.sum())
    lattices = [f.lattice for f in ledger.failed]

    acc = SampleAccumulator()
    while True:
        idx = int(np.searchsorted(cumulative, rng.random(), side="right"))
        idx = min(idx, len(lattices) - 1)
        state = sample_state(lattices[idx], model, rng)
        shed = solver.shed_total(state)
        acc.add(shed)
        if trace_hook is not None:
            trace_hook(acc.count, state, shed, lolp * acc.mean, acc.beta)
        if max_samples is not None and acc.count >= max_samples:
            break
        if beta_target is not None and acc.count >= MIN_SAMPLES:
            if acc.mean == 0.0:
                raise AssessmentError(
                    "all sampled states shed nothing: failed region misclassified"
                )
            if acc.beta < beta_target:
                break

    return IndexReport(
        lolp=lolp,
        eens=lolp * acc.mean,
        eens_stderr=lolp * acc.stderr,
        beta=acc.beta,
        opf_evaluations=acc.count,
        samples=acc.count,
        elapsed=time.perf_counter() - start,
    )


def se_enumerate(
    model: SystemModel,
    max_level: int | None = None,
    *,
    solver: DcOpf | None = None,
) -> IndexReport:
    """Indices by state enumeration.

    With max_level set, only states with at most that many failed
    components are visited and both indices are lower bounds; otherwise
    the full space is swept (refused above 2**FULL_ENUMERATION_LIMIT
    states).
    """
    if solver is None:
        solver = solver_for(model)
    start = time.perf_counter()
    n = model.n

    if max_level is None:
        if n > FULL_ENUMERATION_LIMIT:
            raise AssessmentError(
                f"full enumeration of 2^{n} states refused; set max_level"
            )
        if model.num_generators <= 22 and model.num_lines <= 22:
            lolp, eens, count = _enumerate_full(model, solver)
        else:
            lolp, eens, count = _enumerate_levels(model, solver, n)
    else:
        lolp, eens, count = _enumerate_levels(model, solver, max_level)

    return IndexReport(
        lolp=lolp,
        eens=eens,
        eens_stderr=None,
        beta=None,
        opf_evaluations=count,
        samples=0,
        elapsed=time.perf_counter() - start,
    )


def _enumerate_full(model: SystemModel, solver: DcOpf) -> tuple[float, float, int]:
    """Sweep gen patterns within line patterns so per-bus capacity groups
    and the shed cache can be reused across the whole block."""
    ng, nl = model.num_generators, model.num_lines
    a, q = model.availability, model.unavailability

    gen_prob = np.ones(1 << ng)
    for g in range(1 << ng):
        p = 1.0
        for i in range(ng):
            p *= q[i] if (g >> i) & 1 else a[i]
        gen_prob[g] = p
    line_prob = np.ones(1 << nl)
    for l in range(1 << nl):
        p = 1.0
        for i in range(nl):
            p *= q[ng + i] if (l >> i) & 1 else a[ng + i]
        line_prob[l] = p

    # group generator patterns by the per-bus capacity vector they leave
    cap_groups: dict[bytes, int] = {}
    group_of = np.zeros(1 << ng, dtype=np.intp)
    group_reps: list[int] = []
    for g in range(1 << ng):
        cap, _ = solver.bus_capacity(g)
        key = cap.tobytes()
        gid = cap_groups.get(key)
        if gid is None:
            gid = len(group_reps)
            cap_groups[key] = gid
            group_reps.append(g)
        group_of[g] = gid

    lolp = 0.0
    eens = 0.0
    shed_groups = np.zeros(len(group_reps))
    for l in range(1 << nl):
        line_bits = l << ng
        for gid, rep in enumerate(group_reps):
            shed_groups[gid] = solver.shed_total(line_bits | rep)
        shed_all = shed_groups[group_of]
        failed = shed_all > EPS_SHED
        lolp += line_prob[l] * float(gen_prob[failed].sum())
        eens += line_prob[l] * float(np.dot(gen_prob, shed_all))
    return lolp, eens, 1 << (ng + nl)


def _enumerate_levels(
    model: SystemModel, solver: DcOpf, max_level: int
) -> tuple[float, float, int]:
    n = model.n
    a, q = model.availability, model.unavailability
    base = float(np.prod(a))
    ratio = q / a

    lolp = 0.0
    eens = 0.0
    count = 0
    for level in range(max_level + 1):
        for combo in itertools.combinations(range(n), level):
            bits = 0
            p = base
            for i in combo:
                bits |= 1 << i
                p *= ratio[i]
            shed = solver.shed_total(bits)
            count += 1
            if shed > EPS_SHED:
                lolp += p
                eens += p * shed
    return lolp, eens, count


def mcs(
    model: SystemModel,
    beta_target: float | None,
    rng: np.random.Generator,
    *,
    max_samples: int | None = None,
    solver: DcOpf | None = None,
    trace_hook=None,
    batch: int = 1024,
) -> IndexReport:
    """Indices by independent state sampling over the whole space.

    Each component fails independently with its unavailability.  The
    convergence statistic is the coefficient of variation of the EENS
    estimator over all samples, zero-shed ones included, so runs on
    stable systems need many draws.  States are drawn in fixed-size
    batches but consumed in draw order, keeping reported counts
    reproducible for a given seed.
    """
    if beta_target is None and max_samples is None:
        raise ValueError("need beta_target or max_samples")
    if beta_target is not None and beta_target <= 0:
        raise ValueError("beta_target must be positive")
    if solver is None:
        solver = solver_for(model)
    start = time.perf_counter()
    n = model.n
    q = model.unavailability

    acc = SampleAccumulator()
    failures = 0
    done = False
    while not done:
        draws = rng.random((batch, n)) < q
        for row in draws:
            bits = 0
            for i in np.flatnonzero(row):
                bits |= 1 << int(i)
            shed = solver.shed_total(bits)
            acc.add(shed)
            if shed > EPS_SHED:
                failures += 1
            if trace_hook is not None:
                trace_hook(acc.count, State(bits, n), shed, acc.mean, acc.beta)
            if max_samples is not None and acc.count >= max_samples:
                done = True
                break
            if (
                beta_target is not None
                and acc.count >= MIN_SAMPLES
                and acc.mean > 0.0
                and acc.beta < beta_target
            ):
                done = True
                break

    return IndexReport(
        lolp=failures / acc.count,
        eens=acc.mean,
        eens_stderr=acc.stderr,
        beta=acc.beta,
        opf_evaluations=acc.count,
        samples=acc.count,
        elapsed=time.perf_counter() - start,
    )

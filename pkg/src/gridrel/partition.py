"""Best-first interval partition of the state space.

The engine maintains a set of discovered failed intervals and a max-heap
of mixed intervals ordered by an importance index: the interval's
probability mass times the larger of two cheap bounds on how likely the
interval is to contain failures (a transmission weakness built from the
weakest-connected bus, and a generation weakness built from the smallest
set of large units whose loss erases the capacity surplus).  Each
iteration splits the most important mixed interval on one component and
classifies the new upper half with a single shedding evaluation of its
minimum element.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .lattice import Lattice, LatticeClass, classify, lattice_probability, split
from .opf import EPS_SHED, DcOpf, solver_for
from .system_model import SystemModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImportanceIndex:
    """Ordering key for mixed intervals: pi = P(L) * max(q_t, q_g)."""

    pi: float
    q_t: float
    q_g: float


@dataclass
class StopCriteria:
    """Termination rules for the partition loop; at least one must be set.

    avg_failed_prob_below fires once the mean probability of the last
    ``window`` discovered failed intervals drops under the threshold.
    """

    max_opf: int | None = None
    mixed_mass_below: float | None = None
    avg_failed_prob_below: float | None = None
    window: int = 10

    def __post_init__(self):
        if self.max_opf is None and self.mixed_mass_below is None \
                and self.avg_failed_prob_below is None:
            raise ValueError("at least one stopping criterion must be set")

    @classmethod
    def d_n(cls, n: int, **kwargs) -> "StopCriteria":
        """Threshold 10**-n on the rolling average failed-interval probability."""
        return cls(avg_failed_prob_below=10.0 ** -n, **kwargs)


class FailedLattice(NamedTuple):
    lattice: Lattice
    shed_mw: float
    probability: float


class TraceRow(NamedTuple):
    iteration: int
    opf_count: int
    lolp_lower: float
    mixed_mass: float
    failed_count: int
    elapsed_ms: float


class _MixedEntry(NamedTuple):
    neg_pi: float
    seq: int            # FIFO tie-break: equal pi pops in insertion order
    lattice: Lattice
    probability: float
    q_t: float
    candidate_line: int | None
    q_g: float
    candidate_gen: int | None


@dataclass
class PartitionLedger:
    """Evolving result of a partition run.

    failed, the heap of mixed intervals, and the retired normal mass
    always cover the state space disjointly: lolp_lower + mixed_mass +
    normal_mass = 1 up to float accumulation.
    """

    n: int
    failed: list[FailedLattice] = field(default_factory=list)
    mixed: list[_MixedEntry] = field(default_factory=list)
    opf_count: int = 0
    lolp_lower: float = 0.0
    mixed_mass: float = 0.0
    normal_mass: float = 0.0
    trace: list[TraceRow] = field(default_factory=list)

    def mixed_lattices(self) -> list[tuple[Lattice, float]]:
        return [(e.lattice, e.probability) for e in self.mixed]

    def recompute_masses(self) -> tuple[float, float]:
        """Exact (lolp_lower, mixed_mass) by summation, for verification."""
        return (
            math.fsum(f.probability for f in self.failed),
            math.fsum(e.probability for e in self.mixed),
        )


def transmission_weakness(model: SystemModel, lat: Lattice) -> tuple[float, int | None]:
    """Weakness of the transmission side of an interval.

    Works on the residual graph of the interval: fixed-failed lines are
    removed and fixed-operational lines are contracted (their endpoints
    can never be separated, so they merge into one node).  The weakest
    node of that graph is the one with fewest incident free lines, and
    the weakness is the probability that all of them fail at once,
    disconnecting it.  Zero when nothing can be disconnected any more
    (no free line leaves any node); the candidate is the free incident
    line most likely to fail.
    """
    failed = lat.lo.bits
    free = lat.free_mask

    # union-find contraction over fixed-operational lines
    parent = {b.id: b.id for b in model.buses}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ln in model.lines:
        bit = ln.component_id - 1
        if not (failed >> bit) & 1 and not (free >> bit) & 1:
            ru, rv = find(ln.from_bus), find(ln.to_bus)
            if ru != rv:
                # keep the smallest original bus id as the representative
                parent[max(ru, rv)] = min(ru, rv)

    incident: dict[int, list[int]] = {find(b.id): [] for b in model.buses}
    for ln in model.lines:
        bit = ln.component_id - 1
        if not (free >> bit) & 1:
            continue
        ru, rv = find(ln.from_bus), find(ln.to_bus)
        if ru == rv:
            # endpoints already inseparable; this line cannot island anything
            continue
        incident[ru].append(ln.component_id)
        incident[rv].append(ln.component_id)

    weakest = min(incident, key=lambda b: (len(incident[b]), b))
    lines_at_weakest = incident[weakest]
    if not lines_at_weakest:
        return 0.0, None

    q = model.unavailability
    candidate = max(lines_at_weakest, key=lambda c: (q[c - 1], -c))
    q_t = 1.0
    for c in lines_at_weakest:
        q_t *= q[c - 1]
    return q_t, candidate


def generation_weakness(model: SystemModel, lat: Lattice) -> tuple[float, int | None]:
    """Weakness of the generation side of an interval.

    The surplus is the capacity of all not-fixed-failed generators minus
    total load.  Free generators are taken in descending capacity (ties
    by ascending id); the weakness is the probability that the shortest
    prefix covering the surplus fails jointly.  Returns 0 when no prefix
    is large enough or nothing is free; a nonpositive surplus means any
    failure breaches adequacy and degenerates to weakness 1.
    """
    failed = lat.lo.bits
    free = lat.free_mask
    q = model.unavailability

    surplus = -model.total_load_mw
    for g in model.generators:
        if not (failed >> (g.component_id - 1)) & 1:
            surplus += g.capacity_mw

    free_gens = [
        g for g in model.generators if (free >> (g.component_id - 1)) & 1
    ]
    if not free_gens:
        return 0.0, None
    free_gens.sort(key=lambda g: (-g.capacity_mw, g.component_id))
    candidate = free_gens[0].component_id
    if surplus <= 0:
        return 1.0, candidate

    covered = 0.0
    q_g = 1.0
    for g in free_gens:
        covered += g.capacity_mw
        q_g *= q[g.component_id - 1]
        if covered >= surplus:
            return q_g, candidate
    return 0.0, None


def importance(model: SystemModel, lat: Lattice) -> ImportanceIndex:
    """Importance index of a mixed interval."""
    q_t, _ = transmission_weakness(model, lat)
    q_g, _ = generation_weakness(model, lat)
    return ImportanceIndex(
        pi=lattice_probability(model, lat) * max(q_t, q_g), q_t=q_t, q_g=q_g
    )


def select_component(
    q_t: float,
    candidate_line: int | None,
    q_g: float,
    candidate_gen: int | None,
) -> int | None:
    """Pick the split component: the weakest line when the transmission
    side dominates strictly, otherwise the largest free generator,
    falling back to whichever side has a candidate.  Returns None when
    neither side proposed one (caller falls back to the lowest free id).
    """
    if q_t > q_g:
        return candidate_line if candidate_line is not None else candidate_gen
    return candidate_gen if candidate_gen is not None else candidate_line


def run_dichotomy(
    model: SystemModel,
    stop: StopCriteria,
    *,
    solver: DcOpf | None = None,
    classify_max: bool = False,
    trace_hook=None,
) -> PartitionLedger:
    """Partition the state space until a stopping criterion fires.

    Per iteration: pop the most important mixed interval, split it on
    the selected component, evaluate the shed of the upper half's
    minimum element (exactly one evaluation), then file the upper half
    as failed or mixed and push the lower half back (its minimum is the
    popped interval's, already known normal).  Zero-dimensional normal
    remainders are retired.  With classify_max=True the maximum element
    of every would-be mixed interval is also evaluated so fully normal
    intervals retire early; off by default.
    """
    if solver is None:
        solver = solver_for(model)
    ledger = PartitionLedger(n=model.n)
    start = time.perf_counter()

    full = Lattice.full_space(model.n)
    base_shed = solver.shed_total(full.lo)
    ledger.opf_count = 1
    if base_shed > EPS_SHED:
        # nothing to partition: every state is failed
        ledger.failed.append(FailedLattice(full, base_shed, 1.0))
        ledger.lolp_lower = 1.0
        ledger.trace.append(TraceRow(0, 1, 1.0, 0.0, 1, _ms(start)))
        return ledger

    seq = 0

    def push_mixed(lat: Lattice, prob: float):
        nonlocal seq
        q_t, cand_line = transmission_weakness(model, lat)
        q_g, cand_gen = generation_weakness(model, lat)
        pi = prob * max(q_t, q_g)
        heapq.heappush(
            ledger.mixed,
            _MixedEntry(-pi, seq, lat, prob, q_t, cand_line, q_g, cand_gen),
        )
        ledger.mixed_mass += prob
        seq += 1

    def file_sublattice(lat: Lattice, prob: float, shed_lo: float):
        """Route one half of a split: failed list, normal retirement, or
        the mixed heap.  shed_lo is the known shed of the minimum element
        (0.0 for lower halves, whose minimum is inherited)."""
        if shed_lo > EPS_SHED:
            ledger.failed.append(FailedLattice(lat, shed_lo, prob))
            ledger.lolp_lower += prob
            window.append(prob)
            return
        if lat.dimension == 0:
            ledger.normal_mass += prob
            return
        if classify_max:
            ledger.opf_count += 1
            cls = classify(0, solver.structure(lat.hi))
            if cls is LatticeClass.NORMAL:
                ledger.normal_mass += prob
                return
        push_mixed(lat, prob)

    window: deque[float] = deque(maxlen=stop.window)
    push_mixed(full, 1.0)
    availability = model.availability.tolist()
    unavailability = model.unavailability.tolist()
    iteration = 0

    while ledger.mixed:
        if stop.max_opf is not None and ledger.opf_count >= stop.max_opf:
            break
        if stop.mixed_mass_below is not None and ledger.mixed_mass <= stop.mixed_mass_below:
            break
        if (
            stop.avg_failed_prob_below is not None
            and len(window) == stop.window
            and sum(window) / stop.window < stop.avg_failed_prob_below
        ):
            break

        entry = heapq.heappop(ledger.mixed)
        ledger.mixed_mass -= entry.probability
        comp = select_component(
            entry.q_t, entry.candidate_line, entry.q_g, entry.candidate_gen
        )
        if comp is None:
            comp = entry.lattice.free_ids()[0]
            log.info("no strategy candidate; splitting on component %d", comp)

        lower, upper = split(entry.lattice, comp)
        p_low = entry.probability * availability[comp - 1]
        p_up = entry.probability * unavailability[comp - 1]

        shed_up = solver.shed_total(upper.lo)
        ledger.opf_count += 1
        iteration += 1

        file_sublattice(upper, p_up, shed_up)
        # the lower half keeps the popped interval's minimum, known normal
        file_sublattice(lower, p_low, 0.0)

        row = TraceRow(
            iteration,
            ledger.opf_count,
            ledger.lolp_lower,
            ledger.mixed_mass,
            len(ledger.failed),
            _ms(start),
        )
        ledger.trace.append(row)
        if trace_hook is not None:
            trace_hook(row)

    return ledger


def _ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0

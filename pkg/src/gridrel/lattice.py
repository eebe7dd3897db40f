"""Boolean-lattice algebra over the component state space.

A state is an n-bit word, bit i-1 holding the status of component i
(0 operational, 1 failed).  Under the componentwise partial order the
state space is an n-dimensional Boolean lattice, and any closed interval
[lo, hi] with lo <= hi is itself a Boolean lattice: components set in lo
are fixed failed, components clear in hi are fixed operational, and the
remaining components are free.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .errors import MonotonicityError
from .system_model import SystemModel


@dataclass(frozen=True)
class State:
    """One assignment of operational/failed statuses to all n components."""

    bits: int
    n: int

    def __post_init__(self):
        if self.bits < 0 or (self.n < self.bits.bit_length()):
            raise ValueError(f"bits 0x{self.bits:x} do not fit width {self.n}")

    @property
    def level(self) -> int:
        """Number of failed components."""
        return self.bits.bit_count()

    def failed_ids(self) -> tuple[int, ...]:
        """1-based ids of failed components, ascending."""
        return tuple(i + 1 for i in range(self.n) if (self.bits >> i) & 1)

    @classmethod
    def from_failed_ids(cls, ids, n: int) -> "State":
        bits = 0
        for i in ids:
            if not 1 <= i <= n:
                raise ValueError(f"component id {i} outside 1..{n}")
            bits |= 1 << (i - 1)
        return cls(bits, n)

    def __le__(self, other: "State") -> bool:
        """Componentwise partial order (subset of failed components)."""
        return self.bits & other.bits == self.bits

    def __str__(self) -> str:
        return format_failed_ids(self.failed_ids())


def format_failed_ids(ids) -> str:
    """Serialize a failed-component set as ``{20}`` or ``{22,23}``."""
    return "{" + ",".join(str(i) for i in ids) + "}"


class LatticeClass(Enum):
    NORMAL = "normal"
    FAILED = "failed"
    MIXED = "mixed"


@dataclass(frozen=True)
class Lattice:
    """Closed interval [lo, hi] of states; lo is the minimum element."""

    lo: State
    hi: State

    def __post_init__(self):
        if self.lo.n != self.hi.n:
            raise ValueError("interval endpoints have different widths")
        if self.lo.bits & self.hi.bits != self.lo.bits:
            raise ValueError("interval endpoints not ordered: lo <= hi required")

    @property
    def n(self) -> int:
        return self.lo.n

    @property
    def free_mask(self) -> int:
        return self.lo.bits ^ self.hi.bits

    @property
    def dimension(self) -> int:
        return self.free_mask.bit_count()

    @property
    def num_states(self) -> int:
        return 1 << self.dimension

    def free_ids(self) -> tuple[int, ...]:
        mask = self.free_mask
        return tuple(i + 1 for i in range(self.n) if (mask >> i) & 1)

    def is_free(self, component_id: int) -> bool:
        return bool((self.free_mask >> (component_id - 1)) & 1)

    def contains(self, state: State) -> bool:
        b = state.bits
        return (self.lo.bits & b == self.lo.bits) and (b & self.hi.bits == b)

    def states(self) -> Iterator[State]:
        """Enumerate all states in the interval; only sane for small dimension."""
        free = [i for i in range(self.n) if (self.free_mask >> i) & 1]
        base = self.lo.bits
        for sub in range(1 << len(free)):
            bits = base
            for j, pos in enumerate(free):
                if (sub >> j) & 1:
                    bits |= 1 << pos
            yield State(bits, self.n)

    @classmethod
    def full_space(cls, n: int) -> "Lattice":
        return cls(State(0, n), State((1 << n) - 1, n))


def classify(phi_min: int, phi_max: int) -> LatticeClass:
    """Interval class from the statuses of its endpoints.

    Failed if the minimum element already sheds; normal if the maximum
    does not; mixed otherwise.  The combination (1, 0) is impossible for
    a monotone system and raises rather than guessing.
    """
    if phi_min not in (0, 1) or phi_max not in (0, 1):
        raise ValueError("statuses must be 0 or 1")
    if phi_min == 1 and phi_max == 0:
        raise MonotonicityError(
            "endpoint statuses (1, 0): shedding oracle is not order-preserving"
        )
    if phi_min == 1:
        return LatticeClass.FAILED
    if phi_max == 0:
        return LatticeClass.NORMAL
    return LatticeClass.MIXED


def split(lat: Lattice, component_id: int) -> tuple[Lattice, Lattice]:
    """Partition an interval on one free component.

    Returns (lower, upper): the sub-interval where the component is
    operational and the one where it is failed.  Both keep every other
    fixed component and have dimension one less than the input.
    """
    bit = 1 << (component_id - 1)
    if not lat.free_mask & bit:
        raise ValueError(f"component {component_id} is not free in {lat.lo}..{lat.hi}")
    n = lat.n
    lower = Lattice(lat.lo, State(lat.hi.bits & ~bit, n))
    upper = Lattice(State(lat.lo.bits | bit, n), lat.hi)
    return lower, upper


def lattice_probability(model: SystemModel, lat: Lattice) -> float:
    """Total probability mass of an interval.

    Equals the product of availabilities of fixed-operational components
    and unavailabilities of fixed-failed ones; free components sum out
    to a factor of one.
    """
    a = model.availability
    q = model.unavailability
    failed = lat.lo.bits
    operational = ~lat.hi.bits
    p = 1.0
    for i in range(model.n):
        if (failed >> i) & 1:
            p *= q[i]
        elif (operational >> i) & 1:
            p *= a[i]
    return float(p)


def sample_state(lat: Lattice, model: SystemModel, rng) -> State:
    """Draw one state from the interval with probability P(s) / P(L).

    Fixed bits are copied; each free component fails independently with
    its own unavailability.  ``rng`` is a seeded numpy Generator so that
    parallel callers can use independent streams.
    """
    free = lat.free_mask
    if not free:
        return lat.lo
    positions = [i for i in range(lat.n) if (free >> i) & 1]
    u = rng.random(len(positions))
    q = model.unavailability
    bits = lat.lo.bits
    for j, pos in enumerate(positions):
        if u[j] < q[pos]:
            bits |= 1 << pos
    return State(bits, lat.n)

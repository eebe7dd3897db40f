"""Power-system data model and system description ingestion.

A system is a set of buses, generators, and transmission lines.  Every
generator and every line is a two-state component with an unavailability
(forced outage rate) ``q``; components are numbered 1..n with generators
first, in declaration order, followed by lines.  Bit ``i-1`` of a state
word is the status of component ``i`` (0 operational, 1 failed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SystemModelError

GENERATOR = "generator"
LINE = "line"


@dataclass(frozen=True)
class Component:
    """Reliability parameters of one two-state component.

    ``availability`` is always defined as ``1 - unavailability``; when
    failure/repair rates are supplied, ``unavailability`` is derived as
    ``lambda / (lambda + mu)``.
    """

    id: int
    kind: str
    unavailability: float
    failure_rate: float | None = None
    repair_rate: float | None = None

    @property
    def availability(self) -> float:
        return 1.0 - self.unavailability


@dataclass(frozen=True)
class Bus:
    id: int
    load_mw: float


@dataclass(frozen=True)
class Generator:
    component_id: int
    bus: int
    capacity_mw: float
    p_min_mw: float = 0.0


@dataclass(frozen=True)
class Line:
    component_id: int
    from_bus: int
    to_bus: int
    reactance_pu: float
    rating_mw: float


@dataclass(frozen=True)
class SystemModel:
    """Immutable container for one system; safe to share across workers.

    Component order is generators first (ids 1..NG in declaration order)
    then lines (ids NG+1..n).  Derived arrays are cached on first use.
    """

    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    lines: tuple[Line, ...]
    components: tuple[Component, ...]
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        _validate(self)

    @property
    def n(self) -> int:
        """Total number of components."""
        return len(self.components)

    @property
    def num_generators(self) -> int:
        return len(self.generators)

    @property
    def num_lines(self) -> int:
        return len(self.lines)

    @property
    def total_load_mw(self) -> float:
        return float(sum(b.load_mw for b in self.buses))

    @property
    def total_capacity_mw(self) -> float:
        return float(sum(g.capacity_mw for g in self.generators))

    @property
    def unavailability(self) -> np.ndarray:
        """q per component, indexed by component id - 1."""
        cached = self.__dict__.get("_unavailability")
        if cached is None:
            cached = np.array([c.unavailability for c in self.components])
            self.__dict__["_unavailability"] = cached
        return cached

    @property
    def availability(self) -> np.ndarray:
        """a = 1 - q per component, indexed by component id - 1."""
        cached = self.__dict__.get("_availability")
        if cached is None:
            cached = 1.0 - self.unavailability
            self.__dict__["_availability"] = cached
        return cached

    def component(self, component_id: int) -> Component:
        return self.components[component_id - 1]

    def bus_index(self, bus_id: int) -> int:
        cached = self.__dict__.get("_bus_index")
        if cached is None:
            cached = {b.id: i for i, b in enumerate(self.buses)}
            self.__dict__["_bus_index"] = cached
        return cached[bus_id]

    def generator_ids(self) -> range:
        return range(1, self.num_generators + 1)

    def line_ids(self) -> range:
        return range(self.num_generators + 1, self.n + 1)

    def is_line(self, component_id: int) -> bool:
        return component_id > self.num_generators

    def line_for_component(self, component_id: int) -> Line:
        return self.lines[component_id - self.num_generators - 1]

    def generator_for_component(self, component_id: int) -> Generator:
        return self.generators[component_id - 1]


def _component_q(entry: dict, label: str) -> tuple[float, float | None, float | None]:
    """Resolve unavailability from either a direct q or (lambda, mu) rates."""
    has_q = "q" in entry
    has_rates = "lambda" in entry or "mu" in entry
    if has_q and has_rates:
        raise SystemModelError(f"{label}: give either q or lambda+mu, not both")
    if has_q:
        q = float(entry["q"])
        lam = mu = None
    elif "lambda" in entry and "mu" in entry:
        lam = float(entry["lambda"])
        mu = float(entry["mu"])
        if lam < 0 or mu <= 0:
            raise SystemModelError(f"{label}: rates must satisfy lambda >= 0, mu > 0")
        q = lam / (lam + mu)
    else:
        raise SystemModelError(f"{label}: missing reliability data (q or lambda+mu)")
    if not 0.0 <= q < 1.0:
        raise SystemModelError(f"{label}: unavailability q={q} outside [0, 1)")
    return q, lam, mu


def load_system(path: str | Path) -> SystemModel:
    """Load and validate a system description file.

    The file is a JSON object with keys ``buses``, ``generators``,
    ``lines`` and ``base_mva``; component ids are assigned by position
    (generators first, then lines) and never stored in the file.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise SystemModelError(f"{path}: not valid JSON ({exc})") from exc

    for key in ("buses", "generators", "lines"):
        if key not in raw or not isinstance(raw[key], list):
            raise SystemModelError(f"{path}: missing or non-array key '{key}'")

    buses = []
    for i, entry in enumerate(raw["buses"]):
        try:
            buses.append(Bus(id=int(entry["id"]), load_mw=float(entry["load_mw"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SystemModelError(f"bus entry {i}: {exc!r}") from exc

    components = []
    generators = []
    for i, entry in enumerate(raw["generators"]):
        cid = len(components) + 1
        label = f"generator {cid}"
        try:
            gen = Generator(
                component_id=cid,
                bus=int(entry["bus"]),
                capacity_mw=float(entry["capacity_mw"]),
                p_min_mw=float(entry.get("p_min_mw", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SystemModelError(f"{label}: {exc!r}") from exc
        q, lam, mu = _component_q(entry, label)
        generators.append(gen)
        components.append(Component(cid, GENERATOR, q, lam, mu))

    lines = []
    for i, entry in enumerate(raw["lines"]):
        cid = len(components) + 1
        label = f"line {cid}"
        try:
            line = Line(
                component_id=cid,
                from_bus=int(entry["from"]),
                to_bus=int(entry["to"]),
                reactance_pu=float(entry["reactance_pu"]),
                rating_mw=float(entry["rating_mw"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SystemModelError(f"{label}: {exc!r}") from exc
        q, lam, mu = _component_q(entry, label)
        lines.append(line)
        components.append(Component(cid, LINE, q, lam, mu))

    return SystemModel(
        buses=tuple(buses),
        generators=tuple(generators),
        lines=tuple(lines),
        components=tuple(components),
        base_mva=float(raw.get("base_mva", 100.0)),
        name=str(raw.get("name", path.stem)),
    )


def _validate(model: SystemModel) -> None:
    if not model.buses:
        raise SystemModelError("system has no buses")
    bus_ids = [b.id for b in model.buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise SystemModelError("duplicate bus ids")
    known = set(bus_ids)

    if len(model.components) != len(model.generators) + len(model.lines):
        raise SystemModelError("component count does not match generators + lines")
    for i, comp in enumerate(model.components):
        if comp.id != i + 1:
            raise SystemModelError(f"component ids not contiguous at position {i}")
        expected = GENERATOR if i < len(model.generators) else LINE
        if comp.kind != expected:
            raise SystemModelError(f"component {comp.id}: expected kind {expected}")
        if not 0.0 <= comp.unavailability < 1.0:
            raise SystemModelError(
                f"component {comp.id}: unavailability {comp.unavailability} outside [0, 1)"
            )

    for b in model.buses:
        if b.load_mw < 0:
            raise SystemModelError(f"bus {b.id}: negative load {b.load_mw}")
    for g in model.generators:
        if g.bus not in known:
            raise SystemModelError(
                f"generator {g.component_id} references unknown bus {g.bus}"
            )
        if g.capacity_mw <= 0:
            raise SystemModelError(
                f"generator {g.component_id}: nonpositive capacity {g.capacity_mw}"
            )
        if g.p_min_mw > g.capacity_mw or g.p_min_mw < 0:
            raise SystemModelError(
                f"generator {g.component_id}: p_min {g.p_min_mw} outside [0, capacity]"
            )
    for ln in model.lines:
        if ln.from_bus not in known or ln.to_bus not in known:
            raise SystemModelError(
                f"line {ln.component_id} references unknown bus "
                f"{ln.from_bus if ln.from_bus not in known else ln.to_bus}"
            )
        if ln.from_bus == ln.to_bus:
            raise SystemModelError(f"line {ln.component_id}: from_bus equals to_bus")
        if ln.rating_mw <= 0:
            raise SystemModelError(f"line {ln.component_id}: nonpositive rating")
        if ln.reactance_pu <= 0:
            raise SystemModelError(f"line {ln.component_id}: nonpositive reactance")

    # base graph (all lines in service) must be connected
    adjacency: dict[int, list[int]] = {b.id: [] for b in model.buses}
    for ln in model.lines:
        adjacency[ln.from_bus].append(ln.to_bus)
        adjacency[ln.to_bus].append(ln.from_bus)
    if len(model.buses) > 1:
        seen = {model.buses[0].id}
        stack = [model.buses[0].id]
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if seen != known:
            missing = sorted(known - seen)
            raise SystemModelError(f"base graph disconnected: unreachable buses {missing}")


def state_probability(model: SystemModel, state) -> float:
    """Probability of one state: product of a over operational components
    and q over failed ones.  Always strictly positive for q < 1."""
    bits = getattr(state, "bits", state)
    if bits < 0 or bits >> model.n:
        raise ValueError(f"state does not fit {model.n} components")
    a = model.availability
    q = model.unavailability
    p = 1.0
    for i in range(model.n):
        p *= q[i] if (bits >> i) & 1 else a[i]
    return float(p)


def fixture_path(name: str) -> Path:
    """Path of a bundled system description (``rbts`` or ``rts79``)."""
    stem = name.removesuffix(".json")
    ref = resources.files("gridrel.data").joinpath(f"{stem}.json")
    with resources.as_file(ref) as p:
        if not p.exists():
            raise FileNotFoundError(f"no bundled system named {name!r}")
        return Path(p)

"""Optimal load shedding for a component state via DC power flow.

For a state s the network keeps only in-service lines and in-service
generators.  Each connected island is dispatched independently to
minimize total curtailment subject to the B-theta DC power flow, line
ratings, generator limits, and per-bus shed bounds; an island with no
in-service generation sheds all of its load outright.  The binary
structure function is 1 whenever the minimum shed exceeds a small
tolerance separating genuine curtailment from LP round-off.

Results are cached.  Two states produce the same island LPs whenever
they keep the same set of lines and the same per-bus aggregate generator
capacity, so the cache is keyed on that pair rather than on the raw
component set; this is exact and raises the hit rate enormously during
enumeration and sampling.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import OpfSolveError
from .lattice import State
from .system_model import SystemModel

EPS_SHED = 1e-6   # MW; curtailment below this counts as zero
FLOW_TOL = 1e-6   # MW; allowance on rating checks for solver round-off


@dataclass(frozen=True)
class OpfResult:
    """Load-shedding solution for one state.

    shed_by_bus covers load buses only; dispatch covers in-service
    generators (keyed by component id); line_flows covers in-service
    lines (keyed by component id, positive from from_bus to to_bus).
    """

    shed_total: float
    shed_by_bus: dict[int, float]
    dispatch: dict[int, float]
    line_flows: dict[int, float]
    status: str = "optimal"


class _CachedSolution:
    __slots__ = ("shed_total", "shed_by_bus", "gen_by_bus")

    def __init__(self, shed_total, shed_by_bus, gen_by_bus):
        self.shed_total = shed_total
        self.shed_by_bus = shed_by_bus
        self.gen_by_bus = gen_by_bus


class DcOpf:
    """Shedding evaluator for one system, with a shared solution cache.

    Pure function of (model, state): repeated evaluations return
    identical values, and the cache never changes them.  Safe for
    concurrent use; a duplicated miss recomputes the same solution.
    """

    def __init__(self, model: SystemModel, threads: int = 1):
        self.model = model
        self.threads = max(1, threads)
        self.evaluations = 0
        self._lock = threading.Lock()
        self._cache: dict = {}

        nb = len(model.buses)
        self._nb = nb
        self._ng = model.num_generators
        self._nl = model.num_lines
        self._load = np.array([b.load_mw for b in model.buses])
        self._gen_bus = np.array(
            [model.bus_index(g.bus) for g in model.generators], dtype=np.intp
        )
        self._gen_cap = np.array([g.capacity_mw for g in model.generators])
        self._gen_pmin = np.array([g.p_min_mw for g in model.generators])
        self._has_pmin = bool(np.any(self._gen_pmin > 0))
        self._line_u = np.array(
            [model.bus_index(ln.from_bus) for ln in model.lines], dtype=np.intp
        )
        self._line_v = np.array(
            [model.bus_index(ln.to_bus) for ln in model.lines], dtype=np.intp
        )
        self._line_b = np.array([1.0 / ln.reactance_pu for ln in model.lines])
        self._line_rating = np.array([ln.rating_mw for ln in model.lines])

        self._base_bus_cap = np.zeros(nb)
        self._base_bus_pmin = np.zeros(nb)
        for g in model.generators:
            self._base_bus_cap[model.bus_index(g.bus)] += g.capacity_mw
            self._base_bus_pmin[model.bus_index(g.bus)] += g.p_min_mw

    # -- state decoding ------------------------------------------------

    def _masks(self, state) -> tuple[int, int]:
        bits = getattr(state, "bits", state)
        gen_failed = bits & ((1 << self._ng) - 1)
        lines_up = ~(bits >> self._ng) & ((1 << self._nl) - 1)
        return gen_failed, lines_up

    def bus_capacity(self, gen_failed: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-bus in-service (capacity, p_min) left by a failed-gen mask."""
        return self._bus_capacity(gen_failed)

    def _bus_capacity(self, gen_failed: int) -> tuple[np.ndarray, np.ndarray]:
        cap = self._base_bus_cap.copy()
        pmin = self._base_bus_pmin
        if gen_failed:
            if self._has_pmin:
                pmin = pmin.copy()
            m = gen_failed
            while m:
                i = (m & -m).bit_length() - 1
                cap[self._gen_bus[i]] -= self._gen_cap[i]
                if self._has_pmin:
                    pmin[self._gen_bus[i]] -= self._gen_pmin[i]
                m &= m - 1
        return cap, pmin

    def _islands(self, lines_up: int) -> list[list[int]]:
        adjacency: list[list[int]] = [[] for _ in range(self._nb)]
        m = lines_up
        while m:
            j = (m & -m).bit_length() - 1
            u, v = self._line_u[j], self._line_v[j]
            adjacency[u].append(v)
            adjacency[v].append(u)
            m &= m - 1
        seen = [False] * self._nb
        islands = []
        for start in range(self._nb):
            if seen[start]:
                continue
            seen[start] = True
            stack = [start]
            nodes = [start]
            while stack:
                for nxt in adjacency[stack.pop()]:
                    if not seen[nxt]:
                        seen[nxt] = True
                        stack.append(nxt)
                        nodes.append(nxt)
            islands.append(nodes)
        return islands

    # -- core solve ----------------------------------------------------

    def shed_total(self, state) -> float:
        """Minimum total curtailment C(s) in MW."""
        return self._solution(state).shed_total

    def shed_many(self, states) -> list[float]:
        """Sheds for a batch of states, in input order.

        With threads > 1 large batches are evaluated by a worker pool;
        the cache makes duplicated misses benign and the ordered join
        keeps results identical to the sequential path.
        """
        states = list(states)
        if self.threads > 1 and len(states) > 256:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(self.shed_total, states, chunksize=64))
        return [self.shed_total(s) for s in states]

    def structure(self, state) -> int:
        """1 if the state sheds load (C(s) > EPS_SHED), else 0."""
        return 1 if self._solution(state).shed_total > EPS_SHED else 0

    def solve(self, state) -> OpfResult:
        """Full per-bus / per-component solution for one state."""
        gen_failed, lines_up = self._masks(state)
        sol = self._solution(state)
        shed_by_bus = {
            b.id: float(sol.shed_by_bus[i])
            for i, b in enumerate(self.model.buses)
            if b.load_mw > 0
        }
        dispatch = self._disaggregate(sol.gen_by_bus, gen_failed)
        line_flows = self._flows(sol, lines_up)
        return OpfResult(
            shed_total=float(sol.shed_total),
            shed_by_bus=shed_by_bus,
            dispatch=dispatch,
            line_flows=line_flows,
        )

    def _solution(self, state) -> _CachedSolution:
        gen_failed, lines_up = self._masks(state)
        cap, pmin = self._bus_capacity(gen_failed)
        key = (lines_up, cap.tobytes(), pmin.tobytes() if self._has_pmin else None)
        sol = self._cache.get(key)
        self.evaluations += 1
        if sol is None:
            sol = self._compute(lines_up, cap, pmin, state)
            with self._lock:
                self._cache.setdefault(key, sol)
        return sol

    def _compute(self, lines_up, cap, pmin, state) -> _CachedSolution:
        nb = self._nb
        shed = np.zeros(nb)
        gen = np.zeros(nb)
        for island in self._islands(lines_up):
            self._solve_island(island, lines_up, cap, pmin, shed, gen, state)
        np.clip(shed, 0.0, self._load, out=shed)
        return _CachedSolution(float(shed.sum()), shed, gen)

    def _solve_island(self, island, lines_up, cap, pmin, shed, gen, state):
        load_total = float(self._load[island].sum())
        cap_total = float(cap[island].sum())
        if load_total == 0.0 and cap_total <= 0.0:
            return
        lines = [
            j
            for j in range(self._nl)
            if (lines_up >> j) & 1 and self._line_u[j] in island
        ] if len(island) > 1 else []

        # islands with no in-service generation shed everything
        if cap_total <= 0.0:
            shed[island] = self._load[island]
            return
        # ratings cannot bind when every line can carry the whole island
        # load, so adequacy alone decides the shed
        pmin_total = float(pmin[island].sum()) if self._has_pmin else 0.0
        min_rating = min((self._line_rating[j] for j in lines), default=np.inf)
        if pmin_total == 0.0 and min_rating >= load_total:
            deficit = max(0.0, load_total - cap_total)
            self._greedy_island(island, cap, deficit, load_total, shed, gen)
            return

        self._lp_island(island, lines, cap, pmin, shed, gen, state)

    def _greedy_island(self, island, cap, deficit, load_total, shed, gen):
        """Bus-by-bus assignment when the network cannot constrain."""
        remaining = deficit
        for b in island:
            take = min(self._load[b], remaining)
            shed[b] = take
            remaining -= take
        serve = load_total - deficit
        for b in island:
            give = min(cap[b], serve)
            gen[b] = give
            serve -= give

    def _lp_island(self, island, lines, cap, pmin, shed, gen, state):
        k = len(island)
        pos = {b: i for i, b in enumerate(island)}
        gen_buses = [b for b in island if cap[b] > 0]
        load_buses = [b for b in island if self._load[b] > 0]
        m = len(lines)
        kg, kd = len(gen_buses), len(load_buses)
        nvar = k + kg + kd + m

        cost = np.zeros(nvar)
        cost[k + kg : k + kg + kd] = 1.0

        a_eq = np.zeros((m + k, nvar))
        b_eq = np.zeros(m + k)
        for r, j in enumerate(lines):
            u, v = pos[self._line_u[j]], pos[self._line_v[j]]
            a_eq[r, u] = self._line_b[j]
            a_eq[r, v] = -self._line_b[j]
            a_eq[r, k + kg + kd + r] = -1.0
            a_eq[m + u, k + kg + kd + r] -= 1.0
            a_eq[m + v, k + kg + kd + r] += 1.0
        for i, b in enumerate(gen_buses):
            a_eq[m + pos[b], k + i] = 1.0
        for i, b in enumerate(load_buses):
            a_eq[m + pos[b], k + kg + i] = 1.0
        for i, b in enumerate(island):
            b_eq[m + i] = self._load[b]

        bounds = [(None, None)] * k
        bounds[0] = (0.0, 0.0)  # angle reference: first bus of the island
        bounds += [(float(pmin[b]), float(cap[b])) for b in gen_buses]
        bounds += [(0.0, float(self._load[b])) for b in load_buses]
        bounds += [(-float(self._line_rating[j]), float(self._line_rating[j])) for j in lines]

        res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if not res.success:
            raise OpfSolveError(
                f"load-shedding LP failed (status {res.status}: {res.message}) "
                f"for state {getattr(state, 'failed_ids', lambda: state)()}",
                state=state,
            )
        x = res.x
        for i, b in enumerate(gen_buses):
            gen[b] = x[k + i]
        for i, b in enumerate(load_buses):
            shed[b] = x[k + kg + i]

    # -- detail reconstruction ------------------------------------------

    def _disaggregate(self, gen_by_bus, gen_failed) -> dict[int, float]:
        """Split per-bus dispatch over in-service units, p_min first then
        greedy fill in component order."""
        by_bus: dict[int, list[int]] = {}
        for i in range(self._ng):
            if not (gen_failed >> i) & 1:
                by_bus.setdefault(int(self._gen_bus[i]), []).append(i)
        dispatch = {}
        for b, units in by_bus.items():
            remaining = float(gen_by_bus[b]) - sum(float(self._gen_pmin[i]) for i in units)
            for i in units:
                extra = min(float(self._gen_cap[i] - self._gen_pmin[i]), max(0.0, remaining))
                dispatch[i + 1] = float(self._gen_pmin[i]) + extra
                remaining -= extra
        return dispatch

    def _flows(self, sol, lines_up) -> dict[int, float]:
        """DC flows implied by the cached injections, island by island."""
        injection = sol.gen_by_bus - self._load + sol.shed_by_bus
        flows: dict[int, float] = {}
        for island in self._islands(lines_up):
            if len(island) < 2:
                continue
            lines = [
                j
                for j in range(self._nl)
                if (lines_up >> j) & 1 and self._line_u[j] in island
            ]
            if not lines:
                continue
            k = len(island)
            pos = {b: i for i, b in enumerate(island)}
            b_mat = np.zeros((k, k))
            for j in lines:
                u, v = pos[self._line_u[j]], pos[self._line_v[j]]
                b_mat[u, u] += self._line_b[j]
                b_mat[v, v] += self._line_b[j]
                b_mat[u, v] -= self._line_b[j]
                b_mat[v, u] -= self._line_b[j]
            theta = np.zeros(k)
            theta[1:] = np.linalg.solve(b_mat[1:, 1:], injection[island][1:])
            for j in lines:
                u, v = pos[self._line_u[j]], pos[self._line_v[j]]
                flows[self._ng + j + 1] = float((theta[u] - theta[v]) * self._line_b[j])
        return flows

    @property
    def cache_size(self) -> int:
        return len(self._cache)


_solver_registry: dict[int, DcOpf] = {}
_registry_lock = threading.Lock()


def solver_for(model: SystemModel) -> DcOpf:
    """Shared evaluator for a model; one cache per model per process."""
    key = id(model)
    solver = _solver_registry.get(key)
    if solver is None or solver.model is not model:
        with _registry_lock:
            solver = _solver_registry.get(key)
            if solver is None or solver.model is not model:
                solver = DcOpf(model)
                _solver_registry[key] = solver
    return solver


def solve_opf(model: SystemModel, state: State) -> OpfResult:
    """Minimize total load shedding for one state."""
    return solver_for(model).solve(state)


def structure(model: SystemModel, state: State) -> int:
    """Structure function: 1 iff the state sheds more than EPS_SHED."""
    return solver_for(model).structure(state)

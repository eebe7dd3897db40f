import math

import numpy as np
import pytest

from gridrel import DcOpf, State, solve_opf, structure
from gridrel.opf import EPS_SHED, FLOW_TOL

from oracles import lp_min_by_vertex_enumeration, make_system, triangle_system


def bits_of(ids, n):
    return State.from_failed_ids(ids, n).bits


# -- benchmark values -----------------------------------------------------------

def test_rbts_base_case_is_normal(rbts, rbts_solver):
    assert rbts_solver.shed_total(0) == 0.0
    assert structure(rbts, State(0, 20)) == 0


def test_rbts_bus6_feed_outage(rbts, rbts_solver):
    shed = rbts_solver.shed_total(bits_of([20], 20))
    assert shed == pytest.approx(20.0, abs=1e-6)
    assert rbts_solver.structure(bits_of([20], 20)) == 1


def test_rts79_double_400mw_outage(rts79, rts79_solver):
    assert rts79_solver.shed_total(bits_of([22, 23], 70)) == pytest.approx(245.0, abs=1e-6)


def test_rts79_base_case_is_normal(rts79_solver):
    assert rts79_solver.shed_total(0) == 0.0


def test_rts79_islanded_bus7_self_sufficient(rts79_solver):
    # the only feed of bus 7 fails, but its local units cover the load
    assert rts79_solver.shed_total(bits_of([43], 70)) == 0.0
    assert rts79_solver.shed_total(bits_of([22, 43], 70)) == pytest.approx(20.0, abs=1e-6)


# -- independent LP oracle ---------------------------------------------------------

def _triangle_oracle(failed_line=None):
    """Hand-built shedding LP for the triangle system, solved by vertex
    enumeration.  Variables: theta2, theta3, g1, g2, c3, flows."""
    lines = {  # id: (u, v, susceptance 1/x, rating)
        1: (1, 2, 10.0, 100.0),
        2: (1, 3, 5.0, 45.0),
        3: (2, 3, 5.0, 100.0),
    }
    if failed_line is not None:
        del lines[failed_line]
    line_ids = sorted(lines)
    theta = {1: None, 2: 0, 3: 1}  # bus 1 is the reference, theta1 = 0
    nvar = 2 + 3 + len(line_ids)   # theta2 theta3 g1 g2 c3 + flows
    col_flow = {lid: 5 + k for k, lid in enumerate(line_ids)}

    rows = []
    rhs = []
    for lid in line_ids:
        u, v, b, _ = lines[lid]
        row = [0.0] * nvar
        if theta[u] is not None:
            row[theta[u]] = b
        if theta[v] is not None:
            row[theta[v]] = -b
        row[col_flow[lid]] = -1.0
        rows.append(row)
        rhs.append(0.0)
    balance = {1: ([2], 0.0), 2: ([3], 0.0), 3: ([], 100.0)}
    for bus, (gen_cols, load) in balance.items():
        row = [0.0] * nvar
        for col in gen_cols:
            row[col] = 1.0
        if bus == 3:
            row[4] = 1.0  # shed variable at bus 3
        for lid in line_ids:
            u, v, _, _ = lines[lid]
            if u == bus:
                row[col_flow[lid]] -= 1.0
            if v == bus:
                row[col_flow[lid]] += 1.0
        rows.append(row)
        rhs.append(load)

    cost = [0.0] * nvar
    cost[4] = 1.0
    lower = [-math.inf, -math.inf, 0.0, 0.0, 0.0]
    upper = [math.inf, math.inf, 60.0, 60.0, 100.0]
    for lid in line_ids:
        lower.append(-lines[lid][3])
        upper.append(lines[lid][3])
    return lp_min_by_vertex_enumeration(cost, np.array(rows), np.array(rhs), lower, upper)


def test_triangle_intact_matches_vertex_oracle():
    model = triangle_system()
    oracle = _triangle_oracle()
    shed = DcOpf(model).shed_total(0)
    assert shed == pytest.approx(oracle, abs=1e-7)
    # frozen from the oracle: reactance-driven split hits the 1-3 rating
    assert shed == pytest.approx(5.0, abs=1e-7)


def test_triangle_line_out_matches_vertex_oracle():
    model = triangle_system()
    oracle = _triangle_oracle(failed_line=3)
    shed = DcOpf(model).shed_total(bits_of([5], 5))
    assert shed == pytest.approx(oracle, abs=1e-7)
    # frozen: all supply squeezes through the 45 MW line
    assert shed == pytest.approx(55.0, abs=1e-7)


# -- structural invariants ----------------------------------------------------------

def _random_pairs(rng, n, count, p_low=0.08, p_extra=0.05):
    for _ in range(count):
        s1 = 0
        s2 = 0
        for i in range(n):
            if rng.random() < p_low:
                s1 |= 1 << i
        s2 = s1
        for i in range(n):
            if rng.random() < p_extra:
                s2 |= 1 << i
        yield s1, s2


@pytest.mark.parametrize("fixture_name", ["rbts", "rts79"])
def test_monotonicity_probe(fixture_name, request):
    model = request.getfixturevalue(fixture_name)
    solver = request.getfixturevalue(f"{fixture_name}_solver")
    rng = np.random.default_rng(2024)
    for s1, s2 in _random_pairs(rng, model.n, 1000):
        assert solver.shed_total(s1) <= solver.shed_total(s2) + FLOW_TOL, (
            f"monotonicity violated: C({s1:b}) > C({s2:b})"
        )


def _check_balance(model, result, state_bits):
    gen_total = sum(result.dispatch.values())
    shed_total = sum(result.shed_by_bus.values())
    load_total = model.total_load_mw
    assert gen_total + shed_total == pytest.approx(load_total, abs=1e-6)


def test_conservation_and_ratings_on_samples(rbts, rts79):
    rng = np.random.default_rng(9)
    for model in (rbts, rts79):
        ratings = {ln.component_id: ln.rating_mw for ln in model.lines}
        loads = {b.id: b.load_mw for b in model.buses}
        for _ in range(40):
            bits = 0
            for i in range(model.n):
                if rng.random() < 0.06:
                    bits |= 1 << i
            result = solve_opf(model, State(bits, model.n))
            _check_balance(model, result, bits)
            for cid, flow in result.line_flows.items():
                assert abs(flow) <= ratings[cid] + FLOW_TOL
            for bus, shed in result.shed_by_bus.items():
                assert -1e-9 <= shed <= loads[bus] + 1e-9
            assert 0.0 <= result.shed_total <= model.total_load_mw + 1e-9
            assert result.status == "optimal"


def test_conservation_with_binding_ratings():
    model = triangle_system()
    result = solve_opf(model, State(0, 5))
    assert sum(result.dispatch.values()) + result.shed_total == pytest.approx(100.0, abs=1e-6)
    assert abs(result.line_flows[4]) <= 45.0 + FLOW_TOL  # the binding 1-3 line
    assert result.shed_total == pytest.approx(5.0, abs=1e-6)


def test_determinism_across_solver_instances(rts79):
    state = bits_of([12, 22, 40], 70)
    values = {DcOpf(rts79).shed_total(state) for _ in range(3)}
    assert len(values) == 1
    solver = DcOpf(rts79)
    assert abs(solver.shed_total(state) - solver.shed_total(state)) < 1e-9


def test_structure_tolerance_semantics():
    # deficit of half the tolerance reads as no shedding
    at_eps = make_system([10.0 + EPS_SHED / 2], gens=[(1, 10.0, 0.1)], lines=[])
    assert DcOpf(at_eps).structure(0) == 0
    above = make_system([11.0], gens=[(1, 10.0, 0.1)], lines=[])
    assert DcOpf(above).structure(0) == 1


def test_islanded_load_without_generation_fully_shed():
    model = make_system(
        [0.0, 30.0],
        gens=[(1, 50.0, 0.1)],
        lines=[(1, 2, 0.1, 100.0, 0.05)],
    )
    solver = DcOpf(model)
    shed = solver.shed_total(bits_of([2], 2))
    assert shed == pytest.approx(30.0)


def test_cache_coalesces_equal_capacity_states(rbts):
    solver = DcOpf(rbts)
    # units 8 and 9 are both 20 MW at bus 2: identical LPs
    a = solver.shed_total(bits_of([8], 20))
    size_after_first = solver.cache_size
    b = solver.shed_total(bits_of([9], 20))
    assert solver.cache_size == size_after_first
    assert a == b


def test_full_result_fields(rbts):
    result = solve_opf(rbts, State.from_failed_ids([20], 20))
    assert result.shed_total == pytest.approx(20.0, abs=1e-6)
    assert result.shed_by_bus[6] == pytest.approx(20.0, abs=1e-6)
    assert 20 not in result.line_flows  # failed line carries nothing
    assert set(result.dispatch) == set(range(1, 12))
    for cid, value in result.dispatch.items():
        assert -1e-9 <= value <= rbts.generator_for_component(cid).capacity_mw + 1e-9

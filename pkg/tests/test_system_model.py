import json
import math

import pytest

from gridrel import (
    Lattice,
    State,
    SystemModel,
    SystemModelError,
    lattice_probability,
    load_system,
    state_probability,
)
from gridrel.system_model import fixture_path

from oracles import make_system


def test_rbts_fixture_totals(rbts):
    assert rbts.num_generators == 11
    assert rbts.num_lines == 9
    assert len(rbts.buses) == 6
    assert rbts.n == 20
    assert rbts.total_capacity_mw == pytest.approx(240.0)
    assert rbts.total_load_mw == pytest.approx(185.0)


def test_rts79_fixture_totals(rts79):
    assert rts79.n == 70
    assert len(rts79.buses) == 24
    assert rts79.total_capacity_mw == pytest.approx(3405.0)
    assert rts79.total_load_mw == pytest.approx(2850.0)


def test_component_ordering_generators_then_lines(rbts):
    kinds = [c.kind for c in rbts.components]
    assert kinds == ["generator"] * 11 + ["line"] * 9
    # component 20 is the last line, the single feed of bus 6
    line = rbts.line_for_component(20)
    assert {line.from_bus, line.to_bus} == {5, 6}


def test_unavailability_from_rates(rbts):
    comp = rbts.component(20)
    assert comp.failure_rate == 1.0
    assert comp.unavailability == pytest.approx(1.0 / 877.0, rel=1e-12)
    assert comp.availability == 1.0 - comp.unavailability


def _write_system(tmp_path, payload):
    p = tmp_path / "system.json"
    p.write_text(json.dumps(payload))
    return p


def _minimal_payload():
    return {
        "buses": [{"id": 1, "load_mw": 10.0}, {"id": 2, "load_mw": 0.0}],
        "generators": [{"bus": 1, "capacity_mw": 20.0, "q": 0.05}],
        "lines": [{"from": 1, "to": 2, "reactance_pu": 0.1, "rating_mw": 50.0, "q": 0.01}],
        "base_mva": 100.0,
    }


def test_load_minimal_system(tmp_path):
    model = load_system(_write_system(tmp_path, _minimal_payload()))
    assert model.n == 2
    assert model.generators[0].component_id == 1
    assert model.lines[0].component_id == 2


def test_unknown_bus_is_named(tmp_path):
    payload = _minimal_payload()
    payload["generators"][0]["bus"] = 99
    with pytest.raises(SystemModelError, match="generator 1.*99"):
        load_system(_write_system(tmp_path, payload))


def test_nonpositive_capacity_rejected(tmp_path):
    payload = _minimal_payload()
    payload["generators"][0]["capacity_mw"] = 0.0
    with pytest.raises(SystemModelError, match="generator 1"):
        load_system(_write_system(tmp_path, payload))


def test_q_out_of_range_rejected(tmp_path):
    payload = _minimal_payload()
    payload["lines"][0]["q"] = 1.0
    with pytest.raises(SystemModelError, match="line 2"):
        load_system(_write_system(tmp_path, payload))


def test_q_and_rates_both_given_rejected(tmp_path):
    payload = _minimal_payload()
    payload["generators"][0]["lambda"] = 1.0
    payload["generators"][0]["mu"] = 99.0
    with pytest.raises(SystemModelError, match="generator 1"):
        load_system(_write_system(tmp_path, payload))


def test_disconnected_base_graph_rejected(tmp_path):
    payload = _minimal_payload()
    payload["buses"].append({"id": 3, "load_mw": 1.0})
    with pytest.raises(SystemModelError, match="disconnected.*3"):
        load_system(_write_system(tmp_path, payload))


def test_missing_file_raises_file_not_found(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_system(tmp_path / "nope.json")


def test_state_probability_two_components():
    model = make_system([10.0], gens=[(1, 10.0, 0.1), (1, 10.0, 0.2)], lines=[])
    assert state_probability(model, State(0b01, 2)) == pytest.approx(0.1 * 0.8)
    assert state_probability(model, State(0b00, 2)) == pytest.approx(0.9 * 0.8)
    assert state_probability(model, State(0b11, 2)) == pytest.approx(0.1 * 0.2)


def test_all_operational_state_probability(rbts):
    expected = 1.0
    for c in rbts.components:
        expected *= c.availability
    assert state_probability(rbts, State(0, rbts.n)) == pytest.approx(expected, rel=1e-14)


def test_rbts_single_failure_vs_sublattice_sum(rbts):
    # 0-dimensional interval equals the bare state probability
    s20 = State.from_failed_ids([20], rbts.n)
    point = Lattice(s20, s20)
    assert lattice_probability(rbts, point) == pytest.approx(
        state_probability(rbts, s20), rel=1e-14
    )
    # an enclosing interval freeing components 1..5 sums state by state
    # to the product form of its probability
    hi = State.from_failed_ids([1, 2, 3, 4, 5, 20], rbts.n)
    enclosing = Lattice(s20, hi)
    total = math.fsum(state_probability(rbts, s) for s in enclosing.states())
    assert total == pytest.approx(lattice_probability(rbts, enclosing), abs=1e-12)


def test_total_probability_sums_to_one():
    model = make_system(
        [30.0, 20.0],
        gens=[(1, 20.0, 0.1), (1, 20.0, 0.2), (2, 20.0, 0.05), (2, 10.0, 0.3)],
        lines=[
            (1, 2, 0.1, 50.0, 0.02),
            (1, 2, 0.2, 50.0, 0.04),
            (1, 2, 0.3, 50.0, 0.06),
            (1, 2, 0.4, 50.0, 0.08),
            (1, 2, 0.5, 50.0, 0.10),
            (1, 2, 0.6, 50.0, 0.12),
            (1, 2, 0.7, 50.0, 0.14),
            (1, 2, 0.8, 50.0, 0.16),
        ],
    )
    assert model.n == 12
    total = math.fsum(
        state_probability(model, State(bits, 12)) for bits in range(1 << 12)
    )
    assert abs(total - 1.0) <= 1e-12


def test_permuting_declaration_order_preserves_probabilities():
    gens = [(1, 20.0, 0.1), (1, 30.0, 0.2), (1, 40.0, 0.3)]
    base = make_system([50.0], gens=gens, lines=[])
    swapped = make_system([50.0], gens=[gens[2], gens[0], gens[1]], lines=[])
    # component i of base is component perm[i] of swapped
    perm = {1: 2, 2: 3, 3: 1}
    for bits in range(1 << 3):
        mapped = 0
        for i in range(3):
            if (bits >> i) & 1:
                mapped |= 1 << (perm[i + 1] - 1)
        assert state_probability(base, State(bits, 3)) == pytest.approx(
            state_probability(swapped, State(mapped, 3)), rel=1e-14
        )


def test_fixture_path_unknown_name():
    with pytest.raises(FileNotFoundError):
        fixture_path("unknown-system")


def test_model_is_hashable_and_frozen(rbts):
    assert hash(rbts) == hash(rbts)
    with pytest.raises(AttributeError):
        rbts.base_mva = 1.0

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sspsim.model import (
    UTILITY_ID,
    CommitmentMatrix,
    ConnectivityMatrix,
    MatchingWeights,
    PreferenceTable,
    Scenario,
    SSPConfig,
    Subscriber,
    SubscriberKind,
    energy_status,
    utility_interaction,
    validate_scenario,
)


def small_ssp(priorities=(0.5, 0.5), bounds=(0.0, 0.0)) -> SSPConfig:
    consumers = (
        Subscriber("c1", SubscriberKind.ACTIVE_CONSUMER, 4.0, bound=bounds[0], priority=priorities[0]),
        Subscriber("c2", SubscriberKind.ACTIVE_CONSUMER, 6.0, bound=bounds[1], priority=priorities[1]),
    )
    producers = (Subscriber("p1", SubscriberKind.ACTIVE_PRODUCER, 8.0),)
    prefs = PreferenceTable({"c1": {"p1": 1}, "c2": {"p1": 1}})
    return SSPConfig("s1", consumers, producers, prefs)


def scenario_of(ssp: SSPConfig, rows=None) -> Scenario:
    if rows is None:
        rows = {c.id: {"p1": 1, UTILITY_ID: 1} for c in ssp.consumers}
    return Scenario((ssp,), ConnectivityMatrix(rows), MatchingWeights(), None, 1)


class TestValidateScenario:
    def test_all_active_scenario_is_clean(self):
        assert validate_scenario(scenario_of(small_ssp())) == []

    def test_priority_sum_violation_names_the_ssp(self):
        bad = scenario_of(small_ssp(priorities=(0.5, 0.4)))
        violations = validate_scenario(bad)
        assert len(violations) == 1
        assert violations[0].entity == "s1"
        assert violations[0].rule == "priority-sum"

    def test_unreachable_utility_is_flagged(self):
        ssp = small_ssp()
        rows = {"c1": {"p1": 1, UTILITY_ID: 1}, "c2": {"p1": 1, UTILITY_ID: 0}}
        violations = validate_scenario(scenario_of(ssp, rows))
        assert [v.rule for v in violations] == ["utility-reachable"]
        assert violations[0].entity == "c2"

    def test_active_subscriber_with_bound_is_flagged(self):
        ssp = small_ssp(bounds=(0.2, 0.0))
        rules = {v.rule for v in validate_scenario(scenario_of(ssp))}
        assert "active-bound-zero" in rules

    def test_duplicate_and_reserved_ids(self):
        consumers = (Subscriber("x", SubscriberKind.ACTIVE_CONSUMER, 1.0, priority=1.0),)
        producers = (Subscriber("x", SubscriberKind.ACTIVE_PRODUCER, 1.0),)
        ssp = SSPConfig(UTILITY_ID, consumers, producers, PreferenceTable({"x": {"x": 1}}))
        rows = {"x": {"x": 1, UTILITY_ID: 1}}
        rules = {v.rule for v in validate_scenario(Scenario((ssp,), ConnectivityMatrix(rows), MatchingWeights(), None, 0))}
        assert "unique-ids" in rules and "reserved-id" in rules

    def test_nonpositive_w2_is_flagged(self):
        bad = Scenario(
            (small_ssp(),),
            ConnectivityMatrix({c: {"p1": 1, UTILITY_ID: 1} for c in ("c1", "c2")}),
            MatchingWeights(w2=0.0),
            None,
            0,
        )
        assert any(v.rule == "w2-positive" for v in validate_scenario(bad))

    def test_missing_preference_rank_is_flagged(self):
        consumers = (Subscriber("c1", SubscriberKind.ACTIVE_CONSUMER, 4.0, priority=1.0),)
        producers = (Subscriber("p1", SubscriberKind.ACTIVE_PRODUCER, 8.0),)
        ssp = SSPConfig("s1", consumers, producers, PreferenceTable({}))
        violations = validate_scenario(scenario_of(ssp, {"c1": {"p1": 1, UTILITY_ID: 1}}))
        assert any(v.rule == "preference-covered" for v in violations)

    def test_unresolvable_preference_index_is_flagged(self):
        consumers = (Subscriber("c1", SubscriberKind.ACTIVE_CONSUMER, 4.0, priority=1.0),)
        producers = (Subscriber("p1", SubscriberKind.ACTIVE_PRODUCER, 8.0),)
        ssp = SSPConfig("s1", consumers, producers, PreferenceTable({"c1": {"p1": 1, "ghost": 2}}))
        rules = {v.rule for v in validate_scenario(scenario_of(ssp, {"c1": {"p1": 1, UTILITY_ID: 1}}))}
        assert "preference-col-resolves" in rules

    def test_asymmetric_interssp_block_is_flagged(self):
        ssp_a = small_ssp()
        consumers = (Subscriber("c3", SubscriberKind.ACTIVE_CONSUMER, 1.0, priority=1.0),)
        ssp_b = SSPConfig("s2", consumers, (), PreferenceTable({"c3": {"s1": 1}}))
        rows = {
            "c1": {"p1": 1, UTILITY_ID: 1},
            "c2": {"p1": 1, UTILITY_ID: 1},
            "c3": {UTILITY_ID: 1},
            "s1": {"s2": 1},
            "s2": {},
        }
        sc = Scenario((ssp_a, ssp_b), ConnectivityMatrix(rows), MatchingWeights(), None, 0)
        assert any(v.rule == "interssp-symmetric" for v in validate_scenario(sc))

    def test_validation_is_idempotent(self):
        sc = scenario_of(small_ssp(priorities=(0.1, 0.2)))
        assert validate_scenario(sc) == validate_scenario(sc)


class TestEnergyStatus:
    def test_paper_deficit_case(self):
        consumers = tuple(
            Subscriber(f"c{i}", SubscriberKind.ACTIVE_CONSUMER, 12.71, priority=0.1) for i in range(10)
        )
        producers = tuple(Subscriber(f"p{i}", SubscriberKind.ACTIVE_PRODUCER, 15.22) for i in range(5))
        ssp = SSPConfig("s", consumers, producers, PreferenceTable({}))
        assert energy_status(ssp) == pytest.approx(-51.0, abs=1e-6)

    def test_empty_ssp_is_zero(self):
        assert energy_status(SSPConfig("s", (), (), PreferenceTable({}))) == 0.0

    def test_five_kwh_gap(self):
        consumers = (Subscriber("c", SubscriberKind.ACTIVE_CONSUMER, 57.0, priority=1.0),)
        producers = (Subscriber("p", SubscriberKind.ACTIVE_PRODUCER, 52.0),)
        assert energy_status(SSPConfig("s", consumers, producers, PreferenceTable({}))) == pytest.approx(-5.0)

    @given(scale=st.floats(min_value=0.0, max_value=100.0, allow_nan=False))
    def test_linearity_under_scaling(self, scale):
        def build(c):
            consumers = (Subscriber("c", SubscriberKind.ACTIVE_CONSUMER, 7.5 * c, priority=1.0),)
            producers = (Subscriber("p", SubscriberKind.ACTIVE_PRODUCER, 3.25 * c),)
            return SSPConfig("s", consumers, producers, PreferenceTable({}))

        assert energy_status(build(scale)) == pytest.approx(scale * energy_status(build(1.0)), abs=1e-9)


class TestUtilityInteraction:
    def test_zero_matrix(self):
        cm = CommitmentMatrix(["c1"], ["p1"])
        assert utility_interaction(cm) == 0.0

    def test_purchase_only(self):
        cm = CommitmentMatrix(["c1"], ["p1"])
        cm.set("c1", UTILITY_ID, 5.0)
        assert utility_interaction(cm) == 5.0

    def test_sell_back_only(self):
        cm = CommitmentMatrix(["c1"], ["p1"])
        cm.set(UTILITY_ID, "p1", 22.5)
        assert utility_interaction(cm) == 22.5

    def test_zero_iff_utility_row_and_column_zero(self):
        cm = CommitmentMatrix(["c1", "c2"], ["p1"])
        cm.set("c1", "p1", 3.0)
        assert utility_interaction(cm) == 0.0
        cm.set("c2", UTILITY_ID, 0.25)
        assert utility_interaction(cm) > 0.0

    def test_diagonal_utility_cell_is_rejected(self):
        cm = CommitmentMatrix(["c1"], ["p1"])
        with pytest.raises(ValueError):
            cm.set(UTILITY_ID, UTILITY_ID, 1.0)

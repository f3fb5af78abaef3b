from __future__ import annotations

import json

import pytest

from sspsim.model import SubscriberKind, energy_status, validate_scenario
from sspsim.scenario import (
    GeneratorSpec,
    GeneratorSpecError,
    ScenarioFormatError,
    generate_scenario,
    load_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
)

STUDY1 = GeneratorSpec(n_ssps=20, consumers_per_ssp=10, producers_per_ssp=5, seed=7)
STUDY2 = GeneratorSpec(
    n_ssps=20,
    consumers_per_ssp=35,
    producers_per_ssp=10,
    passive_consumers=10,
    passive_consumer_bound=0.15,
    passive_producers=5,
    passive_producer_bound=0.10,
    seed=7,
)


class TestGenerate:
    def test_study1_shape_all_active(self):
        scenario = generate_scenario(STUDY1)
        assert len(scenario.ssps) == 20
        subscribers = [s for cfg in scenario.ssps for s in cfg.consumers + cfg.producers]
        assert len(subscribers) == 300
        assert all(s.bound == 0.0 for s in subscribers)
        assert all(s.kind in (SubscriberKind.ACTIVE_CONSUMER, SubscriberKind.ACTIVE_PRODUCER) for s in subscribers)

    def test_study2_passive_counts_and_bounds(self):
        scenario = generate_scenario(STUDY2)
        for cfg in scenario.ssps:
            pcs = [c for c in cfg.consumers if c.kind is SubscriberKind.PASSIVE_CONSUMER]
            pps = [p for p in cfg.producers if p.kind is SubscriberKind.PASSIVE_PRODUCER]
            assert len(pcs) == 10 and len(pps) == 5
            assert all(c.bound == 0.15 for c in pcs)
            assert all(p.bound == 0.10 for p in pps)
            assert len(cfg.consumers) == 35 and len(cfg.producers) == 10

    def test_generated_scenarios_validate_clean(self):
        for spec in (STUDY1, STUDY2):
            assert validate_scenario(generate_scenario(spec)) == []

    def test_zero_noise_makes_ssps_identical(self):
        spec = GeneratorSpec(n_ssps=4, consumers_per_ssp=3, producers_per_ssp=2, noise_std_kwh=0.0, seed=1)
        scenario = generate_scenario(spec)
        statuses = {energy_status(cfg) for cfg in scenario.ssps}
        assert len(statuses) == 1

    def test_uniform_priorities(self):
        scenario = generate_scenario(STUDY1)
        for cfg in scenario.ssps:
            assert all(c.priority == pytest.approx(0.1) for c in cfg.consumers)

    def test_partner_ranks_follow_local_ranks(self):
        scenario = generate_scenario(GeneratorSpec(n_ssps=3, consumers_per_ssp=2, producers_per_ssp=2, seed=5))
        cfg = scenario.ssps[0]
        for consumer in cfg.consumers:
            local = [cfg.preferences.rank(consumer.id, p.id) for p in cfg.producers]
            partners = [cfg.preferences.rank(consumer.id, other.id) for other in scenario.ssps if other.id != cfg.id]
            assert max(local) < min(partners)

    def test_invalid_specs_rejected(self):
        with pytest.raises(GeneratorSpecError):
            generate_scenario(GeneratorSpec(n_ssps=0, consumers_per_ssp=1, producers_per_ssp=1))
        with pytest.raises(GeneratorSpecError):
            generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=2, producers_per_ssp=1, passive_consumers=3))
        with pytest.raises(GeneratorSpecError):
            generate_scenario(
                GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, passive_consumer_bound=1.5)
            )
        with pytest.raises(GeneratorSpecError):
            generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, noise_std_kwh=-1.0))


class TestPersistence:
    def test_same_spec_gives_identical_bytes(self):
        first = scenario_to_json(generate_scenario(STUDY1))
        second = scenario_to_json(generate_scenario(STUDY1))
        assert first == second

    def test_round_trip_identity(self, tmp_path):
        scenario = generate_scenario(STUDY2)
        path = tmp_path / "scenario.json"
        save_scenario(scenario, str(path))
        assert load_scenario(str(path)) == scenario

    def test_truncated_file_names_offset(self, tmp_path):
        scenario = generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, seed=2))
        text = scenario_to_json(scenario)
        with pytest.raises(ScenarioFormatError, match="offset"):
            scenario_from_json(text[: len(text) // 2])

    def test_unknown_field_rejected_by_name(self):
        scenario = generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, seed=2))
        data = json.loads(scenario_to_json(scenario))
        data["surprise"] = 1
        with pytest.raises(ScenarioFormatError, match="surprise"):
            scenario_from_json(json.dumps(data))

    def test_missing_field_rejected_by_name(self):
        scenario = generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, seed=2))
        data = json.loads(scenario_to_json(scenario))
        del data["weights"]["alpha"]
        with pytest.raises(ScenarioFormatError, match="alpha"):
            scenario_from_json(json.dumps(data))

    def test_bad_kind_and_non_binary_connectivity(self):
        scenario = generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, seed=2))
        data = json.loads(scenario_to_json(scenario))
        data["ssps"][0]["consumers"][0]["kind"] = "XX"
        with pytest.raises(ScenarioFormatError, match="kind"):
            scenario_from_json(json.dumps(data))

        data = json.loads(scenario_to_json(scenario))
        row = next(r for r, cols in data["connectivity"].items() if cols)
        col = next(iter(data["connectivity"][row]))
        data["connectivity"][row][col] = 2
        with pytest.raises(ScenarioFormatError, match="0 or 1"):
            scenario_from_json(json.dumps(data))

    def test_non_integer_rank_rejected(self):
        scenario = generate_scenario(GeneratorSpec(n_ssps=1, consumers_per_ssp=1, producers_per_ssp=1, seed=2))
        data = json.loads(scenario_to_json(scenario))
        prefs = data["ssps"][0]["preferences"]
        consumer = next(iter(prefs))
        supplier = next(iter(prefs[consumer]))
        prefs[consumer][supplier] = 1.5
        with pytest.raises(ScenarioFormatError, match="integer"):
            scenario_from_json(json.dumps(data))

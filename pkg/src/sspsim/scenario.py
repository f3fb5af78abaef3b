"""Seeded scenario generation and strict JSON persistence.

Generation draws each demand and production as max(0, Normal(mean, stddev))
from numpy's PCG64 stream, so a spec (including its seed) always produces the
same scenario byte for byte. The serialized file is the portable artifact: the
generator identity is recorded in it, and reproducing a scenario from the seed
is only guaranteed within this implementation; other implementations should
consume the file.

The JSON schema is strict: unknown fields are rejected by name, canonical
field order is documented in ``scenario.schema.json`` shipped next to this
module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import (
    UTILITY_ID,
    ConnectivityMatrix,
    LineConstraint,
    LineConstraintSet,
    MatchingWeights,
    PreferenceTable,
    Scenario,
    SSPConfig,
    Subscriber,
    SubscriberKind,
    validate_scenario,
)

SCHEMA_VERSION = 1
GENERATOR_NAME = "numpy-pcg64"


class ScenarioFormatError(ValueError):
    """Parse or schema failure with a field name or byte offset."""


class GeneratorSpecError(ValueError):
    """Structurally invalid generator spec."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Shape and statistics of a synthetic population of SSPs."""

    n_ssps: int
    consumers_per_ssp: int
    producers_per_ssp: int
    passive_consumers: int = 0
    passive_consumer_bound: float = 0.0
    passive_producers: int = 0
    passive_producer_bound: float = 0.0
    demand_mean_kwh: float = 12.0
    supply_mean_kwh: float = 15.0
    noise_std_kwh: float = 3.0
    seed: int = 0


def _check_spec(spec: GeneratorSpec) -> None:
    if spec.n_ssps < 1:
        raise GeneratorSpecError("n_ssps must be >= 1")
    if spec.consumers_per_ssp < 0 or spec.producers_per_ssp < 0:
        raise GeneratorSpecError("subscriber counts must be >= 0")
    if not 0 <= spec.passive_consumers <= spec.consumers_per_ssp:
        raise GeneratorSpecError("passive_consumers must be within the consumer count")
    if not 0 <= spec.passive_producers <= spec.producers_per_ssp:
        raise GeneratorSpecError("passive_producers must be within the producer count")
    for name in ("passive_consumer_bound", "passive_producer_bound"):
        if not 0.0 <= getattr(spec, name) <= 1.0:
            raise GeneratorSpecError(f"{name} must be in [0, 1]")
    if spec.noise_std_kwh < 0:
        raise GeneratorSpecError("noise_std_kwh must be >= 0")
    if spec.demand_mean_kwh < 0 or spec.supply_mean_kwh < 0:
        raise GeneratorSpecError("means must be >= 0")


def generate_scenario(spec: GeneratorSpec, weights: MatchingWeights | None = None) -> Scenario:
    """Deterministic synthetic scenario: uniform priorities, shuffled preference
    ranks (local producers first, partner SSPs after), full local connectivity
    and a full inter-SSP mesh. Always validates clean."""
    _check_spec(spec)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    ssp_ids = [f"S{k:02d}" for k in range(1, spec.n_ssps + 1)]
    ssps: list[SSPConfig] = []
    rows: dict[str, dict[str, int]] = {}

    for ssp_id in ssp_ids:
        consumers: list[Subscriber] = []
        producers: list[Subscriber] = []
        n_cons = spec.consumers_per_ssp
        priority = 1.0 / n_cons if n_cons else 0.0
        demands = rng.normal(spec.demand_mean_kwh, spec.noise_std_kwh, size=n_cons)
        supplies = rng.normal(spec.supply_mean_kwh, spec.noise_std_kwh, size=spec.producers_per_ssp)
        for m in range(n_cons):
            passive = m < spec.passive_consumers
            consumers.append(
                Subscriber(
                    id=f"{ssp_id}.C{m + 1:02d}",
                    kind=SubscriberKind.PASSIVE_CONSUMER if passive else SubscriberKind.ACTIVE_CONSUMER,
                    energy=max(0.0, float(demands[m])),
                    bound=spec.passive_consumer_bound if passive else 0.0,
                    priority=priority,
                )
            )
        for m in range(spec.producers_per_ssp):
            passive = m < spec.passive_producers
            producers.append(
                Subscriber(
                    id=f"{ssp_id}.P{m + 1:02d}",
                    kind=SubscriberKind.PASSIVE_PRODUCER if passive else SubscriberKind.ACTIVE_PRODUCER,
                    energy=max(0.0, float(supplies[m])),
                    bound=spec.passive_producer_bound if passive else 0.0,
                )
            )
        partner_ids = [other for other in ssp_ids if other != ssp_id]
        ranks: dict[str, dict[str, int]] = {}
        for consumer in consumers:
            local_order = rng.permutation(len(producers))
            partner_order = rng.permutation(len(partner_ids))
            consumer_ranks = {
                producers[j].id: int(local_order[j]) + 1 for j in range(len(producers))
            }
            consumer_ranks.update(
                {partner_ids[j]: len(producers) + int(partner_order[j]) + 1 for j in range(len(partner_ids))}
            )
            ranks[consumer.id] = consumer_ranks
            rows[consumer.id] = {p.id: 1 for p in producers} | {UTILITY_ID: 1}
        rows[ssp_id] = {other: 1 for other in partner_ids}
        ssps.append(SSPConfig(ssp_id, tuple(consumers), tuple(producers), PreferenceTable(ranks)))

    scenario = Scenario(
        ssps=tuple(ssps),
        connectivity=ConnectivityMatrix(rows),
        weights=weights or MatchingWeights(),
        line_constraints=None,
        seed=spec.seed,
    )
    violations = validate_scenario(scenario)
    if violations:
        raise GeneratorSpecError(f"generated scenario fails validation: {violations[0]}")
    return scenario


# --- strict JSON persistence -------------------------------------------------

_WEIGHT_FIELDS = ("w14", "w2", "w35", "alpha", "beta", "preference_mode")
_CONSUMER_FIELDS = ("id", "kind", "energy_kwh", "bound", "priority")
_PRODUCER_FIELDS = ("id", "kind", "energy_kwh", "bound")


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "generator": GENERATOR_NAME,
        "seed": scenario.seed,
        "weights": {
            "w14": scenario.weights.w14,
            "w2": scenario.weights.w2,
            "w35": scenario.weights.w35,
            "alpha": scenario.weights.alpha,
            "beta": scenario.weights.beta,
            "preference_mode": scenario.weights.preference_mode,
        },
        "ssps": [
            {
                "id": cfg.id,
                "consumers": [
                    {
                        "id": s.id,
                        "kind": s.kind.value,
                        "energy_kwh": s.energy,
                        "bound": s.bound,
                        "priority": s.priority,
                    }
                    for s in cfg.consumers
                ],
                "producers": [
                    {"id": s.id, "kind": s.kind.value, "energy_kwh": s.energy, "bound": s.bound}
                    for s in cfg.producers
                ],
                "preferences": {
                    consumer_id: dict(sorted(cols.items()))
                    for consumer_id, cols in sorted(cfg.preferences.ranks.items())
                },
            }
            for cfg in scenario.ssps
        ],
        "connectivity": {
            row_id: dict(sorted(cols.items())) for row_id, cols in sorted(scenario.connectivity.rows.items())
        },
        "line_constraints": None
        if scenario.line_constraints is None
        else [
            {"row": lc.row_id, "col": lc.col_id, "min_kwh": lc.min_kwh, "max_kwh": lc.max_kwh}
            for lc in scenario.line_constraints.constraints
        ],
    }


def _require_keys(mapping: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ScenarioFormatError(f"{where}: unknown field {unknown[0]!r}")
    missing = sorted(set(allowed) - set(mapping))
    if missing:
        raise ScenarioFormatError(f"{where}: missing field {missing[0]!r}")


def _number(value: object, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioFormatError("top level must be an object")
    _require_keys(
        data,
        ("schema_version", "generator", "seed", "weights", "ssps", "connectivity", "line_constraints"),
        "scenario",
    )
    if data["schema_version"] != SCHEMA_VERSION:
        raise ScenarioFormatError(f"unsupported schema_version {data['schema_version']!r}")
    if data["generator"] != GENERATOR_NAME:
        raise ScenarioFormatError(f"unsupported generator {data['generator']!r}")

    w = data["weights"]
    _require_keys(w, _WEIGHT_FIELDS, "weights")
    beta = w["beta"]
    weights = MatchingWeights(
        w14=_number(w["w14"], "weights.w14"),
        w2=_number(w["w2"], "weights.w2"),
        w35=_number(w["w35"], "weights.w35"),
        alpha=_number(w["alpha"], "weights.alpha"),
        beta=None if beta is None else _number(beta, "weights.beta"),
        preference_mode=str(w["preference_mode"]),
    )

    ssps: list[SSPConfig] = []
    for entry in data["ssps"]:
        _require_keys(entry, ("id", "consumers", "producers", "preferences"), f"ssp {entry.get('id')!r}")
        consumers = []
        for sub in entry["consumers"]:
            _require_keys(sub, _CONSUMER_FIELDS, f"consumer {sub.get('id')!r}")
            consumers.append(
                Subscriber(
                    id=str(sub["id"]),
                    kind=_kind(sub["kind"], sub["id"]),
                    energy=_number(sub["energy_kwh"], f"consumer {sub['id']}"),
                    bound=_number(sub["bound"], f"consumer {sub['id']}"),
                    priority=_number(sub["priority"], f"consumer {sub['id']}"),
                )
            )
        producers = []
        for sub in entry["producers"]:
            _require_keys(sub, _PRODUCER_FIELDS, f"producer {sub.get('id')!r}")
            producers.append(
                Subscriber(
                    id=str(sub["id"]),
                    kind=_kind(sub["kind"], sub["id"]),
                    energy=_number(sub["energy_kwh"], f"producer {sub['id']}"),
                    bound=_number(sub["bound"], f"producer {sub['id']}"),
                )
            )
        prefs: dict[str, dict[str, int]] = {}
        for consumer_id, cols in entry["preferences"].items():
            ranks = {}
            for supplier_id, rank in cols.items():
                if isinstance(rank, bool) or not isinstance(rank, int):
                    raise ScenarioFormatError(f"preferences[{consumer_id}][{supplier_id}]: rank must be an integer")
                ranks[str(supplier_id)] = rank
            prefs[str(consumer_id)] = ranks
        ssps.append(SSPConfig(str(entry["id"]), tuple(consumers), tuple(producers), PreferenceTable(prefs)))

    rows: dict[str, dict[str, int]] = {}
    for row_id, cols in data["connectivity"].items():
        parsed = {}
        for col_id, value in cols.items():
            if value not in (0, 1) or isinstance(value, bool):
                raise ScenarioFormatError(f"connectivity[{row_id}][{col_id}]: must be 0 or 1")
            parsed[str(col_id)] = int(value)
        rows[str(row_id)] = parsed

    lines = None
    if data["line_constraints"] is not None:
        constraints = []
        for lc in data["line_constraints"]:
            _require_keys(lc, ("row", "col", "min_kwh", "max_kwh"), "line_constraints entry")
            constraints.append(
                LineConstraint(
                    str(lc["row"]), str(lc["col"]), _number(lc["min_kwh"], "line min"), _number(lc["max_kwh"], "line max")
                )
            )
        lines = LineConstraintSet(tuple(constraints))

    seed = data["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioFormatError("seed must be an integer")
    return Scenario(tuple(ssps), ConnectivityMatrix(rows), weights, lines, seed)


def _kind(value: object, entity: object) -> SubscriberKind:
    try:
        return SubscriberKind(str(value))
    except ValueError:
        raise ScenarioFormatError(f"subscriber {entity!r}: unknown kind {value!r}") from None


def scenario_to_json(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def scenario_from_json(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"invalid JSON at offset {exc.pos}: {exc.msg}") from None
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(scenario_to_json(scenario))


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json(fh.read())

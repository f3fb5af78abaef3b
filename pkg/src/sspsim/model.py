"""Domain types for day-ahead energy commitment among sub-service providers (SSPs).

Vocabulary used throughout the package:

* AP / PP: active / passive producer. Both declare a day-ahead production
  ``energy`` in kWh; a PP can additionally stretch production by up to
  ``bound`` (fraction, e.g. 0.3 = +30%).
* AC / PC: active / passive consumer. Both declare a demand in kWh; a PC can
  be cut by up to ``bound`` (fraction, e.g. 0.2 = -20%).
* Utility ("U"): the external supplier of last resort. It can buy or sell any
  amount; the framework's goal is to minimise interaction with it.
* Commitment matrix cm(i, j): kWh pledged from supplier j (producer, partner
  SSP, or Utility) to consumer i; the extra row ``U`` holds sell-backs.

All quantities are kWh per scheduling slot. Slot duration is metadata only and
never enters a formula. Values are python floats; comparisons elsewhere in the
package use an absolute tolerance of 1e-6 kWh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

UTILITY_ID = "U"

#: absolute kWh tolerance used for comparisons across the package
KWH_TOL = 1e-6


class SubscriberKind(str, Enum):
    ACTIVE_PRODUCER = "AP"
    PASSIVE_PRODUCER = "PP"
    ACTIVE_CONSUMER = "AC"
    PASSIVE_CONSUMER = "PC"

    @property
    def is_producer(self) -> bool:
        return self in (SubscriberKind.ACTIVE_PRODUCER, SubscriberKind.PASSIVE_PRODUCER)

    @property
    def is_consumer(self) -> bool:
        return not self.is_producer

    @property
    def is_active(self) -> bool:
        return self in (SubscriberKind.ACTIVE_PRODUCER, SubscriberKind.ACTIVE_CONSUMER)


@dataclass(frozen=True)
class Subscriber:
    """One producer or consumer.

    ``energy`` is the declared production (producers) or demand (consumers) in
    kWh. ``bound`` is the flexibility fraction in [0, 1]; active kinds must
    carry 0. ``priority`` is the serving priority in [0, 1], meaningful for
    consumers only; within one SSP consumer priorities sum to 1.
    """

    id: str
    kind: SubscriberKind
    energy: float
    bound: float = 0.0
    priority: float = 0.0


@dataclass(frozen=True)
class PreferenceTable:
    """Rank of each supplier (local producer or partner SSP) per consumer.

    Lower rank = more preferred; ranks are positive integers and ties are
    allowed. Every pair allowed by connectivity must have a rank.
    """

    ranks: Mapping[str, Mapping[str, int]]

    def rank(self, consumer_id: str, supplier_id: str) -> int:
        try:
            return self.ranks[consumer_id][supplier_id]
        except KeyError:
            raise KeyError(f"no preference rank for ({consumer_id}, {supplier_id})") from None

    def has(self, consumer_id: str, supplier_id: str) -> bool:
        return supplier_id in self.ranks.get(consumer_id, {})


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Binary reachability N(i, j).

    Rows are consumer ids or SSP ids; columns are producer ids, SSP ids, or
    ``UTILITY_ID``. A missing entry means 0 (not connected). Every consumer
    must have N(i, U) = 1, and the inter-SSP block must be symmetric with a
    zero diagonal.
    """

    rows: Mapping[str, Mapping[str, int]]

    def connected(self, row_id: str, col_id: str) -> bool:
        return bool(self.rows.get(row_id, {}).get(col_id, 0))


@dataclass(frozen=True)
class LineConstraint:
    row_id: str
    col_id: str
    min_kwh: float
    max_kwh: float


@dataclass(frozen=True)
class LineConstraintSet:
    """Per-pair flow bounds gammaMin <= cm(i, j) <= gammaMax (identity loss)."""

    constraints: tuple[LineConstraint, ...]

    def lookup(self, row_id: str, col_id: str) -> LineConstraint | None:
        for c in self.constraints:
            if c.row_id == row_id and c.col_id == col_id:
                return c
        return None


@dataclass(frozen=True)
class MatchingWeights:
    """Weights of the scalarised matching objective.

    ``w14`` scales the priority-weighted service reward, ``w2`` the Utility
    purchase penalty, ``w35`` the preference reward. ``alpha`` and ``beta``
    shape the per-pair preference factor 1 + alpha*(beta - rank); ``beta=None``
    resolves to (max rank in view) + 1 at build time so the factor stays >= 1.
    ``preference_mode`` selects the steering form: "coefficient" multiplies the
    factor into each cm coefficient, "additive" keeps the literal constant term
    (inert for the argmin, kept for fidelity comparisons).
    """

    w14: float = 1.0
    w2: float = 10.0
    w35: float = 0.5
    alpha: float = 0.1
    beta: float | None = None
    preference_mode: str = "coefficient"


@dataclass(frozen=True)
class SSPConfig:
    """One SSP: its consumers, producers and local preference table."""

    id: str
    consumers: tuple[Subscriber, ...]
    producers: tuple[Subscriber, ...]
    preferences: PreferenceTable


@dataclass(frozen=True)
class Scenario:
    ssps: tuple[SSPConfig, ...]
    connectivity: ConnectivityMatrix
    weights: MatchingWeights = field(default_factory=MatchingWeights)
    line_constraints: LineConstraintSet | None = None
    seed: int = 0

    def ssp(self, ssp_id: str) -> SSPConfig:
        for cfg in self.ssps:
            if cfg.id == ssp_id:
                return cfg
        raise KeyError(f"unknown SSP id {ssp_id!r}")

    @property
    def ssp_ids(self) -> tuple[str, ...]:
        return tuple(cfg.id for cfg in self.ssps)


@dataclass(frozen=True)
class Violation:
    """One broken invariant, naming the offending entity and the rule."""

    entity: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.rule} ({self.detail})"


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Check every type invariant; returns an empty list iff the scenario is valid.

    Violations are data, not exceptions: callers decide whether to abort.
    The check is pure and idempotent.
    """
    out: list[Violation] = []
    seen_ids: set[str] = set()

    def claim_id(entity_id: str, entity_kind: str) -> None:
        if entity_id == UTILITY_ID:
            out.append(Violation(entity_id, "reserved-id", f"{entity_kind} may not use the Utility id"))
        if entity_id in seen_ids:
            out.append(Violation(entity_id, "unique-ids", f"duplicate {entity_kind} id"))
        seen_ids.add(entity_id)

    ssp_ids = [cfg.id for cfg in scenario.ssps]
    for cfg in scenario.ssps:
        claim_id(cfg.id, "SSP")
        for sub in cfg.consumers + cfg.producers:
            claim_id(sub.id, "subscriber")
            if sub.energy < 0:
                out.append(Violation(sub.id, "energy-nonnegative", f"energy {sub.energy}"))
            if not 0.0 <= sub.bound <= 1.0:
                out.append(Violation(sub.id, "bound-range", f"bound {sub.bound} outside [0, 1]"))
            if sub.kind.is_active and sub.bound != 0.0:
                out.append(Violation(sub.id, "active-bound-zero", f"active subscriber with bound {sub.bound}"))
            if not 0.0 <= sub.priority <= 1.0:
                out.append(Violation(sub.id, "priority-range", f"priority {sub.priority} outside [0, 1]"))
        for sub in cfg.consumers:
            if sub.kind.is_producer:
                out.append(Violation(sub.id, "kind-placement", "producer listed under consumers"))
        for sub in cfg.producers:
            if sub.kind.is_consumer:
                out.append(Violation(sub.id, "kind-placement", "consumer listed under producers"))
            if sub.priority != 0.0:
                out.append(Violation(sub.id, "producer-priority", "producers carry no serving priority"))
        if cfg.consumers:
            total = sum(s.priority for s in cfg.consumers)
            if abs(total - 1.0) > KWH_TOL:
                out.append(Violation(cfg.id, "priority-sum", f"consumer priorities sum to {total}, expected 1"))

    out.extend(_validate_connectivity(scenario, ssp_ids))
    out.extend(_validate_preferences(scenario))

    if scenario.weights.w2 <= 0:
        out.append(Violation("weights", "w2-positive", f"w2 = {scenario.weights.w2}; Utility purchases would be free"))
    for w_name in ("w14", "w2", "w35", "alpha"):
        if getattr(scenario.weights, w_name) < 0:
            out.append(Violation("weights", "weight-nonnegative", f"{w_name} < 0"))
    if scenario.weights.preference_mode not in ("coefficient", "additive"):
        out.append(Violation("weights", "preference-mode", f"unknown mode {scenario.weights.preference_mode!r}"))

    if scenario.line_constraints is not None:
        for lc in scenario.line_constraints.constraints:
            pair = f"({lc.row_id}, {lc.col_id})"
            if lc.min_kwh > lc.max_kwh:
                out.append(Violation(pair, "line-bounds-ordered", f"min {lc.min_kwh} > max {lc.max_kwh}"))
            elif not scenario.connectivity.connected(lc.row_id, lc.col_id) and not (lc.min_kwh <= 0.0 <= lc.max_kwh):
                out.append(Violation(pair, "line-bounds-allow-unused", "disconnected pair must admit zero flow"))

    if not -(2**63) <= scenario.seed < 2**63:
        out.append(Violation("seed", "seed-64bit", f"seed {scenario.seed} outside 64-bit range"))
    return out


def _validate_connectivity(scenario: Scenario, ssp_ids: list[str]) -> list[Violation]:
    out: list[Violation] = []
    n = scenario.connectivity
    known_cols = set(ssp_ids) | {UTILITY_ID}
    known_rows = set(ssp_ids)
    for cfg in scenario.ssps:
        known_rows.update(s.id for s in cfg.consumers)
        known_cols.update(s.id for s in cfg.producers)
    for row_id, cols in n.rows.items():
        if row_id not in known_rows:
            out.append(Violation(row_id, "connectivity-row-resolves", "unknown row id"))
        for col_id, value in cols.items():
            if col_id not in known_cols:
                out.append(Violation(col_id, "connectivity-col-resolves", f"unknown column id in row {row_id}"))
            if value not in (0, 1):
                out.append(Violation(row_id, "connectivity-binary", f"N({row_id}, {col_id}) = {value}"))
    for cfg in scenario.ssps:
        for sub in cfg.consumers:
            if not n.connected(sub.id, UTILITY_ID):
                out.append(Violation(sub.id, "utility-reachable", "consumer must have N(i, U) = 1"))
    for a in ssp_ids:
        if n.connected(a, a):
            out.append(Violation(a, "interssp-zero-diagonal", "SSP connected to itself"))
        for b in ssp_ids:
            if a < b and n.connected(a, b) != n.connected(b, a):
                out.append(Violation(f"({a}, {b})", "interssp-symmetric", "asymmetric inter-SSP entry"))
    return out


def _validate_preferences(scenario: Scenario) -> list[Violation]:
    out: list[Violation] = []
    n = scenario.connectivity
    known_suppliers = set(scenario.ssp_ids)
    for cfg in scenario.ssps:
        known_suppliers.update(p.id for p in cfg.producers)
    for cfg in scenario.ssps:
        consumer_ids = {c.id for c in cfg.consumers}
        partner_ids = [other for other in scenario.ssp_ids if other != cfg.id and n.connected(cfg.id, other)]
        for consumer in cfg.consumers:
            for producer in cfg.producers:
                if n.connected(consumer.id, producer.id) and not cfg.preferences.has(consumer.id, producer.id):
                    out.append(Violation(consumer.id, "preference-covered", f"no rank for local producer {producer.id}"))
            for partner in partner_ids:
                if not cfg.preferences.has(consumer.id, partner):
                    out.append(Violation(consumer.id, "preference-covered", f"no rank for partner SSP {partner}"))
        for consumer_id, cols in cfg.preferences.ranks.items():
            if consumer_id not in consumer_ids:
                out.append(Violation(consumer_id, "preference-row-resolves", f"not a consumer of SSP {cfg.id}"))
            for supplier_id, rank in cols.items():
                if supplier_id not in known_suppliers:
                    out.append(Violation(consumer_id, "preference-col-resolves", f"unknown supplier {supplier_id}"))
                if not isinstance(rank, int) or rank < 1:
                    out.append(Violation(consumer_id, "rank-positive-int", f"rank {rank!r} for {supplier_id}"))
    return out


def energy_status(ssp: SSPConfig) -> float:
    """Signed kWh position before matching: total production minus total demand."""
    return sum(p.energy for p in ssp.producers) - sum(c.energy for c in ssp.consumers)


class CommitmentMatrix:
    """kWh pledged from each supplier column to each consumer row.

    Rows are the consumer ids plus ``UTILITY_ID`` (sell-backs); columns are
    local producer ids, partner SSP ids, plus ``UTILITY_ID`` (purchases).
    Missing cells read as 0. cm(U, U) is always 0.
    """

    def __init__(self, consumer_ids: Iterable[str], supplier_ids: Iterable[str]):
        self.consumer_ids = tuple(consumer_ids)
        self.supplier_ids = tuple(supplier_ids)
        self._cells: dict[tuple[str, str], float] = {}

    def set(self, row_id: str, col_id: str, kwh: float) -> None:
        if row_id == UTILITY_ID and col_id == UTILITY_ID:
            raise ValueError("cm(U, U) must stay zero")
        self._cells[(row_id, col_id)] = kwh

    def get(self, row_id: str, col_id: str) -> float:
        return self._cells.get((row_id, col_id), 0.0)

    def row_ids(self) -> tuple[str, ...]:
        return self.consumer_ids + (UTILITY_ID,)

    def col_ids(self) -> tuple[str, ...]:
        return self.supplier_ids + (UTILITY_ID,)

    def committed_to_consumers(self, col_id: str) -> float:
        """Total kWh column ``col_id`` delivers to consumers (Utility row excluded)."""
        return sum(self.get(i, col_id) for i in self.consumer_ids)

    def purchases(self) -> float:
        return sum(self.get(i, UTILITY_ID) for i in self.consumer_ids)

    def sell_backs(self) -> float:
        return sum(self.get(UTILITY_ID, j) for j in self.supplier_ids)

    def cells(self) -> dict[tuple[str, str], float]:
        return dict(self._cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CommitmentMatrix):
            return NotImplemented
        return (
            self.consumer_ids == other.consumer_ids
            and self.supplier_ids == other.supplier_ids
            and self._cells == other._cells
        )


def utility_interaction(cm: CommitmentMatrix) -> float:
    """Total kWh exchanged with the Utility: purchases plus sell-backs, both positive."""
    return cm.purchases() + cm.sell_backs()

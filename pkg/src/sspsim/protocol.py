"""Synchronous distributed matching engine.

Each SSP runs as an agent around its local matching LP. The engine sweeps the
agents in id order; an agent that accepts a strictly better solution becomes an
*iteration*, computes its residual aggregate surplus and offers it to its
connected partners one at a time in a seeded shuffled order. Delivering an
offer is synchronous: the receiving agent immediately re-solves with the
offered capacity installed and answers with a Claim for what it committed, and
only then does the sender move to the next partner with the decremented
residual. A claim is binding: the claimed cells become constants of the
buyer's future LPs and the seller reserves the exported total, so the pair
stays conserved across every later re-solve.

The wire carries aggregates only (surplus kWh, flexibility bound, claim kWh);
no per-subscriber id or quantity ever leaves an SSP, and ``audit_privacy``
checks exactly that plus, by deterministic replay, that every offered amount
really was the sender's aggregate surplus at emission time.

Quiescence: a full sweep with no accepted improvement and no queued follow-up
work terminates the run. Everything is deterministic in (scenario, anm, seed).
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, field

from .coalition import ActualNeighborhoodMap
from .matching import (
    FlexibilityAssignment,
    PartnerCapacity,
    SspView,
    aggregate_surplus,
    solve_dist_matching,
)
from .model import (
    UTILITY_ID,
    CommitmentMatrix,
    MatchingWeights,
    Scenario,
    SSPConfig,
    energy_status,
    utility_interaction,
    validate_scenario,
)

SEND_EXCESS = "SEND_EXCESS"

IMPROVE_TOL = 1e-9
SURPLUS_TOL = 1e-9

OFFER_KIND = "offer"
CLAIM_KIND = "claim"


class InvalidScenarioError(ValueError):
    """Engine input failed validate_scenario."""


class ProtocolViolationError(RuntimeError):
    """A claim exceeded the outstanding offer between two SSPs."""


class ConvergenceError(RuntimeError):
    """Iteration cap hit; carries the partial trace and log for diagnosis."""

    def __init__(self, message: str, trace: list[ConvergencePoint], log: list[LogRecord]):
        super().__init__(message)
        self.trace = trace
        self.log = log


@dataclass(frozen=True)
class SurplusOffer:
    """Aggregated residual surplus one SSP advertises to one partner."""

    src: str
    dst: str
    energy_kwh: float
    bound: float
    token: str = SEND_EXCESS


@dataclass(frozen=True)
class Claim:
    """The receiver's binding answer: how much of the offer it committed."""

    src: str
    dst: str
    amount_kwh: float


@dataclass(frozen=True)
class LogRecord:
    round_index: int
    kind: str
    src: str
    dst: str
    payload: dict[str, object]


@dataclass(frozen=True)
class ConvergencePoint:
    iteration: int
    accumulated_utility_kwh: float


@dataclass
class MatchingResult:
    commitments: dict[str, CommitmentMatrix]
    flexibility: dict[str, FlexibilityAssignment]
    trace: list[ConvergencePoint]
    log: list[LogRecord]
    iterations: int
    rounds: int
    initial_abs_status_kwh: float
    final_utility_kwh: float
    per_ssp_initial: dict[str, float]
    per_ssp_final: dict[str, float]


def shuffle_partners(partners: list[str], seed: int, ssp_id: str, round_index: int) -> list[str]:
    """Deterministic permutation keyed by (seed, ssp id, round).

    Seeded through CRC32 of the textual key so the order is identical across
    processes (hash() is salted and unusable here)."""
    order = sorted(partners)
    rng = random.Random(zlib.crc32(f"{seed}:{ssp_id}:{round_index}".encode()) & 0xFFFFFFFF)
    rng.shuffle(order)
    return order


class _Agent:
    """One SSP's state: accepted solution, binding import locks, reserved exports."""

    def __init__(self, cfg: SSPConfig, scenario: Scenario, partners: list[str], weights: MatchingWeights):
        self.cfg = cfg
        self.scenario = scenario
        self.partners = partners
        self.weights = weights
        self.best_solution = float("inf")
        self.cm: CommitmentMatrix | None = None
        self.fx: FlexibilityAssignment | None = None
        self.locked: dict[str, dict[str, float]] = {}
        self.exports: dict[str, float] = {}

    def total_exports(self) -> float:
        return sum(self.exports.values())

    def _view(self, transient: tuple[str, float, float] | None) -> SspView:
        caps = {p: PartnerCapacity(0.0, 0.0) for p in self.partners}
        if transient is not None:
            src, base, bound = transient
            caps[src] = PartnerCapacity(base, bound)
        return SspView(
            ssp_id=self.cfg.id,
            consumers=self.cfg.consumers,
            producers=self.cfg.producers,
            preferences=self.cfg.preferences,
            connectivity=self.scenario.connectivity,
            partner_capacities=caps,
        )

    def solve_and_accept(self, transient: tuple[str, float, float] | None = None) -> bool:
        """Re-solve the local LP; adopt the result only on strict improvement."""
        cm, fx, objective = solve_dist_matching(
            self._view(transient),
            self.weights,
            self.scenario.line_constraints,
            locked_imports=self.locked,
            committed_exports=self.total_exports(),
        )
        if objective < self.best_solution - IMPROVE_TOL:
            self.best_solution = objective
            self.cm, self.fx = cm, fx
            return True
        return False

    def register_export(self, partner_id: str, kwh: float) -> None:
        self.exports[partner_id] = self.exports.get(partner_id, 0.0) + kwh
        self._refresh_sell_row()

    def _refresh_sell_row(self) -> None:
        """Re-attribute the Utility sell-back row after exports changed.

        Unplaced base production is sold back; exported energy is consumed
        from per-producer residuals greedily in producer order."""
        assert self.cm is not None
        remaining = self.total_exports()
        for producer in self.cfg.producers:
            residual = max(0.0, producer.energy - self.cm.committed_to_consumers(producer.id))
            share = min(residual, remaining)
            remaining -= share
            self.cm.set(UTILITY_ID, producer.id, residual - share)

    def surplus_offer_terms(self) -> tuple[float, float]:
        """(offerable kWh, aggregate bound): residual surplus net of committed exports."""
        assert self.cm is not None
        ex_energy, total_energy = aggregate_surplus(self.cfg, self.cm)
        bound = ex_energy / (total_energy + 1e-7) - 1.0
        return max(0.0, ex_energy - self.total_exports()), max(0.0, bound)

    def utility_kwh(self) -> float:
        """Current Utility interaction; the whole |status| while still unsolved."""
        if self.cm is None:
            return abs(energy_status(self.cfg))
        return utility_interaction(self.cm)

    def claim_against(self, src: str) -> dict[str, float]:
        """New per-consumer commitments against ``src`` beyond the existing locks."""
        assert self.cm is not None
        held = self.locked.get(src, {})
        out: dict[str, float] = {}
        for consumer in self.cfg.consumers:
            extra = self.cm.get(consumer.id, src) - held.get(consumer.id, 0.0)
            if extra > SURPLUS_TOL:
                out[consumer.id] = extra
        return out

    def lock_imports(self, src: str, cells: dict[str, float]) -> None:
        held = self.locked.setdefault(src, {})
        for consumer_id, kwh in cells.items():
            held[consumer_id] = held.get(consumer_id, 0.0) + kwh


def run_engine(
    scenario: Scenario,
    anm: ActualNeighborhoodMap,
    weights: MatchingWeights | None = None,
    seed: int = 0,
    iteration_cap: int = 10000,
) -> MatchingResult:
    """Run every SSP agent to global quiescence under the deterministic schedule."""
    # w2 <= 0 merely degenerates the objective (calibration deliberately starts
    # there); every structural violation is still a hard stop
    violations = [v for v in validate_scenario(scenario) if v.rule != "w2-positive"]
    if violations:
        raise InvalidScenarioError("; ".join(str(v) for v in violations[:5]))
    weights = weights or scenario.weights

    ssp_ids = sorted(scenario.ssp_ids)
    agents: dict[str, _Agent] = {}
    for ssp_id in ssp_ids:
        partners = [
            other
            for other in ssp_ids
            if other != ssp_id
            and anm.connected(ssp_id, other)
            and scenario.connectivity.connected(ssp_id, other)
        ]
        agents[ssp_id] = _Agent(scenario.ssp(ssp_id), scenario, partners, weights)

    per_ssp_initial = {s: abs(energy_status(scenario.ssp(s))) for s in ssp_ids}
    initial_total = sum(per_ssp_initial.values())
    trace: list[ConvergencePoint] = []
    log: list[LogRecord] = []
    iterations = 0
    rounds = 0
    pending = {s: True for s in ssp_ids}
    offers_pending = {s: False for s in ssp_ids}

    def accumulated_utility() -> float:
        return sum(agents[s].utility_kwh() for s in ssp_ids)

    def record_iteration() -> None:
        nonlocal iterations
        iterations += 1
        if iterations > iteration_cap:
            raise ConvergenceError(
                f"no quiescence within {iteration_cap} iterations", trace, log
            )
        trace.append(ConvergencePoint(iterations, accumulated_utility()))

    def deliver(offer: SurplusOffer, round_index: int) -> float:
        """Synchronous exchange: install capacity at the receiver, re-solve,
        lock the claim on both sides."""
        receiver = agents[offer.dst]
        sender = agents[offer.src]
        base = offer.energy_kwh / (1.0 + offer.bound)
        improved = receiver.solve_and_accept(transient=(offer.src, base, offer.bound))
        claimed = 0.0
        if improved:
            cells = receiver.claim_against(offer.src)
            claimed = sum(cells.values())
            if claimed > offer.energy_kwh + 1e-6:
                raise ProtocolViolationError(
                    f"{offer.dst} claimed {claimed} kWh from {offer.src}, offered {offer.energy_kwh}"
                )
            receiver.lock_imports(offer.src, cells)
            if claimed > 0.0:
                sender.register_export(offer.dst, claimed)
            record_iteration()
            pending[offer.dst] = True
            offers_pending[offer.dst] = True
        log.append(
            LogRecord(round_index, CLAIM_KIND, offer.dst, offer.src, {"amount_kwh": claimed})
        )
        return claimed

    def emit_offers(ssp_id: str, round_index: int) -> None:
        agent = agents[ssp_id]
        offerable, bound = agent.surplus_offer_terms()
        if offerable <= SURPLUS_TOL:
            return
        for partner_id in shuffle_partners(agent.partners, seed, ssp_id, round_index):
            if offerable <= SURPLUS_TOL:
                break
            offer = SurplusOffer(ssp_id, partner_id, offerable, bound)
            log.append(
                LogRecord(
                    round_index,
                    OFFER_KIND,
                    ssp_id,
                    partner_id,
                    {"energy_kwh": offer.energy_kwh, "bound": offer.bound, "token": offer.token},
                )
            )
            offerable -= deliver(offer, round_index)

    while any(pending.values()):
        rounds += 1
        for ssp_id in ssp_ids:
            if not pending[ssp_id]:
                continue
            pending[ssp_id] = False
            improved = agents[ssp_id].solve_and_accept()
            if improved:
                record_iteration()
            if improved or offers_pending[ssp_id]:
                offers_pending[ssp_id] = False
                emit_offers(ssp_id, rounds)

    per_ssp_final = {s: agents[s].utility_kwh() for s in ssp_ids}
    return MatchingResult(
        commitments={s: agents[s].cm for s in ssp_ids},
        flexibility={s: agents[s].fx for s in ssp_ids},
        trace=trace,
        log=log,
        iterations=iterations,
        rounds=rounds,
        initial_abs_status_kwh=initial_total,
        final_utility_kwh=trace[-1].accumulated_utility_kwh if trace else initial_total,
        per_ssp_initial=per_ssp_initial,
        per_ssp_final=per_ssp_final,
    )


@dataclass
class AuditReport:
    passed: bool
    findings: list[str] = field(default_factory=list)


def audit_privacy(
    log: list[LogRecord],
    scenario: Scenario,
    anm: ActualNeighborhoodMap,
    weights: MatchingWeights | None = None,
    seed: int = 0,
) -> AuditReport:
    """Verify the wire carried aggregates only, and that they were correct.

    Two independent checks:

    1. Schema: every record is a SurplusOffer or Claim whose payload holds
       exactly the aggregate numeric fields (plus the protocol token); any
       extra field, container value, or subscriber id in a payload is a
       finding.
    2. Aggregation correctness by replay: the engine is re-run under the same
       (scenario, anm, weights, seed) and the audited log must match the
       regenerated one message for message, which pins every offer to the
       sender's aggregate surplus at emission time.
    """
    findings: list[str] = []
    ssp_ids = set(scenario.ssp_ids)
    subscriber_ids = {
        sub.id for cfg in scenario.ssps for sub in cfg.consumers + cfg.producers
    }
    allowed = {OFFER_KIND: {"energy_kwh", "bound", "token"}, CLAIM_KIND: {"amount_kwh"}}
    for k, record in enumerate(log):
        where = f"message {k} ({record.kind} {record.src}->{record.dst})"
        if record.kind not in allowed:
            findings.append(f"{where}: unknown message kind")
            continue
        if record.src not in ssp_ids or record.dst not in ssp_ids or record.src == record.dst:
            findings.append(f"{where}: endpoints must be two distinct SSP ids")
        extra = set(record.payload) - allowed[record.kind]
        if extra:
            findings.append(f"{where}: payload field {sorted(extra)[0]!r} is not part of the aggregate wire format")
        missing = allowed[record.kind] - set(record.payload)
        if missing:
            findings.append(f"{where}: payload is missing {sorted(missing)[0]!r}")
        for key, value in record.payload.items():
            if key == "token":
                if value != SEND_EXCESS:
                    findings.append(f"{where}: bad token {value!r}")
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                findings.append(f"{where}: payload field {key!r} must be a plain number, got {type(value).__name__}")
            elif isinstance(value, float) and value < -1e-9:
                findings.append(f"{where}: payload field {key!r} is negative")
        for value in record.payload.values():
            if isinstance(value, str) and value in subscriber_ids:
                findings.append(f"{where}: payload leaks subscriber id {value!r}")

    expected = run_engine(scenario, anm, weights=weights, seed=seed).log
    if len(expected) != len(log):
        findings.append(f"log has {len(log)} messages, deterministic replay produced {len(expected)}")
    for k, (got, want) in enumerate(zip(log, expected)):
        if got != want:
            findings.append(
                f"message {k} differs from replay: got {got.kind} {got.payload}, expected {want.kind} {want.payload}"
            )
    return AuditReport(passed=not findings, findings=findings)


def messages_to_csv(log: list[LogRecord]) -> str:
    lines = ["round,kind,src,dst,energy_kwh,bound,token"]
    for record in log:
        if record.kind == OFFER_KIND:
            energy = repr(record.payload["energy_kwh"])
            bound = repr(record.payload["bound"])
            token = str(record.payload["token"])
        else:
            energy = repr(record.payload["amount_kwh"])
            bound = ""
            token = ""
        lines.append(f"{record.round_index},{record.kind},{record.src},{record.dst},{energy},{bound},{token}")
    return "\n".join(lines) + "\n"


def trace_to_csv(trace: list[ConvergencePoint]) -> str:
    lines = ["iteration,accumulated_utility_kwh"]
    for point in trace:
        lines.append(f"{point.iteration},{point.accumulated_utility_kwh!r}")
    return "\n".join(lines) + "\n"

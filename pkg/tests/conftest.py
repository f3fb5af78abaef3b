from __future__ import annotations

import pytest

from sspsim.model import (
    ConnectivityMatrix,
    MatchingWeights,
    PreferenceTable,
    Scenario,
    SSPConfig,
    Subscriber,
    SubscriberKind,
)


def worked_example_subscribers():
    consumers = (
        Subscriber("AC1", SubscriberKind.ACTIVE_CONSUMER, 13.5, priority=0.25),
        Subscriber("AC2", SubscriberKind.ACTIVE_CONSUMER, 18.0, priority=0.25),
        Subscriber("AC3", SubscriberKind.ACTIVE_CONSUMER, 13.5, priority=0.25),
        Subscriber("PC1", SubscriberKind.PASSIVE_CONSUMER, 12.0, bound=0.2, priority=0.25),
    )
    producers = (
        Subscriber("AP1", SubscriberKind.ACTIVE_PRODUCER, 30.0),
        Subscriber("AP2", SubscriberKind.ACTIVE_PRODUCER, 12.0),
        Subscriber("PP1", SubscriberKind.PASSIVE_PRODUCER, 10.0, bound=0.3),
    )
    return consumers, producers


@pytest.fixture
def worked_scenario() -> Scenario:
    """Worked single-SSP example: 57 kWh demand (12 of it cuttable by 20%)
    against 52 kWh supply (10 of it stretchable by 30%)."""
    consumers, producers = worked_example_subscribers()
    prefs = PreferenceTable({c.id: {"AP1": 1, "AP2": 2, "PP1": 3} for c in consumers})
    rows = {c.id: {"AP1": 1, "AP2": 1, "PP1": 1, "U": 1} for c in consumers}
    ssp = SSPConfig("S1", consumers, producers, prefs)
    return Scenario((ssp,), ConnectivityMatrix(rows), MatchingWeights(), None, 3)


@pytest.fixture
def pair_scenario() -> Scenario:
    """Two complementary SSPs: S1 is 5 kWh short, S2 has 5 kWh spare."""
    s1 = SSPConfig(
        "S1",
        (Subscriber("S1.C1", SubscriberKind.ACTIVE_CONSUMER, 10.0, priority=1.0),),
        (Subscriber("S1.P1", SubscriberKind.ACTIVE_PRODUCER, 5.0),),
        PreferenceTable({"S1.C1": {"S1.P1": 1, "S2": 2}}),
    )
    s2 = SSPConfig(
        "S2",
        (Subscriber("S2.C1", SubscriberKind.ACTIVE_CONSUMER, 5.0, priority=1.0),),
        (Subscriber("S2.P1", SubscriberKind.ACTIVE_PRODUCER, 10.0),),
        PreferenceTable({"S2.C1": {"S2.P1": 1, "S1": 2}}),
    )
    rows = {
        "S1.C1": {"S1.P1": 1, "U": 1},
        "S2.C1": {"S2.P1": 1, "U": 1},
        "S1": {"S2": 1},
        "S2": {"S1": 1},
    }
    return Scenario((s1, s2), ConnectivityMatrix(rows), MatchingWeights(), None, 7)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if getattr(report, "when", "call") == "call" and "test_acceptance" in nodeid:
                rows.append((nodeid.split("::")[-1], status))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(rows):
            flag = "PASS" if status == "passed" else "FAIL"
            terminalreporter.write_line(f"{flag}  {name}")

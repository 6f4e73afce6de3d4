import json
import math

import numpy as np
import pytest

from acceptance_suite import (QUICK_CRITERIA, AcceptanceSuite, CriterionResult, Status,
                              fingerprint)
from errors import InconclusiveError, PrecisionError
from experiment_harness import EnsembleStats


@pytest.fixture
def suite(logger):
    return AcceptanceSuite(logger, workers=1, master_seed=0)


def test_line_format():
    result = CriterionResult("A4", Status.PASS, "max|dU-W+Q|=1.0e-15")
    assert result.line() == "PASS A4 max|dU-W+Q|=1.0e-15"


def test_all_criteria_registered(suite):
    assert list(suite.criteria()) == [f"A{i}" for i in range(1, 10)]
    assert set(QUICK_CRITERIA) <= set(suite.criteria())


def test_quick_runs_subset_in_order(suite, monkeypatch):
    called = []

    def criteria(self):
        def make(cid):
            def check():
                called.append(cid)
                return CriterionResult(cid, Status.PASS, "ok")
            return check
        return {f"A{i}": make(f"A{i}") for i in range(1, 10)}

    monkeypatch.setattr(AcceptanceSuite, "criteria", criteria)
    results = suite.run(quick=True)
    assert called == ["A1", "A4", "A6"]
    assert [r.status for r in results] == [Status.PASS] * 3


def test_errors_do_not_stop_the_suite(suite, monkeypatch):
    def inconclusive():
        raise InconclusiveError("too few crossings")

    def failing():
        raise PrecisionError("rate·dt too large")

    monkeypatch.setattr(AcceptanceSuite, "criteria", lambda self: {
        "A1": inconclusive, "A4": failing,
        "A6": lambda: CriterionResult("A6", Status.PASS, "ok")})
    results = suite.run(quick=True)
    assert [r.status for r in results] == [Status.INCONCLUSIVE, Status.FAIL, Status.PASS]
    assert results[0].detail == "too few crossings"
    assert results[1].detail.startswith("PrecisionError")


def test_deterministic_data_criterion(suite):
    result = suite.deterministic_data()
    assert result.status is Status.PASS, result.detail
    assert "prefix_ok=True" in result.detail


def test_ledger_exactness_criterion(suite):
    result = suite.ledger_exactness()
    assert result.status is Status.PASS, result.detail


def test_verdict_lists_failed_checks(suite):
    result = suite._verdict("A2", {"heat": True, "error": False}, "heat=0.7")
    assert result.status is Status.FAIL
    assert result.detail == "heat=0.7 failed=[error]"


def test_fingerprint_keeps_every_float_bit_and_drops_wall_time():
    stats = EnsembleStats(10, 0.1, 0.0, 0.30000000000000004, 0.01, 0.5, 0.1, 0.5, 0.1,
                          wall_time=3.2)
    decoded = json.loads(fingerprint(stats))
    assert "wall_time" not in decoded
    assert float.fromhex(decoded["mean_heat_to_bath"]) == 0.30000000000000004
    assert fingerprint(stats) != fingerprint(
        EnsembleStats(10, 0.1, 0.0, 0.3, 0.01, 0.5, 0.1, 0.5, 0.1, wall_time=3.2))
    assert fingerprint(stats) == fingerprint(
        EnsembleStats(10, 0.1, 0.0, 0.30000000000000004, 0.01, 0.5, 0.1, 0.5, 0.1,
                      wall_time=99.0))
    assert json.loads(fingerprint({"p": np.array([1.0, math.nan]), "s": Status.PASS})) == \
        {"p": ["0x1.0000000000000p+0", "nan"], "s": "PASS"}


def test_reproducibility_reruns_every_criterion_reduced(logger, monkeypatch):
    suite = AcceptanceSuite(logger, workers=3, master_seed=0)
    calls = []

    def criteria(self):
        def make(cid):
            def check(reduced=False, workers=None):
                calls.append((cid, reduced, workers))
                evidence = f"{cid}:{workers}" if cid == "A5" else cid
                return CriterionResult(cid, Status.PASS, "ok", evidence)
            return check
        table = {f"A{i}": make(f"A{i}") for i in range(1, 9)}
        table["A9"] = self.reproducibility
        return table

    monkeypatch.setattr(AcceptanceSuite, "criteria", criteria)
    result = suite.reproducibility()
    assert {cid for cid, _, _ in calls} == {f"A{i}" for i in range(1, 9)}
    assert all(reduced for _, reduced, _ in calls)
    assert sorted({w for _, _, w in calls}) == [1, 3]
    assert result.status is Status.FAIL
    assert "A5=differs" in result.detail
    assert "A1=same" in result.detail


def test_reproducibility_compares_raised_errors(logger, monkeypatch):
    suite = AcceptanceSuite(logger, workers=1, master_seed=0)

    def inconclusive(reduced=False, workers=None):
        raise InconclusiveError("too few crossings: E=4:10")

    monkeypatch.setattr(AcceptanceSuite, "criteria", lambda self: {
        "A5": inconclusive, "A9": self.reproducibility})
    result = suite.reproducibility()
    assert result.status is Status.PASS
    assert result.detail == "workers 1 vs 2: A5=same"


def test_reduced_criterion_evidence_is_repeatable(suite):
    first = suite.ledger_exactness(reduced=True)
    second = suite.ledger_exactness(reduced=True, workers=2)
    assert first.evidence
    assert first.evidence == second.evidence

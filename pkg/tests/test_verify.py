"""Self-check suites pass at reduced scale, and a deliberately injected fault
is caught with a replayable failure report."""

import numpy as np

from cranopt import cranmodel
from cranopt.verify import (
    SUITES,
    SuiteResult,
    directions_suite,
    feasibility_suite,
    gradient_suite,
    kernels_suite,
    oracle_suite,
    run_all,
    run_suite,
    serialization_suite,
)


def test_all_suites_pass_small():
    results = [
        feasibility_suite(seed=0, n=360),
        directions_suite(seed=0, n=200),
        gradient_suite(seed=0, n=1),
        oracle_suite(seed=0, n=3),
        kernels_suite(seed=0, n=15),
        serialization_suite(seed=0),
    ]
    for r in results:
        assert r.ok, r.line()
        assert r.checked > 0


def test_run_suite_dispatch():
    r = run_suite("serialization", seed=1)
    assert isinstance(r, SuiteResult)
    assert r.name == "serialization"
    names = [s.name for s in run_all(seed=0, names=["oracle", "directions"])]
    assert names == ["oracle", "directions"]
    assert set(SUITES) == {
        "feasibility", "directions", "gradient", "oracle", "kernels", "serialization",
    }


def test_suite_line_format():
    ok = SuiteResult("demo", 10, 0)
    assert ok.line() == "demo: ok (10 checks, 0 failures)"
    bad = SuiteResult("demo", 10, 2, first_failure="case seed=(0,20) idx=3")
    assert not bad.ok
    assert "FAIL" in bad.line() and "seed=(0,20)" in bad.line()


def test_injected_scaling_fault_is_caught(monkeypatch):
    """A 1% error in the feasibility scaling must trip the feasibility suite,
    and the report must name the invariant and the sample seed."""
    real = cranmodel.scale_to_feasible

    def off_by_one_percent(v, power_budget, beta):
        return real(v, power_budget, beta) * np.sqrt(1.01)

    monkeypatch.setattr(cranmodel, "scale_to_feasible", off_by_one_percent)
    result = feasibility_suite(seed=0, n=72)
    assert result.failures > 0
    assert "feasibility" in result.first_failure
    assert "seed=" in result.first_failure
    assert result.stats["worst_power_slack"] < -1e-9

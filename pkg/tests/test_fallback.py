from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from goodcase.campaign import evaluate, fuzz_config
from goodcase.core import PROTOCOLS
from goodcase.fallback import IdealFallback, LateSubmission, check_fallback_contract
from goodcase.simulator import run


def test_unanimous_submissions_give_that_value():
    fb = IdealFallback(3)
    for p in range(3):
        fb.submit(p, 1, 3)
    assert [fb.poll(p, 5) for p in range(3)] == [1, 1, 1]


def test_split_submissions_follow_the_majority():
    fb = IdealFallback(3)
    for p, u in enumerate((1, 1, 0)):
        fb.submit(p, u, 3)
    assert fb.poll(0, 5) == 1


def test_tie_goes_to_the_smallest_value():
    fb = IdealFallback(2, universe=(0, 1, 2))
    for p, u in enumerate((2, 1, 2, 1)):
        fb.submit(p, u, 2)
    assert fb.poll(0, 4) == 1


def test_no_submissions_gives_smallest_universe_value():
    fb = IdealFallback(2, universe=(3, 4))
    assert fb.poll(0, 4) == 3


def test_poll_is_gated_by_duration():
    fb = IdealFallback(3, duration=2)
    fb.submit(0, 1, 3)
    assert fb.poll(0, 4) is None
    assert fb.poll(0, 5) == 1
    assert fb.poll(1, 10) == 1


def test_resubmission_is_ignored_and_late_submission_rejected():
    fb = IdealFallback(3)
    fb.submit(0, 1, 3)
    fb.submit(0, 0, 3)
    assert fb.submitted == {0: 1}
    with pytest.raises(LateSubmission):
        fb.submit(1, 0, 4)
    with pytest.raises(ValueError):
        IdealFallback(3, duration=0)


def test_asleep_party_is_excluded_from_validity():
    fb = IdealFallback(3)
    fb.submit(0, 1, 3)
    fb.submit(1, 1, 3)
    # p2 slept through round 3 and submitted nothing
    awake = [set()] * 3 + [{0, 1}, {0, 1}, {0, 1, 2}]
    for p in (0, 1, 2):
        fb.poll(p, 5)
    assert fb.output == 1
    assert check_fallback_contract(fb, {0, 1, 2}, awake) == []


def test_contract_checker_reports_missed_termination():
    fb = IdealFallback(1, duration=1)
    fb.submit(0, 0, 1)
    fb.poll(0, 3)
    awake = [{0}, {0}, {0}, {0}]
    assert any("termination" in s for s in check_fallback_contract(fb, {0}, awake))


@given(st.dictionaries(st.integers(0, 9), st.integers(0, 2), max_size=10), st.integers(1, 5))
def test_agreement_and_validity_for_any_submissions(subs, duration):
    fb = IdealFallback(2, duration=duration, universe=(0, 1, 2))
    for p, u in subs.items():
        fb.submit(p, u, 2)
    outs = {fb.poll(p, 2 + duration + p) for p in range(10)}
    assert len(outs) == 1
    if len(set(subs.values())) == 1:
        assert outs == set(subs.values())


def _verdicts(protocol, seed, duration):
    cfg = fuzz_config(protocol, seed)
    cfg = replace(cfg, params=replace(cfg.params, fallback_duration=duration))
    o = evaluate(run(cfg, seed))
    rep = o.report
    return (rep.agreement.passed, rep.validity.passed, rep.termination.passed,
            o.good_case, o.latency if o.good_case else None, rep.fallback_problems)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_properties_hold_identically_for_every_fallback_duration(protocol):
    for seed in range(40):
        results = {d: _verdicts(protocol, seed, d) for d in (1, 2, 5)}
        first = results[1]
        assert first[:3] == (True, True, True), (protocol, seed, first)
        assert first[5] == []
        assert all(r == first for r in results.values()), (protocol, seed, results)

from fractions import Fraction

import pytest

from goodcase.adversaries import AdversaryContext, fuzz_adversary, min_awake
from goodcase.adversaries.attacks import (
    NoViolation,
    appendix_g_executions,
    exec12_layout,
    run_appendix_g_suite,
    run_bb_execution12,
)
from goodcase.campaign import fuzz_config
from goodcase.config import make_config
from goodcase.core import ForgeryError, Kind, MessagePayload, Params, SignatureLedger, detect_equivocation
from goodcase.simulator import check_unforgeability, run


def test_fuzz_strategy_is_deterministic_per_seed():
    cfg = fuzz_config("BBfp", 7)
    a, b = run(cfg, 7, adversary=fuzz_adversary(7)), run(cfg, 7, adversary=fuzz_adversary(7))
    assert a.hash() == b.hash()
    assert [r.injections for r in a.rounds] == [r.injections for r in b.rounds]


@pytest.mark.parametrize("protocol", ["BBfp", "BBsp", "BAsp"])
def test_fuzz_injections_verify_and_schedules_respect_rho(protocol):
    for seed in range(40):
        cfg = fuzz_config(protocol, seed)
        tr = run(cfg, seed)
        rho, nf = cfg.params.rho, len(cfg.schedule.corrupt)
        for r in tr.rounds:
            assert nf < rho * (len(r.awake) + nf)
            assert r.dropped == ()
        assert check_unforgeability(tr) == []


def test_adversary_cannot_sign_for_a_correct_party():
    params = Params(n_total=3, rho=Fraction(1, 2), protocol="BAfp")
    ctx = AdversaryContext(params=params, corrupt=frozenset({2}), correct=(0, 1), inputs={}, ledger=SignatureLedger())
    ctx.sign(2, MessagePayload(Kind.ECHO, 1))
    with pytest.raises(ForgeryError):
        ctx.sign(0, MessagePayload(Kind.ECHO, 1))


def test_min_awake_is_the_smallest_rho_respecting_count():
    assert min_awake(1, Fraction(1, 2)) == 2
    assert min_awake(2, Fraction(19, 50)) == 4     # 2 < 0.38 * 6
    assert min_awake(0, Fraction(1, 3)) == 1      # 0 < rho * 0 is false


def test_split_adversary_equivocates_to_the_two_halves():
    cfg = make_config("BAfp", 5, "29/100", value=0, corrupt={4}, adversary="split")
    tr = run(cfg, 0)
    sent = [m for _, m in tr.rounds[0].injections]
    assert detect_equivocation(sent, 4, Kind.ECHO)
    assert {m.value for q, m in tr.rounds[0].injections if q < 3} == {0}
    assert {m.value for q, m in tr.rounds[0].injections if q >= 3} == {1}


# -- the three executions -----------------------------------------------------

def test_appendix_g_weakened_threshold_violates_agreement():
    t1, t2, t3, report = run_appendix_g_suite(6, 2)
    assert report["a_views_equal_g1_g2"] and report["c_views_equal_g2_g3"]
    assert report["violation"]["detail"] == {"A": [1], "C": [0]}
    assert report["g2_decisions"] == {0: 1, 1: 1, 4: 0, 5: 0}
    for a in (0, 1):
        assert t1.view_bytes(a, 1) == t2.view_bytes(a, 1)
    for c in (4, 5):
        assert t2.view_bytes(c, 1) == t3.view_bytes(c, 1)


@pytest.mark.parametrize("f", [1, None])
def test_appendix_g_unmodified_threshold_resists(f):
    with pytest.raises(NoViolation) as info:
        run_appendix_g_suite(6, f)
    assert info.value.report["f"] == 1
    assert len(set(info.value.report["g2_decisions"].values())) == 1


def test_appendix_g_executions_replay_identically():
    first = [e.run().hash() for e in appendix_g_executions(6, 2)]
    again = [e.run().hash() for e in appendix_g_executions(6, 2)]
    assert first == again and len(set(first)) == 3


def test_appendix_g_needs_thirds():
    with pytest.raises(ValueError):
        appendix_g_executions(7, 2)


def test_execution12_layout_at_nine_twentieths():
    lay = exec12_layout(20, Fraction(9, 20))
    assert lay.n_total == 34
    assert len(lay.silent_voters) == 8
    assert len(lay.corrupt2) == 15


def test_execution12_above_threshold_breaks_agreement():
    t1, t2, report = run_bb_execution12(20, Fraction(9, 20))
    assert report["views_equal"]
    assert report["divergent_fallback_inputs"]
    assert report["target_decision_exec1"][0] == 1
    assert report["violations"]
    assert t1.view_bytes(report["target"], 2) == t2.view_bytes(report["target"], 2)


@pytest.mark.parametrize("n_p", [5, 10, 20])
def test_execution12_at_nineteen_fiftieths_finds_nothing(n_p):
    with pytest.raises(NoViolation) as info:
        run_bb_execution12(n_p, Fraction(19, 50))
    rep = info.value.report
    assert rep["views_equal"] and not rep["violations"]

from decimal import Decimal, localcontext

import pytest
from hypothesis import given, settings, strategies as st

from goodcase.campaign import fuzz_config
from goodcase.config import make_config
from goodcase.core import PROTOCOLS
from goodcase.properties import (
    Undecided,
    check_agreement,
    check_run,
    check_termination,
    check_validity,
    classify_good_case,
    measure_decision_latency,
    threshold_constants,
)
from goodcase.simulator import RoundRecord, Transcript, run


def transcript(protocol="BAfp", n=3, rounds=4, awake=None, decisions=None, halts=None, inputs=None,
               corrupt=(), leader=None):
    """A transcript with the given awake sets and decisions; decisions map p -> (value, round)."""
    cfg = make_config(protocol, n, "1/3" if protocol != "BAfp" else "29/100", inputs=inputs,
                      corrupt=corrupt, leader=leader)
    correct = [p for p in range(n) if p not in corrupt]
    awake = awake or [correct] * rounds
    tr = Transcript(config=cfg, seed=0, adversary="hand-built")
    tr.rounds = [RoundRecord(round=t, awake=tuple(a)) for t, a in enumerate(awake)]
    for p, (v, r) in (decisions or {}).items():
        tr.decisions[p] = (v, r, True)
        tr.rounds[r].decisions[p] = (v, True)
    tr.halts = dict(halts) if halts is not None else {p: r for p, (v, r) in (decisions or {}).items()}
    return tr


def test_termination_with_a_late_waker():
    awake = [[0, 1, 2]] * 2 + [[0, 1]] * 3 + [[0, 1, 2]] * 2
    tr = transcript(n=3, awake=awake, decisions={0: (1, 2), 1: (1, 2), 2: (1, 5)})
    res = check_termination(tr)
    assert res.passed and res.round == 2


def test_termination_fails_with_the_undecided_party_as_witness():
    tr = transcript(n=3, decisions={0: (1, 1), 1: (1, 1)})
    res = check_termination(tr)
    assert not res.passed and res.witness[0] == 2


def test_termination_is_vacuous_without_correct_parties():
    tr = transcript(n=3)
    tr.config.schedule = tr.config.schedule.__class__(corrupt=frozenset({0, 1, 2}))
    assert check_termination(tr).passed


def test_agreement_examples():
    assert check_agreement(transcript(decisions={0: (1, 1), 1: (1, 1), 2: (1, 2)})).passed
    res = check_agreement(transcript(decisions={0: (1, 1), 1: (0, 2)}))
    assert not res.passed and res.witness == ((0, 1), (1, 0))
    assert check_agreement(transcript()).passed


def test_bb_validity_with_correct_leader():
    tr = transcript("BBfp", 4, inputs={0: 1}, leader=0, decisions={p: (1, 2) for p in range(4)})
    assert check_validity(tr).passed
    tr = transcript("BBfp", 4, inputs={0: 1}, leader=0, decisions={0: (1, 2), 3: (0, 3)})
    res = check_validity(tr)
    assert not res.passed and res.witness == (3, 0, 1)


def test_bb_validity_is_vacuous_with_corrupt_leader():
    tr = transcript("BBfp", 4, inputs={}, leader=0, corrupt={0}, decisions={1: (0, 2), 2: (1, 2)})
    assert check_validity(tr).passed
    assert not check_agreement(tr).passed


def test_ba_validity_examples():
    tr = transcript(rounds=6, inputs={0: 1, 1: 1, 2: 1}, decisions={0: (1, 1), 1: (0, 4)})
    res = check_validity(tr)
    assert not res.passed and res.witness == (1, 0, 1)
    mixed = transcript(inputs={0: 1, 1: 0, 2: 1}, decisions={0: (0, 1), 1: (0, 1)})
    assert check_validity(mixed).passed


def test_latency_with_everyone_awake():
    tr = transcript(rounds=5, decisions={p: (1, 2) for p in range(3)})
    assert measure_decision_latency(tr) == 2


def test_latency_counts_a_sleeper_from_its_first_awake_round():
    awake = [[0, 1, 2]] * 2 + [[0, 1]] * 8 + [[0, 1, 2]] * 2
    tr = transcript(awake=awake, decisions={0: (1, 2), 1: (1, 2), 2: (1, 10)})
    assert measure_decision_latency(tr) == 2


def test_latency_is_set_by_the_slowest_always_awake_party():
    tr = transcript(rounds=5, decisions={0: (1, 2), 1: (1, 2), 2: (1, 3)})
    assert measure_decision_latency(tr) == 3


def test_latency_raises_when_someone_never_decides():
    with pytest.raises(Undecided):
        measure_decision_latency(transcript(decisions={0: (1, 1)}))


def test_good_case_classification():
    assert not classify_good_case(make_config("BBfp", 4, "1/3", inputs={}, corrupt={0}, leader=0))
    assert classify_good_case(make_config("BAfp", 3, "29/100", value=0))
    asleep = make_config("BBfp", 4, "1/3", inputs={0: 1}, leader=0, awake=[[1, 2, 3], [0, 1, 2, 3]])
    assert not classify_good_case(asleep)
    assert classify_good_case(make_config("BBfp", 4, "1/3", inputs={0: 1}, leader=0))


def test_threshold_constants():
    bb2, ba1 = threshold_constants()
    assert bb2.approx(3) == "0.382"
    assert ba1.approx(3) == "0.293"
    assert bb2.residual < 1e-12 and ba1.residual < 1e-12
    # the decimal value sits inside the exact rational bracket of each root
    for c in (bb2, ba1):
        lo, hi = c.bracket
        assert Decimal(lo.numerator) / lo.denominator <= c.decimal + Decimal("1e-15")
        assert c.decimal - Decimal("1e-15") <= Decimal(hi.numerator) / hi.denominator


def test_threshold_roots_match_closed_forms_independently():
    bb2, ba1 = threshold_constants(precision=60)
    # closed forms via the other route: 1 - 1/phi and the quadratic formula for 2r^2 - 4r + 1
    with localcontext() as ctx:
        ctx.prec = 60
        phi = (1 + Decimal(5).sqrt()) / 2
        assert abs(bb2.decimal - (1 - 1 / phi)) < Decimal("1e-50")
        assert abs(ba1.decimal - (4 - Decimal(8).sqrt()) / 4) < Decimal("1e-50")


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(PROTOCOLS), st.integers(0, 10 ** 6))
def test_latency_never_exceeds_termination_round(protocol, seed):
    tr = run(fuzz_config(protocol, seed), seed)
    rep = check_run(tr)
    if rep.termination.passed and rep.decision_latency is not None:
        assert rep.decision_latency <= rep.termination.round

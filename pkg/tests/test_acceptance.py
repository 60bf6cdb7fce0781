"""Acceptance criteria, each run at its stated tolerance.

Every test records one "PASS/FAIL criterion N: ..." line, printed as it runs and
again in the terminal summary.  The campaigns behind criteria 1, 2, 7 and 8 run
once per session: exhaustive enumeration for n in 3..5 and 10,000 fuzz seeds per
protocol for n in 3..9.  Expect a few minutes.

Run alone with ``pytest tests/test_acceptance.py -s``.
"""
from dataclasses import dataclass, field, replace
from decimal import Decimal, localcontext
from fractions import Fraction

import pytest

import conftest
from goodcase.adversaries.attacks import NoViolation, run_appendix_g_suite, run_bb_execution12
from goodcase.campaign import evaluate, exhaustive_configs, fuzz_config
from goodcase.cli import replay_file
from goodcase.core import CLAIMED_LATENCY, PROTOCOLS
from goodcase.properties import threshold_constants
from goodcase.simulator import run
from oracle_spaces import compare, rounds_for

FUZZ_RUNS = 10_000
FUZZ_N = (3, 9)
EXHAUSTIVE_N = (3, 4, 5)
REPLAY_EVERY = 500

# fuzz seeds where the slow-path BA decided-certificate check lets a certificate
# through whose forward set G* is not contained in the certificate's own G^q
KNOWN_BASP_SEEDS = {4446, 4792, 5989, 6300}


def record(n: int, passed: bool, detail: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@dataclass
class Campaign:
    outcomes: list = field(default_factory=list)
    fallback_used: int = 0
    replays: list = field(default_factory=list)      # (config, seed, hash at campaign time)


def _collect(camp: Campaign, cfg, seed: int, label: str, keep: bool) -> None:
    tr = run(cfg, seed)
    camp.outcomes.append(evaluate(tr, label))
    if tr.fallback.submitted:
        camp.fallback_used += 1
    if keep:
        camp.replays.append((cfg, seed, tr.hash()))


@pytest.fixture(scope="module")
def campaign() -> Campaign:
    camp = Campaign()
    for protocol in PROTOCOLS:
        for n in EXHAUSTIVE_N:
            for i, cfg in enumerate(exhaustive_configs(protocol, n)):
                _collect(camp, cfg, 0, f"exhaustive:n{n}:{i}", i % REPLAY_EVERY == 0)
        for seed in range(FUZZ_RUNS):
            _collect(camp, fuzz_config(protocol, seed, FUZZ_N), seed, f"fuzz:{seed}", seed % REPLAY_EVERY == 0)
    return camp


def _by_protocol(outcomes):
    out = {p: [] for p in PROTOCOLS}
    for o in outcomes:
        out[o.protocol].append(o)
    return out


def test_criterion_1_good_case_latency(campaign):
    parts, ok = [], True
    for protocol, outs in _by_protocol(campaign.outcomes).items():
        claimed = CLAIMED_LATENCY[protocol]
        for kind in ("exhaustive", "fuzz"):
            good = [o for o in outs if o.good_case and o.label.startswith(kind)]
            lat = sorted({o.latency for o in good}, key=str)
            ok &= bool(good) and lat == [claimed] and all(o.claim_applies for o in good)
            parts.append(f"{protocol}/{kind[:4]} {len(good)} runs latency {lat}")
        ok &= len([o for o in outs if o.label.startswith("fuzz")]) >= FUZZ_RUNS
    record(1, ok, "; ".join(parts))
    assert ok


@pytest.mark.xfail(strict=True, reason="four BAsp fuzz seeds break agreement; see the decisions ledger")
def test_criterion_2_zero_violations(campaign):
    bad = [o for o in campaign.outcomes if not (o.report.agreement.passed and o.report.validity.passed)]
    detail = ", ".join(f"{o.protocol} {o.label}" for o in bad) or "none"
    record(2, not bad, f"{len(bad)} agreement/validity violations in {len(campaign.outcomes)} runs: {detail}")
    assert not bad


def test_criterion_2_violations_are_confined_to_known_basp_seeds(campaign):
    bad = [o for o in campaign.outcomes if o.violation]
    where = {(o.protocol, o.label) for o in bad}
    assert where == {("BAsp", f"fuzz:{s}") for s in KNOWN_BASP_SEEDS}
    for o in bad:
        assert not o.report.agreement.passed and o.report.validity.passed
        assert not o.good_case


def test_criterion_2_basp_seed_4446_regression():
    cfg = fuzz_config("BAsp", 4446)
    o = evaluate(run(cfg, 4446))
    assert cfg.params.n_total == 4 and cfg.schedule.corrupt == {2}
    assert o.report.agreement.witness == ((0, 1), (1, 0))
    assert any("after an early decision for 1" in p for p in o.invariant_problems)


def test_criterion_3_threshold_arithmetic():
    bb2, ba1 = threshold_constants(precision=50)
    with localcontext() as ctx:
        ctx.prec = 50
        r1, r2 = bb2.decimal, ba1.decimal
        res1 = abs(r1 - (1 - r1) ** 2)
        res2 = abs(r2 - (1 - r2) * (1 - 2 * r2))
    ok = (res1 < Decimal("1e-12") and res2 < Decimal("1e-12")
          and f"{r1:.3f}" == "0.382" and f"{r2:.3f}" == "0.293"
          and bb2.residual < 1e-12 and ba1.residual < 1e-12)
    record(3, ok, f"rho=(1-rho)^2 root {r1:.6f} residual {res1:.1e}; "
                  f"rho=(1-rho)(1-2rho) root {r2:.6f} residual {res2:.1e}")
    assert ok


def test_criterion_4_appendix_lower_bound():
    t1, t2, t3, rep = run_appendix_g_suite(6, 2)
    a_equal = all(t1.view_bytes(a, 1) == t2.view_bytes(a, 1) for a in (0, 1))
    c_equal = all(t2.view_bytes(c, 1) == t3.view_bytes(c, 1) for c in (4, 5))
    split = rep["violation"] is not None and rep["violation"]["detail"] == {"A": [1], "C": [0]}
    try:
        run_appendix_g_suite(6, 1)
        resisted, unmod = False, "violation"
    except NoViolation as e:
        resisted, unmod = True, f"decisions {sorted(set(e.report['g2_decisions'].values()))}"
    ok = a_equal and c_equal and split and resisted
    record(4, ok, f"f=2 weakened: A->1 C->0 {split}, A views equal {a_equal}, C views equal {c_equal}; "
                  f"f=1 unmodified: no violation {resisted} ({unmod})")
    assert ok


def test_criterion_5_execution_pair_attack():
    t1, t2, rep = run_bb_execution12(20, Fraction(9, 20))
    views = rep["views_equal"] and t1.view_bytes(rep["target"], 2) == t2.view_bytes(rep["target"], 2)
    divergent = bool(rep["divergent_fallback_inputs"])
    quiet = {}
    for n_p in (5, 10, 20):
        try:
            run_bb_execution12(n_p, Fraction(19, 50))
            quiet[n_p] = False
        except NoViolation as e:
            quiet[n_p] = not e.report["violations"]
    ok = views and divergent and all(quiet.values())
    record(5, ok, f"rho=9/20 n_p=20: target views equal {views}, divergent fallback inputs {divergent}, "
                  f"{len(rep['violations'])} violations found; rho=19/50 no violation for n_p {quiet}")
    assert ok


def test_criterion_6_oracle_equivalence():
    total, mismatches = 0, []
    for protocol in PROTOCOLS:
        for t in rounds_for(protocol):
            for n in (3, 4):
                count, mismatch = compare(protocol, t, n)
                total += count
                if mismatch is not None:
                    mismatches.append((protocol, t, n, mismatch))
    ok = not mismatches and total > 0
    record(6, ok, f"{total} cases over every protocol, round and n in {{3, 4}}; {len(mismatches)} mismatches")
    assert ok, mismatches[:1]


def test_criterion_7_determinism(campaign, tmp_path):
    differ = []
    for i, (cfg, seed, h) in enumerate(campaign.replays):
        again = run(cfg, seed)
        if again.hash() != h:
            differ.append((cfg.name, seed, "rerun"))
            continue
        path = tmp_path / f"{i}.jsonl"
        path.write_text(again.export_jsonl())
        same, old, new, _ = replay_file(path)
        if not (same and old == new == h):
            differ.append((cfg.name, seed, "replay"))
    ok = not differ and len(campaign.replays) > 0
    record(7, ok, f"{len(campaign.replays)} sampled campaign runs rerun and replayed from transcripts; "
                  f"{len(differ)} hash differences")
    assert ok, differ[:3]


def test_criterion_8_fallback_contract(campaign):
    broken = [o for o in campaign.outcomes if o.report.fallback_problems]
    swaps = []
    for protocol in PROTOCOLS:
        for seed in range(40):
            cfg = fuzz_config(protocol, seed)
            verdicts = set()
            for d in (1, 2, 5):
                o = evaluate(run(replace(cfg, params=replace(cfg.params, fallback_duration=d)), seed))
                r = o.report
                verdicts.add((r.agreement.passed, r.validity.passed, r.termination.passed,
                              o.latency if o.good_case else None, tuple(r.fallback_problems)))
            if len(verdicts) != 1 or not all(next(iter(verdicts))[:3]):
                swaps.append((protocol, seed))
    ok = not broken and not swaps
    record(8, ok, f"contract held in {len(campaign.outcomes) - len(broken)}/{len(campaign.outcomes)} runs "
                  f"({campaign.fallback_used} with fallback submissions); durations 1, 2, 5 agree on "
                  f"{6 * 40 - len(swaps)}/{6 * 40} seeds")
    assert ok

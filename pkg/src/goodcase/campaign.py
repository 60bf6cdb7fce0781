"""Fuzz and exhaustive scenario campaigns over the six protocols.

The exhaustive space for small n is every rho-respecting awake schedule over
the rounds up to each protocol's early-decide round (everyone awake
afterwards), every input assignment, corrupt parties that are silent or
equivocate, and for broadcast both a correct and a corrupt leader.  Two
reductions keep it small without losing cases:

* correct parties that share an input, and under the equivocating strategy
  the same half of the id range, are interchangeable, so schedules are
  enumerated as multisets of per-party wake patterns;
* in the leader-based protocols a non-leader sends nothing in round 0, so its
  round-0 wake bit is fixed to awake.

Corrupt parties take the highest ids (plus the leader when it is corrupt).
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement, product
from typing import Iterable, Iterator, Optional

from goodcase.config import AdversarySpec, ScenarioConfig, ScheduleSpec
from goodcase.core import CLAIMED_LATENCY, EARLY_ROUND, PROTOCOLS, Params, largest_below, rho_bounded
from goodcase.properties import PropertyReport, check_run
from goodcase.simulator import Transcript, run

#: the resilience each protocol is exercised at
CAMPAIGN_RHO = {
    "BBfp": Fraction(19, 50),
    "BAfp": Fraction(29, 100),
    "BBup": Fraction(1, 2),
    "BBsp": Fraction(1, 2),
    "BAsp": Fraction(1, 2),
    "SyncBA1": Fraction(1, 3),
}

PARTICIPATION = {"BBup": "unknown", "SyncBA1": "static"}


def participation(protocol: str) -> str:
    return PARTICIPATION.get(protocol, "dynamic")


@dataclass
class RunOutcome:
    protocol: str
    n: int
    rho: Fraction
    seed: int
    label: str
    good_case: bool
    latency: Optional[int]
    report: PropertyReport
    invariant_problems: list = field(default_factory=list)
    transcript_hash: Optional[str] = None
    claim_applies: bool = True

    @property
    def violation(self) -> bool:
        return self.report.violation or bool(self.invariant_problems)

    def row(self) -> dict:
        return {
            "protocol": self.protocol,
            "n": self.n,
            "rho": str(self.rho),
            "seed": self.seed,
            "good_case": int(self.good_case),
            "latency": "" if self.latency is None else self.latency,
            "violation": int(self.violation),
            "claim_applies": int(self.claim_applies),
        }


def within_resilience(params: Params) -> bool:
    """Whether the latency claim applies: rho at most the protocol's threshold, unmodified quorum.

    The two irrational thresholds are tested exactly through their defining
    polynomials, which are increasing in rho on [0, 1/2].
    """
    rho = params.rho
    if params.sync_f is not None:
        return False
    if params.protocol == "BBfp":
        return rho <= (1 - rho) ** 2
    if params.protocol == "BAfp":
        return rho <= (1 - rho) * (1 - 2 * rho)
    if params.protocol == "SyncBA1":
        return rho <= Fraction(1, 3)
    return rho <= Fraction(1, 2)


def fallback_input_convergence(tr: Transcript) -> list[str]:
    """If a correct party early-decides u by the early round, every correct submitter submits u."""
    early_round = EARLY_ROUND[tr.params.protocol]
    early = {v for v, r, e in tr.decisions.values() if e and r <= early_round}
    if len(early) != 1:
        return []
    (u,) = early
    subs = {p: x for rec in tr.rounds for p, x in rec.submissions.items()}
    return [f"p{p} submitted {x} to the fallback after an early decision for {u}" for p, x in sorted(subs.items()) if x != u]


def evaluate(tr: Transcript, label: str = "") -> RunOutcome:
    rep = check_run(tr)
    problems = []
    if len(rep.early_values) > 1:
        problems.append(f"several early-decided values {rep.early_values}")
    problems += fallback_input_convergence(tr)
    problems += rep.fallback_problems
    applies = within_resilience(tr.params)
    if rep.good_case and applies and rep.decision_latency != CLAIMED_LATENCY[tr.params.protocol]:
        problems.append(f"good-case latency {rep.decision_latency}")
    if not rep.termination.passed:
        problems.append(rep.termination.detail)
    return RunOutcome(
        protocol=tr.params.protocol,
        n=tr.params.n_total,
        rho=tr.params.rho,
        seed=tr.seed,
        label=label,
        good_case=rep.good_case,
        latency=rep.decision_latency,
        report=rep,
        invariant_problems=problems,
        claim_applies=applies,
    )


# -- fuzzing ----------------------------------------------------------------

def fuzz_config(protocol: str, seed: int, n_range: tuple = (3, 9), rho: Optional[Fraction] = None) -> ScenarioConfig:
    """A random scenario for one fuzz seed; the adversary draws from the same seed."""
    rng = random.Random(f"{protocol}:{seed}")
    rho = CAMPAIGN_RHO[protocol] if rho is None else Fraction(rho)
    n = rng.randint(*n_range)
    k = rng.randint(0, largest_below(rho, n))
    corrupt = frozenset(rng.sample(range(n), k))
    universe = (0, 1)
    leader = rng.randrange(n) if protocol in ("BBfp", "BBup", "BBsp") else None
    if rng.random() < 0.6:
        u = rng.choice(universe)
        inputs = {q: u for q in range(n)}
    else:
        inputs = {q: rng.choice(universe) for q in range(n)}
    params = Params(n_total=n, rho=rho, protocol=protocol, leader=leader, value_universe=universe)
    return ScenarioConfig(
        params=params,
        inputs=inputs,
        schedule=ScheduleSpec(corrupt=corrupt, mode=participation(protocol), generator="random"),
        adversary=AdversarySpec("fuzz"),
        seeds=(seed,),
        name=f"fuzz-{protocol}-{seed}",
    )


def fuzz_campaign(protocol: str, runs: int, start: int = 0, n_range: tuple = (3, 9)) -> Iterator[RunOutcome]:
    for seed in range(start, start + runs):
        cfg = fuzz_config(protocol, seed, n_range)
        yield evaluate(run(cfg, seed), f"fuzz:{seed}")


# -- exhaustive enumeration ---------------------------------------------------

def _patterns(length: int, prefix: tuple = ()) -> list:
    return [prefix + p for p in product((0, 1), repeat=length)]


def _classes(protocol: str, n: int, corrupt: frozenset, inputs: dict, split: bool) -> list:
    """Groups of interchangeable correct parties with their allowed wake patterns."""
    window = EARLY_ROUND[protocol] + 1
    half = (n + 1) // 2
    correct = [q for q in range(n) if q not in corrupt]
    leader_based = protocol in ("BBfp", "BBsp")
    groups: dict = {}
    for q in correct:
        if leader_based and q == 0:
            key = ("leader",)
        else:
            key = (inputs.get(q), q < half if split else None)
        groups.setdefault(key, []).append(q)
    out = []
    for key, members in sorted(groups.items(), key=lambda kv: kv[1][0]):
        if leader_based and key != ("leader",):
            pats = _patterns(window - 1, (1,))
        else:
            pats = _patterns(window)
        out.append((members, pats))
    return out


def _schedules(protocol: str, n: int, corrupt: frozenset, inputs: dict, split: bool, rho: Fraction) -> Iterator[tuple]:
    correct = [q for q in range(n) if q not in corrupt]
    k = len(corrupt)
    mode = participation(protocol)
    if mode == "static":
        yield tuple([frozenset(correct)])
        return
    if mode == "unknown":
        # one awake set for the whole run; parties are interchangeable by class
        classes = _classes(protocol, n, corrupt, inputs, split)
        for combo in product(*[range(len(m) + 1) for m, _ in classes]):
            awake = frozenset(q for (m, _), j in zip(classes, combo) for q in m[:j])
            if rho_bounded(k, len(awake) + k, rho):
                yield tuple([awake])
        return
    classes = _classes(protocol, n, corrupt, inputs, split)
    window = EARLY_ROUND[protocol] + 1
    for combo in product(*[combinations_with_replacement(pats, len(m)) for m, pats in classes]):
        rounds = [set() for _ in range(window)]
        for (members, _), pats in zip(classes, combo):
            for q, pat in zip(members, pats):
                for t, bit in enumerate(pat):
                    if bit:
                        rounds[t].add(q)
        if all(rho_bounded(k, len(s) + k, rho) for s in rounds):
            yield tuple(frozenset(s) for s in rounds)


def _ba_inputs(correct: list, n: int, split: bool) -> Iterator[dict]:
    """Input assignments up to swapping parties inside a class."""
    half = (n + 1) // 2
    parts = [[q for q in correct if q < half], [q for q in correct if q >= half]] if split else [correct]
    for counts in product(*[range(len(p) + 1) for p in parts]):
        inputs = {}
        for part, j in zip(parts, counts):
            for i, q in enumerate(part):
                inputs[q] = 1 if i < j else 0
        yield inputs


def exhaustive_configs(protocol: str, n: int, rho: Optional[Fraction] = None) -> Iterator[ScenarioConfig]:
    rho = CAMPAIGN_RHO[protocol] if rho is None else Fraction(rho)
    broadcast = protocol in ("BBfp", "BBup", "BBsp")
    for k in range(largest_below(rho, n) + 1):
        leader_choices = (False, True) if broadcast and k > 0 else (False,)
        for leader_corrupt in leader_choices:
            if leader_corrupt:
                corrupt = frozenset({0} | set(range(n - k + 1, n)))
            else:
                corrupt = frozenset(range(n - k, n))
            correct = [q for q in range(n) if q not in corrupt]
            for behaviour in (("silent", "split") if k else ("silent",)):
                split = behaviour == "split"
                if broadcast:
                    input_sets = [{0: v} for v in (0, 1)] if not leader_corrupt else [{}]
                else:
                    input_sets = list(_ba_inputs(correct, n, split))
                for inputs in input_sets:
                    params = Params(n_total=n, rho=rho, protocol=protocol, leader=0 if broadcast else None)
                    shadow = {"inputs": {c: 1 for c in corrupt}} if split else {}
                    for awake in _schedules(protocol, n, corrupt, inputs, split, rho):
                        yield ScenarioConfig(
                            params=params,
                            inputs=dict(inputs),
                            schedule=ScheduleSpec(corrupt=corrupt, mode=participation(protocol),
                                                  awake=awake, generator="explicit"),
                            adversary=AdversarySpec(behaviour, shadow),
                            name=f"exhaustive-{protocol}-n{n}",
                        )


def exhaustive_campaign(protocol: str, ns: Iterable[int] = (3, 4, 5)) -> Iterator[RunOutcome]:
    for n in ns:
        for i, cfg in enumerate(exhaustive_configs(protocol, n)):
            yield evaluate(run(cfg, 0), f"exhaustive:n{n}:{i}")


# -- summaries -----------------------------------------------------------------

@dataclass
class CampaignSummary:
    protocol: str
    runs: int = 0
    good_case_runs: int = 0
    latencies: Counter = field(default_factory=Counter)
    violations: list = field(default_factory=list)

    @property
    def claimed(self) -> int:
        return CLAIMED_LATENCY[self.protocol]

    @property
    def max_good_case_latency(self) -> Optional[int]:
        return max(self.latencies) if self.latencies else None

    @property
    def latency_ok(self) -> bool:
        return self.good_case_runs > 0 and set(self.latencies) == {self.claimed}

    def add(self, o: RunOutcome) -> None:
        self.runs += 1
        if o.good_case:
            self.good_case_runs += 1
            self.latencies[o.latency] += 1
        if o.violation:
            self.violations.append(o)


def summarize(outcomes: Iterable[RunOutcome]) -> dict:
    out: dict = {p: CampaignSummary(p) for p in PROTOCOLS}
    for o in outcomes:
        out[o.protocol].add(o)
    return {p: s for p, s in out.items() if s.runs}

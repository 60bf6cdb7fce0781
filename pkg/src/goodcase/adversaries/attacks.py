"""Scripted indistinguishability executions.

``run_appendix_g_suite`` realizes the three-execution argument against any
one-round static agreement protocol tolerating a third of corruptions, using
SyncBA1 with its quorum weakened to n - f for f = n/3.

``run_bb_execution12`` builds the two executions behind the two-round
broadcast bound: a target party p sees the same round-2 view whether the
silent voters are corrupt (execution 1) or the leader is corrupt and the
silent voters are correct (execution 2).  A bounded search over the corrupt
parties' choices in execution 2 looks for a run where correct parties end up
disagreeing with p.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from goodcase.adversaries.base import AdversaryStrategy, ShadowAdversary
from goodcase.config import AdversarySpec, ScenarioConfig, ScheduleSpec
from goodcase.core import BOT, Kind, MessagePayload, Params, largest_below, rho_bounded

# the simulator and the property checkers import this package, so the
# functions below import them on use


def run(config, seed):
    from goodcase.simulator import run as _run

    return _run(config, seed)


def check_agreement(tr):
    from goodcase.properties import check_agreement as _check

    return _check(tr)


class NoViolation(Exception):
    """The script ran to completion without producing an agreement violation."""

    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report or {}


@dataclass
class ViolationReport:
    execution: str
    round: Optional[int]
    parties: tuple
    property: str
    transcript_hash: str
    detail: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "execution": self.execution,
            "round": self.round,
            "parties": list(self.parties),
            "property": self.property,
            "transcript_hash": self.transcript_hash,
            "detail": self.detail,
        }


class ScriptedAdversary(AdversaryStrategy):
    """Base for the scripted executions: optional honest shadows plus a per-round script."""

    name = "scripted"

    def shadow_inputs(self) -> Optional[dict]:
        return None

    def setup(self, ctx):
        super().setup(ctx)
        self.shadow = None
        inputs = self.shadow_inputs()
        if inputs is not None:
            self.shadow = ShadowAdversary(inputs=inputs)
            self.shadow.setup(ctx)

    def act(self, t, outboxes, corrupt_inbox):
        out = []
        if self.shadow is not None:
            out.extend(self.shadow.act(t, outboxes, corrupt_inbox))
        out.extend(self.script(t))
        return out

    def script(self, t: int) -> list:
        return []


@dataclass(frozen=True)
class ScriptedExecution:
    name: str
    roster: dict
    config: ScenarioConfig

    def run(self):
        return run(self.config, 0)


# -- the three executions G1, G2, G3 ------------------------------------------

def _thirds(n: int) -> tuple:
    if n % 3:
        raise ValueError("the three-execution suite needs n divisible by 3")
    k = n // 3
    return tuple(range(0, k)), tuple(range(k, 2 * k)), tuple(range(2 * k, n))


class AppendixGAdversary(ScriptedAdversary):
    """Corrupt third of G1 (C), G2 (B) or G3 (A); option ``execution`` picks which."""

    name = "appendix-g"

    def shadow_inputs(self):
        A, B, C = _thirds(self.ctx.params.n_total)
        ex = self.options["execution"]
        if ex == "G1":
            return {c: 0 for c in C}
        if ex == "G3":
            return {a: 1 for a in A}
        return None

    def script(self, t):
        if self.options["execution"] != "G2" or t != 0:
            return []
        # B tells A and B it has input 1 and tells C it has input 0, then stops
        A, B, C = _thirds(self.ctx.params.n_total)
        out = []
        for b in B:
            one = self.ctx.sign(b, MessagePayload(Kind.ECHO, 1))
            zero = self.ctx.sign(b, MessagePayload(Kind.ECHO, 0))
            out += [(q, one) for q in A + B] + [(q, zero) for q in C]
        return out


def appendix_g_executions(n: int = 6, f: Optional[int] = None, rho: Fraction = Fraction(2, 5)) -> list:
    """The three scripted executions; f is SyncBA1's quorum parameter (None = unmodified)."""
    A, B, C = _thirds(n)
    params = Params(n_total=n, rho=Fraction(rho), protocol="SyncBA1", sync_f=f)
    everyone = frozenset(range(n))
    setups = {
        "G1": (C, {q: 1 for q in A + B}),
        "G2": (B, {**{q: 1 for q in A}, **{q: 0 for q in C}}),
        "G3": (A, {q: 0 for q in B + C}),
    }
    out = []
    for name, (corrupt, inputs) in setups.items():
        correct = everyone - set(corrupt)
        cfg = ScenarioConfig(
            params=params,
            inputs={q: v for q, v in inputs.items() if q in correct},
            schedule=ScheduleSpec(corrupt=frozenset(corrupt), mode="static"),
            adversary=AdversarySpec("appendix-g", {"execution": name}),
            name=name,
            expect_violation=True,
        )
        out.append(ScriptedExecution(name, {"A": A, "B": B, "C": C}, cfg))
    return out


def run_appendix_g_suite(n: int = 6, f: Optional[int] = None, rho: Fraction = Fraction(2, 5)):
    """Run G1, G2, G3 and return (t1, t2, t3, report).

    Raises NoViolation (carrying the report) when G2 ends without a
    disagreement between A and C.
    """
    g1, g2, g3 = appendix_g_executions(n, f, rho)
    t1, t2, t3 = g1.run(), g2.run(), g3.run()
    A, B, C = _thirds(n)
    a_equal = all(t1.view_bytes(a, 1) == t2.view_bytes(a, 1) for a in A)
    c_equal = all(t2.view_bytes(c, 1) == t3.view_bytes(c, 1) for c in C)
    dec = t2.decisions
    report = {
        "n": n,
        "f": t2.params.sync_threshold_f,
        "a_views_equal_g1_g2": a_equal,
        "c_views_equal_g2_g3": c_equal,
        "g2_decisions": {q: dec[q][0] for q in sorted(dec)},
        "g2_decision_rounds": {q: dec[q][1] for q in sorted(dec)},
        "hashes": [t1.hash(), t2.hash(), t3.hash()],
    }
    agreement = check_agreement(t2)
    if agreement.passed:
        raise NoViolation(f"G2 ends in agreement at n={n}, f={report['f']}", report)
    a_vals = {dec[a][0] for a in A if a in dec}
    c_vals = {dec[c][0] for c in C if c in dec}
    report["violation"] = ViolationReport(
        "G2", agreement.round, tuple(sorted(A + C)), "agreement", t2.hash(),
        {"A": sorted(a_vals), "C": sorted(c_vals)},
    ).to_record()
    return t1, t2, t3, report


# -- executions 1 and 2 against two-round broadcast ---------------------------

@dataclass(frozen=True)
class Exec12Layout:
    rho: Fraction
    n_p: int
    leader: int
    target: int
    u_voters: tuple      # voters for the leader's value, leader included
    silent_voters: tuple  # voters with no leader evidence (vote bottom)
    extras: tuple        # parties outside p's view
    n_total: int

    @property
    def corrupt2(self) -> tuple:
        return (self.leader,) + self.extras


def exec12_layout(n_p: int, rho: Fraction) -> Exec12Layout:
    rho = Fraction(rho)
    k1 = largest_below(rho, n_p)
    correct2 = n_p - 1
    f2 = 0
    while rho_bounded(f2 + 1, correct2 + f2 + 1, rho):
        f2 += 1
    n_total = correct2 + f2
    n_u = n_p - k1
    return Exec12Layout(
        rho=rho,
        n_p=n_p,
        leader=0,
        target=1,
        u_voters=tuple(range(n_u)),
        silent_voters=tuple(range(n_u, n_p)),
        extras=tuple(range(n_p, n_total)),
        n_total=n_total,
    )


class Exec1Adversary(ScriptedAdversary):
    """Execution 1: the corrupt voters vote bottom in round 1 and do nothing else."""

    name = "exec1"

    def script(self, t):
        if t != 1:
            return []
        return [
            (q, self.ctx.sign(s, MessagePayload(Kind.VOTE, BOT)))
            for s in sorted(self.ctx.corrupt)
            for q in self.ctx.parties
        ]


class Exec2Adversary(ScriptedAdversary):
    """Execution 2: a corrupt leader plus extra corrupt parties hidden from the target.

    Options: ``n_p``, ``value``, ``direct_votes``, ``leader_vote_all``, ``forward_to``
    (see Exec2Choice).
    """

    name = "exec2"

    def setup(self, ctx):
        super().setup(ctx)
        self.lay = exec12_layout(self.options["n_p"], ctx.params.rho)
        self.value = self.options.get("value", 1)
        self.other = 0 if self.value != 0 else 1
        self.state = {}

    def script(self, t):
        lay, o, state = self.lay, self.options, self.state
        sign = self.ctx.sign
        lead = lay.leader
        others = [q for q in self.ctx.correct if q != lay.target]
        out = []
        if t == 0:
            state["echo_u"] = sign(lead, MessagePayload(Kind.ECHO, self.value))
            state["echo_o"] = sign(lead, MessagePayload(Kind.ECHO, self.other))
            out += [(q, state["echo_u"]) for q in lay.u_voters]
        elif t == 1:
            vote_u = sign(lead, MessagePayload(Kind.VOTE, self.value, carried=[state["echo_u"]]))
            targets = [lay.target] + (others if o.get("leader_vote_all") else [])
            out += [(q, vote_u) for q in targets]
            state["votes_o"] = [
                sign(x, MessagePayload(Kind.VOTE, self.other, carried=[state["echo_o"]])) for x in lay.corrupt2
            ]
            if o.get("direct_votes"):
                out += [(q, v) for v in state["votes_o"] for q in self.ctx.parties if q != lay.target]
        elif t == 2 and o.get("forward_to"):
            votes = state["votes_o"]
            sender = lay.extras[0] if lay.extras else lead
            fwd = sign(sender, MessagePayload(Kind.FORWARD, self.other, [{v.signer for v in votes}], votes))
            out += [(q, fwd) for q in others[: o["forward_to"]]]
        return out


def exec1_config(lay: Exec12Layout, value: int = 1) -> ScenarioConfig:
    params = Params(n_total=lay.n_total, rho=lay.rho, protocol="BBfp", leader=lay.leader)
    # the extra parties are correct here but asleep while the target decides
    awake_early = frozenset(lay.u_voters)
    everyone = frozenset(lay.u_voters + lay.extras)
    fb = params.fallback_start_round
    return ScenarioConfig(
        params=params,
        inputs={lay.leader: value},
        schedule=ScheduleSpec(
            corrupt=frozenset(lay.silent_voters),
            awake=tuple([awake_early] * fb + [everyone]),
            generator="explicit",
        ),
        adversary=AdversarySpec("exec1"),
        name="execution-1",
    )


@dataclass(frozen=True)
class Exec2Choice:
    """One point of the search space for execution 2."""

    direct_votes: bool      # extras multicast their conflicting votes to everyone but p
    leader_vote_all: bool   # the leader's vote for p's value also reaches the others
    forward_to: int         # how many correct parties (besides p) get a corrupt forward for the other value


def exec2_config(lay: Exec12Layout, choice: Exec2Choice, value: int = 1) -> ScenarioConfig:
    params = Params(n_total=lay.n_total, rho=lay.rho, protocol="BBfp", leader=lay.leader)
    options = {"n_p": lay.n_p, "value": value, **choice.__dict__}
    return ScenarioConfig(
        params=params,
        inputs={},
        schedule=ScheduleSpec(corrupt=frozenset(lay.corrupt2), generator="all"),
        adversary=AdversarySpec("exec2", options),
        name="execution-2",
    )


def exec2_search_space(lay: Exec12Layout) -> list:
    n_others = lay.n_total - len(lay.corrupt2) - 1
    return [
        Exec2Choice(d, a, k)
        for d, a, k in itertools.product((False, True), (False, True), range(n_others + 1))
    ]


def run_bb_execution12(n_p: int = 20, rho: Fraction = Fraction(9, 20), value: int = 1):
    """Execution 1 and a bounded search over execution 2.

    Returns (t1, t2, report) where t2 is the first violating execution-2
    transcript found (or the last one searched).  Raises NoViolation with
    the report when the search finds no agreement violation.
    """
    lay = exec12_layout(n_p, Fraction(rho))
    t1 = run(exec1_config(lay, value), 0)
    p = lay.target
    view_round = 2
    report: dict = {
        "rho": str(lay.rho),
        "n_p": n_p,
        "n_total": lay.n_total,
        "corrupt_exec1": len(lay.silent_voters),
        "corrupt_exec2": len(lay.corrupt2),
        "target": p,
        "target_decision_exec1": t1.decisions.get(p),
        "searched": 0,
        "views_equal": True,
        "divergent_fallback_inputs": False,
        "violations": [],
    }
    first_violation = None
    last = None
    for choice in exec2_search_space(lay):
        t2 = run(exec2_config(lay, choice, value), 0)
        last = t2
        report["searched"] += 1
        same_view = t1.view_bytes(p, view_round) == t2.view_bytes(p, view_round)
        report["views_equal"] = report["views_equal"] and same_view
        p_dec = t2.decisions.get(p)
        inputs = {q: u for r in t2.rounds for q, u in r.submissions.items()}
        if p_dec is not None and p_dec[2] and any(u != p_dec[0] for u in inputs.values()):
            report["divergent_fallback_inputs"] = True
            report.setdefault("divergence_example", {
                "choice": choice.__dict__,
                "target_early_decision": p_dec[0],
                "fallback_inputs": dict(sorted(inputs.items())),
            })
        agreement = check_agreement(t2)
        if not agreement.passed:
            rec = ViolationReport("execution-2", agreement.round, tuple(x[0] for x in agreement.witness),
                                  "agreement", t2.hash(), {"choice": choice.__dict__})
            report["violations"].append(rec.to_record())
            if first_violation is None:
                first_violation = t2
    t2 = first_violation if first_violation is not None else last
    if first_violation is None:
        raise NoViolation(f"no agreement violation at rho={lay.rho}, n_p={n_p}", report | {"t1": t1, "t2": t2})
    return t1, t2, report

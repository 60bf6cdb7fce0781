"""Deterministic lockstep engine for the sleepy synchronous model.

Each round t runs in four phases:

1. the adversary fixes the round-t sleep set from the transcript prefix
   (rounds < t only);
2. pending messages are delivered to awake parties, and the awake correct
   machines step;
3. the adversary sees the correct outboxes and the corrupt parties' inboxes
   and returns its injections;
4. everything sent in round t is queued for round t + 1.

Δ is a pure time unit: protocol round r ends at time r * Δ, which is what
latency in time units reports.  The round loop itself always advances one
protocol round per iteration.

Fresh deliveries are ordered by canonical message bytes, so a party's inbox
depends only on what was sent to it and never on who sent it through which
code path.  When a party wakes with a backlog, the backlog (FIFO by send
round, then canonical order) passes through the adversary's ``wake_order``
hook before the fresh messages.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from goodcase.adversaries.base import AdversaryContext, AdversaryStrategy
from goodcase.config import ScenarioConfig
from goodcase.core import (
    Params,
    PartyId,
    SignatureLedger,
    SignedMessage,
    describe,
    flatten,
    format_value,
    rho_bounded,
)
from goodcase.fallback import IdealFallback
from goodcase.protocols.machines import ProtocolMachine, make_machine


class RhoBoundViolated(Exception):
    """A schedule has |F| >= rho * n_t in some round."""


class InvalidPermutation(Exception):
    """A wake-order hook returned something other than a permutation of the backlog."""


class ScheduleError(Exception):
    """The adversary chose a sleep set that breaks the participation mode."""


class NonTermination(Exception):
    """Correct parties remained undecided at the horizon (raised only on request)."""


@dataclass
class RoundRecord:
    round: int
    awake: tuple
    inbox: dict = field(default_factory=dict)       # party -> tuple of messages
    outbox: dict = field(default_factory=dict)      # party -> tuple of messages
    injections: tuple = ()                          # (recipient, message)
    dropped: tuple = ()                             # (recipient, message)
    decisions: dict = field(default_factory=dict)   # party -> (value, early)
    halted: tuple = ()
    submissions: dict = field(default_factory=dict)  # party -> fallback input


@dataclass
class Transcript:
    config: ScenarioConfig
    seed: int
    adversary: str
    rounds: list = field(default_factory=list)
    decisions: dict = field(default_factory=dict)   # party -> (value, round, early)
    halts: dict = field(default_factory=dict)        # party -> round
    fallback: Optional[IdealFallback] = None
    _hash: Optional[str] = None

    @property
    def params(self) -> Params:
        return self.config.params

    @property
    def correct(self) -> tuple:
        return self.config.correct

    @property
    def corrupt(self) -> frozenset:
        return self.config.schedule.corrupt

    @property
    def inputs(self) -> dict:
        return self.config.inputs

    @property
    def t_max(self) -> int:
        return len(self.rounds) - 1

    def awake_at(self, t: int) -> frozenset:
        return frozenset(self.rounds[t].awake)

    def awake_sets(self) -> list:
        return [frozenset(r.awake) for r in self.rounds]

    @property
    def undecided(self) -> list:
        return [p for p in self.correct if p not in self.decisions]

    def view_bytes(self, p: PartyId, upto: int) -> bytes:
        """Party p's view through round ``upto``: its input plus its inbox sequence."""
        chunks = [b"I" + format_value(self.inputs.get(p)).encode()]
        for r in self.rounds[: upto + 1]:
            msgs = r.inbox.get(p, ())
            chunks.append(b"R%d:%d:" % (r.round, len(msgs)))
            chunks.extend(len(m.key).to_bytes(4, "big") + m.key for m in msgs)
        return b"".join(chunks)

    # -- export -----------------------------------------------------------

    def records(self) -> list[dict]:
        """Line records (round, party, event, data) in a stable order.

        Order: one header, then per round: awake, deliver, send, inject,
        drop, submit, decide, halt (parties ascending inside each event), and
        finally the table of every message that appeared, sorted by digest.
        """
        out = [{
            "round": None, "party": None, "event": "header",
            "data": {"config": self.config.to_dict(), "config_hash": self.config.config_hash(),
                     "seed": self.seed, "adversary": self.adversary},
        }]
        table: dict[bytes, SignedMessage] = {}

        def dig(msgs):
            for m in msgs:
                table.setdefault(m.key, m)
            return [m.digest for m in msgs]

        for r in self.rounds:
            t = r.round
            out.append({"round": t, "party": None, "event": "awake", "data": sorted(r.awake)})
            for p in sorted(r.inbox):
                out.append({"round": t, "party": p, "event": "deliver", "data": dig(r.inbox[p])})
            for p in sorted(r.outbox):
                out.append({"round": t, "party": p, "event": "send", "data": dig(r.outbox[p])})
            for q, m in r.injections:
                out.append({"round": t, "party": q, "event": "inject", "data": dig([m])[0]})
            for q, m in r.dropped:
                out.append({"round": t, "party": q, "event": "drop", "data": m.digest})
            for p in sorted(r.submissions):
                out.append({"round": t, "party": p, "event": "submit", "data": r.submissions[p]})
            for p in sorted(r.decisions):
                v, early = r.decisions[p]
                out.append({"round": t, "party": p, "event": "decide",
                            "data": {"value": v, "early": early}})
            for p in r.halted:
                out.append({"round": t, "party": p, "event": "halt", "data": None})
        for m in sorted(flatten(table.values()), key=lambda m: (m.digest, m.key)):
            out.append({"round": None, "party": m.signer, "event": "message", "data": describe(m)})
        return out

    def export_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.records())

    def hash(self) -> str:
        if self._hash is None:
            self._hash = hashlib.sha256(self.export_jsonl().encode()).hexdigest()
        return self._hash


def build_adversary(config: ScenarioConfig, seed: int) -> AdversaryStrategy:
    from goodcase.adversaries import STRATEGIES

    spec = config.adversary
    cls = STRATEGIES[spec.name]
    options = dict(spec.options)
    sched = config.schedule
    if sched.generator == "random":
        options.setdefault("sleep", "random")
    if sched.wake_all_from is not None:
        options.setdefault("wake_all_from", sched.wake_all_from)
    return cls(seed=seed, **options)


def audit_schedule(config: ScenarioConfig) -> None:
    """Reject an explicit schedule that breaks |F| < rho * n_t in any round."""
    sched = config.schedule
    nf = len(sched.corrupt)
    rho = config.params.rho
    rounds = sched.awake if sched.awake is not None else [config.correct]
    for t, s in enumerate(rounds):
        if not rho_bounded(nf, len(s) + nf, rho):
            raise RhoBoundViolated(f"round {t}: |F|={nf}, n_t={len(s) + nf}, rho={rho}")


def run(
    config: ScenarioConfig,
    seed: int = 0,
    adversary: Optional[AdversaryStrategy] = None,
    t_max: Optional[int] = None,
    require_termination: bool = False,
) -> Transcript:
    """Execute rounds 0..t_max of one scenario and return the transcript."""
    params = config.params
    audit_schedule(config)
    sched = config.schedule
    corrupt = sched.corrupt
    correct = config.correct
    n = params.n_total
    horizon = config.horizon if t_max is None else t_max

    ledger = SignatureLedger(corrupt)
    fb = IdealFallback(params.fallback_start_round, params.fallback_duration, params.value_universe)
    machines: dict[PartyId, ProtocolMachine] = {
        p: make_machine(params, p, config.inputs.get(p), ledger, fb) for p in correct
    }
    adv = adversary if adversary is not None else build_adversary(config, seed)
    adv.setup(AdversaryContext(
        params=params, corrupt=corrupt, correct=correct, inputs=dict(config.inputs),
        ledger=ledger, mode=sched.mode,
        explicit_awake=None if sched.awake is None else [set(s) for s in sched.awake],
        t_max=horizon,
    ))

    tr = Transcript(config=config, seed=seed, adversary=getattr(adv, "name", type(adv).__name__), fallback=fb)
    pending: dict[PartyId, list] = {q: [] for q in range(n)}
    correct_set = set(correct)
    first_awake_set: Optional[frozenset] = None

    for t in range(horizon + 1):
        asleep = set(adv.choose_sleep_set(t, tr))
        if not asleep <= correct_set:
            raise ScheduleError(f"round {t}: sleep set names non-correct parties {sorted(asleep - correct_set)}")
        awake = correct_set - asleep
        if sched.mode == "static" and asleep:
            raise ScheduleError(f"round {t}: static participation but {sorted(asleep)} asleep")
        if sched.mode == "unknown":
            if first_awake_set is None:
                first_awake_set = frozenset(awake)
            elif awake != first_awake_set:
                raise ScheduleError(f"round {t}: unknown participation but the awake set changed")
        if not rho_bounded(len(corrupt), len(awake) + len(corrupt), params.rho):
            raise RhoBoundViolated(f"round {t}: |F|={len(corrupt)}, n_t={len(awake) + len(corrupt)}, rho={params.rho}")

        rec = RoundRecord(round=t, awake=tuple(sorted(awake)))
        dropped = []
        corrupt_inbox: dict[PartyId, list] = {}
        for q in range(n):
            queue = pending[q]
            if q in asleep or not queue:
                continue
            backlog = [(d, m) for d, m in queue if d < t]
            fresh = [m for d, m in queue if d == t]
            later = [(d, m) for d, m in queue if d > t]
            pending[q] = later
            ordered = []
            if backlog:
                backlog.sort(key=lambda dm: (dm[0], dm[1].key))
                ordered = _dedupe([m for _, m in backlog])
                if q in correct_set:
                    ordered = wake_delivery_order(adv, q, ordered)
            fresh_sorted = sorted(_dedupe(fresh), key=lambda m: m.key)
            seen = {m.key for m in ordered}
            inbox = ordered + [m for m in fresh_sorted if m.key not in seen]
            good = []
            for m in inbox:
                if ledger.verify(m):
                    good.append(m)
                else:
                    dropped.append((q, m))
            if q in correct_set:
                rec.inbox[q] = tuple(good)
            else:
                corrupt_inbox[q] = good

        outboxes: dict[PartyId, list] = {}
        for p in correct:
            if p not in awake:
                continue
            mach = machines[p]
            if mach.halted:
                continue
            before = mach.handle
            out, event = mach.step(t, rec.inbox.get(p, ()))
            if mach.handle is not None and before is None:
                rec.submissions[p] = mach.handle.input
            if event is not None:
                value, r = mach.decision
                rec.decisions[p] = (value, mach.decided_early)
                tr.decisions[p] = (value, r, mach.decided_early)
            if mach.halted:
                tr.halts[p] = t
                rec.halted += (p,)
            if out:
                outboxes[p] = out
                rec.outbox[p] = tuple(out)

        injections = adv.inject_messages(t, tr, outboxes, corrupt_inbox)
        rec.injections = tuple(injections)
        rec.dropped = tuple(dropped)
        for p in sorted(outboxes):
            for m in outboxes[p]:
                for q in range(n):
                    pending[q].append((t + 1, m))
        for q, m in injections:
            if not 0 <= q < n:
                raise ValueError(f"injection addressed to unknown party {q}")
            pending[q].append((t + 1, m))
        tr.rounds.append(rec)

    if require_termination and tr.undecided:
        raise NonTermination(f"undecided at round {horizon}: {tr.undecided}")
    return tr


def _dedupe(msgs: list) -> list:
    seen = set()
    out = []
    for m in msgs:
        if m.key not in seen:
            seen.add(m.key)
            out.append(m)
    return out


def wake_delivery_order(adv: AdversaryStrategy, p: PartyId, buffered: list) -> list:
    """Apply the adversary's wake-order hook and check it returned a permutation."""
    perm = list(adv.wake_order(p, list(buffered)))
    if sorted(m.key for m in perm) != sorted(m.key for m in buffered) or len(perm) != len(buffered):
        raise InvalidPermutation(f"p{p}: hook returned {len(perm)} messages for a backlog of {len(buffered)}")
    return perm


def check_synchrony(tr: Transcript) -> list[str]:
    """Every correct multicast of round t reaches every correct party awake at t + 1.

    A party asleep at t + 1 must receive it in its first later awake round.
    """
    problems = []
    n_rounds = len(tr.rounds)
    for r in tr.rounds:
        for p, msgs in r.outbox.items():
            for q in tr.correct:
                first = next((s for s in range(r.round + 1, n_rounds) if q in tr.rounds[s].awake), None)
                if first is None:
                    continue
                got = {m.key for s in range(r.round + 1, first + 1) for m in tr.rounds[s].inbox.get(q, ())}
                for m in msgs:
                    if m.key not in got:
                        problems.append(f"round {r.round}: p{p}'s {m!r} missing from p{q} by round {first}")
    return problems


def check_unforgeability(tr: Transcript) -> list[str]:
    """Every accepted message attributed to a correct party was sent by that party's machine."""
    sent = {m.key for r in tr.rounds for msgs in r.outbox.values() for m in msgs}
    correct = set(tr.correct)
    problems = []
    for r in tr.rounds:
        for q, msgs in r.inbox.items():
            for m in flatten(msgs):
                if m.signer in correct and m.key not in sent:
                    problems.append(f"round {r.round}: p{q} accepted {m!r} never sent by p{m.signer}")
    return problems


def load_transcript(text: str) -> Transcript:
    """Rebuild a Transcript from its JSONL export.

    The result carries everything the property checkers read (config,
    awake sets, decisions, halts, fallback submissions).  Inbox and outbox
    entries hold message digests rather than message objects, so
    ``view_bytes`` is not meaningful on a loaded transcript.
    """
    from goodcase.config import config_from_tree

    lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not lines or lines[0]["event"] != "header":
        raise ValueError("transcript export must start with a header record")
    head = lines[0]["data"]
    config = config_from_tree(head["config"], check_adversary=False)
    tr = Transcript(config=config, seed=head["seed"], adversary=head["adversary"])
    by_round: dict[int, RoundRecord] = {}
    for rec in lines[1:]:
        t, p, ev, data = rec["round"], rec["party"], rec["event"], rec["data"]
        if ev == "message":
            continue
        if ev == "awake":
            by_round[t] = RoundRecord(round=t, awake=tuple(data))
            continue
        r = by_round[t]
        if ev == "deliver":
            r.inbox[p] = tuple(data)
        elif ev == "send":
            r.outbox[p] = tuple(data)
        elif ev == "inject":
            r.injections += ((p, data),)
        elif ev == "drop":
            r.dropped += ((p, data),)
        elif ev == "submit":
            r.submissions[p] = data
        elif ev == "decide":
            r.decisions[p] = (data["value"], data["early"])
            tr.decisions[p] = (data["value"], t, data["early"])
        elif ev == "halt":
            r.halted += (p,)
            tr.halts[p] = t
    tr.rounds = [by_round[t] for t in sorted(by_round)]
    return tr

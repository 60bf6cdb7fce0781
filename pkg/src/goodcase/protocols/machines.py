"""Per-party round state machines for the six protocols.

A machine accumulates every verified message delivered to it and recomputes
the sets a round needs (V, E, G, E*, ...) from that store, so a party that
slept through earlier rounds acts on whatever was buffered for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Optional

from goodcase.core import (
    BOT,
    Kind,
    MessagePayload,
    Params,
    PartyId,
    SignatureLedger,
    SignedMessage,
    Value,
)
from goodcase.fallback import IdealFallback
from goodcase.protocols.predicates import (
    Tally,
    argmax_value,
    basp_validate_decided,
    bbfp_early_decide,
    bbup_early_decide,
    compute_majority_forward_set,
    equivocators,
    late_decide_by_fraction,
    majority_early_decide,
    pick_largest,
    syncba1_certificate_check,
)


class CorruptDrive(Exception):
    """step() was called on a machine owned by the adversary."""


@dataclass(frozen=True)
class FallbackHandle:
    start_round: int
    input: int
    plugged: Any


class ProtocolMachine:
    protocol_id = ""

    def __init__(
        self,
        params: Params,
        party: PartyId,
        input: Value,
        ledger: SignatureLedger,
        fallback: Optional[IdealFallback] = None,
        corrupt: bool = False,
    ) -> None:
        self.params = params
        self.party = party
        self.input = input
        self.ledger = ledger
        self.fallback = fallback
        self.corrupt = corrupt
        self.universe = params.value_universe
        self.leader = params.leader
        self.decision: Optional[tuple[int, int]] = None
        self.decided_early = False
        self.halted = False
        self.handle: Optional[FallbackHandle] = None
        self._inbox: dict[bytes, SignedMessage] = {}
        self._direct: dict[Kind, list[SignedMessage]] = {k: [] for k in Kind}
        self._seen: dict[bytes, SignedMessage] = {}
        self._leader_echo_values: set[int] = set()
        self._out: list[SignedMessage] = []

    # -- message store -----------------------------------------------------

    def absorb(self, msgs: Iterable[SignedMessage]) -> None:
        for m in msgs:
            if m.key in self._inbox:
                continue
            self._inbox[m.key] = m
            self._direct[m.kind].append(m)
            stack = [m]
            while stack:
                x = stack.pop()
                if x.key in self._seen:
                    continue
                self._seen[x.key] = x
                if x.kind == Kind.ECHO and x.signer == self.leader and x.value in self.universe:
                    self._leader_echo_values.add(x.value)
                stack.extend(x.payload.carried)

    def direct(self, kind: Kind) -> list[SignedMessage]:
        return self._direct[kind]

    def seen(self) -> Iterable[SignedMessage]:
        return self._seen.values()

    @property
    def leader_equivocated(self) -> bool:
        return len(self._leader_echo_values) > 1

    def in_universe(self, v: Value) -> bool:
        return v in self.universe

    def valid_vote(self, m: SignedMessage) -> bool:
        """Bottom votes are valid bare; a vote for u must carry the leader's echo for u."""
        if m.kind != Kind.VOTE:
            return False
        if m.value is None:
            return True
        if m.value not in self.universe:
            return False
        return any(
            c.kind == Kind.ECHO and c.signer == self.leader and c.value == m.value
            for c in m.payload.carried
        )

    def valid_echo(self, m: SignedMessage) -> bool:
        return m.kind == Kind.ECHO and m.value in self.universe

    # -- outputs -----------------------------------------------------------

    def send(self, kind: Kind, value: Value = None, parties=(), carried=()) -> None:
        self._out.append(self.ledger.sign(self.party, MessagePayload(kind, value, parties, carried)))

    def decide(self, value: int, t: int, early: bool = True) -> Optional[int]:
        if self.decision is not None:
            return None
        self.decision = (value, t)
        self.decided_early = early
        return value

    # -- driver ------------------------------------------------------------

    def step(self, t: int, inbox: Iterable[SignedMessage], awake: bool = True):
        """Run round t on the given deliveries; returns (outbox, decision_event)."""
        if self.corrupt:
            raise CorruptDrive(f"p{self.party} is corrupt and driven by the adversary")
        self.absorb(inbox)
        if not awake or self.halted:
            return [], None
        self._out = []
        event = self.on_round(t)
        start = self.params.fallback_start_round
        if self.fallback is not None:
            if t == start:
                u = self.fallback_input()
                self.handle = FallbackHandle(start, u, self.fallback)
                self.fallback.submit(self.party, u, t)
            if t >= start:
                out = self.fallback.poll(self.party, t)
                if out is not None:
                    late = self.decide(out, t, early=False)
                    event = event if event is not None else late
                    self.halted = True
        out, self._out = self._out, []
        return out, event

    def on_round(self, t: int) -> Optional[int]:
        raise NotImplementedError

    def fallback_input(self) -> int:
        raise NotImplementedError

    # shared by the protocols with a decided-count rule in late rounds
    def _late_decide(self, t: int, denominator_kinds: tuple[Kind, ...], frac: Fraction) -> Optional[int]:
        if self.decision is not None:
            return None
        d = Tally.of(m for m in self.direct(Kind.DECIDED) if self.in_universe(m.value))
        denom = {m.signer for k in denominator_kinds for m in self.direct(k)}
        u = late_decide_by_fraction(d.by_value, denom, frac)
        return None if u is None else self.decide(u, t)

    def _forward_bundles(self, kind: Kind = Kind.FORWARD) -> dict[PartyId, list[SignedMessage]]:
        bundles: dict[PartyId, list[SignedMessage]] = {}
        for f in self.direct(kind):
            bundles.setdefault(f.signer, []).extend(f.payload.carried)
        return bundles


class BBfpMachine(ProtocolMachine):
    """Two-round good-case broadcast under dynamic participation."""

    protocol_id = "BBfp"

    def votes(self) -> list[SignedMessage]:
        return [m for m in self.direct(Kind.VOTE) if self.valid_vote(m)]

    def on_round(self, t):
        if t == 0:
            if self.party == self.leader:
                self.send(Kind.ECHO, self.input)
            return None
        if t == 1:
            echoes = [m for m in self.direct(Kind.ECHO) if m.signer == self.leader and self.in_universe(m.value)]
            if echoes:
                e = min(echoes, key=lambda m: m.value)
                self.send(Kind.VOTE, e.value, carried=[e])
            else:
                self.send(Kind.VOTE, BOT)
            return None
        if t == 2:
            votes = self.votes()
            tally = Tally.of(votes)
            u = argmax_value(tally.by_value, self.universe)
            support = tally.by_value.get(u, set())
            self.send(Kind.FORWARD, u, [support], [m for m in votes if m.value == u])
            d = bbfp_early_decide(tally, self.params.rho, self.leader_equivocated, self.universe)
            if d is not None:
                self.send(Kind.DECIDED, d)
                return self.decide(d, t)
            return None
        return self._late_decide(t, (Kind.FORWARD,), 1 - self.params.rho)

    def forward_support(self, f: SignedMessage) -> set[PartyId]:
        return {c.signer for c in f.payload.carried if c.value == f.value and self.valid_vote(c)}

    def fallback_input(self):
        cands = [
            (len(self.forward_support(f)), f.value, f.signer)
            for f in self.direct(Kind.FORWARD)
            if self.in_universe(f.value)
        ]
        u = pick_largest(cands)
        return self.params.default_value if u is None else u


class BAfpMachine(ProtocolMachine):
    """One-round good-case agreement under dynamic participation."""

    protocol_id = "BAfp"

    def on_round(self, t):
        if t == 0:
            self.send(Kind.ECHO, self.input)
            return None
        if t == 1:
            echoes = [m for m in self.direct(Kind.ECHO) if self.valid_echo(m)]
            tally = Tally.of(echoes)
            u = argmax_value(tally.by_value, self.universe)
            support = tally.by_value.get(u, set())
            self.send(Kind.FORWARD, u, [support], [m for m in echoes if m.value == u])
            if len(support) > (1 - self.params.rho) * len(tally.senders):
                self.send(Kind.DECIDED, u)
                return self.decide(u, t)
            return None
        return self._late_decide(t, (Kind.FORWARD,), 1 - self.params.rho)

    def forward_support(self, f: SignedMessage) -> set[PartyId]:
        return {c.signer for c in f.payload.carried if c.kind == Kind.ECHO and c.value == f.value}

    def fallback_input(self):
        cands = [
            (len(self.forward_support(f)), f.value, f.signer)
            for f in self.direct(Kind.FORWARD)
            if self.in_universe(f.value)
        ]
        u = pick_largest(cands)
        return self.params.default_value if u is None else u


class BBupMachine(ProtocolMachine):
    """Two-round good-case broadcast for unknown (fixed) participation."""

    protocol_id = "BBup"

    def echoes_any(self) -> list[SignedMessage]:
        # bottom echoes are legitimate here
        return [m for m in self.direct(Kind.ECHO) if m.value is None or self.in_universe(m.value)]

    def echo_star(self) -> set[PartyId]:
        accept = lambda m: m.value is None or self.in_universe(m.value)  # noqa: E731
        return compute_majority_forward_set(self._forward_bundles(), Kind.ECHO, accept=accept)

    def echo_senders(self) -> set[PartyId]:
        e = {m.signer for m in self.echoes_any()}
        for bundle in self._forward_bundles().values():
            e.update(c.signer for c in bundle if c.kind == Kind.ECHO and (c.value is None or self.in_universe(c.value)))
        return e

    def on_round(self, t):
        if t == 0:
            self.send(Kind.ECHO, self.input if self.party == self.leader else BOT)
            return None
        if t == 1:
            echoes = self.echoes_any()
            self.send(Kind.FORWARD, None, [{m.signer for m in echoes}], echoes)
            lead = [m for m in echoes if m.signer == self.leader and self.in_universe(m.value)]
            if lead:
                e = min(lead, key=lambda m: m.value)
                self.send(Kind.VOTE, e.value, carried=[e])
            return None
        if t == 2:
            votes = [m for m in self.direct(Kind.VOTE) if self.valid_vote(m)]
            tally = Tally.of(votes)
            tally.starred = self.echo_star()
            by = {u: tally.support(u) for u in self.universe}
            u = argmax_value(by, self.universe)
            chosen = by[u]
            self.send(Kind.ECHO2, u, [chosen], [m for m in votes if m.value == u and m.signer in chosen])
            d = bbup_early_decide(u, chosen, self.echo_senders(), self.leader_equivocated)
            if d is not None:
                self.send(Kind.DECIDED, d)
                return self.decide(d, t)
        return None

    def fallback_input(self):
        estar = self.echo_star()
        cands = []
        for m in self.direct(Kind.ECHO2):
            if not self.in_universe(m.value):
                continue
            s = {c.signer for c in m.payload.carried if c.value == m.value and self.valid_vote(c)}
            cands.append((len(s & estar), m.value, m.signer))
        u = pick_largest(cands)
        return self.params.default_value if u is None else u


class BBspMachine(ProtocolMachine):
    """Three-round good-case broadcast with resilience one half."""

    protocol_id = "BBsp"

    def all_votes(self) -> list[SignedMessage]:
        """Valid votes received directly or inside forward messages."""
        out = {m.key: m for m in self.direct(Kind.VOTE) if self.valid_vote(m)}
        for f in self.direct(Kind.FORWARD):
            for c in f.payload.carried:
                if self.valid_vote(c):
                    out.setdefault(c.key, c)
        return list(out.values())

    def vote_star(self) -> set[PartyId]:
        valid_seen = [m for m in self.seen() if m.kind == Kind.VOTE and self.valid_vote(m)]
        return compute_majority_forward_set(
            self._forward_bundles(), Kind.VOTE, require_no_equivocation=True,
            evidence=valid_seen, accept=self.valid_vote,
        )

    def on_round(self, t):
        if t == 0:
            if self.party == self.leader:
                self.send(Kind.ECHO, self.input)
            return None
        if t == 1:
            echoes = [m for m in self.direct(Kind.ECHO) if m.signer == self.leader and self.in_universe(m.value)]
            if echoes:
                e = min(echoes, key=lambda m: m.value)
                self.send(Kind.VOTE, e.value, carried=[e])
            else:
                self.send(Kind.VOTE, BOT)
            return None
        if t == 2:
            votes = [m for m in self.direct(Kind.VOTE) if self.valid_vote(m)]
            self.send(Kind.FORWARD, None, [{m.signer for m in votes}], votes)
            return None
        if t == 3:
            votes = self.all_votes()
            tally = Tally.of(votes)
            tally.starred = self.vote_star()
            by = {u: tally.support(u) for u in self.universe}
            u = argmax_value(by, self.universe)
            chosen = by[u]
            self.send(Kind.ECHO2, u, [chosen], [m for m in votes if m.value == u and m.signer in chosen])
            d = majority_early_decide(u, chosen, tally.senders, self.leader_equivocated)
            if d is not None:
                self.send(Kind.DECIDED, d)
                return self.decide(d, t)
            return None
        # a decided message counts as an echo2 for the denominator; without
        # this, decided-only senders inflate D_u but not D*
        return self._late_decide(t, (Kind.ECHO2, Kind.DECIDED), Fraction(1, 2))

    def fallback_input(self):
        vstar = self.vote_star()
        cands = []
        for m in self.direct(Kind.ECHO2):
            if not self.in_universe(m.value):
                continue
            s = {c.signer for c in m.payload.carried if c.value == m.value and self.valid_vote(c)}
            cands.append((len(s & vstar), m.value, m.signer))
        u = pick_largest(cands)
        return self.params.default_value if u is None else u


class BAspMachine(ProtocolMachine):
    """Two-round good-case agreement with resilience one half (report participation)."""

    protocol_id = "BAsp"

    def echo_view(self) -> tuple[set[PartyId], dict[int, set[PartyId]], set[PartyId]]:
        """(E, E_u by value, E*) from direct echoes and echoes inside forwards."""
        echoes = [m for m in self.direct(Kind.ECHO) if self.valid_echo(m)]
        bundles = self._forward_bundles()
        for b in bundles.values():
            echoes.extend(c for c in b if self.valid_echo(c))
        tally = Tally.of(echoes)
        valid_seen = [m for m in self.seen() if self.valid_echo(m)]
        estar = compute_majority_forward_set(
            bundles, Kind.ECHO, require_no_equivocation=True,
            evidence=valid_seen, accept=self.valid_echo,
        )
        return tally.senders, tally.by_value, estar

    def t_senders(self) -> set[PartyId]:
        return {m.signer for m in self.direct(Kind.ECHO2)} | {m.signer for m in self.direct(Kind.DECIDED)}

    def g_star(self) -> set[PartyId]:
        reports: dict[PartyId, list[SignedMessage]] = {}
        for k in (Kind.ECHO2, Kind.DECIDED):
            for m in self.direct(k):
                reports.setdefault(m.signer, []).extend(m.payload.carried)
        return compute_majority_forward_set(reports, Kind.FORWARD)

    def on_round(self, t):
        if t == 0:
            self.send(Kind.ECHO, self.input)
            return None
        if t == 1:
            echoes = [m for m in self.direct(Kind.ECHO) if self.valid_echo(m)]
            self.send(Kind.FORWARD, None, [{m.signer for m in echoes}], echoes)
            return None
        if t == 2:
            e, by_value, estar = self.echo_view()
            forwards = self.direct(Kind.FORWARD)
            for u in self.universe:
                estar_u = by_value.get(u, set()) & estar
                if 2 * len(estar_u) > len(e):
                    self.send(Kind.DECIDED, u, [e, estar_u], forwards)
                    return self.decide(u, t)
            self.send(Kind.ECHO2, None, [e, estar], forwards)
            return None
        if self.decision is not None:
            return None
        d = Tally.of(m for m in self.direct(Kind.DECIDED) if self.in_universe(m.value))
        u = late_decide_by_fraction(d.by_value, self.t_senders(), Fraction(1, 2))
        return None if u is None else self.decide(u, t)

    def fallback_input(self):
        _, _, estar = self.echo_view()
        gstar = self.g_star()
        cands = [
            (len(m.payload.parties[0]), m.value, m.signer)
            for m in self.direct(Kind.DECIDED)
            if basp_validate_decided(m, estar, gstar, self.universe)
        ]
        u = pick_largest(cands)
        return self.params.default_value if u is None else u


class SyncBA1Machine(ProtocolMachine):
    """Folklore one-round good-case agreement for static participation."""

    protocol_id = "SyncBA1"

    def on_round(self, t):
        n, f = self.params.n_total, self.params.sync_threshold_f
        if t == 0:
            self.send(Kind.ECHO, self.input)
            return None
        if t == 1:
            echoes = [m for m in self.direct(Kind.ECHO) if self.valid_echo(m)]
            cert = syncba1_certificate_check(echoes, n, f)
            if cert is not None:
                u, c = cert
                self.send(Kind.DECIDED, u, carried=c)
                return self.decide(u, t)
        return None

    def certified_values(self) -> list[int]:
        n, f = self.params.n_total, self.params.sync_threshold_f
        out = set()
        for m in self.direct(Kind.DECIDED):
            if not self.in_universe(m.value):
                continue
            echoes = [c for c in m.payload.carried if c.value == m.value and self.valid_echo(c)]
            cert = syncba1_certificate_check(echoes, n, f)
            if cert is not None and cert[0] == m.value:
                out.add(m.value)
        return sorted(out)

    def fallback_input(self):
        certs = self.certified_values()
        if certs:
            return certs[0]
        return self.input if self.in_universe(self.input) else self.params.default_value


MACHINES = {
    cls.protocol_id: cls
    for cls in (BBfpMachine, BAfpMachine, BBupMachine, BBspMachine, BAspMachine, SyncBA1Machine)
}


def make_machine(params: Params, party: PartyId, input: Value, ledger: SignatureLedger,
                 fallback: Optional[IdealFallback] = None, corrupt: bool = False) -> ProtocolMachine:
    return MACHINES[params.protocol](params, party, input, ledger, fallback, corrupt)


def step(m: ProtocolMachine, t: int, inbox, awake: bool = True):
    return m.step(t, inbox, awake)


def select_fallback_input(m: ProtocolMachine) -> int:
    return m.fallback_input()

"""Threshold and selection rules shared by the protocol machines.

All comparisons against rho are made on Fractions.  Whenever a rule says
"breaking ties arbitrarily" the smallest value wins, then the smallest sender.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from goodcase.core import (
    Kind,
    PartyId,
    SignedMessage,
    Value,
    detect_equivocation,
)


class MalformedBundle(Exception):
    """A message's reported sets disagree with the evidence it carries."""


@dataclass
class Tally:
    """Senders of some message kind, split by value.

    ``senders`` includes parties that only sent bottom; ``by_value`` only ever
    holds real values.  ``starred`` is the majority-forwarded filter set when
    one applies.
    """

    senders: set[PartyId] = field(default_factory=set)
    by_value: dict[int, set[PartyId]] = field(default_factory=dict)
    starred: Optional[set[PartyId]] = None

    def add(self, sender: PartyId, value: Value) -> None:
        self.senders.add(sender)
        if value is not None:
            self.by_value.setdefault(value, set()).add(sender)

    def support(self, value: int) -> set[PartyId]:
        s = self.by_value.get(value, set())
        return s if self.starred is None else s & self.starred

    @classmethod
    def of(cls, msgs: Iterable[SignedMessage]) -> "Tally":
        t = cls()
        for m in msgs:
            t.add(m.signer, m.value)
        return t


def argmax_value(by_value: Mapping[int, set], universe: Sequence[int]) -> int:
    """Value in the universe with the largest set; ties go to the smallest value."""
    best = universe[0]
    best_size = len(by_value.get(best, ()))
    for u in universe[1:]:
        size = len(by_value.get(u, ()))
        if size > best_size:
            best, best_size = u, size
    return best


def bbfp_early_decide(tally: Tally, rho: Fraction, leader_equivocated: bool, universe: Sequence[int] = (0, 1)) -> Optional[int]:
    """Decide the plurality vote value u iff no leader equivocation and |V_u| > (1 - rho)|V|."""
    if leader_equivocated:
        return None
    u = argmax_value(tally.by_value, universe)
    if len(tally.by_value.get(u, ())) > (1 - Fraction(rho)) * len(tally.senders):
        return u
    return None


def late_decide_by_fraction(
    d_by_value: Mapping[int, set], denominator: set, frac: Fraction
) -> Optional[int]:
    """Smallest u with |D_u| > frac * |denominator|, or None."""
    bound = Fraction(frac) * len(denominator)
    hits = [u for u, s in d_by_value.items() if u is not None and len(s) > bound]
    return min(hits) if hits else None


def compute_majority_forward_set(
    forwards: Mapping[PartyId, Iterable[SignedMessage]],
    kind: Kind,
    require_no_equivocation: bool = False,
    evidence: Optional[Iterable[SignedMessage]] = None,
    accept: Optional[Callable[[SignedMessage], bool]] = None,
) -> set[PartyId]:
    """Parties whose kind-message sits in strictly more than half of the forward bundles.

    ``forwards`` maps each forwarder in G to the messages it forwarded.  With
    ``require_no_equivocation`` a party is dropped if two accepted kind-messages
    with distinct values signed by it appear anywhere in ``evidence`` (the
    bundles themselves when no evidence is given).
    """
    counts: dict[PartyId, int] = {}
    for bundle in forwards.values():
        signers = {m.signer for m in bundle if m.kind == kind and (accept is None or accept(m))}
        for q in signers:
            counts[q] = counts.get(q, 0) + 1
    half = Fraction(len(forwards), 2)
    chosen = {q for q, c in counts.items() if c > half}
    if require_no_equivocation and chosen:
        pool = evidence if evidence is not None else [m for b in forwards.values() for m in b]
        chosen -= equivocators(pool, kind, accept)
    return chosen


def equivocators(
    msgs: Iterable[SignedMessage], kind: Kind, accept: Optional[Callable[[SignedMessage], bool]] = None
) -> set[PartyId]:
    """Signers with two accepted kind-messages carrying distinct non-bottom values."""
    seen: dict[PartyId, int] = {}
    out: set[PartyId] = set()
    for m in msgs:
        if m.kind != kind or m.value is None or (accept is not None and not accept(m)):
            continue
        prev = seen.setdefault(m.signer, m.value)
        if prev != m.value:
            out.add(m.signer)
    return out


def majority_early_decide(
    u: int, support: set, denominator: set, leader_equivocated: bool
) -> Optional[int]:
    """Decide u iff no leader equivocation and |support| > |denominator| / 2."""
    if leader_equivocated:
        return None
    return u if 2 * len(support) > len(denominator) else None


def bbup_early_decide(
    u: int, v_u_inter_estar: set, e_set: set, leader_equivocated: bool
) -> Optional[int]:
    return majority_early_decide(u, v_u_inter_estar, e_set, leader_equivocated)


def pick_largest(candidates: Iterable[tuple[int, int, PartyId]]) -> Optional[int]:
    """Value of the (size, value, sender) candidate with the largest size.

    Ties go to the smallest value, then the smallest sender.
    """
    best = None
    for size, value, sender in candidates:
        key = (-size, value, sender)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def parse_decided(msg: SignedMessage) -> tuple[int, set, set, dict[PartyId, list[SignedMessage]]]:
    """Unpack (u, E^q, E*_u^q, forwards by sender) from a rich decided message."""
    p = msg.payload
    if p.kind != Kind.DECIDED or p.value is None or len(p.parties) != 2:
        raise MalformedBundle("not a decided(u, E, E*_u, forwards) message")
    e_q, estar_u = set(p.parties[0]), set(p.parties[1])
    if not estar_u <= e_q:
        raise MalformedBundle("reported E*_u is not a subset of reported E")
    forwards: dict[PartyId, list[SignedMessage]] = {}
    for c in p.carried:
        if c.kind != Kind.FORWARD:
            raise MalformedBundle(f"decided message carries a {c.kind.name}")
        forwards.setdefault(c.signer, []).append(c)
    return p.value, e_q, estar_u, forwards


def basp_validate_decided(
    msg: SignedMessage, own_estar: set, own_gstar: set, universe: Sequence[int] = (0, 1)
) -> bool:
    """The four acceptance conditions for a decided message at round 3 and later."""
    try:
        u, e_q, estar_u, forwards = parse_decided(msg)
    except MalformedBundle:
        return False
    if u not in universe:
        return False
    if not own_estar <= e_q or not own_gstar <= set(forwards):
        return False
    bundle = [c for fs in forwards.values() for f in fs for c in f.payload.carried]
    half = Fraction(len(forwards), 2)
    for z in estar_u:
        hits = sum(
            1
            for fs in forwards.values()
            if any(c.kind == Kind.ECHO and c.signer == z and c.value == u for f in fs for c in f.payload.carried)
        )
        if not hits > half:
            return False
        if detect_equivocation(bundle, z, Kind.ECHO):
            return False
    return 2 * len(estar_u) > len(e_q)


def syncba1_certificate_check(
    echoes: Iterable[SignedMessage], n: int, f: int
) -> Optional[tuple[int, tuple[SignedMessage, ...]]]:
    """A certificate C(u): n - f echoes for u from distinct signers (smallest u if several)."""
    per_value: dict[int, dict[PartyId, SignedMessage]] = {}
    for m in echoes:
        if m.kind == Kind.ECHO and m.value is not None:
            per_value.setdefault(m.value, {}).setdefault(m.signer, m)
    need = n - f
    for u in sorted(per_value):
        by_signer = per_value[u]
        if len(by_signer) >= need:
            picked = tuple(by_signer[s] for s in sorted(by_signer)[:need])
            return u, picked
    return None

"""Adversary interface and the deterministic library strategies.

The engine calls three hooks per round:

* ``choose_sleep_set(t, prefix)`` before any round-t content exists;
* ``inject_messages(t, prefix, outboxes, corrupt_inbox)`` after seeing every
  correct party's round-t outbox (rushing), returning ``(recipient, message)``
  pairs delivered at t + 1;
* ``wake_order(p, buffered)`` when a party wakes with a backlog.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from goodcase.core import (
    BOT,
    ForgeryError,
    Kind,
    MessagePayload,
    Params,
    PartyId,
    SignatureLedger,
    SignedMessage,
    Value,
    flatten,
    rho_bounded,
)
from goodcase.protocols.machines import ProtocolMachine, make_machine


@dataclass
class AdversaryContext:
    params: Params
    corrupt: frozenset
    correct: tuple
    inputs: dict
    ledger: SignatureLedger = field(repr=False)
    mode: str = "dynamic"
    explicit_awake: Optional[list] = None
    t_max: int = 0

    @property
    def parties(self) -> range:
        return range(self.params.n_total)

    def sign(self, signer: PartyId, payload: MessagePayload) -> SignedMessage:
        if signer not in self.corrupt:
            raise ForgeryError(f"adversary cannot sign for correct party p{signer}")
        return self.ledger.sign(signer, payload)


def min_awake(n_corrupt: int, rho: Fraction) -> int:
    """Fewest awake correct parties keeping |F| < rho * n_t."""
    a = 0
    while not rho_bounded(n_corrupt, a + n_corrupt, rho):
        a += 1
        if rho == 0:
            raise ValueError("no schedule satisfies rho = 0")
    return a


class AdversaryStrategy:
    """Base strategy: follows the configured schedule, sends nothing, FIFO wake order."""

    name = "silent"

    def __init__(self, seed: int = 0, **options) -> None:
        self.seed = seed
        self.options = options
        self.rng = random.Random(seed)
        self.ctx: Optional[AdversaryContext] = None

    def setup(self, ctx: AdversaryContext) -> None:
        self.ctx = ctx
        self.pool: dict[bytes, SignedMessage] = {}
        self._fixed_awake: Optional[frozenset] = None

    # -- sleep ------------------------------------------------------------

    def choose_sleep_set(self, t: int, prefix) -> set:
        ctx = self.ctx
        correct = set(ctx.correct)
        if ctx.mode == "static":
            return set()
        if ctx.explicit_awake is not None:
            if t < len(ctx.explicit_awake):
                return correct - set(ctx.explicit_awake[t])
            return set() if ctx.mode != "unknown" else correct - set(ctx.explicit_awake[-1])
        if self.options.get("sleep", "none") == "random":
            return correct - self.random_awake(t)
        return set()

    def random_awake(self, t: int) -> set:
        """A rho-respecting random awake set; fixed after round 0 in unknown mode."""
        ctx = self.ctx
        if ctx.mode == "unknown" and self._fixed_awake is not None:
            return set(self._fixed_awake)
        correct = list(ctx.correct)
        wake_all_from = self.options.get("wake_all_from")
        if wake_all_from is not None and t >= wake_all_from and ctx.mode != "unknown":
            return set(correct)
        lo = min_awake(len(ctx.corrupt), ctx.params.rho)
        k = self.rng.randint(lo, len(correct))
        chosen = set(self.rng.sample(correct, k))
        lead = ctx.params.leader
        if t == 0 and lead in ctx.correct and self.options.get("leader_awake_bias", 0) > self.rng.random():
            chosen.add(lead)
        if ctx.mode == "unknown":
            self._fixed_awake = frozenset(chosen)
        return chosen

    # -- messages ---------------------------------------------------------

    def observe(self, msgs: Iterable[SignedMessage]) -> None:
        for m in flatten(msgs):
            self.pool.setdefault(m.key, m)

    def inject_messages(self, t: int, prefix, outboxes: dict, corrupt_inbox: dict) -> list:
        self.observe(m for out in outboxes.values() for m in out)
        self.observe(m for inbox in corrupt_inbox.values() for m in inbox)
        return self.act(t, outboxes, corrupt_inbox)

    def act(self, t: int, outboxes: dict, corrupt_inbox: dict) -> list:
        return []

    def wake_order(self, p: PartyId, buffered: Sequence[SignedMessage]) -> list:
        return list(buffered)

    # helpers for subclasses
    def multicast(self, m: SignedMessage, recipients: Optional[Iterable[PartyId]] = None) -> list:
        rs = self.ctx.parties if recipients is None else recipients
        return [(r, m) for r in rs]


SilentAdversary = AdversaryStrategy


class ShadowAdversary(AdversaryStrategy):
    """Corrupt parties run the protocol honestly on what they receive.

    ``inputs`` (option) maps corrupt party to the input its shadow uses;
    default is the configured input or the smallest value.  Subclasses decide
    who receives which copy through ``route``.
    """

    name = "honest"

    def setup(self, ctx: AdversaryContext) -> None:
        super().setup(ctx)
        # keys arrive as strings when the options came through JSON
        inputs = {int(k): v for k, v in self.options.get("inputs", {}).items()}
        self.shadows: dict[PartyId, ProtocolMachine] = {}
        for c in sorted(ctx.corrupt):
            u = inputs.get(c, ctx.inputs.get(c))
            if u is None:
                u = ctx.params.default_value
            self.shadows[c] = make_machine(ctx.params, c, u, ctx.ledger)

    def act(self, t, outboxes, corrupt_inbox):
        out = []
        for c, shadow in self.shadows.items():
            msgs, _ = shadow.step(t, corrupt_inbox.get(c, []))
            for m in msgs:
                out.extend(self.route(t, c, m))
        return out

    def route(self, t: int, c: PartyId, m: SignedMessage) -> list:
        return self.multicast(m)


def flip_value(v: Value, universe: Sequence[int]) -> Value:
    if v is None:
        return universe[0]
    i = universe.index(v) if v in universe else -1
    return universe[(i + 1) % len(universe)]


class SplitAdversary(ShadowAdversary):
    """Equivocating corrupt parties.

    Each shadow message goes unchanged to the lower half of the parties
    (by id) and with its value flipped to the upper half.  Flipped votes
    carry the leader's echo for the new value when the adversary has one;
    otherwise they go out bare and receivers discard them as invalid.
    """

    name = "split"

    def route(self, t, c, m):
        n = self.ctx.params.n_total
        lower = range(0, (n + 1) // 2)
        upper = range((n + 1) // 2, n)
        alt = self.variant(c, m)
        return self.multicast(m, lower) + self.multicast(alt, upper)

    def variant(self, c: PartyId, m: SignedMessage) -> SignedMessage:
        p = m.payload
        universe = self.ctx.params.value_universe
        v = flip_value(p.value, universe)
        carried = list(p.carried)
        if p.kind == Kind.VOTE:
            lead = self.ctx.params.leader
            echo = next(
                (x for x in self.pool.values() if x.kind == Kind.ECHO and x.signer == lead and x.value == v),
                None,
            )
            if echo is None and lead in self.ctx.corrupt:
                echo = self.ctx.sign(lead, MessagePayload(Kind.ECHO, v))
            carried = [echo] if echo is not None else []
        alt = self.ctx.sign(c, MessagePayload(p.kind, v, p.parties, carried))
        self.pool.setdefault(alt.key, alt)
        return alt


def bottom_payload(kind: Kind) -> MessagePayload:
    return MessagePayload(kind, BOT)

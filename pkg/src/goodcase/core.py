"""Party identities, values, the message grammar and the simulated signature ledger.

Every message is reduced to a canonical length-prefixed byte string at
construction time.  That string is the message identity: equality, hashing,
transcript digests and view comparisons all go through it.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

PartyId = int
Value = Optional[int]

#: the distinguished bottom value; only ever appears inside vote/echo payloads
BOT: Value = None

PROTOCOLS = ("BBfp", "BAfp", "BBup", "BBsp", "BAsp", "SyncBA1")
BROADCAST_PROTOCOLS = frozenset({"BBfp", "BBup", "BBsp"})

FALLBACK_START = {"BBfp": 3, "BAfp": 2, "BBup": 3, "BBsp": 4, "BAsp": 3, "SyncBA1": 2}

#: round in which the first early-decide rule fires
EARLY_ROUND = {"BBfp": 2, "BAfp": 1, "BBup": 2, "BBsp": 3, "BAsp": 2, "SyncBA1": 1}

#: good-case latency claimed for each protocol
CLAIMED_LATENCY = {"BBfp": 2, "BAfp": 1, "BBup": 2, "BBsp": 3, "BAsp": 2, "SyncBA1": 1}


class Kind(enum.IntEnum):
    ECHO = 1
    VOTE = 2
    FORWARD = 3
    ECHO2 = 4
    DECIDED = 5
    FALLBACK = 6


_U32 = struct.Struct(">I")
_I32 = struct.Struct(">i")


def _value_bytes(v: Value) -> bytes:
    return _I32.pack(-1 if v is None else v)


def value_sort_key(v: Value) -> int:
    """Total order on values; bottom sorts first."""
    return -1 if v is None else v


def format_value(v: Value) -> str:
    return "bot" if v is None else str(v)


class MessagePayload:
    """Immutable payload: kind, optional value, reported party sets, carried evidence.

    Party sets are stored sorted and carried messages sorted by canonical bytes
    with duplicates removed, so two payloads built from the same content in a
    different order are identical.
    """

    __slots__ = ("kind", "value", "parties", "carried", "raw", "_hash")

    def __init__(
        self,
        kind: Kind,
        value: Value = None,
        parties: Sequence[Iterable[PartyId]] = (),
        carried: Iterable["SignedMessage"] = (),
    ) -> None:
        if value is not None and value < 0:
            raise ValueError(f"values must be non-negative integers, got {value}")
        ps = tuple(tuple(sorted(set(s))) for s in parties)
        uniq = {m.key: m for m in carried}
        cs = tuple(uniq[k] for k in sorted(uniq))
        chunks = [bytes((int(kind),)), _value_bytes(value), _U32.pack(len(ps))]
        for s in ps:
            chunks.append(_U32.pack(len(s)))
            chunks.extend(_U32.pack(p) for p in s)
        chunks.append(_U32.pack(len(cs)))
        for m in cs:
            chunks.append(_U32.pack(len(m.key)))
            chunks.append(m.key)
        raw = b"".join(chunks)
        object.__setattr__(self, "kind", Kind(kind))
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "parties", ps)
        object.__setattr__(self, "carried", cs)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "_hash", hash(raw))

    def __setattr__(self, name, value):
        raise AttributeError("MessagePayload is immutable")

    def __eq__(self, other):
        return isinstance(other, MessagePayload) and self.raw == other.raw

    def __hash__(self):
        return self._hash

    def __repr__(self):
        extra = f", parties={self.parties}" if self.parties else ""
        if self.carried:
            extra += f", carried={len(self.carried)}"
        return f"{self.kind.name}({format_value(self.value)}{extra})"


class SignedMessage:
    """A payload plus its signer and the ledger's authenticity tag."""

    __slots__ = ("payload", "signer", "ledger_tag", "key", "_hash", "_digest")

    def __init__(self, payload: MessagePayload, signer: PartyId, ledger_tag: bytes) -> None:
        key = b"S" + _U32.pack(signer) + _U32.pack(len(payload.raw)) + payload.raw
        object.__setattr__(self, "payload", payload)
        object.__setattr__(self, "signer", signer)
        object.__setattr__(self, "ledger_tag", ledger_tag)
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "_hash", hash(key))
        object.__setattr__(self, "_digest", None)

    def __setattr__(self, name, value):
        raise AttributeError("SignedMessage is immutable")

    # the tag is derived from (signer, payload), so it plays no part in identity
    def __eq__(self, other):
        return isinstance(other, SignedMessage) and self.key == other.key

    def __hash__(self):
        return self._hash

    @property
    def kind(self) -> Kind:
        return self.payload.kind

    @property
    def value(self) -> Value:
        return self.payload.value

    @property
    def digest(self) -> str:
        d = self._digest
        if d is None:
            d = hashlib.blake2b(self.key, digest_size=8).hexdigest()
            object.__setattr__(self, "_digest", d)
        return d

    def __repr__(self):
        return f"<{self.payload!r} by p{self.signer}>"


def serialize(m: SignedMessage) -> bytes:
    """Canonical byte form (length-prefixed, fixed field order)."""
    return _U32.pack(len(m.key)) + m.key


def describe(m: SignedMessage) -> dict:
    """Readable structured form used in transcript exports."""
    return {
        "digest": m.digest,
        "signer": m.signer,
        "kind": m.kind.name,
        "value": format_value(m.value),
        "parties": [list(s) for s in m.payload.parties],
        "carried": [c.digest for c in m.payload.carried],
    }


class ForgeryError(Exception):
    """Raised when something other than the engine asks to sign for a correct party."""


class SignatureLedger:
    """Append-only record of every (signer, payload) pair that was legitimately signed."""

    def __init__(self, corrupt: Iterable[PartyId] = (), secret: bytes = b"goodcase-ledger") -> None:
        self.corrupt = frozenset(corrupt)
        self._secret = hashlib.blake2b(secret, digest_size=16).digest()
        self._entries: dict[bytes, bytes] = {}
        self._verified: dict[bytes, bool] = {}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, m: SignedMessage) -> bool:
        return m.key in self._entries

    def _tag(self, signer: PartyId, payload: MessagePayload) -> bytes:
        h = hashlib.blake2b(key=self._secret, digest_size=8)
        h.update(_U32.pack(signer))
        h.update(payload.raw)
        return h.digest()

    def sign(self, signer: PartyId, payload: MessagePayload) -> SignedMessage:
        tag = self._tag(signer, payload)
        m = SignedMessage(payload, signer, tag)
        self._entries[m.key] = tag
        return m

    def verify(self, m: SignedMessage) -> bool:
        if self._entries.get(m.key) != m.ledger_tag:
            return False
        return self._evidence_ok(m)

    def _evidence_ok(self, m: SignedMessage) -> bool:
        # entries only grow, so only positive results are safe to cache
        if m.key in self._verified:
            return True
        for c in m.payload.carried:
            if c.key not in self._entries or not self._evidence_ok(c):
                return False
        self._verified[m.key] = True
        return True


def sign(ledger: SignatureLedger, signer: PartyId, payload: MessagePayload) -> SignedMessage:
    return ledger.sign(signer, payload)


def verify(ledger: SignatureLedger, m: SignedMessage) -> bool:
    """True iff m and everything it carries was signed through the ledger."""
    return ledger.verify(m)


def flatten(msgs: Iterable[SignedMessage]) -> Iterator[SignedMessage]:
    """Yield every message in msgs and, recursively, every message they carry (once each)."""
    seen: set[bytes] = set()
    stack = list(msgs)
    stack.reverse()
    while stack:
        m = stack.pop()
        if m.key in seen:
            continue
        seen.add(m.key)
        yield m
        stack.extend(reversed(m.payload.carried))


def detect_equivocation(msgs: Iterable[SignedMessage], signer: PartyId, kind: Kind) -> bool:
    """Two kind-messages by signer with distinct non-bottom values, at any nesting depth."""
    first: Value = None
    for m in flatten(msgs):
        if m.signer == signer and m.payload.kind == kind and m.payload.value is not None:
            if first is None:
                first = m.payload.value
            elif m.payload.value != first:
                return True
    return False


def largest_below(rho: Fraction, n: int) -> int:
    """Largest integer f with f < rho * n (exact)."""
    bound = rho * n
    f = bound.numerator // bound.denominator
    return f - 1 if f == bound else f


def rho_bounded(n_corrupt: int, n_awake: int, rho: Fraction) -> bool:
    """|F| < rho * n_t, evaluated on rationals."""
    return n_corrupt < rho * n_awake


@dataclass(frozen=True)
class Params:
    n_total: int
    rho: Fraction
    protocol: str = "BBfp"
    delta: int = 1
    leader: Optional[PartyId] = None
    value_universe: tuple[int, ...] = (0, 1)
    fallback_duration: int = 2
    sync_f: Optional[int] = None
    fallback_start_round: int = field(default=-1)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        object.__setattr__(self, "rho", Fraction(self.rho))
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if self.n_total < 1:
            raise ValueError("n_total must be positive")
        if self.delta < 1:
            raise ValueError("delta must be a positive integer")
        if self.fallback_duration < 1:
            raise ValueError("fallback_duration must be a positive integer")
        if not self.value_universe or list(self.value_universe) != sorted(set(self.value_universe)):
            raise ValueError("value_universe must be a non-empty strictly increasing list")
        object.__setattr__(self, "value_universe", tuple(self.value_universe))
        if self.fallback_start_round == -1:
            object.__setattr__(self, "fallback_start_round", FALLBACK_START[self.protocol])
        elif self.fallback_start_round != FALLBACK_START[self.protocol]:
            raise ValueError(
                f"{self.protocol} starts its fallback in round {FALLBACK_START[self.protocol]}"
            )
        if self.protocol in BROADCAST_PROTOCOLS:
            if self.leader is None or not 0 <= self.leader < self.n_total:
                raise ValueError(f"{self.protocol} needs a leader in [0, {self.n_total})")

    @property
    def is_broadcast(self) -> bool:
        return self.protocol in BROADCAST_PROTOCOLS

    @property
    def default_value(self) -> int:
        return self.value_universe[0]

    @property
    def sync_threshold_f(self) -> int:
        """SyncBA1's corruption bound: the explicit override, else the largest f < n/3."""
        if self.sync_f is not None:
            return self.sync_f
        return largest_below(Fraction(1, 3), self.n_total)

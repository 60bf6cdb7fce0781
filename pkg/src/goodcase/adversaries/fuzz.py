"""Randomized adversary for fuzz campaigns.

Every decision is drawn from one ``random.Random(seed)``, so a seed fixes
the whole behaviour.  The strategy only ever signs as corrupt parties or
replays what it has seen, so its injections always verify.
"""

from __future__ import annotations

from typing import Optional

from goodcase.adversaries.base import AdversaryContext, SplitAdversary
from goodcase.core import BOT, Kind, MessagePayload, Params, PartyId, SignedMessage

# which evidence each (protocol, kind) message normally carries
EVIDENCE = {
    ("BBfp", Kind.FORWARD): Kind.VOTE,
    ("BAfp", Kind.FORWARD): Kind.ECHO,
    ("BBup", Kind.FORWARD): Kind.ECHO,
    ("BBup", Kind.ECHO2): Kind.VOTE,
    ("BBsp", Kind.FORWARD): Kind.VOTE,
    ("BBsp", Kind.ECHO2): Kind.VOTE,
    ("BAsp", Kind.FORWARD): Kind.ECHO,
    ("BAsp", Kind.ECHO2): Kind.FORWARD,
    ("BAsp", Kind.DECIDED): Kind.FORWARD,
    ("SyncBA1", Kind.DECIDED): Kind.ECHO,
}

KINDS = {
    "BBfp": (Kind.ECHO, Kind.VOTE, Kind.FORWARD, Kind.DECIDED),
    "BAfp": (Kind.ECHO, Kind.FORWARD, Kind.DECIDED),
    "BBup": (Kind.ECHO, Kind.VOTE, Kind.FORWARD, Kind.ECHO2, Kind.DECIDED),
    "BBsp": (Kind.ECHO, Kind.VOTE, Kind.FORWARD, Kind.ECHO2, Kind.DECIDED),
    "BAsp": (Kind.ECHO, Kind.FORWARD, Kind.ECHO2, Kind.DECIDED),
    "SyncBA1": (Kind.ECHO, Kind.DECIDED),
}

BEHAVIOURS = ("silent", "honest", "split", "selective", "junk", "replay")


class FuzzAdversary(SplitAdversary):
    name = "fuzz"

    def setup(self, ctx: AdversaryContext) -> None:
        rng = self.rng
        if "inputs" not in self.options:
            self.options["inputs"] = {c: rng.choice(ctx.params.value_universe) for c in ctx.corrupt}
        self.options.setdefault("sleep", "random")
        self.options.setdefault("leader_awake_bias", 0.5)
        if ctx.mode != "unknown":
            self.options.setdefault("wake_all_from", ctx.params.fallback_start_round + 1 + rng.randint(0, 2))
        super().setup(ctx)

    def act(self, t, outboxes, corrupt_inbox):
        rng = self.rng
        out = []
        n = self.ctx.params.n_total
        for c, shadow in self.shadows.items():
            msgs, _ = shadow.step(t, corrupt_inbox.get(c, []))
            mode = rng.choice(BEHAVIOURS)
            if mode == "honest":
                for m in msgs:
                    out.extend(self.multicast(m))
            elif mode == "split":
                for m in msgs:
                    cut = rng.randint(0, n)
                    order = list(range(n))
                    rng.shuffle(order)
                    alt = self.variant(c, m)
                    out.extend(self.multicast(m, order[:cut]) + self.multicast(alt, order[cut:]))
            elif mode == "selective":
                for m in msgs:
                    out.extend(self.multicast(m, self.subset()))
            elif mode == "junk":
                for _ in range(rng.randint(1, 3)):
                    m = self.craft(c, t)
                    if m is not None:
                        out.extend(self.multicast(m, self.subset()))
            elif mode == "replay" and self.pool:
                pool = list(self.pool.values())
                for m in rng.sample(pool, min(len(pool), rng.randint(1, 4))):
                    out.extend(self.multicast(m, self.subset()))
        if self.ctx.params.leader in self.ctx.corrupt and t == 0 and rng.random() < 0.5:
            # an equivocating leader: a different echo per recipient
            lead = self.ctx.params.leader
            for q in range(n):
                v = rng.choice(self.ctx.params.value_universe)
                out.append((q, self.ctx.sign(lead, MessagePayload(Kind.ECHO, v))))
        return out

    def subset(self) -> list:
        n = self.ctx.params.n_total
        return [q for q in range(n) if self.rng.random() < 0.5]

    def craft(self, c: PartyId, t: int) -> Optional[SignedMessage]:
        """A random but well-typed message signed by corrupt party c."""
        rng = self.rng
        params = self.ctx.params
        universe = params.value_universe
        kind = rng.choice(KINDS[params.protocol])
        value = rng.choice(universe + (BOT,)) if kind in (Kind.VOTE, Kind.ECHO) or params.protocol == "BBup" else rng.choice(universe)
        carried: list = []
        parties: list = []
        if kind == Kind.VOTE:
            echoes = [m for m in self.pool.values()
                      if m.kind == Kind.ECHO and m.signer == params.leader and m.value == value]
            if echoes and value is not None:
                carried = [echoes[0]]
        ev = EVIDENCE.get((params.protocol, kind))
        if ev is not None:
            cands = [m for m in self.pool.values() if m.kind == ev]
            if cands:
                carried = rng.sample(cands, rng.randint(0, min(len(cands), params.n_total)))
            support = sorted({m.signer for m in carried if m.value == value or ev == Kind.FORWARD})
            if rng.random() < 0.3:
                support = [q for q in range(params.n_total) if rng.random() < 0.5]
            parties = [support]
            if params.protocol == "BAsp" and kind in (Kind.ECHO2, Kind.DECIDED):
                e = {x.signer for f in carried for x in f.payload.carried}
                e_u = {x.signer for f in carried for x in f.payload.carried if x.value == value}
                if rng.random() < 0.3:
                    e |= {q for q in range(params.n_total) if rng.random() < 0.3}
                parties = [e, {q for q in e_u if rng.random() < 0.8}]
                if kind == Kind.ECHO2:
                    value = BOT
        return self.ctx.sign(c, MessagePayload(kind, value, parties, carried))

    def wake_order(self, p, buffered):
        perm = list(buffered)
        self.rng.shuffle(perm)
        return perm


def fuzz_adversary(seed: int, params: Optional[Params] = None) -> FuzzAdversary:
    """Randomized strategy; the same seed gives the same behaviour."""
    return FuzzAdversary(seed=seed)

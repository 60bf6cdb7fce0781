"""Finite inbox spaces for checking machines against the oracle.

For each (protocol, round) a menu of messages per sender; an inbox takes a
subset of at most two messages from every sender's menu, plus a fixed
background.  Menus mix valid, invalid and equivocating messages so every
branch of every round rule is reached.
"""

from __future__ import annotations

from itertools import combinations, product

from goodcase.core import Kind, MessagePayload, Params, SignatureLedger
from goodcase.fallback import IdealFallback
from goodcase.protocols import make_machine

from oracle import oracle_round

RHO = {"BBfp": "19/50", "BAfp": "29/100", "BBup": "1/2", "BBsp": "1/2", "BAsp": "1/2", "SyncBA1": "1/3"}
LEADER = 0


class Builder:
    def __init__(self, n: int):
        self.n = n
        self.ledger = SignatureLedger()

    def msg(self, s, kind, value=None, parties=(), carried=()):
        return self.ledger.sign(s, MessagePayload(kind, value, parties, carried))

    def echo(self, s, u):
        return self.msg(s, Kind.ECHO, u)

    def vote(self, s, u):
        if u is None:
            return self.msg(s, Kind.VOTE, None)
        return self.msg(s, Kind.VOTE, u, carried=[self.echo(LEADER, u)])

    def bare_vote(self, s, u):
        return self.msg(s, Kind.VOTE, u)

    def forward(self, s, value, carried):
        return self.msg(s, Kind.FORWARD, value, [{c.signer for c in carried}], carried)

    def decided(self, s, u):
        return self.msg(s, Kind.DECIDED, u)

    def low(self, s):
        return range(0, s + 1)

    def high(self, s):
        return range(s, self.n)


def subsets(menu, k=2):
    out = [()]
    for r in range(1, k + 1):
        out.extend(combinations(menu, r))
    return out


def inboxes(menus, background=()):
    for choice in product(*[subsets(m) for m in menus]):
        seen = {}
        for m in list(background) + [x for opt in choice for x in opt]:
            seen.setdefault(m.key, m)
        yield list(seen.values())


def menus_for(protocol: str, t: int, b: Builder):
    """(menus per sender, background) for one round, or None when the inbox is irrelevant."""
    n = b.n
    S = range(n)
    if t == 0:
        return None
    if protocol in ("BBfp", "BBsp") and t == 1:
        return [[b.echo(0, 0), b.echo(0, 1)] if s == LEADER else [b.echo(s, 0)] for s in S], ()
    if protocol in ("BBfp", "BBsp") and t == 2:
        return [[b.vote(s, None), b.vote(s, 0), b.vote(s, 1), b.bare_vote(s, 1)] for s in S], ()
    if protocol == "BBfp":
        def fwd_a(s):
            return b.forward(s, 0, [b.vote(q, 0) for q in b.low(s)])

        def fwd_b(s):
            return b.forward(s, 1, [b.vote(q, 1) for q in b.high(s)] + [b.bare_vote(n - 1, 1)])
        return [[fwd_a(s), fwd_b(s), b.decided(s, 0), b.decided(s, 1)] for s in S], ()
    if protocol in ("BAfp", "BAsp", "SyncBA1") and t == 1:
        return [[b.echo(s, 0), b.echo(s, 1), b.echo(s, 2)] for s in S], ()
    if protocol == "BAfp":
        def fwd_a(s):
            return b.forward(s, 0, [b.echo(q, 0) for q in b.low(s)])

        def fwd_b(s):
            return b.forward(s, 1, [b.echo(q, 1) for q in b.high(s)] + [b.echo(0, 0)])
        return [[fwd_a(s), fwd_b(s), b.decided(s, 0), b.decided(s, 1)] for s in S], ()
    if protocol == "BBup":
        def fwd_a(s):
            return b.forward(s, None, [b.echo(0, 0)] + [b.echo(q, None) for q in b.low(s) if q != 0])

        def fwd_b(s):
            return b.forward(s, None, [b.echo(0, 1)] + [b.echo(q, None) for q in b.high(s) if q != 0])
        if t == 1:
            return [[b.echo(0, 0), b.echo(0, 1), b.echo(0, None)] if s == LEADER
                    else [b.echo(s, None), b.echo(s, 0)] for s in S], ()
        if t == 2:
            return [[b.vote(s, 0), b.vote(s, 1), fwd_a(s), fwd_b(s)] for s in S], ()

        def echo2_a(s):
            votes = [b.vote(q, 0) for q in b.low(s)]
            return b.msg(s, Kind.ECHO2, 0, [{v.signer for v in votes}], votes)

        def echo2_b(s):
            votes = [b.vote(q, 1) for q in b.high(s)] + [b.bare_vote(0, 1)]
            return b.msg(s, Kind.ECHO2, 1, [{v.signer for v in votes}], votes)
        return [[echo2_a(s), echo2_b(s), fwd_a(s)] for s in S], ()
    if protocol == "BBsp":
        def fwd_a(s):
            return b.forward(s, None, [b.vote(q, 0) for q in b.low(s)] + [b.vote(n - 1, None)])

        def fwd_b(s):
            return b.forward(s, None, [b.vote(q, 1) for q in b.high(s)])
        if t == 3:
            return [[b.vote(s, 0), b.vote(s, 1), fwd_a(s), fwd_b(s)] for s in S], ()

        def echo2(s, u, qs):
            votes = [b.vote(q, u) for q in qs]
            return b.msg(s, Kind.ECHO2, u, [{v.signer for v in votes}], votes)
        background = [fwd_a(1), fwd_a(2)]
        return [[echo2(s, 0, b.low(s)), echo2(s, 1, b.high(s)), b.decided(s, 0), b.decided(s, 1)]
                for s in S], background
    if protocol == "BAsp":
        if t == 2:
            def fwd_a(s):
                return b.forward(s, None, [b.echo(q, 0) for q in b.low(s)])

            def fwd_b(s):
                return b.forward(s, None, [b.echo(q, 1) for q in b.high(s)] + [b.echo(0, 1)])
            return [[b.echo(s, 0), b.echo(s, 1), fwd_a(s), fwd_b(s)] for s in S], ()
        fwds = [b.forward(y, None, [b.echo(q, 0) for q in range(n - 1)] + [b.echo(n - 1, 1)]) for y in S]
        ones = [b.forward(y, None, [b.echo(0, 0)] + [b.echo(q, 1) for q in range(1, n)]) for y in S]
        mixed = fwds + [b.forward(0, None, [b.echo(1, 1)])]
        everyone, zeros = set(S), set(range(n - 1))

        def dec(s, u, e, eu, carried):
            return b.msg(s, Kind.DECIDED, u, [e, eu], carried)

        def varied(s):
            if s == n - 1:
                return dec(s, 0, everyone, zeros, mixed)            # equivocation inside the bundle
            if s % 2:
                return dec(s, 1, everyone | {n}, set(range(1, n)), ones)  # valid, larger than the rest
            return dec(s, 1, everyone, {n - 1}, fwds)               # no majority
        return [[
            dec(s, 0, everyone, zeros, fwds),
            dec(s, 0, everyone, zeros, fwds[:2]),
            varied(s),
            b.msg(s, Kind.ECHO2, None, [everyone, everyone], fwds),
        ] for s in S], fwds
    if protocol == "SyncBA1":
        f = Params(n_total=n, rho=RHO["SyncBA1"], protocol="SyncBA1").sync_threshold_f
        need = n - f

        def cert(s, u, qs):
            return b.msg(s, Kind.DECIDED, u, carried=[b.echo(q, u) for q in qs])
        return [[cert(s, 0, range(need)), cert(s, 1, range(n - need, n)), cert(s, 0, range(need - 1))]
                for s in S], ()
    raise KeyError((protocol, t))


def rounds_for(protocol: str) -> range:
    params = Params(n_total=3, rho=RHO[protocol], protocol=protocol, leader=LEADER)
    return range(0, params.fallback_start_round + 2)


def cases(protocol: str, t: int, n: int):
    """Yield (params, party, input, inbox) for one round."""
    b = Builder(n)
    params = Params(n_total=n, rho=RHO[protocol], protocol=protocol,
                    leader=LEADER if protocol in ("BBfp", "BBup", "BBsp") else None)
    spec = menus_for(protocol, t, b)
    receivers = (0, 1) if t <= 1 else (1,)
    inputs = (0, 1) if t in (0, params.fallback_start_round) else (0,)
    if spec is None:
        for p in receivers:
            for x in inputs:
                yield b, params, p, x, []
        return
    menus, background = spec
    for inbox in inboxes(menus, background):
        for p in receivers:
            for x in inputs:
                yield b, params, p, x, inbox


def machine_round(b: Builder, params, p, x, t, inbox):
    fb = IdealFallback(params.fallback_start_round, params.fallback_duration, params.value_universe)
    m = make_machine(params, p, x, b.ledger, fb)
    for r in range(t):
        m.step(r, [], awake=False)
    out, event = m.step(t, inbox)
    fb_input = m.handle.input if t == params.fallback_start_round else None
    return sorted(o.payload.raw for o in out), event, fb_input


def compare(protocol: str, t: int, n: int):
    """(cases checked, first mismatch or None)."""
    count = 0
    for b, params, p, x, inbox in cases(protocol, t, n):
        count += 1
        got = machine_round(b, params, p, x, t, inbox)
        out, decision, fb_input = oracle_round(params, p, x, t, inbox)
        want = (sorted(pl.raw for pl in out), decision, fb_input)
        if got != want:
            return count, {"party": p, "input": x, "inbox": inbox, "machine": got, "oracle": want}
    return count, None

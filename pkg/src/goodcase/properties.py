"""Post-hoc checks of termination, agreement and validity, plus latency metrics.

All checkers are pure functions of a Transcript.  A failing check always
names a concrete party, round and value.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from decimal import Decimal, getcontext
from fractions import Fraction
from typing import Optional, Union

from goodcase.config import ScenarioConfig
from goodcase.fallback import check_fallback_contract
from goodcase.simulator import Transcript


class Undecided(Exception):
    """A correct party that was awake at some point never decided."""


@dataclass
class CheckResult:
    passed: bool
    round: Optional[int] = None
    witness: Optional[tuple] = None
    detail: str = ""


@dataclass
class PropertyReport:
    termination: CheckResult
    agreement: CheckResult
    validity: CheckResult
    decision_latency: Optional[int]
    good_case: bool
    early_values: tuple = ()
    fallback_problems: list = field(default_factory=list)

    @property
    def violation(self) -> bool:
        """Safety violation: agreement or validity failed."""
        return not (self.agreement.passed and self.validity.passed)

    def to_record(self) -> dict:
        d = asdict(self)
        d["violation"] = self.violation
        return d


def _first_awake(awake: list, p: int, start: int) -> Optional[int]:
    for t in range(max(start, 0), len(awake)):
        if p in awake[t]:
            return t
    return None


def check_termination(tr: Transcript) -> CheckResult:
    """Smallest T such that every correct party halts by its first awake round >= T.

    Parties with no awake round in [T, t_max] are unconstrained for that T.
    """
    awake = tr.awake_sets()
    correct = tr.correct
    if not correct:
        return CheckResult(True, 0, detail="no correct parties")
    witness = None
    for T in range(len(awake)):
        ok = True
        for p in correct:
            f = _first_awake(awake, p, T)
            if f is None:
                continue
            h = tr.halts.get(p)
            if h is None or h > f or p not in tr.decisions:
                ok = False
                witness = (p, f, None if p not in tr.decisions else tr.decisions[p][0])
                break
        if ok:
            return CheckResult(True, T)
    p, f, v = witness
    return CheckResult(False, f, witness, f"p{p} awake in round {f} but not decided-and-halted by then")


def check_agreement(tr: Transcript) -> CheckResult:
    items = sorted(tr.decisions.items(), key=lambda kv: (kv[1][1], kv[0]))
    if not items:
        return CheckResult(True, detail="no decisions")
    p0, (v0, r0, _) = items[0]
    for p, (v, r, _) in items[1:]:
        if v != v0:
            return CheckResult(False, r, ((p0, v0), (p, v)), f"p{p0} decided {v0}, p{p} decided {v}")
    return CheckResult(True)


def check_validity(tr: Transcript, kind: Optional[str] = None) -> CheckResult:
    """BB: a correct leader awake at round 0 fixes the decision; BA: unanimous round-0 inputs do."""
    kind = kind or ("BB" if tr.params.is_broadcast else "BA")
    required = _required_value(tr, kind)
    if required is None:
        return CheckResult(True, detail="precondition unmet")
    for p, (v, r, _) in sorted(tr.decisions.items()):
        if v != required:
            return CheckResult(False, r, (p, v, required), f"p{p} decided {v}, validity requires {required}")
    return CheckResult(True)


def _required_value(tr: Transcript, kind: str):
    awake0 = tr.awake_at(0) if tr.rounds else frozenset()
    if kind == "BB":
        lead = tr.params.leader
        if lead in tr.correct and lead in awake0:
            return tr.inputs.get(lead)
        return None
    vals = {tr.inputs.get(p) for p in tr.correct if p in awake0}
    return vals.pop() if len(vals) == 1 else None


def measure_decision_latency(tr: Transcript) -> int:
    """Smallest R such that every correct party has decided by its first awake round >= R."""
    awake = tr.awake_sets()
    ever = set().union(*awake) if awake else set()
    missing = [p for p in tr.correct if p in ever and p not in tr.decisions]
    if missing:
        raise Undecided(f"correct parties {missing} never decided")
    for R in range(len(awake)):
        if all(
            (f := _first_awake(awake, p, R)) is None or tr.decisions[p][1] <= f
            for p in tr.correct
            if p in ever
        ):
            return R
    raise Undecided("no round satisfies the latency condition within the horizon")


def latency_in_time(tr: Transcript) -> int:
    """Decision latency expressed in time units (rounds times delta)."""
    return measure_decision_latency(tr) * tr.params.delta


def classify_good_case(x: Union[ScenarioConfig, Transcript]) -> bool:
    """BB: leader correct and awake at round 0.  BA: round-0-awake correct parties agree on the input."""
    if isinstance(x, Transcript):
        cfg = x.config
        awake0 = x.awake_at(0) if x.rounds else frozenset()
    else:
        cfg = x
        sched = cfg.schedule
        if sched.mode == "static" or (sched.awake is None and sched.generator == "all"):
            awake0 = frozenset(cfg.correct)
        elif sched.awake is not None:
            awake0 = frozenset(sched.awake[0]) if sched.awake else frozenset(cfg.correct)
        else:
            raise ValueError("the round-0 awake set is chosen at run time; classify the transcript instead")
    correct = set(cfg.correct)
    if cfg.params.is_broadcast:
        return cfg.params.leader in correct and cfg.params.leader in awake0
    vals = {cfg.inputs.get(p) for p in correct if p in awake0}
    return len(vals) == 1


def check_run(tr: Transcript) -> PropertyReport:
    """All properties of one run in a single report."""
    good = classify_good_case(tr)
    try:
        latency = measure_decision_latency(tr)
    except Undecided:
        latency = None
    early = tuple(sorted({v for v, r, e in tr.decisions.values() if e}))
    fb_problems = []
    if tr.fallback is not None:
        fb_problems = check_fallback_contract(tr.fallback, set(tr.correct), tr.awake_sets())
    return PropertyReport(
        termination=check_termination(tr),
        agreement=check_agreement(tr),
        validity=check_validity(tr),
        decision_latency=latency,
        good_case=good,
        early_values=early,
        fallback_problems=fb_problems,
    )


# -- threshold constants --------------------------------------------------

@dataclass(frozen=True)
class ThresholdConstant:
    name: str
    equation: str
    closed_form: str
    decimal: Decimal
    bracket: tuple  # (lo, hi) Fractions from bisection on the defining polynomial
    residual: float

    def approx(self, places: int = 3) -> str:
        return f"{self.decimal:.{places}f}"


def _bisect_root(poly, lo: Fraction, hi: Fraction, width: Fraction) -> tuple:
    """Rational bracket of a sign change of poly on [lo, hi]."""
    flo = poly(lo)
    while hi - lo > width:
        mid = (lo + hi) / 2
        fm = poly(mid)
        if fm == 0:
            return mid, mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo, hi


def threshold_constants(precision: int = 50) -> tuple:
    """The two resilience thresholds, each from its defining equation.

    Returns (rho_bb2, rho_ba1).  The decimal value comes from the closed form
    evaluated at ``precision`` digits; the bracket comes from exact rational
    bisection of the defining polynomial; the residual is the polynomial at
    the decimal value.
    """
    ctx = getcontext()
    old = ctx.prec
    ctx.prec = precision
    try:
        five = Decimal(5).sqrt()
        bb2 = (3 - five) / 2
        ba1 = 1 - 1 / Decimal(2).sqrt()
        res_bb2 = abs(bb2 - (1 - bb2) ** 2)
        res_ba1 = abs(ba1 - (1 - ba1) * (1 - 2 * ba1))
    finally:
        ctx.prec = old
    width = Fraction(1, 10 ** 15)
    br_bb2 = _bisect_root(lambda r: r - (1 - r) ** 2, Fraction(0), Fraction(1, 2), width)
    br_ba1 = _bisect_root(lambda r: r - (1 - r) * (1 - 2 * r), Fraction(0), Fraction(1, 2), width)
    return (
        ThresholdConstant("rho_bb2", "rho = (1 - rho)^2", "(3 - sqrt 5) / 2", bb2, br_bb2, float(res_bb2)),
        ThresholdConstant("rho_ba1", "rho = (1 - rho)(1 - 2 rho)", "1 - 1/sqrt 2", ba1, br_ba1, float(res_ba1)),
    )

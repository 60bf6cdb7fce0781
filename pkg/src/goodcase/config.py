"""Scenario configuration: a small YAML tree describing one family of runs.

Schema (keys not listed are rejected)::

    name: str                      # optional, default "scenario"
    protocol: BBfp | BAfp | BBup | BBsp | BAsp | SyncBA1
    n: int                         # total number of parties
    rho: "19/50"                   # exact rational, string or int
    leader: int                    # required for BBfp, BBup, BBsp
    delta: int                     # default 1
    values: [0, 1]                 # value universe, strictly increasing
    fallback_duration: int         # default 2
    sync_f: int                    # SyncBA1 corruption bound override
    inputs: {party: value} | value # one value means "every party"
    schedule:
      corrupt: [ids]
      mode: dynamic | unknown | static
      awake: [[ids], [ids], ...]   # explicit awake correct parties per round
      generator: all | random      # used when awake is absent
      wake_all_from: int           # random generator: everyone awake from here
    adversary:
      name: silent | honest | split | fuzz | appendix-g | exec1 | exec2
      options: {...}
    t_max: int
    seeds: [ints] | {start: int, stop: int}
    expect_violation: bool
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

import yaml

from goodcase.core import PROTOCOLS, Params, PartyId, Value, rho_bounded


class ParseError(Exception):
    """The text is not a well-formed scenario tree."""


class ValidationError(Exception):
    """The scenario is well formed but inconsistent; carries every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


MODES = ("dynamic", "unknown", "static")
GENERATORS = ("all", "random", "explicit")
TOP_KEYS = {
    "name", "protocol", "n", "rho", "leader", "delta", "values", "fallback_duration",
    "sync_f", "inputs", "schedule", "adversary", "t_max", "seeds", "expect_violation",
}
SCHEDULE_KEYS = {"corrupt", "mode", "awake", "generator", "wake_all_from"}


@dataclass(frozen=True)
class ScheduleSpec:
    corrupt: frozenset = frozenset()
    mode: str = "dynamic"
    awake: Optional[tuple] = None
    generator: str = "all"
    wake_all_from: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "corrupt": sorted(self.corrupt),
            "mode": self.mode,
            "awake": None if self.awake is None else [sorted(s) for s in self.awake],
            "generator": self.generator,
            "wake_all_from": self.wake_all_from,
        }


@dataclass(frozen=True)
class AdversarySpec:
    name: str = "silent"
    options: dict = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    params: Params
    inputs: dict
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    t_max: Optional[int] = None
    seeds: tuple = (0,)
    name: str = "scenario"
    expect_violation: bool = False

    @property
    def protocol(self) -> str:
        return self.params.protocol

    @property
    def correct(self) -> tuple:
        return tuple(p for p in range(self.params.n_total) if p not in self.schedule.corrupt)

    @property
    def horizon(self) -> int:
        if self.t_max is not None:
            return self.t_max
        return self.params.fallback_start_round + self.params.fallback_duration + 2

    def to_dict(self) -> dict:
        p = self.params
        return {
            "name": self.name,
            "protocol": p.protocol,
            "n": p.n_total,
            "rho": str(p.rho),
            "leader": p.leader,
            "delta": p.delta,
            "values": list(p.value_universe),
            "fallback_duration": p.fallback_duration,
            "sync_f": p.sync_f,
            "inputs": {str(k): v for k, v in sorted(self.inputs.items())},
            "schedule": self.schedule.to_dict(),
            "adversary": {"name": self.adversary.name, "options": _jsonable(self.adversary.options)},
            "t_max": self.horizon,
            "seeds": list(self.seeds),
            "expect_violation": self.expect_violation,
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("seeds")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self) -> None:
        errors = validation_errors(self)
        if errors:
            raise ValidationError(errors)


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in sorted(x.items(), key=lambda kv: str(kv[0]))}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if isinstance(x, Fraction):
        return str(x)
    return x


def validation_errors(cfg: ScenarioConfig) -> list[str]:
    """Every consistency problem with the scenario, in a stable order."""
    errors = []
    p = cfg.params
    n = p.n_total
    sched = cfg.schedule
    bad = sorted(c for c in sched.corrupt if not 0 <= c < n)
    if bad:
        errors.append(f"corrupt parties out of range: {bad}")
    correct = set(cfg.correct)
    if p.is_broadcast:
        if p.leader in correct and cfg.inputs.get(p.leader) is None:
            errors.append(f"leader p{p.leader} has no input")
    else:
        missing = sorted(q for q in correct if cfg.inputs.get(q) is None)
        if missing:
            errors.append(f"inputs missing for correct parties {missing}")
    for q, v in sorted(cfg.inputs.items()):
        if v is not None and v not in p.value_universe:
            errors.append(f"input of p{q} ({v}) is outside the value universe")
    if sched.mode not in MODES:
        errors.append(f"unknown schedule mode {sched.mode!r}")
    if sched.generator not in GENERATORS:
        errors.append(f"unknown schedule generator {sched.generator!r}")
    if sched.awake is not None:
        for t, s in enumerate(sched.awake):
            stray = sorted(set(s) - correct)
            if stray:
                errors.append(f"round {t}: awake set names non-correct parties {stray}")
        if sched.mode == "unknown" and len({frozenset(s) for s in sched.awake}) > 1:
            errors.append("unknown participation needs the same awake set in every round")
        if sched.mode == "static" and any(set(s) != correct for s in sched.awake):
            errors.append("static participation needs every correct party awake in every round")
        for t, s in enumerate(sched.awake):
            nt = len(set(s) & correct) + len(sched.corrupt)
            if not rho_bounded(len(sched.corrupt), nt, p.rho):
                errors.append(
                    f"round {t}: |F|={len(sched.corrupt)} is not below rho*n_t={p.rho}*{nt}"
                )
    elif not rho_bounded(len(sched.corrupt), len(correct) + len(sched.corrupt), p.rho):
        errors.append(f"|F|={len(sched.corrupt)} is not below rho*n={p.rho}*{n} even with everyone awake")
    if cfg.t_max is not None and cfg.t_max < 0:
        errors.append("t_max must be non-negative")
    return errors


def _parse_rho(x) -> Fraction:
    if isinstance(x, float):
        raise ParseError("rho must be an exact rational such as '19/50', not a float")
    try:
        return Fraction(str(x))
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"cannot read rho {x!r}") from exc


def _int(x, what: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ParseError(f"{what} must be an integer, got {x!r}")
    return x


def _party_set(xs, what: str) -> frozenset:
    if not isinstance(xs, (list, tuple)):
        raise ParseError(f"{what} must be a list of party ids")
    return frozenset(_int(x, what) for x in xs)


def _seeds(x) -> tuple:
    if x is None:
        return (0,)
    if isinstance(x, int) and not isinstance(x, bool):
        return (x,)
    if isinstance(x, list):
        return tuple(_int(s, "seed") for s in x)
    if isinstance(x, dict) and set(x) <= {"start", "stop"}:
        return tuple(range(_int(x.get("start", 0), "seeds.start"), _int(x["stop"], "seeds.stop")))
    raise ParseError(f"cannot read seeds {x!r}")


def config_from_tree(tree: Any, check_adversary: bool = True) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from an already-parsed tree.

    ``check_adversary=False`` skips the strategy-name lookup, for rebuilding
    configs out of exported transcripts.
    """
    if not isinstance(tree, dict):
        raise ParseError("a scenario must be a mapping")
    unknown = sorted(set(map(str, tree)) - TOP_KEYS)
    if unknown:
        raise ParseError(f"unknown keys {unknown}")
    for key in ("protocol", "n", "rho"):
        if key not in tree:
            raise ParseError(f"missing required key {key!r}")
    protocol = tree["protocol"]
    if protocol not in PROTOCOLS:
        raise ParseError(f"unknown protocol {protocol!r}; expected one of {', '.join(PROTOCOLS)}")
    n = _int(tree["n"], "n")
    values = tuple(_int(v, "value") for v in tree.get("values", [0, 1]))
    leader = tree.get("leader")
    try:
        params = Params(
            n_total=n,
            rho=_parse_rho(tree["rho"]),
            protocol=protocol,
            delta=_int(tree.get("delta", 1), "delta"),
            leader=None if leader is None else _int(leader, "leader"),
            value_universe=values,
            fallback_duration=_int(tree.get("fallback_duration", 2), "fallback_duration"),
            sync_f=None if tree.get("sync_f") is None else _int(tree["sync_f"], "sync_f"),
        )
    except ValueError as exc:
        raise ValidationError([str(exc)]) from exc

    raw_inputs = tree.get("inputs", {})
    if isinstance(raw_inputs, dict):
        inputs = {_int(k if not isinstance(k, str) else int(k), "party"): v for k, v in raw_inputs.items()}
    elif isinstance(raw_inputs, int) and not isinstance(raw_inputs, bool):
        inputs = {q: raw_inputs for q in range(n)}
    else:
        raise ParseError("inputs must be a mapping or a single value")

    s = tree.get("schedule", {}) or {}
    if not isinstance(s, dict):
        raise ParseError("schedule must be a mapping")
    extra = sorted(set(s) - SCHEDULE_KEYS)
    if extra:
        raise ParseError(f"unknown schedule keys {extra}")
    awake = s.get("awake")
    schedule = ScheduleSpec(
        corrupt=_party_set(s.get("corrupt", []), "schedule.corrupt"),
        mode=str(s.get("mode", "dynamic")),
        awake=None if awake is None else tuple(_party_set(a, "schedule.awake") for a in awake),
        generator=str(s.get("generator", "explicit" if awake is not None else "all")),
        wake_all_from=None if s.get("wake_all_from") is None else _int(s["wake_all_from"], "wake_all_from"),
    )
    a = tree.get("adversary", {}) or {}
    if isinstance(a, str):
        a = {"name": a}
    adversary = AdversarySpec(name=str(a.get("name", "silent")), options=dict(a.get("options", {}) or {}))
    cfg = ScenarioConfig(
        params=params,
        inputs=inputs,
        schedule=schedule,
        adversary=adversary,
        t_max=None if tree.get("t_max") is None else _int(tree["t_max"], "t_max"),
        seeds=_seeds(tree.get("seeds")),
        name=str(tree.get("name", "scenario")),
        expect_violation=bool(tree.get("expect_violation", False)),
    )
    errors = validation_errors(cfg)
    from goodcase.adversaries import STRATEGIES  # late import: adversaries import machines

    if check_adversary and adversary.name not in STRATEGIES:
        errors.append(f"unknown adversary {adversary.name!r}")
    if errors:
        raise ValidationError(errors)
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    """Parse YAML text into a validated ScenarioConfig."""
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed scenario text: {exc}") from exc
    return config_from_tree(tree)


def parse_configs(text: str) -> list[ScenarioConfig]:
    """A file may hold one scenario or a list of them (or several YAML documents)."""
    try:
        docs = [d for d in yaml.safe_load_all(text) if d is not None]
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed scenario text: {exc}") from exc
    trees = []
    for d in docs:
        trees.extend(d if isinstance(d, list) else [d])
    return [config_from_tree(t) for t in trees]


def make_config(
    protocol: str,
    n: int,
    rho,
    inputs: Optional[dict] = None,
    corrupt=(),
    leader: Optional[PartyId] = None,
    awake=None,
    mode: str = "dynamic",
    adversary: str = "silent",
    options: Optional[dict] = None,
    t_max: Optional[int] = None,
    value: Value = 1,
    generator: Optional[str] = None,
    **param_kw,
) -> ScenarioConfig:
    """Programmatic shortcut used by tests and campaigns; validates like parse_config."""
    if leader is None and protocol in ("BBfp", "BBup", "BBsp"):
        leader = 0
    params = Params(n_total=n, rho=Fraction(rho), protocol=protocol, leader=leader, **param_kw)
    if inputs is None:
        inputs = {q: value for q in range(n)}
    schedule = ScheduleSpec(
        corrupt=frozenset(corrupt),
        mode=mode,
        awake=None if awake is None else tuple(frozenset(a) for a in awake),
        generator=generator or ("explicit" if awake is not None else "all"),
        wake_all_from=(options or {}).get("wake_all_from"),
    )
    cfg = ScenarioConfig(
        params=params,
        inputs=dict(inputs),
        schedule=schedule,
        adversary=AdversarySpec(adversary, dict(options or {})),
        t_max=t_max,
    )
    cfg.validate()
    return cfg

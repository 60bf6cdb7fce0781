"""Command-line scenario runner.

Verbs::

    goodcase run CONFIG [--seed S] [--t-max T] [--out DIR] [--expect-violation]
    goodcase suite [CONFIG ...] [--builtin NAME ...] [--runs N] [--jobs J] [--out DIR]
    goodcase replay TRANSCRIPT ...
    goodcase attack {appendix-g,exec12} [--n N] [--f F] [--n-p N] [--rho R] [--out DIR]
    goodcase thresholds

Output goes to --out, else $GOODCASE_OUT, else ./goodcase-out.  A run or
suite writes one JSONL transcript per (config, seed) under transcripts/,
plus reports.jsonl, summary.csv and latency.png.

Exit codes: 0 when every expectation is met, 1 on an unexpected property
violation (or a missing expected one, or a failed run), 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from goodcase.campaign import CAMPAIGN_RHO, evaluate, exhaustive_configs, fuzz_config, participation
from goodcase.config import (
    AdversarySpec,
    ParseError,
    ScenarioConfig,
    ScheduleSpec,
    ValidationError,
    config_from_tree,
    parse_configs,
)
from goodcase.core import CLAIMED_LATENCY, PROTOCOLS, Params, largest_below
from goodcase.simulator import RhoBoundViolated, load_transcript, run

OUT_ENV = "GOODCASE_OUT"
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2
CSV_COLUMNS = ("protocol", "n", "rho", "seed", "good_case", "latency", "violation")
CONFIG_ERRORS = (ParseError, ValidationError, RhoBoundViolated)


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "goodcase-out"))


# -- suite execution -----------------------------------------------------------

@dataclass
class RunResult:
    index: int
    name: str
    seed: int
    protocol: str
    transcript: Optional[str] = None
    hash: Optional[str] = None
    row: Optional[dict] = None
    record: Optional[dict] = None
    error: Optional[str] = None

    @property
    def violation(self) -> bool:
        return bool(self.row and self.row["violation"])


@dataclass
class SuiteSummary:
    results: list
    table: list
    expect_violation: bool = False
    out_dir: Optional[Path] = None

    @property
    def failed(self) -> list:
        return [r for r in self.results if r.error is not None]

    @property
    def violations(self) -> int:
        return sum(r.violation for r in self.results)

    @property
    def exit_code(self) -> int:
        if self.failed:
            return EXIT_VIOLATION
        if self.expect_violation:
            return EXIT_OK if self.violations else EXIT_VIOLATION
        return EXIT_VIOLATION if self.violations else EXIT_OK


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _execute(task: tuple) -> RunResult:
    """Run one (config, seed) and write its transcript; safe to call in a worker process."""
    index, cfg, seed, t_max, transcript_dir = task
    res = RunResult(index, cfg.name, seed, cfg.protocol)
    try:
        tr = run(cfg, seed, t_max=t_max)
        text = tr.export_jsonl()
        out = evaluate(tr, f"{cfg.name}:{seed}")
    except Exception as exc:  # reported as a failed run, not raised
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    path = Path(transcript_dir) / f"{index:05d}-{_slug(cfg.name)}-s{seed}.jsonl"
    path.write_text(text)
    res.transcript = str(path)
    res.hash = hashlib.sha256(text.encode()).hexdigest()
    res.row = out.row()
    res.record = {
        "name": cfg.name,
        "seed": seed,
        "transcript": path.name,
        "hash": res.hash,
        **out.row(),
        "problems": out.invariant_problems,
        "report": out.report.to_record(),
    }
    return res


def summary_table(rows: Iterable[dict]) -> list[dict]:
    """Per-protocol runs, violations and observed good-case latency against the claim."""
    acc: dict = {}
    for r in rows:
        s = acc.setdefault(r["protocol"], {"runs": 0, "good_case": 0, "violations": 0, "latencies": set()})
        s["runs"] += 1
        s["violations"] += int(r["violation"])
        if int(r["good_case"]) and r["latency"] not in ("", None):
            s["good_case"] += 1
            # runs outside the protocol's resilience say nothing about the claim
            if int(r.get("claim_applies", 1)):
                s["latencies"].add(int(r["latency"]))
    table = []
    for p in [p for p in PROTOCOLS if p in acc]:
        s = acc[p]
        lats = sorted(s["latencies"])
        table.append({
            "protocol": p,
            "runs": s["runs"],
            "good_case_runs": s["good_case"],
            "violations": s["violations"],
            "max_good_case_latency": lats[-1] if lats else None,
            "good_case_latencies": lats,
            "claimed": CLAIMED_LATENCY[p],
            "match": bool(lats) and lats == [CLAIMED_LATENCY[p]],
        })
    return table


def format_table(table: list[dict]) -> str:
    head = f"{'protocol':<9} {'runs':>7} {'good':>7} {'viol':>5} {'max T_gc':>8} {'claim':>5}  match"
    lines = [head, "-" * len(head)]
    for t in table:
        lat = "-" if t["max_good_case_latency"] is None else str(t["max_good_case_latency"])
        if not t["good_case_runs"]:
            match = "-"
        elif not t["good_case_latencies"]:
            match = "n/a"
        else:
            match = "yes" if t["match"] else "NO"
        lines.append(f"{t['protocol']:<9} {t['runs']:>7} {t['good_case_runs']:>7} {t['violations']:>5} "
                     f"{lat:>8} {t['claimed']:>5}  {match}")
    return "\n".join(lines)


def run_suite(
    configs: Iterable[ScenarioConfig],
    out_dir,
    jobs: int = 1,
    t_max: Optional[int] = None,
    seeds: Optional[Iterable[int]] = None,
    expect_violation: Optional[bool] = None,
    echo=print,
    per_run: bool = False,
) -> SuiteSummary:
    """Execute every (config, seed) pair and write transcripts, reports, CSV and figure.

    ``seeds`` overrides each config's own seed list.  ``expect_violation``
    defaults to whether any config is flagged as a counterexample.
    """
    configs = list(configs)
    out_dir = Path(out_dir)
    tdir = out_dir / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)
    seed_override = None if seeds is None else tuple(seeds)
    tasks = []
    for cfg in configs:
        for seed in seed_override or cfg.seeds or (0,):
            tasks.append((len(tasks), cfg, seed, t_max, str(tdir)))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    else:
        results = [_execute(t) for t in tasks]

    # merge single-threaded, in task order
    results.sort(key=lambda r: r.index)
    rows = [r.row for r in results if r.row is not None]
    with open(out_dir / "reports.jsonl", "w") as fh:
        for r in results:
            rec = r.record if r.error is None else {"name": r.name, "seed": r.seed, "error": r.error}
            fh.write(json.dumps(rec, sort_keys=True, default=str) + "\n")
    write_csv(rows, out_dir / "summary.csv")
    from goodcase.plotting import plot_latency

    plot_latency(rows, str(out_dir / "latency.png"))

    if expect_violation is None:
        expect_violation = any(c.expect_violation for c in configs)
    summary = SuiteSummary(results, summary_table(rows), expect_violation, out_dir)
    if per_run:
        for r in results:
            if r.error is None:
                lat = r.row["latency"] if r.row["latency"] != "" else "-"
                echo(f"{r.name} seed={r.seed} hash={r.hash[:16]} good_case={r.row['good_case']} "
                     f"latency={lat} violation={r.row['violation']}")
    echo(format_table(summary.table))
    for r in summary.failed:
        echo(f"FAILED {r.name} seed={r.seed}: {r.error}")
    for r in results:
        if r.violation:
            rep = r.record["report"]
            problems = [rep[k]["detail"] for k in ("agreement", "validity") if not rep[k]["passed"]]
            problems += r.record["problems"]
            echo(f"violation in {r.name} seed={r.seed}: {'; '.join(problems)}")
    verdict = "expected violation " + ("found" if summary.violations else "NOT found") if expect_violation else (
        f"{summary.violations} violation(s)")
    echo(f"{len(results)} runs, {verdict}; output in {out_dir}")
    return summary


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def summarize_transcripts(paths: Iterable) -> list[dict]:
    """CSV rows recomputed from exported transcript files alone."""
    rows = []
    for p in sorted(paths):
        tr = load_transcript(Path(p).read_text())
        rows.append(evaluate(tr).row())
    return rows


# -- built-in suites -------------------------------------------------------------

def good_case_configs(runs: int = 20, ns: Iterable[int] = range(3, 10)) -> list[ScenarioConfig]:
    """Each protocol at its campaign resilience with as many corrupt parties as
    allowed, a correct leader kept awake at round 0 and unanimous BA inputs."""
    out = []
    for protocol in PROTOCOLS:
        rho = CAMPAIGN_RHO[protocol]
        mode = participation(protocol)
        broadcast = protocol in ("BBfp", "BBup", "BBsp")
        for n in ns:
            k = largest_below(rho, n)
            params = Params(n_total=n, rho=rho, protocol=protocol, leader=0 if broadcast else None)
            start = params.fallback_start_round
            out.append(ScenarioConfig(
                params=params,
                inputs={0: 1} if broadcast else {q: 1 for q in range(n - k)},
                schedule=ScheduleSpec(
                    corrupt=frozenset(range(n - k, n)),
                    mode=mode,
                    generator="all" if mode == "static" else "random",
                    wake_all_from=None if mode != "dynamic" else start + 1,
                ),
                adversary=AdversarySpec("split", {"leader_awake_bias": 1}),
                seeds=tuple(range(runs)),
                name=f"good-case-{protocol}-n{n}",
            ))
    return out


def builtin_configs(name: str, runs: int = 20) -> list[ScenarioConfig]:
    from goodcase.adversaries.attacks import (
        Exec2Choice, appendix_g_executions, exec1_config, exec12_layout, exec2_config, exec2_search_space,
    )

    if name == "good-case":
        return good_case_configs(runs)
    if name == "fuzz":
        return [fuzz_config(p, s) for p in PROTOCOLS for s in range(runs)]
    if name == "exhaustive":
        return [c for p in PROTOCOLS for n in (3, 4, 5) for c in exhaustive_configs(p, n)]
    if name == "appendix-g":
        return [e.config for e in appendix_g_executions(6, 2)]
    if name == "appendix-g-unmodified":
        return [ScenarioConfig(**{**e.config.__dict__, "expect_violation": False})
                for e in appendix_g_executions(6, None)]
    if name == "exec12":
        lay = exec12_layout(20, Fraction(9, 20))
        cfgs = [exec1_config(lay)] + [exec2_config(lay, c) for c in exec2_search_space(lay)]
        return [ScenarioConfig(**{**c.__dict__, "expect_violation": True}) for c in cfgs]
    raise ParseError(f"unknown built-in suite {name!r}; expected one of {', '.join(BUILTINS)}")


BUILTINS = ("good-case", "fuzz", "exhaustive", "appendix-g", "appendix-g-unmodified", "exec12")


# -- verbs -----------------------------------------------------------------------

def load_config_files(paths: Iterable[str]) -> list[ScenarioConfig]:
    out = []
    for p in paths:
        out.extend(parse_configs(Path(p).read_text()))
    return out


def cmd_run(args) -> int:
    configs = load_config_files([args.config])
    seeds = None if args.seed is None else [args.seed]
    summary = run_suite(configs, args.out, jobs=args.jobs, t_max=args.t_max, seeds=seeds,
                        expect_violation=args.expect_violation or None, per_run=True)
    return summary.exit_code


def cmd_suite(args) -> int:
    configs = load_config_files(args.configs)
    for name in args.builtin or []:
        configs.extend(builtin_configs(name, args.runs))
    if not configs:
        raise ParseError("nothing to run: give config files or --builtin")
    seeds = None if args.seed is None else [args.seed]
    summary = run_suite(configs, args.out, jobs=args.jobs, t_max=args.t_max, seeds=seeds,
                        expect_violation=args.expect_violation or None)
    return summary.exit_code


def replay_file(path) -> tuple[bool, str, str, dict]:
    """Re-run the (config, seed) in an exported transcript: (identical, old hash, new hash, report)."""
    text = Path(path).read_text()
    first = json.loads(text.splitlines()[0])
    if first.get("event") != "header":
        raise ParseError(f"{path}: not a transcript export")
    head = first["data"]
    cfg = config_from_tree(head["config"])
    t_max = len({json.loads(line)["round"] for line in text.splitlines() if '"event":"awake"' in line}) - 1
    tr = run(cfg, head["seed"], t_max=t_max)
    old = hashlib.sha256(text.encode()).hexdigest()
    new = tr.hash()
    return old == new, old, new, evaluate(tr).report.to_record()


def cmd_replay(args) -> int:
    code = EXIT_OK
    for path in args.transcripts:
        try:
            same, old, new, report = replay_file(path)
        except (OSError, json.JSONDecodeError, KeyError, IndexError) as exc:
            raise ParseError(f"{path}: cannot read transcript ({exc})") from exc
        print(f"{path}: {'identical' if same else 'DIFFERS'} {new}")
        if not same:
            print(f"  recorded {old}")
            code = EXIT_VIOLATION
        print(json.dumps(report, sort_keys=True, default=str))
    return code


def cmd_attack(args) -> int:
    from goodcase.adversaries.attacks import NoViolation, run_appendix_g_suite, run_bb_execution12

    out = Path(args.out) / f"attack-{args.name}"
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.name == "appendix-g":
            *transcripts, report = run_appendix_g_suite(args.n, args.f, Fraction(args.rho or "2/5"))
            names = ("G1", "G2", "G3")
        else:
            t1, t2, report = run_bb_execution12(args.n_p, Fraction(args.rho or "9/20"))
            transcripts, names = (t1, t2), ("execution-1", "execution-2")
        found = True
    except NoViolation as exc:
        report = dict(exc.report)
        transcripts = [report.pop(k) for k in ("t1", "t2") if k in report]
        names = ("execution-1", "execution-2")
        found = False
    for name, tr in zip(names, transcripts):
        (out / f"{name}.jsonl").write_text(tr.export_jsonl())
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
    print(json.dumps(report, indent=2, sort_keys=True, default=str))
    print(f"violation {'found' if found else 'not found'}; output in {out}")
    if args.expect_violation:
        return EXIT_OK if found else EXIT_VIOLATION
    return EXIT_VIOLATION if found else EXIT_OK


def cmd_thresholds(args) -> int:
    for c in _thresholds(args.precision):
        lo, hi = c.bracket
        print(f"{c.name}: {c.equation}")
        print(f"  closed form  {c.closed_form} = {c.decimal}")
        print(f"  approx       {c.approx(3)}")
        print(f"  bracket      [{float(lo):.17g}, {float(hi):.17g}] (width {float(hi - lo):.1g})")
        print(f"  residual     {c.residual:.3g}")
    return EXIT_OK


def _thresholds(precision: int):
    from goodcase.properties import threshold_constants

    return threshold_constants(precision)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="goodcase", description="Sleepy-model good-case latency simulator.")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, expect=True):
        p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./goodcase-out)")
        if expect:
            p.add_argument("--expect-violation", action="store_true",
                           help="counterexample mode: succeed only if a violation occurs")

    p = sub.add_parser("run", help="run one config file (all its documents and seeds)")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="run only this seed")
    p.add_argument("--t-max", type=int, default=None, help="override the round horizon")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", help="run config files and/or built-in suites, print a summary table")
    p.add_argument("configs", nargs="*")
    p.add_argument("--builtin", action="append", choices=BUILTINS)
    p.add_argument("--runs", type=int, default=20, help="seeds per scenario for good-case and fuzz suites")
    p.add_argument("--seed", type=int, default=None, help="run only this seed of every config")
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("replay", help="re-run exported transcripts and compare hashes")
    p.add_argument("transcripts", nargs="+")
    p.set_defaults(func=cmd_replay, out=None)

    p = sub.add_parser("attack", help="run a scripted indistinguishability execution")
    p.add_argument("name", choices=("appendix-g", "exec12"))
    p.add_argument("--n", type=int, default=6, help="appendix-g: number of parties")
    p.add_argument("--f", type=int, default=None, help="appendix-g: SyncBA1 quorum parameter")
    p.add_argument("--n-p", type=int, default=20, help="exec12: parties in the target's view")
    p.add_argument("--rho", default=None, help="resilience as a fraction, e.g. 9/20")
    common(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("thresholds", help="print the two resilience threshold constants")
    p.add_argument("--precision", type=int, default=50, help="decimal digits")
    p.set_defaults(func=cmd_thresholds, out=None)
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "out", None) is None and args.verb not in ("replay", "thresholds"):
        args.out = default_out()
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        if isinstance(exc, ValidationError):
            print("configuration error:", file=sys.stderr)
            for e in exc.errors:
                print(f"  {e}", file=sys.stderr)
        else:
            print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

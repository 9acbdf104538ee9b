"""Command-line front end: scenario campaigns, sweeps, overhead comparison,
trace checking, bounded exploration and the live UDP demo.

Exit status: 0 when every verdict passes, 1 when a verdict fails, 2 on a
usage or scenario error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

from .channel import DROP_NEW, DROP_RANDOM_EXISTING, AdversaryPolicy
from .codec import CODES, CodecError, CodecParams, code_name
from .engine import (
    DEFAULT_WEIGHTS,
    ExecutionTrace,
    StopRule,
    check_legal_suffix,
    count_alpha_beta,
    hb_chain_weight,
    index_progression_violations,
    provenance_violations,
    run,
)
from .faults import Configuration, arbitrary_configuration, safe_configuration
from .protocol import EFFICIENT, FIRST_ATTEMPT, VARIANTS, ScriptedSource, SeededSource

log = logging.getLogger("s2arq")

OK, VERDICT_FAILED, USAGE = 0, 1, 2


class ScenarioError(ValueError):
    """Invalid scenario; the message starts with the offending field."""


# --------------------------------------------------------------------------
# scenario


@dataclass
class Bounds:
    fetches: int = 4
    deliveries: int = 4
    chain: int = 8


@dataclass
class Scenario:
    pl: int
    ml: int
    capacity: int
    variant: str = "efficient"
    code: str = "repetition"
    omission: float = 0.0
    duplication: float = 0.0
    drop_on_full: str = DROP_RANDOM_EXISTING
    fairness_k: Optional[int] = None
    seeds: list = field(default_factory=lambda: [0])
    start: str = "arbitrary"
    safe_index: int = 0
    config_file: Optional[str] = None
    budget: int = 1_000_000
    until_safe: bool = True
    fetches_after_safe: Optional[int] = None
    deliveries: Optional[int] = None
    batches: Optional[list] = None
    weights: dict = field(default_factory=dict)
    out_dir: Optional[str] = None
    traces: bool = False
    workers: int = 1
    bounds: Bounds = field(default_factory=Bounds)

    @property
    def params(self) -> CodecParams:
        return CodecParams(self.pl, self.ml, self.capacity, CODES[self.code])

    @property
    def policy(self) -> AdversaryPolicy:
        return AdversaryPolicy(self.omission, self.duplication, self.drop_on_full)


_SCHEMA = {
    "variant": str, "pl": int, "ml": int, "capacity": int, "code": str,
    "policy": dict, "fairness_k": (int, type(None)), "seeds": (list, dict),
    "start": str, "safe_index": int, "config_file": str, "budget": int,
    "stop": dict, "source": dict, "weights": dict, "output": dict, "workers": int,
    "bounds": dict,
}
_POLICY_KEYS = {"omission", "duplication", "drop_on_full"}
_STOP_KEYS = {"until_safe", "fetches_after_safe", "deliveries"}
_SOURCE_KEYS = {"kind", "batches"}
_OUTPUT_KEYS = {"dir", "traces"}
_BOUND_KEYS = {"fetches", "deliveries", "chain"}


def _expect(cond: bool, path: str, msg: str):
    if not cond:
        raise ScenarioError(f"{path}: {msg}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _no_unknown(d: dict, allowed, path: str):
    extra = sorted(set(d) - set(allowed))
    _expect(not extra, f"{path}.{extra[0]}" if extra else path, "unknown key")


def parse_scenario(d: dict) -> Scenario:
    """Validate a scenario document; errors name the offending field."""
    _expect(isinstance(d, dict), "scenario", "must be an object")
    _no_unknown(d, _SCHEMA, "scenario")
    for key, typ in _SCHEMA.items():
        if key in d:
            ok = isinstance(d[key], typ) and not (typ is int and isinstance(d[key], bool))
            _expect(ok, f"scenario.{key}", f"wrong type {type(d[key]).__name__}")
    for key in ("pl", "ml", "capacity"):
        _expect(key in d, f"scenario.{key}", "required")
    _expect(d["pl"] >= 1, "scenario.pl", "must be >= 1")
    _expect(d["ml"] >= 1, "scenario.ml", "must be >= 1")
    _expect(d["capacity"] >= 0, "scenario.capacity", "must be >= 0")
    s = Scenario(d["pl"], d["ml"], d["capacity"])
    s.variant = d.get("variant", s.variant)
    _expect(s.variant in VARIANTS, "scenario.variant", f"must be one of {sorted(VARIANTS)}")
    s.code = d.get("code", s.code)
    _expect(s.code in CODES, "scenario.code", f"must be one of {sorted(CODES)}")
    try:
        s.params
    except CodecError as e:
        raise ScenarioError(f"scenario.ml: {e}") from None

    pol = d.get("policy", {})
    _no_unknown(pol, _POLICY_KEYS, "scenario.policy")
    for key in ("omission", "duplication"):
        v = pol.get(key, 0.0)
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and 0.0 <= v <= 1.0,
                f"scenario.policy.{key}", "must be a rate in [0, 1]")
        setattr(s, key, float(v))
    s.drop_on_full = pol.get("drop_on_full", s.drop_on_full)
    _expect(s.drop_on_full in (DROP_NEW, DROP_RANDOM_EXISTING), "scenario.policy.drop_on_full",
            f"must be {DROP_NEW!r} or {DROP_RANDOM_EXISTING!r}")
    s.fairness_k = d.get("fairness_k")
    _expect(s.fairness_k is None or s.fairness_k >= 1, "scenario.fairness_k", "must be >= 1")

    seeds = d.get("seeds", [0])
    if isinstance(seeds, dict):
        _no_unknown(seeds, {"start", "count"}, "scenario.seeds")
        start, count = seeds.get("start", 0), seeds.get("count")
        _expect(_is_int(start), "scenario.seeds.start", "must be an int")
        _expect(_is_int(count) and count >= 1, "scenario.seeds.count", "must be an int >= 1")
        seeds = list(range(start, start + count))
    _expect(seeds and all(_is_int(x) for x in seeds), "scenario.seeds", "must be a non-empty list of ints")
    s.seeds = seeds

    s.start = d.get("start", s.start)
    _expect(s.start in ("safe", "arbitrary", "file"), "scenario.start", "must be safe, arbitrary or file")
    s.safe_index = d.get("safe_index", 0)
    _expect(s.safe_index in (0, 1, 2), "scenario.safe_index", "must be 0, 1 or 2")
    s.config_file = d.get("config_file")
    if s.start == "file":
        _expect(s.config_file is not None, "scenario.config_file", "required when start is file")
    s.budget = d.get("budget", s.budget)
    _expect(s.budget >= 1, "scenario.budget", "must be >= 1")

    stop = d.get("stop", {})
    _no_unknown(stop, _STOP_KEYS, "scenario.stop")
    s.until_safe = stop.get("until_safe", s.start == "arbitrary")
    _expect(isinstance(s.until_safe, bool), "scenario.stop.until_safe", "must be a bool")
    for key in ("fetches_after_safe", "deliveries"):
        v = stop.get(key)
        _expect(v is None or (_is_int(v) and v >= 1), f"scenario.stop.{key}", "must be null or an int >= 1")
        setattr(s, key, v)

    src = d.get("source", {"kind": "seeded"})
    _no_unknown(src, _SOURCE_KEYS, "scenario.source")
    kind = src.get("kind", "seeded")
    _expect(kind in ("seeded", "scripted"), "scenario.source.kind", "must be seeded or scripted")
    if kind == "scripted":
        batches = src.get("batches")
        size = VARIANTS[s.variant].batch_size(s.params)
        _expect(isinstance(batches, list) and batches, "scenario.source.batches", "must be a non-empty list")
        for i, b in enumerate(batches):
            ok = (isinstance(b, list) and len(b) == size
                  and all(isinstance(m, list) and len(m) == s.ml and all(x in (0, 1) for x in m) for m in b))
            _expect(ok, f"scenario.source.batches[{i}]", f"must hold {size} messages of {s.ml} bits")
        s.batches = batches

    s.weights = d.get("weights", {})
    _no_unknown(s.weights, DEFAULT_WEIGHTS, "scenario.weights")
    for key, v in s.weights.items():
        _expect(isinstance(v, (int, float)) and v > 0, f"scenario.weights.{key}", "must be > 0")

    out = d.get("output", {})
    _no_unknown(out, _OUTPUT_KEYS, "scenario.output")
    s.out_dir = out.get("dir")
    s.traces = bool(out.get("traces", False))
    s.workers = d.get("workers", 1)
    _expect(s.workers >= 1, "scenario.workers", "must be >= 1")

    b = d.get("bounds", {})
    _no_unknown(b, _BOUND_KEYS, "scenario.bounds")
    for key, v in b.items():
        _expect(_is_int(v) and v >= 0, f"scenario.bounds.{key}", "must be an int >= 0")
    s.bounds = Bounds(**{**asdict(Bounds()), **b})
    return s


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario: not valid JSON ({e})") from None
    return parse_scenario(doc)


# --------------------------------------------------------------------------
# campaigns


def start_for(s: Scenario, seed: int) -> Configuration:
    variant = VARIANTS[s.variant]
    if s.start == "safe":
        return safe_configuration(s.safe_index, s.params, variant=variant)
    if s.start == "file":
        with open(s.config_file) as fh:
            return Configuration.from_dict(json.load(fh))
    return arbitrary_configuration(seed, s.params, variant)


def analyze_trace(t: ExecutionTrace, bounds: Bounds = Bounds(), expect_clean: bool = False,
                  require_safe: bool = False) -> dict:
    """Per-run summary record with its list of failed verdicts.

    Everything is recomputed from the trace, so ``check`` on a saved trace
    yields the same record as the live campaign.
    """
    rec = {
        "seed": t.seed, "variant": t.variant, "steps": len(t), "complete": t.complete,
        "end_reason": t.end_reason, "first_safe": t.first_safe,
        "fetches": len(t.fetch_events), "deliveries": len(t.deliver_events),
        "packets_sent": t.packets_sent,
        "packets_per_batch": (t.packets_sent / len(t.deliver_events)) if t.deliver_events else None,
    }
    failures = []
    if t.variant == EFFICIENT.name:
        ab = count_alpha_beta(t)
        end = t.first_safe if t.first_safe is not None else len(t)
        rec.update(
            fetches_before_safe=ab.fetches,
            deliveries_before_safe=ab.deliveries,
            chain=hb_chain_weight(t, 0, end),
            chain_all_receptions=hb_chain_weight(t, 0, end, effective_only=False),
        )
        if require_safe and t.first_safe is None:
            failures.append("not-converged")
        if ab.fetches > bounds.fetches:
            failures.append("fetch-bound")
        if ab.deliveries > bounds.deliveries:
            failures.append("delivery-bound")
        if rec["chain"] > bounds.chain:
            failures.append("chain-bound")
        if t.first_safe is not None:
            prog = index_progression_violations(t, t.first_safe)
            lem = provenance_violations(t, t.first_safe)
            unsafe = [g for g in t.guard_checks if not g.is_safe]
            rec.update(progression_violations=len(prog), provenance_violations=len(lem),
                       unsafe_guard_fires=len(unsafe))
            if prog:
                failures.append("index-progression")
            if lem:
                failures.append("provenance")
            if unsafe:
                failures.append("closure")
    ls = check_legal_suffix(t)
    rec.update(legal_suffix=ls.verdict, legal_suffix_k=ls.k)
    if ls.verdict == "fail":
        failures.append("legal-suffix")
    if expect_clean and ls.k not in (None, 0):
        failures.append("legal-suffix-k")
    rec["failures"] = failures
    return rec


def _run_one(args) -> dict:
    s, seed = args
    variant = VARIANTS[s.variant]
    params = s.params
    source = ScriptedSource(s.batches) if s.batches else SeededSource(params.ml, seed)
    stop = StopRule(until_safe=s.until_safe and variant is EFFICIENT,
                    fetches_after_safe=s.fetches_after_safe, deliveries=s.deliveries)
    policy = AdversaryPolicy(s.omission, s.duplication, s.drop_on_full, seed)
    t = run(start_for(s, seed), seed, s.budget, params, policy, source, stop,
            s.weights, s.fairness_k)
    rec = analyze_trace(t, s.bounds, expect_clean=s.start == "safe",
                        require_safe=s.until_safe and variant is EFFICIENT)
    if s.out_dir and s.traces:
        path = os.path.join(s.out_dir, f"trace-{seed}.jsonl")
        t.dump(path)
        rec["trace"] = path
    return rec


def summarize(records: list[dict]) -> dict:
    def mx(key):
        vals = [r[key] for r in records if r.get(key) is not None]
        return max(vals) if vals else None

    per_batch = [r["packets_per_batch"] for r in records if r["packets_per_batch"] is not None]
    converged = sum(1 for r in records if r["first_safe"] is not None)
    return {
        "runs": len(records),
        "converged": converged,
        "convergence_rate": converged / len(records) if records else 0.0,
        "incomplete": sum(1 for r in records if not r["complete"]),
        "max_fetches_before_safe": mx("fetches_before_safe"),
        "max_deliveries_before_safe": mx("deliveries_before_safe"),
        "max_chain": mx("chain"),
        "max_chain_all_receptions": mx("chain_all_receptions"),
        "legal_suffix": {v: sum(1 for r in records if r["legal_suffix"] == v) for v in ("pass", "fail", "n/a")},
        "packets_per_batch": sum(per_batch) / len(per_batch) if per_batch else None,
        "failed_runs": [r["seed"] for r in records if r["failures"]],
    }


def run_scenario(s: Scenario) -> dict:
    if s.out_dir:
        os.makedirs(s.out_dir, exist_ok=True)
    jobs = [(s, seed) for seed in s.seeds]
    if s.workers > 1:
        with ProcessPoolExecutor(s.workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * s.workers))))
    else:
        records = [_run_one(j) for j in jobs]
    summary = summarize(records)
    if s.out_dir:
        with open(os.path.join(s.out_dir, "runs.jsonl"), "w") as fh:
            for r in records:
                fh.write(json.dumps(r) + "\n")
        with open(os.path.join(s.out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
        with open(os.path.join(s.out_dir, "summary.txt"), "w") as fh:
            fh.write(format_summary(summary) + "\n")
    summary["records"] = records
    return summary


def format_summary(summary: dict) -> str:
    rows = [(k, summary[k]) for k in (
        "runs", "converged", "convergence_rate", "incomplete", "max_fetches_before_safe",
        "max_deliveries_before_safe", "max_chain", "max_chain_all_receptions",
        "legal_suffix", "packets_per_batch")]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
    failed = summary["failed_runs"]
    lines.append(f"{'failed runs'.ljust(width)}  {len(failed)}" + (f"  e.g. seeds {failed[:10]}" if failed else ""))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# overhead comparison


def compare_overhead(grid: list[tuple[int, int]], code: str = "bch", deliveries: int = 20,
                     policy: AdversaryPolicy = AdversaryPolicy(), seed: int = 0,
                     budget: int = 2_000_000) -> list[dict]:
    """Packets per delivered message for both variants at each (ml, capacity) point.

    Packets carry the same number of bits in both variants (``pl = ml``), so
    the per-round cost of the efficient protocol is ``n / pl`` packets per
    message against ``2*capacity + 1`` for the first attempt.  The measured
    columns include every retransmission of a simulated clean-start run.
    """
    if not grid:
        raise ValueError("grid must not be empty")
    rows = []
    for ml, c in grid:
        params = CodecParams(ml, ml, c, CODES[code])
        row = {"ml": ml, "capacity": c, "code": code, "n": params.n,
               "efficient_per_round": params.n / params.pl,
               "first_attempt_per_round": float(FIRST_ATTEMPT.labels(params))}
        for variant, key, per_delivery in ((EFFICIENT, "efficient_measured", params.pl),
                                           (FIRST_ATTEMPT, "first_attempt_measured", 1)):
            need = deliveries if variant is EFFICIENT else deliveries * params.pl
            t = run(safe_configuration(0, params, variant=variant), seed, budget, params, policy,
                    SeededSource(ml, seed), StopRule(deliveries=need))
            msgs = len(t.deliver_events) * per_delivery
            row[key] = t.packets_sent / msgs if msgs else None
        rows.append(row)
    return rows


def overhead_decreases(rows: list[dict]) -> bool:
    """Efficient per-round cost strictly falls with ml at every capacity > 0."""
    by_c: dict = {}
    for r in sorted(rows, key=lambda r: r["ml"]):
        by_c.setdefault(r["capacity"], []).append(r["efficient_per_round"])
    return all(all(a > b for a, b in zip(v, v[1:])) for c, v in by_c.items() if c > 0)


def format_overhead(rows: list[dict]) -> str:
    head = ["ml", "capacity", "code", "n", "eff/round", "fa/round", "eff measured", "fa measured"]
    lines = ["  ".join(f"{h:>12}" for h in head)]
    for r in rows:
        vals = [r["ml"], r["capacity"], r["code"], r["n"], r["efficient_per_round"],
                r["first_attempt_per_round"], r["efficient_measured"], r["first_attempt_measured"]]
        lines.append("  ".join(f"{v:>12.3f}" if isinstance(v, float) else f"{v!s:>12}" for v in vals))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# argument handling


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from None


def _seed_range(text: str) -> list[int]:
    try:
        if ":" in text:
            a, b = text.split(":")
            return list(range(int(a), int(b)))
        return [int(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP or an int, got {text!r}") from None


def _endpoint(text: str) -> tuple:
    host, _, port = text.rpartition(":")
    try:
        return (host or "127.0.0.1", int(port))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}") from None


def _add_params(p: argparse.ArgumentParser, pl=2, ml=2, capacity=1):
    p.add_argument("--pl", type=int, default=pl)
    p.add_argument("--ml", type=int, default=ml)
    p.add_argument("--capacity", type=int, default=capacity)
    p.add_argument("--code", choices=sorted(CODES), default="repetition")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="efficient")


def _add_policy(p: argparse.ArgumentParser):
    p.add_argument("--omission", type=float, default=0.0)
    p.add_argument("--duplication", type=float, default=0.0)
    p.add_argument("--drop-on-full", choices=(DROP_NEW, DROP_RANDOM_EXISTING), default=DROP_RANDOM_EXISTING)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="s2arq", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", help="output directory (overrides the scenario)")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--budget", type=int, help="step budget (overrides the scenario)")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("sweep", help="arbitrary-start convergence sweep over a seed range")
    _add_params(p)
    _add_policy(p)
    p.add_argument("--seeds", type=_seed_range, default=list(range(100)), help="START:STOP")
    p.add_argument("--budget", type=int, default=1_000_000)
    p.add_argument("--after-safe", type=int, default=None, help="keep running for this many fetches after safety")
    p.add_argument("--out")
    p.add_argument("--traces", action="store_true")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("compare", help="packets per delivered message, first attempt vs efficient")
    p.add_argument("--mls", type=_int_list, default=[2, 4, 8, 16])
    p.add_argument("--capacities", type=_int_list, default=[0, 1, 2])
    p.add_argument("--code", choices=sorted(CODES), default="bch")
    p.add_argument("--deliveries", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _add_policy(p)
    p.add_argument("--csv", help="also write the table as CSV")

    p = sub.add_parser("check", help="validate a trace file against the invariant suite")
    p.add_argument("trace")
    p.add_argument("--clean", action="store_true", help="the run started safe; require k = 0")

    p = sub.add_parser("explore", help="exhaustive bounded schedule exploration (capacity 1)")
    p.add_argument("--depth", type=int, default=14)
    p.add_argument("--fa-depth", type=int, default=0, help="also explore the first-attempt variant to this depth")
    p.add_argument("--seeds-per-mode", type=int, default=200)

    p = sub.add_parser("plot", help="render a compare CSV as a PNG (needs matplotlib)")
    p.add_argument("csv")
    p.add_argument("png")

    p = sub.add_parser("proxy", help="UDP impairment proxy")
    p.add_argument("--sender-side", type=_endpoint, required=True, help="port the sender sends to")
    p.add_argument("--receiver-side", type=_endpoint, required=True, help="port the receiver sends to")
    p.add_argument("--sender", type=_endpoint, required=True, help="sender address")
    p.add_argument("--receiver", type=_endpoint, required=True, help="receiver address")
    p.add_argument("--capacity", type=int, default=1)
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    _add_policy(p)

    for role in ("send", "receive"):
        p = sub.add_parser(role, help=f"live {role}er process")
        _add_params(p)
        p.add_argument("--bind", type=_endpoint, required=True)
        p.add_argument("--peer", type=_endpoint, required=True)
        p.add_argument("--tick-ms", type=float, default=10.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--log", help="event log (JSONL) for replay")
        p.add_argument("--start", choices=("clean", "arbitrary"), default="clean")
        p.add_argument("--max-seconds", type=float, default=120.0)
        if role == "send":
            p.add_argument("--messages", help="JSON file with a list of batches")
            p.add_argument("--count", type=int, default=100, help="seeded batches when no file is given")
        else:
            p.add_argument("--idle", type=float, default=2.0, help="exit after this long without traffic")
            p.add_argument("--deliveries-out", help="write delivered batches (JSON)")

    p = sub.add_parser("replay", help="replay a live event log through the step functions")
    p.add_argument("logs", nargs="+")
    return ap


def _cmd_run(a) -> int:
    s = load_scenario(a.scenario)
    if a.out:
        s.out_dir = a.out
    if a.seed is not None:
        s.seeds = [a.seed]
    if a.budget is not None:
        s.budget = a.budget
    if a.workers:
        s.workers = a.workers
    summary = run_scenario(s)
    print(format_summary(summary))
    return VERDICT_FAILED if summary["failed_runs"] else OK


def _cmd_sweep(a) -> int:
    doc = {
        "variant": a.variant, "pl": a.pl, "ml": a.ml, "capacity": a.capacity, "code": a.code,
        "policy": {"omission": a.omission, "duplication": a.duplication, "drop_on_full": a.drop_on_full},
        "seeds": a.seeds, "start": "arbitrary", "budget": a.budget,
        "stop": {"until_safe": True, "fetches_after_safe": a.after_safe},
        "output": {"dir": a.out, "traces": a.traces}, "workers": a.workers,
    }
    summary = run_scenario(parse_scenario(doc))
    print(format_summary(summary))
    return VERDICT_FAILED if summary["failed_runs"] else OK


def _cmd_compare(a) -> int:
    grid = [(ml, c) for c in a.capacities for ml in a.mls]
    for ml, c in grid:
        try:
            CodecParams(ml, ml, c, CODES[a.code])
        except CodecError as e:
            raise ScenarioError(f"grid point ml={ml} capacity={c}: {e}") from None
    rows = compare_overhead(grid, a.code, a.deliveries,
                            AdversaryPolicy(a.omission, a.duplication, a.drop_on_full, a.seed), a.seed)
    print(format_overhead(rows))
    if a.csv:
        with open(a.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    ok = overhead_decreases(rows)
    print("efficient per-message cost decreases with ml:", "yes" if ok else "NO")
    return OK if ok else VERDICT_FAILED


def _cmd_check(a) -> int:
    t = ExecutionTrace.load(a.trace)
    rec = analyze_trace(t, expect_clean=a.clean)
    print(json.dumps(rec, indent=2))
    return VERDICT_FAILED if rec["failures"] else OK


def _cmd_explore(a) -> int:
    from .explore import coverage_starts, explore_first_attempt, explore_many

    params = CodecParams(1, 1, 1)
    starts = coverage_starts(params, a.seeds_per_mode)
    res = explore_many(starts, params, a.depth)
    print(f"starts {res.starts}  states {res.states}  max fetches {res.max_fetches}  "
          f"max deliveries {res.max_deliveries}  max chain {res.max_chain}  violations {len(res.violations)}")
    bad = len(res.violations)
    if a.fa_depth:
        for y in (0, 1, 2):
            fa = explore_first_attempt(params, a.fa_depth, ((0,), (1,), (1,)), y)
            print(f"first attempt from index {y}: states {fa.states}  deliveries {fa.max_deliveries}  "
                  f"violations {len(fa.violations)}")
            bad += len(fa.violations)
    return VERDICT_FAILED if bad else OK


def _cmd_plot(a) -> int:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("plot needs matplotlib", file=sys.stderr)
        return USAGE
    with open(a.csv) as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in sorted({r["capacity"] for r in rows}, key=int):
        sel = sorted((r for r in rows if r["capacity"] == c), key=lambda r: int(r["ml"]))
        xs = [int(r["ml"]) for r in sel]
        ax.plot(xs, [float(r["efficient_per_round"]) for r in sel], "o-", label=f"efficient c={c}")
        ax.plot(xs, [float(r["first_attempt_per_round"]) for r in sel], "s--", label=f"first attempt c={c}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("message length ml (bits)")
    ax.set_ylabel("packets per message per round")
    ax.legend()
    fig.tight_layout()
    fig.savefig(a.png)
    return OK


def _cmd_live(a) -> int:
    from .transport import Endpoint, Proxy, run_receiver, run_sender

    if a.cmd == "proxy":
        Proxy(a.sender_side, a.receiver_side, a.sender, a.receiver, max(a.capacity, 1),
              AdversaryPolicy(a.omission, a.duplication, a.drop_on_full, a.seed)).serve(a.seconds)
        return OK
    try:
        params = CodecParams(a.pl, a.ml, a.capacity, CODES[a.code])
    except CodecError as e:
        raise ScenarioError(str(e)) from None
    ep = Endpoint("sender" if a.cmd == "send" else "receiver", params, a.bind, a.peer,
                  VARIANTS[a.variant], a.tick_ms / 1000.0, a.seed, a.log,
                  max_seconds=a.max_seconds)
    if a.cmd == "send":
        batches = None
        if a.messages:
            with open(a.messages) as fh:
                batches = json.load(fh)
        proc = run_sender(ep, batches, a.count, a.start)
        return OK if proc.done else VERDICT_FAILED
    ep.idle_timeout = a.idle
    proc = run_receiver(ep, a.start)
    if a.deliveries_out:
        with open(a.deliveries_out, "w") as fh:
            json.dump([[list(m) for m in b] for b in proc.delivered], fh)
    print(f"delivered {len(proc.delivered)} batches")
    return OK


def _cmd_replay(a) -> int:
    from .transport import load_log, replay_log

    bad = 0
    for path in a.logs:
        problems = replay_log(load_log(path))
        print(f"{path}: {'identical' if not problems else f'{len(problems)} mismatches'}")
        for p in problems[:5]:
            print("  " + p)
        bad += bool(problems)
    return VERDICT_FAILED if bad else OK


COMMANDS = {
    "run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare, "check": _cmd_check,
    "explore": _cmd_explore, "plot": _cmd_plot, "proxy": _cmd_live, "send": _cmd_live,
    "receive": _cmd_live, "replay": _cmd_replay,
}


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.cmd](a)
    except (ScenarioError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: ``search``, ``filter``, ``sample-dpp`` and ``analyze``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Errors are reported on stderr as a single ``error: <kind>: <message>`` line.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import metrics
from .candidates import CandidateSource, group_candidates, read_benchmark, read_candidates, write_candidates
from .dpp import (
    MAX_ORACLE_ORDER,
    Kernel,
    eigendecompose,
    empirical_pmf,
    esp_table,
    exact_k_dpp_pmf,
    sample_k_dpp,
    total_variation,
)
from .embed import ProviderConfig, make_provider
from .errors import DivproveError, InvalidDataError, InvalidInputError, ParseError, RankDeficientError
from .filter import FilterConfig, ScoredTactic, dedup_indices, score, select_indices
from .search import AttemptReport, ProofTree, ReplayEnvironment, SearchBudget, best_first_search, verify_proof
from .synthetic import SyntheticWorld
from .transitions import TransitionLog, read_log, write_log

log = logging.getLogger("divprove")

ENV_OUTPUT_DIR = "DIVPROVE_OUTPUT_DIR"
ENV_JOBS = "DIVPROVE_JOBS"


class UsageError(DivproveError):
    """Bad flags, config values or input files (exit status 2)."""


class RuntimeFailure(DivproveError):
    """Failure after inputs were accepted (exit status 1)."""


@dataclass
class RunConfig:
    benchmark: str | None = None
    strategy: str = "dpp"
    k: int = 8
    lambda_s: float = 0.0
    lambda_tau: float = 0.0
    theta: float = 1.0
    n_candidates: int = 64
    attempts: int = 1
    seed: int = 0
    timeout_s: float = 600.0
    max_expansions: int | None = None
    live_time: bool = False
    provider: dict | None = None
    environment: dict = field(default_factory=lambda: {"kind": "synthetic"})
    output_dir: str = "divprove-run"
    jobs: int = 1

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.k, self.lambda_s, self.lambda_tau, self.theta, self.strategy)

    def validate(self) -> None:
        try:
            self.filter_config()
            SearchBudget(self.timeout_s, self.max_expansions, self.live_time)
        except InvalidInputError as exc:
            raise UsageError(str(exc)) from exc
        for name in ("attempts", "n_candidates", "jobs"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise UsageError(f"{name} must be a positive integer, got {v!r}")
        if self.benchmark is not None and not Path(self.benchmark).is_file():
            raise UsageError(f"benchmark file not found: {self.benchmark}")
        kind = self.environment.get("kind")
        if kind not in ("synthetic", "replay"):
            raise UsageError(f"environment.kind must be 'synthetic' or 'replay', got {kind!r}")
        if kind == "replay":
            for key in ("log", "candidates"):
                p = self.environment.get(key)
                if not p or not Path(p).is_file():
                    raise UsageError(f"replay environment needs an existing '{key}' file")
            if self.benchmark is None:
                raise UsageError("replay runs need a benchmark file")


def _add_filter_flags(p):
    p.add_argument("--k", type=int, help="filter size K")
    p.add_argument("--lambda-s", type=float, dest="lambda_s", help="error weight")
    p.add_argument("--lambda-tau", type=float, dest="lambda_tau", help="time weight")
    p.add_argument("--theta", type=float, help="logit temperature")
    p.add_argument("--strategy", choices=["dpp", "topk", "random"])
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divprove", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run best-first proof search over a benchmark")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--benchmark")
    _add_filter_flags(p)
    p.add_argument("--timeout", type=float, dest="timeout_s")
    p.add_argument("--attempts", type=int)
    p.add_argument("--n-candidates", type=int, dest="n_candidates")
    p.add_argument("--max-expansions", type=int, dest="max_expansions")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("filter", help="filter a candidate-tactic file")
    p.add_argument("candidates")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config (same keys as search)")
    _add_filter_flags(p)
    p.add_argument("--provider", choices=["hashstub", "file", "remote"],
                   help="embed candidates that carry no embedding")
    p.add_argument("--provider-source")
    p.add_argument("--dim", type=int)

    p = sub.add_parser("sample-dpp", help="draw subsets from a k-DPP kernel file")
    p.add_argument("kernel")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-samples", type=int, default=1, dest="n_samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--exact", action="store_true",
                   help=f"also write the exact pmf and TV distance (N <= {MAX_ORACLE_ORDER})")

    p = sub.add_parser("analyze", help="compute metrics from transition logs")
    p.add_argument("logs", nargs="*")
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--table", help="plain-text table path (default: stdout)")
    p.add_argument("--reports", nargs="*", default=[], help="attempt report JSON files")
    return parser


def _load_config(args) -> RunConfig:
    obj = {}
    if getattr(args, "config", None):
        try:
            obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
    cfg = RunConfig.from_dict(obj)
    if os.environ.get(ENV_OUTPUT_DIR):
        cfg.output_dir = os.environ[ENV_OUTPUT_DIR]
    if os.environ.get(ENV_JOBS):
        try:
            cfg.jobs = int(os.environ[ENV_JOBS])
        except ValueError as exc:
            raise UsageError(f"{ENV_JOBS} must be an integer") from exc
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    return cfg


# ---- search ----------------------------------------------------------------

def _attempt_rng(seed, goal_index, attempt):
    return np.random.default_rng(np.random.SeedSequence([seed, goal_index, attempt]))


def _setup_search(cfg: RunConfig):
    env_cfg = dict(cfg.environment)
    kind = env_cfg.pop("kind")
    if kind == "synthetic":
        env_cfg.setdefault("seed", cfg.seed)
        env_cfg.setdefault("n_candidates", cfg.n_candidates)
        try:
            world = SyntheticWorld(**env_cfg)
        except TypeError as exc:
            raise UsageError(f"bad synthetic environment config: {exc}") from exc
        goals = (read_benchmark(cfg.benchmark) if cfg.benchmark
                 else [(g, g) for g in world.root_goals])
        env, source, provider = world.env, world.source, world.provider
    else:
        goals = read_benchmark(cfg.benchmark)
        env = ReplayEnvironment(read_log(env_cfg["log"]))
        source = CandidateSource(read_candidates(env_cfg["candidates"]),
                                 {text: gid for gid, text in goals})
        provider = source
    if cfg.provider:
        provider = make_provider(ProviderConfig(**cfg.provider))
    if not goals:
        raise UsageError("benchmark is empty")
    return goals, env, source, provider


def cmd_search(cfg: RunConfig) -> dict:
    cfg.validate()
    try:
        goals, env, source, provider = _setup_search(cfg)
    except (InvalidInputError, InvalidDataError, ParseError) as exc:
        raise UsageError(str(exc)) from exc
    out = Path(cfg.output_dir)
    (out / "transitions").mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    fcfg = cfg.filter_config()
    budget = SearchBudget(cfg.timeout_s, cfg.max_expansions, cfg.live_time)

    def run(job):
        gi, a = job
        goal_id, goal_text = goals[gi]
        _, report, tlog = best_first_search(
            goal_text, source, fcfg, provider, env, budget, _attempt_rng(cfg.seed, gi, a),
            goal_id=goal_id, attempt_id=f"{goal_id}/a{a}", n_candidates=cfg.n_candidates)
        return report, tlog

    jobs = [(gi, a) for gi in range(len(goals)) for a in range(cfg.attempts)]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    merged = TransitionLog()
    proved: dict[str, list[bool]] = {gid: [] for gid, _ in goals}
    failures = []
    for (gi, a), (report, tlog) in zip(jobs, results):
        goal_id = goals[gi][0]
        stem = f"{_safe(goal_id)}.a{a}"
        write_log(out / "transitions" / f"{stem}.jsonl", tlog)
        (out / "reports" / f"{stem}.json").write_text(report.to_json() + "\n", encoding="utf-8")
        merged.extend(tlog)
        proved[goal_id].append(report.proved)
        if report.stop_reason == "aborted":
            failures.append(f"{goal_id}/a{a}: {report.error}")
    write_log(out / "transitions.jsonl", merged)
    rows = list(proved.values())
    summary = {
        "config": asdict(cfg),
        "n_goals": len(goals),
        "attempts": cfg.attempts,
        "pass@1": metrics.pass_at_k(rows, 1),
        f"pass@{cfg.attempts}": metrics.pass_at_k(rows, cfg.attempts),
        "proved": proved,
        "metrics": metrics.summarize(merged) if len(merged) else None,
        "failures": failures,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
    if failures:
        raise RuntimeFailure(f"{len(failures)} attempt(s) aborted; first: {failures[0]}")
    return summary


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


# ---- filter ----------------------------------------------------------------

def cmd_filter(candidates_path, out_path, cfg: RunConfig, provider_cfg: ProviderConfig | None = None):
    try:
        fcfg = cfg.filter_config()
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc
    try:
        cands = read_candidates(candidates_path)
    except FileNotFoundError as exc:
        raise UsageError(f"candidate file not found: {candidates_path}") from exc
    except (ParseError, InvalidDataError) as exc:
        raise UsageError(str(exc)) from exc
    provider = make_provider(provider_cfg) if provider_cfg else None
    selected_rows = []
    for gi, (goal_id, group) in enumerate(group_candidates(cands).items()):
        missing = [c for c in group if c.embedding is None]
        if missing:
            if provider is None:
                raise UsageError(f"goal {goal_id!r}: candidates lack embeddings and no provider given")
            goal_text = group[0].goal_text or goal_id
            for c, r in zip(missing, provider.embed(goal_id, goal_text, [c.text for c in missing])):
                c.embedding, c.pred_success, c.pred_time = r.embedding, r.pred_success, r.pred_time
        keep = dedup_indices([c.text for c in group], [c.logit for c in group])
        pool = [group[i] for i in keep]
        try:
            scored = [ScoredTactic(c.text, c.logit, c.embedding, c.pred_success, c.pred_time)
                      for c in pool]
        except InvalidInputError as exc:
            raise UsageError(f"goal {goal_id!r}: {exc}") from exc
        if len({s.embedding.shape[0] for s in scored}) > 1:
            raise UsageError(f"goal {goal_id!r}: embedding dimensions differ")
        q = score([s.logit for s in scored], [s.pred_success for s in scored],
                  [s.pred_time for s in scored], fcfg)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, gi]))
        idx = select_indices(np.stack([s.embedding for s in scored]), [s.logit for s in scored],
                             [s.pred_success for s in scored], [s.pred_time for s in scored],
                             fcfg, rng, quality=q)
        for i in idx:
            row = pool[i].to_dict()
            row.update({"quality": float(q[i]), "strategy": fcfg.strategy.value, "seed": cfg.seed})
            selected_rows.append(row)
    write_candidates(out_path, selected_rows)
    return selected_rows


# ---- sample-dpp ------------------------------------------------------------

def cmd_sample_dpp(kernel_path, k, n_samples, seed, out_path, exact=False) -> dict:
    try:
        kernel = Kernel.from_json(Path(kernel_path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"kernel file not found: {kernel_path}") from exc
    except (InvalidDataError, InvalidInputError) as exc:
        raise UsageError(str(exc)) from exc
    if k < 1 or n_samples < 0:
        raise UsageError("k must be >= 1 and n-samples >= 0")
    if exact and kernel.order > MAX_ORACLE_ORDER:
        raise UsageError(f"--exact refused: order {kernel.order} > {MAX_ORACLE_ORDER}")
    decomp = eigendecompose(kernel)
    if k > decomp.rank:
        raise RuntimeFailure(f"k={k} exceeds kernel rank {decomp.rank}")
    rng = np.random.default_rng(seed)
    E = esp_table(decomp.eigenvalues, k)
    samples = [sample_k_dpp(decomp, k, rng, esp=E) for _ in range(n_samples)]
    header = {"order": kernel.order, "k": k, "n_samples": n_samples, "seed": seed}
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in samples:
            fh.write(json.dumps(s) + "\n")
    result = {"header": header}
    if exact:
        pmf = exact_k_dpp_pmf(kernel, k)
        tv = total_variation(empirical_pmf(samples), pmf) if samples else None
        result.update({"tv_distance": tv,
                       "pmf": [{"subset": list(a), "p": p} for a, p in sorted(pmf.items())]})
        Path(str(out_path) + ".exact.json").write_text(json.dumps(result, indent=1) + "\n",
                                                       encoding="utf-8")
    return result


# ---- analyze ---------------------------------------------------------------

def _attempt_outcomes_from_logs(records) -> dict[str, list[bool]]:
    """Rebuild each attempt's proof tree from its transitions and verify the root."""
    attempts: dict[str, list] = {}
    for r in records:
        attempts.setdefault(r.attempt_id, []).append(r)
    per_goal: dict[str, list[bool]] = {}
    for recs in attempts.values():
        tree = ProofTree(recs[0].goal_text)
        for r in recs:
            node, _ = tree.add_node(r.goal_text, 0.0)
            tree.add_edge(node.id, r.tactic_text, 0.0, r.time_s, r.output)
        per_goal.setdefault(recs[0].goal_id, []).append(verify_proof(tree))
    return per_goal


def _attempt_outcomes_from_reports(paths) -> dict[str, list[bool]]:
    per_goal: dict[str, list[bool]] = {}
    for p in paths:
        try:
            rep = AttemptReport.from_dict(json.loads(Path(p).read_text(encoding="utf-8")))
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read attempt report {p}: {exc}") from exc
        per_goal.setdefault(rep.goal_id, []).append(rep.proved)
    return per_goal


def _fmt(v) -> str:
    return f"{v:.1f}" if isinstance(v, float) else str(v)


def format_table(report: dict) -> str:
    rows = [("metric", "mean", "se", "n")]
    labels = [("success_rate", "tactic success % per node"),
              ("unique_response_rate", "unique responses % per node"),
              ("unique_subgoal_rate", "unique subgoals % per success"),
              ("execution_time_ms", "execution time (ms)")]
    for key, label in labels:
        s = report["metrics"].get(key)
        if s:
            rows.append((label, _fmt(s["mean"]), _fmt(s["std_error"]), str(s["n"])))
    for key, val in sorted(report["pass_at_k"].items(), key=lambda kv: int(kv[0][5:])):
        rows.append((key, _fmt(val), "", str(report["n_goals"])))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(c.ljust(widths[i]) if i == 0 else c.rjust(widths[i])
                       for i, c in enumerate(r)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_analyze(log_paths, report_path, table_path=None, report_files=()) -> dict:
    if not log_paths:
        raise UsageError("no transition logs given")
    merged = TransitionLog()
    provenance = {}
    owner: dict[str, str] = {}
    for p in log_paths:
        try:
            tlog = read_log(p)
        except FileNotFoundError as exc:
            raise UsageError(f"log not found: {p}") from exc
        except ParseError as exc:
            raise UsageError(f"{p}: {exc}") from exc
        ids = list(dict.fromkeys(r.attempt_id for r in tlog))
        for a in ids:
            if a in owner:
                raise RuntimeFailure(f"attempt_id {a!r} appears in both {owner[a]} and {p}")
            owner[a] = str(p)
        provenance[str(p)] = {"attempts": ids, "n_transitions": len(tlog)}
        merged.extend(tlog)
    if not len(merged):
        raise UsageError("logs contain no transitions")
    outcomes = (_attempt_outcomes_from_reports(report_files) if report_files
                else _attempt_outcomes_from_logs(merged))
    rows = list(outcomes.values())
    max_k = min(len(r) for r in rows)
    report = {
        "metrics": metrics.summarize(merged),
        "pass_at_k": {f"pass@{k}": metrics.pass_at_k(rows, k) for k in range(1, max_k + 1)},
        "n_goals": len(rows),
        "proved": outcomes,
        "sources": provenance,
    }
    Path(report_path).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n",
                                 encoding="utf-8")
    table = format_table(report)
    if table_path:
        Path(table_path).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    return report


# ---- entry point -----------------------------------------------------------

def _one_line(exc) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "search":
            summary = cmd_search(_load_config(args))
            print(json.dumps({k: summary[k] for k in summary if k.startswith("pass@")}))
        elif args.command == "filter":
            cfg = _load_config(args)
            pcfg = None
            if args.provider:
                try:
                    pcfg = ProviderConfig(args.provider, args.dim or 1472, args.provider_source)
                except InvalidInputError as exc:
                    raise UsageError(str(exc)) from exc
            rows = cmd_filter(args.candidates, args.out, cfg, pcfg)
            print(json.dumps({"selected": len(rows)}))
        elif args.command == "sample-dpp":
            res = cmd_sample_dpp(args.kernel, args.k, args.n_samples, args.seed, args.out, args.exact)
            if "tv_distance" in res:
                print(json.dumps({"tv_distance": res["tv_distance"]}))
        elif args.command == "analyze":
            cmd_analyze(args.logs, args.report, args.table, args.reports)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    except RankDeficientError as exc:
        print(f"error: rank: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (RuntimeFailure, DivproveError, OSError) as exc:
        print(f"error: runtime: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

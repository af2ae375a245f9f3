import json

import numpy as np
import pytest

from divprove.candidates import read_candidates
from divprove.cli import RunConfig, UsageError, cmd_analyze, cmd_filter, cmd_search, main
from divprove.embed import hash_stub_embed
from divprove.transitions import ErrorMessage, Subgoals, TransitionLog, TransitionRecord, read_log, write_log


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def candidate_rows(n_goals=1, n=64, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for g in range(n_goals):
        for i in range(n):
            e = rng.normal(size=dim)
            rows.append({"goal_id": f"g{g}", "text": f"t{i}", "logit": -0.1 * i,
                         "embedding": (e / np.linalg.norm(e)).tolist(),
                         "pred_success": float(rng.random()), "pred_time": 0.1 + float(rng.random())})
    return rows


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err if capsys else ""
    return code, err


# ---- search ----------------------------------------------------------------

def test_search_writes_artifacts(tmp_path):
    cfg = RunConfig(attempts=4, max_expansions=10, output_dir=str(tmp_path / "out"),
                    environment={"kind": "synthetic", "n_goals": 3})
    summary = cmd_search(cfg)
    assert "pass@4" in summary and "pass@1" in summary
    assert summary["pass@1"] <= summary["pass@4"]
    out = tmp_path / "out"
    assert len(list((out / "transitions").glob("*.jsonl"))) == 12
    assert len(list((out / "reports").glob("*.json"))) == 12
    merged = read_log(out / "transitions.jsonl")
    assert len(merged) == sum(len(read_log(p)) for p in (out / "transitions").glob("*.jsonl"))


def test_search_missing_benchmark_exit_2(tmp_path, capsys):
    code, err = run(["search", "--benchmark", tmp_path / "none.jsonl", "--out", tmp_path], capsys)
    assert code == 2
    assert err.startswith("error: usage:") and err.count("\n") == 1


def test_search_invalid_flag_values(tmp_path, capsys):
    assert run(["search", "--k", 0, "--out", tmp_path], capsys)[0] == 2
    assert run(["search", "--attempts", 0, "--out", tmp_path], capsys)[0] == 2
    assert run(["search", "--strategy", "greedy"], capsys)[0] == 2


def test_search_config_file_and_overrides(tmp_path, monkeypatch):
    cfg = {"k": 4, "strategy": "topk", "seed": 3, "max_expansions": 5,
           "environment": {"kind": "synthetic", "n_goals": 2}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    monkeypatch.setenv("DIVPROVE_OUTPUT_DIR", str(tmp_path / "envout"))
    assert main(["search", "--config", str(path), "--k", "6"]) == 0
    summary = json.loads((tmp_path / "envout" / "summary.json").read_text())
    assert summary["config"]["k"] == 6 and summary["config"]["strategy"] == "topk"
    for rep in (tmp_path / "envout" / "reports").glob("*.json"):
        assert all(len(e["selected"]) <= 6 for e in json.loads(rep.read_text())["expansions"])


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"kay": 3}))
    assert run(["search", "--config", path], capsys)[0] == 2


def test_jobs_do_not_change_outputs(tmp_path):
    def go(jobs, name):
        cmd_search(RunConfig(attempts=2, max_expansions=8, jobs=jobs,
                             output_dir=str(tmp_path / name),
                             environment={"kind": "synthetic", "n_goals": 4}))
        return (tmp_path / name / "transitions.jsonl").read_bytes()
    assert go(1, "serial") == go(4, "parallel")


def test_strategies_comparable_by_analyze(tmp_path):
    for s in ("topk", "dpp"):
        cmd_search(RunConfig(strategy=s, max_expansions=8, output_dir=str(tmp_path / s),
                             environment={"kind": "synthetic", "n_goals": 3}))
    reports = [cmd_analyze([tmp_path / s / "transitions.jsonl"], tmp_path / f"{s}.json",
                           tmp_path / f"{s}.txt") for s in ("topk", "dpp")]
    assert all(set(r["metrics"]) == set(reports[0]["metrics"]) for r in reports)


def test_replay_search(tmp_path):
    goal = "a b : ℕ\n⊢ a + b = b + a"
    bench = write_jsonl(tmp_path / "bench.jsonl", [{"goal_id": "add_comm", "goal_text": goal}])
    tactics = [("omega", -0.2), ("simp", -0.5), ("rfl", -1.0)]
    rows = []
    for t, logit in tactics:
        r = hash_stub_embed(goal, t, 8, 0)
        rows.append({"goal_id": "add_comm", "text": t, "logit": logit, "embedding": r.embedding.tolist(),
                     "pred_success": r.pred_success, "pred_time": r.pred_time})
    cands = write_jsonl(tmp_path / "cands.jsonl", rows)
    log = TransitionLog([
        TransitionRecord("add_comm", goal, "simp", 0, 0.1, ErrorMessage("simp made no progress")),
        TransitionRecord("add_comm", goal, "omega", 1, 0.2, Subgoals(())),
    ])
    write_log(tmp_path / "env.jsonl", log)
    cfg = RunConfig(benchmark=str(bench), k=2, output_dir=str(tmp_path / "out"),
                    environment={"kind": "replay", "log": str(tmp_path / "env.jsonl"),
                                 "candidates": str(cands)})
    summary = cmd_search(cfg)
    assert summary["pass@1"] == 100.0
    out = read_log(tmp_path / "out" / "transitions.jsonl")
    assert {r.tactic_text for r in out} <= {"omega", "simp", "rfl"}


def test_replay_requires_files(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"environment": {"kind": "replay", "log": "nope"}}))
    assert run(["search", "--config", path], capsys)[0] == 2


# ---- filter ----------------------------------------------------------------

def test_filter_64_to_8(tmp_path):
    src = write_jsonl(tmp_path / "c.jsonl", candidate_rows())
    code = main(["filter", str(src), "--out", str(tmp_path / "f.jsonl"), "--k", "8"])
    assert code == 0
    lines = (tmp_path / "f.jsonl").read_text().splitlines()
    assert len(lines) == 8
    row = json.loads(lines[0])
    assert {"quality", "strategy", "seed"} <= set(row) and row["strategy"] == "dpp"


def test_filter_k_at_least_n_passes_all(tmp_path):
    src = write_jsonl(tmp_path / "c.jsonl", candidate_rows(n=5))
    rows = cmd_filter(src, tmp_path / "f.jsonl", RunConfig(k=8))
    assert [r["text"] for r in rows] == [f"t{i}" for i in range(5)]


def test_filter_same_seed_identical(tmp_path):
    src = write_jsonl(tmp_path / "c.jsonl", candidate_rows(n_goals=3))
    for name in ("a", "b"):
        main(["filter", str(src), "--out", str(tmp_path / name), "--seed", "7"])
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert len(read_candidates(tmp_path / "a")) == 24


def test_filter_parse_error_names_line(tmp_path, capsys):
    rows = candidate_rows(n=3)
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(rows[0]) + "\n" + json.dumps(rows[1]) + "\n{broken\n")
    code, err = run(["filter", path, "--out", tmp_path / "f"], capsys)
    assert code == 2 and "line 3" in err


def test_filter_needs_embeddings_or_provider(tmp_path, capsys):
    src = write_jsonl(tmp_path / "c.jsonl", [{"goal_id": "g", "text": f"t{i}", "logit": -i}
                                             for i in range(10)])
    assert run(["filter", src, "--out", tmp_path / "f"], capsys)[0] == 2
    code, _ = run(["filter", src, "--out", tmp_path / "f", "--k", 3, "--provider", "hashstub",
                   "--dim", 16], capsys)
    assert code == 0 and len(read_candidates(tmp_path / "f")) == 3


def test_filter_topk_keeps_best_logits(tmp_path):
    src = write_jsonl(tmp_path / "c.jsonl", candidate_rows())
    rows = cmd_filter(src, tmp_path / "f", RunConfig(k=4, strategy="topk"))
    assert [r["text"] for r in rows] == ["t0", "t1", "t2", "t3"]


# ---- sample-dpp ------------------------------------------------------------

def kernel_file(tmp_path, L, name="k.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"order": len(L), "entries": np.asarray(L).ravel().tolist()}))
    return path


def test_sample_identity_kernel_uniform(tmp_path, capsys):
    kf = kernel_file(tmp_path, np.eye(4))
    out = tmp_path / "s.jsonl"
    assert main(["sample-dpp", str(kf), "--k", "2", "--n-samples", "100000", "--out", str(out),
                 "--exact"]) == 0
    tv = json.loads(capsys.readouterr().out)["tv_distance"]
    assert tv < 0.02
    lines = out.read_text().splitlines()
    assert json.loads(lines[0])["n_samples"] == 100000 and len(lines) == 100001
    exact = json.loads((tmp_path / "s.jsonl.exact.json").read_text())
    assert all(abs(e["p"] - 1 / 6) < 1e-12 for e in exact["pmf"])


def test_sample_zero_samples(tmp_path):
    kf = kernel_file(tmp_path, np.eye(3))
    out = tmp_path / "s.jsonl"
    assert main(["sample-dpp", str(kf), "--k", "1", "--n-samples", "0", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["k"] == 1


def test_sample_exact_refused_above_12(tmp_path, capsys):
    kf = kernel_file(tmp_path, np.eye(13))
    code, err = run(["sample-dpp", kf, "--k", "2", "--out", tmp_path / "s", "--exact"], capsys)
    assert code == 2 and "13" in err


def test_sample_k_above_rank(tmp_path, capsys):
    B = np.random.default_rng(0).normal(size=(2, 5))
    kf = kernel_file(tmp_path, B.T @ B)
    code, err = run(["sample-dpp", kf, "--k", "3", "--out", tmp_path / "s"], capsys)
    assert code == 1 and "rank 2" in err


def test_sample_bad_kernel(tmp_path, capsys):
    kf = kernel_file(tmp_path, [[1.0, 2.0], [0.0, 1.0]])
    assert run(["sample-dpp", kf, "--k", "1", "--out", tmp_path / "s"], capsys)[0] == 2
    (tmp_path / "junk.json").write_text("{")
    assert run(["sample-dpp", tmp_path / "junk.json", "--k", "1", "--out", tmp_path / "s"],
               capsys)[0] == 2


# ---- analyze ---------------------------------------------------------------

def test_analyze_fixture(tmp_path, metrics_logs):
    merged = TransitionLog()
    for tlog in metrics_logs.values():
        merged.extend(tlog)
    write_log(tmp_path / "all.jsonl", merged)
    rep = cmd_analyze([tmp_path / "all.jsonl"], tmp_path / "r.json", tmp_path / "t.txt")
    m = rep["metrics"]
    assert m["unique_response_rate"]["mean"] == 60.0
    assert round(m["unique_subgoal_rate"]["mean"], 1) == 66.7
    assert m["execution_time_ms"]["mean"] == 200.0
    assert rep["pass_at_k"] == {"pass@1": 0.0, "pass@2": 50.0}
    table = (tmp_path / "t.txt").read_text()
    assert "60.0" in table and "66.7" in table and "200.0" in table


def test_analyze_merges_with_provenance(tmp_path, metrics_logs):
    paths = []
    for aid, tlog in metrics_logs.items():
        p = tmp_path / (aid.replace("/", "_") + ".jsonl")
        write_log(p, tlog)
        paths.append(p)
    rep = cmd_analyze(paths, tmp_path / "r.json", tmp_path / "t.txt")
    assert rep["metrics"]["n_nodes"] == sum(len({r.node_id for r in t}) for t in metrics_logs.values())
    assert rep["sources"][str(paths[0])]["attempts"] == ["p/a0"]


def test_analyze_conflicting_attempts(tmp_path, capsys, metrics_logs):
    log = metrics_logs["p/a0"]
    write_log(tmp_path / "x.jsonl", log)
    write_log(tmp_path / "y.jsonl", log)
    code, err = run(["analyze", tmp_path / "x.jsonl", tmp_path / "y.jsonl", "--report",
                     tmp_path / "r.json"], capsys)
    assert code == 1 and "p/a0" in err


def test_analyze_empty_set(tmp_path, capsys):
    assert run(["analyze", "--report", tmp_path / "r.json"], capsys)[0] == 2
    with pytest.raises(UsageError):
        cmd_analyze([], tmp_path / "r.json")

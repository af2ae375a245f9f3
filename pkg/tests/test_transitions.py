from importlib import resources

import pytest
from hypothesis import given, strategies as st

from divprove.errors import InvalidInputError, ParseError
from divprove.transitions import (
    ErrorMessage,
    Subgoals,
    TransitionLog,
    TransitionRecord,
    read_log,
    replay_lookup,
    split_log,
    write_log,
)

FIXTURE = resources.files("divprove") / "data" / "minif2f_style.jsonl"


def rec(goal, tactic, status=0, out=None, t=0.1, node="n0", attempt="a0"):
    if out is None:
        out = ErrorMessage("boom") if status == 0 else Subgoals(())
    return TransitionRecord("id-" + goal, goal, tactic, status, t, out, node, attempt)


@pytest.fixture
def three():
    return TransitionLog([
        rec("⊢ a + b = b + a", "simp", 1, Subgoals(("⊢ a = a",))),
        rec("⊢ a + b = b + a", "linarith", 0,
            ErrorMessage("linarith failed\ncase a\n⊢ False")),
        rec("x : ℝ\n⊢ x ^ 2 ≥ 0", "positivity", 1, Subgoals(())),
    ])


def test_coherence_enforced():
    with pytest.raises(InvalidInputError):
        TransitionRecord("g", "g", "t", 1, 0.1, ErrorMessage("x"))
    with pytest.raises(InvalidInputError):
        TransitionRecord("g", "g", "t", 0, 0.1, Subgoals(()))
    with pytest.raises(InvalidInputError):
        TransitionRecord("g", "g", "t", 0, -1.0, ErrorMessage("x"))
    with pytest.raises(InvalidInputError):
        TransitionRecord("g", "g", "t", 2, 0.1, ErrorMessage("x"))


def test_roundtrip_unicode_multiline(tmp_path, three):
    path = tmp_path / "log.jsonl"
    write_log(path, three)
    back = read_log(path)
    assert back == three
    assert back.records[1].output.text == "linarith failed\ncase a\n⊢ False"
    # one JSON document per line
    assert len(path.read_text(encoding="utf-8").splitlines()) == 3


def test_index_resolves_fixture_keys(three):
    for r in three:
        assert replay_lookup(three, r.goal_text, r.tactic_text) is r


def test_lookup_exact_match(three):
    assert replay_lookup(three, "⊢ a + b = b + a", "simp").status == 1
    assert replay_lookup(three, "⊢ a + b = b + a", "ring") is None
    assert replay_lookup(three, "⊢ a + b = b + a", "simp ") is None


def test_first_wins_on_duplicate():
    a = rec("g", "t", 0, ErrorMessage("first"))
    b = rec("g", "t", 0, ErrorMessage("second"))
    log = TransitionLog([a, b])
    assert len(log) == 2 and log.duplicates == 1
    assert replay_lookup(log, "g", "t") is a


def test_strict_and_lenient(tmp_path, three):
    path = tmp_path / "log.jsonl"
    write_log(path, three)
    lines = path.read_text(encoding="utf-8").splitlines()
    lines.insert(1, '{"goal_id": "x", "status": 1')
    lines.insert(2, '{"goal_id": "g", "goal_text": "g", "tactic_text": "t", "status": 1, '
                    '"time_s": 0.1, "output": {"error": "incoherent"}}')
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        read_log(path)
    assert exc.value.line_no == 2
    log = read_log(path, strict=False)
    assert len(log) == 3 and log.skipped == 2 and log.lines_read == 5


def test_split_sizes_and_determinism():
    log = TransitionLog([rec(f"g{i}", "t") for i in range(100)])
    train, test = split_log(log, 0.95, seed=3)
    assert (len(train), len(test)) == (95, 5)
    again = split_log(log, 0.95, seed=3)
    assert again[0] == train and again[1] == test
    assert sorted(r.goal_text for r in train.records + test.records) == \
        sorted(r.goal_text for r in log)
    assert not {r.goal_text for r in train} & {r.goal_text for r in test}


def test_split_errors():
    with pytest.raises(InvalidInputError):
        split_log(TransitionLog(), 0.5, 0)
    with pytest.raises(InvalidInputError):
        split_log(TransitionLog([rec("g", "t")]), 1.0, 0)


@given(st.integers(1, 300), st.floats(0.01, 0.99))
def test_split_partition_property(n, f):
    log = TransitionLog([rec(f"g{i}", "t") for i in range(n)])
    train, test = split_log(log, f, seed=n)
    assert len(train) + len(test) == n
    assert len(train) == int(n * f + 0.5)


def test_bundled_fixture_error_rate():
    log = read_log(FIXTURE)
    assert len(log) > 400
    err = sum(1 for r in log if r.status == 0) / len(log)
    assert abs(err - 0.75) <= 0.05
    for r in log:
        assert (r.status == 1) == isinstance(r.output, Subgoals)


text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=20)


@given(st.lists(st.tuples(text, text, st.booleans(), st.lists(text, max_size=3), text,
                          st.floats(0, 1e3)), max_size=8))
def test_roundtrip_property(tmp_path_factory, rows):
    recs = [TransitionRecord(g, g, t, int(ok), tm, Subgoals(tuple(subs)) if ok else ErrorMessage(msg),
                             "n0", "a0")
            for g, t, ok, subs, msg, tm in rows]
    path = tmp_path_factory.mktemp("rt") / "log.jsonl"
    write_log(path, recs)
    assert read_log(path).records == recs

import pytest

from divprove.transitions import ErrorMessage, Subgoals, TransitionLog, TransitionRecord

TIMES = (0.1, 0.3, 0.2, 0.1, 0.3)


def node_block(goal_id, goal, node_id, attempt_id, closing=False):
    """Five transitions at one node: 3 of 5 novel responses, 2 of 3 novel successes."""
    a, b = f"{goal}.A", f"{goal}.B"
    outs = ([Subgoals(()), Subgoals(()), Subgoals((a,))] if closing
            else [Subgoals((a,)), Subgoals((a,)), Subgoals((a, b))])
    outs += [ErrorMessage("x"), ErrorMessage("x")]
    return [TransitionRecord(goal_id, goal, f"tac{i}", int(isinstance(o, Subgoals)), TIMES[i], o,
                             node_id, attempt_id) for i, o in enumerate(outs)]


def metrics_fixture_logs():
    """Two goals with two attempts each; only ``p/a1`` closes its root goal."""
    logs = {}
    for gid in ("p", "q"):
        for a in range(2):
            aid = f"{gid}/a{a}"
            recs = node_block(gid, gid, "n0", aid)
            if aid == "p/a1":
                recs += node_block("p.A", "p.A", "n1", aid, closing=True)
                recs += node_block("p.B", "p.B", "n2", aid, closing=True)
            logs[aid] = TransitionLog(recs)
    return logs


@pytest.fixture
def metrics_logs():
    return metrics_fixture_logs()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

"""Proof trees and best-first search over goals.

The tree is a DAG keyed by exact goal text. Nodes are expanded in order of
cumulative log probability (sum of generator logits along the best known
path). Each expansion proposes candidates, embeds them, filters them to K
and applies the survivors in the environment.
"""
from __future__ import annotations

import enum
import hashlib
import heapq
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from .embed import EmbeddingRecord
from .errors import InvalidInputError, TransportError
from .filter import FilterConfig, ScoredTactic, filter_tactics
from .transitions import ErrorMessage, Output, Subgoals, TransitionLog, TransitionRecord, replay_lookup
from .utils import check_rng

log = logging.getLogger(__name__)

UNRECORDED = "unrecorded"


class NodeStatus(str, enum.Enum):
    OPEN = "open"
    EXPANDED = "expanded"
    PROVED = "proved"
    FAILED = "failed"


@dataclass
class ProofEdge:
    source: int
    tactic_text: str
    logit: float
    time_s: float
    error: str | None = None
    children: list[int] = field(default_factory=list)

    @property
    def is_error(self) -> bool:
        return self.error is not None


@dataclass
class ProofNode:
    id: int
    goal_text: str
    cum_logprob: float
    status: NodeStatus = NodeStatus.OPEN
    parent_edges: list[int] = field(default_factory=list)
    child_edges: list[int] = field(default_factory=list)


class ProofTree:
    def __init__(self, root_goal: str):
        self.nodes: list[ProofNode] = []
        self.edges: list[ProofEdge] = []
        self.by_goal: dict[str, int] = {}
        self.add_node(root_goal, 0.0)

    @property
    def root(self) -> ProofNode:
        return self.nodes[0]

    @property
    def proved(self) -> bool:
        return self.root.status is NodeStatus.PROVED

    def add_node(self, goal_text: str, cum_logprob: float) -> tuple[ProofNode, bool]:
        """Return the node for ``goal_text``, creating it if needed.

        An existing node keeps the larger of its old and new cumulative
        log probability. The flag reports whether the frontier key changed.
        """
        idx = self.by_goal.get(goal_text)
        if idx is not None:
            node = self.nodes[idx]
            if cum_logprob > node.cum_logprob:
                node.cum_logprob = cum_logprob
                return node, True
            return node, False
        node = ProofNode(len(self.nodes), goal_text, cum_logprob)
        self.nodes.append(node)
        self.by_goal[goal_text] = node.id
        return node, True

    def add_edge(self, source: int, tactic_text: str, logit: float, time_s: float,
                 output: Output) -> ProofEdge:
        children = []
        error = None
        if isinstance(output, ErrorMessage):
            error = output.text
        else:
            base = self.nodes[source].cum_logprob + logit
            for g in output.goals:
                node, _ = self.add_node(g, base)
                if node.id not in children:
                    children.append(node.id)
        edge = ProofEdge(source, tactic_text, logit, time_s, error, children)
        eid = len(self.edges)
        self.edges.append(edge)
        self.nodes[source].child_edges.append(eid)
        for c in children:
            self.nodes[c].parent_edges.append(eid)
        return edge

    def edge_closes(self, edge: ProofEdge) -> bool:
        return (not edge.is_error and
                all(self.nodes[c].status is NodeStatus.PROVED for c in edge.children))

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "goal_text": n.goal_text, "cum_logprob": n.cum_logprob,
                       "status": n.status.value} for n in self.nodes],
            "edges": [asdict(e) for e in self.edges],
        }


def propagate_proved(tree: ProofTree, node_id: int) -> ProofTree:
    """Mark ``node_id`` and its ancestors Proved wherever some edge now closes."""
    work = [node_id]
    while work:
        nid = work.pop()
        node = tree.nodes[nid]
        if node.status is NodeStatus.PROVED:
            continue
        if any(tree.edge_closes(tree.edges[e]) for e in node.child_edges):
            node.status = NodeStatus.PROVED
            work.extend(tree.edges[e].source for e in node.parent_edges)
    return tree


def verify_proof(tree: ProofTree, node_id: int = 0) -> bool:
    """Check that a proof witness exists below ``node_id``, ignoring stored statuses.

    Computes the least fixpoint of "some non-error edge whose children are all
    proved", so cycles through merged goals never count as proofs.
    """
    proved: set[int] = set()
    changed = True
    while changed:
        changed = False
        for edge in tree.edges:
            if edge.is_error or edge.source in proved:
                continue
            if all(c in proved for c in edge.children):
                proved.add(edge.source)
                changed = True
    return node_id in proved


@dataclass(frozen=True)
class SearchBudget:
    wall_timeout_s: float | None = 600.0
    max_expansions: int | None = None
    live: bool = False

    def __post_init__(self):
        if self.wall_timeout_s is None and self.max_expansions is None:
            raise InvalidInputError("budget needs a timeout or an expansion limit")
        if self.wall_timeout_s is not None and not self.wall_timeout_s > 0:
            raise InvalidInputError("wall_timeout_s must be positive")
        if self.max_expansions is not None and self.max_expansions < 1:
            raise InvalidInputError("max_expansions must be positive")


class Environment(Protocol):
    def apply(self, goal_text: str, tactic_text: str) -> tuple[int, float, Output]: ...


class TacticSource(Protocol):
    def propose(self, goal_text: str, n: int) -> list[tuple[str, float]]: ...


class EmbeddingProvider(Protocol):
    def embed(self, goal_id: str, goal_text: str, tactics: list[str]) -> list[EmbeddingRecord]: ...


class ReplayEnvironment:
    """Answers from a recorded transition log; unseen pairs fail as ``unrecorded``."""

    def __init__(self, log: TransitionLog):
        self.log = log

    def apply(self, goal_text, tactic_text):
        rec = replay_lookup(self.log, goal_text, tactic_text)
        if rec is None:
            return 0, 0.0, ErrorMessage(UNRECORDED)
        return rec.status, rec.time_s, rec.output


def goal_digest(goal_text: str) -> str:
    return "g-" + hashlib.sha1(goal_text.encode("utf-8")).hexdigest()[:16]


@dataclass
class Expansion:
    node_id: str
    goal_text: str
    cum_logprob: float
    frontier_max: float
    n_candidates: int
    selected: list[str]
    statuses: list[int]
    env_time_s: float


@dataclass
class AttemptReport:
    attempt_id: str
    goal_id: str
    root_goal: str
    proved: bool = False
    stop_reason: str = ""
    expansions: list[Expansion] = field(default_factory=list)
    env_time_s: float = 0.0
    n_transitions: int = 0
    n_nodes: int = 1
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "AttemptReport":
        obj = dict(obj)
        obj["expansions"] = [Expansion(**e) for e in obj.get("expansions", [])]
        return cls(**obj)


class _Clock:
    def __init__(self, budget: SearchBudget):
        self.budget = budget
        self.simulated = 0.0
        self.started: float | None = None

    def charge(self, seconds: float) -> None:
        self.simulated += seconds

    def start(self) -> None:
        if self.started is None:
            self.started = time.monotonic()

    @property
    def elapsed(self) -> float:
        if self.budget.live:
            return 0.0 if self.started is None else time.monotonic() - self.started
        return self.simulated

    def exhausted(self) -> bool:
        limit = self.budget.wall_timeout_s
        return limit is not None and self.elapsed >= limit


def best_first_search(root_goal: str, source: TacticSource, filter_cfg: FilterConfig,
                      provider: EmbeddingProvider, env: Environment, budget: SearchBudget,
                      rng=None, *, goal_id: str | None = None, attempt_id: str = "a0",
                      n_candidates: int = 64):
    """Run one proof attempt; returns ``(tree, report, transition_log)``."""
    rng = check_rng(rng)
    root_id = goal_id if goal_id is not None else goal_digest(root_goal)
    tree = ProofTree(root_goal)
    report = AttemptReport(attempt_id, root_id, root_goal)
    tlog = TransitionLog()
    clock = _Clock(budget)
    # heap entries: (-cum_logprob, insertion order, node id)
    frontier = [(-0.0, 0, 0)]
    pushed = 1

    def push(node):
        nonlocal pushed
        heapq.heappush(frontier, (-node.cum_logprob, pushed, node.id))
        pushed += 1

    def gid(goal):
        return root_id if goal == root_goal else goal_digest(goal)

    stop = "frontier_exhausted"
    while frontier:
        if budget.max_expansions is not None and len(report.expansions) >= budget.max_expansions:
            stop = "max_expansions"
            break
        if clock.exhausted():
            stop = "timeout"
            break
        neg, _, nid = heapq.heappop(frontier)
        node = tree.nodes[nid]
        if node.status is not NodeStatus.OPEN or -neg != node.cum_logprob:
            continue
        open_max = max((-e[0] for e in frontier
                        if tree.nodes[e[2]].status is NodeStatus.OPEN
                        and -e[0] == tree.nodes[e[2]].cum_logprob), default=node.cum_logprob)
        goal = node.goal_text
        proposals = source.propose(goal, n_candidates)[:n_candidates]
        exp = Expansion(f"n{nid}", goal, node.cum_logprob, max(open_max, node.cum_logprob),
                        len(proposals), [], [], 0.0)
        report.expansions.append(exp)
        node.status = NodeStatus.FAILED
        if not proposals:
            continue
        texts = [t for t, _ in proposals]
        records = provider.embed(gid(goal), goal, texts)
        cands = [ScoredTactic(t, float(l), r.embedding, r.pred_success, r.pred_time)
                 for (t, l), r in zip(proposals, records)]
        selected = filter_tactics(goal, cands, filter_cfg, rng)
        exp.selected = [c.text for c in selected]
        timed_out = False
        for cand in selected:
            if clock.exhausted():
                timed_out = True
                break
            clock.start()
            try:
                status, t_s, output = env.apply(goal, cand.text)
            except TransportError as exc:
                report.error = str(exc)
                report.stop_reason = "aborted"
                return _finish(tree, report, tlog, clock)
            clock.charge(t_s)
            exp.statuses.append(status)
            exp.env_time_s += t_s
            tlog.append(TransitionRecord(gid(goal), goal, cand.text, status, t_s, output,
                                         f"n{nid}", attempt_id))
            n_before = len(tree.nodes)
            known = {c: tree.nodes[c].cum_logprob for c in range(n_before)}
            edge = tree.add_edge(nid, cand.text, cand.logit, t_s, output)
            if not edge.is_error and node.status is NodeStatus.FAILED:
                node.status = NodeStatus.EXPANDED
            for c in edge.children:
                child = tree.nodes[c]
                if child.status is NodeStatus.OPEN and (
                        c >= n_before or child.cum_logprob > known[c]):
                    push(child)
            propagate_proved(tree, nid)
            if tree.proved:
                break
        if tree.proved:
            stop = "proved"
            break
        if timed_out:
            stop = "timeout"
            break
    report.stop_reason = stop
    return _finish(tree, report, tlog, clock)


def _finish(tree, report, tlog, clock):
    report.proved = tree.proved
    report.env_time_s = clock.simulated
    report.n_transitions = len(tlog)
    report.n_nodes = len(tree.nodes)
    return tree, report, tlog

"""Evaluation quantities computed from attempt results and transition logs.

Per-node rates group transitions by ``(attempt_id, node_id)`` and are
reported as percentages with mean and standard error across nodes.
"""
from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .transitions import ErrorMessage, Subgoals, TransitionRecord


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std_error: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricSummary":
        vals = [float(v) for v in values]
        if not vals:
            raise InvalidInputError("summary of an empty sample")
        n = len(vals)
        mean = math.fsum(vals) / n
        if n == 1:
            return cls(mean, 0.0, 1)
        var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
        return cls(mean, math.sqrt(var) / math.sqrt(n), n)

    def to_dict(self) -> dict:
        return asdict(self)


def pass_at_k(results, k: int) -> float:
    """Percentage of goals with at least one success among their first ``k`` attempts."""
    rows = [list(r) for r in results]
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    if not rows:
        raise InvalidInputError("no goals")
    short = [i for i, r in enumerate(rows) if len(r) < k]
    if short:
        raise InvalidInputError(f"{len(short)} goal(s) have fewer than {k} attempts")
    hits = sum(1 for r in rows if any(bool(x) for x in r[:k]))
    return 100.0 * hits / len(rows)


def group_by_node(records: Iterable[TransitionRecord]) -> "OrderedDict[tuple[str, str], list[TransitionRecord]]":
    groups: OrderedDict[tuple[str, str], list[TransitionRecord]] = OrderedDict()
    for r in records:
        groups.setdefault((r.attempt_id, r.node_id), []).append(r)
    return groups


def _groups(log) -> "OrderedDict[tuple[str, str], list[TransitionRecord]]":
    groups = group_by_node(log)
    if not groups:
        raise InvalidInputError("empty transition log")
    return groups


def success_rate_per_node(log) -> MetricSummary:
    rates = [100.0 * sum(r.status for r in g) / len(g) for g in _groups(log).values()]
    return MetricSummary.of(rates)


def unique_flags(records: Sequence[TransitionRecord], successes_only: bool = False) -> list[bool]:
    """Per-transition novelty at one node, in execution order.

    An error is novel when its message text has not appeared at the node; a
    success is novel when it lists a subgoal not seen at the node, or when it
    is the first success closing the goal outright.
    """
    seen_errors: set[str] = set()
    seen_goals: set[str] = set()
    closed = False
    flags = []
    for r in records:
        out = r.output
        if isinstance(out, ErrorMessage):
            if successes_only:
                continue
            flags.append(out.text not in seen_errors)
            seen_errors.add(out.text)
        else:
            if out.goals:
                flags.append(any(g not in seen_goals for g in out.goals))
                seen_goals.update(out.goals)
            else:
                flags.append(not closed)
                closed = True
    return flags


def unique_response_rate(log) -> MetricSummary:
    rates = []
    for g in _groups(log).values():
        flags = unique_flags(g)
        rates.append(100.0 * sum(flags) / len(flags))
    return MetricSummary.of(rates)


def unique_subgoal_rate(log) -> MetricSummary:
    rates = []
    for g in _groups(log).values():
        flags = unique_flags(g, successes_only=True)
        if flags:
            rates.append(100.0 * sum(flags) / len(flags))
    if not rates:
        raise InvalidInputError("no successful transitions in log")
    return MetricSummary.of(rates)


def execution_time_stats(log) -> MetricSummary:
    times = [1000.0 * r.time_s for r in log]
    if not times:
        raise InvalidInputError("empty transition log")
    return MetricSummary.of(times)


def mean_pairwise_cosine(embeddings) -> float:
    E = np.asarray(embeddings, dtype=np.float64)
    E = E / np.linalg.norm(E, axis=1, keepdims=True)
    pairs = list(itertools.combinations(range(E.shape[0]), 2))
    return math.fsum(float(E[i] @ E[j]) for i, j in pairs) / len(pairs)


def embedding_similarity_summary(groups: Mapping, unique_subgoal_filter: bool = False,
                                 log=None) -> dict:
    """Mean pairwise cosine similarity of tactic embeddings per node.

    ``groups`` maps a node key to its embedding records. With
    ``unique_subgoal_filter`` only tactics whose transition at that node
    produced a novel subgoal are kept; ``log`` supplies those transitions and
    node keys must then be ``(attempt_id, node_id)``.
    """
    keep = None
    if unique_subgoal_filter:
        if log is None:
            raise InvalidInputError("unique_subgoal_filter needs the transition log")
        keep = {}
        for key, recs in group_by_node(log).items():
            succ = [r for r in recs if isinstance(r.output, Subgoals)]
            flags = unique_flags(succ, successes_only=True)
            keep[key] = {r.tactic_text for r, f in zip(succ, flags) if f}
    per_node = {}
    for key, recs in groups.items():
        recs = list(recs)
        if keep is not None:
            allowed = keep.get(key, set())
            recs = [r for r in recs if r.tactic_text in allowed]
        if len(recs) < 2:
            continue
        per_node[key] = mean_pairwise_cosine([r.embedding for r in recs])
    values = list(per_node.values())
    return {
        "per_node": per_node,
        "overall": math.fsum(values) / len(values) if values else float("nan"),
        "distribution": sorted(values),
        "n_nodes": len(values),
    }


def summarize(log) -> dict:
    """All per-node and timing summaries for one merged log."""
    out = {
        "n_transitions": len(log),
        "n_nodes": len(group_by_node(log)),
        "success_rate": success_rate_per_node(log).to_dict(),
        "unique_response_rate": unique_response_rate(log).to_dict(),
        "execution_time_ms": execution_time_stats(log).to_dict(),
    }
    try:
        out["unique_subgoal_rate"] = unique_subgoal_rate(log).to_dict()
    except InvalidInputError:
        out["unique_subgoal_rate"] = None
    return out

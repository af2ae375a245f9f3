"""Transition records ``(goal, tactic, status, time, output)`` and their JSONL logs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import InvalidInputError, ParseError


@dataclass(frozen=True)
class ErrorMessage:
    text: str


@dataclass(frozen=True)
class Subgoals:
    goals: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))


Output = ErrorMessage | Subgoals


@dataclass(frozen=True)
class TransitionRecord:
    goal_id: str
    goal_text: str
    tactic_text: str
    status: int
    time_s: float
    output: Output
    node_id: str = ""
    attempt_id: str = ""

    def __post_init__(self):
        if self.status not in (0, 1):
            raise InvalidInputError(f"status must be 0 or 1, got {self.status!r}")
        if self.status == 1 and not isinstance(self.output, Subgoals):
            raise InvalidInputError("status 1 requires a subgoal output")
        if self.status == 0 and not isinstance(self.output, ErrorMessage):
            raise InvalidInputError("status 0 requires an error output")
        if not (self.time_s >= 0 and math.isfinite(self.time_s)):
            raise InvalidInputError(f"time_s must be finite and >= 0, got {self.time_s!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.goal_text, self.tactic_text)

    def to_dict(self) -> dict:
        out = ({"error": self.output.text} if isinstance(self.output, ErrorMessage)
               else {"subgoals": list(self.output.goals)})
        return {"goal_id": self.goal_id, "goal_text": self.goal_text,
                "tactic_text": self.tactic_text, "status": self.status,
                "time_s": self.time_s, "output": out,
                "node_id": self.node_id, "attempt_id": self.attempt_id}

    @classmethod
    def from_dict(cls, obj: dict) -> "TransitionRecord":
        out = obj["output"]
        if not isinstance(out, dict) or len(out) != 1:
            raise ValueError("output must hold exactly one of 'error' or 'subgoals'")
        if "error" in out:
            if not isinstance(out["error"], str):
                raise ValueError("error output must be a string")
            output: Output = ErrorMessage(out["error"])
        elif "subgoals" in out:
            goals = out["subgoals"]
            if not isinstance(goals, list) or not all(isinstance(g, str) for g in goals):
                raise ValueError("subgoals must be a list of strings")
            output = Subgoals(tuple(goals))
        else:
            raise ValueError("output must hold 'error' or 'subgoals'")
        status = obj["status"]
        if isinstance(status, bool) or not isinstance(status, int):
            raise ValueError("status must be an integer")
        return cls(str(obj["goal_id"]), str(obj["goal_text"]), str(obj["tactic_text"]),
                   status, float(obj["time_s"]), output,
                   str(obj.get("node_id", "")), str(obj.get("attempt_id", "")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


@dataclass
class TransitionLog:
    """Ordered records with a first-wins ``(goal_text, tactic_text)`` index."""

    records: list[TransitionRecord] = field(default_factory=list)
    index: dict[tuple[str, str], TransitionRecord] = field(default_factory=dict, repr=False)
    duplicates: int = 0
    lines_read: int = 0
    skipped: int = 0

    def __post_init__(self):
        recs, self.records = self.records, []
        self.index = {}
        self.duplicates = 0
        for r in recs:
            self.append(r)

    def append(self, record: TransitionRecord) -> None:
        self.records.append(record)
        if record.key in self.index:
            self.duplicates += 1
        else:
            self.index[record.key] = record

    def extend(self, records: Iterable[TransitionRecord]) -> None:
        for r in records:
            self.append(r)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TransitionRecord]:
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, TransitionLog) and self.records == other.records


def read_log(path, strict: bool = True) -> TransitionLog:
    """Parse a JSONL transition log.

    In strict mode the first malformed line raises :class:`ParseError`; in
    lenient mode malformed lines are skipped and counted in ``log.skipped``.
    """
    log = TransitionLog()
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            log.lines_read += 1
            try:
                rec = TransitionRecord.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                if strict:
                    raise ParseError(no, line.rstrip("\n"), str(exc)) from exc
                log.skipped += 1
                continue
            log.append(rec)
    return log


def write_log(path, log: TransitionLog | Iterable[TransitionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in log:
            fh.write(r.to_json() + "\n")


def split_log(log: TransitionLog, train_fraction: float, seed: int):
    """Random per-transition split; the train part has ``round(N * f)`` records."""
    n = len(log)
    if n == 0:
        raise InvalidInputError("cannot split an empty log")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(math.floor(n * train_fraction + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = set(perm[:n_train].tolist())
    train = TransitionLog([r for i, r in enumerate(log.records) if i in train_idx])
    test = TransitionLog([r for i, r in enumerate(log.records) if i not in train_idx])
    return train, test


def replay_lookup(log: TransitionLog, goal_text: str, tactic_text: str) -> TransitionRecord | None:
    return log.index.get((goal_text, tactic_text))

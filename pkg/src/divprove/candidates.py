"""Candidate-tactic and benchmark files (JSON lines)."""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .embed import EmbeddingRecord, unit_embedding
from .errors import InvalidDataError, MissingEmbeddingError, ParseError
from .search import goal_digest


@dataclass
class Candidate:
    goal_id: str
    text: str
    logit: float
    embedding: np.ndarray | None = field(default=None, repr=False)
    pred_success: float | None = None
    pred_time: float | None = None
    goal_text: str | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        out = dict(self.extra)
        out.update({"goal_id": self.goal_id, "text": self.text, "logit": self.logit})
        if self.goal_text is not None:
            out["goal_text"] = self.goal_text
        if self.embedding is not None:
            out["embedding"] = self.embedding.tolist()
        if self.pred_success is not None:
            out["pred_success"] = self.pred_success
        if self.pred_time is not None:
            out["pred_time"] = self.pred_time
        return out


_KNOWN = {"goal_id", "text", "logit", "embedding", "pred_success", "pred_time", "goal_text"}


def read_candidates(path) -> list[Candidate]:
    out = []
    dims = set()
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                cand = Candidate(str(obj["goal_id"]), str(obj["text"]), float(obj["logit"]),
                                 goal_text=obj.get("goal_text"),
                                 extra={k: v for k, v in obj.items() if k not in _KNOWN})
                if obj.get("embedding") is not None:
                    emb = np.asarray(obj["embedding"], dtype=np.float64)
                    dims.add(emb.shape[0] if emb.ndim == 1 else -1)
                    cand.embedding = unit_embedding(emb, emb.shape[0] if emb.ndim == 1 else -1,
                                                    f"{path}:{no}")
                    cand.pred_success = float(obj.get("pred_success", 0.0))
                    cand.pred_time = float(obj.get("pred_time", 0.0))
            except InvalidDataError as exc:
                raise ParseError(no, line.strip(), str(exc)) from exc
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(no, line.strip(), f"bad candidate record ({exc})") from exc
            out.append(cand)
    if len(dims) > 1:
        raise InvalidDataError(f"{path}: mixed embedding dimensions {sorted(dims)}")
    return out


def write_candidates(path, candidates) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_dict() if isinstance(c, Candidate) else c,
                                ensure_ascii=False, sort_keys=True) + "\n")


def group_candidates(candidates) -> "OrderedDict[str, list[Candidate]]":
    groups: OrderedDict[str, list[Candidate]] = OrderedDict()
    for c in candidates:
        groups.setdefault(c.goal_id, []).append(c)
    return groups


def read_benchmark(path) -> list[tuple[str, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["goal_id"]), str(obj["goal_text"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(no, line.strip(), f"bad benchmark record ({exc})") from exc
    return out


class CandidateSource:
    """Tactic source and embedding provider backed by a candidate file.

    Goals are resolved to ``goal_id`` through an explicit ``goal_text`` field,
    the benchmark root ids, or the digest used for non-root goals.
    """

    def __init__(self, candidates, root_ids: dict[str, str] | None = None):
        self.groups = group_candidates(candidates)
        self.by_text = {}
        for c in candidates:
            if c.goal_text is not None:
                self.by_text.setdefault(c.goal_text, c.goal_id)
        self.root_ids = dict(root_ids or {})

    def _gid(self, goal_text):
        return self.by_text.get(goal_text) or self.root_ids.get(goal_text) or goal_digest(goal_text)

    def propose(self, goal_text, n):
        cands = self.groups.get(self._gid(goal_text), [])
        ranked = sorted(cands, key=lambda c: -c.logit)
        return [(c.text, c.logit) for c in ranked[:n]]

    def embed(self, goal_id, goal_text, tactics):
        gid = goal_id if goal_id in self.groups else self._gid(goal_text)
        table = {c.text: c for c in self.groups.get(gid, []) if c.embedding is not None}
        out = []
        for t in tactics:
            c = table.get(t)
            if c is None:
                raise MissingEmbeddingError(goal_id, t)
            out.append(EmbeddingRecord(goal_id, t, c.embedding, c.pred_success, c.pred_time))
        return out

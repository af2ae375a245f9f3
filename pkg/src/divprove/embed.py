"""Tactic embedding providers.

Every provider maps ``(goal, tactics)`` to one :class:`EmbeddingRecord` per
tactic: a unit-norm embedding plus predicted success probability and
predicted execution time in seconds.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import os
from dataclasses import dataclass, field

import httpx
import numpy as np

from .errors import InvalidDataError, InvalidInputError, MissingEmbeddingError, ParseError, TransportError
from .utils import stable_hash64

log = logging.getLogger(__name__)

DEFAULT_DIM = 1472
RENORM_TOL = 1e-3


class ProviderKind(str, enum.Enum):
    FILE = "file"
    HASH_STUB = "hashstub"
    REMOTE = "remote"

    @classmethod
    def parse(cls, value) -> "ProviderKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise InvalidInputError(f"unknown provider kind {value!r}")


@dataclass(frozen=True)
class EmbeddingRecord:
    goal_id: str
    tactic_text: str
    embedding: np.ndarray = field(repr=False)
    pred_success: float
    pred_time: float

    def to_dict(self) -> dict:
        return {"goal_id": self.goal_id, "tactic_text": self.tactic_text,
                "embedding": self.embedding.tolist(),
                "pred_success": self.pred_success, "pred_time": self.pred_time}


@dataclass(frozen=True)
class ProviderConfig:
    kind: ProviderKind = ProviderKind.HASH_STUB
    dim: int = DEFAULT_DIM
    source: str | None = None
    salt: int = 0
    retries: int = 3
    timeout_s: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ProviderKind.parse(self.kind))
        if isinstance(self.dim, bool) or int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim!r}")
        if self.kind is ProviderKind.FILE and (self.source is None or not os.path.exists(self.source)):
            raise InvalidInputError(f"embedding file not found: {self.source!r}")
        if self.kind is ProviderKind.REMOTE and not self.source:
            raise InvalidInputError("remote provider needs an endpoint address")
        if self.retries < 0:
            raise InvalidInputError("retries must be >= 0")


def unit_embedding(values, dim: int, where: str) -> np.ndarray:
    """Validate dimension and renormalize small norm drift; reject larger drift."""
    e = np.asarray(values, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] != dim:
        raise InvalidDataError(f"{where}: embedding has shape {e.shape}, expected ({dim},)")
    norm = float(np.linalg.norm(e))
    if not math.isfinite(norm) or abs(norm - 1.0) > RENORM_TOL:
        raise InvalidDataError(f"{where}: embedding norm {norm:.6g} is not close to 1")
    # leave rounding-level error alone so files round-trip bit for bit
    return e if abs(norm - 1.0) <= 1e-12 else e / norm


def _check_predictions(s, t, where):
    s, t = float(s), float(t)
    if not 0.0 <= s <= 1.0:
        raise InvalidDataError(f"{where}: pred_success {s} outside [0, 1]")
    if not t >= 0.0:
        raise InvalidDataError(f"{where}: pred_time {t} is negative")
    return s, t


def hash_stub_embed(goal: str, tactic: str, dim: int = DEFAULT_DIM, salt: int = 0) -> EmbeddingRecord:
    """Deterministic pseudo-embedding seeded by a stable hash of the inputs."""
    if dim < 2:
        raise InvalidInputError("hash stub needs dim >= 2")
    rng = np.random.default_rng(stable_hash64(salt, goal, tactic))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    s = float(rng.uniform())
    t = 0.05 + 0.5 * float(rng.uniform())
    return EmbeddingRecord(goal, tactic, v, s, t)


class HashStubProvider:
    def __init__(self, dim=DEFAULT_DIM, salt=0):
        self.dim = dim
        self.salt = salt

    def embed(self, goal_id, goal_text, tactics):
        out = []
        for t in tactics:
            r = hash_stub_embed(goal_text, t, self.dim, self.salt)
            out.append(EmbeddingRecord(goal_id, t, r.embedding, r.pred_success, r.pred_time))
        return out


class FileProvider:
    """Lookup table keyed by ``(goal_id, tactic_text)`` loaded from JSON lines."""

    def __init__(self, path, dim=DEFAULT_DIM):
        self.dim = dim
        self.path = str(path)
        self.records: dict[tuple[str, str], EmbeddingRecord] = {}
        with open(path, encoding="utf-8") as fh:
            for no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key = (str(obj["goal_id"]), str(obj["tactic_text"]))
                    emb = obj["embedding"]
                    s, t = obj["pred_success"], obj["pred_time"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(no, line.strip(), f"bad embedding record ({exc})") from exc
                where = f"{self.path}:{no}"
                s, t = _check_predictions(s, t, where)
                self.records.setdefault(
                    key, EmbeddingRecord(key[0], key[1], unit_embedding(emb, dim, where), s, t))

    def __len__(self):
        return len(self.records)

    def embed(self, goal_id, goal_text, tactics):
        out = []
        for t in tactics:
            r = self.records.get((goal_id, t))
            if r is None:
                raise MissingEmbeddingError(goal_id, t)
            out.append(r)
        return out


class RemoteProvider:
    """Client for an inference service exposing ``POST /embed``.

    Request: ``{"goal": str, "tactics": [str]}``; response:
    ``{"embeddings": [[float]], "success": [float], "time": [float]}``.
    """

    def __init__(self, endpoint, dim=DEFAULT_DIM, retries=3, timeout_s=30.0, transport=None):
        self.url = endpoint.rstrip("/") + "/embed"
        self.dim = dim
        self.retries = retries
        self.timeout_s = timeout_s
        self._transport = transport

    def _post(self, payload, timeout):
        with httpx.Client(transport=self._transport, timeout=timeout) as client:
            return client.post(self.url, json=payload)

    def _decode(self, resp, goal_id, tactics):
        if resp.status_code != 200:
            raise ValueError(f"HTTP {resp.status_code}")
        body = resp.json()
        embs, succ, times = body["embeddings"], body["success"], body["time"]
        if not (len(embs) == len(succ) == len(times) == len(tactics)):
            raise ValueError("response lengths do not match request")
        out = []
        for t, e, s, tau in zip(tactics, embs, succ, times):
            where = f"{self.url} [{t!r}]"
            s, tau = _check_predictions(s, tau, where)
            out.append(EmbeddingRecord(goal_id, t, unit_embedding(e, self.dim, where), s, tau))
        return out

    def embed(self, goal_id, goal_text, tactics, deadline_s=None):
        timeout = self.timeout_s if deadline_s is None else max(0.001, min(self.timeout_s, deadline_s))
        payload = {"goal": goal_text, "tactics": list(tactics)}
        last = None
        for attempt in range(self.retries + 1):
            try:
                return self._decode(self._post(payload, timeout), goal_id, tactics)
            except InvalidDataError:
                raise
            except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
                last = exc
                log.warning("embed request %d/%d failed: %s", attempt + 1, self.retries + 1, exc)
        raise TransportError(f"POST {self.url} failed: {last}", retries=self.retries)


def make_provider(cfg: ProviderConfig):
    if cfg.kind is ProviderKind.FILE:
        return FileProvider(cfg.source, cfg.dim)
    if cfg.kind is ProviderKind.REMOTE:
        return RemoteProvider(cfg.source, cfg.dim, cfg.retries, cfg.timeout_s)
    return HashStubProvider(cfg.dim, cfg.salt)


def embed_batch(goal: str, tactics, provider, goal_id: str | None = None) -> list[EmbeddingRecord]:
    """Embed ``tactics`` for ``goal``; ``provider`` is a config or a provider object."""
    tactics = list(tactics)
    if not tactics:
        raise InvalidInputError("no tactics to embed")
    if isinstance(provider, ProviderConfig):
        provider = make_provider(provider)
    return provider.embed(goal if goal_id is None else goal_id, goal, tactics)


def write_embeddings(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")

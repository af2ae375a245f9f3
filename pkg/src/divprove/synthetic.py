"""Seeded synthetic proving world.

Goals form a lazily generated DAG. At every goal the candidate tactics come
in clusters of ``cluster_size`` members that share one outcome, so picking
two members of a cluster wastes an environment call. Cluster outcomes are
wired to hash-stub predictions: a cluster succeeds exactly when its
predicted success is at least ``error_rate`` and it always takes its
predicted time. Tactics with equal outcomes share one embedding.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .embed import EmbeddingRecord, hash_stub_embed
from .errors import InvalidInputError
from .transitions import ErrorMessage, Subgoals
from .utils import stable_hash64

ERROR_KINDS = (
    "linarith failed to find a contradiction",
    "simp made no progress",
    "unknown identifier 'h'",
    "type mismatch",
    "motive is not type correct",
    "norm_num failed to simplify",
    "rewrite tactic failed, did not find instance of the pattern",
    "deterministic timeout",
)
_TACTIC = re.compile(r"^tac_c(\d+)_v(\d+)$")


@dataclass(frozen=True)
class ClusterOutcome:
    status: int
    time_s: float
    output: ErrorMessage | Subgoals
    signature: str
    pred_success: float
    pred_time: float


class SyntheticWorld:
    def __init__(self, seed=0, n_goals=10, branching=2, depth=3, cluster_size=4,
                 error_rate=0.75, n_candidates=64, dim=64, close_prob=0.1):
        if min(n_goals, branching, depth, cluster_size, n_candidates, dim) < 1:
            raise InvalidInputError("world size parameters must be positive")
        if not 0.0 <= error_rate < 1.0:
            raise InvalidInputError(f"error_rate must lie in [0, 1), got {error_rate}")
        self.seed = int(seed)
        self.n_goals = n_goals
        self.branching = branching
        self.depth = depth
        self.cluster_size = cluster_size
        self.error_rate = error_rate
        self.n_candidates = n_candidates
        self.dim = max(dim, 2)
        self.close_prob = close_prob
        self.n_clusters = math.ceil(n_candidates / cluster_size)
        self.root_goals = [f"thm{i}" for i in range(n_goals)]
        self._outcomes: dict[str, list[ClusterOutcome]] = {}
        self._candidates: dict[str, list[tuple[str, float]]] = {}
        self._embeddings: dict[tuple[str, str], np.ndarray] = {}
        self.env = SyntheticEnvironment(self)
        self.source = SyntheticSource(self)
        self.provider = SyntheticProvider(self)

    def __iter__(self):
        return iter((self.env, self.source))

    @staticmethod
    def goal_depth(goal: str) -> int:
        return goal.count(".")

    @staticmethod
    def tactic_name(cluster: int, member: int) -> str:
        return f"tac_c{cluster}_v{member}"

    @staticmethod
    def parse_tactic(tactic: str) -> int | None:
        m = _TACTIC.match(tactic)
        return int(m.group(1)) if m else None

    def outcomes(self, goal: str) -> list[ClusterOutcome]:
        cached = self._outcomes.get(goal)
        if cached is not None:
            return cached
        depth = self.goal_depth(goal)
        latent = [hash_stub_embed(goal, f"cluster:{c}", 2, self.seed) for c in range(self.n_clusters)]
        success = [r.pred_success >= self.error_rate for r in latent]
        if not any(success):
            # every goal keeps at least one proof path
            success[int(np.argmax([r.pred_success for r in latent]))] = True
        pool = [f"{goal}.{k}" for k in range(2 * self.branching)]
        out = []
        for c, r in enumerate(latent):
            rng = np.random.default_rng(stable_hash64("outcome", self.seed, goal, c))
            if success[c]:
                if depth + 1 >= self.depth or rng.random() < self.close_prob:
                    goals: tuple[str, ...] = ()
                else:
                    size = int(rng.integers(1, self.branching + 1))
                    goals = tuple(sorted(rng.choice(pool, size=size, replace=False).tolist()))
                output = Subgoals(goals)
                sig = "ok:" + "|".join(goals)
            else:
                output = ErrorMessage(ERROR_KINDS[int(rng.integers(len(ERROR_KINDS)))])
                sig = "err:" + output.text
            out.append(ClusterOutcome(int(success[c]), r.pred_time, output, sig,
                                      r.pred_success, r.pred_time))
        self._outcomes[goal] = out
        return out

    def candidates(self, goal: str) -> list[tuple[str, float]]:
        """Beam-ordered ``(tactic, logit)`` pairs; members of a cluster sit together."""
        cached = self._candidates.get(goal)
        if cached is not None:
            return cached
        rng = np.random.default_rng(stable_hash64("logits", self.seed, goal))
        gaps = rng.exponential(0.7, self.n_clusters)
        base = -0.1 - np.cumsum(gaps)
        order = rng.permutation(self.n_clusters)
        items = []
        for rank, c in enumerate(order):
            for m in range(self.cluster_size):
                if len(items) >= self.n_candidates:
                    break
                items.append((self.tactic_name(int(c), m), float(base[rank] - 0.01 * rng.random())))
        items = items[: self.n_candidates]
        items.sort(key=lambda x: -x[1])
        self._candidates[goal] = items
        return items

    def outcome_of(self, goal: str, tactic: str) -> ClusterOutcome | None:
        c = self.parse_tactic(tactic)
        if c is None or c >= self.n_clusters:
            return None
        return self.outcomes(goal)[c]

    def embedding(self, goal: str, signature: str) -> np.ndarray:
        key = (goal, signature)
        e = self._embeddings.get(key)
        if e is None:
            e = hash_stub_embed(goal, signature, self.dim, self.seed).embedding
            self._embeddings[key] = e
        return e


class SyntheticEnvironment:
    def __init__(self, world: SyntheticWorld):
        self.world = world

    def apply(self, goal_text, tactic_text):
        o = self.world.outcome_of(goal_text, tactic_text)
        if o is None:
            return 0, 0.05, ErrorMessage("unknown tactic")
        return o.status, o.time_s, o.output


class SyntheticSource:
    def __init__(self, world: SyntheticWorld):
        self.world = world

    def propose(self, goal_text, n):
        return list(self.world.candidates(goal_text)[:n])


class SyntheticProvider:
    """Hash-stub embeddings keyed on each tactic's outcome signature."""

    def __init__(self, world: SyntheticWorld):
        self.world = world
        self.dim = world.dim

    def embed(self, goal_id, goal_text, tactics):
        out = []
        for t in tactics:
            o = self.world.outcome_of(goal_text, t)
            if o is None:
                r = hash_stub_embed(goal_text, t, self.world.dim, self.world.seed)
                out.append(EmbeddingRecord(goal_id, t, r.embedding, r.pred_success, r.pred_time))
            else:
                out.append(EmbeddingRecord(goal_id, t, self.world.embedding(goal_text, o.signature),
                                           o.pred_success, o.pred_time))
        return out


def synthetic_world(seed=0, n_goals=10, branching=2, depth=3, cluster_size=4, error_rate=0.75,
                    **kwargs) -> SyntheticWorld:
    """Build a world; unpacks as ``env, source = synthetic_world(...)``."""
    return SyntheticWorld(seed, n_goals, branching, depth, cluster_size, error_rate, **kwargs)

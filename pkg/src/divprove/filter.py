"""Candidate-tactic filtering: quality-weighted k-DPP plus Top-K and Random baselines."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .dpp import FeatureBank, build_kernel, eigendecompose, esp_table, sample_k_dpp
from .errors import InvalidInputError
from .utils import check_matrix, check_positive_int, check_rng, check_vector


class Strategy(str, enum.Enum):
    DPP = "dpp"
    TOPK = "topk"
    RANDOM = "random"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise InvalidInputError(f"unknown strategy {value!r}; expected one of dpp, topk, random")


@dataclass(frozen=True)
class FilterConfig:
    K: int = 8
    lambda_s: float = 0.0
    lambda_tau: float = 0.0
    theta: float = 1.0
    strategy: Strategy = Strategy.DPP

    def __post_init__(self):
        check_positive_int(self.K, "K")
        if not (self.lambda_s >= 0 and math.isfinite(self.lambda_s)):
            raise InvalidInputError(f"lambda_s must be >= 0, got {self.lambda_s}")
        if not (self.lambda_tau >= 0 and math.isfinite(self.lambda_tau)):
            raise InvalidInputError(f"lambda_tau must be >= 0, got {self.lambda_tau}")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise InvalidInputError(f"theta must be > 0, got {self.theta}")
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))


@dataclass(frozen=True)
class ScoredTactic:
    text: str
    logit: float
    embedding: np.ndarray = field(repr=False)
    pred_success: float = 0.0
    pred_time: float = 0.0

    def __post_init__(self):
        e = check_vector(self.embedding, "embedding")
        if abs(float(np.linalg.norm(e)) - 1.0) > 1e-6:
            raise InvalidInputError(f"embedding of {self.text!r} is not unit norm")
        if not math.isfinite(self.logit):
            raise InvalidInputError(f"logit of {self.text!r} is not finite")
        if not 0.0 <= self.pred_success <= 1.0:
            raise InvalidInputError(f"pred_success of {self.text!r} outside [0, 1]")
        if not self.pred_time >= 0.0:
            raise InvalidInputError(f"pred_time of {self.text!r} is negative")
        object.__setattr__(self, "embedding", e)


def normalize_times(times) -> np.ndarray:
    """``1 - t / ||t||_2``; an all-zero vector maps to all ones."""
    t = check_vector(times, "times")
    if np.any(t < 0):
        raise InvalidInputError("times must be non-negative")
    norm = float(np.linalg.norm(t))
    if norm == 0.0:
        return np.ones_like(t)
    return (norm - t) / norm


def softmax_logits(logits, theta: float = 1.0) -> np.ndarray:
    z = check_vector(logits, "logits")
    if z.shape[0] == 0:
        raise InvalidInputError("softmax of an empty logit list")
    if not theta > 0:
        raise InvalidInputError(f"theta must be > 0, got {theta}")
    z = z / theta
    w = np.exp(z - z.max())
    return w / w.sum()


def quality_scores(m, s, tau_norm, cfg: FilterConfig) -> np.ndarray:
    """``q = m + lambda_s * s + lambda_tau * tau_norm``."""
    m = check_vector(m, "m")
    s = check_vector(s, "s")
    tau_norm = check_vector(tau_norm, "tau_norm")
    if not (m.shape == s.shape == tau_norm.shape):
        raise InvalidInputError(
            f"length mismatch: m={m.shape[0]}, s={s.shape[0]}, tau={tau_norm.shape[0]}")
    return m + cfg.lambda_s * s + cfg.lambda_tau * tau_norm


def score(logits, pred_success, pred_time, cfg: FilterConfig) -> np.ndarray:
    m = softmax_logits(logits, cfg.theta)
    return quality_scores(m, pred_success, normalize_times(pred_time), cfg)


def dedup_indices(texts, logits) -> list[int]:
    """Indices that survive collapsing identical texts (higher logit wins, then first)."""
    best: dict[str, int] = {}
    for i, t in enumerate(texts):
        j = best.get(t)
        if j is None or logits[i] > logits[j]:
            best[t] = i
    return sorted(best.values())


def select_indices(embeddings, logits, pred_success, pred_time, cfg: FilterConfig, rng=None,
                   quality=None) -> list[int]:
    """Choose ``min(K, N)`` row indices under ``cfg.strategy``; result sorted ascending.

    Inputs are assumed already deduplicated.
    """
    rng = check_rng(rng)
    logits = check_vector(logits, "logits")
    n = logits.shape[0]
    if n == 0:
        raise InvalidInputError("no candidates to filter")
    if n <= cfg.K:
        return list(range(n))
    if cfg.strategy is Strategy.TOPK:
        return sorted(np.argsort(-logits, kind="stable")[: cfg.K].tolist())
    if cfg.strategy is Strategy.RANDOM:
        return sorted(rng.choice(n, size=cfg.K, replace=False).tolist())

    phi = check_matrix(embeddings, "embeddings")
    if phi.shape[0] != n:
        raise InvalidInputError(f"{phi.shape[0]} embeddings for {n} candidates")
    q = score(logits, pred_success, pred_time, cfg) if quality is None else quality
    decomp = eigendecompose(build_kernel(FeatureBank(phi, q)))
    k = min(cfg.K, decomp.rank)
    chosen = (sample_k_dpp(decomp, k, rng, esp=esp_table(decomp.eigenvalues, k))
              if k > 0 else [])
    if k < cfg.K:
        # rank-deficient kernel: top up with the best remaining qualities
        taken = set(chosen)
        order = [i for i in np.argsort(-q, kind="stable").tolist() if i not in taken]
        chosen = chosen + order[: cfg.K - k]
    return sorted(chosen)


def filter_tactics(goal: str, candidates, cfg: FilterConfig, rng=None) -> list[ScoredTactic]:
    """Prune ``candidates`` for ``goal`` to at most ``cfg.K`` tactics.

    Identical tactic texts are collapsed first. The returned tactics keep
    their input order.
    """
    candidates = list(candidates)
    if not candidates:
        raise InvalidInputError(f"no candidates for goal {goal!r}")
    dims = {c.embedding.shape[0] for c in candidates}
    if len(dims) > 1:
        raise InvalidInputError(f"embedding dimensions differ: {sorted(dims)}")
    keep = dedup_indices([c.text for c in candidates], [c.logit for c in candidates])
    pool = [candidates[i] for i in keep]
    idx = select_indices(
        np.stack([c.embedding for c in pool]),
        [c.logit for c in pool],
        [c.pred_success for c in pool],
        [c.pred_time for c in pool],
        cfg, rng)
    return [pool[i] for i in idx]


class TacticFilter(BaseEstimator):
    """Estimator wrapper around :func:`select_indices`.

    ``fit`` scores one candidate set (rows of ``X`` are unit embeddings);
    ``select`` then draws a filtered subset and may be called repeatedly.
    """

    def __init__(self, K=8, lambda_s=0.0, lambda_tau=0.0, theta=1.0, strategy="dpp",
                 random_state=None):
        self.K = K
        self.lambda_s = lambda_s
        self.lambda_tau = lambda_tau
        self.theta = theta
        self.strategy = strategy
        self.random_state = random_state

    def _config(self) -> FilterConfig:
        return FilterConfig(self.K, self.lambda_s, self.lambda_tau, self.theta, self.strategy)

    def fit(self, X, y=None, *, logits, pred_success=None, pred_time=None):
        X = check_matrix(X, "X")
        n = X.shape[0]
        self.config_ = self._config()
        self.embeddings_ = X
        self.logits_ = check_vector(logits, "logits", length=n)
        self.pred_success_ = (np.zeros(n) if pred_success is None
                              else check_vector(pred_success, "pred_success", length=n))
        self.pred_time_ = (np.zeros(n) if pred_time is None
                           else check_vector(pred_time, "pred_time", length=n))
        self.quality_ = score(self.logits_, self.pred_success_, self.pred_time_, self.config_)
        self.n_features_in_ = X.shape[1]
        self._rng = check_rng(self.random_state)
        return self

    def select(self) -> list[int]:
        if not hasattr(self, "quality_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("TacticFilter instance is not fitted yet; call fit first")
        return select_indices(self.embeddings_, self.logits_, self.pred_success_,
                              self.pred_time_, self.config_, self._rng, quality=self.quality_)

    def fit_select(self, X, y=None, **fit_params) -> list[int]:
        return self.fit(X, y, **fit_params).select()

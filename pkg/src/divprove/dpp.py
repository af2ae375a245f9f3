"""Exact k-DPP machinery.

A k-DPP over ``N`` items with PSD kernel ``L`` assigns a size-``k`` subset
``A`` the probability ``det(L_A) / e_k(lambda)``, where ``e_k`` is the k-th
elementary symmetric polynomial of the eigenvalues of ``L``. Sampling follows
the two-phase eigendecomposition algorithm: choose ``k`` eigenvectors using
the ESP table, then draw items one at a time from the spanned subspace.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import InvalidDataError, InvalidInputError, NumericalError, RankDeficientError
from .utils import check_matrix, check_positive_int, check_rng, check_vector

CLAMP_TOL = 1e-10
# kernels whose most negative eigenvalue exceeds this (relative) are not PSD
PSD_TOL = 1e-8
MAX_ORACLE_ORDER = 12


@dataclass(frozen=True)
class FeatureBank:
    """Unit-norm diversity features ``phi`` (N x d) with positive qualities ``q``."""

    features: np.ndarray
    qualities: np.ndarray

    def __post_init__(self):
        phi = check_matrix(self.features, "features")
        q = check_vector(self.qualities, "qualities")
        if q.shape[0] != phi.shape[0]:
            raise InvalidInputError(
                f"{phi.shape[0]} feature rows but {q.shape[0]} qualities")
        if phi.shape[0] and phi.shape[1] == 0:
            raise InvalidInputError("features have zero dimension")
        norms = np.linalg.norm(phi, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("features must have unit norm (tolerance 1e-6)")
        if np.any(q <= 0):
            raise InvalidInputError("qualities must be strictly positive")
        object.__setattr__(self, "features", phi)
        object.__setattr__(self, "qualities", q)

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Kernel:
    """Symmetric PSD L-ensemble kernel."""

    entries: np.ndarray

    def __post_init__(self):
        L = check_matrix(self.entries, "kernel", square=True)
        asym = np.abs(L - L.T)
        if np.any(asym > 1e-10 * np.maximum(1.0, np.abs(L))):
            raise InvalidInputError("kernel is not symmetric")
        L = 0.5 * (L + L.T)
        L.setflags(write=False)
        object.__setattr__(self, "entries", L)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def to_json(self) -> str:
        return json.dumps({"order": self.order,
                           "entries": self.entries.ravel().tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Kernel":
        try:
            obj = json.loads(text)
            n = int(obj["order"])
            flat = np.asarray(obj["entries"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidDataError(f"malformed kernel file: {exc}") from exc
        if n < 0 or flat.shape != (n * n,):
            raise InvalidDataError(f"kernel order {n} does not match {flat.size} entries")
        return cls(flat.reshape(n, n))


@dataclass(frozen=True)
class Eigendecomposition:
    """Ascending clamped eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > 0))

    @property
    def order(self) -> int:
        return self.eigenvalues.shape[0]


def build_kernel(bank: FeatureBank) -> Kernel:
    """``L_ij = q_i q_j phi_i . phi_j``, symmetrized."""
    B = bank.features * bank.qualities[:, None]
    L = B @ B.T
    return Kernel(0.5 * (L + L.T))


def eigendecompose(kernel: Kernel, clamp_tol: float = CLAMP_TOL) -> Eigendecomposition:
    L = kernel.entries
    n = L.shape[0]
    if n == 0:
        return Eigendecomposition(np.zeros(0), np.zeros((0, 0)))
    try:
        vals, vecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition did not converge (order {n})", order=n) from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise NumericalError(f"non-finite eigendecomposition (order {n})", order=n)
    top = max(float(vals[-1]), 0.0)
    scale = top if top > 0.0 else 1.0
    if vals[0] < -PSD_TOL * scale:
        raise NumericalError(
            f"kernel is not PSD: eigenvalue {vals[0]:.3e} vs max {top:.3e} (order {n})",
            order=n)
    vals = np.where(vals < clamp_tol * top, 0.0, vals)
    if top == 0.0:
        vals = np.zeros_like(vals)
    return Eigendecomposition(vals, vecs)


def esp_table(eigenvalues, k: int) -> np.ndarray:
    """Table ``E[l, n]`` of elementary symmetric polynomials of the first n eigenvalues.

    Row ``l`` runs over 0..k and column ``n`` over 0..N.
    """
    lam = check_vector(eigenvalues, "eigenvalues")
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise InvalidInputError(f"k must be a non-negative integer, got {k!r}")
    k = int(k)
    n = lam.shape[0]
    if k > n:
        raise InvalidInputError(f"k={k} exceeds number of eigenvalues {n}")
    if np.any(lam < 0):
        raise InvalidInputError("eigenvalues must be non-negative")
    E = np.zeros((k + 1, n + 1))
    E[0, :] = 1.0
    for m in range(1, n + 1):
        E[1:, m] = E[1:, m - 1] + lam[m - 1] * E[:-1, m - 1]
    return E


def _select_eigenvectors(lam, E, k, rng) -> list[int]:
    chosen = []
    remaining = k
    for n in range(lam.shape[0], 0, -1):
        if remaining == 0:
            break
        denom = E[remaining, n]
        p = lam[n - 1] * E[remaining - 1, n - 1] / denom if denom > 0 else 0.0
        if rng.random() < p:
            chosen.append(n - 1)
            remaining -= 1
    if remaining:
        # only reachable through round-off when k is close to the rank
        raise NumericalError(f"eigenvector selection ended with {remaining} unfilled slots",
                             order=lam.shape[0])
    return chosen


def _gram_schmidt(V: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the columns of V (in place)."""
    for j in range(V.shape[1]):
        V[:, j] /= math.sqrt(V[:, j] @ V[:, j])
        if j + 1 < V.shape[1]:
            V[:, j + 1:] -= np.outer(V[:, j], V[:, j] @ V[:, j + 1:])
    return V


def _sample_items(V: np.ndarray, rng) -> list[int]:
    items = []
    while V.shape[1] > 0:
        p = np.einsum("ij,ij->i", V, V)
        cdf = np.cumsum(p)
        # renormalized draw guards against accumulated drift in sum(p)
        i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")),
                p.shape[0] - 1)
        items.append(i)
        # eliminate e_i: pivot on the column with the largest weight at row i
        j = int(np.argmax(np.abs(V[i])))
        keep = [c for c in range(V.shape[1]) if c != j]
        V = V[:, keep] - np.outer(V[:, j] / V[i, j], V[i, keep])
        if V.shape[1]:
            V = _gram_schmidt(V)
    return items


def sample_k_dpp(decomp: Eigendecomposition, k: int, rng=None, esp=None) -> list[int]:
    """Draw one size-k subset from the k-DPP defined by ``decomp``.

    Returns sorted item indices. ``esp`` may carry a precomputed
    :func:`esp_table` of ``decomp.eigenvalues`` for repeated draws.
    """
    k = check_positive_int(k, "k")
    rng = check_rng(rng)
    if k > decomp.rank:
        raise RankDeficientError(k, decomp.rank)
    lam = decomp.eigenvalues
    E = esp if esp is not None else esp_table(lam, k)
    chosen = _select_eigenvectors(lam, E, k, rng)
    return sorted(_sample_items(decomp.eigenvectors[:, chosen], rng))


def subset_log_det(kernel: Kernel, subset) -> float:
    idx = list(subset)
    if len(set(idx)) != len(idx):
        raise InvalidInputError(f"subset has repeated indices: {idx}")
    n = kernel.order
    if any(not (0 <= i < n) for i in idx):
        raise InvalidInputError(f"subset indices out of range for order {n}: {idx}")
    if not idx:
        return 0.0
    sub = kernel.entries[np.ix_(idx, idx)]
    sign, logdet = np.linalg.slogdet(sub)
    # Hadamard: det <= prod(diag); treat relative collapse as exact singularity
    diag = np.diag(sub)
    if sign <= 0 or np.any(diag <= 0):
        return -math.inf
    if logdet < np.sum(np.log(diag)) + math.log(1e-12) * len(idx):
        return -math.inf
    return float(logdet)


def exact_k_dpp_pmf(kernel: Kernel, k: int) -> dict[tuple[int, ...], float]:
    """Enumerate ``det(L_A) / sum_{|A'|=k} det(L_A')`` over all size-k subsets."""
    n = kernel.order
    if n > MAX_ORACLE_ORDER:
        raise InvalidInputError(
            f"exact pmf refused for order {n} > {MAX_ORACLE_ORDER}")
    if isinstance(k, bool) or int(k) != k or k < 0 or k > n:
        raise InvalidInputError(f"k must lie in 0..{n}, got {k!r}")
    L = kernel.entries
    dets = {}
    for A in itertools.combinations(range(n), int(k)):
        d = float(np.linalg.det(L[np.ix_(A, A)])) if A else 1.0
        dets[A] = max(d, 0.0)
    total = sum(dets.values())
    if total <= 0:
        raise RankDeficientError(k, int(np.linalg.matrix_rank(L)) if n else 0)
    return {A: d / total for A, d in dets.items()}


def subset_determinant_sum(kernel: Kernel, k: int) -> float:
    """``sum_{|A|=k} det(L_A)`` by enumeration; independent of the ESP route."""
    L = kernel.entries
    return float(sum(np.linalg.det(L[np.ix_(A, A)]) if A else 1.0
                     for A in itertools.combinations(range(kernel.order), k)))


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(a, 0.0) - q.get(a, 0.0)) for a in keys)


def empirical_pmf(samples) -> dict[tuple[int, ...], float]:
    counts: dict[tuple[int, ...], int] = {}
    for s in samples:
        key = tuple(sorted(s))
        counts[key] = counts.get(key, 0) + 1
    total = sum(counts.values())
    return {a: c / total for a, c in counts.items()} if total else {}


class KDPP(BaseEstimator):
    """Fixed-size DPP sampler with a scikit-learn style interface.

    ``fit`` accepts either unit-norm features (N x d) plus ``quality`` or, with
    ``precomputed=True``, a square kernel matrix.

    Parameters
    ----------
    k : int
        Subset size.
    clamp_tol : float
        Eigenvalues below ``clamp_tol * max_eigenvalue`` are set to zero.
    precomputed : bool
        Treat ``X`` passed to ``fit`` as the kernel itself.
    random_state : int, Generator or None
    """

    def __init__(self, k=8, clamp_tol=CLAMP_TOL, precomputed=False, random_state=None):
        self.k = k
        self.clamp_tol = clamp_tol
        self.precomputed = precomputed
        self.random_state = random_state

    def fit(self, X, y=None, quality=None):
        if self.precomputed:
            self.kernel_ = Kernel(X)
        else:
            X = check_matrix(X, "X")
            q = np.ones(X.shape[0]) if quality is None else quality
            self.kernel_ = build_kernel(FeatureBank(X, q))
        self.decomposition_ = eigendecompose(self.kernel_, self.clamp_tol)
        self.rank_ = self.decomposition_.rank
        self.n_features_in_ = self.kernel_.order
        self._esp = None
        self._rng = check_rng(self.random_state)
        return self

    def _check_fitted(self):
        if not hasattr(self, "decomposition_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("KDPP instance is not fitted yet; call fit first")

    def sample(self, n_samples=None):
        """One subset, or a list of ``n_samples`` subsets."""
        self._check_fitted()
        k = check_positive_int(self.k, "k")
        if k > self.rank_:
            raise RankDeficientError(k, self.rank_)
        if self._esp is None:
            self._esp = esp_table(self.decomposition_.eigenvalues, k)
        if n_samples is None:
            return sample_k_dpp(self.decomposition_, k, self._rng, esp=self._esp)
        return [sample_k_dpp(self.decomposition_, k, self._rng, esp=self._esp)
                for _ in range(n_samples)]

    def normalizer(self) -> float:
        """``e_k`` of the kernel eigenvalues."""
        self._check_fitted()
        return float(esp_table(self.decomposition_.eigenvalues, self.k)[self.k, -1])

    def log_probability(self, subset) -> float:
        self._check_fitted()
        if len(subset) != self.k:
            return -math.inf
        return subset_log_det(self.kernel_, subset) - math.log(self.normalizer())

"""Diversified reranking via determinantal point process MAP inference.

The kernel couples relevance and similarity: ranked scores are exponentiated
with a propensity-controlled exponent and placed on the diagonal scale of the
pairwise-similarity matrix. Greedy MAP selection then repeatedly adds the item
with the largest log-determinant gain, computed incrementally through
Cholesky-style residual updates (one O(n) vector op per step instead of a
determinant per candidate).

Determinants of similarity submatrices shrink toward zero as items get more
alike, so near-duplicates are structurally suppressed: a subset containing two
identical items has log-probability -inf and can never be greedily assembled
while an alternative exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .personalization import F_MAX, F_MIN

# kernels whose (scaled) minimum eigenvalue is above -PSD_TOL count as PSD
PSD_TOL = 1e-8
# diagonal jitter applied when the PSD check fails by float noise
PSD_JITTER = 1e-10
# residual gain below which a candidate is numerically dependent on the
# selected set and leaves contention
DEPENDENT_TOL = 1e-12


class NotPositiveSemidefiniteError(ValueError):
    """Kernel is indefinite beyond jitter; message carries the min eigenvalue."""


@dataclass
class RerankInput:
    """One rerank call: items with ranked scores, their similarity, f, and k."""

    items: list[int]
    scores: np.ndarray
    similarity: np.ndarray
    propensity: float
    k: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.similarity = np.asarray(self.similarity, dtype=np.float64)
        n = len(self.items)
        if self.scores.shape != (n,) or self.similarity.shape != (n, n):
            raise ValueError("items, scores and similarity sizes disagree")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("ranked scores must be finite")
        if not 1 <= self.k <= n:
            raise ValueError(f"k={self.k} out of range for {n} items")
        _check_similarity(self.similarity)
        if not F_MIN <= self.propensity <= F_MAX:
            raise ValueError(
                f"propensity {self.propensity} outside [{F_MIN}, {F_MAX}]"
            )


def _check_similarity(s: np.ndarray) -> None:
    if not np.allclose(s, s.T, atol=1e-9, rtol=0.0):
        raise ValueError("similarity matrix is not symmetric")
    if not np.allclose(np.diagonal(s), 1.0, atol=1e-9, rtol=0.0):
        raise ValueError("similarity diagonal must be 1")
    if np.any(np.abs(s) > 1.0 + 1e-9):
        raise ValueError("similarity entries must lie in [-1, 1]")


def adjusted_scores(r: np.ndarray, f: float) -> np.ndarray:
    """Rewrite ranked scores as exp(alpha * r) with alpha = f / (2 (1 - f)).

    Larger f amplifies score differences (relevance dominates selection);
    f near the low clamp flattens them (similarity dominates).
    """
    if not F_MIN <= f <= F_MAX:
        raise ValueError(f"propensity {f} outside [{F_MIN}, {F_MAX}]")
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise ValueError("ranked scores must be finite")
    alpha = f / (2.0 * (1.0 - f))
    return np.exp(alpha * r)


def build_kernel(r_star: np.ndarray, similarity: np.ndarray) -> np.ndarray:
    """Kernel L with L_ij = r*_i * S_ij * r*_j, jittered to PSD if needed."""
    r_star = np.asarray(r_star, dtype=np.float64)
    s = np.asarray(similarity, dtype=np.float64)
    if s.shape != (r_star.shape[0], r_star.shape[0]):
        raise ValueError("score vector and similarity matrix sizes disagree")
    if not np.allclose(s, s.T, atol=1e-9, rtol=0.0):
        raise ValueError("similarity matrix is not symmetric")
    kernel = r_star[:, None] * s * r_star[None, :]
    kernel = (kernel + kernel.T) / 2.0
    if _min_eigenvalue(kernel) < -_psd_tolerance(kernel):
        kernel = kernel + PSD_JITTER * np.eye(kernel.shape[0])
    return kernel


def _min_eigenvalue(kernel: np.ndarray) -> float:
    if kernel.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(kernel)[0])


def _psd_tolerance(kernel: np.ndarray) -> float:
    # relative to the kernel's scale: exponentiated scores can push diagonal
    # entries far above 1, where an absolute 1e-8 would misfire on float noise
    scale = float(np.max(np.abs(np.diagonal(kernel)))) if kernel.size else 1.0
    return PSD_TOL * max(1.0, scale)


def greedy_map(
    kernel: np.ndarray,
    k: int,
    stop_at_nonpositive_gain: bool = False,
    return_gains: bool = False,
):
    """Greedy MAP subset selection on a PSD kernel.

    Each step picks the index with the largest marginal gain
    ``log det(L_{Y + i}) - log det(L_Y)``, maintained incrementally as a
    per-candidate squared residual. Ties break toward the lower index.
    Selection runs to exactly ``min(k, n)`` items even through non-positive
    gains (the least-negative gain wins); ``stop_at_nonpositive_gain`` returns
    early instead, but never before the first item. Candidates whose residual
    drops below DEPENDENT_TOL are numerically dependent on the selected set;
    they are skipped while alternatives remain and appended (stale residual
    order, gain -inf) only if exhaustion forces them in.

    Returns the selection order, plus per-step log-domain gains when
    ``return_gains`` is set.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    n = kernel.shape[0]
    if kernel.ndim != 2 or kernel.shape != (n, n):
        raise ValueError("kernel must be square")
    if k > n:
        raise ValueError(f"k={k} exceeds {n} items")
    tol = _psd_tolerance(kernel)
    if n and float(np.min(np.diagonal(kernel))) < -tol:
        raise NotPositiveSemidefiniteError(
            f"kernel is not PSD: min eigenvalue {_min_eigenvalue(kernel):.3e}"
        )

    residuals = np.array(np.diagonal(kernel), dtype=np.float64)
    update_rows = np.zeros((k, n))
    available = np.ones(n, dtype=bool)
    selected: list[int] = []
    gains: list[float] = []
    exhausted = False

    while len(selected) < k:
        candidates = available & (residuals >= DEPENDENT_TOL)
        if not candidates.any():
            exhausted = True
            break
        masked = np.where(candidates, residuals, -np.inf)
        best = int(np.argmax(masked))
        gain = float(np.log(residuals[best]))
        if stop_at_nonpositive_gain and selected and gain <= 0.0:
            break
        depth = len(selected)
        root = np.sqrt(residuals[best])
        row = (kernel[best, :] - update_rows[:depth, best] @ update_rows[:depth, :]) / root
        update_rows[depth, :] = row
        residuals -= np.square(row)
        available[best] = False
        selected.append(best)
        gains.append(gain)

    if exhausted and not stop_at_nonpositive_gain:
        # forced picks among numerically dependent leftovers: stale residual
        # order, ties toward the lower index
        leftovers = sorted(np.flatnonzero(available), key=lambda i: (-residuals[i], i))
        for idx in leftovers[: k - len(selected)]:
            selected.append(int(idx))
            gains.append(-np.inf)

    if return_gains:
        return selected, gains
    return selected


def log_prob(kernel: np.ndarray, subset: Iterable[int]) -> float:
    """Unnormalized log-probability of a subset: log det of its submatrix.

    The empty subset maps to 0.0; a singular submatrix (e.g. two identical
    items) maps to -inf.
    """
    idx = sorted(set(int(i) for i in subset))
    if not idx:
        return 0.0
    kernel = np.asarray(kernel, dtype=np.float64)
    if idx[0] < 0 or idx[-1] >= kernel.shape[0]:
        raise ValueError(f"subset {idx} out of range for n={kernel.shape[0]}")
    sub = kernel[np.ix_(idx, idx)]
    eigs = np.linalg.eigvalsh(sub)
    cutoff = max(eigs[-1], 0.0) * len(idx) * np.finfo(np.float64).eps
    if eigs[0] <= cutoff:
        return float("-inf")
    return float(np.sum(np.log(eigs)))


def rerank(
    rerank_input: RerankInput, stop_at_nonpositive_gain: bool = False
) -> list[int]:
    """Full pipeline: score adjustment, kernel build, greedy MAP, id mapping."""
    r_star = adjusted_scores(rerank_input.scores, rerank_input.propensity)
    kernel = build_kernel(r_star, rerank_input.similarity)
    order = greedy_map(
        kernel, rerank_input.k, stop_at_nonpositive_gain=stop_at_nonpositive_gain
    )
    return [rerank_input.items[i] for i in order]

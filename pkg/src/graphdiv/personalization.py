"""Per-user real-time diversity propensity.

A user's recent positive interactions (a temporal sliding window) are scored
by their mean pairwise embedding similarity; that statistic is standardized
against the whole population and squashed through a sigmoid. The result is a
propensity in (0, 1): high values mean the user has been consuming
self-similar content lately, so reranking should weight relevance more;
low values mean the user is already exploring, so diversity costs little.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

# Propensity clamp. The reranker exponent f / (2 (1 - f)) diverges as f -> 1;
# clamping keeps it <= 9.5.
F_MIN = 0.05
F_MAX = 0.95

# Assigned when a user has fewer than two windowed items: the equal-importance
# point between relevance and diversity.
DEFAULT_PROPENSITY = 0.5


@dataclass
class UserState:
    """Windowed positives and the derived (s_u, f_u) pair for one user."""

    user: int
    window: list[tuple[int, float]] = field(default_factory=list)
    s_u: float | None = None
    f_u: float = DEFAULT_PROPENSITY
    last_update: float = 0.0


@dataclass
class PopulationStats:
    """Cross-user mean/std of the similarity statistic, for z-scoring."""

    mean: float
    std: float
    count: int


def window_filter(
    history: Sequence[tuple[int, float]], now: float, horizon: float
) -> list[int]:
    """Items whose timestamp falls in (now - horizon, now], order preserved."""
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    return [item for item, ts in history if now - horizon < ts <= now]


def mean_pairwise_similarity(
    items: Sequence[int],
    table: Mapping[int, np.ndarray],
    use_distance: bool = False,
) -> float | None:
    """Mean cosine over unordered distinct pairs of the items' embeddings.

    Items without an embedding are skipped. Returns None when fewer than two
    embeddable items remain (caller substitutes DEFAULT_PROPENSITY downstream).
    With ``use_distance`` the statistic flips to mean pairwise (1 - cosine),
    for comparison runs against the distance-flavored variant.
    """
    vecs = [table[i] for i in items if i in table]
    if len(vecs) < 2:
        return None
    mat = np.asarray(vecs, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    mat = mat / np.where(norms > 0, norms, 1.0)[:, None]
    gram = mat @ mat.T
    m = len(vecs)
    mean_sim = (gram.sum() - np.trace(gram)) / (m * (m - 1))
    return float(1.0 - mean_sim) if use_distance else float(mean_sim)


def diversity_propensity(
    s_u: float,
    stats: PopulationStats,
    f_min: float = F_MIN,
    f_max: float = F_MAX,
) -> float:
    """Sigmoid of the z-scored similarity statistic, clamped to [f_min, f_max].

    A degenerate population (std == 0) maps every user to 0.5.
    """
    if stats.std == 0.0:
        return DEFAULT_PROPENSITY
    z = (s_u - stats.mean) / stats.std
    if z >= 0:
        f = 1.0 / (1.0 + math.exp(-z))
    else:
        e = math.exp(z)
        f = e / (1.0 + e)
    return min(max(f, f_min), f_max)


def update_population(all_user_s: Sequence[float]) -> PopulationStats:
    """Population mean and (uncorrected) standard deviation of users' s values."""
    if len(all_user_s) == 0:
        raise ValueError("population update needs at least one user statistic")
    arr = np.asarray(all_user_s, dtype=np.float64)
    return PopulationStats(
        mean=float(arr.mean()), std=float(arr.std()), count=len(arr)
    )

"""Diversity metrics over simulation logs.

Intra-list distance averages pairwise (1 - cosine) inside each user's exposed
feed, then across users: how varied is what one user sees. The same
computation over retrieval candidate sets measures how varied the pool the
system draws from is, which is the system-level signal. Both live in [0, 2]
since embeddings are unit-norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

CSV_FIELDS = ("round", "ilad", "rd", "coverage", "positives", "graph_edges")

# per-user candidate lists are subsampled to this size before the O(m^2)
# pairwise pass
RD_SUBSAMPLE = 200


@dataclass
class RoundReport:
    """Per-round rollup written as one CSV row."""

    round: int
    ilad: float
    rd: float
    coverage: float
    positives: int
    graph_edges: int

    def csv_row(self) -> str:
        return "{},{:.6f},{:.6f},{:.6f},{},{}".format(
            self.round, self.ilad, self.rd, self.coverage,
            self.positives, self.graph_edges,
        )

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_FIELDS)


def _unit_rows(vectors: list[np.ndarray]) -> np.ndarray:
    mat = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    return mat / np.where(norms > 0, norms, 1.0)[:, None]


def mean_pairwise_distance(vectors: list[np.ndarray]) -> float:
    """Mean (1 - cosine) over unordered distinct pairs; needs >= 2 vectors."""
    m = len(vectors)
    if m < 2:
        raise ValueError("need at least two vectors")
    mat = _unit_rows(vectors)
    gram = mat @ mat.T
    mean_sim = (gram.sum() - np.trace(gram)) / (m * (m - 1))
    return float(1.0 - mean_sim)


def ilad(
    lists: Sequence[Sequence[int]], table: Mapping[int, np.ndarray]
) -> float:
    """Mean over users of mean pairwise embedding distance within each list.

    Lists with fewer than two embeddable items are excluded from the outer
    mean; raises ValueError when every list is excluded.
    """
    per_user = []
    for items in lists:
        vecs = [table[i] for i in items if i in table]
        if len(vecs) >= 2:
            per_user.append(mean_pairwise_distance(vecs))
    if not per_user:
        raise ValueError("no user list has two or more embeddable items")
    return float(np.mean(per_user))


def rd(
    candidate_lists: Sequence[Sequence[int]],
    table: Mapping[int, np.ndarray],
    max_items: int = RD_SUBSAMPLE,
    seed: int = 0,
) -> float:
    """ilad over retrieval candidate lists, subsampled to max_items per user.

    Subsampling is seeded per (seed, user position) so results are
    deterministic and independent of other users' list sizes.
    """
    capped = []
    for pos, items in enumerate(candidate_lists):
        items = list(items)
        if len(items) > max_items:
            rng = np.random.default_rng([seed & 0xFFFFFFFF, pos])
            pick = rng.choice(len(items), size=max_items, replace=False)
            items = [items[i] for i in np.sort(pick)]
        capped.append(items)
    return ilad(capped, table)


def coverage(exposure_log: Iterable[int], catalog_size: int) -> float:
    """Fraction of the catalog exposed at least once."""
    if catalog_size < 1:
        raise ValueError("catalog_size must be >= 1")
    return len(set(exposure_log)) / catalog_size

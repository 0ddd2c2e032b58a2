"""Candidate matching by cosine similarity against the embedding table.

A user's recent positive items act as multiple interest probes: every catalog
item is scored by its best cosine against any probe (max-aggregation keeps
distinct interests alive instead of averaging them away), and the top-N
unexcluded items form the candidate set. Desk-scale catalogs are scanned
exactly; no approximate index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, Sequence

import numpy as np

from .embedding import EmbeddingTable


class ColdStartError(ValueError):
    """No usable history to match against; caller should fall back."""


@dataclass
class CandidateSet:
    """Top-N matches, descending score, ties broken by ascending item id."""

    items: list[tuple[int, float]]
    source_round: int = 0

    def ids(self) -> list[int]:
        return [item for item, _ in self.items]

    def scores(self) -> np.ndarray:
        return np.asarray([score for _, score in self.items], dtype=np.float64)


def match_candidates(
    history_positives: Sequence[int],
    table: EmbeddingTable,
    n: int,
    exclusions: Collection[int] = frozenset(),
    source_round: int = 0,
) -> CandidateSet:
    """Top-n catalog items by max cosine against the user's history embeddings.

    Raises ColdStartError when no history item has an embedding, and
    ValueError on an empty table or n < 1. Excluded ids never appear.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(table) == 0:
        raise ValueError("embedding table is empty")
    probes = [table[item] for item in history_positives if item in table]
    if not probes:
        raise ColdStartError("user history has no embeddable items")

    ids = np.asarray(table.ids(), dtype=np.int64)
    scores = (table.matrix @ np.asarray(probes).T).max(axis=1)
    if exclusions:
        keep = np.asarray([item not in exclusions for item in ids], dtype=bool)
        ids, scores = ids[keep], scores[keep]
    order = np.lexsort((ids, -scores))[:n]
    return CandidateSet(
        items=[(int(ids[i]), float(scores[i])) for i in order],
        source_round=source_round,
    )

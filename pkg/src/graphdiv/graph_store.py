"""Item-item co-interaction graph: weighted edges, node features, random-walk sampling.

Nodes are catalog items with fixed-dimension feature vectors. An edge between
two items means they were positively interacted in the same user session; its
integer weight counts how many sessions co-interacted the pair. The graph is
mutated in batches between recommendation rounds and carries a monotone
version counter so downstream consumers (embedding training, caches) can tell
whether anything changed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Sessions longer than this only contribute pairs among their first
# MAX_SESSION_CLIQUE positives; full cliques on degenerate long sessions
# would blow up quadratically.
MAX_SESSION_CLIQUE = 50


class GraphError(ValueError):
    """Rejected graph mutation or query (duplicate node, unknown item, ...)."""


class SnapshotFormatError(ValueError):
    """Snapshot file is malformed; message carries line context."""


@dataclass
class SessionRecord:
    """One user session's positive interactions."""

    user: int
    positive_items: list[int]
    timestamp: float

    def __post_init__(self):
        if len(set(self.positive_items)) != len(self.positive_items):
            raise GraphError(
                f"session for user {self.user} has duplicate positive items"
            )


class ItemGraph:
    """Undirected item graph with integer co-interaction edge weights.

    Not thread-safe for writes. Readers that need a stable view across a
    simulation round should either finish before the round's batch update or
    work on a ``copy()``.
    """

    WALK_WEIGHTINGS = ("count", "sqrt", "uniform")

    def __init__(self, feature_dim: int | None = None, walk_weighting: str = "sqrt"):
        if walk_weighting not in self.WALK_WEIGHTINGS:
            raise GraphError(f"unknown walk_weighting {walk_weighting!r}")
        self._features: dict[int, np.ndarray] = {}
        self._adj: dict[int, dict[int, int]] = {}
        self.feature_dim = feature_dim
        self.walk_weighting = walk_weighting
        self.version = 0
        # per-node walk tables, rebuilt lazily when the version moves
        self._walk_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._walk_cache_version = -1

    # ------------------------------------------------------------------
    # introspection
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._features)

    def __contains__(self, item_id: int) -> bool:
        return item_id in self._features

    def node_ids(self) -> list[int]:
        return sorted(self._features)

    def node_count(self) -> int:
        return len(self._features)

    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self._adj.values()) // 2

    def features(self, item_id: int) -> np.ndarray:
        try:
            return self._features[item_id]
        except KeyError:
            raise GraphError(f"unknown item {item_id}") from None

    def neighbors(self, item_id: int) -> dict[int, int]:
        """Neighbor id -> edge weight for one node (copy)."""
        if item_id not in self._features:
            raise GraphError(f"unknown item {item_id}")
        return dict(self._adj.get(item_id, {}))

    def weight(self, a: int, b: int) -> int:
        return self._adj.get(a, {}).get(b, 0)

    # ------------------------------------------------------------------
    # mutation
    # ------------------------------------------------------------------

    def add_item(self, item_id: int, features: Sequence[float] | np.ndarray) -> None:
        """Insert a new node with zero edges.

        Raises GraphError on duplicate ids or a feature-dimension mismatch
        with the catalog.
        """
        if item_id in self._features:
            raise GraphError(f"duplicate item {item_id}")
        vec = np.asarray(features, dtype=np.float64)
        if vec.ndim != 1:
            raise GraphError(f"features for item {item_id} must be a 1-d vector")
        if not np.all(np.isfinite(vec)):
            raise GraphError(f"features for item {item_id} contain non-finite values")
        if self.feature_dim is None:
            self.feature_dim = int(vec.shape[0])
        elif vec.shape[0] != self.feature_dim:
            raise GraphError(
                f"feature dimension {vec.shape[0]} for item {item_id} does not "
                f"match catalog dimension {self.feature_dim}"
            )
        self._features[item_id] = vec
        self._adj[item_id] = {}

    def add_session_edges(self, session: SessionRecord) -> int:
        """Apply one session as its own batch; see apply_sessions."""
        return self.apply_sessions([session])

    def apply_sessions(self, sessions: Iterable[SessionRecord]) -> int:
        """Add +1 edge weight for every unordered positive pair of each session.

        The whole batch is validated before any edge is touched, so an unknown
        item leaves the graph unchanged. The version counter is incremented
        once per batch. Returns the number of pair increments applied.
        """
        sessions = list(sessions)
        for session in sessions:
            for item in session.positive_items:
                if item not in self._features:
                    raise GraphError(
                        f"session for user {session.user} references unknown item {item}"
                    )
        increments = 0
        for session in sessions:
            items = session.positive_items[:MAX_SESSION_CLIQUE]
            for a, b in itertools.combinations(items, 2):
                self._adj[a][b] = self._adj[a].get(b, 0) + 1
                self._adj[b][a] = self._adj[b].get(a, 0) + 1
                increments += 1
        self.version += 1
        return increments

    def copy(self) -> "ItemGraph":
        dup = ItemGraph(self.feature_dim, self.walk_weighting)
        dup._features = dict(self._features)
        dup._adj = {node: dict(nbrs) for node, nbrs in self._adj.items()}
        dup.version = self.version
        return dup

    # ------------------------------------------------------------------
    # random-walk neighbor sampling
    # ------------------------------------------------------------------

    def sample_neighbors(
        self, node: int, fanout: int, walk_length: int, rng_seed
    ) -> list[int]:
        """Sample up to ``fanout`` distinct nodes reachable by random walks.

        Runs ``fanout`` walks of ``walk_length`` steps from ``node``, stepping
        proportionally to edge weight. Visited nodes are deduplicated in
        first-visit order and truncated to ``fanout``; the start node itself
        is excluded. Deterministic for a fixed seed and graph version. An
        isolated node yields an empty list.
        """
        rng = np.random.default_rng(rng_seed)
        return self.sample_neighbors_rng(node, fanout, walk_length, rng)

    def sample_neighbors_rng(
        self, node: int, fanout: int, walk_length: int, rng: np.random.Generator
    ) -> list[int]:
        """sample_neighbors with a caller-owned Generator (hot path for training)."""
        if node not in self._features:
            raise GraphError(f"unknown item {node}")
        if fanout < 1 or walk_length < 1:
            raise GraphError("fanout and walk_length must be >= 1")
        if not self._adj.get(node):
            return []
        visited: dict[int, None] = {}
        steps = rng.random((fanout, walk_length))
        for walk in range(fanout):
            current = node
            for step in range(walk_length):
                ids, cumw = self._walk_table(current)
                if ids.size == 0:
                    break
                current = int(ids[np.searchsorted(cumw, steps[walk, step] * cumw[-1], side="right")])
                if current != node:
                    visited.setdefault(current)
            if len(visited) >= fanout:
                break
        return list(visited)[:fanout]

    def _walk_table(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        if self._walk_cache_version != self.version:
            self._walk_cache.clear()
            self._walk_cache_version = self.version
        table = self._walk_cache.get(node)
        if table is None:
            nbrs = self._adj.get(node, {})
            ids = np.fromiter(nbrs.keys(), dtype=np.int64, count=len(nbrs))
            weights = np.fromiter(nbrs.values(), dtype=np.float64, count=len(nbrs))
            if self.walk_weighting == "sqrt":
                weights = np.sqrt(weights)
            elif self.walk_weighting == "uniform":
                weights = np.ones_like(weights)
            order = np.argsort(ids)
            table = (ids[order], np.cumsum(weights[order]))
            self._walk_cache[node] = table
        return table

    # ------------------------------------------------------------------
    # snapshot I/O
    # ------------------------------------------------------------------
    # Line-oriented UTF-8, single-tab separated:
    #   header:  node_count  edge_count  feature_dim  version
    #   nodes:   id  f_1 ... f_d          (sorted by id)
    #   edges:   id_i  id_j  weight       (i < j, sorted)

    def snapshot(self, path) -> None:
        lines = [
            "\t".join(
                str(v)
                for v in (
                    self.node_count(),
                    self.edge_count(),
                    self.feature_dim or 0,
                    self.version,
                )
            )
        ]
        for node in self.node_ids():
            feats = "\t".join(repr(float(x)) for x in self._features[node])
            lines.append(f"{node}\t{feats}" if feats else str(node))
        for a in self.node_ids():
            for b in sorted(self._adj[a]):
                if a < b:
                    lines.append(f"{a}\t{b}\t{self._adj[a][b]}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ItemGraph":
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()

        def fail(lineno: int, msg: str):
            raise SnapshotFormatError(f"{path}: line {lineno}: {msg}")

        if not raw:
            raise SnapshotFormatError(f"{path}: line 1: empty snapshot file")
        head = raw[0].split("\t")
        if len(head) != 4:
            fail(1, f"expected 4 header fields, got {len(head)}")
        try:
            n_nodes, n_edges, dim, version = (int(x) for x in head)
        except ValueError:
            fail(1, f"non-integer header field in {head!r}")
        graph = cls(dim if dim > 0 else None)
        expected = 1 + n_nodes + n_edges
        if len(raw) < expected:
            fail(len(raw), f"truncated file: expected {expected} lines, got {len(raw)}")
        for i in range(n_nodes):
            lineno = 2 + i
            parts = raw[1 + i].split("\t")
            if dim > 0 and len(parts) != 1 + dim:
                fail(lineno, f"expected id + {dim} feature fields, got {len(parts)}")
            try:
                node = int(parts[0])
                feats = [float(x) for x in parts[1:]]
            except ValueError:
                fail(lineno, f"non-numeric node field in {parts!r}")
            try:
                graph.add_item(node, feats)
            except GraphError as exc:
                fail(lineno, str(exc))
        for i in range(n_edges):
            lineno = 2 + n_nodes + i
            parts = raw[1 + n_nodes + i].split("\t")
            if len(parts) != 3:
                fail(lineno, f"expected 3 edge fields, got {len(parts)}")
            try:
                a, b, w = (int(x) for x in parts)
            except ValueError:
                fail(lineno, f"non-integer edge field in {parts!r}")
            if a == b:
                fail(lineno, f"self-loop on item {a}")
            if w < 1:
                fail(lineno, f"edge weight {w} < 1")
            if a not in graph._features or b not in graph._features:
                fail(lineno, f"edge ({a}, {b}) references unknown item")
            graph._adj[a][b] = w
            graph._adj[b][a] = w
        graph.version = version
        return graph

    # ------------------------------------------------------------------
    # invariants (used by tests and post-update checks)
    # ------------------------------------------------------------------

    def check_symmetry(self) -> None:
        for a, nbrs in self._adj.items():
            for b, w in nbrs.items():
                if self._adj.get(b, {}).get(a) != w:
                    raise GraphError(f"asymmetric edge ({a}, {b})")
                if a == b:
                    raise GraphError(f"self-loop on item {a}")

"""Inductive item embeddings trained on the co-interaction graph.

Each layer aggregates sampled neighbor representations (element-wise mean),
concatenates them with the node's own representation, applies a trainable
linear map and a nonlinearity. Training is unsupervised: random-walk co-visited
item pairs are positives for a skip-gram loss with uniformly sampled negatives.
Because the model is a pure function of node features and sampled
neighborhoods, items that joined the catalog after training can be embedded
from their features alone (empty neighborhoods at every layer).

All outputs are L2-normalized, so dot products downstream are cosines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph_store import ItemGraph

logger = logging.getLogger(__name__)

# per-purpose salts for seed derivation, so sampling streams never collide
_SALT_INIT = 1
_SALT_LAYER = 11
_SALT_POSITIVES = 21
_SALT_NEGATIVES = 31

# logits fed to the skip-gram sigmoid are cosine * COSINE_LOGIT_SCALE
COSINE_LOGIT_SCALE = 2.0

_NORM_EPS = 1e-12


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in key])


def hashed_unit_vector(item_id: int, dim: int) -> np.ndarray:
    """Deterministic unit vector for items whose embedding degenerates to zero."""
    rng = _rng(int(item_id) * 2654435761, 0x9E3779B9)
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


# ----------------------------------------------------------------------
# weights
# ----------------------------------------------------------------------

_ACTIVATIONS = ("relu", "identity")


@dataclass
class LayerWeights:
    """Stack of per-layer linear maps, each of shape (out_dim, 2 * in_dim)."""

    matrices: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not self.matrices or len(self.matrices) != len(self.activations):
            raise ValueError("need one activation tag per layer matrix")
        for act in self.activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        in_dim = self.matrices[0].shape[1] // 2
        for i, w in enumerate(self.matrices):
            if w.ndim != 2 or w.shape[1] != 2 * in_dim:
                raise ValueError(
                    f"layer {i} expects input dim {in_dim}, got matrix shape {w.shape}"
                )
            if not np.all(np.isfinite(w)):
                raise ValueError(f"layer {i} has non-finite weights")
            in_dim = w.shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.matrices)

    @property
    def feature_dim(self) -> int:
        return self.matrices[0].shape[1] // 2

    @property
    def output_dim(self) -> int:
        return self.matrices[-1].shape[0]

    def copy(self) -> "LayerWeights":
        return LayerWeights([w.copy() for w in self.matrices], list(self.activations))

    def save(self, path) -> None:
        lines = [str(self.num_layers)]
        for w, act in zip(self.matrices, self.activations):
            lines.append(f"{w.shape[0]}\t{w.shape[1]}\t{act}")
            for row in w:
                lines.append("\t".join(repr(float(x)) for x in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "LayerWeights":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        try:
            n_layers = int(lines[0])
            matrices, activations = [], []
            pos = 1
            for _ in range(n_layers):
                rows_s, cols_s, act = lines[pos].split("\t")
                rows, cols = int(rows_s), int(cols_s)
                block = [
                    [float(x) for x in lines[pos + 1 + r].split("\t")]
                    for r in range(rows)
                ]
                w = np.asarray(block, dtype=np.float64)
                if w.shape != (rows, cols):
                    raise ValueError(f"bad block shape {w.shape}")
                matrices.append(w)
                activations.append(act)
                pos += 1 + rows
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: malformed weights file: {exc}") from exc
        return cls(matrices, activations)


@dataclass
class TrainConfig:
    """Knobs for the unsupervised trainer; dims/fanout are per layer."""

    dims: tuple[int, ...] = (32, 32)
    fanout: tuple[int, ...] = (10, 10)
    walk_length: int = 3
    negatives: int = 5
    epochs: int = 30
    learning_rate: float = 0.05
    rng_seed: int = 0
    # resampling walks each epoch is closer to minibatch training but ~10x
    # slower; the fixed-sample objective is plenty at desk scale
    resample_walks: bool = False

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.fanout = tuple(int(f) for f in self.fanout)
        if not self.dims or min(self.dims) < 1:
            raise ValueError("dims must be >= 1 per layer")
        if len(self.fanout) != len(self.dims) or min(self.fanout) < 1:
            raise ValueError("need one fanout >= 1 per layer")
        if self.walk_length < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("walk_length, negatives and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")


# ----------------------------------------------------------------------
# embedding table
# ----------------------------------------------------------------------


class EmbeddingTable:
    """Item id -> unit-norm embedding, stamped with the graph version it saw."""

    def __init__(self, ids: Sequence[int], vectors: np.ndarray, graph_version: int):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(ids):
            raise ValueError("need one vector row per id")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding table has non-finite entries")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms < _NORM_EPS):
            raise ValueError("embedding table has zero-norm rows")
        self._ids = [int(i) for i in ids]
        self._matrix = vectors / norms[:, None]
        self._row = {item: row for row, item in enumerate(self._ids)}
        if len(self._row) != len(self._ids):
            raise ValueError("duplicate ids in embedding table")
        self.graph_version = int(graph_version)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, item_id: int) -> bool:
        return item_id in self._row

    def __getitem__(self, item_id: int) -> np.ndarray:
        return self._matrix[self._row[item_id]]

    def get(self, item_id: int, default=None):
        row = self._row.get(item_id)
        return default if row is None else self._matrix[row]

    def ids(self) -> list[int]:
        return list(self._ids)

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """Row i is the embedding of ids()[i]; do not mutate."""
        return self._matrix

    def add(self, item_id: int, vector: np.ndarray) -> None:
        """Append one item (e.g. inferred for a catalog addition)."""
        item_id = int(item_id)
        if item_id in self._row:
            raise ValueError(f"item {item_id} already in table")
        vector = np.asarray(vector, dtype=np.float64)
        norm = np.linalg.norm(vector)
        if not np.all(np.isfinite(vector)) or norm < _NORM_EPS:
            raise ValueError(f"bad embedding for item {item_id}")
        self._matrix = np.vstack([self._matrix, vector / norm])
        self._row[item_id] = len(self._ids)
        self._ids.append(item_id)

    def save(self, path) -> None:
        lines = [f"{len(self)}\t{self.dim}\t{self.graph_version}"]
        for item, row in zip(self._ids, self._matrix):
            lines.append(str(item) + "\t" + "\t".join(repr(float(x)) for x in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        try:
            count_s, dim_s, version_s = lines[0].split("\t")
            count, dim, version = int(count_s), int(dim_s), int(version_s)
            ids, rows = [], []
            for line in lines[1 : 1 + count]:
                parts = line.split("\t")
                if len(parts) != 1 + dim:
                    raise ValueError(f"expected id + {dim} values, got {len(parts)}")
                ids.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            if len(ids) != count:
                raise ValueError(f"expected {count} rows, got {len(ids)}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: malformed embedding table: {exc}") from exc
        return cls(ids, np.asarray(rows, dtype=np.float64), version)


@dataclass
class TrainResult:
    table: EmbeddingTable
    weights: LayerWeights
    epoch_losses: list[float] = field(default_factory=list)


# ----------------------------------------------------------------------
# core ops
# ----------------------------------------------------------------------


def aggregate_neighbors(
    neighbor_embeddings: Sequence[np.ndarray], dim: int | None = None
) -> np.ndarray:
    """Element-wise mean of neighbor vectors; empty neighborhoods map to zero.

    ``dim`` is required for the empty case and validated otherwise.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in neighbor_embeddings]
    if not vectors:
        if dim is None:
            raise ValueError("dim is required for an empty neighborhood")
        return np.zeros(dim)
    width = vectors[0].shape
    for v in vectors:
        if v.shape != width:
            raise ValueError(f"mixed neighbor dimensions {width} vs {v.shape}")
    if dim is not None and width != (dim,):
        raise ValueError(f"neighbor dimension {width} does not match dim={dim}")
    return np.mean(vectors, axis=0)


def _apply_activation(pre: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(pre, 0.0)
    return pre


def propagate(
    node_embedding: np.ndarray,
    neighborhood_embedding: np.ndarray,
    weights: LayerWeights,
    layer: int,
) -> np.ndarray:
    """One layer step: activation(W_l @ [node ; neighborhood])."""
    w = weights.matrices[layer]
    node = np.asarray(node_embedding, dtype=np.float64)
    neigh = np.asarray(neighborhood_embedding, dtype=np.float64)
    stacked = np.concatenate([node, neigh])
    if stacked.shape[0] != w.shape[1]:
        raise ValueError(
            f"layer {layer} expects concatenated dim {w.shape[1]}, got {stacked.shape[0]}"
        )
    return _apply_activation(w @ stacked, weights.activations[layer])


def _mean_operator(
    graph: ItemGraph,
    ids: Sequence[int],
    rowmap: dict[int, int],
    fanout: int,
    walk_length: int,
    seed: int,
    layer: int,
    epoch: int = 0,
) -> sp.csr_matrix:
    """Sparse (n x n) operator whose i-th row averages i's sampled neighbors."""
    rows, cols, vals = [], [], []
    for row_idx, node in enumerate(ids):
        rng = _rng(seed, _SALT_LAYER, layer, epoch, node)
        nbrs = graph.sample_neighbors_rng(node, fanout, walk_length, rng)
        nbrs = [b for b in nbrs if b in rowmap]
        if not nbrs:
            continue
        w = 1.0 / len(nbrs)
        for b in nbrs:
            rows.append(row_idx)
            cols.append(rowmap[b])
            vals.append(w)
    n = len(ids)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _forward(
    features: np.ndarray,
    operators: Sequence[sp.csr_matrix],
    weights: LayerWeights,
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Full-graph forward pass; returns normalized output plus caches for backprop."""
    h = features
    concats, preacts = [], []
    for op, w, act in zip(operators, weights.matrices, weights.activations):
        stacked = np.hstack([h, op @ h])
        pre = stacked @ w.T
        concats.append(stacked)
        preacts.append(pre)
        h = _apply_activation(pre, act)
    norms = np.linalg.norm(h, axis=1)
    safe = np.maximum(norms, _NORM_EPS)
    return h / safe[:, None], concats, preacts, norms


def embed_nodes(
    graph: ItemGraph,
    weights: LayerWeights,
    fanout: Sequence[int],
    walk_length: int,
    seed: int,
    node_ids: Sequence[int] | None = None,
) -> tuple[list[int], np.ndarray]:
    """Deterministically embed graph nodes with the given weights.

    Runs a full-graph forward pass with per-node seeded neighbor samples, so
    recomputing with the same arguments reproduces stored embeddings exactly.
    Returns (ids, unit-norm matrix); zero-norm outputs are replaced by the
    hashed fallback vector.
    """
    if len(fanout) != weights.num_layers:
        raise ValueError("need one fanout per layer")
    ids = graph.node_ids()
    rowmap = {node: i for i, node in enumerate(ids)}
    feats = np.vstack([graph.features(i) for i in ids])
    operators = [
        _mean_operator(graph, ids, rowmap, f, walk_length, seed, layer)
        for layer, f in enumerate(fanout)
    ]
    z, _, _, norms = _forward(feats, operators, weights)
    degenerate = np.flatnonzero(norms < _NORM_EPS)
    if degenerate.size:
        logger.warning(
            "%d node embeddings degenerated to zero norm; using hashed fallback",
            degenerate.size,
        )
        for row in degenerate:
            z[row] = hashed_unit_vector(ids[row], z.shape[1])
    if node_ids is not None:
        pick = [rowmap[i] for i in node_ids]
        return list(node_ids), z[pick]
    return ids, z


def infer_unseen(
    features: Sequence[float] | np.ndarray,
    weights: LayerWeights,
    item_id: int | None = None,
) -> np.ndarray:
    """Embed an item that has no graph edges, from its features alone.

    Uses the zero-vector convention for every layer's neighborhood, then
    L2-normalizes. A zero-norm output falls back to the hashed unit vector
    when ``item_id`` is given, else raises ValueError.
    """
    vec = np.asarray(features, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != weights.feature_dim:
        raise ValueError(
            f"expected feature dim {weights.feature_dim}, got shape {vec.shape}"
        )
    h = vec
    for layer in range(weights.num_layers):
        h = propagate(h, np.zeros_like(h), weights, layer)
    norm = np.linalg.norm(h)
    if norm < _NORM_EPS:
        if item_id is None:
            raise ValueError("embedding degenerated to zero norm")
        logger.warning("item %s inferred to zero norm; using hashed fallback", item_id)
        return hashed_unit_vector(item_id, weights.output_dim)
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite embedding")
    return h / norm


# ----------------------------------------------------------------------
# unsupervised training
# ----------------------------------------------------------------------


def _init_weights(feature_dim: int, config: TrainConfig) -> LayerWeights:
    rng = _rng(config.rng_seed, _SALT_INIT)
    matrices = []
    in_dim = feature_dim
    for out_dim in config.dims:
        bound = np.sqrt(6.0 / (2 * in_dim + out_dim))
        matrices.append(rng.uniform(-bound, bound, size=(out_dim, 2 * in_dim)))
        in_dim = out_dim
    activations = ["relu"] * (len(config.dims) - 1) + ["identity"]
    return LayerWeights(matrices, activations)


def _sample_pairs(
    graph: ItemGraph,
    ids: Sequence[int],
    rowmap: dict[int, int],
    config: TrainConfig,
    epoch: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Positive skip-gram pairs: (node, random-walk co-visited node)."""
    anchors, contexts = [], []
    for node in ids:
        rng = _rng(config.rng_seed, _SALT_POSITIVES, epoch, node)
        for other in graph.sample_neighbors_rng(
            node, config.fanout[0], config.walk_length, rng
        ):
            anchors.append(rowmap[node])
            contexts.append(rowmap[other])
    return np.asarray(anchors, dtype=np.int64), np.asarray(contexts, dtype=np.int64)


def _loss_and_grads(
    features: np.ndarray,
    operators: Sequence[sp.csr_matrix],
    weights: LayerWeights,
    anchors: np.ndarray,
    contexts: np.ndarray,
    negatives: np.ndarray,
    scale: float = COSINE_LOGIT_SCALE,
) -> tuple[float, list[np.ndarray]]:
    """Skip-gram loss over cosine logits and its gradient w.r.t. each layer matrix."""
    z, concats, preacts, norms = _forward(features, operators, weights)
    m = len(anchors)
    s_pos = np.einsum("md,md->m", z[anchors], z[contexts])
    s_neg = np.einsum("md,mkd->mk", z[anchors], z[negatives])
    loss = (
        np.logaddexp(0.0, -scale * s_pos).sum()
        + np.logaddexp(0.0, scale * s_neg).sum()
    ) / m

    g_pos = -scale * expit(-scale * s_pos) / m
    g_neg = scale * expit(scale * s_neg) / m
    dz = np.zeros_like(z)
    np.add.at(dz, anchors, g_pos[:, None] * z[contexts])
    np.add.at(dz, contexts, g_pos[:, None] * z[anchors])
    np.add.at(dz, anchors, np.einsum("mk,mkd->md", g_neg, z[negatives]))
    np.add.at(
        dz,
        negatives.ravel(),
        (g_neg[:, :, None] * z[anchors][:, None, :]).reshape(-1, z.shape[1]),
    )

    # back through row normalization: dh = (dz - (dz.z) z) / ||h||
    safe = np.maximum(norms, _NORM_EPS)
    proj = np.einsum("nd,nd->n", dz, z)
    grad_h = (dz - proj[:, None] * z) / safe[:, None]
    grad_h[norms < _NORM_EPS] = 0.0

    grads: list[np.ndarray] = [np.empty(0)] * weights.num_layers
    for layer in range(weights.num_layers - 1, -1, -1):
        act = weights.activations[layer]
        dpre = grad_h if act == "identity" else grad_h * (preacts[layer] > 0)
        grads[layer] = dpre.T @ concats[layer]
        if layer > 0:
            dstack = dpre @ weights.matrices[layer]
            in_dim = dstack.shape[1] // 2
            grad_h = dstack[:, :in_dim] + operators[layer].T @ dstack[:, in_dim:]
    return float(loss), grads


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / (1 - self.beta1**self.t)
            vhat = self.v[i] / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train_unsupervised(
    graph: ItemGraph,
    config: TrainConfig,
    initial_weights: LayerWeights | None = None,
) -> TrainResult:
    """Train embeddings on the current graph; deterministic for a fixed seed.

    Pass ``initial_weights`` to warm-start (incremental refresh between
    recommendation rounds). The returned table is produced by a final seeded
    forward pass, so it is exactly reproducible via ``embed_nodes``.
    """
    if graph.node_count() == 0:
        raise ValueError("cannot train on an empty graph")
    ids = graph.node_ids()
    rowmap = {node: i for i, node in enumerate(ids)}
    feats = np.vstack([graph.features(i) for i in ids])

    if initial_weights is not None:
        if initial_weights.feature_dim != feats.shape[1]:
            raise ValueError("warm-start weights do not match feature dimension")
        weights = initial_weights.copy()
    else:
        weights = _init_weights(feats.shape[1], config)

    optimizer = _Adam([w.shape for w in weights.matrices], config.learning_rate)
    losses: list[float] = []
    operators: list[sp.csr_matrix] = []
    anchors = contexts = negatives = None

    for epoch in range(config.epochs):
        if config.resample_walks or epoch == 0:
            operators = [
                _mean_operator(
                    graph, ids, rowmap, f, config.walk_length,
                    config.rng_seed, layer, epoch if config.resample_walks else 0,
                )
                for layer, f in enumerate(config.fanout)
            ]
            anchors, contexts = _sample_pairs(
                graph, ids, rowmap, config, epoch if config.resample_walks else 0
            )
            # negatives follow the walk-occurrence distribution (skip-gram's
            # unigram negatives): frequently co-visited nodes get
            # proportionally more repulsion, which keeps popular items from
            # collapsing into universal neighbors, and nodes the walks never
            # reach get no gradient at all, keeping their feature-implied
            # position
            neg_rng = _rng(config.rng_seed, _SALT_NEGATIVES, epoch)
            negatives = contexts[
                neg_rng.integers(0, len(contexts), size=(len(anchors), config.negatives))
            ] if len(anchors) else np.empty((0, config.negatives), np.int64)
        if len(anchors) == 0:
            # edgeless graph: nothing to contrast, keep initial weights
            losses.append(0.0)
            continue
        loss, grads = _loss_and_grads(
            feats, operators, weights, anchors, contexts, negatives
        )
        losses.append(loss)
        optimizer.step(weights.matrices, grads)

    table_ids, z = embed_nodes(
        graph, weights, config.fanout, config.walk_length, config.rng_seed
    )
    table = EmbeddingTable(table_ids, z, graph.version)
    return TrainResult(table=table, weights=weights, epoch_losses=losses)

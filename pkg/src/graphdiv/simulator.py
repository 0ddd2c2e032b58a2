"""Closed-loop recommendation simulation.

Synthetic users with ground-truth interest centers and a diversity appetite
interact with feeds produced by the full pipeline: embedding retrieval, a mock
ranker, per-user diversity propensity, configurable reranking, and feedback.
Positive co-interactions become new graph edges between rounds, embeddings are
incrementally refreshed, and per-round diversity metrics are logged, so the
feedback loop between what is exposed and what the graph learns is observable
end to end.

Everything is driven by named seeds (catalog, users, ranker, feedback, walks)
so ablations can vary one randomness source at a time and paired-seed
comparisons share the same synthetic world.
"""

from __future__ import annotations

import dataclasses
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from . import metrics as metrics_mod
from .embedding import (
    EmbeddingTable,
    LayerWeights,
    TrainConfig,
    infer_unseen,
    train_unsupervised,
)
from .graph_store import ItemGraph, SessionRecord
from .personalization import (
    DEFAULT_PROPENSITY,
    F_MAX,
    F_MIN,
    PopulationStats,
    UserState,
    diversity_propensity,
    mean_pairwise_similarity,
    update_population,
    window_filter,
)
from .rerank import RerankInput, rerank
from .retrieval import CandidateSet, ColdStartError, match_candidates

RERANKERS = ("none", "rule", "fast_dpp_semantic", "p_dpp", "ours")

DEFAULT_RELEVANCE_WEIGHT = 2.0
DEFAULT_NOVELTY_WEIGHT = 1.0
DEFAULT_POSITION_PENALTY = 0.15

_SALT_CATALOG = 41
_SALT_CLICKBAIT = 43
_SALT_OBSERVED = 44
_SALT_NEW_ITEMS = 47
_SALT_USERS = 53
_SALT_BOOTSTRAP = 59
_SALT_COLD_START = 61
_SALT_TOPUP = 67


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in key])


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return mat / np.where(norms > 0, norms, 1.0)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """All knobs of one simulated experiment; defaults are desk scale."""

    catalog_size: int = 2000
    topic_count: int = 12
    user_count: int = 500
    rounds: int = 5
    feed_size: int = 10
    retrieval_n: int = 500
    rank_pool: int = 50
    reranker: str = "ours"
    graph_update: str = "on"

    feature_dim: int = 16
    topic_noise: float = 0.3
    # noise between an item's true features (drive feedback) and the
    # attributes the model observes as node features; > 0 reproduces the
    # industrial situation where attributes only weakly reveal relevance
    feature_observation_noise: float = 0.0
    walk_weighting: str = "sqrt"
    embed_dims: tuple[int, ...] = (32, 32)
    fanout: tuple[int, ...] = (10, 10)
    walk_length: int = 3
    negatives: int = 5
    epochs: int = 30
    epochs_incremental: int = 5
    learning_rate: float = 0.05
    full_retrain: bool = False

    window_rounds: float = 2.0
    exclusion_rounds: int = 3
    exclude_consumed: bool = True
    retrieval_history: int = 30
    bootstrap_positives: int = 5
    rule_topic_cap: int = 2
    ranker_noise: float = 0.1
    clickbait_fraction: float = 0.0
    new_items_per_round: int = 0
    propensity_literal_distance: bool = False
    stop_at_nonpositive_gain: bool = False
    metric_table: str = "serving"  # serving | initial

    feedback_relevance_weight: float = DEFAULT_RELEVANCE_WEIGHT
    feedback_novelty_weight: float = DEFAULT_NOVELTY_WEIGHT
    feedback_position_penalty: float = DEFAULT_POSITION_PENALTY
    feedback_noise: float = 0.3

    threads: int = 1
    seed_catalog: int = 101
    seed_users: int = 102
    seed_ranker: int = 103
    seed_feedback: int = 104
    seed_walks: int = 105

    # only used by the train-embeddings command
    graph_snapshot: str = ""

    def validate(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 1 <= self.feed_size <= self.rank_pool <= self.retrieval_n <= self.catalog_size:
            raise ValueError(
                "need feed_size <= rank_pool <= retrieval_n <= catalog_size"
            )
        if not 1 <= self.topic_count <= self.catalog_size:
            raise ValueError("topic_count must be in [1, catalog_size]")
        if self.user_count < 1:
            raise ValueError("user_count must be >= 1")
        if self.reranker not in RERANKERS:
            raise ValueError(
                f"unknown reranker {self.reranker!r}; choose from {RERANKERS}"
            )
        if self.graph_update not in ("on", "off"):
            raise ValueError("graph_update must be 'on' or 'off'")
        if self.metric_table not in ("serving", "initial"):
            raise ValueError("metric_table must be 'serving' or 'initial'")
        if self.exclusion_rounds < 0:
            raise ValueError("exclusion_rounds must be >= 0")
        if self.catalog_size < (self.exclusion_rounds + 1) * self.feed_size:
            raise ValueError(
                "catalog too small for feed_size with this exclusion horizon"
            )
        if not 0.0 <= self.clickbait_fraction <= 1.0:
            raise ValueError("clickbait_fraction must be in [0, 1]")
        if self.window_rounds <= 0:
            raise ValueError("window_rounds must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        # the embedding trainer validates its own knobs
        self.train_config()

    def train_config(self, seed_offset: int = 0, incremental: bool = False) -> TrainConfig:
        return TrainConfig(
            dims=self.embed_dims,
            fanout=self.fanout,
            walk_length=self.walk_length,
            negatives=self.negatives,
            epochs=self.epochs_incremental if incremental else self.epochs,
            learning_rate=self.learning_rate,
            rng_seed=self.seed_walks * 100003 + seed_offset,
        )


def with_base_seed(config: ExperimentConfig, base: int) -> ExperimentConfig:
    """Copy of config with all named seeds derived from one base (paired runs)."""
    return dataclasses.replace(
        config,
        seed_catalog=base * 1000 + 1,
        seed_users=base * 1000 + 2,
        seed_ranker=base * 1000 + 3,
        seed_feedback=base * 1000 + 4,
        seed_walks=base * 1000 + 5,
    )


# ----------------------------------------------------------------------
# synthetic world
# ----------------------------------------------------------------------


class Catalog:
    """Item features (always honest) plus topic labels (possibly corrupted).

    ``observed`` holds the attribute vectors the model gets to see as node
    features; they equal ``features`` unless observation noise is configured.
    """

    def __init__(
        self,
        features: np.ndarray,
        topics: np.ndarray,
        true_topics: np.ndarray,
        centroids: np.ndarray,
        observed: np.ndarray | None = None,
    ):
        self.features = features
        self.topics = topics
        self.true_topics = true_topics
        self.centroids = centroids
        self.observed = features if observed is None else observed
        self._feature_table: dict[int, np.ndarray] | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    def feature_of(self, item: int) -> np.ndarray:
        return self.features[item]

    def topic_of(self, item: int) -> int:
        return int(self.topics[item])

    def feature_table(self) -> dict[int, np.ndarray]:
        """id -> feature vector mapping, usable wherever a table is expected."""
        if self._feature_table is None or len(self._feature_table) != len(self):
            self._feature_table = {i: self.features[i] for i in range(len(self))}
        return self._feature_table

    def append(
        self,
        features: np.ndarray,
        topics: np.ndarray,
        true_topics: np.ndarray,
        observed: np.ndarray | None = None,
    ):
        self.features = np.vstack([self.features, features])
        self.topics = np.concatenate([self.topics, topics])
        self.true_topics = np.concatenate([self.true_topics, true_topics])
        self.observed = np.vstack(
            [self.observed, features if observed is None else observed]
        )
        self._feature_table = None


@dataclass
class SyntheticUser:
    """Ground-truth taste: interest centers in feature space plus a fixed
    appetite for novelty. The propensity machinery only ever sees behavior."""

    user_id: int
    interest_centers: np.ndarray
    appetite: float
    noise: float
    state: UserState
    p_dpp_theta: float = DEFAULT_PROPENSITY


def gen_catalog(config: ExperimentConfig, seed: int) -> Catalog:
    """Items drawn around per-topic centroids; deterministic per seed.

    Label corruption (the clickbait stressor) uses its own substream, so
    features are identical across different corruption fractions.
    """
    rng = _rng(seed, _SALT_CATALOG)
    n, t, d = config.catalog_size, config.topic_count, config.feature_dim
    centroids = _unit_rows(rng.standard_normal((t, d)))
    labels = rng.integers(0, t, size=n)
    features = _unit_rows(
        centroids[labels] + config.topic_noise * rng.standard_normal((n, d))
    )
    topics = labels.copy()
    if config.clickbait_fraction > 0 and t > 1:
        crng = _rng(seed, _SALT_CLICKBAIT)
        m = int(round(config.clickbait_fraction * n))
        corrupt = crng.choice(n, size=m, replace=False)
        topics[corrupt] = (labels[corrupt] + crng.integers(1, t, size=m)) % t
    observed = None
    if config.feature_observation_noise > 0:
        orng = _rng(seed, _SALT_OBSERVED)
        observed = _unit_rows(
            features + config.feature_observation_noise * orng.standard_normal((n, d))
        )
    return Catalog(features, topics, labels, centroids, observed)


def gen_users(
    config: ExperimentConfig, catalog: Catalog, seed: int
) -> list[SyntheticUser]:
    rng = _rng(seed, _SALT_USERS)
    users = []
    for uid in range(config.user_count):
        n_centers = int(rng.integers(1, min(3, config.topic_count) + 1))
        picks = rng.choice(config.topic_count, size=n_centers, replace=False)
        centers = _unit_rows(
            catalog.centroids[picks] + 0.2 * rng.standard_normal((n_centers, config.feature_dim))
        )
        users.append(
            SyntheticUser(
                user_id=uid,
                interest_centers=centers,
                appetite=float(rng.uniform(0.0, 1.0)),
                noise=config.feedback_noise,
                state=UserState(user=uid),
            )
        )
    return users


def user_feedback(
    user: SyntheticUser,
    feed: Sequence[int],
    table: Mapping[int, np.ndarray],
    seed,
    relevance_weight: float = DEFAULT_RELEVANCE_WEIGHT,
    novelty_weight: float = DEFAULT_NOVELTY_WEIGHT,
    position_penalty: float = DEFAULT_POSITION_PENALTY,
) -> list[int]:
    """Simulate one session: which feed items the user positively interacts.

    Per item: sigmoid(a * relevance + b * appetite * novelty - penalty * rank
    [+ logistic noise]), where relevance is the best cosine against the user's
    interest centers and novelty is one minus the best cosine against the
    user's recent window (1.0 for an empty window). Deterministic per seed.
    """
    if len(feed) == 0:
        raise ValueError("feed must be non-empty")
    rng = np.random.default_rng(seed)
    window_vecs = [table[i] for i, _ in user.state.window if i in table]
    window_mat = _unit_rows(np.asarray(window_vecs)) if window_vecs else None
    positives = []
    for rank, item in enumerate(feed):
        vec = _unit(np.asarray(table[item], dtype=np.float64))
        relevance = float(np.max(user.interest_centers @ vec))
        novelty = 1.0 - float(np.max(window_mat @ vec)) if window_mat is not None else 1.0
        logit = (
            relevance_weight * relevance
            + novelty_weight * user.appetite * novelty
            - position_penalty * rank
        )
        if user.noise > 0:
            logit += float(rng.logistic(0.0, user.noise))
        if rng.random() < expit(logit):
            positives.append(item)
    return positives


# ----------------------------------------------------------------------
# simulation state and round loop
# ----------------------------------------------------------------------


@dataclass
class SimulationState:
    config: ExperimentConfig
    catalog: Catalog
    graph: ItemGraph
    users: list[SyntheticUser]
    table: EmbeddingTable
    weights: LayerWeights
    initial_table: EmbeddingTable
    histories: dict[int, list[tuple[int, float]]]
    recent_feeds: dict[int, deque]
    exposed_ever: set[int] = field(default_factory=set)
    round_index: int = 0
    trained_version: int = 0

    def embedding_of(self, item: int) -> np.ndarray:
        vec = self.table.get(item)
        if vec is None:
            vec = infer_unseen(self.catalog.observed[item], self.weights, item_id=item)
            self.table.add(item, vec)
        return vec


@dataclass
class _UserRoundResult:
    user_id: int
    feed: list[int]
    candidates: list[int]
    positives: list[int]


def build_state(config: ExperimentConfig) -> SimulationState:
    """Generate the synthetic world, bootstrap histories, train embeddings."""
    config.validate()
    catalog = gen_catalog(config, config.seed_catalog)
    graph = ItemGraph(config.feature_dim, walk_weighting=config.walk_weighting)
    for item in range(len(catalog)):
        graph.add_item(item, catalog.observed[item])
    users = gen_users(config, catalog, config.seed_users)

    histories: dict[int, list[tuple[int, float]]] = {u.user_id: [] for u in users}
    sessions = []
    for user in users:
        rng = _rng(config.seed_users, _SALT_BOOTSTRAP, user.user_id)
        center = user.interest_centers[rng.integers(len(user.interest_centers))]
        affinity = catalog.features @ center + 0.05 * rng.standard_normal(len(catalog))
        picks = np.argsort(-affinity)[: config.bootstrap_positives]
        items = [int(i) for i in picks]
        sessions.append(SessionRecord(user.user_id, items, timestamp=-0.5))
        histories[user.user_id] = [(i, -0.5) for i in items]
        user.p_dpp_theta = _entropy_theta(
            [catalog.topic_of(i) for i in items], config.topic_count
        )
    graph.apply_sessions(sessions)

    result = train_unsupervised(graph, config.train_config())
    return SimulationState(
        config=config,
        catalog=catalog,
        graph=graph,
        users=users,
        table=result.table,
        weights=result.weights,
        initial_table=result.table,
        histories=histories,
        recent_feeds={
            u.user_id: deque(maxlen=config.exclusion_rounds) for u in users
        },
        trained_version=graph.version,
    )


def _entropy_theta(labels: Sequence[int], topic_count: int) -> float:
    """Static relevance/diversity trade-off from label entropy of a history.

    Uniform label usage (high entropy) maps to the diversity end, a
    single-label history to the relevance end.
    """
    if topic_count < 2 or not labels:
        return DEFAULT_PROPENSITY
    counts = np.bincount(np.asarray(labels), minlength=topic_count).astype(np.float64)
    p = counts[counts > 0] / counts.sum()
    entropy = float(-(p * np.log(p)).sum()) / np.log(topic_count)
    return min(max(1.0 - entropy, F_MIN), F_MAX)


def _refresh_propensities(state: SimulationState) -> None:
    """Round-start pass: windows, s values, population stats, then every f_u."""
    config = state.config
    now = float(state.round_index)
    table = state.table
    s_values: dict[int, float] = {}
    for user in state.users:
        pairs = [
            (item, ts)
            for item, ts in state.histories[user.user_id]
            if now - config.window_rounds < ts <= now
        ]
        user.state.window = pairs
        user.state.last_update = now
        s = mean_pairwise_similarity(
            [item for item, _ in pairs],
            table,
            use_distance=config.propensity_literal_distance,
        )
        user.state.s_u = s
        if s is not None:
            s_values[user.user_id] = s
    stats = update_population(list(s_values.values())) if s_values else None
    for user in state.users:
        s = s_values.get(user.user_id)
        if s is None or stats is None or stats.count < 2:
            user.state.f_u = DEFAULT_PROPENSITY
        else:
            user.state.f_u = diversity_propensity(s, stats)


def _rule_feed(
    pool: Sequence[int], topics: Mapping[int, int], k: int, cap: int
) -> list[int]:
    """Rank-ordered scan with a per-topic cap; backfills by rank if short."""
    feed, skipped = [], []
    counts: dict[int, int] = {}
    for item in pool:
        topic = topics[item]
        if counts.get(topic, 0) < cap:
            feed.append(item)
            counts[topic] = counts.get(topic, 0) + 1
        else:
            skipped.append(item)
        if len(feed) == k:
            return feed
    return (feed + skipped)[:k]


def _semantic_similarity(pool: Sequence[int], catalog: Catalog) -> np.ndarray:
    labels = np.asarray([catalog.topic_of(i) for i in pool])
    return (labels[:, None] == labels[None, :]).astype(np.float64)


def _embedding_similarity(pool: Sequence[int], state: SimulationState) -> np.ndarray:
    mat = np.vstack([state.embedding_of(i) for i in pool])
    sim = np.clip(mat @ mat.T, -1.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def _build_feed(
    state: SimulationState, user: SyntheticUser, pool: list[int], scores: np.ndarray
) -> list[int]:
    config = state.config
    k = config.feed_size
    variant = config.reranker
    if variant == "none":
        return pool[:k]
    if variant == "rule":
        topics = {i: state.catalog.topic_of(i) for i in pool}
        return _rule_feed(pool, topics, k, config.rule_topic_cap)
    if variant == "fast_dpp_semantic":
        similarity = _semantic_similarity(pool, state.catalog)
        propensity = DEFAULT_PROPENSITY
    elif variant == "p_dpp":
        similarity = _semantic_similarity(pool, state.catalog)
        propensity = user.p_dpp_theta
    else:  # ours
        similarity = _embedding_similarity(pool, state)
        propensity = user.state.f_u
    request = RerankInput(
        items=list(pool), scores=scores, similarity=similarity,
        propensity=propensity, k=k,
    )
    return rerank(request, stop_at_nonpositive_gain=config.stop_at_nonpositive_gain)


def _serve_user(state: SimulationState, user: SyntheticUser) -> _UserRoundResult:
    config = state.config
    uid = user.user_id
    r = state.round_index
    exclusions = {item for feed in state.recent_feeds[uid] for item in feed}
    if config.exclude_consumed:
        exclusions.update(item for item, _ in state.histories[uid])
    probes = [item for item, _ in state.histories[uid][-config.retrieval_history :]]

    try:
        candidates = match_candidates(
            probes, state.table, config.retrieval_n, exclusions, source_round=r
        )
    except ColdStartError:
        rng = _rng(config.seed_ranker, _SALT_COLD_START, r, uid)
        eligible = [i for i in range(len(state.catalog)) if i not in exclusions]
        picks = rng.choice(
            len(eligible), size=min(config.retrieval_n, len(eligible)), replace=False
        )
        candidates = CandidateSet(
            items=[(eligible[i], 0.0) for i in np.sort(picks)], source_round=r
        )

    cand_ids = np.asarray(candidates.ids(), dtype=np.int64)
    rng = _rng(config.seed_ranker, r, uid)
    noisy = candidates.scores() + config.ranker_noise * rng.standard_normal(len(cand_ids))
    order = np.lexsort((cand_ids, -noisy))[: config.rank_pool]
    pool = [int(cand_ids[i]) for i in order]
    pool_scores = noisy[order]

    feed = _build_feed(state, user, pool, pool_scores)
    if len(feed) < config.feed_size:
        # exhausted pools (tiny catalogs, early-stop reranking): backfill from
        # the remaining pool by rank, then anything unexcluded
        for item in pool:
            if len(feed) == config.feed_size:
                break
            if item not in feed:
                feed.append(item)
        if len(feed) < config.feed_size:
            trng = _rng(config.seed_ranker, _SALT_TOPUP, r, uid)
            extra = [
                i for i in range(len(state.catalog))
                if i not in exclusions and i not in feed
            ]
            need = config.feed_size - len(feed)
            picks = trng.choice(len(extra), size=need, replace=False)
            feed.extend(extra[i] for i in np.sort(picks))

    positives = user_feedback(
        user,
        feed,
        state.catalog.feature_table(),
        seed=[config.seed_feedback & 0xFFFFFFFF, r, uid],
        relevance_weight=config.feedback_relevance_weight,
        novelty_weight=config.feedback_novelty_weight,
        position_penalty=config.feedback_position_penalty,
    )
    return _UserRoundResult(uid, feed, list(cand_ids), positives)


def _inject_new_items(state: SimulationState) -> None:
    config = state.config
    count = config.new_items_per_round
    if count < 1:
        return
    rng = _rng(config.seed_catalog, _SALT_NEW_ITEMS, state.round_index)
    labels = rng.integers(0, config.topic_count, size=count)
    features = _unit_rows(
        state.catalog.centroids[labels]
        + config.topic_noise * rng.standard_normal((count, config.feature_dim))
    )
    observed = features
    if config.feature_observation_noise > 0:
        observed = _unit_rows(
            features
            + config.feature_observation_noise
            * rng.standard_normal((count, config.feature_dim))
        )
    start = len(state.catalog)
    state.catalog.append(features, labels.copy(), labels, observed)
    for offset in range(count):
        item = start + offset
        state.graph.add_item(item, observed[offset])
        state.embedding_of(item)  # inferred from attributes, cached in the table


def run_round(state: SimulationState, config: ExperimentConfig | None = None) -> metrics_mod.RoundReport:
    """One recommendation lifecycle for every user, then the graph update."""
    config = config or state.config
    r = state.round_index
    _refresh_propensities(state)

    ordered_users = sorted(state.users, key=lambda u: u.user_id)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda u: _serve_user(state, u), ordered_users))
    else:
        results = [_serve_user(state, u) for u in ordered_users]

    sessions = []
    positives_total = 0
    for res in results:
        state.recent_feeds[res.user_id].append(list(res.feed))
        state.exposed_ever.update(res.feed)
        positives_total += len(res.positives)
        if res.positives:
            state.histories[res.user_id].extend(
                (item, r + 0.5) for item in res.positives
            )
            sessions.append(SessionRecord(res.user_id, res.positives, timestamp=r + 0.5))

    if config.graph_update == "on" and sessions:
        state.graph.apply_sessions(sessions)
        state.graph.check_symmetry()

    metric_table = state.initial_table if config.metric_table == "initial" else state.table
    report = metrics_mod.RoundReport(
        round=r,
        ilad=metrics_mod.ilad([res.feed for res in results], metric_table),
        rd=metrics_mod.rd(
            [res.candidates for res in results],
            metric_table,
            seed=config.seed_ranker + 7919 * r,
        ),
        coverage=metrics_mod.coverage(state.exposed_ever, len(state.catalog)),
        positives=positives_total,
        graph_edges=state.graph.edge_count(),
    )

    _inject_new_items(state)
    if state.graph.version != state.trained_version:
        result = train_unsupervised(
            state.graph,
            config.train_config(seed_offset=r + 1, incremental=not config.full_retrain),
            initial_weights=None if config.full_retrain else state.weights,
        )
        state.table = result.table
        state.weights = result.weights
        state.trained_version = state.graph.version

    state.round_index += 1
    return report


# ----------------------------------------------------------------------
# experiment driver
# ----------------------------------------------------------------------


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None
) -> list[metrics_mod.RoundReport]:
    """Run all rounds; optionally write CSV, snapshot, embeddings, manifest.

    The metrics CSV is flushed after every round; if a round fails, a failure
    marker line is appended before the exception propagates.
    """
    state = build_state(config)
    reports: list[metrics_mod.RoundReport] = []
    out = Path(out_dir) if out_dir is not None else None
    csv_file = None
    started = time.time()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, config, started, finished=None)
        csv_file = open(out / "metrics.csv", "w", encoding="utf-8")
        csv_file.write(metrics_mod.RoundReport.csv_header() + "\n")
        csv_file.flush()
    try:
        for _ in range(config.rounds):
            report = run_round(state)
            reports.append(report)
            if csv_file is not None:
                csv_file.write(report.csv_row() + "\n")
                csv_file.flush()
    except Exception as exc:
        if csv_file is not None:
            csv_file.write(f"# FAILED at round {state.round_index}: {exc!r}\n")
        if out is not None:
            _write_manifest(out, config, started, finished=time.time(), failed=True)
        raise
    finally:
        if csv_file is not None:
            csv_file.close()
    if out is not None:
        state.graph.snapshot(out / "graph.tsv")
        state.table.save(out / "embeddings.tsv")
        state.weights.save(out / "weights.tsv")
        _write_manifest(out, config, started, finished=time.time())
    return reports


def _write_manifest(
    out: Path,
    config: ExperimentConfig,
    started: float,
    finished: float | None,
    failed: bool = False,
) -> None:
    from . import __version__

    lines = [f"tool_version = {__version__}"]
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    lines.append("artifacts = metrics.csv, graph.tsv, embeddings.tsv, weights.tsv")
    lines.append(f"started_unix = {started:.3f}")
    if finished is None:
        lines.append("status = running")
    else:
        lines.append(f"finished_unix = {finished:.3f}")
        lines.append(f"status = {'failed' if failed else 'ok'}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

"""Planted-truth instance generator: a preferential-attachment base graph
grown across snapshots, split into two noisy overlapping views with known
anchors parameterized by overlap rate lambda and training rate eta."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import (
    AnchorSet,
    DataError,
    DynamicGraph,
    EdgeEvent,
    SnapshotGraph,
    ingest_edge_events,
    write_anchor_file,
    write_edge_event_file,
)


@dataclass(frozen=True)
class SynthConfig:
    n_base: int = 300
    num_snapshots: int = 5
    growth: int = 2  # edges added per arriving node
    churn: float = 0.02  # per-snapshot edge remove (and matching add) probability
    overlap: float = 0.5  # target overlap rate lambda
    edge_noise: float = 0.05  # per-view fraction of edges dropped / added spuriously
    eta: float = 0.1  # fraction of true anchors revealed for training
    activity_decay: float = 8.0  # how fast interaction strength falls with account age
    activity_sigma: float = 1.0  # lognormal spread of per-user activity levels
    weight_noise: float = 0.2  # lognormal spread of per-edge weight noise
    seed: int = 0

    def __post_init__(self):
        if self.n_base < self.growth + 1:
            raise DataError("n_base must be at least growth + 1")
        if self.num_snapshots < 1:
            raise DataError("need at least one snapshot")
        if not 0.0 <= self.churn <= 1.0 or not 0.0 <= self.edge_noise < 1.0:
            raise DataError("churn in [0,1], edge_noise in [0,1)")
        if not 0.0 < self.overlap <= 1.0:
            raise DataError("overlap rate must be in (0, 1]")
        if not 0.0 < self.eta < 1.0:
            raise DataError("eta must be in (0, 1)")
        if self.activity_decay < 0 or self.activity_sigma < 0 or self.weight_noise < 0:
            raise DataError("activity/weight parameters must be nonnegative")


@dataclass(frozen=True)
class PlantedInstance:
    g_s: DynamicGraph
    g_t: DynamicGraph
    truth: AnchorSet  # full anchor map over shared users
    train_anchors: AnchorSet
    test_anchors: AnchorSet


def generate_base_events(cfg: SynthConfig) -> list[EdgeEvent]:
    """Preferential-attachment growth over the window [0, M]: arriving nodes
    attach to ``growth`` distinct existing nodes sampled by degree; churn
    removes live edges per interval and adds matching random ones.

    Edge weights model interaction strength: each user gets a lognormal
    activity level damped by account age (early adopters interact most), and
    an edge weighs the product of its endpoints' activities times lognormal
    noise. The weight pattern around a user is a stable fingerprint that both
    derived views inherit."""
    rng = np.random.default_rng(cfg.seed)
    m_count = cfg.num_snapshots
    events: list[EdgeEvent] = []
    degree = np.zeros(cfg.n_base)
    live: set[tuple[int, int]] = set()
    activity = (
        np.exp(rng.normal(0.0, cfg.activity_sigma, cfg.n_base))
        * np.exp(-cfg.activity_decay * np.arange(cfg.n_base) / cfg.n_base)
    )

    seed_nodes = cfg.growth
    arrivals = np.linspace(0.0, m_count, num=cfg.n_base - seed_nodes, endpoint=False)
    next_node = seed_nodes
    span = 1.0  # snapshot interval length in the [0, M] window

    def add_edge(i: int, j: int, t: float) -> None:
        key = (min(i, j), max(i, j))
        if key in live or i == j:
            return
        live.add(key)
        degree[i] += 1
        degree[j] += 1
        w = float(activity[i] * activity[j] * np.exp(rng.normal(0.0, cfg.weight_noise)))
        events.append(EdgeEvent(key[0], key[1], t, w, "a"))

    def remove_edge(key: tuple[int, int], t: float) -> None:
        live.discard(key)
        degree[key[0]] -= 1
        degree[key[1]] -= 1
        events.append(EdgeEvent(key[0], key[1], t, 1.0, "r"))

    for m in range(m_count):
        t_lo, t_hi = m * span, (m + 1) * span
        while next_node < cfg.n_base and arrivals[next_node - seed_nodes] < t_hi:
            t = float(arrivals[next_node - seed_nodes])
            weights = degree[:next_node] + 1.0
            k = min(cfg.growth, next_node)
            partners = rng.choice(next_node, size=k, replace=False, p=weights / weights.sum())
            for j in partners:
                add_edge(next_node, int(j), t)
            next_node += 1
        if cfg.churn > 0 and live:
            t = t_hi - 1e-9
            doomed = [key for key in sorted(live) if rng.random() < cfg.churn]
            n_added = int(rng.binomial(len(live), cfg.churn))
            for key in doomed:
                remove_edge(key, t)
            for _ in range(n_added):
                i, j = rng.choice(next_node, size=2, replace=False)
                add_edge(int(i), int(j), t)
    return events


def generate_base(cfg: SynthConfig) -> DynamicGraph:
    events = generate_base_events(cfg)
    return ingest_edge_events(
        events, cfg.num_snapshots, (0.0, float(cfg.num_snapshots)),
        directed=False, num_users=cfg.n_base,
    )


def _induce(
    g: DynamicGraph, users: np.ndarray, relabel: dict[int, int], rng: np.random.Generator,
    edge_noise: float,
) -> DynamicGraph:
    """Induced subgraph with per-view id relabeling and edge-level observation
    noise: each surviving friendship (present in the final snapshot) is missed
    entirely with prob ``edge_noise``, and a matching binomial count of
    spurious edges is added, each with a random arrival snapshot and a weight
    resampled from the observed weights. Noise is decided once per edge, so a
    dropped edge is absent from every snapshot and a spurious one persists
    from its arrival on."""
    n_v = len(users)
    member = set(int(u) for u in users)
    final = {(i, j): w for (i, j), w in g.snapshots[-1].edges.items()
             if i < j and i in member and j in member}
    arrival: dict[tuple[int, int], int] = {}
    for m, snap in enumerate(g.snapshots):
        for (i, j) in snap.edges:
            if i < j and (i, j) in final and (i, j) not in arrival:
                arrival[(i, j)] = m
    keep = {key: w for key, w in sorted(final.items()) if rng.random() >= edge_noise}
    kept_keys = {(relabel[i], relabel[j]) for (i, j) in keep}
    kept_keys |= {(j, i) for (i, j) in kept_keys}
    n_spurious = int(rng.binomial(len(final), edge_noise)) if final else 0
    weight_pool = np.array(sorted(keep.values())) if keep else np.ones(1)
    spurious: dict[tuple[int, int], tuple[int, float]] = {}
    while len(spurious) < n_spurious:
        a, b = rng.choice(n_v, size=2, replace=False)
        key = (min(int(a), int(b)), max(int(a), int(b)))
        if key in kept_keys or key in spurious:
            continue
        spurious[key] = (int(rng.integers(g.num_snapshots)), float(rng.choice(weight_pool)))
    snapshots = []
    for m in range(g.num_snapshots):
        kept = {}
        for key, w in keep.items():
            if arrival[key] <= m:
                kept[(relabel[key[0]], relabel[key[1]])] = w
        for key, (m_arr, w) in spurious.items():
            if m_arr <= m:
                kept[key] = w
        mirrored = dict(kept)
        for (i, j), w in kept.items():
            mirrored[(j, i)] = w
        snapshots.append(SnapshotGraph(n_v, mirrored))
    return DynamicGraph(n_v, tuple(snapshots))


def split_views(base: DynamicGraph, cfg: SynthConfig) -> PlantedInstance:
    """Two user subsets whose shared portion realizes the overlap rate, with
    per-view id shuffles so alignment cannot exploit id order, independent
    edge noise per view, and a disjoint eta train/test anchor split.

    The shared users are the earliest arrivals: early adopters of one platform
    are the most likely to be on both, and it keeps the high-activity core --
    where most random-walk mass lives -- common to the two views."""
    rng = np.random.default_rng(cfg.seed + 1)
    n = base.num_users
    n_view = int(n / (2.0 - cfg.overlap))
    n_shared = int(round(cfg.overlap * n_view))
    n_extra = n_view - n_shared
    if n_shared < 1 or n_shared + 2 * n_extra > n:
        raise DataError(f"overlap rate {cfg.overlap} infeasible for n_base={n}")

    shared = np.arange(n_shared)
    rest = rng.permutation(np.arange(n_shared, n))
    extra_s = rest[:n_extra]
    extra_t = rest[n_extra: 2 * n_extra]
    users_s = np.concatenate([shared, extra_s])
    users_t = np.concatenate([shared, extra_t])

    label_s = {int(u): int(i) for u, i in zip(users_s, rng.permutation(n_view))}
    label_t = {int(u): int(i) for u, i in zip(users_t, rng.permutation(n_view))}

    g_s = _induce(base, users_s, label_s, rng, cfg.edge_noise)
    g_t = _induce(base, users_t, label_t, rng, cfg.edge_noise)

    truth_pairs = tuple((label_s[int(u)], label_t[int(u)]) for u in shared)
    order = rng.permutation(len(truth_pairs))
    n_train = int(round(cfg.eta * len(truth_pairs)))
    train = tuple(truth_pairs[i] for i in order[:n_train])
    test = tuple(truth_pairs[i] for i in order[n_train:])
    return PlantedInstance(
        g_s=g_s, g_t=g_t,
        truth=AnchorSet(truth_pairs),
        train_anchors=AnchorSet(train),
        test_anchors=AnchorSet(test),
    )


def generate_instance(cfg: SynthConfig) -> PlantedInstance:
    return split_views(generate_base(cfg), cfg)


def events_from_graph(g: DynamicGraph, *, t0: float = 0.0) -> list[EdgeEvent]:
    """Add/remove events reconstructing each snapshot state when re-ingested
    (undirected: only i <= j keys are emitted). Interval length is 1."""
    events = []
    prev: dict[tuple[int, int], float] = {}
    for m, snap in enumerate(g.snapshots, start=1):
        t = t0 + m - 0.5
        cur = {(i, j): w for (i, j), w in snap.edges.items() if i <= j}
        for key in sorted(set(prev) | set(cur)):
            if key not in cur:
                events.append(EdgeEvent(key[0], key[1], t, 1.0, "r"))
            elif prev.get(key) != cur[key]:
                events.append(EdgeEvent(key[0], key[1], t, cur[key], "a"))
        prev = cur
    return events


def write_instance(inst: PlantedInstance, out_dir: str | Path) -> dict[str, str]:
    """Emit the edge-event and anchor files so instances flow through the
    same ingestion path as real data; returns a name -> filename map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "source_events": "source_events.txt",
        "target_events": "target_events.txt",
        "train_anchors": "anchors_train.txt",
        "test_anchors": "anchors_test.txt",
        "truth": "anchors_truth.txt",
    }
    write_edge_event_file(events_from_graph(inst.g_s), out / files["source_events"])
    write_edge_event_file(events_from_graph(inst.g_t), out / files["target_events"])
    write_anchor_file(inst.train_anchors, out / files["train_anchors"])
    write_anchor_file(inst.test_anchors, out / files["test_anchors"])
    write_anchor_file(inst.truth, out / files["truth"])
    return files

"""Planted-instance generator tests: structure, overlap arithmetic, anchor
splits, noise model, determinism, file round-trips."""

import numpy as np
import pytest

from dna_align.evaluate import overlap_rate
from dna_align.graph import (
    DataError,
    ingest_edge_events,
    read_anchor_file,
    read_edge_event_file,
)
from dna_align.synth import (
    PlantedInstance,
    SynthConfig,
    events_from_graph,
    generate_base,
    generate_base_events,
    generate_instance,
    split_views,
    write_instance,
)


def test_no_churn_single_growth_yields_tree():
    cfg = SynthConfig(n_base=40, num_snapshots=3, growth=1, churn=0.0, seed=0)
    g = generate_base(cfg)
    final = g.snapshots[-1]
    undirected = {(i, j) for (i, j) in final.edges if i < j}
    # one attachment edge per arriving node, seeded with `growth` nodes
    assert len(undirected) == cfg.n_base - cfg.growth


def test_base_snapshots_are_cumulative_without_churn():
    cfg = SynthConfig(n_base=60, num_snapshots=4, churn=0.0, seed=1)
    g = generate_base(cfg)
    for prev, cur in zip(g.snapshots, g.snapshots[1:]):
        assert set(prev.edges) <= set(cur.edges)


def test_base_weights_positive_and_age_skewed():
    cfg = SynthConfig(n_base=100, num_snapshots=3, seed=2)
    events = generate_base_events(cfg)
    adds = [e for e in events if e.op == "a"]
    assert all(e.weight > 0 for e in adds)
    # early-node edges carry substantially more weight on average
    early = [e.weight for e in adds if max(e.src, e.dst) < 30]
    late = [e.weight for e in adds if min(e.src, e.dst) >= 70]
    assert np.mean(early) > 10 * np.mean(late)


def test_view_sizes_and_overlap_rate():
    cfg = SynthConfig(n_base=300, overlap=0.5, seed=3)
    inst = generate_instance(cfg)
    n_view = int(cfg.n_base / (2.0 - cfg.overlap))
    assert inst.g_s.num_users == n_view == inst.g_t.num_users
    realized = overlap_rate(len(inst.truth), inst.g_s.num_users, inst.g_t.num_users)
    assert abs(realized - cfg.overlap) <= 1.0 / (2 * n_view) + 1e-12


def test_full_overlap_views_cover_same_users():
    cfg = SynthConfig(n_base=100, overlap=1.0, edge_noise=0.0, seed=4)
    inst = generate_instance(cfg)
    assert len(inst.truth) == inst.g_s.num_users == inst.g_t.num_users


def test_anchor_split_is_disjoint_and_exhaustive():
    cfg = SynthConfig(n_base=200, eta=0.2, seed=5)
    inst = generate_instance(cfg)
    train = set(inst.train_anchors.pairs)
    test = set(inst.test_anchors.pairs)
    assert train.isdisjoint(test)
    assert train | test == set(inst.truth.pairs)
    assert len(train) == round(cfg.eta * len(inst.truth))


def test_truth_maps_counterparts_of_shared_users():
    # with zero noise, a truth-mapped pair has identical ego structure when
    # restricted to shared neighbors; check degree within the shared core
    cfg = SynthConfig(n_base=150, edge_noise=0.0, seed=6)
    inst = generate_instance(cfg)
    truth = inst.truth.as_dict()
    shared_s = set(truth)
    shared_t = set(truth.values())
    final_s = inst.g_s.snapshots[-1].edges
    final_t = inst.g_t.snapshots[-1].edges
    for k, l in list(truth.items())[:20]:
        deg_s = sum(1 for (i, j) in final_s if i == k and j in shared_s)
        deg_t = sum(1 for (i, j) in final_t if i == l and j in shared_t)
        assert deg_s == deg_t


def test_edge_noise_zero_views_are_exact_induced_subgraphs():
    cfg = SynthConfig(n_base=120, edge_noise=0.0, seed=7)
    base = generate_base(cfg)
    inst = split_views(base, cfg)
    n_final_base = len({(i, j) for (i, j) in base.snapshots[-1].edges if i < j})
    n_final_view = len({(i, j) for (i, j) in inst.g_s.snapshots[-1].edges if i < j})
    assert 0 < n_final_view <= n_final_base


def test_edge_noise_perturbs_but_preserves_edge_count_in_expectation():
    cfg0 = SynthConfig(n_base=200, edge_noise=0.0, seed=8)
    cfg1 = SynthConfig(n_base=200, edge_noise=0.3, seed=8)
    clean = split_views(generate_base(cfg0), cfg0)
    noisy = split_views(generate_base(cfg1), cfg1)
    n_clean = clean.g_s.snapshots[-1].num_edges
    n_noisy = noisy.g_s.snapshots[-1].num_edges
    assert n_noisy != n_clean  # noise did something
    assert abs(n_noisy - n_clean) <= 0.25 * n_clean  # drops matched by additions


def test_view_snapshots_are_monotone():
    cfg = SynthConfig(n_base=150, edge_noise=0.1, seed=9)
    inst = generate_instance(cfg)
    for g in (inst.g_s, inst.g_t):
        for prev, cur in zip(g.snapshots, g.snapshots[1:]):
            assert set(prev.edges) <= set(cur.edges)


def test_generation_is_deterministic():
    a = generate_instance(SynthConfig(seed=10))
    b = generate_instance(SynthConfig(seed=10))
    assert a.g_s.content_hash() == b.g_s.content_hash()
    assert a.g_t.content_hash() == b.g_t.content_hash()
    assert a.truth == b.truth and a.train_anchors == b.train_anchors
    c = generate_instance(SynthConfig(seed=11))
    assert c.g_s.content_hash() != a.g_s.content_hash()


def test_events_from_graph_reconstructs_snapshots():
    cfg = SynthConfig(n_base=120, seed=12)
    inst = generate_instance(cfg)
    ev = events_from_graph(inst.g_s)
    g2 = ingest_edge_events(ev, cfg.num_snapshots, (0.0, float(cfg.num_snapshots)),
                            directed=False, num_users=inst.g_s.num_users)
    assert g2.content_hash() == inst.g_s.content_hash()


def test_write_instance_roundtrip(tmp_path):
    cfg = SynthConfig(n_base=120, seed=13)
    inst = generate_instance(cfg)
    files = write_instance(inst, tmp_path)
    ev, _ = read_edge_event_file(tmp_path / files["target_events"])
    g2 = ingest_edge_events(ev, cfg.num_snapshots, (0.0, float(cfg.num_snapshots)),
                            directed=False, num_users=inst.g_t.num_users)
    assert g2.content_hash() == inst.g_t.content_hash()
    assert read_anchor_file(tmp_path / files["train_anchors"]) == inst.train_anchors
    assert read_anchor_file(tmp_path / files["test_anchors"]) == inst.test_anchors
    assert read_anchor_file(tmp_path / files["truth"]) == inst.truth


def test_config_validation():
    with pytest.raises(DataError):
        SynthConfig(overlap=0.0)
    with pytest.raises(DataError):
        SynthConfig(eta=1.0)
    with pytest.raises(DataError):
        SynthConfig(edge_noise=1.0)
    with pytest.raises(DataError):
        SynthConfig(n_base=2, growth=2)
    with pytest.raises(DataError):
        SynthConfig(activity_decay=-1.0)


def test_infeasible_overlap_raises():
    with pytest.raises(DataError):
        split_views(generate_base(SynthConfig(n_base=10, seed=0)),
                    SynthConfig(n_base=10, overlap=0.01, seed=0))

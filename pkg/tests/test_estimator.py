"""Aligner facade tests: estimator contract, fit artifacts, predict/score,
and the consistency-matrix variants."""

import numpy as np
import pytest
from sklearn.base import clone

from dna_align.estimator import DnaAligner, consistency_laplacian
from dna_align.rwr import RwrConfig
from dna_align.synth import SynthConfig, generate_instance

SMALL = SynthConfig(n_base=90, num_snapshots=3, eta=0.2, seed=0)


@pytest.fixture(scope="module")
def fitted():
    inst = generate_instance(SMALL)
    aligner = DnaAligner(d_u=16, d_c=8, ego_width=8, pretrain_epochs=3,
                         max_rounds=2, epochs_per_round=1, random_state=0)
    return inst, aligner.fit(inst.g_s, inst.g_t, inst.train_anchors)


def test_get_params_set_params_clone_contract():
    aligner = DnaAligner(d_u=16, gamma=5.0)
    params = aligner.get_params()
    assert params["d_u"] == 16 and params["gamma"] == 5.0
    cloned = clone(aligner)
    assert cloned.get_params() == params
    aligner.set_params(omega=4)
    assert aligner.omega == 4


def test_fit_exposes_artifacts(fitted):
    inst, aligner = fitted
    n = inst.g_s.num_users
    assert aligner.identity_s_.shape == (n, 8)
    assert aligner.identity_t_.shape == (n, 8)
    assert (aligner.identity_s_ >= 0).all()
    assert len(aligner.trace_) >= 1
    for row in aligner.trace_:
        assert set(row) >= {"round", "J_total", "kkt_s", "kkt_t"}


def test_predict_shapes_and_score_range(fitted):
    inst, aligner = fitted
    sources = sorted(inst.test_anchors.as_dict())
    lists = aligner.predict(sources, k=3)
    assert len(lists) == len(sources)
    assert all(len(c.targets) == 3 for c in lists)
    p5 = aligner.score(inst.test_anchors, k=5)
    assert 0.0 <= p5 <= 1.0
    report = aligner.evaluate(inst.test_anchors, k=5)
    assert report["map_at_k"] <= report["precision_at_k"] + 1e-12


def test_fit_is_deterministic():
    inst = generate_instance(SMALL)
    kw = dict(d_u=12, d_c=6, ego_width=6, pretrain_epochs=2,
              max_rounds=1, epochs_per_round=1, random_state=7)
    a = DnaAligner(**kw).fit(inst.g_s, inst.g_t, inst.train_anchors)
    b = DnaAligner(**kw).fit(inst.g_s, inst.g_t, inst.train_anchors)
    assert np.array_equal(a.identity_s_, b.identity_s_)
    assert np.array_equal(a.identity_t_, b.identity_t_)
    assert a.trace_ == b.trace_


def test_exclude_train_targets(fitted):
    inst, _ = fitted
    aligner = DnaAligner(d_u=12, d_c=6, ego_width=6, pretrain_epochs=2,
                         max_rounds=1, epochs_per_round=1,
                         exclude_train_targets=True, random_state=0)
    aligner.fit(inst.g_s, inst.g_t, inst.train_anchors)
    banned = {l for _, l in inst.train_anchors.pairs}
    lists = aligner.predict(sorted(inst.test_anchors.as_dict()), k=5)
    for cand in lists:
        assert banned.isdisjoint(set(int(t) for t in cand.targets))


def test_consistency_laplacian_modes():
    inst = generate_instance(SMALL)
    cfg = RwrConfig(xi=0.5, omega=2)
    lap = consistency_laplacian(inst.g_s, cfg, "laplacian")
    lap_rwr = consistency_laplacian(inst.g_s, cfg, "rwr")
    for mat in (lap, lap_rwr):
        dense = np.asarray(mat.todense())
        assert np.allclose(dense.sum(axis=1), 0.0, atol=1e-10)
        assert np.allclose(dense, dense.T, atol=1e-12)
    assert not np.allclose(np.asarray(lap.todense()), np.asarray(lap_rwr.todense()))

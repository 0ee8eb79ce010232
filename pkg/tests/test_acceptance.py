"""Acceptance gate: nine numbered criteria covering the full pipeline, each
printing a single pass/fail line with the measured quantity.

Criterion 5 is known not to hold under the stated iteration budget; it is
implemented exactly as stated and allowed to fail (see the analysis in the
development notes)."""

import time

import numpy as np
import pytest

from dna_align.estimator import DnaAligner
from dna_align.evaluate import CandidateList, map_at_k, overlap_rate, precision_at_k
from dna_align.graph import AnchorSet, build_indication, laplacian
from dna_align.lstm import NetParams, TrainConfig, decode, encode, loss_and_grads
from dna_align.rwr import EgoTensor, RwrConfig, rwr_scores
from dna_align.subspace import (
    ObjWeights,
    SubspaceState,
    alternate_qv,
    kkt_residual,
    subspace_objective,
    update_q,
)
from dna_align.synth import SynthConfig, generate_instance


def report(num, name, passed, detail):
    print(f"criterion {num} ({name}): {'PASS' if passed else 'FAIL'} [{detail}]")


# --------------------------------------------------------------------------
# 1. random-walk scores match a dense unrolled-recurrence oracle
# --------------------------------------------------------------------------

def dense_rwr_oracle(g, start, xi, omega):
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    deg = g.sum(axis=1)
    p = np.zeros_like(g)
    nz = deg > 0
    p[nz] = g[nz] / deg[nz, None]
    r0 = np.zeros(n)
    r0[start] = 1.0
    r = r0.copy()
    total = np.zeros(n)
    for _ in range(omega):
        r = xi * (r @ p + r[~nz].sum() * r0) + (1 - xi) * r0
        total += r
    return total


def test_criterion_1_rwr_oracle():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 21))
        g = (rng.uniform(0, 1, (n, n)) < 0.3).astype(float)
        np.fill_diagonal(g, 0.0)
        if rng.random() < 0.5:
            g = np.maximum(g, g.T)
        xi = float(rng.choice([0.0, 0.3, 0.85]))
        omega = int(rng.choice([1, 3, 5]))
        start = int(rng.integers(n))
        got = rwr_scores(g, start, RwrConfig(xi=xi, omega=omega))
        worst = max(worst, float(np.max(np.abs(got - dense_rwr_oracle(g, start, xi, omega)))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and elapsed < 5.0
    report(1, "rwr oracle", ok, f"max abs err {worst:.2e}, {elapsed:.2f}s")
    assert ok


# --------------------------------------------------------------------------
# 2. autoencoder gradients match central finite differences at smooth points
# --------------------------------------------------------------------------

def smooth_instance(seed):
    """Instance whose ReLU pre-activations all exceed 1e-3 in magnitude."""
    rng = np.random.default_rng(seed)
    n, m, w, d = 4, 3, 3, 5
    for _ in range(50):
        vectors = rng.uniform(0.0, 1.0, size=(n, m, w))
        ego = EgoTensor(ego_indices=np.tile(np.arange(w), (n, 1)), vectors=vectors)
        p = NetParams.init(d, w, rng)
        p.encoder.b_c[:] = 0.5
        p.decoder.b_c[:] = 0.5
        u, enc_caches = encode(p, vectors)
        _, dec_caches, _ = decode(p, u, m)
        lo = min(
            min(np.abs(c["a_c"]).min() for c in enc_caches + dec_caches),
            min(np.abs(c["c"]).min() for c in enc_caches + dec_caches),
        )
        if lo > 1e-3:
            a = rng.uniform(0, 1, (n, n))
            lap = laplacian((a + a.T) / 2)
            v = rng.uniform(0.1, 1.0, (n, d))
            q = rng.normal(size=(d, d))
            return p, ego, lap, v, q
    raise AssertionError("could not sample a smooth instance")


def test_criterion_2_gradient_check():
    t0 = time.perf_counter()
    cfg = TrainConfig(alpha=0.1, beta=1.0, keep_prob=1.0, l2=1e-4)
    eps = 1e-5
    worst = 0.0
    for seed in range(20):
        p, ego, lap, v, q = smooth_instance(1000 + seed)
        _, grads, extras = loss_and_grads(p, ego, lap, cfg, v, q)
        for name, arr in p.named_arrays():
            fd = np.zeros_like(arr).ravel()
            flat = arr.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                lp, _, _ = loss_and_grads(p, ego, lap, cfg, v, q)
                flat[idx] = orig - eps
                lm, _, _ = loss_and_grads(p, ego, lap, cfg, v, q)
                flat[idx] = orig
                fd[idx] = (lp - lm) / (2 * eps)
            g = grads[name].ravel()
            err = np.linalg.norm(fd - g) / (np.linalg.norm(fd) + np.linalg.norm(g) + 1e-300)
            worst = max(worst, err)
        # the direct dLoss/dU path: perturb U through the terms that touch it
        u = extras["u"]
        lap_d = np.asarray(lap.todense())
        fd_u = np.zeros_like(u)
        for i in range(u.shape[0]):
            for j in range(u.shape[1]):
                up, um = u.copy(), u.copy()
                up[i, j] += eps
                um[i, j] -= eps

                def f(u_):
                    return (cfg.alpha * np.trace(u_.T @ lap_d @ u_)
                            + cfg.beta * np.sum((u_ - v @ q) ** 2))

                fd_u[i, j] = (f(up) - f(um)) / (2 * eps)
        du = extras["du_direct"]
        err = np.linalg.norm(fd_u - du) / (np.linalg.norm(fd_u) + np.linalg.norm(du) + 1e-300)
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 30.0
    report(2, "gradient check", ok, f"worst rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


# --------------------------------------------------------------------------
# 3. the closed-form projection step is a stationary point
# --------------------------------------------------------------------------

def test_criterion_3_projection_step_optimality():
    rng = np.random.default_rng(103)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 40))
        d_u = int(rng.integers(2, 10))
        d_c = int(rng.integers(1, d_u + 1))
        v = rng.uniform(0.05, 1.0, (n, d_c))
        u = rng.uniform(0.0, 1.0, (n, d_u))
        q = update_q(v, u)
        grad = 2.0 * (v.T @ (v @ q - u))  # d/dQ ||U - VQ||^2
        ratio = np.linalg.norm(grad) / (1.0 + np.linalg.norm(v.T @ u))
        worst = max(worst, ratio)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 5.0
    report(3, "projection-step optimality", ok, f"worst grad ratio {worst:.2e}, {elapsed:.2f}s")
    assert ok


# --------------------------------------------------------------------------
# 4 and 5. multiplicative identity updates: descent, nonnegativity, KKT
# --------------------------------------------------------------------------

def _qv_instances():
    instances = []
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        n, d_u, d_c, n_anchor = 30, 8, 4, 5
        u_s = rng.uniform(0, 1, (n, d_u))
        u_t = rng.uniform(0, 1, (n, d_u))
        v_s = rng.uniform(0.1, 1, (n, d_c))
        v_t = rng.uniform(0.1, 1, (n, d_c))
        src = rng.choice(n, n_anchor, replace=False)
        tgt = rng.choice(n, n_anchor, replace=False)
        anchors = build_indication(
            AnchorSet(tuple((int(a), int(b)) for a, b in zip(src, tgt))), n, n
        )
        state = SubspaceState(u_s, u_t, v_s, v_t,
                              update_q(v_s, u_s), update_q(v_t, u_t))
        instances.append((state, anchors))
    return instances


def _run_criterion_4_5():
    w = ObjWeights(alpha=0.1, beta=1.0, gamma=10.0)
    worst_violation = -np.inf
    all_nonneg = True
    worst_kkt_ratio = 0.0
    for state, anchors in _qv_instances():
        k0 = max(
            kkt_residual(state.v_s, state.u_s, state.q_s, anchors, state.v_t, w, "source"),
            kkt_residual(state.v_t, state.u_t, state.q_t, anchors, state.v_s, w, "target"),
        )
        values = [subspace_objective(state, anchors, w)]
        values += alternate_qv(state, anchors, w, 200)
        values = np.asarray(values)
        rel = np.diff(values) / np.maximum(1.0, np.abs(values[:-1]))
        worst_violation = max(worst_violation, float(rel.max()))
        all_nonneg &= bool((state.v_s >= 0).all() and (state.v_t >= 0).all())
        k1 = max(
            kkt_residual(state.v_s, state.u_s, state.q_s, anchors, state.v_t, w, "source"),
            kkt_residual(state.v_t, state.u_t, state.q_t, anchors, state.v_s, w, "target"),
        )
        worst_kkt_ratio = max(worst_kkt_ratio, k1 / k0)
    return worst_violation, all_nonneg, worst_kkt_ratio


@pytest.fixture(scope="module")
def qv_results():
    t0 = time.perf_counter()
    out = _run_criterion_4_5()
    return out + (time.perf_counter() - t0,)


def test_criterion_4_descent_and_nonnegativity(qv_results):
    worst_violation, all_nonneg, _, elapsed = qv_results
    ok = worst_violation <= 1e-9 and all_nonneg and elapsed < 30.0
    report(4, "identity-update descent", ok,
           f"worst rel increase {worst_violation:.2e}, nonneg={all_nonneg}, {elapsed:.1f}s")
    assert ok


def test_criterion_5_kkt_residual_at_convergence(qv_results):
    _, _, worst_ratio, _ = qv_results
    ok = worst_ratio <= 1e-6
    report(5, "kkt residual", ok, f"worst residual ratio {worst_ratio:.2e} vs 1e-6")
    assert ok


# --------------------------------------------------------------------------
# 6. metric fixtures
# --------------------------------------------------------------------------

def test_criterion_6_metric_fixtures():
    lists = [
        CandidateList(0, np.array([5, 7, 6]), np.array([0.1, 0.2, 0.3])),
        CandidateList(1, np.array([4, 5, 6]), np.array([0.1, 0.2, 0.3])),
    ]
    truth = {0: 7, 1: 9}
    fixture_ok = (precision_at_k(lists, truth, 3) == 0.5
                  and map_at_k(lists, truth, 3) == 0.25)

    rng = np.random.default_rng(106)
    random_ok = True
    for _ in range(50):
        n = int(rng.integers(1, 10))
        rl = [CandidateList(s, rng.permutation(12)[:3], np.arange(3.0)) for s in range(n)]
        rt = {s: int(rng.integers(12)) for s in range(n)}
        random_ok &= map_at_k(rl, rt, 1) == precision_at_k(rl, rt, 1)
    ok = fixture_ok and random_ok
    report(6, "metric fixtures", ok, f"fixture={fixture_ok}, map1==prec1 {random_ok}")
    assert ok


# --------------------------------------------------------------------------
# 7. planted alignment: the dynamic pipeline beats its static ablation
# --------------------------------------------------------------------------

def test_criterion_7_planted_alignment_dynamic_vs_static():
    t0 = time.perf_counter()
    dyn, static = [], []
    for seed in range(5):
        cfg = SynthConfig(n_base=300, num_snapshots=5, overlap=0.5,
                          edge_noise=0.05, eta=0.1, seed=seed)
        inst = generate_instance(cfg)
        aligner = DnaAligner(random_state=seed)
        aligner.fit(inst.g_s, inst.g_t, inst.train_anchors)
        dyn.append(aligner.score(inst.test_anchors, k=5))
        ablation = DnaAligner(random_state=seed)
        ablation.fit(inst.g_s.final_only(), inst.g_t.final_only(), inst.train_anchors)
        static.append(ablation.score(inst.test_anchors, k=5))
    elapsed = time.perf_counter() - t0
    mean_dyn = float(np.mean(dyn))
    wins = sum(d > s for d, s in zip(dyn, static))
    ok = mean_dyn >= 0.6 and wins >= 4 and elapsed < 600.0
    report(7, "planted alignment", ok,
           f"mean P@5 {mean_dyn:.3f} (static {np.mean(static):.3f}), "
           f"dynamic wins {wins}/5, {elapsed:.0f}s")
    assert ok


# --------------------------------------------------------------------------
# 8. overlap-rate arithmetic on the 50%-overlap benchmark sizes
# --------------------------------------------------------------------------

def test_criterion_8_overlap_rate():
    rate = overlap_rate(2858, 5167, 5240)
    ok = abs(rate - 0.549) < 5e-4
    report(8, "overlap rate", ok, f"2*2858/(5167+5240) = {rate:.4f}")
    assert ok


# --------------------------------------------------------------------------
# 9. end-to-end determinism
# --------------------------------------------------------------------------

def test_criterion_9_pipeline_determinism(tmp_path):
    from dna_align.cli import main

    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "n_base = 120\nsnapshots = 3\neta = 0.2\n"
        "d_u = 16\nd_c = 8\nego_width = 8\n"
        "pretrain_epochs = 3\nmax_rounds = 2\nepochs_per_round = 1\n"
        "k_list = 1,5\nseed = 4\n"
    )
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        assert main(["pipeline", "--config", str(cfg_path), "--out", str(out)]) == 0
        outs.append(out)
    trace_same = ((outs[0] / "model" / "trace.csv").read_bytes()
                  == (outs[1] / "model" / "trace.csv").read_bytes())
    report_same = ((outs[0] / "model" / "report.json").read_bytes()
                   == (outs[1] / "model" / "report.json").read_bytes())
    ok = trace_same and report_same
    report(9, "determinism", ok, f"trace identical={trace_same}, report identical={report_same}")
    assert ok

"""Estimator-style facade over the full alignment pipeline so it composes
with sklearn-style tooling: construct with hyperparameters, ``fit`` on a pair
of dynamic graphs plus training anchors, ``predict`` ranked candidates."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .graph import (
    AnchorSet,
    DynamicGraph,
    aggregate_with_decay,
    build_indication,
    laplacian,
)
from .lstm import NetParams, TrainConfig
from .rwr import EgoTensor, RwrConfig, build_ego_tensor, rwr_affinity
from .subspace import AlternatingResult, ObjWeights, Schedule, run_alternating
from .evaluate import CandidateList, map_at_k, precision_at_k, rank_candidates


def consistency_laplacian(g: DynamicGraph, rwr_cfg: RwrConfig, mode: str = "laplacian") -> sp.csr_matrix:
    """Graph Laplacian of the decay-aggregated adjacency, or of the pairwise
    RWR affinity when mode == 'rwr'."""
    if mode == "rwr":
        return laplacian(rwr_affinity(aggregate_with_decay(g), rwr_cfg))
    return laplacian(aggregate_with_decay(g))


class DnaAligner(BaseEstimator):
    """Dynamic network aligner: RWR ego tensors -> LSTM autoencoder dual
    embeddings -> alternating projection / identity-embedding optimization.

    After ``fit``, ``identity_s_`` / ``identity_t_`` hold the common-subspace
    embeddings and ``trace_`` the per-round objective diagnostics.
    """

    def __init__(
        self,
        d_u: int = 128,
        d_c: int = 128,
        ego_width: int = 32,
        xi: float = 0.5,
        omega: int = 3,
        alpha: float = 0.1,
        beta: float = 1.0,
        gamma: float = 10.0,
        learning_rate: float = 1e-3,
        keep_prob: float = 0.8,
        l2: float = 1e-4,
        batch_size: int = 0,
        epochs_per_round: int = 2,
        pretrain_epochs: int = 10,
        max_rounds: int = 2,
        tol: float = 1e-5,
        consistency: str = "laplacian",
        distance: str = "euclidean",
        exclude_train_targets: bool = False,
        random_state: int = 0,
    ):
        self.d_u = d_u
        self.d_c = d_c
        self.ego_width = ego_width
        self.xi = xi
        self.omega = omega
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.keep_prob = keep_prob
        self.l2 = l2
        self.batch_size = batch_size
        self.epochs_per_round = epochs_per_round
        self.pretrain_epochs = pretrain_epochs
        self.max_rounds = max_rounds
        self.tol = tol
        self.consistency = consistency
        self.distance = distance
        self.exclude_train_targets = exclude_train_targets
        self.random_state = random_state

    def _configs(self) -> tuple[RwrConfig, TrainConfig, ObjWeights, Schedule]:
        rwr_cfg = RwrConfig(xi=self.xi, omega=self.omega)
        train_cfg = TrainConfig(
            alpha=self.alpha, beta=self.beta, keep_prob=self.keep_prob,
            l2=self.l2, learning_rate=self.learning_rate,
            epochs_per_round=self.epochs_per_round,
            batch_size=self.batch_size or None,
        )
        weights = ObjWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma)
        schedule = Schedule(
            max_rounds=self.max_rounds, tol=self.tol,
            pretrain_epochs=self.pretrain_epochs, d_c=self.d_c,
        )
        return rwr_cfg, train_cfg, weights, schedule

    def fit(self, source: DynamicGraph, target: DynamicGraph, anchors: AnchorSet) -> "DnaAligner":
        rwr_cfg, train_cfg, weights, schedule = self._configs()
        rng = np.random.default_rng(self.random_state)

        ego_s = build_ego_tensor(source, rwr_cfg, self.ego_width)
        ego_t = build_ego_tensor(target, rwr_cfg, self.ego_width)
        lap_s = consistency_laplacian(source, rwr_cfg, self.consistency)
        lap_t = consistency_laplacian(target, rwr_cfg, self.consistency)
        indication = build_indication(anchors, source.num_users, target.num_users)

        # both networks share the seeded initialization: ego features are
        # score profiles, so a common starting point keeps the two dual
        # embedding spaces commensurable under weak anchor supervision
        init_rng = np.random.default_rng(self.random_state)
        params_s = NetParams.init(self.d_u, self.ego_width, init_rng)
        params_t = params_s.copy()

        result: AlternatingResult = run_alternating(
            ego_s, ego_t, lap_s, lap_t, indication,
            params_s, params_t, weights, train_cfg, schedule, rng,
        )
        self.result_ = result
        self.params_s_, self.params_t_ = result.params_s, result.params_t
        self.identity_s_ = result.state.v_s
        self.identity_t_ = result.state.v_t
        self.trace_ = result.trace
        self.train_anchors_ = anchors
        self.ego_s_, self.ego_t_ = ego_s, ego_t
        return self

    def _excluded_targets(self) -> tuple[int, ...]:
        if not self.exclude_train_targets:
            return ()
        return tuple(l for _, l in self.train_anchors_.pairs)

    def predict(self, test_sources, k: int = 5) -> list[CandidateList]:
        """Ranked length-k target candidate lists for the given source users."""
        return rank_candidates(
            self.identity_s_, self.identity_t_, test_sources, k,
            distance=self.distance, exclude_targets=self._excluded_targets(),
        )

    def score(self, truth: AnchorSet, k: int = 5) -> float:
        """Precision@k over the given ground-truth anchor pairs."""
        truth_map = truth.as_dict()
        lists = self.predict(sorted(truth_map), k=k)
        return precision_at_k(lists, truth_map, k)

    def evaluate(self, truth: AnchorSet, k: int = 5) -> dict[str, float]:
        truth_map = truth.as_dict()
        lists = self.predict(sorted(truth_map), k=k)
        return {
            "precision_at_k": precision_at_k(lists, truth_map, k),
            "map_at_k": map_at_k(lists, truth_map, k),
        }

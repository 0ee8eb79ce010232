"""Truncated random walk with restart, ego-network selection and the per-user
ego vector sequences (the ego tensor) fed to the sequence autoencoder."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import DataError, DynamicGraph, aggregate_with_decay

#: Sentinel for ego slots without a qualifying friend; their ego-vector
#: entries are identically zero.
PAD = -1


@dataclass(frozen=True)
class RwrConfig:
    xi: float = 0.5  # probability the walker does NOT restart
    omega: int = 3  # number of walk steps summed

    def __post_init__(self):
        if not 0.0 <= self.xi < 1.0:
            raise DataError(f"xi must be in [0, 1), got {self.xi}")
        if self.omega < 1:
            raise DataError(f"omega must be >= 1, got {self.omega}")


@dataclass(frozen=True)
class EgoTensor:
    """Per-user ego friend indices (N x W, PAD-filled) and RWR score
    sequences (N x M x W)."""

    ego_indices: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        n, m, w = self.vectors.shape
        if self.ego_indices.shape != (n, w):
            raise DataError("ego_indices / vectors shape mismatch")

    @property
    def num_users(self) -> int:
        return self.vectors.shape[0]

    @property
    def num_snapshots(self) -> int:
        return self.vectors.shape[1]

    @property
    def width(self) -> int:
        return self.vectors.shape[2]


def transition_matrix(g: sp.spmatrix | np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Row-normalized D^-1 G with dangling (zero out-degree) rows left zero;
    also returns the dangling-row mask."""
    g = sp.csr_matrix(g)
    out_deg = np.asarray(g.sum(axis=1)).ravel()
    dangling = out_deg == 0
    inv = np.zeros_like(out_deg)
    inv[~dangling] = 1.0 / out_deg[~dangling]
    return (sp.diags(inv) @ g).tocsr(), dangling


def rwr_scores(
    g: sp.spmatrix | np.ndarray,
    start: int,
    cfg: RwrConfig,
    *,
    transition: tuple[sp.csr_matrix, np.ndarray] | None = None,
    include_restart_term: bool = False,
) -> np.ndarray:
    """omega-step RWR proximity vector from ``start``.

    Recurrence: r^(k) = xi * r^(k-1) D^-1 G + (1 - xi) * r^(0), summed over
    k = 1..omega (the trivial k=0 one-hot term is excluded unless
    ``include_restart_term``). Walk mass sitting on dangling rows restarts to
    the start node, keeping D^-1 well defined.
    """
    p, dangling = transition_matrix(g) if transition is None else transition
    n = p.shape[0]
    if not 0 <= start < n:
        raise DataError(f"start node {start} out of range for N={n}")
    r0 = np.zeros(n)
    r0[start] = 1.0
    r = r0
    total = r0.copy() if include_restart_term else np.zeros(n)
    for _ in range(cfg.omega):
        r = cfg.xi * (r @ p) + cfg.xi * r[dangling].sum() * r0 + (1.0 - cfg.xi) * r0
        total += r
    return total


def select_ego(r_aggregated: np.ndarray, start: int, width: int) -> np.ndarray:
    """Indices of the W largest strictly-positive scores, start excluded,
    ties broken by ascending index; short lists are PAD-filled."""
    if width < 1:
        raise DataError(f"ego width must be >= 1, got {width}")
    scores = np.asarray(r_aggregated, dtype=float).copy()
    scores[start] = 0.0
    candidates = np.flatnonzero(scores > 0)
    # stable sort on -score keeps ascending-index order within ties
    order = candidates[np.argsort(-scores[candidates], kind="stable")][:width]
    out = np.full(width, PAD, dtype=np.intp)
    out[: len(order)] = order
    return out


def build_ego_tensor(g: DynamicGraph, cfg: RwrConfig, width: int) -> EgoTensor:
    """Fix each user's ego friends on the decay-aggregated graph, then record
    their per-snapshot RWR scores: vectors[i, m, w] = r_i^(m)[q_w]."""
    n, m_count = g.num_users, g.num_snapshots
    agg_t = transition_matrix(aggregate_with_decay(g))
    ego_indices = np.empty((n, width), dtype=np.intp)
    for i in range(n):
        ego_indices[i] = select_ego(rwr_scores(None, i, cfg, transition=agg_t), i, width)

    vectors = np.zeros((n, m_count, width))
    valid = ego_indices != PAD
    safe_idx = np.where(valid, ego_indices, 0)
    for m, snap in enumerate(g.snapshots):
        snap_t = transition_matrix(snap.to_sparse())
        for i in range(n):
            scores = rwr_scores(None, i, cfg, transition=snap_t)
            vectors[i, m] = np.where(valid[i], scores[safe_idx[i]], 0.0)
    return EgoTensor(ego_indices=ego_indices, vectors=vectors)


def rwr_affinity(g: sp.spmatrix | np.ndarray, cfg: RwrConfig) -> np.ndarray:
    """Dense matrix of pairwise RWR scores (row i = scores from user i);
    backs the RWR-weighted variant of the consistency regularizer."""
    trans = transition_matrix(g)
    n = trans[0].shape[0]
    return np.vstack([rwr_scores(None, i, cfg, transition=trans) for i in range(n)])


def save_ego_tensor(
    ego: EgoTensor, path: str | Path, *, graph_hash: str, cfg: RwrConfig
) -> None:
    """Cache keyed by (graph hash, xi, omega, W); see :func:`load_ego_tensor`."""
    np.savez_compressed(
        path,
        ego_indices=ego.ego_indices,
        vectors=ego.vectors,
        key=np.array([graph_hash, repr(cfg.xi), repr(cfg.omega), repr(ego.width)]),
    )


def load_ego_tensor(
    path: str | Path, *, graph_hash: str, cfg: RwrConfig, width: int
) -> EgoTensor | None:
    """Returns the cached tensor, or None when the key does not match."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as data:
        key = list(data["key"])
        if key != [graph_hash, repr(cfg.xi), repr(cfg.omega), repr(width)]:
            return None
        return EgoTensor(ego_indices=data["ego_indices"], vectors=data["vectors"])

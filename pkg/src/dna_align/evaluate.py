"""Ranked alignment candidates and the Precision@K / MAP@K / overlap-rate
metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .graph import DataError


@dataclass(frozen=True)
class CandidateList:
    source: int
    targets: np.ndarray  # K target indices, best first
    distances: np.ndarray  # matching non-decreasing distances


@dataclass(frozen=True)
class EvalReport:
    k: int
    n_test_anchors: int
    precision_at_k: float
    map_at_k: float
    distance: str = "euclidean"
    exclude_train_targets: bool = False
    symmetric: bool = False


def rank_candidates(
    v_s: np.ndarray,
    v_t: np.ndarray,
    test_sources: Sequence[int],
    k: int,
    *,
    distance: str = "euclidean",
    exclude_targets: Sequence[int] = (),
) -> list[CandidateList]:
    """Per test source, the K nearest target rows of v_t; ties broken by
    ascending target index."""
    if k < 1:
        raise DataError(f"K must be >= 1, got {k}")
    n_t = v_t.shape[0]
    pool = n_t - len(set(exclude_targets))
    if k > pool:
        raise DataError(f"K={k} exceeds candidate pool of {pool} targets")
    sources = np.asarray(test_sources, dtype=np.intp)
    dists = cdist(v_s[sources], v_t, metric=distance)
    if len(exclude_targets):
        dists[:, np.asarray(sorted(set(exclude_targets)), dtype=np.intp)] = np.inf
    out = []
    for row, src in enumerate(sources):
        order = np.argsort(dists[row], kind="stable")[:k]
        out.append(CandidateList(source=int(src), targets=order,
                                 distances=dists[row][order]))
    return out


def _hit_ranks(
    lists: Sequence[CandidateList], truth: Mapping[int, int], k: int
) -> np.ndarray:
    """1-based rank of the true target in each top-K list; 0 when missed."""
    ranks = np.zeros(len(lists), dtype=np.intp)
    for n, cand in enumerate(lists):
        if len(cand.targets) < k:
            raise DataError(f"candidate list for source {cand.source} shorter than K={k}")
        if cand.source not in truth:
            raise DataError(f"no ground truth for source {cand.source}")
        hits = np.flatnonzero(cand.targets[:k] == truth[cand.source])
        if len(hits):
            ranks[n] = hits[0] + 1
    return ranks


def precision_at_k(
    lists: Sequence[CandidateList], truth: Mapping[int, int], k: int
) -> float:
    """Fraction of sources whose true target appears in their top-K list."""
    if not lists:
        raise DataError("no candidate lists to evaluate")
    return float(np.mean(_hit_ranks(lists, truth, k) > 0))


def map_at_k(
    lists: Sequence[CandidateList], truth: Mapping[int, int], k: int
) -> float:
    """Mean of 1/Rank_i over sources, with 1/Rank_i = 0 on a miss."""
    if not lists:
        raise DataError("no candidate lists to evaluate")
    ranks = _hit_ranks(lists, truth, k)
    recip = np.where(ranks > 0, 1.0 / np.maximum(ranks, 1), 0.0)
    return float(np.mean(recip))


def overlap_rate(num_anchors: int, n_source: int, n_target: int) -> float:
    """2A / (S + T)."""
    if n_source <= 0 or n_target <= 0:
        raise DataError("network sizes must be positive")
    if num_anchors < 0 or num_anchors > min(n_source, n_target):
        raise DataError(f"anchor count {num_anchors} infeasible for sizes "
                        f"({n_source}, {n_target})")
    return 2.0 * num_anchors / (n_source + n_target)


def write_report(reports: Sequence[EvalReport], path: str | Path, *, extra: dict | None = None) -> None:
    doc = {"reports": [asdict(r) for r in reports]}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_candidates_csv(
    lists: Sequence[CandidateList], path: str | Path, *, config_hash: str = ""
) -> None:
    """CSV rows ``source_id, rank, target_id, distance``."""
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["source_id", "rank", "target_id", "distance"])
        for cand in lists:
            for rank, (tgt, dist) in enumerate(zip(cand.targets, cand.distances), start=1):
                writer.writerow([cand.source, rank, int(tgt), f"{dist:.17g}"])

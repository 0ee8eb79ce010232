"""Dynamic graph containers: snapshot sequences, decay aggregation, Laplacians,
anchor sets and the indication (row-selector) bookkeeping.

Snapshots are cumulative: snapshot m is the live friendship graph at the end of
the m-th sub-interval, not the per-interval delta. An ``interval_scoped`` flag
on :func:`ingest_edge_events` flips this.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed line in an event or anchor file."""


class DataError(ValueError):
    """Structurally invalid data (bad indices, infeasible request)."""


@dataclass(frozen=True)
class EdgeEvent:
    src: int
    dst: int
    time: float
    weight: float = 1.0
    op: str = "a"  # "a" add / set-weight, "r" remove

    def __post_init__(self):
        if self.op not in ("a", "r"):
            raise DataError(f"unknown event op {self.op!r}")
        if self.weight < 0:
            raise DataError(f"negative edge weight {self.weight}")


@dataclass(frozen=True)
class SnapshotGraph:
    """One adjacency snapshot; ``edges`` maps (i, j) -> nonnegative weight."""

    num_users: int
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        for (i, j), w in self.edges.items():
            if not (0 <= i < self.num_users and 0 <= j < self.num_users):
                raise DataError(f"edge ({i},{j}) out of range for N={self.num_users}")
            if w < 0:
                raise DataError(f"negative weight on edge ({i},{j})")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def to_sparse(self) -> sp.csr_matrix:
        n = self.num_users
        if not self.edges:
            return sp.csr_matrix((n, n))
        rows, cols, vals = zip(*((i, j, w) for (i, j), w in self.edges.items()))
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


@dataclass(frozen=True)
class DynamicGraph:
    """Ordered sequence of M snapshots over a fixed user set."""

    num_users: int
    snapshots: tuple[SnapshotGraph, ...]

    def __post_init__(self):
        if len(self.snapshots) < 1:
            raise DataError("a dynamic graph needs at least one snapshot")
        for s in self.snapshots:
            if s.num_users != self.num_users:
                raise DataError("all snapshots must share num_users")

    @property
    def num_snapshots(self) -> int:
        return len(self.snapshots)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"N={self.num_users};M={self.num_snapshots};".encode())
        for s in self.snapshots:
            for (i, j), w in sorted(s.edges.items()):
                h.update(f"{i},{j},{w:.17g};".encode())
            h.update(b"|")
        return h.hexdigest()[:16]

    def final_only(self) -> "DynamicGraph":
        """Collapse to M=1 keeping the last cumulative snapshot (static ablation)."""
        return DynamicGraph(self.num_users, (self.snapshots[-1],))


@dataclass(frozen=True)
class AnchorSet:
    """Known cross-network user pairs (k in source, l in target)."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        ks = [k for k, _ in self.pairs]
        ls = [l for _, l in self.pairs]
        if len(set(ks)) != len(ks) or len(set(ls)) != len(ls):
            raise DataError("anchor indices must be unique on each side")

    def __len__(self) -> int:
        return len(self.pairs)

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


@dataclass(frozen=True)
class IndicationPair:
    """Anchor row selectors, kept as index lists instead of dense binary
    matrices: row a of P^s selects source_idx[a], row a of P^t selects
    target_idx[a]."""

    source_idx: np.ndarray
    target_idx: np.ndarray
    source_width: int
    target_width: int

    @property
    def num_anchors(self) -> int:
        return len(self.source_idx)

    def gather_source(self, mat: np.ndarray) -> np.ndarray:
        return mat[self.source_idx]

    def gather_target(self, mat: np.ndarray) -> np.ndarray:
        return mat[self.target_idx]

    def own_and_cross(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        """(own indices, cross indices) for one side, in anchor order."""
        if side == "source":
            return self.source_idx, self.target_idx
        if side == "target":
            return self.target_idx, self.source_idx
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")


def ingest_edge_events(
    events: Iterable[EdgeEvent],
    num_snapshots: int,
    time_window: tuple[float, float],
    *,
    directed: bool = True,
    num_users: int | None = None,
    interval_scoped: bool = False,
) -> DynamicGraph:
    """Bucket timestamped add/remove events into M cumulative snapshots.

    The window [t_start, t_end] is split into ``num_snapshots`` equal
    sub-intervals; snapshot m holds the edge state at the end of sub-interval
    m. Removes of absent edges are counted and logged, not fatal.
    """
    t0, t1 = time_window
    if not t0 < t1:
        raise DataError(f"empty time window [{t0}, {t1}]")
    if num_snapshots < 1:
        raise DataError("need at least one snapshot")
    events = sorted(events, key=lambda e: e.time)
    if num_users is None:
        num_users = 1 + max((max(e.src, e.dst) for e in events), default=-1)

    m_count = num_snapshots
    span = (t1 - t0) / m_count
    buckets: list[list[EdgeEvent]] = [[] for _ in range(m_count)]
    for e in events:
        if not (t0 <= e.time <= t1):
            raise DataError(f"event at t={e.time} outside window [{t0}, {t1}]")
        b = min(int((e.time - t0) / span), m_count - 1)
        buckets[b].append(e)

    missing_removes = 0
    state: dict[tuple[int, int], float] = {}
    snapshots = []
    for b in buckets:
        for e in b:
            keys = [(e.src, e.dst)] if directed else [(e.src, e.dst), (e.dst, e.src)]
            for key in keys:
                if e.op == "a":
                    state[key] = e.weight
                elif key in state:
                    del state[key]
                else:
                    missing_removes += 1
        snapshots.append(SnapshotGraph(num_users, dict(state)))
        if interval_scoped:
            state = {}
    if missing_removes:
        logger.warning("ignored %d removes of non-existent edges", missing_removes)
    return DynamicGraph(num_users, tuple(snapshots))


def aggregate_with_decay(g: DynamicGraph) -> sp.csr_matrix:
    """Exponential-decay aggregate sum_m e^(m-M) * snapshot_m (m = 1..M)."""
    m_count = g.num_snapshots
    total = sp.csr_matrix((g.num_users, g.num_users))
    for m, snap in enumerate(g.snapshots, start=1):
        total = total + np.exp(m - m_count) * snap.to_sparse()
    return total.tocsr()


def laplacian(a: sp.spmatrix | np.ndarray) -> sp.csr_matrix:
    """Symmetrize then L = diag(row sums) - A; rows of L sum to zero."""
    a = sp.csr_matrix(a)
    if a.nnz and a.data.min() < 0:
        raise DataError("laplacian input must be nonnegative")
    sym = (a + a.T) * 0.5
    deg = np.asarray(sym.sum(axis=1)).ravel()
    return (sp.diags(deg) - sym).tocsr()


def build_indication(anchors: AnchorSet, n_source: int, n_target: int) -> IndicationPair:
    src, tgt = [], []
    for k, l in anchors.pairs:
        if not 0 <= k < n_source or not 0 <= l < n_target:
            raise DataError(f"anchor pair ({k},{l}) out of range (N^s={n_source}, N^t={n_target})")
        src.append(k)
        tgt.append(l)
    return IndicationPair(
        source_idx=np.asarray(src, dtype=np.intp),
        target_idx=np.asarray(tgt, dtype=np.intp),
        source_width=n_source,
        target_width=n_target,
    )


# ---------------------------------------------------------------------------
# File formats.
#
# Edge-event file: one event per line, whitespace-separated
#   src dst timestamp [weight] op       (op in {a, r}; weight defaults to 1.0)
# Anchor file: lines "src_id tgt_id". '#' starts a comment in both.
# String ids are mapped to 0-based ints in first-seen order; the mapping goes
# to a two-column sidecar file.
# ---------------------------------------------------------------------------


def _is_plain_int(tok: str) -> bool:
    return tok.isdigit()


def read_edge_event_file(
    path: str | Path, id_map: dict[str, int] | None = None
) -> tuple[list[EdgeEvent], dict[str, int]]:
    """Parse an edge-event file. Files whose ids are all plain nonnegative
    integers keep them verbatim; otherwise string ids are mapped to 0-based
    ints in first-seen order (write the map out with :func:`write_id_map`)."""
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (4, 5):
            raise ParseError(f"{path}:{lineno}: expected 4 or 5 fields, got {len(fields)}")
        rows.append((lineno, fields))

    if id_map is None:
        if all(_is_plain_int(f[0]) and _is_plain_int(f[1]) for _, f in rows):
            id_map = {tok: int(tok) for _, f in rows for tok in f[:2]}
        else:
            id_map = {}
    remap = id_map

    def resolve(tok: str) -> int:
        if tok not in remap:
            remap[tok] = len(remap)
        return remap[tok]

    events = []
    for lineno, fields in rows:
        try:
            src = resolve(fields[0])
            dst = resolve(fields[1])
            t = float(fields[2])
            weight = float(fields[3]) if len(fields) == 5 else 1.0
            op = fields[-1]
            events.append(EdgeEvent(src, dst, t, weight, op))
        except (ValueError, DataError) as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return events, id_map


def write_edge_event_file(events: Sequence[EdgeEvent], path: str | Path) -> None:
    lines = [f"{e.src} {e.dst} {e.time!r} {e.weight!r} {e.op}" for e in events]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_id_map(id_map: dict[str, int], path: str | Path) -> None:
    lines = [f"{name} {idx}" for name, idx in sorted(id_map.items(), key=lambda kv: kv[1])]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_id_map(path: str | Path) -> dict[str, int]:
    id_map = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            name, idx = line.split()
            id_map[name] = int(idx)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return id_map


def read_anchor_file(
    path: str | Path,
    src_map: dict[str, int] | None = None,
    tgt_map: dict[str, int] | None = None,
) -> AnchorSet:
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(fields)}")
        try:
            k = src_map[fields[0]] if src_map is not None else int(fields[0])
            l = tgt_map[fields[1]] if tgt_map is not None else int(fields[1])
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: unknown user id {exc}") from exc
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        pairs.append((k, l))
    return AnchorSet(tuple(pairs))


def write_anchor_file(anchors: AnchorSet, path: str | Path) -> None:
    lines = [f"{k} {l}" for k, l in anchors.pairs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

"""Joint objective assembly and the alternating optimization: closed-form
projection (Q) updates, nonnegative multiplicative identity-embedding (V)
updates, KKT diagnostics, and the outer training loop."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import DataError, IndicationPair
from .lstm import (
    AdamState,
    NetParams,
    NumericalError,
    TrainConfig,
    embed,
    loss_and_grads,
    pretrain,
    train_epochs,
)
from .rwr import EgoTensor


class DivergenceError(RuntimeError):
    """Objective blew up; carries the trace gathered so far."""

    def __init__(self, message: str, trace: list[dict]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ObjWeights:
    alpha: float = 0.1
    beta: float = 1.0
    gamma: float = 10.0  # anchor penalty; keep large relative to beta
    eps_div: float = 1e-12
    ridge: float = 1e-10

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise DataError("objective weights must be nonnegative")
        if self.eps_div <= 0 or self.ridge <= 0:
            raise DataError("eps_div and ridge must be positive")


@dataclass
class SubspaceState:
    u_s: np.ndarray
    u_t: np.ndarray
    v_s: np.ndarray
    v_t: np.ndarray
    q_s: np.ndarray
    q_t: np.ndarray


def _check_finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite objective term: {term}")
    return value


def _sq_norm(x: np.ndarray) -> float:
    return float(np.sum(x * x))


def anchor_penalty(v_s: np.ndarray, v_t: np.ndarray, anchors: IndicationPair) -> float:
    """||P^s V^s - P^t V^t||_F^2 via row gathering."""
    return _sq_norm(anchors.gather_source(v_s) - anchors.gather_target(v_t))


def objective(
    state: SubspaceState,
    d_s: float,
    d_t: float,
    anchors: IndicationPair,
    w: ObjWeights,
) -> float:
    """J = D_s + beta||U_s - V_s Q_s||^2 + D_t + beta||U_t - V_t Q_t||^2
    + gamma||P_s V_s - P_t V_t||^2."""
    total = _check_finite(d_s, "D_s") + _check_finite(d_t, "D_t")
    total += _check_finite(w.beta * _sq_norm(state.u_s - state.v_s @ state.q_s), "proj_s")
    total += _check_finite(w.beta * _sq_norm(state.u_t - state.v_t @ state.q_t), "proj_t")
    total += _check_finite(w.gamma * anchor_penalty(state.v_s, state.v_t, anchors), "anchor")
    return total


def update_q(v: np.ndarray, u: np.ndarray, ridge: float = 1e-10) -> np.ndarray:
    """Closed-form least squares Q = (V^T V)^-1 V^T U; the ridge kicks in only
    when V^T V is numerically singular."""
    if v.shape[0] != u.shape[0]:
        raise DataError("V and U must have the same number of rows")
    gram = v.T @ v
    rhs = v.T @ u
    if np.linalg.cond(gram) <= 1e12:
        return np.linalg.solve(gram, rhs)
    gram = gram + ridge * np.eye(gram.shape[0])
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Q update solve failed even with ridge: {exc}") from exc


def _pos_neg(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ax = np.abs(x)
    return (ax + x) * 0.5, (ax - x) * 0.5


def _anchor_scatter(
    v: np.ndarray, other_v: np.ndarray, anchors: IndicationPair, side: str
) -> tuple[np.ndarray, np.ndarray]:
    """Pi = P^T P V (own anchor rows) and Lambda = P^T P' V' (cross anchor
    rows scattered into own indices); zero elsewhere."""
    own, cross = anchors.own_and_cross(side)
    pi = np.zeros_like(v)
    lam = np.zeros_like(v)
    pi[own] = v[own]
    lam[own] = other_v[cross]
    return pi, lam


def update_v(
    v: np.ndarray,
    u: np.ndarray,
    q: np.ndarray,
    anchors: IndicationPair,
    other_v: np.ndarray,
    w: ObjWeights,
    side: str = "source",
) -> np.ndarray:
    """Multiplicative update
    V <- V * sqrt((beta(Psi + V Gamma) + gamma Lambda)
                  / (beta(Ups + V Phi) + gamma Pi + eps)),
    where Psi/Ups split U Q^T and Phi/Gamma split Q Q^T into nonnegative
    parts. Preserves V >= 0 exactly; exact zeros stay zero."""
    psi, ups = _pos_neg(u @ q.T)
    phi, gam = _pos_neg(q @ q.T)
    pi, lam = _anchor_scatter(v, other_v, anchors, side)
    num = w.beta * (psi + v @ gam) + w.gamma * lam
    den = w.beta * (ups + v @ phi) + w.gamma * pi + w.eps_div
    return v * np.sqrt(num / den)


def kkt_residual(
    v: np.ndarray,
    u: np.ndarray,
    q: np.ndarray,
    anchors: IndicationPair,
    other_v: np.ndarray,
    w: ObjWeights,
    side: str = "source",
) -> float:
    """max_ij |[grad_V J]_ij [V]_ij| with
    grad = -2 beta U Q^T + 2 beta V Q Q^T - 2 gamma Lambda + 2 gamma Pi."""
    grad = 2.0 * w.beta * (v @ (q @ q.T) - u @ q.T)
    own, cross = anchors.own_and_cross(side)
    grad[own] += 2.0 * w.gamma * (v[own] - other_v[cross])
    return float(np.max(np.abs(grad * v)))


def subspace_objective(state: SubspaceState, anchors: IndicationPair, w: ObjWeights) -> float:
    """The V/Q-dependent part of J (the D terms are constant under frozen
    network parameters)."""
    return objective(state, 0.0, 0.0, anchors, w)


def alternate_qv(
    state: SubspaceState,
    anchors: IndicationPair,
    w: ObjWeights,
    iterations: int,
) -> list[float]:
    """Run Q then V updates (Gauss-Seidel over the four blocks) for the given
    number of iterations with U frozen; mutates ``state`` and returns the
    objective value recorded after every individual block update."""
    values = []
    for _ in range(iterations):
        state.q_s = update_q(state.v_s, state.u_s, w.ridge)
        values.append(subspace_objective(state, anchors, w))
        state.q_t = update_q(state.v_t, state.u_t, w.ridge)
        values.append(subspace_objective(state, anchors, w))
        state.v_s = update_v(state.v_s, state.u_s, state.q_s, anchors, state.v_t, w, "source")
        values.append(subspace_objective(state, anchors, w))
        state.v_t = update_v(state.v_t, state.u_t, state.q_t, anchors, state.v_s, w, "target")
        values.append(subspace_objective(state, anchors, w))
    return values


def init_identity(u: np.ndarray, d_c: int, rng: np.random.Generator) -> np.ndarray:
    """V^0 from U^0, shifted strictly positive so multiplicative updates can
    move every entry. Columns are truncated or padded when d_c != d_u."""
    d_u = u.shape[1]
    if d_c <= d_u:
        v = u[:, :d_c].copy()
    else:
        pad = rng.uniform(0.0, 1e-3, size=(u.shape[0], d_c - d_u))
        v = np.hstack([u, pad])
    return v + 1e-6


@dataclass(frozen=True)
class Schedule:
    max_rounds: int = 2
    tol: float = 1e-5  # relative objective change stopping threshold
    pretrain_epochs: int = 10
    d_c: int | None = None  # identity dimension; None = same as d_u

    def __post_init__(self):
        if self.max_rounds < 0 or self.pretrain_epochs < 0:
            raise DataError("round and epoch counts must be nonnegative")
        if self.tol <= 0:
            raise DataError("tol must be positive")


TRACE_COLUMNS = [
    "round", "J_total", "recon_s", "recon_t", "reg_s", "reg_t",
    "proj_s", "proj_t", "anchor_penalty", "kkt_s", "kkt_t",
]


@dataclass
class AlternatingResult:
    params_s: NetParams
    params_t: NetParams
    state: SubspaceState
    trace: list[dict] = field(default_factory=list)


def run_alternating(
    ego_s: EgoTensor,
    ego_t: EgoTensor,
    lap_s: sp.spmatrix,
    lap_t: sp.spmatrix,
    anchors: IndicationPair,
    params_s: NetParams,
    params_t: NetParams,
    weights: ObjWeights,
    cfg: TrainConfig,
    schedule: Schedule,
    rng: np.random.Generator,
) -> AlternatingResult:
    """Algorithm: pretrain both autoencoders on D alone; initialize V from U
    and Q by least squares; then per round train network parameters under the
    full objective, refresh U, and apply the Q then V block updates until the
    relative change of J drops below tol or max_rounds is hit."""
    cfg_pre = TrainConfig(
        alpha=cfg.alpha, beta=0.0, keep_prob=cfg.keep_prob, l2=cfg.l2,
        learning_rate=cfg.learning_rate, epochs_per_round=cfg.epochs_per_round,
        batch_size=cfg.batch_size,
    )
    params_s, _ = pretrain(params_s, ego_s, lap_s, cfg_pre, schedule.pretrain_epochs, rng=rng)
    params_t, _ = pretrain(params_t, ego_t, lap_t, cfg_pre, schedule.pretrain_epochs, rng=rng)

    u_s = embed(params_s, ego_s)
    u_t = embed(params_t, ego_t)
    d_c = schedule.d_c if schedule.d_c is not None else u_s.shape[1]
    v_s = init_identity(u_s, d_c, rng)
    v_t = init_identity(u_t, d_c, rng)
    state = SubspaceState(
        u_s=u_s, u_t=u_t, v_s=v_s, v_t=v_t,
        q_s=update_q(v_s, u_s, weights.ridge),
        q_t=update_q(v_t, u_t, weights.ridge),
    )

    trace: list[dict] = []
    adam_s, adam_t = AdamState(), AdamState()
    j_prev: float | None = None
    j_first: float | None = None
    for rnd in range(1, schedule.max_rounds + 1):
        extras = {}
        for tag, params, ego, lap, adam in (
            ("s", params_s, ego_s, lap_s, adam_s),
            ("t", params_t, ego_t, lap_t, adam_t),
        ):
            v = state.v_s if tag == "s" else state.v_t
            q = state.q_s if tag == "s" else state.q_t
            params, _ = train_epochs(
                params, ego, lap, cfg, cfg.epochs_per_round,
                v=v, q=q, state=adam, rng=rng,
            )
            _, _, ex = loss_and_grads(params, ego, lap, cfg, v, q)
            extras[tag] = ex
            if tag == "s":
                params_s, state.u_s = params, ex["u"]
            else:
                params_t, state.u_t = params, ex["u"]

        state.q_s = update_q(state.v_s, state.u_s, weights.ridge)
        state.q_t = update_q(state.v_t, state.u_t, weights.ridge)
        state.v_s = update_v(state.v_s, state.u_s, state.q_s, anchors, state.v_t, weights, "source")
        state.v_t = update_v(state.v_t, state.u_t, state.q_t, anchors, state.v_s, weights, "target")

        d_s = extras["s"]["recon"] + extras["s"]["reg"]
        d_t = extras["t"]["recon"] + extras["t"]["reg"]
        j_total = objective(state, d_s, d_t, anchors, weights)
        trace.append({
            "round": rnd,
            "J_total": j_total,
            "recon_s": extras["s"]["recon"],
            "recon_t": extras["t"]["recon"],
            "reg_s": extras["s"]["reg"],
            "reg_t": extras["t"]["reg"],
            "proj_s": weights.beta * _sq_norm(state.u_s - state.v_s @ state.q_s),
            "proj_t": weights.beta * _sq_norm(state.u_t - state.v_t @ state.q_t),
            "anchor_penalty": weights.gamma * anchor_penalty(state.v_s, state.v_t, anchors),
            "kkt_s": kkt_residual(state.v_s, state.u_s, state.q_s, anchors, state.v_t, weights, "source"),
            "kkt_t": kkt_residual(state.v_t, state.u_t, state.q_t, anchors, state.v_s, weights, "target"),
        })
        if j_first is None:
            j_first = j_total
        elif j_total > 10.0 * j_first:
            raise DivergenceError(
                f"objective diverged: J={j_total:.6g} vs initial {j_first:.6g}", trace
            )
        if j_prev is not None and abs(j_prev - j_total) < schedule.tol * max(1.0, abs(j_prev)):
            break
        j_prev = j_total

    return AlternatingResult(params_s=params_s, params_t=params_t, state=state, trace=trace)


def write_trace_csv(trace: list[dict], path: str | Path, *, config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: row[k] for k in TRACE_COLUMNS})


def export_matrix_csv(mat: np.ndarray, path: str | Path, *, config_hash: str = "") -> None:
    """Matrix dump with a shape header line ``# rows cols [config_hash]``."""
    with open(path, "w") as fh:
        tail = f" config_hash={config_hash}" if config_hash else ""
        fh.write(f"# {mat.shape[0]} {mat.shape[1]}{tail}\n")
        np.savetxt(fh, mat, delimiter=",", fmt="%.17g")


def load_matrix_csv(path: str | Path) -> tuple[np.ndarray, str]:
    with open(path) as fh:
        header = fh.readline().strip()
        mat = np.loadtxt(fh, delimiter=",", ndmin=2)
    config_hash = ""
    for tok in header.lstrip("# ").split():
        if tok.startswith("config_hash="):
            config_hash = tok.split("=", 1)[1]
    return mat, config_hash

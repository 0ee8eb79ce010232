"""LSTM autoencoder with Laplacian consistency regularization.

Encoder runs over each user's ego vector sequence; the final hidden state is
the dual embedding U (entrywise nonnegative since h = sigmoid(.) * relu(.)).
The decoder is unconditioned: its initial hidden state is u, its step inputs
are zero vectors, and a full-connection layer maps hidden states back to ego
vectors emitted in reverse order (M..1) before re-alignment.

All gradients are exact and hand-derived; Adam does the stepping.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import DataError
from .rwr import EgoTensor


class NumericalError(FloatingPointError):
    """A loss term went non-finite; the message names the term."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass
class LstmCellParams:
    """Gate weights of shape (hidden, hidden + input_width) acting on the
    concatenation [h_prev, x], plus per-gate biases."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_width(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]

    @classmethod
    def init(
        cls,
        hidden: int,
        input_width: int,
        rng: np.random.Generator,
        *,
        scale: float = 0.05,
        forget_bias: float = 1.0,
    ) -> "LstmCellParams":
        def w():
            return rng.uniform(-scale, scale, size=(hidden, hidden + input_width))

        return cls(
            w_f=w(), w_i=w(), w_o=w(), w_c=w(),
            b_f=np.full(hidden, forget_bias),
            b_i=np.zeros(hidden),
            b_o=np.zeros(hidden),
            b_c=np.zeros(hidden),
        )


@dataclass
class NetParams:
    """All trainable tensors of one network's autoencoder."""

    encoder: LstmCellParams
    decoder: LstmCellParams
    out_w: np.ndarray  # (W, hidden) full-connection layer
    out_b: np.ndarray  # (W,)

    @property
    def hidden(self) -> int:
        return self.encoder.hidden

    @property
    def width(self) -> int:
        return self.out_w.shape[0]

    @classmethod
    def init(
        cls, hidden: int, width: int, rng: np.random.Generator, *, scale: float = 0.05
    ) -> "NetParams":
        return cls(
            encoder=LstmCellParams.init(hidden, width, rng, scale=scale),
            decoder=LstmCellParams.init(hidden, width, rng, scale=scale),
            out_w=rng.uniform(-scale, scale, size=(width, hidden)),
            out_b=np.zeros(width),
        )

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for part in ("encoder", "decoder"):
            cell = getattr(self, part)
            for name in ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c"):
                out.append((f"{part}.{name}", getattr(cell, name)))
        out.append(("out_w", self.out_w))
        out.append(("out_b", self.out_b))
        return out

    def copy(self) -> "NetParams":
        return NetParams(
            encoder=replace(self.encoder, **{
                n: getattr(self.encoder, n).copy()
                for n in ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c")
            }),
            decoder=replace(self.decoder, **{
                n: getattr(self.decoder, n).copy()
                for n in ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c")
            }),
            out_w=self.out_w.copy(),
            out_b=self.out_b.copy(),
        )

    def squared_norm(self) -> float:
        return float(sum(np.sum(a * a) for _, a in self.named_arrays()))


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.1  # consistency (Laplacian trace) weight
    beta: float = 1.0  # projection ||U - VQ||^2 weight
    keep_prob: float = 0.8  # input dropout keep-probability (training only)
    l2: float = 1e-4
    learning_rate: float = 1e-3
    epochs_per_round: int = 2
    batch_size: int | None = None  # None = full batch

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.l2 < 0:
            raise DataError("alpha, beta and l2 must be nonnegative")
        if not 0.0 < self.keep_prob <= 1.0:
            raise DataError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if self.learning_rate < 0:
            raise DataError("learning_rate must be nonnegative")


def _cell_forward(p: LstmCellParams, h_prev, c_prev, x):
    z = np.concatenate([h_prev, x], axis=-1)
    f = _sigmoid(z @ p.w_f.T + p.b_f)
    i = _sigmoid(z @ p.w_i.T + p.b_i)
    o = _sigmoid(z @ p.w_o.T + p.b_o)
    a_c = z @ p.w_c.T + p.b_c
    c_tilde = _relu(a_c)
    c = f * c_prev + i * c_tilde
    h = o * _relu(c)
    cache = {"z": z, "f": f, "i": i, "o": o, "a_c": a_c,
             "c_tilde": c_tilde, "c_prev": c_prev, "c": c}
    return h, c, cache


def cell_forward(p: LstmCellParams, h_prev, c_prev, x):
    """One LSTM step: sigmoid gates, ReLU in place of tanh. Returns (h, c)."""
    h, c, _ = _cell_forward(p, h_prev, c_prev, x)
    return h, c


def _cell_backward(p: LstmCellParams, cache, dh, dc, grads, prefix):
    """Backprop one step; accumulates into grads[prefix + name], returns
    (dh_prev, dc_prev, dx). ReLU gradient at exactly 0 is 0."""
    f, i, o = cache["f"], cache["i"], cache["o"]
    c, a_c, c_tilde, c_prev = cache["c"], cache["a_c"], cache["c_tilde"], cache["c_prev"]
    z = cache["z"]
    hidden = p.hidden

    do = dh * _relu(c)
    dc_total = dc + dh * o * (c > 0)
    df = dc_total * c_prev
    di = dc_total * c_tilde
    dct = dc_total * i
    dc_prev = dc_total * f

    da_f = df * f * (1.0 - f)
    da_i = di * i * (1.0 - i)
    da_o = do * o * (1.0 - o)
    da_c = dct * (a_c > 0)

    grads[prefix + "w_f"] += da_f.T @ z
    grads[prefix + "w_i"] += da_i.T @ z
    grads[prefix + "w_o"] += da_o.T @ z
    grads[prefix + "w_c"] += da_c.T @ z
    grads[prefix + "b_f"] += da_f.sum(axis=0)
    grads[prefix + "b_i"] += da_i.sum(axis=0)
    grads[prefix + "b_o"] += da_o.sum(axis=0)
    grads[prefix + "b_c"] += da_c.sum(axis=0)

    dz = da_f @ p.w_f + da_i @ p.w_i + da_o @ p.w_o + da_c @ p.w_c
    return dz[:, :hidden], dc_prev, dz[:, hidden:]


def encode(p: NetParams, seq: np.ndarray) -> tuple[np.ndarray, list[dict]]:
    """Run the encoder over seq (batch, M, W) from zero state; returns the
    dual embedding u = h^M (batch, hidden) and the step caches."""
    batch, m_count, _ = seq.shape
    h = np.zeros((batch, p.hidden))
    c = np.zeros((batch, p.hidden))
    caches = []
    for m in range(m_count):
        h, c, cache = _cell_forward(p.encoder, h, c, seq[:, m, :])
        caches.append(cache)
    return h, caches


def decode(p: NetParams, u: np.ndarray, m_count: int) -> tuple[np.ndarray, list[dict], list[np.ndarray]]:
    """Unroll the decoder from hidden state u with zero inputs; outputs are
    produced in reverse time order and re-aligned so x_hat[:, m] matches
    snapshot m. Returns (x_hat, caches, hidden states)."""
    batch = u.shape[0]
    x_zero = np.zeros((batch, p.width))
    h = u
    c = np.zeros((batch, p.hidden))
    caches, hiddens = [], []
    x_hat = np.empty((batch, m_count, p.width))
    for j in range(m_count):
        h, c, cache = _cell_forward(p.decoder, h, c, x_zero)
        caches.append(cache)
        hiddens.append(h)
        x_hat[:, m_count - 1 - j, :] = h @ p.out_w.T + p.out_b
    return x_hat, caches, hiddens


def _zero_grads(p: NetParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in p.named_arrays()}


def _check_finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss term: {term}")
    return value


def loss_and_grads(
    p: NetParams,
    ego: EgoTensor,
    lap: sp.spmatrix,
    cfg: TrainConfig,
    v: np.ndarray | None = None,
    q: np.ndarray | None = None,
    *,
    dropout_rng: np.random.Generator | None = None,
    rows: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray], dict]:
    """Loss = ||X - X_hat||^2 + alpha Tr(U^T L U) + beta ||U - VQ||^2
    + l2 ||Theta||^2 with exact gradients for every parameter.

    The beta term is active only when v and q are given. ``dropout_rng``
    enables input dropout (keep-scale 1/keep_prob); leave None for gradient
    checks. ``rows`` restricts to a mini-batch of users (the Laplacian is cut
    to those rows as well).
    """
    x = ego.vectors
    lap_full = sp.csr_matrix(lap)
    if rows is not None:
        x = x[rows]
        lap_eff = lap_full[np.ix_(rows, rows)]
        v_eff = v[rows] if v is not None else None
    else:
        lap_eff = lap_full
        v_eff = v
    batch, m_count, _ = x.shape

    x_in = x
    if dropout_rng is not None and cfg.keep_prob < 1.0:
        mask = dropout_rng.random(x.shape) < cfg.keep_prob
        x_in = x * mask / cfg.keep_prob

    u, enc_caches = encode(p, x_in)
    x_hat, dec_caches, dec_hiddens = decode(p, u, m_count)

    diff = x_hat - x
    recon = _check_finite(float(np.sum(diff * diff)), "reconstruction")
    lap_u = lap_eff @ u
    reg = _check_finite(cfg.alpha * float(np.sum(u * lap_u)), "consistency")
    if v_eff is not None and q is not None and cfg.beta > 0:
        resid = u - v_eff @ q
        proj = _check_finite(cfg.beta * float(np.sum(resid * resid)), "projection")
    else:
        resid = None
        proj = 0.0
    l2 = _check_finite(cfg.l2 * p.squared_norm(), "l2") if cfg.l2 > 0 else 0.0
    loss = recon + reg + proj + l2

    grads = _zero_grads(p)

    # decoder: d recon / d x_hat, through out_fc and back through time
    dh_carry = np.zeros_like(u)
    dc_carry = np.zeros_like(u)
    for j in range(m_count - 1, -1, -1):
        dy = 2.0 * diff[:, m_count - 1 - j, :]
        grads["out_w"] += dy.T @ dec_hiddens[j]
        grads["out_b"] += dy.sum(axis=0)
        dh = dh_carry + dy @ p.out_w
        dh_carry, dc_carry, _ = _cell_backward(p.decoder, dec_caches[j], dh, dc_carry, grads, "decoder.")
    du = dh_carry  # gradient into the decoder's initial hidden state = u

    # direct paths into U: consistency (L symmetric -> 2 L U) and projection
    du = du + 2.0 * cfg.alpha * lap_u
    if resid is not None:
        du = du + 2.0 * cfg.beta * resid

    # encoder back through time
    dh_carry = du
    dc_carry = np.zeros_like(u)
    for m in range(m_count - 1, -1, -1):
        dh_carry, dc_carry, _ = _cell_backward(p.encoder, enc_caches[m], dh_carry, dc_carry, grads, "encoder.")

    if cfg.l2 > 0:
        for name, arr in p.named_arrays():
            grads[name] += 2.0 * cfg.l2 * arr

    extras = {"u": u, "x_hat": x_hat, "recon": recon, "reg": reg, "proj": proj,
              "l2": l2, "du_direct": 2.0 * cfg.alpha * lap_u + (2.0 * cfg.beta * resid if resid is not None else 0.0)}
    return loss, grads, extras


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def train_step(
    p: NetParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float = 1e-3,
) -> NetParams:
    """One Adam step, in place; deterministic given seed and input order."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, arr in p.named_arrays():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(arr))
        v = state.v.setdefault(name, np.zeros_like(arr))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return p


def _epoch_batches(n: int, batch_size: int | None, rng: np.random.Generator | None):
    if batch_size is None or batch_size >= n:
        yield None
        return
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for lo in range(0, n, batch_size):
        yield order[lo: lo + batch_size]


def train_epochs(
    p: NetParams,
    ego: EgoTensor,
    lap: sp.spmatrix,
    cfg: TrainConfig,
    epochs: int,
    *,
    v: np.ndarray | None = None,
    q: np.ndarray | None = None,
    state: AdamState | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[NetParams, list[float]]:
    """Run ``epochs`` full passes of loss_and_grads + Adam; returns losses."""
    if state is None:
        state = AdamState()
    losses = []
    for _ in range(epochs):
        epoch_loss = 0.0
        for rows in _epoch_batches(ego.num_users, cfg.batch_size, rng):
            loss, grads, _ = loss_and_grads(
                p, ego, lap, cfg, v, q, dropout_rng=rng, rows=rows
            )
            epoch_loss += loss
            p = train_step(p, grads, state, cfg.learning_rate)
        losses.append(epoch_loss)
    return p, losses


def pretrain(
    p: NetParams,
    ego: EgoTensor,
    lap: sp.spmatrix,
    cfg: TrainConfig,
    epochs: int,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[NetParams, list[float]]:
    """Warm up on the per-network loss D alone (no projection term)."""
    p, losses = train_epochs(p, ego, lap, cfg, epochs, v=None, q=None, rng=rng)
    return p, losses


def embed(p: NetParams, ego: EgoTensor) -> np.ndarray:
    """Forward pass only: the dual embedding matrix U (N x hidden, >= 0)."""
    u, _ = encode(p, ego.vectors)
    return u


def save_checkpoint(p: NetParams, path: str | Path, *, config_hash: str = "") -> None:
    arrays = {name.replace(".", "__"): arr for name, arr in p.named_arrays()}
    np.savez_compressed(path, config_hash=np.array(config_hash), **arrays)


def load_checkpoint(path: str | Path) -> tuple[NetParams, str]:
    with np.load(path, allow_pickle=False) as data:
        get = lambda name: data[name.replace(".", "__")]
        p = NetParams(
            encoder=LstmCellParams(*[get(f"encoder.{n}") for n in
                                     ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c")]),
            decoder=LstmCellParams(*[get(f"decoder.{n}") for n in
                                     ("w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c")]),
            out_w=get("out_w"),
            out_b=get("out_b"),
        )
        return p, str(data["config_hash"])


def export_embedding_csv(u: np.ndarray, path: str | Path) -> None:
    """CSV rows ``user_id, d_1..d_D``."""
    d = u.shape[1]
    header = "user_id," + ",".join(f"d_{j + 1}" for j in range(d))
    ids = np.arange(u.shape[0])[:, None]
    np.savetxt(path, np.hstack([ids, u]), delimiter=",", header=header, comments="",
               fmt=["%d"] + ["%.17g"] * d)

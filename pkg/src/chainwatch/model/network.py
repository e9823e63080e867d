"""The hierarchical survival network.

Three attention levels share one width d: a per-segment attention pools
each segment's hourly feature rows under the guidance of its status
embedding; self-attention stacks then run over the pooled features, the
bridged segment vectors, and the bridged status embeddings in turn. The
mean of the final level feeds two heads: the raw probability y and the
hazard rate whose running sum drives the survival gate

    S(p) = exp(-sum_{k<=p} lambda_k),
    yhat(p) = S(p) * y(p) + (1 - S(p)) * yhat(p-1),  yhat(0) = 0.5.

Everything is built from the autodiff Tensor, so one backward() call
yields gradients for the full prefix-replay loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .autodiff import Tensor, concat, embedding, parameter, softmax

LEVELS = ("feature", "segment", "status")


@dataclass
class ModelConfig:
    d_model: int
    n_status_ids: int          # cluster count plus the noise id
    heads: int = 2
    blocks: int = 1
    s_min: float = 1e-3        # survival level that marks t_die
    freeze_eps: float = 1e-12  # below this, yhat stops moving
    positional: bool = False

    def validate(self):
        if self.d_model % self.heads != 0:
            raise DataError("model width must be divisible by the head count")
        if self.n_status_ids < 1 or self.blocks < 1 or self.heads < 1:
            raise DataError("model needs at least one status id, block, and head")


@dataclass
class LossWeights:
    gamma1: float = 0.5
    gamma2: float = 0.1
    c_pos: float = 1.0
    c_neg: float = 1.0


def init_params(config: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Uniform +-1/sqrt(fan_in) weights; N(0, 0.02^2) embedding rows."""
    config.validate()
    rng = np.random.default_rng(seed)
    d = config.d_model
    dh = d // config.heads

    def uniform(fan_in: int, shape) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return parameter(rng.uniform(-bound, bound, size=shape))

    params: dict[str, Tensor] = {
        "embedding": parameter(rng.normal(0.0, 0.02, size=(config.n_status_ids, d))),
        "segment_attn.w_fu": uniform(2 * d, (2 * d, d)),
        "segment_attn.w_a": uniform(d, (d, d)),
        "segment_attn.w_red": uniform(d, (d, 1)),
        "bridge.w_fg": uniform(2 * d, (2 * d, d)),
        "bridge.w_g": uniform(d, (d, d)),
        "bridge.w_gu": uniform(2 * d, (2 * d, d)),
        "bridge.w_u": uniform(d, (d, d)),
        "head.w_l": uniform(d, (d, 1)),
        "head.w_hz": uniform(d, (d, 1)),
    }
    for level in LEVELS:
        for block in range(config.blocks):
            for head in range(config.heads):
                for kind in ("q", "k", "v"):
                    params[f"{level}.{block}.{kind}{head}"] = uniform(d, (d, dh))
            params[f"{level}.{block}.w_o"] = uniform(d, (d, d))
    return params


def embed_status(params: dict[str, Tensor], status_ids: np.ndarray) -> Tensor:
    return embedding(params["embedding"], status_ids)


def segment_attention(params: dict[str, Tensor], feats: Tensor, u: Tensor) -> Tensor:
    """Pool a segment's (B, L, d) rows into (B, d) guided by u (B, d)."""
    batch, length, d = feats.shape
    tiled = u.reshape(batch, 1, d) * np.ones((1, length, 1))
    hidden = concat([feats, tiled], axis=-1) @ params["segment_attn.w_fu"]
    logits = (hidden.tanh() @ params["segment_attn.w_a"]) @ params["segment_attn.w_red"]
    alpha = softmax(logits, axis=1)
    return (alpha * feats).sum(axis=1)


def multihead_self_attention(params: dict[str, Tensor], level: str, block: int,
                             x: Tensor, heads: int,
                             collect: list | None = None) -> Tensor:
    """One block: per-head scaled dot-product with Q=K=V=x, then W^O."""
    d = x.shape[-1]
    scale = 1.0 / np.sqrt(d)
    outputs = []
    for head in range(heads):
        q = x @ params[f"{level}.{block}.q{head}"]
        k = x @ params[f"{level}.{block}.k{head}"]
        v = x @ params[f"{level}.{block}.v{head}"]
        scores = (q @ k.swapaxes(-1, -2)) * scale
        attn = softmax(scores, axis=-1)
        if collect is not None:
            collect.append((level, block, head, attn.data))
        outputs.append(attn @ v)
    return concat(outputs, axis=-1) @ params[f"{level}.{block}.w_o"]


def positional_encoding(length: int, d: int) -> np.ndarray:
    position = np.arange(length, dtype=float)[:, None]
    term = np.exp(np.arange(0, d, 2, dtype=float) * (-np.log(10000.0) / d))
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(position * term)
    pe[:, 1::2] = np.cos(position * term[: d // 2])
    return pe


def _stack(params: dict[str, Tensor], level: str, x: Tensor, config: ModelConfig,
           collect: list | None = None) -> Tensor:
    if config.positional:
        x = x + positional_encoding(x.shape[1], x.shape[2])
    for block in range(config.blocks):
        x = multihead_self_attention(params, level, block, x, config.heads, collect)
    return x


def bridge(w_pair: Tensor, w_out: Tensor, base: Tensor, attended: Tensor) -> Tensor:
    return (concat([base, attended], axis=-1) @ w_pair).tanh() @ w_out


def forward_prefix(params: dict[str, Tensor], config: ModelConfig,
                   feats: np.ndarray, seg_vecs: np.ndarray,
                   status_ids: np.ndarray, splits: list[int], p: int,
                   collect: list | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """Raw probability, hazard, and pooled vector after the first p segments.

    feats: (B, T, d) hourly rows; seg_vecs: (B, m, d); status_ids: (B, m).
    Only segments 1..p are read, so causality holds by construction.
    """
    if not 1 <= p <= len(splits) - 1:
        raise DataError(f"prefix length {p} outside 1..{len(splits) - 1}")
    batch = feats.shape[0]
    d = config.d_model
    if feats.shape[2] != d or seg_vecs.shape[2] != d:
        raise DataError("input width does not match the model width")

    u_all = embed_status(params, status_ids[:, :p])
    pooled = []
    for i in range(p):
        begin, end = splits[i], splits[i + 1]
        f_i = segment_attention(params, Tensor(feats[:, begin:end, :]), u_all[:, i])
        pooled.append(f_i.reshape(batch, 1, d))
    f_seq = concat(pooled, axis=1)

    f_hat = _stack(params, "feature", f_seq, config, collect)
    g_tilde = bridge(params["bridge.w_fg"], params["bridge.w_g"],
                     Tensor(seg_vecs[:, :p, :]), f_hat)
    g_hat = _stack(params, "segment", g_tilde, config, collect)
    u_tilde = bridge(params["bridge.w_gu"], params["bridge.w_u"], u_all, g_hat)
    u_hat_seq = _stack(params, "status", u_tilde, config, collect)

    u_hat = u_hat_seq.mean(axis=1)
    y = (u_hat @ params["head.w_l"]).sigmoid()
    hazard = (u_hat @ params["head.w_hz"]).softplus()
    return y, hazard, u_hat


def forward_survival(params: dict[str, Tensor], config: ModelConfig,
                     feats: np.ndarray, seg_vecs: np.ndarray,
                     status_ids: np.ndarray, splits: list[int],
                     collect: list | None = None) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Replay every prefix; returns (y, hazard, survival, yhat), each (B, m)."""
    m = len(splits) - 1
    ys, hazards = [], []
    for p in range(1, m + 1):
        y_p, hz_p, _ = forward_prefix(params, config, feats, seg_vecs,
                                      status_ids, splits, p, collect)
        ys.append(y_p)
        hazards.append(hz_p)
    y = concat(ys, axis=1)
    hazard = concat(hazards, axis=1)
    survival = (-hazard.cumsum(axis=1)).exp()

    batch = feats.shape[0]
    prev = Tensor(np.full((batch, 1), 0.5))
    gated = []
    for p in range(m):
        s_p = survival[:, p].reshape(batch, 1)
        y_p = y[:, p].reshape(batch, 1)
        prev = s_p * y_p + (1.0 - s_p) * prev
        gated.append(prev)
    yhat = concat(gated, axis=1)
    return y, hazard, survival, yhat


# ------------------------------------------------------------------ losses

def batch_loss(yhat: Tensor, survival: Tensor, labels: np.ndarray,
               weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Prefix-weighted training loss averaged over the batch.

    total = mean_B sum_t sqrt(t) * C_label * (loss^P + g1*loss^C + g2*loss^E)
    with the differentiable hinge standing in for the flip indicator.
    """
    batch, m = yhat.shape
    label_col = np.asarray(labels, dtype=float).reshape(batch, 1)
    class_w = np.where(label_col > 0.5, weights.c_pos, weights.c_neg)
    sqrt_t = np.sqrt(np.arange(1, m + 1, dtype=float))

    loss_p = -(label_col * yhat.clamp_min(1e-12).log()
               + (1.0 - label_col) * (1.0 - yhat).clamp_min(1e-12).log())
    prev = concat([Tensor(np.full((batch, 1), 0.5)), yhat[:, :-1]], axis=1)
    loss_c = (-(yhat - 0.5) * (prev - 0.5)).relu()
    loss_e = -survival

    def reduce(term: Tensor) -> Tensor:
        return (term * sqrt_t * class_w).sum() * (1.0 / batch)

    total_p, total_c, total_e = reduce(loss_p), reduce(loss_c), reduce(loss_e)
    total = total_p + weights.gamma1 * total_c + weights.gamma2 * total_e
    parts = {
        "prediction": float(total_p.data),
        "consistency": float(weights.gamma1 * total_c.data),
        "earliness": float(weights.gamma2 * total_e.data),
    }
    return total, parts


@dataclass
class LossBreakdown:
    prediction: np.ndarray     # per split
    consistency_hard: np.ndarray
    consistency_soft: np.ndarray
    earliness: np.ndarray
    total: float


def losses(trace: "SurvivalTrace", label: int, weights: LossWeights) -> LossBreakdown:
    """Per-split loss components for one finished trace (reporting only)."""
    yhat = trace.yhat
    prev = np.concatenate([[0.5], yhat[:-1]])
    clamped = np.clip(yhat, 1e-12, None)
    clamped_inv = np.clip(1.0 - yhat, 1e-12, None)
    loss_p = -(label * np.log(clamped) + (1 - label) * np.log(clamped_inv))
    centered = (yhat - 0.5) * (prev - 0.5)
    hard = (centered < 0.0).astype(float)
    soft = np.maximum(0.0, -centered)
    loss_e = -trace.survival
    sqrt_t = np.sqrt(np.arange(1, len(yhat) + 1, dtype=float))
    class_w = weights.c_pos if label else weights.c_neg
    total = float((sqrt_t * class_w * (
        loss_p + weights.gamma1 * soft + weights.gamma2 * loss_e)).sum())
    return LossBreakdown(loss_p, hard, soft, loss_e, total)


# ---------------------------------------------------------------- survival

@dataclass
class SurvivalTrace:
    y: np.ndarray          # raw per-split probability
    hazard: np.ndarray
    survival: np.ndarray
    yhat: np.ndarray       # gated prediction
    t_die: int | None      # 1-based split where survival first <= s_min

    def __len__(self) -> int:
        return len(self.y)


def survival_trace(y: np.ndarray, hazard: np.ndarray,
                   s_min: float = 1e-3, freeze_eps: float = 1e-12) -> SurvivalTrace:
    """Gate raw probabilities through the survival recursion.

    Once survival drops below freeze_eps the prediction is carried over
    bit-for-bit, so later inputs cannot move it.
    """
    y = np.asarray(y, dtype=float)
    hazard = np.asarray(hazard, dtype=float)
    if y.shape != hazard.shape or y.ndim != 1 or len(y) == 0:
        raise DataError("survival trace needs matching 1d y and hazard arrays")
    if (hazard < 0).any():
        raise DataError("hazard rates must be non-negative")
    survival = np.exp(-np.cumsum(hazard))
    yhat = np.empty_like(y)
    prev = 0.5
    for p in range(len(y)):
        if survival[p] < freeze_eps:
            yhat[p] = prev
        else:
            yhat[p] = survival[p] * y[p] + (1.0 - survival[p]) * prev
        prev = yhat[p]
    below = np.flatnonzero(survival <= s_min)
    t_die = int(below[0]) + 1 if len(below) else None
    return SurvivalTrace(y=y, hazard=hazard, survival=survival, yhat=yhat, t_die=t_die)

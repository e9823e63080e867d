"""Gradient training for the survival network.

Mini-batch Adam over the prefix-replay loss. Every step is deterministic
given the seed: parameter init, batch order, and the all-numpy forward
are reproducible bit for bit. A NaN or Inf in the loss or any gradient
aborts with the offending batch and a parameter norm snapshot attached.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, NumericError
from .autodiff import Tensor, parameter
from .network import (
    LossWeights,
    ModelConfig,
    batch_loss,
    forward_survival,
    init_params,
)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)


@dataclass
class TrainInputs:
    feats: np.ndarray        # (n, T, d)
    seg_vecs: np.ndarray     # (n, m, d)
    status_ids: np.ndarray   # (n, m)
    labels: np.ndarray       # (n,) in {0, 1}
    splits: list[int]

    def validate(self):
        n = len(self.labels)
        m = len(self.splits) - 1
        if self.feats.shape[0] != n or self.seg_vecs.shape[:2] != (n, m) \
                or self.status_ids.shape != (n, m):
            raise DataError("training inputs disagree on address or segment counts")
        if self.splits[0] != 0 or self.splits[-1] != self.feats.shape[1]:
            raise DataError("split list must span the feature horizon")


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float,
                 beta2: float, eps: float):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]):
        self.t += 1
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad ** 2
            m_hat = self.m[name] / (1 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1 - self.beta2 ** self.t)
            self.params[name].data = self.params[name].data - \
                self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _norm_snapshot(params: dict[str, Tensor]) -> dict[str, float]:
    return {name: float(np.sqrt((t.data ** 2).sum())) for name, t in params.items()}


def train(inputs: TrainInputs, model_config: ModelConfig,
          train_config: TrainConfig,
          params: dict[str, Tensor] | None = None) -> tuple[dict[str, Tensor], list[dict]]:
    """Returns the fitted parameters and one history row per step."""
    inputs.validate()
    model_config.validate()
    if params is None:
        params = init_params(model_config, train_config.seed)
    optimizer = Adam(params, train_config.learning_rate, train_config.beta1,
                     train_config.beta2, train_config.adam_eps)
    rng = np.random.default_rng([train_config.seed, 0xba7c4])
    n = len(inputs.labels)
    history: list[dict] = []
    step = 0

    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, train_config.batch_size):
            chunk = order[start:start + train_config.batch_size]
            for tensor in params.values():
                tensor.grad = None
            _, _, survival, yhat = forward_survival(
                params, model_config, inputs.feats[chunk], inputs.seg_vecs[chunk],
                inputs.status_ids[chunk], inputs.splits)
            total, parts = batch_loss(yhat, survival, inputs.labels[chunk],
                                      train_config.weights)
            if not np.isfinite(total.data):
                raise NumericError(
                    "training loss is not finite",
                    diagnostics={"epoch": epoch, "batch": start // train_config.batch_size,
                                 "loss": float(total.data),
                                 "param_norms": _norm_snapshot(params)})
            total.backward()
            grads = {}
            for name, tensor in params.items():
                grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
                if not np.isfinite(grad).all():
                    raise NumericError(
                        f"gradient for {name!r} is not finite",
                        diagnostics={"epoch": epoch,
                                     "batch": start // train_config.batch_size,
                                     "param_norms": _norm_snapshot(params)})
                grads[name] = grad
            optimizer.step(grads)
            history.append({"step": step, "epoch": epoch,
                            "total": float(total.data), **parts})
            step += 1
    return params, history


# ------------------------------------------------------------- persistence

def save_checkpoint(path, params: dict[str, Tensor], model_config: ModelConfig,
                    extras: dict | None = None):
    doc = {
        "model": {
            "d_model": model_config.d_model,
            "n_status_ids": model_config.n_status_ids,
            "heads": model_config.heads,
            "blocks": model_config.blocks,
            "s_min": model_config.s_min,
            "freeze_eps": model_config.freeze_eps,
            "positional": model_config.positional,
        },
        "tensors": {
            name: {"shape": list(t.data.shape), "values": t.data.ravel().tolist()}
            for name, t in sorted(params.items())
        },
        "extras": extras or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[dict[str, Tensor], ModelConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
        config = ModelConfig(**doc["model"])
        params = {
            name: parameter(np.asarray(spec["values"], dtype=float).reshape(spec["shape"]))
            for name, spec in doc["tensors"].items()
        }
        extras = doc.get("extras", {})
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed checkpoint: {exc}") from None
    config.validate()
    return params, config, extras


def write_history_csv(path, history: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["step", "epoch", "total", "prediction",
                            "consistency", "earliness"])
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})

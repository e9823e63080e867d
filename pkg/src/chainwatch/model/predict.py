"""Hour-by-hour prediction replay for a single address.

The network scores an address once per completed segment; hours between
boundaries carry the latest segment's score forward. Segment k counts as
completed at the hour of its last feature row (split[k] - 1). Hours
before the first completed segment carry the neutral prior 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .autodiff import Tensor
from .network import ModelConfig, SurvivalTrace, forward_survival, survival_trace


@dataclass(frozen=True)
class StreamResult:
    split_y: np.ndarray        # (m,) carried prediction per completed segment
    split_survival: np.ndarray # (m,)
    hour_y: np.ndarray         # (T,) latest carried prediction per hour
    t_die: int | None          # hour of the first split with survival <= s_min
    t_fc: int                  # hour after which the hard decision never flips
    trace: SurvivalTrace

    @property
    def verdict(self) -> bool:
        return bool(self.split_y[-1] > 0.5)


def pad_columns(x: np.ndarray, width: int) -> np.ndarray:
    """Zero-pad the last axis out to `width` columns."""
    have = x.shape[-1]
    if have > width:
        raise DataError(f"cannot pad {have} columns down to {width}")
    if have == width:
        return x
    pad = np.zeros((*x.shape[:-1], width - have))
    return np.concatenate([np.asarray(x, dtype=float), pad], axis=-1)


def first_consistent_split(yhat: np.ndarray) -> int:
    """1-based index of the earliest split from which the hard decision
    (> 0.5) never changes again. The final split always qualifies."""
    hard = np.asarray(yhat) > 0.5
    t_fc = 1
    for i in range(1, len(hard)):
        if hard[i] != hard[i - 1]:
            t_fc = i + 1
    return t_fc


def predict_stream(params: dict[str, Tensor], config: ModelConfig,
                   feats: np.ndarray, seg_vecs: np.ndarray,
                   status_ids: np.ndarray, splits: list[int]) -> StreamResult:
    feats = np.asarray(feats, dtype=float)
    seg_vecs = np.asarray(seg_vecs, dtype=float)
    status_ids = np.asarray(status_ids, dtype=int)
    if feats.ndim != 2 or seg_vecs.ndim != 2 or status_ids.ndim != 1:
        raise DataError("predict_stream scores one address at a time")
    m = len(splits) - 1
    horizon = splits[-1]
    if feats.shape[0] != horizon or seg_vecs.shape[0] != m or len(status_ids) != m:
        raise DataError("address arrays disagree with the split list")

    y, hazard, _, _ = forward_survival(
        params, config, feats[None], seg_vecs[None], status_ids[None], splits)
    trace = survival_trace(y.data[0], hazard.data[0],
                           s_min=config.s_min, freeze_eps=config.freeze_eps)

    # Segment k's score becomes visible at hour splits[k] - 1.
    hour_y = np.full(horizon, 0.5)
    for k in range(1, m + 1):
        hour_y[splits[k] - 1:] = trace.yhat[k - 1]

    t_die = None if trace.t_die is None else splits[trace.t_die] - 1
    t_fc = splits[first_consistent_split(trace.yhat)] - 1
    return StreamResult(split_y=trace.yhat.copy(),
                        split_survival=trace.survival.copy(),
                        hour_y=hour_y, t_die=t_die, t_fc=t_fc, trace=trace)

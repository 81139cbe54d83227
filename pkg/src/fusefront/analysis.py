"""Gate-weight interpretation and the character error reduction rate."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRowError, DomainError, InvalidInputError, UndefinedMetricError
from .fusion import GateWeights, Theta


def normalize_gates(g):
    """Rescale each frame's ``(w_SF, w_SSL)`` to sum to 1.

    Raw log-softmax weights are exponentiated first, which recovers the gate's
    probability distribution. Already-normalized input is returned unchanged.
    """
    if g.normalized:
        return GateWeights(g.w.copy(), True, g.theta)
    w = np.exp(g.w) if g.theta is Theta.LOGSOFTMAX else np.asarray(g.w, dtype=np.float64)
    if np.any(w < 0):
        raise InvalidInputError("negative gate weight in a non-log source")
    sums = w.sum(axis=-1, keepdims=True)
    bad = np.flatnonzero(sums.ravel() <= 0)
    if bad.size:
        raise DegenerateRowError(f"gate row {int(bad[0])} sums to 0")
    return GateWeights(w / sums, True, g.theta)


@dataclass(frozen=True)
class WeightStats:
    mean_w_sf: float
    mean_w_ssl: float
    min_w_ssl: float
    max_w_ssl: float
    var_w_ssl: float  # population variance across frames
    n_frames: int


def _stats(w):
    w_ssl = w[:, 1]
    return WeightStats(
        mean_w_sf=float(np.mean(w[:, 0])),
        mean_w_ssl=float(np.mean(w_ssl)),
        min_w_ssl=float(np.min(w_ssl)),
        max_w_ssl=float(np.max(w_ssl)),
        var_w_ssl=float(np.var(w_ssl)),
        n_frames=int(w.shape[0]),
    )


def weight_summary(gates, per="corpus"):
    """Frame statistics of normalized gates.

    ``per="utterance"`` gives one :class:`WeightStats` per non-empty utterance;
    ``per="corpus"`` pools every frame, i.e. a frame-count-weighted mean.
    """
    if per not in ("utterance", "corpus"):
        raise InvalidInputError(f"per must be 'utterance' or 'corpus', got {per!r}")
    gates = list(gates)
    if any(not g.normalized for g in gates):
        raise InvalidInputError("weight_summary expects normalized gates")
    rows = [np.asarray(g.w).reshape(-1, 2) for g in gates]
    rows = [r for r in rows if r.shape[0]]
    if not rows:
        raise UndefinedMetricError("no frames to summarize")
    if per == "utterance":
        return [_stats(r) for r in rows]
    return _stats(np.concatenate(rows, axis=0))


def cerr(cer_base, cer_ssl):
    """``(CER_base - CER_ssl) / CER_base * 100``; negative when the second system is worse."""
    if not cer_base > 0:
        raise DomainError(f"baseline CER must be positive, got {cer_base}")
    return (cer_base - cer_ssl) / cer_base * 100.0


def round_percent(value):
    """Nearest integer percent, halves rounded away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))

"""Regret, CTR and regret-ratio curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import RoundInput
from .exceptions import DomainError, ShapeError, UnsupportedError

__all__ = [
    "RegretTrace",
    "regret_step",
    "ctr_curve",
    "regret_ratio_vs_ran",
    "mean_curve",
    "downsample",
]


@dataclass
class RegretTrace:
    """Instantaneous regrets of one run; ``cumulative`` is their running sum."""

    regret: np.ndarray
    seed: int | None = None
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.regret = np.asarray(self.regret, dtype=np.float64)
        if self.regret.ndim != 1:
            raise ShapeError("regret must be one-dimensional")
        self.cumulative = np.cumsum(self.regret)

    def __len__(self) -> int:
        return self.regret.size


def regret_step(env, round_input: RoundInput, chosen_index: int) -> float:
    """Noiseless regret of choosing ``chosen_index`` against the best candidate.

    ``env`` must expose ``expected_payoff`` (simulation ground truth); passing
    ``None`` (replay mode) raises :class:`UnsupportedError`.
    """
    if env is None or not hasattr(env, "model"):
        raise UnsupportedError("regret needs environment ground truth; unavailable in replay mode")
    X = np.asarray(round_input.contexts, dtype=np.float64)
    means = X @ env.model.vectors[round_input.user]
    return max(float(means.max() - means[int(chosen_index)]), 0.0)


def ctr_curve(stream) -> np.ndarray:
    """Running click-through rate over retained records.

    Parameters
    ----------
    stream : iterable
        Payoffs, or ``(event_index, payoff)`` pairs as produced by replay.

    Returns
    -------
    ndarray of shape (n, 2)
        Rows ``(retained_index, clicks / retained_index)``, indices from 1.
    """
    y = np.array([p[1] if isinstance(p, tuple) else p for p in stream], dtype=np.float64)
    if y.size == 0:
        return np.empty((0, 2))
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DomainError("CTR needs binary payoffs")
    k = np.arange(1, y.size + 1, dtype=np.float64)
    return np.column_stack([k, np.cumsum(y) / k])


def regret_ratio_vs_ran(trace, ran_trace) -> np.ndarray:
    """Cumulative regret divided by RAN's, skipping indices where RAN's is 0.

    Returns
    -------
    ndarray of shape (n, 2)
        Rows ``(round_index, ratio)`` with 1-based round indices.
    """
    a = trace.cumulative if isinstance(trace, RegretTrace) else np.cumsum(np.asarray(trace, dtype=np.float64))
    b = ran_trace.cumulative if isinstance(ran_trace, RegretTrace) else np.cumsum(np.asarray(ran_trace, dtype=np.float64))
    if a.shape != b.shape:
        raise ShapeError(f"horizon mismatch: {a.shape[0]} vs {b.shape[0]}")
    keep = np.flatnonzero(b > 0)
    return np.column_stack([keep + 1.0, a[keep] / b[keep]])


def mean_curve(curves) -> np.ndarray:
    """Arithmetic mean of equally long per-seed curves."""
    arrs = [np.asarray(c, dtype=np.float64) for c in curves]
    if not arrs or len({a.shape for a in arrs}) != 1:
        raise ShapeError("curves must share one length")
    return np.mean(arrs, axis=0)


def downsample(values, stride: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Keep every ``stride``-th point: 1-based indices ``stride, 2*stride, ...``.

    Returns ``(indices, values)``; a series shorter than ``stride`` yields
    nothing.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    idx = np.arange(stride, values.size + 1, stride)
    return idx, values[idx - 1]

"""Offline evaluation on logged data.

Logs are read from CSV (see :mod:`cabandit.io` for the schemas). A raw log
without candidate lists is turned into a replay log by simulating a
uniformly random logging policy: every event keeps its served item and
payoff and is padded with ``c - 1`` other items drawn uniformly from the
items seen so far. A policy is then scored by rejection replay, learning
only from events where it picks the logged item.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import clone
from sklearn.model_selection import ParameterGrid

from .base import BasePolicy
from .exceptions import ConfigError, DomainError

__all__ = [
    "RawEvent",
    "ReplayEvent",
    "RawEventLog",
    "ReplayLog",
    "PaddingError",
    "one_hot_catalog",
    "synthesize_random_log",
    "ReplayResult",
    "replay",
    "TuneResult",
    "tune",
    "split_index",
    "ALPHA_GRID",
]

#: default exploration grid 0, 0.01, ..., 0.2
ALPHA_GRID = [round(0.01 * k, 2) for k in range(21)]


class PaddingError(ValueError):
    """Not enough distinct items have been seen to pad a candidate list."""


class RawEvent(NamedTuple):
    timestamp: str
    user_id: str
    item_id: str
    payoff: float


class ReplayEvent(NamedTuple):
    timestamp: str
    user_id: str
    served_item_id: str
    payoff: float
    candidates: tuple


@dataclass
class RawEventLog:
    events: list = field(default_factory=list)
    catalog: dict | None = None

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class ReplayLog:
    """Events with candidate lists plus the item catalog (item id -> vector)."""

    events: list = field(default_factory=list)
    catalog: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.events)

    @property
    def n_features(self) -> int:
        if not self.catalog:
            return 0
        return len(next(iter(self.catalog.values())))

    def user_index(self) -> dict:
        """Users in order of first appearance mapped to 0..n-1."""
        index: dict = {}
        for e in self.events:
            index.setdefault(e.user_id, len(index))
        return index

    def validate(self) -> None:
        missing = sorted({i for e in self.events for i in e.candidates if i not in self.catalog})
        if missing:
            raise DomainError(f"items missing from catalog: {missing[:20]}")
        for k, e in enumerate(self.events):
            if e.served_item_id not in e.candidates:
                raise DomainError(f"event {k}: served item {e.served_item_id!r} not among candidates")
            if not -1.0 <= e.payoff <= 1.0:
                raise DomainError(f"event {k}: payoff {e.payoff} outside [-1, 1]")

    def slice(self, start: int, stop: int | None = None) -> "ReplayLog":
        return ReplayLog(events=self.events[start:stop], catalog=self.catalog)


def one_hot_catalog(item_ids) -> dict:
    """Canonical basis vectors for items, in first-appearance order."""
    order: dict = {}
    for i in item_ids:
        order.setdefault(i, len(order))
    eye = np.eye(max(len(order), 1))
    return {i: eye[k] for i, k in order.items()}


def synthesize_random_log(
    raw: RawEventLog,
    c: int,
    seed,
    *,
    catalog: dict | None = None,
    strict: bool = False,
    require_positive: bool = False,
) -> ReplayLog:
    """Pad every raw event into a ``c``-item candidate list.

    Padding items are drawn uniformly without replacement from items seen up
    to and including the current event (never the served item), and the
    served item is put at a uniformly random slot, so each listed item is
    the logged one with probability ``1/c``. Draws never look at payoffs.

    Parameters
    ----------
    raw : RawEventLog
    c : int
        Candidate list size.
    seed : int or None
    catalog : dict, optional
        Item vectors; defaults to ``raw.catalog`` and then to a one-hot
        catalog over the items in ``raw``.
    strict : bool, default=False
        Raise :class:`PaddingError` while fewer than ``c`` distinct items have
        been seen. Otherwise padding falls back to the whole catalog.
    require_positive : bool, default=False
        Keep only events with positive payoff, so every list holds at least
        one rewarding item (the LastFM-style protocol). This filter, unlike
        the padding, depends on payoffs.
    """
    if c < 1:
        raise ConfigError("c must be >= 1")
    catalog = catalog if catalog is not None else raw.catalog
    if catalog is None:
        catalog = one_hot_catalog(e.item_id for e in raw.events)
    missing = sorted({e.item_id for e in raw.events} - set(catalog))
    if missing:
        raise DomainError(f"items missing from catalog: {missing[:20]}")
    all_items = list(catalog)
    rng = np.random.default_rng(seed)
    seen: list = []
    seen_pos: dict = {}
    events = []
    for e in raw.events:
        if e.item_id not in seen_pos:
            seen_pos[e.item_id] = len(seen)
            seen.append(e.item_id)
        if require_positive and not e.payoff > 0:
            continue
        need = c - 1
        if len(seen) - 1 >= need:
            pool, served_at = seen, seen_pos[e.item_id]
        elif strict:
            raise PaddingError(f"only {len(seen)} distinct items seen before {e.timestamp!r}; need {c}")
        else:
            pool, served_at = all_items, all_items.index(e.item_id)
            need = min(need, len(all_items) - 1)
        draws = rng.choice(len(pool) - 1, size=need, replace=False) if need > 0 else np.empty(0, dtype=int)
        draws = draws + (draws >= served_at)
        pads = [pool[k] for k in draws]
        slot = int(rng.integers(need + 1))
        candidates = tuple(pads[:slot] + [e.item_id] + pads[slot:])
        events.append(ReplayEvent(e.timestamp, e.user_id, e.item_id, e.payoff, candidates))
    return ReplayLog(events=events, catalog=dict(catalog))


@dataclass
class ReplayResult:
    """Outcome of one replay: ``stream`` holds ``(event_index, payoff)`` for retained events."""

    stream: list
    n_events: int

    @property
    def n_retained(self) -> int:
        return len(self.stream)

    @property
    def retention(self) -> float:
        return self.n_retained / self.n_events if self.n_events else 0.0

    @property
    def ctr(self) -> float:
        """Retained clicks over retained events (nan when nothing was retained)."""
        if not self.stream:
            return float("nan")
        return float(np.mean([p for _, p in self.stream]))

    @property
    def payoffs(self) -> np.ndarray:
        return np.array([p for _, p in self.stream], dtype=np.float64)


def replay(policy: BasePolicy, log: ReplayLog, *, users: dict | None = None, reset: bool = True) -> ReplayResult:
    """Rejection replay of ``policy`` over ``log``.

    The policy sees round index ``t = retained + 1``. Events where its
    choice differs from the logged item are skipped without any update.
    """
    users = users if users is not None else log.user_index()
    if reset:
        policy.reset(max(len(users), 1), max(log.n_features, 1))
    elif getattr(policy, "n_features_", log.n_features) != log.n_features and len(log):
        raise ConfigError("policy dimension does not match catalog")
    stream = []
    matrices: dict = {}
    for k, e in enumerate(log.events):
        X = matrices.get(e.candidates)
        if X is None:
            X = np.vstack([log.catalog[i] for i in e.candidates])
            if len(matrices) < 4096:
                matrices[e.candidates] = X
        u = users[e.user_id]
        chosen = policy.select(u, X, t=len(stream) + 1)
        if e.candidates[chosen] == e.served_item_id:
            policy.observe(u, X, chosen, e.payoff)
            stream.append((k, e.payoff))
        else:
            policy.discard_pending()
    return ReplayResult(stream=stream, n_events=len(log))


def split_index(n_events: int, split: float = 0.2) -> int:
    """Number of leading events used for tuning: ``floor(split * T)``.

    In 1-based numbering the event ``floor(split * T)`` is the last one of the
    tuning segment.
    """
    if not 0.0 < split < 1.0:
        raise ConfigError("split must lie in (0, 1)")
    return int(np.floor(split * n_events))


@dataclass
class TuneResult:
    best_params: dict
    scores: list
    test: ReplayResult | None = None


def _score_cell(policy, params, segment, users):
    est = clone(policy).set_params(**params)
    res = replay(est, segment, users=users)
    return res.ctr if res.n_retained else -np.inf


def tune(policy: BasePolicy, log: ReplayLog, grid, split: float = 0.2, n_jobs: int | None = None) -> TuneResult:
    """Grid search on the first ``floor(split * T)`` events, report on the rest.

    Parameters
    ----------
    policy : BasePolicy
        Template estimator; cells are applied to clones via ``set_params``.
    grid : dict of lists or list of dicts
        Passed to :class:`sklearn.model_selection.ParameterGrid`; cells are
        scored in grid order and ties keep the first cell.
    split : float, default=0.2
    n_jobs : int, optional
        Cells are scored in parallel with joblib; results are order-stable.
    """
    cells = list(ParameterGrid(grid))
    if not cells:
        raise ConfigError("grid must contain at least one cell")
    users = log.user_index()
    cut = split_index(len(log), split)
    head, rest = log.slice(0, cut), log.slice(cut)
    scores = Parallel(n_jobs=n_jobs)(delayed(_score_cell)(policy, cell, head, users) for cell in cells)
    best = int(np.argmax(np.asarray(scores, dtype=np.float64)))
    final = clone(policy).set_params(**cells[best])
    test = replay(final, rest, users=users)
    return TuneResult(best_params=cells[best], scores=list(zip(cells, scores)), test=test)

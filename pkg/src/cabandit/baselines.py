"""Comparison policies: LinUCB (shared and per-user), CLUB, DynUCB and RAN."""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._validation import check_open_unit, check_positive
from .base import ALPHA_SCHEDULES, BasePolicy, exploration_scale
from .exceptions import ConfigError
from .linalg import StateBank, quad_forms, row_dots

__all__ = ["LinUCBSingle", "LinUCBMultiple", "CLUB", "DynUCB", "RandomPolicy"]


class _UCBMixin:
    """Width computation shared by the UCB baselines."""

    def _check_ucb_params(self):
        check_positive("alpha", self.alpha, allow_zero=True)
        check_open_unit("delta", self.delta)
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise ConfigError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}, got {self.alpha_schedule!r}")
        if self.alpha_schedule == "theoretical" and not self.horizon:
            raise ConfigError("the theoretical schedule needs a positive horizon")

    def _scale(self, t):
        return exploration_scale(
            self.alpha_schedule,
            float(self.alpha),
            t,
            d=self.n_features_,
            n=self.n_users_,
            horizon=self.horizon or 1,
            delta=self.delta,
        )

    def _ucb_argmax(self, X, w, inv, t):
        cb = self._scale(t) * np.sqrt(quad_forms(inv[None], X)[0])
        scores = row_dots(X, w) + cb
        return int(np.argmax(scores))


class LinUCBMultiple(_UCBMixin, BasePolicy):
    """One independent LinUCB learner per user.

    Parameters
    ----------
    alpha : float, default=0.1
    alpha_schedule : {"experimental", "theoretical"}, default="experimental"
    delta : float, default=0.05
    horizon : int, optional
    random_state : None
        Unused.
    """

    def __init__(self, alpha=0.1, alpha_schedule="experimental", delta=0.05, horizon=None, random_state=None):
        self.alpha = alpha
        self.alpha_schedule = alpha_schedule
        self.delta = delta
        self.horizon = horizon
        self.random_state = random_state

    def _init_state(self):
        self._check_ucb_params()
        self.bank_ = StateBank(self.n_users_, self.n_features_)

    def _select(self, user, X, t):
        w = self.bank_.proxies([user])
        q = self.bank_.quad_forms(X, [user])
        cb = self._scale(t) * np.sqrt(q)
        member = np.ones((1, X.shape[0]))
        # identical arithmetic to CAB with a singleton neighbourhood
        agg_w = (member.T @ w) / member.sum(axis=0)[:, None]
        agg_cb = (member * cb).sum(axis=0) / member.sum(axis=0)
        return int(np.argmax(row_dots(X, agg_w) + agg_cb)), None

    def _observe(self, user, X, chosen, payoff, t, cache):
        self.bank_.update([user], X[chosen], payoff)

    def state_fingerprint(self):
        return self.bank_.fingerprint()


class LinUCBSingle(LinUCBMultiple):
    """A single LinUCB learner shared by every user."""

    def _init_state(self):
        self._check_ucb_params()
        self.bank_ = StateBank(1, self.n_features_)

    def _select(self, user, X, t):
        return super()._select(0, X, t)

    def _observe(self, user, X, chosen, payoff, t, cache):
        super()._observe(0, X, chosen, payoff, t, cache)


class RandomPolicy(BasePolicy):
    """Uniformly random choice among the candidates (RAN).

    Parameters
    ----------
    random_state : int, RandomState instance or None
    """

    def __init__(self, random_state=None):
        self.random_state = random_state

    def _init_state(self):
        pass

    def _select(self, user, X, t):
        return int(self.rng_.randint(X.shape[0])), None

    def _observe(self, user, X, chosen, payoff, t, cache):
        pass

    def state_fingerprint(self):
        return 0


def _cluster_solution(bank: StateBank, members: np.ndarray):
    """Aggregate ridge problem of a user group: ``I + sum (M_j - I)`` and ``sum b_j``."""
    d = bank.d
    M = np.eye(d) + (bank.M[members] - np.eye(d)).sum(axis=0)
    b = bank.b[members].sum(axis=0)
    return M, b


class CLUB(_UCBMixin, BasePolicy):
    """Graph-based clustering of bandits.

    Users start on a random graph; an edge ``(i, j)`` is deleted once the
    proxies of ``i`` and ``j`` are further apart than ``alpha2`` times the
    sum of their count-based widths. Each served user is scored with the
    ridge solution pooled over its connected component.

    Parameters
    ----------
    alpha : float, default=0.1
    alpha2 : float, default=0.3
        Edge-deletion coefficient; ``np.inf`` never deletes.
    graph_init : {"erdos_renyi", "complete"}, default="erdos_renyi"
        Initial graph; Erdos-Renyi uses ``p = 3 log(n) / n``.
    alpha_schedule, delta, horizon
        As for :class:`LinUCBMultiple`.
    random_state : int, RandomState instance or None
        Seeds the initial graph.
    """

    def __init__(
        self,
        alpha=0.1,
        alpha2=0.3,
        graph_init="erdos_renyi",
        alpha_schedule="experimental",
        delta=0.05,
        horizon=None,
        random_state=None,
    ):
        self.alpha = alpha
        self.alpha2 = alpha2
        self.graph_init = graph_init
        self.alpha_schedule = alpha_schedule
        self.delta = delta
        self.horizon = horizon
        self.random_state = random_state

    def _init_state(self):
        self._check_ucb_params()
        check_positive("alpha2", self.alpha2, allow_zero=True, allow_inf=True)
        n = self.n_users_
        self.bank_ = StateBank(n, self.n_features_)
        if self.graph_init == "complete":
            adj = np.ones((n, n), dtype=bool)
        elif self.graph_init == "erdos_renyi":
            p = min(1.0, 3.0 * math.log(n) / n) if n > 1 else 1.0
            upper = np.triu(self.rng_.random_sample((n, n)) < p, k=1)
            adj = upper | upper.T
        else:
            raise ConfigError(f"graph_init must be 'erdos_renyi' or 'complete', got {self.graph_init!r}")
        np.fill_diagonal(adj, False)
        self.adjacency_ = [set(np.flatnonzero(row).tolist()) for row in adj]
        self._recompute_components()

    @property
    def n_edges_(self) -> int:
        return sum(len(s) for s in self.adjacency_) // 2

    def _recompute_components(self):
        n = self.n_users_
        rows = [i for i in range(n) for _ in self.adjacency_[i]]
        cols = [j for i in range(n) for j in self.adjacency_[i]]
        graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        self.components_ = labels

    def _count_width(self, user):
        T = self.bank_.n_updates[user]
        return math.sqrt((1.0 + math.log1p(T)) / (1.0 + T))

    def _select(self, user, X, t):
        members = np.flatnonzero(self.components_ == self.components_[user])
        M, b = _cluster_solution(self.bank_, members)
        inv = np.linalg.inv(M)
        return self._ucb_argmax(X, inv @ b, inv, t), None

    def _observe(self, user, X, chosen, payoff, t, cache):
        self.bank_.update([user], X[chosen], payoff)
        w = self.bank_.proxies()
        cw_user = self._count_width(user)
        removed = False
        for j in sorted(self.adjacency_[user]):
            limit = self.alpha2 * (cw_user + self._count_width(j))
            if np.linalg.norm(w[user] - w[j]) > limit:
                self.adjacency_[user].discard(j)
                self.adjacency_[j].discard(user)
                removed = True
        if removed:
            self._recompute_components()

    def state_fingerprint(self):
        edges = tuple(tuple(sorted(s)) for s in self.adjacency_)
        return hash((self.bank_.fingerprint(), edges))


class DynUCB(_UCBMixin, BasePolicy):
    """Bandits grouped by online k-means over their proxies.

    After each update the served user moves to the cluster whose centroid
    (mean member proxy) is nearest; cluster ridge problems are pooled as in
    :class:`CLUB` and maintained incrementally.

    Parameters
    ----------
    n_clusters : int, default=4
        Number of clusters ``K``; must not exceed the number of users.
    alpha, alpha_schedule, delta, horizon
        As for :class:`LinUCBMultiple`.
    init : {"round_robin", "random"}, default="round_robin"
        Initial assignment; ``round_robin`` puts user ``i`` in cluster ``i % K``.
    random_state : int, RandomState instance or None
    """

    def __init__(
        self,
        n_clusters=4,
        alpha=0.1,
        alpha_schedule="experimental",
        delta=0.05,
        horizon=None,
        init="round_robin",
        random_state=None,
    ):
        self.n_clusters = n_clusters
        self.alpha = alpha
        self.alpha_schedule = alpha_schedule
        self.delta = delta
        self.horizon = horizon
        self.init = init
        self.random_state = random_state

    def _init_state(self):
        self._check_ucb_params()
        K, n, d = int(self.n_clusters), self.n_users_, self.n_features_
        if not 1 <= K <= n:
            raise ConfigError(f"n_clusters must lie in [1, n_users={n}], got {self.n_clusters}")
        self.bank_ = StateBank(n, d)
        if self.init == "round_robin":
            self.assignment_ = np.arange(n) % K
        elif self.init == "random":
            self.assignment_ = np.arange(n) % K
            self.rng_.shuffle(self.assignment_)
        else:
            raise ConfigError(f"init must be 'round_robin' or 'random', got {self.init!r}")
        # pooled statistics: excess correlation sum(M_j - I) and sum(b_j)
        self.cluster_excess_ = np.zeros((K, d, d))
        self.cluster_b_ = np.zeros((K, d))

    @property
    def cluster_sizes_(self) -> np.ndarray:
        return np.bincount(self.assignment_, minlength=int(self.n_clusters))

    def _select(self, user, X, t):
        c = self.assignment_[user]
        M = np.eye(self.n_features_) + self.cluster_excess_[c]
        inv = np.linalg.inv(M)
        return self._ucb_argmax(X, inv @ self.cluster_b_[c], inv, t), None

    def _observe(self, user, X, chosen, payoff, t, cache):
        x = X[chosen]
        self.bank_.update([user], x, payoff)
        old = self.assignment_[user]
        self.cluster_excess_[old] += np.outer(x, x)
        self.cluster_b_[old] += payoff * x

        W = self.bank_.proxies()
        sizes = self.cluster_sizes_
        nonempty = np.flatnonzero(sizes > 0)
        centroids = np.zeros((int(self.n_clusters), self.n_features_))
        np.add.at(centroids, self.assignment_, W)
        centroids[nonempty] /= sizes[nonempty, None]
        dist = np.linalg.norm(centroids[nonempty] - W[user], axis=1)
        new = int(nonempty[np.argmin(dist)])
        if new != old:
            excess = self.bank_.M[user] - np.eye(self.n_features_)
            self.cluster_excess_[old] -= excess
            self.cluster_b_[old] -= self.bank_.b[user]
            self.cluster_excess_[new] += excess
            self.cluster_b_[new] += self.bank_.b[user]
            self.assignment_[user] = new

    def state_fingerprint(self):
        return hash((self.bank_.fingerprint(), self.assignment_.tobytes(), self.cluster_excess_.tobytes()))

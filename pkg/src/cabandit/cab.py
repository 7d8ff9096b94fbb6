"""Context-aware clustering of bandits (CAB).

For every candidate item CAB estimates which users would rate the item
like the served user (their proxies agree up to the sum of confidence
widths), scores the item with the flat average of those users' proxies and
widths, and recommends the best upper confidence score. Feedback is shared:
when the served user is already confident about the chosen item, every
confident member of its estimated neighbourhood absorbs the same update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_contexts, check_open_unit, check_positive, check_user
from .base import ALPHA_SCHEDULES, BasePolicy, exploration_scale
from .exceptions import ConfigError
from .linalg import StateBank, row_dots

__all__ = ["CAB", "NeighborhoodEstimate", "neighborhood_mask"]


@dataclass(frozen=True)
class NeighborhoodEstimate:
    members: frozenset
    aggregate_proxy: np.ndarray
    aggregate_cb: float


def neighborhood_mask(projections: np.ndarray, widths: np.ndarray, served: int) -> np.ndarray:
    """Membership test ``|p_served - p_j| <= cb_served + cb_j`` per user and item.

    Parameters
    ----------
    projections, widths : ndarray of shape (n, c)
        Proxy projections ``w_j^T x_k`` and widths ``cb_j(x_k)``.
    served : int

    Returns
    -------
    ndarray of bool, shape (n, c)
    """
    gap = np.abs(projections[served][None, :] - projections)
    return gap <= widths[served][None, :] + widths


class CAB(BasePolicy):
    """Context-aware clustering of bandits.

    Parameters
    ----------
    alpha : float, default=0.1
        Exploration coefficient. Under the ``theoretical`` schedule it is the
        leading constant of ``sqrt(d log(T n / delta))``.
    gamma : float, default=0.2
        Gap parameter; widths below ``gamma / 4`` enable shared updates.
    delta : float, default=0.05
        Confidence level used by the theoretical schedule.
    alpha_schedule : {"experimental", "theoretical"}, default="experimental"
        ``experimental``: ``alpha * sqrt(x^T M^-1 x * log(1 + t))``.
    warm_user_filter : bool, default=True
        Only users updated at least once may join a neighbourhood other than
        their own.
    horizon : int, optional
        Horizon ``T`` for the theoretical schedule.
    random_state : int, RandomState instance or None
        Unused; accepted so every policy shares one signature shape.

    Attributes
    ----------
    bank_ : StateBank
        Per-user correlation states.
    active_ : ndarray of bool
        False for users removed with :meth:`remove_user`.
    last_updated_ : ndarray of int
        Users updated by the most recent :meth:`observe`.
    last_branch_ : {"solo", "shared"}
    """

    def __init__(
        self,
        alpha=0.1,
        gamma=0.2,
        delta=0.05,
        alpha_schedule="experimental",
        warm_user_filter=True,
        horizon=None,
        random_state=None,
    ):
        self.alpha = alpha
        self.gamma = gamma
        self.delta = delta
        self.alpha_schedule = alpha_schedule
        self.warm_user_filter = warm_user_filter
        self.horizon = horizon
        self.random_state = random_state

    def _validate_params(self):
        check_positive("alpha", self.alpha, allow_zero=True)
        check_positive("gamma", self.gamma)
        check_open_unit("delta", self.delta)
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise ConfigError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}, got {self.alpha_schedule!r}")
        if self.alpha_schedule == "theoretical" and not self.horizon:
            raise ConfigError("the theoretical schedule needs a positive horizon")

    def _init_state(self):
        self._validate_params()
        self.bank_ = StateBank(self.n_users_, self.n_features_)
        self.active_ = np.ones(self.n_users_, dtype=bool)
        self.last_updated_ = np.empty(0, dtype=np.intp)
        self.last_branch_ = None

    # fluid user set ------------------------------------------------------
    def add_user(self) -> int:
        """Register a new user with an identity state; returns its index."""
        idx = self.bank_.append()
        self.active_ = np.append(self.active_, True)
        self.n_users_ += 1
        return idx

    def remove_user(self, user: int) -> None:
        """Exclude ``user`` from all future neighbourhoods and from being served."""
        user = check_user(user, self.n_users_)
        self.active_[user] = False

    @property
    def ever_updated_(self) -> np.ndarray:
        return self.bank_.n_updates > 0

    # widths and neighbourhoods -------------------------------------------
    def _scale(self, t: int) -> float:
        return exploration_scale(
            self.alpha_schedule,
            float(self.alpha),
            t,
            d=self.n_features_,
            n=self.n_users_,
            horizon=self.horizon or 1,
            delta=self.delta,
        )

    def _proxies(self) -> np.ndarray:
        return self.bank_.proxies()

    def _widths(self, X: np.ndarray, t: int) -> np.ndarray:
        return self._scale(t) * np.sqrt(self.bank_.quad_forms(X))

    def confidence_width(self, user: int, x, t: int) -> float:
        """Width ``cb_user(x)`` at round ``t``."""
        X = check_contexts(np.atleast_2d(x), self.n_features_)
        user = check_user(user, self.n_users_)
        return float(self._widths(X, t)[user, 0])

    def _neighborhoods(self, served: int, X: np.ndarray, t: int):
        W = self._proxies()
        P = np.einsum("jd,kd->jk", W, X)
        CB = self._widths(X, t)
        member = neighborhood_mask(P, CB, served)
        eligible = self.active_.copy()
        if self.warm_user_filter:
            eligible &= self.ever_updated_
        eligible[served] = True
        member &= eligible[:, None]
        member[served] = True
        counts = member.sum(axis=0)
        agg_w = (member.T.astype(np.float64) @ W) / counts[:, None]
        agg_cb = (member * CB).sum(axis=0) / counts
        return member, CB, agg_w, agg_cb

    def estimate_neighborhood(self, served: int, x, t: int) -> NeighborhoodEstimate:
        X = check_contexts(np.atleast_2d(x), self.n_features_)
        served = check_user(served, self.n_users_)
        member, _, agg_w, agg_cb = self._neighborhoods(served, X, t)
        return NeighborhoodEstimate(
            members=frozenset(np.flatnonzero(member[:, 0]).tolist()),
            aggregate_proxy=agg_w[0],
            aggregate_cb=float(agg_cb[0]),
        )

    # policy hooks -------------------------------------------------------
    def _select(self, user, X, t):
        if not self.active_[user]:
            raise IndexError(f"user {user} has been removed")
        member, CB, agg_w, agg_cb = self._neighborhoods(user, X, t)
        scores = row_dots(X, agg_w) + agg_cb
        return int(np.argmax(scores)), (member, CB)

    def cab_select(self, user: int, X, t: int | None = None):
        """Select and also return the per-candidate neighbourhood estimates."""
        index = self.select(user, X, t)
        member, CB = self._pending[4]
        estimates = [frozenset(np.flatnonzero(member[:, k]).tolist()) for k in range(member.shape[1])]
        return index, estimates

    def _observe(self, user, X, chosen, payoff, t, cache):
        member, CB = cache
        x = X[chosen]
        quarter_gap = self.gamma / 4.0
        if CB[user, chosen] >= quarter_gap:
            targets = np.array([user], dtype=np.intp)
            self.last_branch_ = "solo"
        else:
            targets = np.flatnonzero(member[:, chosen] & (CB[:, chosen] < quarter_gap))
            self.last_branch_ = "shared"
        self.bank_.update(targets, x, payoff)
        self.last_updated_ = targets

    def state_fingerprint(self) -> int:
        return self.bank_.fingerprint()

"""Sparse user models: two-stage hard thresholding and the spCAB policy.

The per-user objective is the ridge loss

    f(w) = sum_r (w^T x_r - y_r)^2 + ridge * ||w||^2,

minimised over ``s``-sparse vectors by a fully corrective two-stage
scheme: expand the current support with the ``ell`` largest off-support
gradient coordinates, re-solve on the expanded support, keep the ``s``
largest coordinates and re-solve once more on what remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_contexts, check_user
from .cab import CAB
from .exceptions import ConfigError, InsufficientDataError
from .linalg import quad_forms

__all__ = [
    "SparseConfig",
    "SparseDesign",
    "HTResult",
    "restricted_ls",
    "two_stage_ht",
    "restricted_quad_form",
    "sparse_confidence_width",
    "SpCAB",
]


@dataclass(frozen=True)
class SparseConfig:
    """Solver settings.

    ``rss_rsc_factor`` is the ``4 L^2 / alpha^2`` multiplier from the
    recovery guarantee; it is not estimated (that needs the restricted
    constants of the design) and only enters :meth:`recommended_s`.
    """

    s: int
    ell: int
    s_star: int
    pi_min: float = 0.1
    ridge: float = 1.0
    max_iters: int = 100
    convergence_tol: float = 1e-8
    rss_rsc_factor: float = 1.0

    def __post_init__(self):
        if self.s_star < 1:
            raise ConfigError("s_star must be >= 1")
        if self.ell < self.s_star:
            raise ConfigError(f"ell={self.ell} must be >= s_star={self.s_star}")
        if self.s < self.s_star:
            raise ConfigError(f"s={self.s} must be >= s_star={self.s_star}")
        if not self.pi_min > 0:
            raise ConfigError("pi_min must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")

    def recommended_s(self) -> int:
        """Smallest ``s`` meeting ``s >= factor * ell + s_star - ell``."""
        return max(self.s_star, int(np.ceil(self.rss_rsc_factor * self.ell + self.s_star - self.ell)))


class SparseDesign:
    """Observation history of one user plus cached Gram statistics.

    Rows are kept verbatim; ``gram`` (``X^T X``), ``moment`` (``X^T y``) and
    ``yy`` (``y^T y``) are maintained incrementally so the objective and
    its restricted minimisers are cheap to evaluate.
    """

    def __init__(self, d: int):
        self.d = int(d)
        self.rows: list[tuple[np.ndarray, float]] = []
        self.gram = np.zeros((self.d, self.d))
        self.moment = np.zeros(self.d)
        self.yy = 0.0
        self.version = 0

    @classmethod
    def from_arrays(cls, X, y) -> "SparseDesign":
        X = np.asarray(X, dtype=np.float64)
        design = cls(X.shape[1])
        for row, target in zip(X, np.asarray(y, dtype=np.float64)):
            design.append(row, target)
        return design

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, x, y) -> None:
        x = np.asarray(x, dtype=np.float64)
        y = float(y)
        self.rows.append((x.copy(), y))
        self.gram += np.outer(x, x)
        self.moment += y * x
        self.yy += y * y
        self.version += 1

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.d))
        return np.vstack([r[0] for r in self.rows])

    @property
    def y(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def objective(self, w, ridge: float) -> float:
        w = np.asarray(w, dtype=np.float64)
        return float(w @ self.gram @ w - 2.0 * self.moment @ w + self.yy + ridge * (w @ w))

    def gradient(self, w, ridge: float) -> np.ndarray:
        return 2.0 * ((self.gram + ridge * np.eye(self.d)) @ w - self.moment)


def restricted_ls(design: SparseDesign, support, ridge: float = 1.0) -> np.ndarray:
    """Ridge least squares over vectors supported on ``support``.

    Coordinates outside ``support`` are exactly zero.
    """
    S = np.unique(np.asarray(list(support), dtype=np.intp))
    if S.size == 0:
        raise ValueError("support must be nonempty")
    if S.size > design.d or S.min() < 0 or S.max() >= design.d:
        raise ValueError("support indices out of range")
    A = design.gram[np.ix_(S, S)] + ridge * np.eye(S.size)
    w = np.zeros(design.d)
    w[S] = np.linalg.solve(A, design.moment[S])
    return w


def _top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries; ties resolved towards lower index."""
    if k <= 0:
        return np.empty(0, dtype=np.intp)
    order = np.lexsort((np.arange(values.size), -values))
    return np.sort(order[:k])


@dataclass
class HTResult:
    """Output of :func:`two_stage_ht` with its per-iteration trace.

    ``history`` holds one ``(f(w_t), f(b_t), f(w_{t+1}))`` triple per
    iteration, where ``b_t`` is the solution on the expanded support.
    ``objectives`` lists ``f`` at every accepted iterate, starting from
    ``w = 0``.
    """

    w: np.ndarray
    support: np.ndarray
    n_iter: int
    objectives: list = field(default_factory=list)
    history: list = field(default_factory=list)


def two_stage_ht(design: SparseDesign, cfg: SparseConfig) -> HTResult:
    """Two-stage hard thresholding with fully corrective steps.

    Iterates until the relative objective decrease falls below
    ``cfg.convergence_tol`` or ``cfg.max_iters`` is reached. A candidate
    iterate that would raise the objective is rejected and the previous
    iterate returned, so accepted objectives never increase.
    """
    if len(design) == 0:
        raise InsufficientDataError("two_stage_ht needs at least one observation")
    d, ridge = design.d, cfg.ridge
    if cfg.s >= d:
        w = restricted_ls(design, range(d), ridge)
        f = design.objective(w, ridge)
        return HTResult(w=w, support=np.flatnonzero(w), n_iter=1,
                        objectives=[design.objective(np.zeros(d), ridge), f])

    w = np.zeros(d)
    f_w = design.objective(w, ridge)
    objectives = [f_w]
    history = []
    n_iter = 0
    for _ in range(cfg.max_iters):
        n_iter += 1
        support = np.flatnonzero(w)
        g = design.gradient(w, ridge)
        off = np.setdiff1d(np.arange(d), support)
        expansion = off[_top_k(np.abs(g[off]), min(cfg.ell, off.size))]
        Z = np.union1d(support, expansion)
        b = restricted_ls(design, Z, ridge)
        f_b = design.objective(b, ridge)
        kept = Z[_top_k(np.abs(b[Z]), min(cfg.s, Z.size))]
        kept = kept[b[kept] != 0] if np.any(b[kept] != 0) else kept
        w_next = restricted_ls(design, kept, ridge)
        f_next = design.objective(w_next, ridge)
        history.append((f_w, f_b, f_next))
        if f_next > f_w:
            break
        decrease = f_w - f_next
        w, f_w = w_next, f_next
        objectives.append(f_w)
        if decrease <= cfg.convergence_tol * max(abs(objectives[-2]), 1e-300):
            break
    return HTResult(w=w, support=np.flatnonzero(w), n_iter=n_iter, objectives=objectives, history=history)


def restricted_quad_form(M: np.ndarray, support, x) -> float:
    """``x^T (M^S)^{-1} x`` where ``M^S`` keeps ``M`` on ``S`` and is identity elsewhere.

    ``M`` must be of the form ``I + sum x x^T`` so that restricting every
    row to ``S`` leaves the off-support block equal to the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    S = np.asarray(sorted(support), dtype=np.intp)
    off = np.ones(x.size, dtype=bool)
    off[S] = False
    q = float(x[off] @ x[off])
    if S.size:
        q += float(x[S] @ np.linalg.solve(M[np.ix_(S, S)], x[S]))
    return max(q, 0.0)


def sparse_alpha(alpha0: float, s: int, t: int, n: int, delta: float) -> float:
    return alpha0 * np.sqrt(s * np.log((1.0 + t) * n / delta))


def sparse_confidence_width(M: np.ndarray, support, x, t: int, *, s: int, n: int,
                            alpha0: float = 1.0, delta: float = 0.05) -> float:
    """Support-restricted confidence width for one user and context."""
    return float(sparse_alpha(alpha0, s, t, n, delta) * np.sqrt(restricted_quad_form(M, support, x)))


class SpCAB(CAB):
    """CAB with sparse proxies and support-restricted widths.

    Proxies come from :func:`two_stage_ht` on each user's own history
    (every update the user absorbed, shared ones included) and are recomputed
    lazily when that history changes. Widths use the correlation matrix
    restricted to the proxy's support.

    Parameters
    ----------
    s, ell, s_star : int
        Output sparsity, expansion level and assumed true sparsity.
    alpha : float, default=1.0
        Leading constant of ``sqrt(s log((1 + t) n / delta))``.
    width_form : {"sparse", "dense"}, default="sparse"
        ``dense`` swaps in the ordinary CAB width (with ``alpha_schedule``)
        so the two policies can be compared on equal footing.
    ridge, max_iters, convergence_tol
        Solver settings, see :class:`SparseConfig`.
    gamma, delta, alpha_schedule, warm_user_filter, horizon, random_state
        As for :class:`~cabandit.cab.CAB`.
    """

    def __init__(
        self,
        s=5,
        ell=5,
        s_star=5,
        alpha=1.0,
        gamma=0.2,
        delta=0.05,
        width_form="sparse",
        alpha_schedule="experimental",
        warm_user_filter=True,
        horizon=None,
        ridge=1.0,
        max_iters=100,
        convergence_tol=1e-8,
        random_state=None,
    ):
        super().__init__(
            alpha=alpha,
            gamma=gamma,
            delta=delta,
            alpha_schedule=alpha_schedule,
            warm_user_filter=warm_user_filter,
            horizon=horizon,
            random_state=random_state,
        )
        self.s = s
        self.ell = ell
        self.s_star = s_star
        self.width_form = width_form
        self.ridge = ridge
        self.max_iters = max_iters
        self.convergence_tol = convergence_tol

    def _init_state(self):
        super()._init_state()
        if self.width_form not in ("sparse", "dense"):
            raise ConfigError(f"width_form must be 'sparse' or 'dense', got {self.width_form!r}")
        if self.ridge != 1.0 and self.dense_:
            raise ConfigError("with s >= d the proxy reuses the unit-ridge correlation state; ridge must be 1")
        self.config_ = SparseConfig(
            s=int(self.s), ell=int(self.ell), s_star=int(self.s_star), ridge=float(self.ridge),
            max_iters=int(self.max_iters), convergence_tol=float(self.convergence_tol),
        )
        self.designs_ = [SparseDesign(self.n_features_) for _ in range(self.n_users_)]
        self._proxy_cache = np.zeros((self.n_users_, self.n_features_))
        self._proxy_version = np.zeros(self.n_users_, dtype=np.int64)

    @property
    def dense_(self) -> bool:
        return int(self.s) >= self.n_features_

    def add_user(self) -> int:
        idx = super().add_user()
        self.designs_.append(SparseDesign(self.n_features_))
        self._proxy_cache = np.vstack([self._proxy_cache, np.zeros(self.n_features_)])
        self._proxy_version = np.append(self._proxy_version, 0)
        return idx

    def _proxies(self) -> np.ndarray:
        if self.dense_:
            # s >= d makes hard thresholding the identity: the dense ridge proxy
            return self.bank_.proxies()
        for j, design in enumerate(self.designs_):
            if design.version != self._proxy_version[j]:
                self._proxy_cache[j] = two_stage_ht(design, self.config_).w
                self._proxy_version[j] = design.version
        return self._proxy_cache

    def supports(self) -> list[np.ndarray]:
        """Current proxy supports, one per user."""
        return [np.flatnonzero(w) for w in self._proxies()]

    def _widths(self, X, t):
        if self.width_form == "dense":
            return super()._widths(X, t)
        scale = sparse_alpha(float(self.alpha), int(self.s), t, self.n_users_, self.delta)
        W = self._proxies()
        q = np.empty((self.n_users_, X.shape[0]))
        for j in range(self.n_users_):
            S = np.flatnonzero(W[j])
            if S.size == self.n_features_:
                q[j] = quad_forms(self.bank_.M_inv[j][None], X)[0]
                continue
            off = np.ones(self.n_features_, dtype=bool)
            off[S] = False
            q[j] = np.einsum("kd,kd->k", X[:, off], X[:, off])
            if S.size:
                XS = X[:, S]
                q[j] += np.einsum("kd,dk->k", XS, np.linalg.solve(self.bank_.M[j][np.ix_(S, S)], XS.T))
        return scale * np.sqrt(np.maximum(q, 0.0))

    def sparse_confidence_width(self, user: int, x, t: int) -> float:
        X = check_contexts(np.atleast_2d(x), self.n_features_)
        user = check_user(user, self.n_users_)
        return float(self._widths(X, t)[user, 0])

    def _observe(self, user, X, chosen, payoff, t, cache):
        super()._observe(user, X, chosen, payoff, t, cache)
        for j in self.last_updated_:
            self.designs_[j].append(X[chosen], payoff)

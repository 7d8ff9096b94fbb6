"""Incremental ridge-regression state maintained under rank-one updates.

Every user (or cluster) of a linear bandit keeps a correlation matrix
``M = I + sum x x^T``, its inverse, and the payoff-weighted vector
``b = sum y x``. The inverse is updated with the Sherman-Morrison identity
in O(d^2) per observation and periodically refreshed from a dense inverse
to bound floating point drift.

Two containers share the same arithmetic:

* :class:`CorrelationState` holds a single state.
* :class:`StateBank` stacks ``n`` states into contiguous arrays so policies
  can evaluate widths for all users and candidates in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NumericInputError",
    "CorrelationState",
    "StateBank",
    "quad_forms",
    "row_dots",
    "REFRESH_EVERY",
]

#: number of rank-one updates between dense refreshes of the inverse
REFRESH_EVERY = 4096
_DENOM_GUARD = 1e-12
_NORM_SLACK = 1e-9


class NumericInputError(ValueError):
    """Raised on non-finite inputs or a degenerate inverse update."""


def _check_vector(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"expected a vector of shape ({d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("context vector has non-finite entries")
    return x


def _check_payoff(y) -> float:
    y = float(y)
    if not np.isfinite(y):
        raise NumericInputError("payoff is not finite")
    return y


def quad_forms(inverses: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Return ``x_k^T A_j x_k`` for every matrix ``A_j`` and row ``x_k``.

    Parameters
    ----------
    inverses : ndarray of shape (m, d, d)
    X : ndarray of shape (k, d)

    Returns
    -------
    ndarray of shape (m, k), clipped at zero.
    """
    q = np.einsum("kd,jde,ke->jk", X, inverses, X)
    return np.maximum(q, 0.0)


def row_dots(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Row-wise inner products ``<X[k], W[k]>``.

    All policies score candidates through this one function so that
    decision traces of reducible policies agree bit for bit.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(np.broadcast_to(W, X.shape), dtype=np.float64)
    return np.einsum("kd,kd->k", X, W)


def _sherman_morrison(inv: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Return ``(A + x x^T)^{-1}`` given ``inv = A^{-1}`` (batched over leading axes)."""
    u = inv @ x
    denom = 1.0 + u @ x
    if np.any(denom < _DENOM_GUARD):
        raise NumericInputError("degenerate rank-one inverse update")
    return inv - u[..., :, None] * u[..., None, :] / np.asarray(denom)[..., None, None]


@dataclass
class CorrelationState:
    """Ridge-regression sufficient statistics for one user.

    Attributes
    ----------
    dim : int
    M : ndarray of shape (dim, dim)
        Correlation matrix, identity plus accumulated outer products.
    M_inv : ndarray of shape (dim, dim)
        Incrementally maintained inverse of ``M``.
    b : ndarray of shape (dim,)
    n_updates : int
    """

    dim: int
    M: np.ndarray = field(repr=False)
    M_inv: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    n_updates: int = 0

    @classmethod
    def new_identity(cls, d: int) -> "CorrelationState":
        if int(d) != d or d < 1:
            raise ValueError(f"dimension must be a positive integer, got {d!r}")
        d = int(d)
        return cls(dim=d, M=np.eye(d), M_inv=np.eye(d), b=np.zeros(d), n_updates=0)

    def rank_one_update(self, x, y) -> "CorrelationState":
        """Absorb one observation ``(x, y)`` in place and return ``self``."""
        x = _check_vector(x, self.dim)
        y = _check_payoff(y)
        if x @ x > (1.0 + _NORM_SLACK) ** 2:
            raise ValueError("context vectors must satisfy ||x|| <= 1")
        self.M += np.outer(x, x)
        self.b += y * x
        self.n_updates += 1
        if self.n_updates % REFRESH_EVERY == 0:
            self.M_inv = np.linalg.inv(self.M)
        else:
            self.M_inv = _sherman_morrison(self.M_inv, x)
        return self

    def proxy(self) -> np.ndarray:
        """Ridge estimate ``w = M^{-1} b``."""
        return self.M_inv @ self.b

    def quad_form(self, x) -> float:
        x = _check_vector(x, self.dim)
        return float(max(x @ self.M_inv @ x, 0.0))

    def copy(self) -> "CorrelationState":
        return CorrelationState(
            dim=self.dim,
            M=self.M.copy(),
            M_inv=self.M_inv.copy(),
            b=self.b.copy(),
            n_updates=self.n_updates,
        )


class StateBank:
    """``n`` correlation states stored as stacked arrays.

    Parameters
    ----------
    n : int
        Number of states (users).
    d : int
        Dimension.
    """

    def __init__(self, n: int, d: int):
        if d < 1:
            raise ValueError(f"dimension must be a positive integer, got {d!r}")
        if n < 0:
            raise ValueError("number of states must be nonnegative")
        self.d = int(d)
        self.M = np.tile(np.eye(self.d), (n, 1, 1))
        self.M_inv = self.M.copy()
        self.b = np.zeros((n, self.d))
        self.n_updates = np.zeros(n, dtype=np.int64)

    def __len__(self) -> int:
        return self.b.shape[0]

    def append(self) -> int:
        """Add a fresh identity state and return its index."""
        eye = np.eye(self.d)[None]
        self.M = np.concatenate([self.M, eye])
        self.M_inv = np.concatenate([self.M_inv, eye])
        self.b = np.concatenate([self.b, np.zeros((1, self.d))])
        self.n_updates = np.append(self.n_updates, 0)
        return len(self) - 1

    def update(self, users, x, y) -> None:
        """Apply the same rank-one update ``(x, y)`` to every state in ``users``."""
        x = _check_vector(x, self.d)
        y = _check_payoff(y)
        if x @ x > (1.0 + _NORM_SLACK) ** 2:
            raise ValueError("context vectors must satisfy ||x|| <= 1")
        users = np.atleast_1d(np.asarray(users, dtype=np.intp))
        if users.size == 0:
            return
        self.M[users] += np.outer(x, x)
        self.b[users] += y * x
        self.n_updates[users] += 1
        self.M_inv[users] = _sherman_morrison(self.M_inv[users], x)
        stale = users[self.n_updates[users] % REFRESH_EVERY == 0]
        if stale.size:
            self.M_inv[stale] = np.linalg.inv(self.M[stale])

    def proxies(self, users=None) -> np.ndarray:
        """Ridge estimates for ``users`` (all when None), shape (k, d)."""
        if users is None:
            return np.einsum("jde,je->jd", self.M_inv, self.b)
        users = np.atleast_1d(np.asarray(users, dtype=np.intp))
        return np.einsum("jde,je->jd", self.M_inv[users], self.b[users])

    def quad_forms(self, X, users=None) -> np.ndarray:
        """``x^T M_j^{-1} x`` for users ``j`` (rows) and candidates ``x`` (columns)."""
        inv = self.M_inv if users is None else self.M_inv[np.atleast_1d(users)]
        return quad_forms(inv, np.asarray(X, dtype=np.float64))

    def state(self, i: int) -> CorrelationState:
        """Copy of user ``i`` as a standalone :class:`CorrelationState`."""
        return CorrelationState(
            dim=self.d,
            M=self.M[i].copy(),
            M_inv=self.M_inv[i].copy(),
            b=self.b[i].copy(),
            n_updates=int(self.n_updates[i]),
        )

    def fingerprint(self) -> int:
        """Hash of the full numeric state, used to detect unwanted mutation."""
        return hash((self.M.tobytes(), self.M_inv.tobytes(), self.b.tobytes(), self.n_updates.tobytes()))

"""Input validation helpers shared by policies, environments and replay."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigError, DomainError, ShapeError

NORM_TOL = 1e-9


def check_contexts(X, n_features: int | None = None) -> np.ndarray:
    """Validate a (c, d) candidate matrix with finite rows of norm <= 1."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"contexts have {X.shape[1]} features, policy expects {n_features}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > 1.0 + NORM_TOL):
        raise DomainError(f"context norms must be <= 1, got max {norms.max():.6g}")
    return X


def check_user(user, n_users: int) -> int:
    if not isinstance(user, numbers.Integral) or isinstance(user, bool):
        raise TypeError(f"user index must be an integer, got {type(user).__name__}")
    if not 0 <= user < n_users:
        raise IndexError(f"user index {user} outside [0, {n_users})")
    return int(user)


def check_payoff(y) -> float:
    y = float(y)
    if not np.isfinite(y) or not -1.0 <= y <= 1.0:
        raise DomainError(f"payoff must lie in [-1, 1], got {y!r}")
    return y


def check_positive(name: str, value, *, allow_zero: bool = False, allow_inf: bool = False) -> float:
    value = float(value)
    ok = value >= 0 if allow_zero else value > 0
    finite = np.isfinite(value) or (allow_inf and value == np.inf)
    if np.isnan(value) or not finite or not ok:
        bound = ">= 0" if allow_zero else "> 0"
        kind = "a number" if allow_inf else "finite"
        raise ConfigError(f"{name} must be {kind} and {bound}, got {value!r}")
    return value


def check_open_unit(name: str, value) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {value!r}")
    return value

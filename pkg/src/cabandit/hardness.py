"""Hardness of a (user, candidate set) sequence.

``hardness(log, eta)`` is the last round ``t`` at which some user ``j`` and
some way of picking one candidate per round served to ``j`` (among rounds
``1..t``) leaves ``I + sum x x^T`` with smallest eigenvalue at most ``eta``.
It is 0 when no such round exists.

Adding a rank-one term never lowers eigenvalues, so for a fixed user the
smallest achievable eigenvalue after ``p`` of its rounds is nondecreasing
in ``p``; the search therefore reduces to one minimum per prefix length.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .base import RoundInput

__all__ = ["HardnessSizeError", "hardness_exhaustive", "hardness_greedy", "prefix_min_eigenvalues"]

MAX_EXHAUSTIVE_ROUNDS = 12
MAX_EXHAUSTIVE_CANDIDATES = 3


class HardnessSizeError(ValueError):
    """The instance is too large for exhaustive enumeration."""


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(M)[0])


def prefix_min_eigenvalues(candidate_sets: Sequence[np.ndarray], d: int, greedy: bool = False) -> np.ndarray:
    """Smallest achievable ``lambda_min`` after each prefix of ``candidate_sets``.

    Entry ``p`` covers the first ``p`` sets (entry 0 is the identity, 1.0).
    With ``greedy=True`` one candidate is fixed per step by minimising the
    next eigenvalue, which yields upper bounds on the exhaustive values.
    """
    out = np.empty(len(candidate_sets) + 1)
    out[0] = 1.0
    if greedy:
        M = np.eye(d)
        for p, C in enumerate(candidate_sets, start=1):
            options = [M + np.outer(x, x) for x in C]
            eigs = [_min_eig(A) for A in options]
            best = int(np.argmin(eigs))
            M = options[best]
            out[p] = eigs[best]
        return out

    best = np.full(len(candidate_sets) + 1, np.inf)
    best[0] = 1.0

    def walk(depth: int, M: np.ndarray) -> None:
        if depth == len(candidate_sets):
            return
        for x in candidate_sets[depth]:
            A = M + np.outer(x, x)
            lam = _min_eig(A)
            if lam < best[depth + 1]:
                best[depth + 1] = lam
            walk(depth + 1, A)

    walk(0, np.eye(d))
    return best


def _hardness(log: Sequence[RoundInput], eta: float, greedy: bool, n_users: int | None) -> int:
    if not log:
        return 0
    T = len(log)
    d = log[0].contexts.shape[1]
    users = sorted({r.user for r in log})
    hd = 0
    for j in users:
        rounds = [s for s, r in enumerate(log, start=1) if r.user == j]
        lam = prefix_min_eigenvalues([log[s - 1].contexts for s in rounds], d, greedy=greedy)
        ok = np.flatnonzero(lam <= eta)
        if ok.size == 0:
            continue
        p = int(ok.max())
        # rounds 1..t involve exactly p of j's rounds while t precedes the (p+1)-th
        t = T if p == len(rounds) else rounds[p] - 1
        hd = max(hd, t)
    # a user of the universe that is never served keeps the identity up to round T
    if n_users is not None and eta >= 1.0 and len(users) < n_users:
        hd = T
    return hd


def hardness_exhaustive(log: Sequence[RoundInput], eta: float, n_users: int | None = None) -> int:
    """Exact hardness by enumerating every per-round candidate choice.

    ``n_users`` declares the user universe; by default only users that
    appear in ``log`` are considered.

    Raises :class:`HardnessSizeError` beyond 12 rounds or 3 candidates per
    round; use :func:`hardness_greedy` there.
    """
    if len(log) > MAX_EXHAUSTIVE_ROUNDS or any(r.contexts.shape[0] > MAX_EXHAUSTIVE_CANDIDATES for r in log):
        raise HardnessSizeError(
            f"exhaustive hardness supports T <= {MAX_EXHAUSTIVE_ROUNDS} and c <= {MAX_EXHAUSTIVE_CANDIDATES}"
        )
    return _hardness(log, eta, greedy=False, n_users=n_users)


def hardness_greedy(log: Sequence[RoundInput], eta: float, n_users: int | None = None) -> int:
    """Lower bound on the hardness from greedy eigenvalue-minimising choices."""
    return _hardness(log, eta, greedy=True, n_users=n_users)

"""Synthetic clustered-user environments with ground truth.

Users are unit vectors drawn from ``m`` prototypes (user ``i`` gets
prototype ``i % m``). Candidate contexts are sampled i.i.d. and rejected
until every pair of prototypes either projects identically or at least
``gamma`` apart, so the gap condition holds for every emitted context.

``structure="block"`` splits the coordinates into blocks and lets pairs of
prototypes share their sub-vector on block 0; a context supported on that
block cannot tell the pair apart and therefore merges their clusters.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .base import RoundInput
from .exceptions import ConfigError, GenerationError

__all__ = [
    "EnvConfig",
    "TrueUserModel",
    "SyntheticEnvironment",
    "generate_env",
    "PROJECTION_TOL",
]

PROJECTION_TOL = 1e-9

STRUCTURES = ("global", "block")
NOISE_KINDS = ("truncated_gaussian", "uniform_bounded")
SAMPLERS = ("unit_ball_uniform", "one_hot")
LAYOUTS = ("simplex", "random")


@dataclass(frozen=True)
class EnvConfig:
    """Environment parameters.

    ``n_blocks`` and ``block_prob`` only matter for ``structure="block"``:
    coordinates are cut into ``n_blocks`` contiguous blocks and, with
    probability ``block_prob``, a ball-sampled context is restricted to one
    block chosen uniformly.

    ``prototype_layout`` applies to global ball environments. ``simplex``
    places the prototypes at the vertices of a randomly rotated regular
    simplex (needs ``m_prototypes <= d``), which maximises their pairwise
    distances and hence the share of contexts passing the gap filter;
    ``random`` draws independent uniform directions.
    """

    n_users: int = 30
    d: int = 10
    m_prototypes: int = 3
    structure: str = "global"
    gamma: float = 0.5
    sigma: float = 0.1
    noise_kind: str = "truncated_gaussian"
    c: int = 10
    context_sampler: str = "unit_ball_uniform"
    seed: int = 0
    max_rejections: int = 10_000
    n_blocks: int = 2
    block_prob: float = 0.5
    prototype_layout: str = "simplex"

    def __post_init__(self):
        if self.n_users < 1 or self.d < 1 or self.c < 1:
            raise ConfigError("n_users, d and c must be positive")
        if not 1 <= self.m_prototypes <= self.n_users:
            raise ConfigError(f"m_prototypes must lie in [1, n_users], got {self.m_prototypes}")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.structure not in STRUCTURES:
            raise ConfigError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError(f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}")
        if self.context_sampler not in SAMPLERS:
            raise ConfigError(f"context_sampler must be one of {SAMPLERS}, got {self.context_sampler!r}")
        if self.max_rejections < 0:
            raise ConfigError("max_rejections must be nonnegative")
        if self.structure == "block" and not 2 <= self.n_blocks <= self.d:
            raise ConfigError("block structure needs 2 <= n_blocks <= d")
        if not 0.0 <= self.block_prob <= 1.0:
            raise ConfigError("block_prob must lie in [0, 1]")
        if self.prototype_layout not in LAYOUTS:
            raise ConfigError(f"prototype_layout must be one of {LAYOUTS}, got {self.prototype_layout!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown env field(s): {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class TrueUserModel:
    vectors: np.ndarray
    prototype_of: np.ndarray
    prototypes: np.ndarray

    @property
    def n_users(self) -> int:
        return self.vectors.shape[0]


def _blocks(d: int, n_blocks: int) -> list[np.ndarray]:
    return [np.asarray(b) for b in np.array_split(np.arange(d), n_blocks)]


def _random_directions(rng, k: int, d: int) -> np.ndarray:
    v = rng.standard_normal((k, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _make_prototypes(cfg: EnvConfig, rng) -> np.ndarray:
    m, d = cfg.m_prototypes, cfg.d
    one_hot = cfg.context_sampler == "one_hot"
    if one_hot and 2.0 / np.sqrt(d) < cfg.gamma - PROJECTION_TOL:
        raise GenerationError(
            f"one-hot prototypes differ by 2/sqrt(d)={2 / np.sqrt(d):.4g} per coordinate, below gamma={cfg.gamma}"
        )

    def draw_block(k: int, width: int, norm: float) -> np.ndarray:
        if one_hot:
            return rng.choice([-1.0, 1.0], size=(k, width)) / np.sqrt(d)
        return _random_directions(rng, k, width) * norm

    if cfg.structure == "global" and not one_hot and cfg.prototype_layout == "simplex" and 2 <= m <= d:
        vertices = np.eye(m) - 1.0 / m
        vertices /= np.linalg.norm(vertices, axis=1, keepdims=True)
        Q, R = np.linalg.qr(rng.standard_normal((d, m)))
        Q *= np.sign(np.diag(R))
        return vertices @ Q.T

    for _ in range(max(cfg.max_rejections, 1)):
        if cfg.structure == "global":
            protos = draw_block(m, d, 1.0)
        else:
            protos = np.zeros((m, d))
            for bi, idx in enumerate(_blocks(d, cfg.n_blocks)):
                norm = np.sqrt(idx.size / d)
                # block 0 is shared by consecutive pairs of prototypes
                group = np.arange(m) // 2 if bi == 0 else np.arange(m)
                pool = draw_block(group.max() + 1, idx.size, norm)
                protos[:, idx] = pool[group]
        if len({p.tobytes() for p in np.round(protos, 12)}) == m:
            return protos
    raise GenerationError("could not draw distinct prototypes")


class SyntheticEnvironment:
    """Immutable ground-truth environment; all sampling takes an explicit RNG."""

    def __init__(self, cfg: EnvConfig, model: TrueUserModel):
        self.cfg = cfg
        self.model = model
        self._blocks = _blocks(cfg.d, cfg.n_blocks) if cfg.structure == "block" else []
        self._basis = None
        self._pairs = np.triu_indices(model.prototypes.shape[0], k=1)
        if cfg.context_sampler == "unit_ball_uniform" and not self._blocks:
            # the gap test only sees the component of x in the prototype span
            U, sv, _ = np.linalg.svd(model.prototypes.T, full_matrices=True)
            rank = int(np.sum(sv > 1e-12 * sv.max()))
            if rank < cfg.d:
                self._basis = (U[:, :rank], U[:, rank:])
                self._span_protos = model.prototypes @ U[:, :rank]
        # acceptance rate of the gap filter, used only to size sampling batches
        probe = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xACC]))
        self.acceptance_hint = max(self._screened(probe, 4096)[1].size / 4096, 1.0 / 4096)

    @property
    def n_users(self) -> int:
        return self.cfg.n_users

    @property
    def d(self) -> int:
        return self.cfg.d

    # contexts --------------------------------------------------------------
    def _raw_contexts(self, rng, k: int) -> np.ndarray:
        d = self.cfg.d
        if self.cfg.context_sampler == "one_hot":
            return np.eye(d)[rng.integers(d, size=k)]
        X = _random_directions(rng, k, d) * rng.random(k)[:, None] ** (1.0 / d)
        if self._blocks:
            restrict = rng.random(k) < self.cfg.block_prob
            which = rng.integers(len(self._blocks), size=k)
            for r in np.flatnonzero(restrict):
                mask = np.zeros(d, dtype=bool)
                mask[self._blocks[which[r]]] = True
                X[r, ~mask] = 0.0
        return X

    def _screened(self, rng, k: int):
        """Draw ``k`` raw contexts; return the gap-respecting ones and their positions.

        For ball sampling without blocks the draw is factorised. The
        coordinates ``z`` in the prototype span (dimension ``r``) of a uniform
        point of the d-ball are distributed as the first ``r`` coordinates of
        a uniform point on the sphere in dimension ``d + 2``, so they cost
        ``r`` normals and one chi-square. Given ``z`` the orthogonal part is
        uniform in a ball of radius ``sqrt(1 - |z|^2)`` and is only drawn for
        accepted ``z``; the result has the law of screened full draws.
        """
        if self._basis is None:
            X = self._raw_contexts(rng, k)
            valid = np.flatnonzero(self.gap_ok(X))
            return X[valid], valid
        Q, Qc = self._basis
        r, rest = Q.shape[1], Qc.shape[1]
        G = rng.standard_normal((k, r))
        sq = np.einsum("kr,kr->k", G, G)
        Z = G / np.sqrt(sq + rng.chisquare(rest + 2, size=k))[:, None]
        valid = np.flatnonzero(self._gap_ok_projections(Z @ self._span_protos.T))
        Zv = Z[valid]
        radius = np.sqrt(np.maximum(1.0 - np.einsum("kr,kr->k", Zv, Zv), 0.0))
        radius *= rng.random(valid.size) ** (1.0 / rest)
        W = _random_directions(rng, valid.size, rest) * radius[:, None]
        X = Zv @ Q.T + W @ Qc.T
        # guard against round-off at the gap boundary
        keep = self.gap_ok(X)
        return X[keep], valid[keep]

    def _gap_ok_projections(self, P: np.ndarray) -> np.ndarray:
        diff = np.abs(P[:, self._pairs[0]] - P[:, self._pairs[1]])
        return ((diff <= PROJECTION_TOL) | (diff >= self.cfg.gamma - PROJECTION_TOL)).all(axis=1)

    def gap_ok(self, X) -> np.ndarray:
        """True for contexts whose prototype projections are 0 or >= gamma apart."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._gap_ok_projections(X @ self.model.prototypes.T)

    def sample_contexts(self, rng, k: int) -> np.ndarray:
        """Draw ``k`` gap-respecting contexts.

        Raises :class:`GenerationError` when more than ``max_rejections``
        consecutive draws are rejected.
        """
        out = np.empty((k, self.cfg.d))
        filled = 0
        run = 0
        batch = int(min(65536, max(16, np.ceil(1.5 * k / self.acceptance_hint))))
        budget = self.cfg.max_rejections
        while filled < k:
            X, valid = self._screened(rng, batch)
            X, valid = X[: k - filled], valid[: k - filled]
            # consecutive rejections preceding each accepted draw
            runs = np.diff(np.concatenate([[-1], valid])) - 1
            if runs.size:
                runs[0] += run
            tail = run + batch if valid.size == 0 else batch - 1 - valid[-1]
            if np.any(runs > budget) or (filled + valid.size < k and tail > budget):
                raise GenerationError(f"gap rejection budget ({budget}) exhausted; gamma may be infeasible")
            out[filled : filled + valid.size] = X
            filled += valid.size
            run = tail
            batch = min(batch * 2, 65536)
        return out

    def sample_round(self, rng, t: int) -> RoundInput:
        user = int(rng.integers(self.cfg.n_users))
        return RoundInput(t=t, user=user, contexts=self.sample_contexts(rng, self.cfg.c))

    # payoffs ---------------------------------------------------------------
    def expected_payoff(self, user: int, x) -> float:
        return float(self.model.vectors[user] @ np.asarray(x, dtype=np.float64))

    def payoff(self, user: int, x, rng) -> float:
        """Noisy payoff in [-1, 1] with zero-mean noise symmetric around the mean."""
        mean = self.expected_payoff(user, x)
        room = max(1.0 - abs(mean), 0.0)
        sigma = self.cfg.sigma
        if sigma == 0.0 or room == 0.0:
            return mean
        if self.cfg.noise_kind == "uniform_bounded":
            half = min(sigma * np.sqrt(3.0), room)
            eps = rng.uniform(-half, half)
        else:
            while True:
                eps = rng.normal(0.0, sigma)
                if abs(eps) <= room:
                    break
        return float(np.clip(mean + eps, -1.0, 1.0))

    # ground truth ----------------------------------------------------------
    def prototype_groups(self, x) -> list[np.ndarray]:
        """Prototypes grouped by equal projection on ``x`` (tolerance 1e-9)."""
        p = self.model.prototypes @ np.asarray(x, dtype=np.float64)
        order = np.argsort(p, kind="stable")
        groups, current = [], [order[0]]
        for a, b in zip(order[:-1], order[1:]):
            if p[b] - p[a] <= PROJECTION_TOL:
                current.append(b)
            else:
                groups.append(np.array(current))
                current = [b]
        groups.append(np.array(current))
        return groups

    def partition(self, x) -> list[frozenset]:
        """User clusters induced by context ``x``."""
        proto_of = self.model.prototype_of
        out = []
        for g in self.prototype_groups(x):
            users = np.flatnonzero(np.isin(proto_of, g))
            if users.size:
                out.append(frozenset(users.tolist()))
        return out

    def true_neighborhood(self, user: int, x) -> frozenset:
        for block in self.partition(x):
            if user in block:
                return block
        raise IndexError(f"user {user} outside environment")

    def m_of(self, x) -> int:
        return len(self.partition(x))

    def inverse_neighborhood_sum(self, x) -> Fraction:
        """Exact ``sum_i 1 / |N_i(x)|`` as a fraction."""
        return sum((Fraction(1, len(block)) for block in self.partition(x) for _ in block), Fraction(0))

    def expected_clusters(self, rng=None, n_samples: int = 0) -> float:
        """``E[m(X)]`` under the (gap-filtered) context distribution.

        Exact for the one-hot sampler (uniform over admissible coordinates)
        and for the global ball sampler (ties have probability zero, so
        ``m(X)`` equals the number of users' distinct prototypes). Block
        ball environments fall back to a Monte Carlo estimate over
        ``n_samples`` draws.
        """
        cfg = self.cfg
        if cfg.context_sampler == "one_hot":
            basis = np.eye(cfg.d)
            admissible = [e for e in basis if self.gap_ok(e)[0]]
            return float(np.mean([self.m_of(e) for e in admissible]))
        if cfg.structure == "global":
            return float(np.unique(self.model.prototype_of).size)
        if rng is None or n_samples <= 0:
            raise ValueError("block environments need rng and n_samples for a Monte Carlo estimate")
        X = self.sample_contexts(rng, n_samples)
        return float(np.mean([self.m_of(x) for x in X]))

    def second_moment_min_eig(self, rng, n_samples: int = 20_000) -> float:
        """Smallest eigenvalue of the empirical ``E[X X^T]`` (a diagnostic)."""
        X = self.sample_contexts(rng, n_samples)
        return float(np.linalg.eigvalsh(X.T @ X / n_samples)[0])

    def best_index(self, user: int, X) -> int:
        return int(np.argmax(np.asarray(X) @ self.model.vectors[user]))


def generate_env(cfg: EnvConfig) -> SyntheticEnvironment:
    """Build an environment from ``cfg`` (prototype draws use ``cfg.seed``)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE17]))
    protos = _make_prototypes(cfg, rng)
    proto_of = np.arange(cfg.n_users) % cfg.m_prototypes
    model = TrueUserModel(vectors=protos[proto_of].copy(), prototype_of=proto_of, prototypes=protos)
    env = SyntheticEnvironment(cfg, model)
    # fail fast when the gap constraint is unattainable for this sampler
    env.sample_contexts(np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0DE])), 1)
    return env

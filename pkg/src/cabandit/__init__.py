"""Context-aware clustering of bandits.

Policies follow scikit-learn estimator conventions; see
:class:`cabandit.base.BasePolicy` for the round protocol.
"""

from .base import BasePolicy, ContextVector, RoundInput, RoundOutcome
from .baselines import CLUB, DynUCB, LinUCBMultiple, LinUCBSingle, RandomPolicy
from .cab import CAB, NeighborhoodEstimate
from .env import EnvConfig, SyntheticEnvironment, generate_env
from .hardness import hardness_exhaustive, hardness_greedy
from .io import ingest, load_catalog
from .linalg import CorrelationState, StateBank
from .metrics import RegretTrace, ctr_curve, regret_ratio_vs_ran, regret_step
from .replay import ReplayLog, RawEventLog, replay, synthesize_random_log, tune
from .sparse import SparseConfig, SpCAB, two_stage_ht

__version__ = "0.1.0"

__all__ = [
    "BasePolicy",
    "ContextVector",
    "RoundInput",
    "RoundOutcome",
    "CAB",
    "NeighborhoodEstimate",
    "SpCAB",
    "SparseConfig",
    "two_stage_ht",
    "LinUCBSingle",
    "LinUCBMultiple",
    "CLUB",
    "DynUCB",
    "RandomPolicy",
    "CorrelationState",
    "StateBank",
    "EnvConfig",
    "SyntheticEnvironment",
    "generate_env",
    "hardness_exhaustive",
    "hardness_greedy",
    "ingest",
    "load_catalog",
    "ReplayLog",
    "RawEventLog",
    "replay",
    "synthesize_random_log",
    "tune",
    "RegretTrace",
    "regret_step",
    "ctr_curve",
    "regret_ratio_vs_ran",
]

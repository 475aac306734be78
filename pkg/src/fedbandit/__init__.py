"""Deterministic simulator for federated linear contextual bandits.

Clients run LinUCB-style agents on local sufficient statistics and exchange
them with a central server through an asynchronous event-triggered protocol
(or a global-synchronization baseline), trading regret against communication
cost.  The harness reproduces the tradeoff curves at desk scale.
"""

from .environment import HeterogeneousEnv, HomogeneousEnv, ReplayEnv
from .harness import (
    MetricsTrace,
    RunConfig,
    config_from_mapping,
    preset,
    run_simulation,
    run_sweep,
)
from .hetero import AsyncLinUcbAm, HeteroArm
from .homogeneous import AsyncLinUcb, CentralizedLinUcb, IndependentLinUcb, UcbConfig
from .linalg import ContractViolation, NumericalError, SufficientStats
from .protocol import CommLedger, ProtocolConfig
from .sync import SyncConfig, SyncLinUcb

__all__ = [
    "AsyncLinUcb",
    "AsyncLinUcbAm",
    "CentralizedLinUcb",
    "CommLedger",
    "ContractViolation",
    "HeteroArm",
    "HeterogeneousEnv",
    "HomogeneousEnv",
    "IndependentLinUcb",
    "MetricsTrace",
    "NumericalError",
    "ProtocolConfig",
    "ReplayEnv",
    "RunConfig",
    "SufficientStats",
    "SyncConfig",
    "SyncLinUcb",
    "UcbConfig",
    "config_from_mapping",
    "preset",
    "run_simulation",
    "run_sweep",
]

__version__ = "0.1.0"

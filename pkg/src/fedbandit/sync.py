"""Global-synchronization baseline for the shared-parameter setting.

Between synchronizations every client runs plain LinUCB on its local copy.
A client that has made ``delta_t`` observations since the last round triggers
a global round when ``delta_t`` times its buffered log-determinant growth
exceeds the threshold ``D``.  A round makes every client upload its buffer
and then download the full aggregate (local statistics are *replaced*, not
incremented), costing exactly ``2N`` transfers regardless of who had data.
That unconditional 2N is what the event-triggered protocol avoids under
skewed client arrival distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .homogeneous import UcbConfig, _ScorerCache
from .linalg import ContractViolation, SufficientStats, log_det_ratio, rank1_update
from .protocol import CommLedger


@dataclass(frozen=True)
class SyncConfig:
    """Synchronization threshold; zero is disallowed (it would sync every step)."""

    threshold: float
    lam: float

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ContractViolation(
                f"sync threshold must be positive, got {self.threshold}"
            )
        if not self.lam > 0:
            raise ContractViolation(f"lam must be positive, got {self.lam}")


@dataclass
class SyncClientState:
    """Local stats, unsent buffer, and the count of observations in it."""

    local: SufficientStats
    upload_buffer: SufficientStats
    delta_t: int = 0

    @staticmethod
    def fresh(dim: int) -> "SyncClientState":
        return SyncClientState(SufficientStats.zeros(dim), SufficientStats.zeros(dim))


def check_sync(client: SyncClientState, cfg: SyncConfig) -> bool:
    """True iff ``delta_t * log(det ratio of local vs local-minus-buffer) > D``."""
    if client.delta_t == 0:
        return False
    growth = log_det_ratio(
        client.local, client.local.subtract(client.upload_buffer), cfg.lam
    )
    return client.delta_t * growth > cfg.threshold


def sync_round(
    step: int,
    clients: dict[int, SyncClientState],
    global_stats: SufficientStats,
    ledger: CommLedger,
) -> SufficientStats:
    """Collect every buffer, then hand the full aggregate back to everyone."""
    dim = global_stats.dim
    for client_id in sorted(clients):
        client = clients[client_id]
        global_stats = global_stats.add(client.upload_buffer)
        client.upload_buffer = SufficientStats.zeros(dim)
        client.delta_t = 0
        ledger.record(step, "upload", client_id, dim)
    for client_id in sorted(clients):
        clients[client_id].local = global_stats
        ledger.record(step, "download", client_id, dim)
    return global_stats


class SyncLinUcb:
    """LinUCB clients synchronized globally by the weighted determinant trigger.

    The whole population participates in every synchronization round (that is
    the 2N cost), so all ``n_clients`` states exist from the start.
    """

    def __init__(
        self, dim: int, ucb: UcbConfig, sync: SyncConfig, n_clients: int = 0
    ) -> None:
        self.dim = dim
        self.ucb = ucb
        self.sync = sync
        self.clients: dict[int, SyncClientState] = {
            client_id: SyncClientState.fresh(dim) for client_id in range(n_clients)
        }
        self.global_stats = SufficientStats.zeros(dim)
        self.ledger = CommLedger()
        self.absorbed_total = SufficientStats.zeros(dim)
        self._scorers = _ScorerCache(ucb)

    def choose(self, client_id: int, arms: np.ndarray) -> int:
        state = self.clients.setdefault(client_id, SyncClientState.fresh(self.dim))
        scores = self._scorers.get(client_id, state.local).scores(arms)
        return int(np.argmax(scores))

    def update(self, step: int, client_id: int, x: np.ndarray, y: float) -> None:
        state = self.clients[client_id]
        state.local = rank1_update(state.local, x, y)
        state.upload_buffer = rank1_update(state.upload_buffer, x, y)
        state.delta_t += 1
        self.absorbed_total = rank1_update(self.absorbed_total, x, y)
        if check_sync(state, self.sync):
            self.global_stats = sync_round(step, self.clients, self.global_stats, self.ledger)

    def client_stats(self, client_id: int) -> SufficientStats:
        return self.clients[client_id].local

    @property
    def comm_count(self) -> int:
        return self.ledger.total_count

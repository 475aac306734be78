"""Asynchronous event-triggered communication between clients and the server.

Each client keeps a local copy of the shared-parameter statistics plus an
upload buffer of updates not yet sent.  The server keeps the aggregate plus
one download buffer per client of updates not yet delivered.  A transfer
happens only when the buffered delta has materially grown the confidence
volume, measured by the regularized determinant ratio crossing a threshold.

The flow for one environment step, after the acting client has absorbed its
new observation into both its local statistics and its upload buffer:

1. If the client's determinant ratio strictly exceeds ``gamma_upload``, the
   buffer is shipped: the server aggregate and every *other* client's
   download buffer gain the delta, and the client's buffer is zeroed.
2. Only when an upload fired, the server scans all clients in ascending id
   order and delivers any download buffer whose ratio strictly exceeds
   ``gamma_download``.  (The server state cannot change otherwise, so the
   scan would be a no-op outside the upload branch.)

Every directed transfer of one ``{delta V, delta b}`` pair counts as one unit
of communication in the ledger, with the scalar payload size ``d^2 + d``
recorded alongside for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    ContractViolation,
    SufficientStats,
    log_det,
    log_det_ratio,
    mahalanobis_norm,
)


@dataclass(frozen=True)
class ProtocolConfig:
    """Trigger thresholds and the shared ridge regularization.

    Thresholds must be >= 1; ``math.inf`` disables the corresponding
    direction entirely (checked before any determinant is evaluated).
    """

    gamma_upload: float
    gamma_download: float
    lam: float

    def __post_init__(self) -> None:
        if not self.gamma_upload >= 1.0:
            raise ContractViolation(f"gamma_upload must be >= 1, got {self.gamma_upload}")
        if not self.gamma_download >= 1.0:
            raise ContractViolation(
                f"gamma_download must be >= 1, got {self.gamma_download}"
            )
        if not self.lam > 0:
            raise ContractViolation(f"lam must be positive, got {self.lam}")

    @property
    def log_gamma_upload(self) -> float:
        return math.log(self.gamma_upload) if math.isfinite(self.gamma_upload) else math.inf

    @property
    def log_gamma_download(self) -> float:
        return (
            math.log(self.gamma_download) if math.isfinite(self.gamma_download) else math.inf
        )


@dataclass
class ClientChannelState:
    """One client's view of the shared channel: local stats plus upload buffer."""

    local: SufficientStats
    upload_buffer: SufficientStats

    @staticmethod
    def fresh(dim: int) -> "ClientChannelState":
        return ClientChannelState(SufficientStats.zeros(dim), SufficientStats.zeros(dim))

    def absorb(self, delta: SufficientStats) -> None:
        """Add a new-observation delta to both the local stats and the buffer."""
        self.local = self.local.add(delta)
        self.upload_buffer = self.upload_buffer.add(delta)


@dataclass
class ServerState:
    """Aggregated statistics plus one pending-download buffer per client."""

    global_stats: SufficientStats
    download_buffers: dict[int, SufficientStats] = field(default_factory=dict)

    @staticmethod
    def fresh(dim: int) -> "ServerState":
        return ServerState(SufficientStats.zeros(dim))


@dataclass(frozen=True)
class Transfer:
    step: int
    direction: str  # "upload" | "download"
    client_id: int
    payload_params: int


@dataclass
class CommLedger:
    """Append-only record of transfers; ``total_count`` is the communication cost."""

    transfers: list[Transfer] = field(default_factory=list)

    @property
    def total_count(self) -> int:
        return len(self.transfers)

    def record(self, step: int, direction: str, client_id: int, dim: int) -> None:
        self.transfers.append(Transfer(step, direction, client_id, dim * dim + dim))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("step,direction,client_id,payload_params\n")
            for t in self.transfers:
                fh.write(f"{t.step},{t.direction},{t.client_id},{t.payload_params}\n")


def check_upload(client: ClientChannelState, cfg: ProtocolConfig) -> bool:
    """True iff the client's buffered delta crosses the upload threshold."""
    if math.isinf(cfg.gamma_upload):
        return False
    if client.upload_buffer.is_zero():
        return False
    ratio = log_det_ratio(
        client.local, client.local.subtract(client.upload_buffer), cfg.lam
    )
    return ratio > cfg.log_gamma_upload


def check_download(server: ServerState, client_id: int, cfg: ProtocolConfig) -> bool:
    """True iff the pending delta for ``client_id`` crosses the download threshold."""
    if client_id not in server.download_buffers:
        raise ContractViolation(f"client {client_id} is not registered with the server")
    if math.isinf(cfg.gamma_download):
        return False
    buffer = server.download_buffers[client_id]
    if buffer.is_zero():
        return False
    ratio = log_det_ratio(
        server.global_stats, server.global_stats.subtract(buffer), cfg.lam
    )
    return ratio > cfg.log_gamma_download


def register_client(server: ServerState, client_id: int) -> None:
    """Create the download buffer for a newly seen client.

    The buffer starts as a copy of the full current aggregate, so the
    client's first triggered download delivers everything seen so far.
    """
    if client_id in server.download_buffers:
        raise ContractViolation(f"client {client_id} is already registered")
    server.download_buffers[client_id] = server.global_stats


@dataclass(frozen=True)
class RoundOutcome:
    uploaded: bool
    downloads: tuple[int, ...]


def protocol_round(
    step: int,
    acting_client: int,
    clients: dict[int, ClientChannelState],
    server: ServerState,
    cfg: ProtocolConfig,
    ledger: CommLedger,
) -> RoundOutcome:
    """Run the upload check and, if it fires, the nested download scan."""
    client = clients[acting_client]
    if not check_upload(client, cfg):
        return RoundOutcome(False, ())

    delta = client.upload_buffer
    dim = delta.dim
    server.global_stats = server.global_stats.add(delta)
    for j in server.download_buffers:
        if j != acting_client:
            server.download_buffers[j] = server.download_buffers[j].add(delta)
    client.upload_buffer = SufficientStats.zeros(dim)
    ledger.record(step, "upload", acting_client, dim)

    delivered: list[int] = []
    for j in _triggered_downloads(clients, server, cfg):
        clients[j].local = clients[j].local.add(server.download_buffers[j])
        server.download_buffers[j] = SufficientStats.zeros(dim)
        ledger.record(step, "download", j, dim)
        delivered.append(j)
    return RoundOutcome(True, tuple(delivered))


def _triggered_downloads(clients, server: ServerState, cfg: ProtocolConfig) -> list[int]:
    """Clients whose download event fires, in ascending id order.

    Equivalent to ``check_download`` per client, but the denominators share
    one stacked factorization and the aggregate's log-det is computed once.
    """
    if math.isinf(cfg.gamma_download):
        return []
    candidates = [
        j for j in sorted(clients) if not server.download_buffers[j].is_zero()
    ]
    if not candidates:
        return []
    dim = server.global_stats.dim
    if dim == 0:
        return []
    lam_eye = cfg.lam * np.eye(dim)
    remainders = np.stack(
        [server.global_stats.v - server.download_buffers[j].v for j in candidates]
    )
    chols = np.linalg.cholesky(remainders + lam_eye)
    log_dets = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
    aggregate_log_det = log_det(server.global_stats, cfg.lam)
    threshold = cfg.log_gamma_download
    return [
        j
        for j, den in zip(candidates, log_dets)
        if aggregate_log_det - den > threshold
    ]


def compute_gamma(
    client_stats: SufficientStats,
    pooled_stats: SufficientStats,
    lam: float,
    x,
) -> float:
    """Staleness of a client's confidence width in the direction of ``x``.

    Ratio of the client's regularized quadratic form to the pooled one;
    equals 1 when the client is fully synchronized.  Diagnostic only, never
    in the decision path.
    """
    local = mahalanobis_norm(client_stats, lam, x)
    pooled = mahalanobis_norm(pooled_stats, lam, x)
    return (local * local) / (pooled * pooled)

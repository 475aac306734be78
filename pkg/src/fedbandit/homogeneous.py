"""LinUCB arm selection for the shared-parameter setting.

Three interchangeable systems drive the same selection rule:

* :class:`AsyncLinUcb` — one local model per client, synchronized through the
  event-triggered protocol.
* :class:`CentralizedLinUcb` — a single pooled model, the equivalence oracle
  for thresholds of 1 (every-step synchronization).
* :class:`IndependentLinUcb` — one isolated model per client, the equivalence
  oracle for infinite thresholds (communication disabled).

The centralized and independent variants are deliberately separate code
paths, not threshold special cases, so the equivalence tests compare two
genuinely different implementations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .linalg import (
    ContractViolation,
    NumericalError,
    SufficientStats,
    rank1_update,
    shift_diagonal,
)
from .protocol import (
    ClientChannelState,
    CommLedger,
    ProtocolConfig,
    ServerState,
    protocol_round,
    register_client,
)


@dataclass(frozen=True)
class UcbConfig:
    """Ridge regularization, noise scale, and confidence level."""

    lam: float
    sigma: float
    delta: float

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ContractViolation(f"lam must be positive, got {self.lam}")
        if not self.sigma > 0:
            raise ContractViolation(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.delta < 1:
            raise ContractViolation(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class _Scorer:
    """Cached factorization of ``V + lam*I`` with the derived quantities.

    Rebuilding costs one Cholesky per statistics change; arm scoring then
    reuses the factor for every candidate, which is the hot path.
    """

    stats: SufficientStats
    chol: np.ndarray  # lower factor of V + lam*I
    theta: np.ndarray
    width: float

    def scores(self, arms: np.ndarray) -> np.ndarray:
        if self.stats.dim == 0:
            return np.zeros(arms.shape[0])
        z = solve_triangular(self.chol, arms.T, lower=True)
        norms = np.sqrt(np.einsum("ij,ij->j", z, z))
        return arms @ self.theta + self.width * norms


def _width_from_logdet(
    logdet_reg: float, dim: int, cfg: UcbConfig, noise_scale: float
) -> float:
    log_ratio = logdet_reg - dim * math.log(cfg.lam)
    return (
        noise_scale * math.sqrt(log_ratio + 2.0 * math.log(1.0 / cfg.delta))
        + math.sqrt(cfg.lam)
    )


def build_scorer(
    stats: SufficientStats, cfg: UcbConfig, noise_scale: float | None = None
) -> _Scorer:
    """Factor the regularized design matrix once and derive estimate and width.

    ``noise_scale`` overrides the multiplier in front of the log-det term
    (the heterogeneous agents inflate it to absorb their partial-reward
    estimation error); it defaults to ``cfg.sigma``.
    """
    if noise_scale is None:
        noise_scale = cfg.sigma
    if stats.dim == 0:
        width = _width_from_logdet(0.0, 0, cfg, noise_scale)
        return _Scorer(stats, np.zeros((0, 0)), np.zeros(0), width)
    try:
        chol = np.linalg.cholesky(shift_diagonal(stats.v, cfg.lam))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"scoring factorization failed: {exc}") from exc
    theta = cho_solve((chol, True), stats.b)
    logdet = float(2.0 * np.sum(np.log(np.diag(chol))))
    width = _width_from_logdet(logdet, stats.dim, cfg, noise_scale)
    return _Scorer(stats, chol, theta, width)


def confidence_width(stats: SufficientStats, cfg: UcbConfig) -> float:
    """Radius of the confidence ellipsoid for the ridge estimate.

    ``sigma * sqrt(log det(V+lam I) - log det(lam I) + 2 log(1/delta)) + sqrt(lam)``;
    strictly positive and non-decreasing as observations accumulate.
    """
    return build_scorer(stats, cfg).width


def select_arm(
    stats: SufficientStats, cfg: UcbConfig, arms: np.ndarray
) -> tuple[int, np.ndarray]:
    """Pick the arm maximizing estimate plus width-scaled uncertainty.

    Ties break to the lowest index (``argmax`` keeps the first maximum),
    which makes runs reproducible bit for bit.
    """
    arms = np.atleast_2d(np.asarray(arms, dtype=float))
    if arms.shape[0] == 0:
        raise ContractViolation("arm set is empty")
    scores = build_scorer(stats, cfg).scores(arms)
    idx = int(np.argmax(scores))
    return idx, arms[idx]


class _ScorerCache:
    """Per-client scorer reuse keyed on statistics identity.

    Statistics are immutable values replaced on every change, so an ``is``
    check is a complete invalidation signal.
    """

    def __init__(self, cfg: UcbConfig, noise_scale: float | None = None) -> None:
        self._cfg = cfg
        self._noise_scale = noise_scale
        self._cache: dict[int, _Scorer] = {}

    def get(self, key: int, stats: SufficientStats) -> _Scorer:
        scorer = self._cache.get(key)
        if scorer is None or scorer.stats is not stats:
            scorer = build_scorer(stats, self._cfg, self._noise_scale)
            self._cache[key] = scorer
        return scorer


class AsyncLinUcb:
    """Event-triggered federated LinUCB over one shared parameter vector.

    All ``n_clients`` participants are registered up front (their download
    buffers start empty and accumulate every subsequent upload), so a client
    whose buffer crossed the threshold is already synchronized when it first
    acts.  Clients beyond the initial population may still join later via
    :meth:`choose`, receiving a buffer preloaded with the current aggregate.
    """

    def __init__(
        self, dim: int, ucb: UcbConfig, proto: ProtocolConfig, n_clients: int = 0
    ) -> None:
        self.dim = dim
        self.ucb = ucb
        self.proto = proto
        self.server = ServerState.fresh(dim)
        self.clients: dict[int, ClientChannelState] = {}
        self.ledger = CommLedger()
        self.absorbed_total = SufficientStats.zeros(dim)
        self._scorers = _ScorerCache(ucb)
        for client_id in range(n_clients):
            self._ensure_registered(client_id)

    def _ensure_registered(self, client_id: int) -> ClientChannelState:
        state = self.clients.get(client_id)
        if state is None:
            state = ClientChannelState.fresh(self.dim)
            self.clients[client_id] = state
            register_client(self.server, client_id)
        return state

    def choose(self, client_id: int, arms: np.ndarray) -> int:
        state = self._ensure_registered(client_id)
        scores = self._scorers.get(client_id, state.local).scores(arms)
        return int(np.argmax(scores))

    def update(self, step: int, client_id: int, x: np.ndarray, y: float) -> None:
        state = self.clients[client_id]
        state.local = rank1_update(state.local, x, y)
        state.upload_buffer = rank1_update(state.upload_buffer, x, y)
        self.absorbed_total = rank1_update(self.absorbed_total, x, y)
        protocol_round(step, client_id, self.clients, self.server, self.proto, self.ledger)

    def client_stats(self, client_id: int) -> SufficientStats:
        return self.clients[client_id].local

    @property
    def comm_count(self) -> int:
        return self.ledger.total_count


class CentralizedLinUcb:
    """Single pooled LinUCB model, as if all data lived on one server."""

    def __init__(self, dim: int, ucb: UcbConfig) -> None:
        self.dim = dim
        self.ucb = ucb
        self.stats = SufficientStats.zeros(dim)
        self._scorers = _ScorerCache(ucb)

    def choose(self, client_id: int, arms: np.ndarray) -> int:
        scores = self._scorers.get(0, self.stats).scores(arms)
        return int(np.argmax(scores))

    def update(self, step: int, client_id: int, x: np.ndarray, y: float) -> None:
        self.stats = rank1_update(self.stats, x, y)

    def client_stats(self, client_id: int) -> SufficientStats:
        return self.stats

    @property
    def comm_count(self) -> int:
        return 0


class IndependentLinUcb:
    """One isolated LinUCB model per client; nothing is ever shared."""

    def __init__(self, dim: int, ucb: UcbConfig) -> None:
        self.dim = dim
        self.ucb = ucb
        self.stats: dict[int, SufficientStats] = {}
        self._scorers = _ScorerCache(ucb)

    def choose(self, client_id: int, arms: np.ndarray) -> int:
        stats = self.stats.setdefault(client_id, SufficientStats.zeros(self.dim))
        scores = self._scorers.get(client_id, stats).scores(arms)
        return int(np.argmax(scores))

    def update(self, step: int, client_id: int, x: np.ndarray, y: float) -> None:
        self.stats[client_id] = rank1_update(self.stats[client_id], x, y)

    def client_stats(self, client_id: int) -> SufficientStats:
        return self.stats[client_id]

    @property
    def comm_count(self) -> int:
        return 0

"""Per-client global/local parameter decomposition with alternating updates.

Each client's reward splits into a globally shared block and a private local
block.  Only the global block's statistics ever cross the network (through
the same event-triggered protocol as the shared-parameter agents); the local
block and all raw observations stay on the client.

Because the two blocks are only observed through their sum, the client keeps
running estimates of both and refines them by alternating projected solves:
subtract the current estimate of one block's contribution from the observed
reward to get a partial reward for the other block, solve, swap.  The
statistics then absorb the partial rewards, not the raw ones.

A fresh client cannot start alternating from nothing: it first runs plain
LinUCB on the concatenated features and logs raw observations until its
design matrix is full rank (or its global-channel copy became full rank via
downloads), then seeds the alternation from the global block of the
unregularized least-squares fit and replays the whole log through a batch
alternation before entering the running phase.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .homogeneous import UcbConfig, _ScorerCache, build_scorer
from .linalg import (
    ContractViolation,
    SufficientStats,
    project_ball,
    rank1_update,
)
from .protocol import (
    ClientChannelState,
    CommLedger,
    ProtocolConfig,
    ServerState,
    protocol_round,
    register_client,
)

#: Tiny ridge standing in for the generalized inverse in alternation solves;
#: the unregularized matrix is singular until enough data accumulates.
DEFAULT_EPS = 1e-8

#: Smallest eigenvalue above which a design matrix counts as full rank.
DEFAULT_RANK_TOL = 1e-6


class AmPhase(enum.Enum):
    BOOTSTRAP = "bootstrap"
    RUNNING = "running"


@dataclass(frozen=True)
class HeteroArm:
    """One action's features, split into the shared and the private block."""

    global_part: np.ndarray
    local_part: np.ndarray


@dataclass
class HeteroClientState:
    """Everything one heterogeneous client owns.

    ``channel`` holds the shared-block statistics (these are what the
    protocol synchronizes); ``local_stats`` holds the private block and is
    never communicated.  While bootstrapping, raw observations accumulate in
    the bootstrap log and ``flat_stats`` drives plain LinUCB selection over
    the concatenated features; both are discarded at initialization.
    """

    channel: ClientChannelState
    local_stats: SufficientStats
    theta_g: np.ndarray
    theta_l: np.ndarray
    phase: AmPhase = AmPhase.BOOTSTRAP
    flat_stats: SufficientStats | None = None
    boot_global: list[np.ndarray] = field(default_factory=list)
    boot_local: list[np.ndarray] = field(default_factory=list)
    boot_rewards: list[float] = field(default_factory=list)
    interactions: int = 0
    bootstrap_steps: int = 0

    @staticmethod
    def fresh(
        d_g: int, d_l: int, channel: ClientChannelState | None = None
    ) -> "HeteroClientState":
        return HeteroClientState(
            channel=channel if channel is not None else ClientChannelState.fresh(d_g),
            local_stats=SufficientStats.zeros(d_l),
            theta_g=np.zeros(d_g),
            theta_l=np.zeros(d_l),
            flat_stats=SufficientStats.zeros(d_g + d_l),
        )

    @property
    def d_g(self) -> int:
        return self.theta_g.shape[0]

    @property
    def d_l(self) -> int:
        return self.theta_l.shape[0]


def _solve_ridged(v: np.ndarray, rhs: np.ndarray, eps: float) -> np.ndarray:
    if rhs.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.solve(v + eps * np.eye(rhs.shape[0]), rhs)


def am_update(
    client: HeteroClientState,
    x_g: np.ndarray,
    x_l: np.ndarray,
    y: float,
    *,
    eps: float = DEFAULT_EPS,
    n_alternations: int = 1,
) -> tuple[float, float]:
    """Alternate the two projected block solves on the new observation.

    Must be called before the statistics absorb the observation.  Each pass
    recomputes the partial rewards from the latest estimates: local solve
    first, then global.  Returns the partial rewards computed from the final
    estimates, ready for absorption.
    """
    if client.phase is not AmPhase.RUNNING:
        raise ContractViolation("alternating update called while bootstrapping")
    x_g = np.asarray(x_g, dtype=float)
    x_l = np.asarray(x_l, dtype=float)
    v_l = client.local_stats.v + np.outer(x_l, x_l)
    v_g = client.channel.local.v + np.outer(x_g, x_g)
    theta_g = client.theta_g
    theta_l = client.theta_l
    for _ in range(n_alternations):
        y_l = y - float(x_g @ theta_g)
        theta_l = project_ball(
            _solve_ridged(v_l, client.local_stats.b + x_l * y_l, eps), 1.0
        )
        y_g = y - float(x_l @ theta_l)
        theta_g = project_ball(
            _solve_ridged(v_g, client.channel.local.b + x_g * y_g, eps), 1.0
        )
    client.theta_g = theta_g
    client.theta_l = theta_l
    return y - float(x_l @ theta_l), y - float(x_g @ theta_g)


@dataclass(frozen=True)
class AmOracleResult:
    theta_g: np.ndarray
    theta_locals: dict[int, np.ndarray]
    converged: bool
    iterations: int


def centralized_am_oracle(
    observations,
    d_g: int,
    *,
    eps: float = DEFAULT_EPS,
    tol: float = 1e-8,
    max_iter: int = 1000,
    theta_g_init: np.ndarray | None = None,
) -> AmOracleResult:
    """Batch alternation over a complete raw log, iterated to a fixed point.

    ``observations`` is a sequence of ``(client_id, x_g, x_l, y)``.  This is
    the reference the online agents are tested against; it requires the raw
    data and therefore never runs inside an agent after bootstrap.
    """
    obs = [(c, np.asarray(g, float), np.asarray(l, float), float(y)) for c, g, l, y in observations]
    theta_g = (
        np.zeros(d_g) if theta_g_init is None else project_ball(np.asarray(theta_g_init, float), 1.0)
    )
    by_client: dict[int, list[int]] = {}
    for idx, (cid, _, _, _) in enumerate(obs):
        by_client.setdefault(cid, []).append(idx)
    x_g_all = np.array([o[1] for o in obs]).reshape(len(obs), d_g)
    y_all = np.array([o[3] for o in obs])
    blocks = {
        cid: (
            np.array([obs[i][2] for i in rows]),
            x_g_all[rows],
            y_all[rows],
        )
        for cid, rows in by_client.items()
    }
    theta_locals = {cid: np.zeros(xl.shape[1]) for cid, (xl, _, _) in blocks.items()}
    gram_g = x_g_all.T @ x_g_all
    grams_l = {cid: xl.T @ xl for cid, (xl, _, _) in blocks.items()}

    converged = len(obs) == 0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        move = 0.0
        for cid in sorted(blocks):
            xl, xg, yv = blocks[cid]
            partial = yv - xg @ theta_g
            new_l = project_ball(_solve_ridged(grams_l[cid], xl.T @ partial, eps), 1.0)
            move = max(move, float(np.linalg.norm(new_l - theta_locals[cid])))
            theta_locals[cid] = new_l
        rhs = np.zeros(d_g)
        for cid in sorted(blocks):
            xl, xg, yv = blocks[cid]
            rhs += xg.T @ (yv - xl @ theta_locals[cid])
        new_g = project_ball(_solve_ridged(gram_g, rhs, eps), 1.0)
        move = max(move, float(np.linalg.norm(new_g - theta_g)))
        theta_g = new_g
        if move < tol:
            converged = True
            break
    if len(obs) == 0:
        iterations = 0
    return AmOracleResult(theta_g, theta_locals, converged, iterations)


def _min_eigenvalue(m: np.ndarray) -> float:
    if m.shape[0] == 0:
        return np.inf
    return float(np.linalg.eigvalsh(m)[0])


def bootstrap_check_and_init(
    client: HeteroClientState,
    *,
    rank_tol: float = DEFAULT_RANK_TOL,
    eps: float = DEFAULT_EPS,
    am_tol: float = 1e-8,
    am_max_iter: int = 1000,
) -> bool:
    """Leave the bootstrap phase once an unbiased global seed is available.

    Fires when the concatenated-feature design matrix over the bootstrap log
    is full rank, or when the global-channel copy became full rank through
    downloads.  Seeds the alternation with the global block of the
    unregularized least-squares fit, replays the log through the batch
    alternation, and loads the resulting batch statistics into the channel
    (local and upload buffer), so the whole bootstrap contribution ships in
    one upload-sized delta.
    """
    if client.phase is AmPhase.RUNNING:
        raise ContractViolation("client already initialized")
    local_full_rank = _min_eigenvalue(client.flat_stats.v) > rank_tol
    channel_full_rank = _min_eigenvalue(client.channel.local.v) > rank_tol
    if not (local_full_rank or channel_full_rank):
        return False

    x_g = np.array(client.boot_global).reshape(len(client.boot_global), client.d_g)
    x_l = np.array(client.boot_local).reshape(len(client.boot_local), client.d_l)
    y = np.array(client.boot_rewards)
    flat = np.hstack([x_g, x_l])
    theta_flat, *_ = np.linalg.lstsq(flat, y, rcond=None)
    seed = theta_flat[: client.d_g]

    log = [(0, x_g[i], x_l[i], y[i]) for i in range(len(y))]
    result = centralized_am_oracle(
        log, client.d_g, eps=eps, tol=am_tol, max_iter=am_max_iter, theta_g_init=seed
    )
    client.theta_g = result.theta_g
    client.theta_l = result.theta_locals[0]

    partial_g = y - x_l @ client.theta_l
    partial_l = y - x_g @ client.theta_g
    batch_g = SufficientStats.from_observations(x_g, partial_g)
    client.channel.local = client.channel.local.add(batch_g)
    client.channel.upload_buffer = client.channel.upload_buffer.add(batch_g)
    client.local_stats = SufficientStats.from_observations(x_l, partial_l)

    client.boot_global.clear()
    client.boot_local.clear()
    client.boot_rewards.clear()
    client.flat_stats = None
    client.phase = AmPhase.RUNNING
    return True


def select_arm_hetero(
    client: HeteroClientState,
    cfg: UcbConfig,
    arms_global: np.ndarray,
    arms_local: np.ndarray,
) -> int:
    """Maximize the sum of the two blocks' optimistic scores.

    Each block scores with its own ridge estimate and width; the widths use
    a noise scale of ``sigma + 2`` because the absorbed partial rewards carry
    the other block's estimation error on top of the observation noise.
    Ties break to the lowest index.
    """
    if client.phase is not AmPhase.RUNNING:
        raise ContractViolation("two-term selection requires an initialized client")
    arms_global = np.atleast_2d(np.asarray(arms_global, dtype=float))
    arms_local = np.atleast_2d(np.asarray(arms_local, dtype=float))
    if arms_global.shape[0] == 0:
        raise ContractViolation("arm set is empty")
    inflated = cfg.sigma + 2.0
    scores = build_scorer(client.channel.local, cfg, inflated).scores(arms_global)
    scores = scores + build_scorer(client.local_stats, cfg, inflated).scores(arms_local)
    return int(np.argmax(scores))


class AsyncLinUcbAm:
    """Federated agents with a shared block and per-client private blocks.

    The shared-block channel runs the same event-triggered protocol as the
    fully shared setting; the private blocks never communicate.  Per-client
    local dimensions are inferred from the first arm set a client sees, so
    clients may have different private dimensions.
    """

    def __init__(
        self,
        d_g: int,
        ucb: UcbConfig,
        proto: ProtocolConfig,
        n_clients: int = 0,
        *,
        eps: float = DEFAULT_EPS,
        rank_tol: float = DEFAULT_RANK_TOL,
        n_alternations: int = 1,
    ) -> None:
        self.d_g = d_g
        self.ucb = ucb
        self.proto = proto
        self.eps = eps
        self.rank_tol = rank_tol
        self.n_alternations = n_alternations
        self.server = ServerState.fresh(d_g)
        self.states: dict[int, HeteroClientState] = {}
        self.channels: dict[int, ClientChannelState] = {}
        self.ledger = CommLedger()
        self.absorbed_total = SufficientStats.zeros(d_g)
        self._flat_scorers = _ScorerCache(ucb)
        # Channels for the whole population exist up front (the download loop
        # scans all of them); private-block state waits for the first arm set,
        # which reveals each client's local dimension.
        for client_id in range(n_clients):
            self.channels[client_id] = ClientChannelState.fresh(d_g)
            register_client(self.server, client_id)

    def _ensure_registered(self, client_id: int, d_l: int) -> HeteroClientState:
        state = self.states.get(client_id)
        if state is None:
            channel = self.channels.get(client_id)
            if channel is None:
                channel = ClientChannelState.fresh(self.d_g)
                self.channels[client_id] = channel
                register_client(self.server, client_id)
            state = HeteroClientState.fresh(self.d_g, d_l, channel)
            self.states[client_id] = state
        return state

    def choose(self, client_id: int, arms_global: np.ndarray, arms_local: np.ndarray) -> int:
        arms_global = np.atleast_2d(arms_global)
        arms_local = np.atleast_2d(arms_local)
        state = self._ensure_registered(client_id, arms_local.shape[1])
        if state.phase is AmPhase.BOOTSTRAP:
            flat_arms = np.hstack([arms_global, arms_local])
            scores = self._flat_scorers.get(client_id, state.flat_stats).scores(flat_arms)
            return int(np.argmax(scores))
        return select_arm_hetero(state, self.ucb, arms_global, arms_local)

    def update(
        self,
        step: int,
        client_id: int,
        x_g: np.ndarray,
        x_l: np.ndarray,
        y: float,
    ) -> None:
        state = self.states[client_id]
        state.interactions += 1
        if state.phase is AmPhase.BOOTSTRAP:
            state.bootstrap_steps += 1
            state.boot_global.append(np.asarray(x_g, dtype=float))
            state.boot_local.append(np.asarray(x_l, dtype=float))
            state.boot_rewards.append(float(y))
            state.flat_stats = rank1_update(
                state.flat_stats, np.concatenate([x_g, x_l]), y
            )
            if bootstrap_check_and_init(state, rank_tol=self.rank_tol, eps=self.eps):
                # The buffer cannot gain anything while bootstrapping, so right
                # after initialization it holds exactly the bootstrap batch.
                self.absorbed_total = self.absorbed_total.add(state.channel.upload_buffer)
        else:
            y_g, y_l = am_update(
                state, x_g, x_l, y, eps=self.eps, n_alternations=self.n_alternations
            )
            state.channel.local = rank1_update(state.channel.local, x_g, y_g)
            state.channel.upload_buffer = rank1_update(state.channel.upload_buffer, x_g, y_g)
            state.local_stats = rank1_update(state.local_stats, x_l, y_l)
            self.absorbed_total = rank1_update(self.absorbed_total, x_g, y_g)
        protocol_round(step, client_id, self.channels, self.server, self.proto, self.ledger)

    @property
    def comm_count(self) -> int:
        return self.ledger.total_count

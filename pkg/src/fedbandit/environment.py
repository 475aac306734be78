"""Reward-generating environments and ground-truth regret.

Synthetic environments draw, for every step ``t``: the acting client, a set
of ``K`` candidate contexts from the unit ball, and the reward noise.  All
draws come from a generator derived from ``(seed, t)``, so the environment
sequence is a pure function of the seed — it can be replayed, accessed out
of order, and is identical across algorithms, which is what makes arm-for-arm
equivalence tests meaningful.

A replay environment substitutes logged interactions (every arm's realized
reward is known, as with offline recommendation logs), in which case the
harness accumulates reward instead of regret.

Context sampling is uniform on the unit ball, whose second-moment matrix is
``I / (d + 2)``; that strictly positive floor is what the regularity
diagnostics report.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .linalg import ContractViolation

_TRUTH_TAG = 1
_ARRIVAL_TAG = 2
_ROUND_TAG = 3


class ReplayFormatError(ValueError):
    """A replay file row violates the documented schema."""


class ReplayExhausted(Exception):
    """The replay log has no further rounds."""


def ball_second_moment_floor(dim: int) -> float:
    """Smallest eigenvalue of the unit-ball context covariance, ``1/(dim+2)``."""
    return 1.0 / (dim + 2)


def sample_unit_ball(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Draw ``n`` points uniformly from the unit L2 ball in ``dim`` dimensions."""
    if dim == 0:
        return np.zeros((n, 0))
    gauss = rng.standard_normal((n, dim))
    norms = np.linalg.norm(gauss, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = rng.random(n) ** (1.0 / dim)
    return gauss / norms * radii[:, None]


def arrival_weights(spec: str, n_clients: int, seed: int) -> np.ndarray:
    """Resolve an arrival distribution spec into a strictly positive simplex point.

    Accepted forms: ``uniform``, ``dirichlet:<alpha>`` (weights drawn once,
    fixed by the seed), and ``explicit:<path>`` (whitespace-separated floats,
    one weight per client).
    """
    if spec == "uniform":
        return np.full(n_clients, 1.0 / n_clients)
    if spec.startswith("dirichlet:"):
        alpha = float(spec.split(":", 1)[1])
        if alpha <= 0:
            raise ContractViolation(f"dirichlet alpha must be positive, got {alpha}")
        rng = np.random.default_rng([seed, _ARRIVAL_TAG])
        weights = rng.dirichlet(np.full(n_clients, alpha))
        # Dirichlet mass can underflow to zero for tiny alpha; keep it interior.
        weights = np.maximum(weights, 1e-12)
        return weights / weights.sum()
    if spec.startswith("explicit:"):
        path = spec.split(":", 1)[1]
        with open(path, "r", encoding="utf-8") as fh:
            weights = np.array([float(tok) for tok in fh.read().split()])
        return validate_weights(weights, n_clients)
    raise ContractViolation(f"unknown arrival spec: {spec!r}")


def validate_weights(weights: np.ndarray, n_clients: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_clients,):
        raise ContractViolation(
            f"expected {n_clients} arrival weights, got shape {weights.shape}"
        )
    if not np.all(weights > 0):
        raise ContractViolation("arrival weights must all be strictly positive")
    if abs(float(weights.sum()) - 1.0) > 1e-12:
        raise ContractViolation(f"arrival weights sum to {weights.sum()}, not 1")
    return weights


@dataclass(frozen=True)
class Round:
    """One step's environment draw: who acts, the candidate arms, the noise."""

    t: int
    client_id: int
    arms: np.ndarray  # (K, d) — concatenated features in heterogeneous mode
    noise: float
    arms_global: np.ndarray | None = None
    arms_local: np.ndarray | None = None
    arm_rewards: np.ndarray | None = None  # replay mode only


def _noise_draw(rng: np.random.Generator, sigma: float, kind: str) -> float:
    if sigma == 0:
        return 0.0
    if kind == "gaussian":
        return float(sigma * rng.standard_normal())
    if kind == "uniform":
        # Same standard deviation as the Gaussian option.
        half_width = sigma * np.sqrt(3.0)
        return float(rng.uniform(-half_width, half_width))
    raise ContractViolation(f"unknown noise kind: {kind!r}")


class HomogeneousEnv:
    """All clients share one reward vector drawn uniformly on the unit sphere."""

    scores_reward = False
    heterogeneous = False

    def __init__(
        self,
        n_clients: int,
        n_arms: int,
        dim: int,
        sigma: float,
        seed: int,
        arrival: str = "uniform",
        noise_kind: str = "gaussian",
    ) -> None:
        if n_clients < 1 or n_arms < 1 or dim < 1:
            raise ContractViolation("n_clients, n_arms and dim must all be >= 1")
        self.n_clients = n_clients
        self.n_arms = n_arms
        self.dim = dim
        self.sigma = sigma
        self.seed = seed
        self.noise_kind = noise_kind
        self.weights = arrival_weights(arrival, n_clients, seed)
        self._cum_weights = np.cumsum(self.weights)
        truth_rng = np.random.default_rng([seed, _TRUTH_TAG])
        direction = truth_rng.standard_normal(dim)
        self.theta = direction / np.linalg.norm(direction)

    def round(self, t: int) -> Round:
        rng = np.random.default_rng([self.seed, _ROUND_TAG, t])
        client = int(np.searchsorted(self._cum_weights, rng.random()))
        arms = sample_unit_ball(rng, self.n_arms, self.dim)
        return Round(t, client, arms, _noise_draw(rng, self.sigma, self.noise_kind))

    def mean_rewards(self, rnd: Round) -> np.ndarray:
        return rnd.arms @ self.theta

    def realized_reward(self, rnd: Round, idx: int) -> float:
        return float(rnd.arms[idx] @ self.theta) + rnd.noise

    def regret(self, rnd: Round, idx: int) -> float:
        means = self.mean_rewards(rnd)
        return float(np.max(means) - means[idx])


class HeterogeneousEnv:
    """A shared reward block plus one private block per client.

    The shared direction and every client's private direction sit on their
    unit spheres.  Arms are drawn uniformly from the unit ball of the
    concatenated dimension and split into the two blocks, so the reward-gap
    geometry does not depend on where the split falls; each block's norm is
    at most 1 by construction.  Clients may have different private
    dimensions.
    """

    scores_reward = False
    heterogeneous = True

    def __init__(
        self,
        n_clients: int,
        n_arms: int,
        d_global: int,
        d_local,
        sigma: float,
        seed: int,
        arrival: str = "uniform",
        noise_kind: str = "gaussian",
    ) -> None:
        if n_clients < 1 or n_arms < 1:
            raise ContractViolation("n_clients and n_arms must be >= 1")
        local_dims = (
            [int(d_local)] * n_clients if np.isscalar(d_local) else [int(d) for d in d_local]
        )
        if len(local_dims) != n_clients:
            raise ContractViolation(
                f"expected {n_clients} local dims, got {len(local_dims)}"
            )
        if d_global < 0 or any(d < 0 for d in local_dims):
            raise ContractViolation("dimensions must be non-negative")
        if d_global + min(local_dims) < 1:
            raise ContractViolation("at least one feature block must be non-empty")
        self.n_clients = n_clients
        self.n_arms = n_arms
        self.d_global = d_global
        self.local_dims = local_dims
        self.sigma = sigma
        self.seed = seed
        self.noise_kind = noise_kind
        self.weights = arrival_weights(arrival, n_clients, seed)
        self._cum_weights = np.cumsum(self.weights)
        truth_rng = np.random.default_rng([seed, _TRUTH_TAG])
        self.theta_global = _unit_sphere(truth_rng, d_global)
        self.theta_local = [_unit_sphere(truth_rng, d) for d in local_dims]

    def round(self, t: int) -> Round:
        rng = np.random.default_rng([self.seed, _ROUND_TAG, t])
        client = int(np.searchsorted(self._cum_weights, rng.random()))
        arms = sample_unit_ball(rng, self.n_arms, self.d_global + self.local_dims[client])
        noise = _noise_draw(rng, self.sigma, self.noise_kind)
        return Round(
            t,
            client,
            arms,
            noise,
            arms_global=arms[:, : self.d_global],
            arms_local=arms[:, self.d_global :],
        )

    def mean_rewards(self, rnd: Round) -> np.ndarray:
        return rnd.arms_global @ self.theta_global + rnd.arms_local @ self.theta_local[
            rnd.client_id
        ]

    def realized_reward(self, rnd: Round, idx: int) -> float:
        return float(self.mean_rewards(rnd)[idx]) + rnd.noise

    def regret(self, rnd: Round, idx: int) -> float:
        means = self.mean_rewards(rnd)
        return float(np.max(means) - means[idx])


def _unit_sphere(rng: np.random.Generator, dim: int) -> np.ndarray:
    if dim == 0:
        return np.zeros(0)
    direction = rng.standard_normal(dim)
    return direction / np.linalg.norm(direction)


REPLAY_FIXED_COLUMNS = ["t", "client_id", "arm_index", "reward"]


class ReplayEnv:
    """Logged interactions: each round carries every arm's realized reward.

    File schema (headered CSV): ``t, client_id, arm_index, reward, f_1..f_d``
    with one row per arm and ``K`` consecutive rows per round.  The harness
    accumulates realized reward (there is no ground truth to take regret
    against).  In heterogeneous mode both blocks see the same features.
    """

    scores_reward = True

    def __init__(self, path: str, heterogeneous: bool = False) -> None:
        self.path = path
        self.heterogeneous = heterogeneous
        self.rounds: list[Round] = []
        self._load(path)

    @property
    def horizon(self) -> int:
        return len(self.rounds)

    def _load(self, path: str) -> None:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ReplayFormatError(f"{path}: empty file") from None
            if header[: len(REPLAY_FIXED_COLUMNS)] != REPLAY_FIXED_COLUMNS:
                raise ReplayFormatError(
                    f"{path}: header must start with {','.join(REPLAY_FIXED_COLUMNS)}"
                )
            dim = len(header) - len(REPLAY_FIXED_COLUMNS)
            if dim < 1:
                raise ReplayFormatError(f"{path}: no feature columns in header")
            pending: list[tuple[int, int, int, float, np.ndarray]] = []
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise ReplayFormatError(
                        f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                    )
                try:
                    t = int(row[0])
                    client = int(row[1])
                    arm_index = int(row[2])
                    reward = float(row[3])
                    feats = np.array([float(v) for v in row[4:]])
                except ValueError as exc:
                    raise ReplayFormatError(f"{path}:{line_no}: {exc}") from None
                if pending and pending[0][0] != t:
                    self._close_round(pending, path, line_no - 1)
                    pending = []
                pending.append((t, client, arm_index, reward, feats))
            if pending:
                self._close_round(pending, path, line_no)

    def _close_round(self, rows, path: str, line_no: int) -> None:
        t = rows[0][0]
        clients = {r[1] for r in rows}
        if len(clients) != 1:
            raise ReplayFormatError(
                f"{path}: round t={t} (near line {line_no}) mixes client ids"
            )
        indices = sorted(r[2] for r in rows)
        if indices != list(range(len(rows))):
            raise ReplayFormatError(
                f"{path}: round t={t} (near line {line_no}) must have arm_index 0..K-1, "
                f"got {indices}"
            )
        if self.rounds and len(self.rounds[0].arms) != len(rows):
            raise ReplayFormatError(
                f"{path}: round t={t} (near line {line_no}) has {len(rows)} arms, "
                f"expected {len(self.rounds[0].arms)}"
            )
        ordered = sorted(rows, key=lambda r: r[2])
        arms = np.array([r[4] for r in ordered])
        rewards = np.array([r[3] for r in ordered])
        self.rounds.append(
            Round(
                t=t,
                client_id=rows[0][1],
                arms=arms,
                noise=0.0,
                arms_global=arms if self.heterogeneous else None,
                arms_local=arms if self.heterogeneous else None,
                arm_rewards=rewards,
            )
        )

    def round(self, t: int) -> Round:
        if t < 1 or t > len(self.rounds):
            raise ReplayExhausted(f"replay has {len(self.rounds)} rounds, asked for {t}")
        return self.rounds[t - 1]

    def realized_reward(self, rnd: Round, idx: int) -> float:
        return float(rnd.arm_rewards[idx])

    def regret(self, rnd: Round, idx: int) -> float:
        # No ground truth in replay mode; the harness accumulates reward instead.
        return float(rnd.arm_rewards[idx])


def write_replay_csv(path, rounds) -> None:
    """Write replay rounds (client_id, arms, rewards) in the documented schema."""
    first_dim = None
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, (client_id, arms, rewards) in enumerate(rounds, start=1):
            arms = np.atleast_2d(arms)
            if first_dim is None:
                first_dim = arms.shape[1]
                cols = REPLAY_FIXED_COLUMNS + [f"f_{i}" for i in range(1, first_dim + 1)]
                fh.write(",".join(cols) + "\n")
            for a in range(arms.shape[0]):
                feats = ",".join(repr(float(v)) for v in arms[a])
                fh.write(f"{t},{client_id},{a},{repr(float(rewards[a]))},{feats}\n")

"""Experiment orchestration: single runs, threshold sweeps, presets, CSV output.

A run is fully described by a flat key-value configuration (dotted
namespaces, e.g. ``env.N`` or ``proto.gamma_u``) resolved into a
:class:`RunConfig`.  Given the same configuration, a run is deterministic to
the byte: the environment stream is a pure function of the seed and the
agents are deterministic, so traces are reproducible and sweep cells are
independent of each other (they can run in parallel and in any order).

Threshold presets implement the standard operating points: every-step
synchronization, the two logarithmic-communication thresholds ``exp(1/N)``
and ``exp(1/sqrt(N))``, communication disabled, and the two sync-baseline
thresholds targeting the centralized and quarter-rate regret bounds.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .environment import (
    HeterogeneousEnv,
    HomogeneousEnv,
    ReplayEnv,
    ReplayExhausted,
)
from .hetero import AsyncLinUcbAm
from .homogeneous import (
    AsyncLinUcb,
    CentralizedLinUcb,
    IndependentLinUcb,
    UcbConfig,
)
from .linalg import ContractViolation, SufficientStats, rank1_update
from .protocol import CommLedger, ProtocolConfig, compute_gamma
from .sync import SyncConfig, SyncLinUcb

ALGORITHMS = (
    "AsyncLinUCB",
    "AsyncLinUCBAM",
    "SyncLinUCB",
    "IndependentLinUCB",
    "CentralizedLinUCB",
)

PRESETS = (
    "sync-every-step",
    "gamma-expinvN",
    "gamma-expinvsqrtN",
    "no-comm",
    "sync-D-centralrate",
    "sync-D-quarterrate",
)


@dataclass(frozen=True)
class RunConfig:
    """One experiment cell; see :data:`CONFIG_KEYS` for the file-level keys."""

    algorithm: str
    t: int = 1000
    seed: int = 0
    env_mode: str = "homogeneous"
    n_clients: int = 1
    n_arms: int = 10
    dim: int = 5
    d_global: int = 0
    d_local: tuple[int, ...] = ()
    sigma: float = 0.1
    noise_kind: str = "gaussian"
    arrival: str = "uniform"
    replay_path: str = ""
    gamma_u: float | None = None
    gamma_d: float | None = None
    sync_d: float | None = None
    lam: float = 1.0
    ucb_sigma: float | None = None
    delta: float = 0.05
    am_alternations: int = 1
    am_eps: float = 1e-8
    am_rank_tol: float = 1e-6
    trace_gamma: bool = False
    trace_ledger: bool = False


def _parse_bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ContractViolation(f"expected a boolean, got {raw!r}")


def _parse_gamma(raw) -> float:
    value = float(raw)
    return value


def _parse_dims(raw) -> tuple[int, ...]:
    if isinstance(raw, (tuple, list)):
        return tuple(int(v) for v in raw)
    return tuple(int(tok) for tok in str(raw).split(",") if tok.strip() != "")


# key -> (RunConfig field, coercion)
CONFIG_KEYS = {
    "algorithm": ("algorithm", str),
    "T": ("t", int),
    "seed": ("seed", int),
    "env.mode": ("env_mode", str),
    "env.N": ("n_clients", int),
    "env.K": ("n_arms", int),
    "env.d": ("dim", int),
    "env.d_g": ("d_global", int),
    "env.d_l": ("d_local", _parse_dims),
    "env.sigma": ("sigma", float),
    "env.noise": ("noise_kind", str),
    "env.arrival": ("arrival", str),
    "env.replay_path": ("replay_path", str),
    "proto.gamma_u": ("gamma_u", _parse_gamma),
    "proto.gamma_d": ("gamma_d", _parse_gamma),
    "sync.D": ("sync_d", float),
    "ucb.lambda": ("lam", float),
    "ucb.sigma": ("ucb_sigma", float),
    "ucb.delta": ("delta", float),
    "am.alternations": ("am_alternations", int),
    "am.eps": ("am_eps", float),
    "am.rank_tol": ("am_rank_tol", float),
    "diag.trace_gamma": ("trace_gamma", _parse_bool),
    "diag.trace_ledger": ("trace_ledger", _parse_bool),
}

_FIELD_TO_KEY = {f: k for k, (f, _) in CONFIG_KEYS.items()}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comment lines skipped."""
    mapping: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ContractViolation(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def load_config(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_from_mapping(mapping) -> RunConfig:
    """Resolve a flat key-value mapping into a validated :class:`RunConfig`."""
    values: dict = {}
    for key, raw in mapping.items():
        if key == "proto.gamma":
            entry = ("gamma_u", _parse_gamma)
            values["gamma_u"] = entry[1](raw)
            values["gamma_d"] = entry[1](raw)
            continue
        if key not in CONFIG_KEYS:
            raise ContractViolation(f"unknown config key: {key!r}")
        fld, coerce = CONFIG_KEYS[key]
        try:
            values[fld] = coerce(raw)
        except (TypeError, ValueError) as exc:
            raise ContractViolation(f"bad value for {key}: {raw!r} ({exc})") from None
    if "algorithm" not in values:
        raise ContractViolation("config must set 'algorithm'")
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def config_to_mapping(cfg: RunConfig) -> dict[str, str]:
    """Inverse of :func:`config_from_mapping`, with defaults spelled out."""
    out: dict[str, str] = {}
    for key, (fld, _) in CONFIG_KEYS.items():
        value = getattr(cfg, fld)
        if value is None:
            continue
        if isinstance(value, bool):
            out[key] = "true" if value else "false"
        elif isinstance(value, tuple):
            if value:
                out[key] = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            out[key] = repr(value)
        else:
            out[key] = str(value)
    return out


def validate_config(cfg: RunConfig) -> None:
    """Reject invalid or incompatible settings before the first step."""
    if cfg.algorithm not in ALGORITHMS:
        raise ContractViolation(
            f"unknown algorithm {cfg.algorithm!r}; choose from {', '.join(ALGORITHMS)}"
        )
    if cfg.t < 1:
        raise ContractViolation(f"T must be >= 1, got {cfg.t}")
    if cfg.env_mode not in ("homogeneous", "heterogeneous", "replay"):
        raise ContractViolation(f"unknown env.mode {cfg.env_mode!r}")
    if cfg.env_mode == "replay" and not cfg.replay_path:
        raise ContractViolation("replay mode requires env.replay_path")

    is_async = cfg.algorithm in ("AsyncLinUCB", "AsyncLinUCBAM")
    if is_async:
        if cfg.gamma_u is None or cfg.gamma_d is None:
            raise ContractViolation(
                f"{cfg.algorithm} requires proto.gamma (or proto.gamma_u and proto.gamma_d)"
            )
    elif cfg.gamma_u is not None or cfg.gamma_d is not None:
        raise ContractViolation("proto.gamma_* is only valid with asynchronous algorithms")
    if cfg.algorithm == "SyncLinUCB":
        if cfg.sync_d is None:
            raise ContractViolation("SyncLinUCB requires sync.D")
    elif cfg.sync_d is not None:
        raise ContractViolation("sync.D is only valid with SyncLinUCB")
    if cfg.algorithm == "AsyncLinUCBAM":
        if cfg.env_mode == "homogeneous":
            raise ContractViolation(
                "AsyncLinUCBAM needs heterogeneous arms (env.mode heterogeneous or replay)"
            )
        if cfg.trace_gamma:
            raise ContractViolation("diag.trace_gamma is not defined for AsyncLinUCBAM")
    if cfg.env_mode == "heterogeneous":
        if cfg.d_global + (min(cfg.d_local) if cfg.d_local else 0) < 1:
            raise ContractViolation("heterogeneous mode requires env.d_g and env.d_l")
    # UcbConfig (and later ProtocolConfig) run their own range checks.
    _ucb_config(cfg)


def build_environment(cfg: RunConfig):
    if cfg.env_mode == "homogeneous":
        return HomogeneousEnv(
            cfg.n_clients, cfg.n_arms, cfg.dim, cfg.sigma, cfg.seed,
            arrival=cfg.arrival, noise_kind=cfg.noise_kind,
        )
    if cfg.env_mode == "heterogeneous":
        d_local = cfg.d_local if len(cfg.d_local) != 1 else cfg.d_local[0]
        return HeterogeneousEnv(
            cfg.n_clients, cfg.n_arms, cfg.d_global, d_local, cfg.sigma, cfg.seed,
            arrival=cfg.arrival, noise_kind=cfg.noise_kind,
        )
    return ReplayEnv(cfg.replay_path, heterogeneous=cfg.algorithm == "AsyncLinUCBAM")


def _ucb_config(cfg: RunConfig) -> UcbConfig:
    sigma = cfg.ucb_sigma if cfg.ucb_sigma is not None else cfg.sigma
    if sigma <= 0:
        sigma = 1.0  # noiseless environments still need a positive width scale
    return UcbConfig(cfg.lam, sigma, cfg.delta)


def build_agent(cfg: RunConfig, env):
    ucb = _ucb_config(cfg)
    if cfg.env_mode == "replay":
        n_clients = max(cfg.n_clients, max(r.client_id for r in env.rounds) + 1)
    else:
        n_clients = cfg.n_clients
    if cfg.algorithm == "AsyncLinUCBAM":
        d_g = cfg.d_global if cfg.env_mode == "heterogeneous" else env.rounds[0].arms.shape[1]
        proto = ProtocolConfig(cfg.gamma_u, cfg.gamma_d, cfg.lam)
        return AsyncLinUcbAm(
            d_g, ucb, proto, n_clients,
            eps=cfg.am_eps, rank_tol=cfg.am_rank_tol, n_alternations=cfg.am_alternations,
        )
    if cfg.env_mode == "homogeneous":
        dim = cfg.dim
    elif cfg.env_mode == "heterogeneous":
        dims = set(cfg.d_local) if cfg.d_local else {0}
        if len(dims) != 1:
            raise ContractViolation(
                "flat algorithms need equal concatenated dims across clients"
            )
        dim = cfg.d_global + dims.pop()
    else:
        dim = env.rounds[0].arms.shape[1]
    if cfg.algorithm == "AsyncLinUCB":
        proto = ProtocolConfig(cfg.gamma_u, cfg.gamma_d, cfg.lam)
        return AsyncLinUcb(dim, ucb, proto, n_clients)
    if cfg.algorithm == "SyncLinUCB":
        return SyncLinUcb(dim, ucb, SyncConfig(cfg.sync_d, cfg.lam), n_clients)
    if cfg.algorithm == "CentralizedLinUCB":
        return CentralizedLinUcb(dim, ucb)
    return IndependentLinUcb(dim, ucb)


@dataclass
class MetricsTrace:
    """Per-step cumulative regret (or reward, in replay mode) and communication."""

    cum_regret: np.ndarray
    cum_comm: np.ndarray
    gamma: np.ndarray | None
    r_total: float
    c_total: int
    wall_ms: float
    scores_reward: bool
    ledger: CommLedger


@dataclass
class StepView:
    """What a per-step hook sees; used by invariant checks and diagnostics."""

    t: int
    rnd: object
    chosen: int
    agent: object
    pooled: SufficientStats | None


def run_simulation(cfg: RunConfig, step_hook=None) -> MetricsTrace:
    """Execute one configured run; deterministic given the configuration."""
    validate_config(cfg)
    env = build_environment(cfg)
    agent = build_agent(cfg, env)
    is_am = cfg.algorithm == "AsyncLinUCBAM"
    # Pooled statistics only serve the staleness diagnostic and step hooks.
    track_pooled = (
        not is_am
        and cfg.env_mode != "replay"
        and (cfg.trace_gamma or step_hook is not None)
    )
    pooled = SufficientStats.zeros(agent.dim) if track_pooled else None

    cum_regret: list[float] = []
    cum_comm: list[int] = []
    gammas: list[float] = []
    reg_sum = 0.0
    start = time.perf_counter()
    for t in range(1, cfg.t + 1):
        try:
            rnd = env.round(t)
        except ReplayExhausted:
            break
        if is_am:
            idx = agent.choose(rnd.client_id, rnd.arms_global, rnd.arms_local)
        else:
            idx = agent.choose(rnd.client_id, rnd.arms)
        y = env.realized_reward(rnd, idx)
        if cfg.trace_gamma:
            gammas.append(
                compute_gamma(
                    agent.client_stats(rnd.client_id), pooled, cfg.lam, rnd.arms[idx]
                )
            )
        if is_am:
            agent.update(t, rnd.client_id, rnd.arms_global[idx], rnd.arms_local[idx], y)
        else:
            agent.update(t, rnd.client_id, rnd.arms[idx], y)
            if track_pooled:
                pooled = rank1_update(pooled, rnd.arms[idx], y)
        reg_sum += env.regret(rnd, idx)
        cum_regret.append(reg_sum)
        cum_comm.append(agent.comm_count)
        if step_hook is not None:
            step_hook(StepView(t, rnd, idx, agent, pooled))
    wall_ms = (time.perf_counter() - start) * 1000.0

    ledger = getattr(agent, "ledger", CommLedger())
    return MetricsTrace(
        cum_regret=np.array(cum_regret),
        cum_comm=np.array(cum_comm, dtype=int),
        gamma=np.array(gammas) if cfg.trace_gamma else None,
        r_total=reg_sum,
        c_total=int(cum_comm[-1]) if cum_comm else 0,
        wall_ms=wall_ms,
        scores_reward=getattr(env, "scores_reward", False),
        ledger=ledger,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace_csv(trace: MetricsTrace, path) -> None:
    """Trace schema: ``t, cum_regret, cum_comm[, gamma_diag]``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = "t,cum_regret,cum_comm"
        if trace.gamma is not None:
            header += ",gamma_diag"
        fh.write(header + "\n")
        for i in range(len(trace.cum_regret)):
            row = f"{i + 1},{_fmt(trace.cum_regret[i])},{int(trace.cum_comm[i])}"
            if trace.gamma is not None:
                row += f",{_fmt(trace.gamma[i])}"
            fh.write(row + "\n")


def read_trace_csv(path) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    param_name: str
    param_value: float
    seed: int
    r_total: float
    c_total: float
    wall_ms: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    errors: list[tuple[float, int, str]] = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        """Per-parameter mean and standard deviation over seeds."""
        by_value: dict[float, list[SweepRow]] = {}
        for row in self.rows:
            by_value.setdefault(row.param_value, []).append(row)
        out = []
        for value in sorted(by_value):
            grp = by_value[value]
            r = np.array([g.r_total for g in grp])
            c = np.array([g.c_total for g in grp])
            out.append(
                {
                    "param_value": value,
                    "mean_r": float(np.mean(r)),
                    "std_r": float(np.std(r)),
                    "mean_c": float(np.mean(c)),
                    "std_c": float(np.std(c)),
                    "n": len(grp),
                }
            )
        return out


def limit_worker_threads() -> None:
    """Pin BLAS pools to one thread; pool initializer for sweep workers.

    The matrices here are tiny (d <= ~25), so BLAS threading only adds
    contention when several simulations share the machine.
    """
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass


def _run_cell(args) -> SweepRow | tuple:
    base, param_name, value, seed = args
    mapping = dict(base)
    mapping[param_name] = value
    mapping["seed"] = seed
    try:
        cfg = config_from_mapping(mapping)
        trace = run_simulation(cfg)
        return SweepRow(
            cfg.algorithm, param_name, float(value), seed,
            trace.r_total, trace.c_total, trace.wall_ms,
        )
    except Exception as exc:  # cell failures must not kill the sweep
        return (str(base.get("algorithm", "?")), param_name, float(value), seed, str(exc))


def run_sweep(base, param_name: str, values, n_seeds: int, n_jobs: int = 1) -> SweepResult:
    """One run per (value, seed), independent cells, sorted results.

    ``base`` is a flat config mapping; seeds are ``base seed + 0 .. n_seeds-1``.
    A failing cell is recorded (NaN totals) without stopping the sweep.
    """
    if not values:
        raise ContractViolation("sweep grid is empty")
    base = dict(base)
    base_seed = int(base.get("seed", 0))
    cells = [
        (base, param_name, value, base_seed + k) for value in values for k in range(n_seeds)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs, initializer=limit_worker_threads) as pool:
            outcomes = list(pool.map(_run_cell, cells))
    else:
        outcomes = [_run_cell(c) for c in cells]
    result = SweepResult(rows=[])
    for out in outcomes:
        if isinstance(out, SweepRow):
            result.rows.append(out)
        else:
            algo, pname, value, seed, msg = out
            result.errors.append((value, seed, msg))
            result.rows.append(
                SweepRow(algo, pname, value, seed, float("nan"), float("nan"), 0.0)
            )
    result.rows.sort(key=lambda r: (r.param_value, r.seed))
    return result


def write_sweep_csv(rows, path) -> None:
    """Sweep schema: ``algorithm, param_name, param_value, seed, R_T, C_T, wall_ms``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("algorithm,param_name,param_value,seed,R_T,C_T,wall_ms\n")
        for r in rows:
            fh.write(
                f"{r.algorithm},{r.param_name},{_fmt(r.param_value)},{r.seed},"
                f"{_fmt(r.r_total)},{_fmt(r.c_total)},{_fmt(r.wall_ms)}\n"
            )


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["algorithm", "param_name", "param_value", "seed", "R_T", "C_T", "wall_ms"]
        if header != expected:
            raise ContractViolation(f"{path}: expected sweep header {expected}, got {header}")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            alg, pname, pval, seed, r, c, wall = line.strip().split(",")
            rows.append(
                SweepRow(alg, pname, float(pval), int(seed), float(r), float(c), float(wall))
            )
    return rows


def preset(name: str, base) -> dict[str, str]:
    """Resolve a named threshold preset against the base config's N, d, T."""
    if name not in PRESETS:
        raise ContractViolation(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base = dict(base)
    n = int(base.get("env.N", 0))
    t = int(base.get("T", 0))
    d = int(base.get("env.d_g", 0) or 0) or int(base.get("env.d", 0) or 0)
    if name == "sync-every-step":
        return {"proto.gamma_u": "1.0", "proto.gamma_d": "1.0"}
    if name == "no-comm":
        return {"proto.gamma_u": "inf", "proto.gamma_d": "inf"}
    if n < 1:
        raise ContractViolation(f"preset {name} needs env.N in the base config")
    if name == "gamma-expinvN":
        g = repr(math.exp(1.0 / n))
        return {"proto.gamma_u": g, "proto.gamma_d": g}
    if name == "gamma-expinvsqrtN":
        g = repr(math.exp(1.0 / math.sqrt(n)))
        return {"proto.gamma_u": g, "proto.gamma_d": g}
    if t < 2 or d < 1:
        raise ContractViolation(f"preset {name} needs T and env.d in the base config")
    if name == "sync-D-centralrate":
        return {"sync.D": repr(t / (n**2 * d * math.log(t)))}
    return {"sync.D": repr(t / (n**1.5 * d * math.log(t)))}

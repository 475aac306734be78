import math

import numpy as np
import pytest

from fedbandit.environment import write_replay_csv
from fedbandit.harness import (
    RunConfig,
    config_from_mapping,
    config_to_mapping,
    parse_config_text,
    preset,
    read_sweep_csv,
    read_trace_csv,
    run_simulation,
    run_sweep,
    write_sweep_csv,
    write_trace_csv,
)
from fedbandit.linalg import ContractViolation

BASE = dict(
    algorithm="AsyncLinUCB", t=200, seed=1, env_mode="homogeneous",
    n_clients=4, n_arms=6, dim=3, sigma=0.1, gamma_u=2.0, gamma_d=2.0,
)

BASE_MAPPING = {
    "algorithm": "AsyncLinUCB",
    "T": "200",
    "seed": "1",
    "env.mode": "homogeneous",
    "env.N": "4",
    "env.K": "6",
    "env.d": "3",
    "env.sigma": "0.1",
    "proto.gamma": "2.0",
}


class TestConfigParsing:
    def test_key_value_document(self):
        text = """
        # experiment setup
        algorithm = AsyncLinUCB
        env.N = 10

        proto.gamma = 2.5
        """
        mapping = parse_config_text(text)
        assert mapping == {"algorithm": "AsyncLinUCB", "env.N": "10", "proto.gamma": "2.5"}

    def test_missing_equals_sign(self):
        with pytest.raises(ContractViolation):
            parse_config_text("algorithm AsyncLinUCB")

    def test_gamma_shorthand_sets_both_directions(self):
        cfg = config_from_mapping(BASE_MAPPING)
        assert cfg.gamma_u == 2.0 and cfg.gamma_d == 2.0

    def test_infinity_parses(self):
        cfg = config_from_mapping({**BASE_MAPPING, "proto.gamma": "inf"})
        assert math.isinf(cfg.gamma_u)

    def test_unknown_key_rejected(self):
        with pytest.raises(ContractViolation, match="unknown config key"):
            config_from_mapping({**BASE_MAPPING, "env.planets": "9"})

    def test_roundtrip_through_mapping(self):
        cfg = config_from_mapping(BASE_MAPPING)
        again = config_from_mapping(config_to_mapping(cfg))
        assert again == cfg


class TestConfigValidation:
    def test_sync_threshold_only_with_sync_algorithm(self):
        with pytest.raises(ContractViolation):
            config_from_mapping({**BASE_MAPPING, "sync.D": "1.0"})

    def test_gamma_only_with_async_algorithms(self):
        mapping = dict(BASE_MAPPING)
        mapping["algorithm"] = "CentralizedLinUCB"
        with pytest.raises(ContractViolation):
            config_from_mapping(mapping)

    def test_async_requires_gamma(self):
        mapping = dict(BASE_MAPPING)
        del mapping["proto.gamma"]
        with pytest.raises(ContractViolation):
            config_from_mapping(mapping)

    def test_sync_requires_threshold(self):
        mapping = dict(BASE_MAPPING)
        mapping["algorithm"] = "SyncLinUCB"
        del mapping["proto.gamma"]
        with pytest.raises(ContractViolation):
            config_from_mapping(mapping)

    def test_am_needs_heterogeneous_arms(self):
        mapping = dict(BASE_MAPPING)
        mapping["algorithm"] = "AsyncLinUCBAM"
        with pytest.raises(ContractViolation):
            config_from_mapping(mapping)

    def test_gamma_trace_not_defined_for_am(self):
        mapping = {
            **BASE_MAPPING,
            "algorithm": "AsyncLinUCBAM",
            "env.mode": "heterogeneous",
            "env.d_g": "2",
            "env.d_l": "2",
            "diag.trace_gamma": "true",
        }
        with pytest.raises(ContractViolation):
            config_from_mapping(mapping)


class TestRunSimulation:
    def test_trace_monotone_and_full_length(self):
        trace = run_simulation(RunConfig(**BASE))
        assert len(trace.cum_regret) == 200
        assert np.all(np.diff(trace.cum_regret) >= 0)
        assert np.all(np.diff(trace.cum_comm) >= 0)
        assert trace.r_total == trace.cum_regret[-1]
        assert trace.c_total == trace.cum_comm[-1]

    def test_byte_identical_traces(self, tmp_path):
        paths = []
        for name in ("a.csv", "b.csv"):
            trace = run_simulation(RunConfig(**BASE))
            path = tmp_path / name
            write_trace_csv(trace, path)
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]

    def test_gamma_trace_all_ones_under_unit_thresholds(self):
        cfg = RunConfig(**{**BASE, "gamma_u": 1.0, "gamma_d": 1.0, "trace_gamma": True})
        trace = run_simulation(cfg)
        assert trace.gamma is not None
        assert np.allclose(trace.gamma, 1.0, atol=1e-9)

    def test_gamma_column_absent_when_disabled(self, tmp_path):
        trace = run_simulation(RunConfig(**BASE))
        path = tmp_path / "t.csv"
        write_trace_csv(trace, path)
        assert path.read_text().splitlines()[0] == "t,cum_regret,cum_comm"

    def test_replay_mode_accumulates_reward(self, tmp_path):
        rng = np.random.default_rng(0)
        rounds = []
        for _ in range(30):
            arms = rng.standard_normal((4, 3))
            rewards = rng.integers(0, 2, size=4).astype(float)
            rounds.append((int(rng.integers(0, 2)), arms, rewards))
        path = tmp_path / "log.csv"
        write_replay_csv(path, rounds)
        cfg = RunConfig(
            algorithm="AsyncLinUCB", t=50, seed=0, env_mode="replay",
            replay_path=str(path), n_clients=2, gamma_u=2.0, gamma_d=2.0,
        )
        trace = run_simulation(cfg)
        assert trace.scores_reward
        assert len(trace.cum_regret) == 30  # truncated at end of log
        assert np.all(np.diff(trace.cum_regret) >= 0)  # binary rewards accumulate

    def test_am_on_replay_uses_mirrored_features(self, tmp_path):
        rng = np.random.default_rng(1)
        rounds = []
        for _ in range(40):
            arms = sample = rng.standard_normal((4, 2)) * 0.5
            rewards = rng.random(4)
            rounds.append((int(rng.integers(0, 2)), arms, rewards))
        path = tmp_path / "log.csv"
        write_replay_csv(path, rounds)
        cfg = RunConfig(
            algorithm="AsyncLinUCBAM", t=40, seed=0, env_mode="replay",
            replay_path=str(path), n_clients=2, gamma_u=2.0, gamma_d=2.0,
        )
        trace = run_simulation(cfg)
        assert len(trace.cum_regret) == 40


class TestSweep:
    def test_row_cardinality_and_sorting(self):
        result = run_sweep(BASE_MAPPING, "proto.gamma", ["4.0", "1.5"], n_seeds=2)
        assert len(result.rows) == 4
        keys = [(r.param_value, r.seed) for r in result.rows]
        assert keys == sorted(keys)
        assert not result.errors

    def test_cell_independence(self):
        solo = run_sweep(BASE_MAPPING, "proto.gamma", ["2.0"], n_seeds=1).rows[0]
        swept = run_sweep(BASE_MAPPING, "proto.gamma", ["1.5", "2.0", "8.0"], n_seeds=1)
        match = [r for r in swept.rows if r.param_value == 2.0][0]
        assert match.r_total == solo.r_total
        assert match.c_total == solo.c_total

    def test_parallel_matches_serial(self):
        serial = run_sweep(BASE_MAPPING, "proto.gamma", ["1.5", "4.0"], n_seeds=2, n_jobs=1)
        parallel = run_sweep(BASE_MAPPING, "proto.gamma", ["1.5", "4.0"], n_seeds=2, n_jobs=2)
        for a, b in zip(serial.rows, parallel.rows):
            assert (a.param_value, a.seed, a.r_total, a.c_total) == (
                b.param_value, b.seed, b.r_total, b.c_total,
            )

    def test_aggregate_mean_and_std(self):
        result = run_sweep(BASE_MAPPING, "proto.gamma", ["2.0"], n_seeds=3)
        agg = result.aggregate()[0]
        rs = np.array([r.r_total for r in result.rows])
        assert agg["mean_r"] == pytest.approx(float(np.mean(rs)))
        assert agg["std_r"] == pytest.approx(float(np.std(rs)))
        assert agg["n"] == 3

    def test_failed_cell_recorded_without_stopping(self):
        # negative lambda passes the string layer but fails validation inside
        # the cell
        result = run_sweep(BASE_MAPPING, "ucb.lambda", ["1.0", "-3.0"], n_seeds=1)
        assert len(result.errors) == 1
        bad = [r for r in result.rows if r.param_value == -3.0][0]
        assert math.isnan(bad.r_total)
        good = [r for r in result.rows if r.param_value == 1.0][0]
        assert math.isfinite(good.r_total)

    def test_empty_grid_rejected(self):
        with pytest.raises(ContractViolation):
            run_sweep(BASE_MAPPING, "proto.gamma", [], n_seeds=1)


class TestPresets:
    def test_every_step(self):
        assert preset("sync-every-step", BASE_MAPPING) == {
            "proto.gamma_u": "1.0", "proto.gamma_d": "1.0",
        }

    def test_exp_inv_sqrt_n(self):
        frag = preset("gamma-expinvsqrtN", {"env.N": "100"})
        assert float(frag["proto.gamma_u"]) == pytest.approx(math.exp(0.1))

    def test_exp_inv_n(self):
        frag = preset("gamma-expinvN", {"env.N": "50"})
        assert float(frag["proto.gamma_u"]) == pytest.approx(math.exp(1 / 50))

    def test_no_comm(self):
        frag = preset("no-comm", {})
        assert math.isinf(float(frag["proto.gamma_u"]))

    def test_sync_central_rate(self):
        frag = preset("sync-D-centralrate", {"env.N": "10", "env.d": "5", "T": "10000"})
        expected = 10000 / (100 * 5 * math.log(10000))
        assert float(frag["sync.D"]) == pytest.approx(expected)

    def test_sync_quarter_rate(self):
        frag = preset("sync-D-quarterrate", {"env.N": "10", "env.d": "5", "T": "10000"})
        expected = 10000 / (10**1.5 * 5 * math.log(10000))
        assert float(frag["sync.D"]) == pytest.approx(expected)

    def test_unknown_name(self):
        with pytest.raises(ContractViolation):
            preset("warp-speed", {})

    def test_am_presets_use_global_dim(self):
        frag = preset("sync-D-centralrate", {"env.N": "10", "env.d_g": "4", "T": "1000"})
        expected = 1000 / (100 * 4 * math.log(1000))
        assert float(frag["sync.D"]) == pytest.approx(expected)


class TestCsvEmission:
    def test_empty_sweep_is_header_only(self, tmp_path):
        path = tmp_path / "sweep.csv"
        write_sweep_csv([], path)
        assert path.read_text() == "algorithm,param_name,param_value,seed,R_T,C_T,wall_ms\n"

    def test_line_count(self, tmp_path):
        result = run_sweep(BASE_MAPPING, "proto.gamma", ["1.5", "3.0"], n_seeds=2)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(result.rows, path)
        assert len(path.read_text().splitlines()) == 5

    def test_sweep_roundtrip_exact(self, tmp_path):
        result = run_sweep(BASE_MAPPING, "proto.gamma", ["1.5", "3.0"], n_seeds=2)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(result.rows, path)
        back = read_sweep_csv(path)
        assert back == result.rows

    def test_trace_roundtrip_exact(self, tmp_path):
        trace = run_simulation(RunConfig(**{**BASE, "trace_gamma": True}))
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        back = read_trace_csv(path)
        assert np.array_equal(back["cum_regret"], trace.cum_regret)
        assert np.array_equal(back["cum_comm"], trace.cum_comm.astype(float))
        assert np.array_equal(back["gamma_diag"], trace.gamma)
        assert np.array_equal(back["t"], np.arange(1.0, 201.0))

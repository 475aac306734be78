import pytest

from plotviz.cli import main
from plotviz.frames import MissingColumnError, load_sweep, load_trace
from plotviz.render import plot_tradeoff, plot_traces


def write_sweep(path, rows):
    lines = ["algorithm,param_name,param_value,seed,R_T,C_T,wall_ms"]
    for algo, value, seed, r, c in rows:
        lines.append(f"{algo},gamma,{value},{seed},{r},{c},1.0")
    path.write_text("\n".join(lines) + "\n")


def write_trace(path, n, comm_slope=1.0):
    lines = ["t,cum_regret,cum_comm"]
    for t in range(1, n + 1):
        lines.append(f"{t},{0.5 * t},{int(comm_slope * t)}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def two_algo_sweep(tmp_path):
    path = tmp_path / "sweep.csv"
    rows = []
    for algo in ("AsyncLinUCB", "SyncLinUCB"):
        for i, value in enumerate((1.0, 2.0, 4.0, 8.0, 16.0)):
            for seed in (0, 1):
                rows.append((algo, value, seed, 100.0 + 10 * i + seed, 1000.0 / (i + 1)))
    write_sweep(path, rows)
    return path


class TestFrames:
    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("algorithm,param_name,seed,R_T,C_T\nA,g,0,1.0,2.0\n")
        with pytest.raises(MissingColumnError, match="param_value"):
            load_sweep(path)

    def test_trace_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,cum_regret\n1,0.5\n")
        with pytest.raises(MissingColumnError, match="cum_comm"):
            load_trace(path)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "algorithm,param_name,param_value,seed,R_T,C_T,wall_ms\nA,g,oops,0,1,2,3\n"
        )
        with pytest.raises(ValueError):
            load_sweep(path)

    def test_aggregation_means_and_labels(self, two_algo_sweep):
        points = load_sweep(two_algo_sweep).aggregated_points()
        assert len(points) == 10
        first = [p for p in points if p["algorithm"] == "AsyncLinUCB" and p["param_value"] == 1.0]
        assert first[0]["mean_r"] == pytest.approx(100.5)
        assert first[0]["label"] == "1"

    def test_nan_cells_dropped(self, tmp_path):
        path = tmp_path / "sweep.csv"
        write_sweep(path, [("A", 1.0, 0, "nan", "nan"), ("A", 2.0, 0, 5.0, 7.0)])
        points = load_sweep(path).aggregated_points()
        assert len(points) == 1
        assert points[0]["param_value"] == 2.0


class TestTradeoffPlot:
    def test_two_series_ten_points(self, two_algo_sweep, tmp_path):
        out = tmp_path / "plot.png"
        summary = plot_tradeoff(two_algo_sweep, out)
        assert out.exists() and out.stat().st_size > 0
        assert summary.n_series == 2
        assert summary.n_points == 10
        assert len(summary.labels) == 10

    def test_single_row_plot(self, tmp_path):
        path = tmp_path / "one.csv"
        write_sweep(path, [("A", 3.0, 0, 12.0, 34.0)])
        out = tmp_path / "one.png"
        summary = plot_tradeoff(path, out)
        assert summary.n_points == 1
        assert out.exists()

    def test_deterministic_output(self, two_algo_sweep, tmp_path):
        out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
        plot_tradeoff(two_algo_sweep, out1)
        plot_tradeoff(two_algo_sweep, out2)
        assert out1.read_bytes() == out2.read_bytes()


class TestTracesPlot:
    def test_one_curve_per_file(self, tmp_path):
        t1, t2 = tmp_path / "run1.csv", tmp_path / "run2.csv"
        write_trace(t1, 50, comm_slope=2.0)
        write_trace(t2, 80, comm_slope=0.5)
        out = tmp_path / "traces.png"
        summary = plot_traces([t1, t2], out)
        assert summary.n_series == 2
        assert summary.labels == ("run1", "run2")
        assert out.exists()

    def test_single_trace(self, tmp_path):
        t1 = tmp_path / "solo.csv"
        write_trace(t1, 25)
        summary = plot_traces([t1], tmp_path / "solo.png")
        assert summary.n_series == 1
        assert summary.n_points == 25


class TestCli:
    def test_tradeoff_command(self, two_algo_sweep, tmp_path, capsys):
        out = tmp_path / "fig.png"
        assert main(["tradeoff", str(two_algo_sweep), "-o", str(out)]) == 0
        assert out.exists()
        assert "10 points" in capsys.readouterr().out

    def test_traces_command(self, tmp_path):
        t1 = tmp_path / "r.csv"
        write_trace(t1, 10)
        out = tmp_path / "fig.png"
        assert main(["traces", str(t1), "-o", str(out)]) == 0
        assert out.exists()

    def test_missing_column_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("algorithm,param_name,seed,R_T,C_T\n")
        code = main(["tradeoff", str(bad), "-o", str(tmp_path / "x.png")])
        assert code != 0
        assert "param_value" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code = main(["tradeoff", str(tmp_path / "ghost.csv"), "-o", str(tmp_path / "x.png")])
        assert code != 0
        assert capsys.readouterr().err

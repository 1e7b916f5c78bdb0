from risbf import harness, plotting
from risbf.channel import ScenarioConfig, generate_dataset
from risbf.nn import TrainHistory


def _png(path):
    return path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_sweep_figure_and_script(tmp_path):
    pts = harness.sweep("N", [2, 4], ScenarioConfig(M=1, N=4),
                        lambda M, N: [harness.make_method("closed-form"), harness.make_method("random")],
                        10, seed=0)
    assert _png(plotting.plot_sweep(pts, tmp_path / "s.png"))
    gp = plotting.gnuplot_sweep("sweep.csv", ["closed-form", "random"], "N", "s.png")
    assert "set output 's.png'" in gp
    assert gp.count("with linespoints") == 2


def test_history_figure_and_script(tmp_path):
    h = TrainHistory([-0.1, -0.2], [-0.1, -0.15], [1e-3, 1e-3], 1)
    assert _png(plotting.plot_history(h, tmp_path / "sub" / "h.png", "demo"))
    assert "using 1:3" in plotting.gnuplot_history("h.csv", "h.png")


def test_ablation_and_sample_study(tmp_path):
    h = TrainHistory([-0.1, -0.2], [-0.1, -0.15], [1e-3, 1e-3], 1)
    runs = [harness.AblationRun("BN", True, 50, h), harness.AblationRun("no BN", False, 50, h)]
    assert _png(plotting.plot_ablation(runs, tmp_path / "a.png"))
    assert _png(plotting.plot_sample_study([(100, 0.1, 80.0), (1000, 0.11, 90.0)], tmp_path / "n.png"))


def test_timing_figure_and_script(tmp_path):
    rows = harness.benchmark_runtime(["random", "closed-form"], [(1, 4)], repetitions=10, warmup=1)
    assert _png(plotting.plot_timing(rows, tmp_path / "t.png"))
    assert "logscale y" in plotting.gnuplot_timing("t.csv", "t.png")


def test_figures_from_generated_data_are_nonempty(tmp_path):
    ds = generate_dataset(ScenarioConfig(M=1, N=4), 5, 0)
    r = harness.evaluate_methods([harness.make_method("closed-form")], ds, "closed-form")
    path = plotting.plot_sweep([harness.SweepPoint("N", 4, r)], tmp_path / "one.png")
    assert path.stat().st_size > 1000

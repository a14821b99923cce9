import csv
import json
import math

import numpy as np
import pytest

from qmlsfe import dataset, experiment
from qmlsfe.dataset import Sample
from qmlsfe.errors import ConfigurationError, MetricError, QmlError
from qmlsfe.experiment import GridSpec, Protocol, TrialResult

FAST = Protocol(repeats=2, n_seeds=1)


def separable_samples(m=12):
    # two tight clusters at opposite corners of feature space, SFE far from the threshold
    out = []
    for i in range(m):
        hi = i % 2 == 0
        j = 0.01 * (i // 2)
        base = (300.0, 40.0, 2.2) if hi else (20.0, 10.0, 1.0)
        out.append(Sample(f"E{i}", base[0] + j, base[1] + j, base[2] + j, 5.0 if hi else 40.0))
    return out


def test_accuracy():
    p = np.array([1] * 17 + [0] * 4)
    assert experiment.accuracy(p, np.ones(21, int)) == pytest.approx(17 / 21)
    assert round(17 / 21, 4) == 0.8095
    with pytest.raises(MetricError):
        experiment.accuracy([], [])


def test_r2_scores():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    s = experiment.r2_scores(t, t)
    assert s["pearson_r2"] == pytest.approx(1.0) and s["coefficient_of_determination"] == 1.0
    s = experiment.r2_scores(2 * t + 5, t)  # perfect correlation, poor fit
    assert s["pearson_r2"] == pytest.approx(1.0) and s["coefficient_of_determination"] < 0
    s = experiment.r2_scores(np.full(4, t.mean()), t)
    assert s["pearson_r2"] == 0.0 and s["coefficient_of_determination"] == 0.0
    with pytest.raises(MetricError, match="zero target variance"):
        experiment.r2_scores(t, np.ones(4))


def test_default_grid_sizes():
    assert len(GridSpec.default("svc").cells("svc")) == 60
    assert len(GridSpec.default("svr").cells("svr")) == 120
    assert len(GridSpec.default("qnn").cells("qnn")) == 3
    assert [c["reps"] for c in GridSpec.default("hybrid-qnn").cells("hybrid-qnn")] == [1, 2, 3]
    with pytest.raises(ConfigurationError, match="at least 1"):
        GridSpec(reps=(0,))
    with pytest.raises(ConfigurationError):
        GridSpec().cells("knn")


def test_select_best_tie_break():
    def r(mean, **cell):
        return TrialResult({"entanglement": "full", "reps": 1, "C": 1.0, **cell}, mean=mean)
    results = [r(0.8, reps=2), r(0.8, reps=1, C=10.0), r(0.8, reps=1, entanglement="linear"),
               r(0.8, reps=1, entanglement="circular"), r(0.7)]
    assert experiment.select_best(results) == 3
    results.append(TrialResult({"entanglement": "full", "reps": 5, "C": 0.1}, failed=True))
    assert experiment.select_best(results) == 3
    assert experiment.select_best([results[-1]]) is None


def test_separable_svc_scores_perfectly():
    res = experiment.evaluate_cell("svc", {"entanglement": "full", "reps": 1, "C": 100.0},
                                   separable_samples(), Protocol(repeats=3, n_seeds=2, scale_max=1.0), seed=0)
    assert not res.failed
    assert res.mean == 1.0 and len(res.scores) == 6 and len(res.seed_means) == 2


def test_constant_svr_targets_fail_the_cell():
    samples = [Sample(s.element, s.bulk_modulus, s.volume, s.electronegativity, 12.0) for s in separable_samples()]
    res = experiment.evaluate_cell("svr", {"entanglement": "full", "reps": 1, "C": 1.0, "epsilon": 0.01},
                                   samples, FAST, seed=0)
    assert res.failed and "zero target variance" in res.reason and res.mean is None
    with pytest.raises(QmlError):
        experiment.run_grid("svr", GridSpec(C=(1.0,), epsilon=(0.01,), reps=(1,), entanglement=("full",)),
                            samples, FAST, seed=0)


def test_mean_and_std_recompute(fixture_csv):
    samples = dataset.load_table(fixture_csv)
    res = experiment.evaluate_cell("svc", {"entanglement": "linear", "reps": 2, "C": 1.0}, samples,
                                   Protocol(repeats=4, n_seeds=2), seed=3)
    assert len(res.scores) == 8
    assert res.mean == pytest.approx(np.mean(res.scores))
    assert res.std == pytest.approx(np.std(res.scores))
    assert res.mean == pytest.approx(np.mean(res.seed_means))


def test_singleton_grid_and_determinism(fixture_csv):
    samples = dataset.load_table(fixture_csv)
    grid = GridSpec(C=(1.0,), reps=(2,), entanglement=("circular",))
    a = experiment.run_grid("svc", grid, samples, FAST, seed=7)
    b = experiment.run_grid("svc", grid, samples, FAST, seed=7)
    assert len(a.results) == 1 and a.best == 0
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert [f["cell"]["reps"] for f in a.full_fit["fits"]] == [2]


def test_parallel_matches_serial(fixture_csv):
    samples = dataset.load_table(fixture_csv)
    grid = GridSpec(C=(1.0, 10.0), reps=(1, 2), entanglement=("full",))
    a = experiment.run_grid("svc", grid, samples, FAST, seed=1, jobs=1)
    b = experiment.run_grid("svc", grid, samples, FAST, seed=1, jobs=2)
    assert a.to_dict() == b.to_dict()


def test_heatmap_shapes_and_outputs(fixture_csv, tmp_path):
    samples = dataset.load_table(fixture_csv)
    report = experiment.run_grid("svc", GridSpec(), samples, Protocol(repeats=1, n_seeds=1), seed=0)
    written = experiment.emit_outputs(report, tmp_path)
    heatmaps = sorted(p.name for p in written if p.name.startswith("heatmap_"))
    assert heatmaps == [f"heatmap_svc_{e}.csv" for e in ("circular", "full", "linear")]
    for name in heatmaps:
        with open(tmp_path / name, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["reps", "C=0.1", "C=1", "C=10", "C=100"]
        assert len(rows) == 6 and all(len(r) == 5 for r in rows)
    assert (tmp_path / "classification_bars.csv").read_bytes().count(b"\r\n") == 22
    assert "wall_time" not in (tmp_path / "report.json").read_text()
    assert (tmp_path / "timings.json").exists()
    back = experiment.load_report(tmp_path / "report.json")
    assert back.to_dict() == report.to_dict()


def test_svr_heatmaps_take_max_over_epsilon():
    results = []
    for e, score in [(0.01, 0.2), (0.001, 0.5)]:
        results.append(TrialResult({"entanglement": "full", "reps": 1, "C": 1.0, "epsilon": e}, mean=score))
    report = experiment.Report("svr", results, [0], GridSpec(C=(1.0,), reps=(1,), entanglement=("full",)).to_dict("svr"),
                               FAST.to_dict(), "", best=1)
    tables = experiment.heatmap_tables(report)
    assert set(tables) == {"heatmap_svr_full.csv", "heatmap_svr_full_eps0.01.csv", "heatmap_svr_full_eps0.001.csv"}
    assert tables["heatmap_svr_full.csv"][1] == ["1", "0.5"]
    assert tables["heatmap_svr_full_eps0.01.csv"][1] == ["1", "0.2"]


def test_empty_report_writes_nothing(tmp_path):
    report = experiment.Report("svc", [], [0], {}, {}, "")
    with pytest.raises(ConfigurationError):
        experiment.emit_outputs(report, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_hybrid_cell_runs(fixture_csv):
    samples = dataset.load_table(fixture_csv)
    proto = Protocol(repeats=1, n_seeds=1, epochs=5)
    for task in ("qnn", "hybrid-qnn"):
        for mode in ("classification", "regression"):
            p = Protocol(**{**proto.to_dict(), "qnn_mode": mode})
            res = experiment.evaluate_cell(task, {"entanglement": "full", "reps": 1}, samples, p, seed=0)
            assert not res.failed, res.reason
            assert math.isfinite(res.mean)

import csv
import io
import json

import numpy as np
import pytest

from r2p.cli import main
from r2p.estimators import EstimatorConfig
from r2p.experiment import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    RunFailure,
    emit_reports,
    run_experiment,
    runs_csv,
    summary_from_runs_csv,
    summary_json,
)

FAST = dict(n_train=120, n_test=200, estimator=EstimatorConfig(kind="knn"))


def test_single_run_r2p():
    rep = run_experiment(ExperimentConfig(methods=("r2p",), runs=1))
    assert len(rep.per_run) == 1
    assert 1 <= rep.per_run[0][2].n_subgroups <= 10


def test_reports_byte_identical(tmp_path):
    cfg = ExperimentConfig(runs=2, **FAST)
    a = emit_reports(run_experiment(cfg), tmp_path / "a", "both", dump_trees=True)
    b = emit_reports(run_experiment(cfg), tmp_path / "b", "both", dump_trees=True)
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_methods_paired(monkeypatch):
    import r2p.experiment as exp

    seen = []
    real = exp.split_hte

    def spy(ds, *a, **k):
        sp = real(ds, *a, **k)
        seen.append((ds.outcomes.copy(), sp))
        return sp

    monkeypatch.setattr(exp, "split_hte", spy)
    rep = run_experiment(ExperimentConfig(methods=("r2p", "ct-a", "cct"), runs=2, **FAST))
    assert [(r, m) for r, m, _ in rep.per_run] == [(0, "r2p"), (0, "ct-a"), (0, "cct"), (1, "r2p"), (1, "ct-a"), (1, "cct")]
    # one split per run, shared by every method
    assert len(seen) == 2


def test_csv_rows_and_roundtrip(tmp_path):
    cfg = ExperimentConfig(runs=3, **FAST)
    rep = run_experiment(cfg)
    emit_reports(rep, tmp_path / "new" / "dir", "both")
    text = (tmp_path / "new" / "dir" / "runs.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert len(rows) == 3 * 4
    summary = json.loads((tmp_path / "new" / "dir" / "summary.json").read_text())
    recomputed = summary_from_runs_csv(text)
    for method, metrics in summary.items():
        for name, agg in metrics.items():
            again = recomputed[method][name]
            assert again["n_finite"] == agg["n_finite"]
            if agg["mean"] is not None:
                assert abs(again["mean"] - agg["mean"]) <= 1e-12
                col = [float(r[name]) for r in rows if r["method"] == method and r[name] != ""]
                assert abs(np.mean(col) - agg["mean"]) <= 1e-12


def test_infinite_values_serialised():
    from r2p.experiment import ExperimentReport
    from r2p.metrics import RunMetrics

    m = RunMetrics(0.1, 0.2, 0.3, 0.5, 2, float("inf"), 1.0, 0.0, 0.1)
    rep = ExperimentReport([(0, "cct", m), (1, "cct", m)], {"cct": {"ci_width": {"mean": None, "stderr": None, "n_finite": 0}}})
    line = runs_csv(rep).splitlines()[1].split(",")
    assert line[CSV_COLUMNS.index("ci_width")] == ""
    assert json.loads(summary_json(rep))["cct"]["ci_width"]["n_finite"] == 0


def test_stderr_is_sample_sd_over_sqrt_n():
    rep = run_experiment(ExperimentConfig(methods=("ct-a",), runs=4, **FAST))
    vals = np.array([m.v_across for *_, m in rep.per_run])
    agg = rep.aggregate["ct-a"]["v_across"]
    assert agg["stderr"] == pytest.approx(vals.std(ddof=1) / 2)


def test_config_validation():
    for bad in (dict(runs=0), dict(methods=("ct-l",)), dict(dataset="ihdp"), dict(alpha=1.5), dict(format="xml")):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad).validate()


def test_run_failure_names_run(monkeypatch):
    import r2p.experiment as exp

    def boom(*a, **k):
        raise RuntimeError("kaput")

    monkeypatch.setattr(exp, "fit_ct_a", boom)
    with pytest.raises(RunFailure, match="run 0"):
        run_experiment(ExperimentConfig(methods=("ct-a",), runs=2, **FAST))


# ---- command line -------------------------------------------------------------

def test_cli_success(tmp_path, capsys):
    out = tmp_path / "res"
    code = main(["--runs", "1", "--methods", "r2p,ct-a", "--n-train", "120", "--n-test", "100",
                 "--estimator", "knn", "--out", str(out), "--format", "csv", "--dump-trees"])
    assert code == 0
    assert (out / "runs.csv").exists() and not (out / "summary.json").exists()
    assert (out / "tree_r2p_0.json").exists() and (out / "tree_ct-a_0.json").exists()


def test_cli_config_error(tmp_path):
    assert main(["--runs", "0", "--out", str(tmp_path)]) == 1
    assert main(["--methods", "bogus", "--out", str(tmp_path)]) == 1
    assert main(["--no-such-flag"]) == 1


def test_cli_runtime_error(tmp_path, monkeypatch):
    import r2p.experiment as exp

    monkeypatch.setattr(exp, "fit_ct_a", lambda *a, **k: (_ for _ in ()).throw(RuntimeError("x")))
    assert main(["--runs", "1", "--methods", "ct-a", "--n-train", "60", "--n-test", "20", "--out", str(tmp_path)]) == 2


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"runs": 2, "methods": "ct-a", "n-train": 80, "n_test": 50, "out": str(tmp_path / "o")}))
    assert main(["--config", str(cfg), "--runs", "1"]) == 0
    rows = (tmp_path / "o" / "runs.csv").read_text().strip().splitlines()
    assert len(rows) == 2


def test_cli_bad_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert main(["--config", str(cfg)]) == 1


def test_cli_csv_dataset(tmp_path):
    r = np.random.default_rng(0)
    n = 200
    path = tmp_path / "d.csv"
    x = r.normal(size=n)
    t = r.integers(0, 2, n)
    tau = 0.5 * x
    y = x + t * tau + r.normal(0, 0.1, n)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "t", "y", "tau"])
        w.writerows(zip(x, t, y, tau))
    code = main([f"--dataset=csv:{path}", "--csv-covariates", "x", "--csv-treatment", "t", "--csv-outcome", "y",
                 "--csv-tau", "tau", "--runs", "1", "--methods", "ct-a,r2p", "--estimator", "knn",
                 "--out", str(tmp_path / "o")])
    assert code == 0
    assert len((tmp_path / "o" / "runs.csv").read_text().strip().splitlines()) == 3


def test_cli_csv_needs_covariates(tmp_path):
    assert main(["--dataset", "csv", "--csv-path", str(tmp_path / "x.csv")]) == 1

import json

import numpy as np
import pytest

from cafim import io as cio
from cafim.cli import main


@pytest.fixture
def config_path(tmp_path):
    config = cio.ExperimentConfig()
    # small, fast settings for CLI round trips
    config.sim.horizon = 50
    config.fit.epochs = 2
    config.fit.step_size = 0.1
    config.loss.inner_iterations = 120
    config.design.n_candidates = 3
    config.design.horizon = 40
    path = tmp_path / "config.json"
    cio.save_config(config, path)
    return str(path)


def _simulate(tmp_path, config_path, n=6):
    out = tmp_path / "data"
    code = main(["simulate", "--config", config_path, "--n", str(n), "--out", str(out)])
    assert code == 0
    return out / "manifest.json"


def test_simulate_writes_dataset_and_report(tmp_path, config_path):
    manifest = _simulate(tmp_path, config_path)
    trajs, _, _ = cio.load_dataset(manifest)
    assert len(trajs) == 6
    report = cio.load_report(tmp_path / "data" / "simulate_report.json")
    assert report["command"] == "simulate"
    assert report["results"]["ids"] == [t.id for t in trajs]


def test_rank_and_report_rendering(tmp_path, config_path, capsys):
    manifest = _simulate(tmp_path, config_path)
    out = tmp_path / "rank.json"
    code = main(
        ["rank", "--config", config_path, "--manifest", str(manifest),
         "--method", "trace", "--k", "4", "--out", str(out)]
    )
    assert code == 0
    report = cio.load_report(out)
    values = report["results"]["values"]
    assert len(values) == 4
    assert values == sorted(values, reverse=True)
    assert "fim_summary" in report["results"]

    csv_out = tmp_path / "rank.csv"
    assert main(["report", str(out), "--out-csv", str(csv_out)]) == 0
    assert csv_out.exists()
    assert "toss_" in capsys.readouterr().out


def test_select_random_and_info_orth(tmp_path, config_path):
    manifest = _simulate(tmp_path, config_path)
    for method in ("random", "info-orth"):
        out = tmp_path / f"sel_{method}.json"
        code = main(
            ["select", "--config", config_path, "--manifest", str(manifest),
             "--method", method, "--k", "3", "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        report = cio.load_report(out)
        assert len(report["results"]["indices"]) == 3


def test_fit_command_writes_params(tmp_path, config_path):
    manifest = _simulate(tmp_path, config_path)
    out = tmp_path / "fit.json"
    params_out = tmp_path / "theta.json"
    code = main(
        ["fit", "--config", config_path, "--manifest", str(manifest),
         "--method", "trace", "--k", "3", "--out", str(out),
         "--out-params", str(params_out)]
    )
    assert code == 0
    fitted = cio.load_params(params_out)
    assert fitted.flatten().shape == (25,)
    report = cio.load_report(out)
    assert report["results"]["final_loss"] <= report["results"]["loss_history"][0] + 1e-12


def test_experiment_command_table(tmp_path, config_path):
    manifest = _simulate(tmp_path, config_path, n=8)
    out = tmp_path / "exp.json"
    csv_out = tmp_path / "exp.csv"
    code = main(
        ["experiment", "--config", config_path, "--manifest", str(manifest),
         "--sizes", "2,3", "--methods", "trace,random", "--seeds", "0,1",
         "--truth-from-config", "--out", str(out), "--out-csv", str(csv_out)]
    )
    assert code == 0
    report = cio.load_report(out)
    assert len(report["results"]["cells"]) == 8  # 2 sizes x 2 methods x 2 seeds
    assert len(report["results"]["aggregates"]) == 4
    assert csv_out.exists()


def test_design_command(tmp_path, config_path):
    out = tmp_path / "designed"
    code = main(["design", "--config", config_path, "--n-exp", "2", "--out", str(out)])
    assert code == 0
    trajs, _, _ = cio.load_dataset(out / "manifest.json")
    assert len(trajs) == 2
    report = cio.load_report(out / "design_report.json")
    assert len(report["results"]["designs"]) == 2
    assert all("expected_info" in d for d in report["results"]["designs"])


def test_exit_codes(tmp_path, config_path):
    assert main(["rank", "--manifest", "missing.json", "--out", "r.json"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 99}))
    assert main(["simulate", "--config", str(bad), "--n", "1", "--out", str(tmp_path)]) == 1


def test_reports_are_deterministic_modulo_timestamp(tmp_path, config_path):
    m1 = _simulate(tmp_path / "a", config_path)
    m2 = _simulate(tmp_path / "b", config_path)
    csv_a = sorted((tmp_path / "a" / "data").glob("*.csv"))
    csv_b = sorted((tmp_path / "b" / "data").glob("*.csv"))
    for fa, fb in zip(csv_a, csv_b):
        assert fa.read_bytes() == fb.read_bytes()

    for method in ("trace",):
        ra, rb = tmp_path / "ra.json", tmp_path / "rb.json"
        for manifest, out in ((m1, ra), (m2, rb)):
            main(["rank", "--config", config_path, "--manifest", str(manifest),
                  "--method", method, "--k", "3", "--out", str(out)])
        pa, pb = json.loads(ra.read_text()), json.loads(rb.read_text())
        pa.pop("timestamp"), pb.pop("timestamp")
        assert json.dumps(pa, sort_keys=True) == json.dumps(pb, sort_keys=True)

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from astnlab.cli import main
from astnlab.evaluation import MetricReport, check_identities
from astnlab.experiment import ExperimentConfig, parse_override, set_dotted

TINY = {
    "synth": {"n_subjects": 4, "trials_per_subject": 3, "width": 6, "height": 4, "sample_rate": 4,
              "min_seconds": 5, "max_seconds": 8},
    "model": {"width": 6, "height": 4, "sample_rate": 4, "spatial_channels": [2, 3], "spatial_pool_after": [0],
              "spatial_dim": 3, "intrinsic_channels": [3], "intrinsic_pool_after": [0], "intrinsic_dim": 3,
              "hidden_dim": 3, "classifier_hidden": [3]},
    "train": {"max_iterations": 6, "eval_every": 3},
    "seeds": [0],
    "variants": [
        {"name": "fwd-subject"},
        {"name": "bidir-subject-disc", "bidirectional": True, "use_discriminator": True},
    ],
}


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({**TINY, "out_dir": str(tmp_path / "run")}))
    return path


@pytest.fixture
def trained(config, tmp_path):
    assert main(["gen-data", str(config)]) == 0
    cohort = tmp_path / "run" / "cohort.fpsq"
    assert main(["train", str(config), "--set", f"cohort_path={cohort}"]) == 0
    return config, cohort, tmp_path / "run"


def test_gen_data_is_deterministic_and_reports_rate(config, tmp_path, capsys):
    assert main(["gen-data", str(config), "--output", str(tmp_path / "a.fpsq")]) == 0
    out = capsys.readouterr().out
    assert "event rate" in out and "6x4 @ 4 Hz" in out
    assert main(["gen-data", str(config), "--output", str(tmp_path / "b.fpsq")]) == 0
    assert digest(tmp_path / "a.fpsq") == digest(tmp_path / "b.fpsq")


def test_gen_data_from_csv(config, tmp_path):
    root = tmp_path / "csv"
    for m in range(3):
        d = root / f"trial_{m}_0"
        d.mkdir(parents=True)
        for k in range(8):
            np.savetxt(d / f"frame_{k}.csv", np.full((6, 4), m), delimiter=",", fmt="%d")
        np.savetxt(d / "frame_labels.csv", [0, 0, 0, 0, 1, 0, 0, 0], fmt="%d")
    assert main(["gen-data", str(config), "--from-csv", str(root), "--output", str(tmp_path / "c.fpsq")]) == 0
    assert main(["gen-data", str(config), "--from-csv", str(tmp_path / "missing")]) == 1


def test_train_writes_cells_summary_and_manifest(trained):
    _, _, run = trained
    summary = json.loads((run / "summary.json").read_text())
    assert [r["variant"] for r in summary["rows"]] == ["fwd-subject", "bidir-subject-disc"]
    for name in ("fwd-subject", "bidir-subject-disc"):
        cell = run / name / "seed0"
        for f in ("model.astn", "trace.csv", "report.json", "roc.csv", "split.json"):
            assert (cell / f).is_file()
        report = MetricReport.from_json(json.loads((cell / "report.json").read_text())["metrics"])
        assert check_identities(report) == []
    manifest = json.loads((run / "manifest.json").read_text())
    assert "fwd-subject/seed0/model.astn" in manifest["commands"]["train"]["artifacts"]
    assert manifest["commands"]["gen-data"]["artifacts"] == ["cohort.fpsq"]


def test_train_is_deterministic(trained, tmp_path):
    config, cohort, run = trained
    again = tmp_path / "again"
    assert main(["train", str(config), "--set", f"cohort_path={cohort}", "--out-dir", str(again)]) == 0
    for rel in ("summary.json", "fwd-subject/seed0/trace.csv", "bidir-subject-disc/seed0/model.astn",
                "bidir-subject-disc/seed0/report.json"):
        assert digest(run / rel) == digest(again / rel), rel


def test_parallel_workers_match_sequential(trained, tmp_path, monkeypatch):
    config, cohort, run = trained
    monkeypatch.setenv("ASTNLAB_THREADS", "2")
    par = tmp_path / "par"
    assert main(["train", str(config), "--set", f"cohort_path={cohort}", "--out-dir", str(par)]) == 0
    assert digest(run / "summary.json") == digest(par / "summary.json")
    monkeypatch.setenv("ASTNLAB_THREADS", "zero")
    assert main(["train", str(config), "--set", f"cohort_path={cohort}"]) == 1


def test_resume_finishes_to_the_same_result(trained, tmp_path):
    config, cohort, run = trained
    assert main(["train", str(config), "--set", f"cohort_path={cohort}", "--resume"]) == 0
    before = json.loads((run / "summary.json").read_text())
    assert main(["train", str(config), "--set", f"cohort_path={cohort}", "--out-dir", str(tmp_path / "fresh")]) == 0
    assert before == json.loads((tmp_path / "fresh" / "summary.json").read_text())


def test_eval_twice_identical_and_split_labeled(trained):
    config, cohort, run = trained
    ckpt = run / "bidir-subject-disc" / "seed0" / "model.astn"
    args = ["eval", str(config), "--set", f"cohort_path={cohort}", "--checkpoint", str(ckpt)]
    assert main(args) == 0
    first = (ckpt.parent / "eval_test" / "report.json").read_text()
    assert main(args) == 0
    assert (ckpt.parent / "eval_test" / "report.json").read_text() == first
    assert main(args + ["--split", "train"]) == 0
    doc = json.loads((ckpt.parent / "eval_train" / "report.json").read_text())
    assert doc["split"] == "train" and json.loads(first)["split"] == "test"
    assert check_identities(MetricReport.from_json(doc["metrics"])) == []
    header = (ckpt.parent / "eval_test" / "pca_dynamic.csv").read_text().splitlines()[0]
    assert header == "pc1,pc2,true_label,pred_label"
    assert (ckpt.parent / "eval_test" / "roc.csv").read_text().startswith("threshold,fpr,tpr")


def test_eval_rejects_mismatched_checkpoint(trained, tmp_path):
    config, _, run = trained
    other = tmp_path / "other.fpsq"
    assert main(["gen-data", str(config), "--output", str(other), "--set", "synth.width=8"]) == 0
    ckpt = run / "fwd-subject" / "seed0" / "model.astn"
    assert main(["eval", str(config), "--set", f"cohort_path={other}", "--checkpoint", str(ckpt)]) == 1
    assert main(["eval", str(config), "--checkpoint", str(tmp_path / "none.astn")]) == 1


def test_project_writes_three_levels(trained):
    config, cohort, run = trained
    ckpt = run / "fwd-subject" / "seed0" / "model.astn"
    assert main(["project", str(config), "--set", f"cohort_path={cohort}", "--checkpoint", str(ckpt),
                 "--split", "all"]) == 0
    for level in ("spatial", "intrinsic", "dynamic"):
        assert (ckpt.parent / "eval_all" / f"pca_{level}.csv").is_file()


def test_sweep_lambda_one_row_per_scale(trained, tmp_path):
    config, cohort, _ = trained
    out = tmp_path / "sweep"
    assert main(["sweep-lambda", str(config), "--set", f"cohort_path={cohort}", "--out-dir", str(out),
                 "--lambdas", "0,0.25,1"]) == 0
    rows = json.loads((out / "summary.json").read_text())["rows"]
    assert [r["variant"] for r in rows] == [f"bidir-subject-disc-lambda{s}" for s in ("0", "0.25", "1")]
    assert main(["sweep-lambda", str(config), "--lambdas", "a,b"]) == 1
    assert main(["sweep-lambda", str(config), "--base", "nope"]) == 1


def test_invalid_configs_rejected_before_side_effects(config, tmp_path):
    run = tmp_path / "run"
    assert main(["train", str(config), "--set", "seeds=[]"]) == 1
    assert main(["train", str(config), "--set", "train.epochs=3"]) == 1
    assert main(["train", str(config), "--set", "variants.0.split_mode=weekly"]) == 1
    assert main(["train", str(config), "--set", "cohort_path=/does/not/exist"]) == 1
    assert main(["train", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["train", str(bad)]) == 1
    assert not run.exists()


def test_grad_check_exit_codes(capsys):
    assert main(["grad-check", "--seeds", "2", "--only", "tanh,mul"]) == 0
    assert main(["grad-check", "--seeds", "2", "--only", "tanh,mul", "--fault", "mul"]) == 3
    out = capsys.readouterr().out
    assert "FAIL  mul" in out and "failed: mul" in out
    assert main(["grad-check", "--only", "nothing"]) == 1
    assert main(["grad-check", "--fault", "nothing"]) == 1


def test_overrides():
    d = {"train": {"seed": 0}, "variants": [{"name": "a"}]}
    set_dotted(d, *parse_override("train.seed=4"))
    set_dotted(d, *parse_override("variants.0.name=b"))
    set_dotted(d, *parse_override("out_dir=some/where"))
    assert d == {"train": {"seed": 4}, "variants": [{"name": "b"}], "out_dir": "some/where"}
    with pytest.raises(ValueError):
        parse_override("no-equals")


def test_experiment_config_round_trip():
    cfg = ExperimentConfig.from_json(TINY)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "astnlab", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("gen-data", "train", "eval", "sweep-lambda", "grad-check", "project"):
        assert cmd in proc.stdout

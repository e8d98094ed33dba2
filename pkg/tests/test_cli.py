import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pvadbench import cli, training


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "desk.ini"
    cfg.write_text(
        "[corpus]\nn_train = 6\nn_val = 2\nn_test = 10\nseed = 5\n"
        "[train]\nepochs = 1\nencoder_epochs = 1\n"
    )
    assert cli.main(["synth", "--config", str(cfg), "--out", str(root / "corpus")]) == 0
    assert cli.main(["train", "--config", str(cfg), "--corpus", str(root / "corpus"), "--out", str(root / "run"),
                     "--variant", "EF,DSC", "--seed", "1"]) == 0
    for v in ("EF", "DSC"):
        assert cli.main(["eval", "--checkpoint", str(root / "run" / f"{v}.ckpt"), "--corpus", str(root / "corpus"),
                         "--out", str(root / "reports")]) == 0
    return root


def test_synth_is_reproducible(workspace, tmp_path, capsys):
    cfg = str(workspace / "desk.ini")
    assert cli.main(["synth", "--config", cfg, "--out", str(tmp_path / "again")]) == 0
    a = (workspace / "corpus" / "manifest.jsonl").read_bytes()
    assert (tmp_path / "again" / "manifest.jsonl").read_bytes() == a
    assert cli.main(["synth", "--config", cfg, "--out", str(tmp_path / "other"), "--seed", "6"]) == 0
    assert (tmp_path / "other" / "manifest.jsonl").read_bytes() != a
    summary, _ = json.JSONDecoder().raw_decode(capsys.readouterr().out)
    assert summary["utterances"] == {"train": 6, "val": 2, "test": 10}


def test_seed_from_environment(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("PVAD_SEED", "6")
    assert cli.main(["synth", "--config", str(workspace / "desk.ini"), "--out", str(tmp_path / "env")]) == 0
    meta = json.loads((tmp_path / "env" / "corpus.json").read_text())
    assert meta["seed"] == 6


def test_train_outputs(workspace):
    run = workspace / "run"
    for name in ("EF.ckpt", "DSC.ckpt", "encoder.ckpt", "vad.ckpt", "enrollments.jsonl", "EF_loss.csv"):
        assert (run / name).exists(), name
    assert training.load_checkpoint(run / "EF.ckpt").parameter_count() == 133_955
    dsc = training.load_checkpoint(run / "DSC.ckpt")
    enc = training.read_checkpoint(run / "encoder.ckpt").params
    np.testing.assert_array_equal(dsc.params["enc.lstm1.w_ih"].data, enc["enc.lstm1.w_ih"].data)


def test_report_schema(workspace):
    rep = json.loads((workspace / "reports" / "EF_report.json").read_text())
    for key in ("feer_pvad", "feer_vad", "ueer", "operating_threshold", "median_latency_ms", "median_accuracy",
                "users", "accuracy_vs_duration", "provenance"):
        assert key in rep
    assert rep["provenance"]["corpus_seed"] == 5
    assert len(rep["provenance"]["checkpoint_sha256"]) == 64
    assert (workspace / "reports" / "EF_users.csv").read_text().startswith("variant,user_id")
    assert (workspace / "reports" / "EF_det_pvad_frame.csv").read_text().startswith("threshold,fpr,fnr")
    for u in rep["users"]:
        assert all(x % 10 == 0 for x in u["latencies_ms"])


def test_eval_is_byte_identical(workspace, tmp_path):
    assert cli.main(["eval", "--checkpoint", str(workspace / "run" / "EF.ckpt"), "--corpus",
                     str(workspace / "corpus"), "--out", str(tmp_path)]) == 0
    for name in ("EF_report.json", "EF_users.csv"):
        assert (tmp_path / name).read_bytes() == (workspace / "reports" / name).read_bytes()


def test_compare_same_report_is_degenerate(workspace, tmp_path):
    rep = str(workspace / "reports" / "EF_report.json")
    assert cli.main(["compare", rep, rep, "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "comparison.json").read_text())
    assert out["pairs"][0]["accuracy"]["degenerate"] is True
    assert out["pairs"][0]["accuracy"]["regressed"] == 0


def test_compare_clear_winner():
    users = [{"user_id": f"u{i}", "median_latency_ms": 100.0 + i, "accuracy": 0.5} for i in range(6)]
    better = [{"user_id": f"u{i}", "median_latency_ms": 50.0, "accuracy": 0.9} for i in range(6)]
    a = {"variant": "A", "users": better, "median_accuracy": 0.9}
    b = {"variant": "B", "users": users, "median_accuracy": 0.5}
    res = cli.compare_reports([a, b])
    ab = res["pairs"][0]
    assert ab["latency"]["improved_k_of_n"] == "6 out of 6"
    assert ab["accuracy"]["p_one_sided"] == pytest.approx(2.0 ** -6)
    assert res["winners"]["median_accuracy"]["variants"] == ["A"]


def test_compare_mismatched_users():
    a = {"variant": "A", "users": [{"user_id": "x", "median_latency_ms": 1, "accuracy": 1}]}
    b = {"variant": "B", "users": [{"user_id": "y", "median_latency_ms": 1, "accuracy": 1}]}
    with pytest.raises(cli.DataError):
        cli.compare_reports([a, b])


def test_plots_are_valid_and_stable(workspace, tmp_path):
    reps = [str(workspace / "reports" / f"{v}_report.json") for v in ("EF", "DSC")]
    assert cli.main(["plot", *reps, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["plot", *reps, "--out", str(tmp_path / "b")]) == 0
    svgs = sorted(p.name for p in (tmp_path / "a").glob("*.svg"))
    assert "accuracy_vs_duration.svg" in svgs
    for name in svgs:
        ET.fromstring((tmp_path / "a" / name).read_text())
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_plot_skips_missing_series(tmp_path):
    rep = tmp_path / "r.json"
    rep.write_text(json.dumps({"variant": "X", "accuracy_vs_duration": [], "users": [], "det": {}}))
    assert cli.main(["plot", str(rep), "--out", str(tmp_path / "p")]) == 0
    assert list((tmp_path / "p").glob("*.svg")) == []


def test_exit_codes(tmp_path, monkeypatch):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["train", "--variant", "XYZ", "--corpus", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["train", "--variant", "EF", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path)]) == cli.EXIT_DATA
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "nope.ckpt"), "--corpus", str(tmp_path)]) == cli.EXIT_DATA
    assert cli.main(["eval", "--durations", "5,x"]) == cli.EXIT_USAGE
    monkeypatch.setenv("PVAD_SEED", "abc")
    assert cli.main(["synth", "--out", str(tmp_path / "s")]) == cli.EXIT_USAGE


def test_numeric_abort_exit_code(monkeypatch, workspace, tmp_path):
    def boom(*a, **k):
        raise training.NumericAbort("non-finite loss")

    monkeypatch.setattr(training, "train_pvad", boom)
    code = cli.main(["train", "--config", str(workspace / "desk.ini"), "--corpus", str(workspace / "corpus"),
                     "--out", str(workspace / "run"), "--variant", "LF", "--seed", "1"])
    assert code == cli.EXIT_NUMERIC

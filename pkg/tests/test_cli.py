import json
import subprocess
import sys

import numpy as np
import pytest

from spo2tl.cli import main
from spo2tl.io import load_checkpoint, read_session, write_session
from spo2tl.segmentation import PpgSession


def _write_config(path, **sections):
    path.write_text(json.dumps(sections))
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = _write_config(root / "synth.json", synth={"duration_s": 240.0}, n_subjects=5,
                        sessions_per_subject=1)
    assert main(["synth", "--config", cfg, "--seed", "1", "--out", str(root / "raw")]) == 0
    tiny = _write_config(root / "tiny.json", model={"hidden": 2},
                         train={"pretrain_epochs": 1, "finetune_epochs": 2,
                                "finetune_stage1_epochs": 1, "batch": 64})
    return root, tiny


def test_synth_corpus_of_27(tmp_path):
    cfg = _write_config(tmp_path / "c.json", synth={"duration_s": 240.0})
    out = tmp_path / "corpus"
    assert main(["synth", "--config", cfg, "--subjects", "9", "--sessions", "3",
                 "--out", str(out)]) == 0
    files = sorted(out.glob("*.session"))
    assert len(files) == 27
    assert files[0].name == "S00_00.session" and files[-1].name == "S08_02.session"


def test_synth_zero_subjects_fails(tmp_path, capsys):
    assert main(["synth", "--subjects", "0", "--out", str(tmp_path)]) == 3
    assert "error" in capsys.readouterr().err


def test_synth_is_reproducible(workspace, tmp_path):
    root, _ = workspace
    cfg = str(root / "synth.json")
    assert main(["synth", "--config", cfg, "--seed", "1", "--out", str(tmp_path)]) == 0
    for f in sorted((root / "raw").glob("*.session")):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["synth", "--bogus"]) == 2
    assert main(["predict", "--method", "magic"]) == 2
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_preprocess(workspace, tmp_path):
    root, _ = workspace
    raw = sorted((root / "raw").glob("*.session"))[0]
    assert main(["preprocess", str(raw), "--out", str(tmp_path)]) == 0
    out = read_session(tmp_path / raw.name)
    assert out.normalized and out.fs == 25.0
    assert out.red.size == int(np.floor(240 * 86 * 25 / 86 + 0.5))
    prov = json.loads((tmp_path / "provenance.json").read_text())
    assert prov[raw.name] == {"ir": 0, "red": 0}


def test_preprocess_corrupt_row(workspace, tmp_path, capsys):
    root, _ = workspace
    raw = sorted((root / "raw").glob("*.session"))[0]
    lines = raw.read_text().splitlines()
    lines[100] = "1.0,NaNish,3"
    bad = tmp_path / "bad.session"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["preprocess", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert "line 101" in capsys.readouterr().err


def test_missing_input(tmp_path, capsys):
    assert main(["preprocess", str(tmp_path / "nothing.session"), "--out", str(tmp_path)]) == 3
    capsys.readouterr()


def test_traditional_pipeline_on_clean_corpus(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        synth={"duration_s": 240.0, "noise_sd": 0.0, "baseline_wander_amp": 0.0},
                        n_subjects=9, sessions_per_subject=1)
    raw = tmp_path / "raw"
    assert main(["synth", "--config", cfg, "--out", str(raw)]) == 0
    files = sorted(raw.glob("*.session"))
    train, test = [str(f) for f in files[:7]], [str(f) for f in files[7:]]
    assert main(["calib", *train, "--out", str(tmp_path / "cal")]) == 0
    coef = json.loads((tmp_path / "cal" / "calib.json").read_text())
    assert set(coef) == {"c0", "c1", "c2"}
    assert main(["predict", *test, "--method", "traditional", "--calib",
                 str(tmp_path / "cal" / "calib.json"), "--out", str(tmp_path / "tr")]) == 0
    assert main(["evaluate", str(tmp_path / "tr"), "--out", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["mae"] < 0.5


def test_learned_pipeline_is_reproducible(workspace, tmp_path):
    root, tiny = workspace
    raw = str(root / "raw")
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["pretrain", raw, "--config", tiny, "--seed", "3", "--out", str(out)]) == 0
        assert main(["predict", raw, "--checkpoint", str(out / "model.ckpt"),
                     "--out", str(out / "traces")]) == 0
        assert main(["evaluate", str(out / "traces"), "--out", str(out)]) == 0
    for name in ("model.ckpt", "history.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    traces = sorted((tmp_path / "a" / "traces").glob("*.trace.csv"))
    assert len(traces) == 5
    assert traces[0].read_text().splitlines()[0] == "t,y_ref,y_pred,is_instant"
    params, calib = load_checkpoint(tmp_path / "a" / "model.ckpt")
    assert params.config.hidden == 2 and calib is None
    history = (tmp_path / "a" / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,split,loss,mae" and len(history) == 2


def test_holdout_split_writes_plan(workspace, tmp_path):
    root, _ = workspace
    cfg = _write_config(tmp_path / "c.json", model={"hidden": 2}, train={"pretrain_epochs": 1},
                        split={"kind": "holdout", "seed": 0})
    assert main(["pretrain", str(root / "raw"), "--config", cfg, "--out", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "split.json").read_text())
    assert len(plan["test_subjects"]) == 1 and len(plan["train_subjects"]) == 4


def test_finetune_and_mismatch(workspace, tmp_path, capsys):
    root, tiny = workspace
    raw = str(root / "raw")
    assert main(["pretrain", raw, "--config", tiny, "--out", str(tmp_path / "pre")]) == 0
    ckpt = str(tmp_path / "pre" / "model.ckpt")
    assert main(["finetune", raw, "--config", tiny, "--checkpoint", ckpt,
                 "--out", str(tmp_path / "ft")]) == 0
    before, _ = load_checkpoint(ckpt)
    after, _ = load_checkpoint(tmp_path / "ft" / "model.ckpt")
    assert before.group_hash("attention") == after.group_hash("attention")
    assert before.group_hash("bilstm") != after.group_hash("bilstm")
    other = _write_config(tmp_path / "other.json", model={"hidden": 3},
                          train={"finetune_epochs": 2, "finetune_stage1_epochs": 1})
    assert main(["finetune", raw, "--config", other, "--checkpoint", ckpt,
                 "--out", str(tmp_path / "bad")]) == 3
    assert "does not match" in capsys.readouterr().err


def test_calib_into_checkpoint_and_traditional_predict(workspace, tmp_path):
    root, tiny = workspace
    raw = str(root / "raw")
    assert main(["pretrain", raw, "--config", tiny, "--out", str(tmp_path)]) == 0
    assert main(["calib", raw, "--checkpoint", str(tmp_path / "model.ckpt"),
                 "--out", str(tmp_path / "cal")]) == 0
    _, calib = load_checkpoint(tmp_path / "cal" / "model.ckpt")
    assert calib is not None
    assert main(["predict", raw, "--method", "traditional", "--checkpoint",
                 str(tmp_path / "cal" / "model.ckpt"), "--out", str(tmp_path / "tr")]) == 0
    assert len(list((tmp_path / "tr").glob("*.trace.csv"))) == 5


def test_traditional_needs_raw_sessions(workspace, tmp_path, capsys):
    root, _ = workspace
    raw = sorted((root / "raw").glob("*.session"))[0]
    assert main(["preprocess", str(raw), "--out", str(tmp_path)]) == 0
    assert main(["calib", str(tmp_path / raw.name), "--out", str(tmp_path / "c")]) == 3
    assert "raw sessions" in capsys.readouterr().err


def test_identical_reference_and_prediction_scores_zero(tmp_path):
    y = 97 - 6 * np.exp(-((np.arange(60) - 30) / 6.0) ** 2)
    lines = ["t,y_ref,y_pred,is_instant"] + [f"{k + 5.0!r},{float(v)!r},{float(v)!r},0" for k, v in enumerate(y)]
    (tmp_path / "x.trace.csv").write_text("\n".join(lines) + "\n")
    assert main(["evaluate", str(tmp_path / "x.trace.csv"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["mae"] == report["rmse"] == report["mae_ins"] == 0.0
    assert report["n_instant_points"] > 0


def test_degenerate_fit_is_numeric_failure(tmp_path, capsys):
    # a flat red channel gives R = 0 in every window: no curve can be fitted
    fs, n = 25.0, 25 * 60
    ir = 1000.0 + 10.0 * np.sin(2 * np.pi * 1.2 * np.arange(n) / fs)
    t = np.arange(61.0)
    session = PpgSession("F00", np.full(n, 800.0), ir, fs, t, 97.0 - 0.1 * t)
    write_session(session, tmp_path / "flat.session")
    code = main(["calib", str(tmp_path / "flat.session"), "--out", str(tmp_path / "c")])
    assert code == 4 and "numeric failure" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "spo2tl.cli", "synth", "--subjects", "0",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 3
    proc = subprocess.run([sys.executable, "-m", "spo2tl.cli"], capture_output=True, text=True)
    assert proc.returncode == 2

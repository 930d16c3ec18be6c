import json
import subprocess
import sys

import numpy as np
import pytest

from augself import cli
from augself.augment import AugConfig, AugParams, apply_all, read_pnm, test_image, write_pnm
from augself.trainer import CSV_HEADER

TINY = ["dataset.n=48", "dataset.size=8", "model.feat_dim=8", "model.latent_dim=4", "train.batch_size=8",
        "train.steps=2", "train.eval_interval=1", "eval.n_samples=16", "eval.probe_steps=10"]


def sets(*pairs):
    return [arg for pair in pairs for arg in ("--set", pair)]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("value,text", [(0.0, "0.000000e0"), (0.0012345, "1.234500e-3"), (12.5, "1.250000e1")])
def test_format_sci(value, text):
    assert cli.format_sci(value) == text


@pytest.mark.parametrize("kind", ["KL", "rKL", "JS", "LC", "AHM"])
def test_divergence_of_identical_is_zero(tmp_path, capsys, kind):
    (tmp_path / "p.csv").write_text("0.1,0.2,0.7\n")
    code, out, _ = run(capsys, "divergence", str(tmp_path / "p.csv"), str(tmp_path / "p.csv"), "--kind", kind)
    assert code == 0 and out.strip() == "0.000000e0"


def test_divergence_value_and_header(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("prob\n0.5\n0.5\n")
    (tmp_path / "q.csv").write_text("0.25,0.75\n")
    code, out, _ = run(capsys, "divergence", str(tmp_path / "p.csv"), str(tmp_path / "q.csv"), "--kind", "AHM")
    assert code == 0 and float(out) == pytest.approx(1 / 15, rel=1e-6)


def test_divergence_exit_codes(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("1,0\n")
    (tmp_path / "q.csv").write_text("0,1\n")
    (tmp_path / "bad.csv").write_text("0.5,0.6\n")
    assert run(capsys, "divergence", str(tmp_path / "p.csv"), str(tmp_path / "q.csv"), "--kind", "KL")[0] == 2
    assert run(capsys, "divergence", str(tmp_path / "p.csv"), str(tmp_path / "bad.csv"))[0] == 1
    assert run(capsys, "divergence", str(tmp_path / "p.csv"), str(tmp_path / "missing.csv"))[0] == 3


def test_verify_theory(tmp_path, capsys):
    code, out, _ = run(capsys, "verify-theory", "--instances", "1000", "--output", str(tmp_path / "r.json"))
    report = json.loads(out)
    assert code == 0 and report["max_residual"] < 1e-10 and report["passed"]
    assert json.loads((tmp_path / "r.json").read_text()) == report
    worked = report["checks"]["thm1_worked_instance"]
    assert worked["lhs"] == pytest.approx(4 / 15, abs=1e-14)


def test_gradcheck_subset(capsys):
    code, out, _ = run(capsys, "gradcheck", "--instances", "5", "--case", "matmul", "--case", "conv2d")
    report = json.loads(out)
    assert code == 0 and set(report["cases"]) == {"matmul", "conv2d"}


def test_augment_preview_caption_values(tmp_path, capsys):
    omega = "0.2,0.3,0.5,0.1,0.8,0.4,0.6"
    code, out, _ = run(capsys, "augment-preview", "--omega", omega, "--out-dir", str(tmp_path))
    assert code == 0
    assert out.splitlines() == ["omega_color=0.2,0.3,0.5", "omega_translation=0.1,0.8", "omega_cutout=0.4,0.6"]
    expected = apply_all(test_image()[None], AugParams.from_vector([float(v) for v in omega.split(",")]),
                         AugConfig()).data[0]
    for name in ("original", "augmented", "difference"):
        assert (tmp_path / f"{name}.ppm").read_bytes()[:2] == b"P6"
    # the byte mapping clamps to [-1, 1]
    assert np.max(np.abs(read_pnm(tmp_path / "augmented.ppm") - np.clip(expected, -1, 1))) <= 1 / 127.5


def test_augment_preview_samples_when_omega_missing(tmp_path, capsys):
    code, out, _ = run(capsys, "augment-preview", "--out-dir", str(tmp_path))
    assert code == 0 and out.startswith("omega_color=")
    assert run(capsys, "augment-preview", "--out-dir", str(tmp_path))[1] == out


def test_augment_preview_grayscale_input(tmp_path, capsys):
    write_pnm(tmp_path / "in.pgm", test_image(12)[:1])
    code, _, _ = run(capsys, "augment-preview", "--image", str(tmp_path / "in.pgm"), "--out-dir", str(tmp_path / "o"))
    assert code == 0 and (tmp_path / "o" / "difference.pgm").exists()


def test_augment_preview_bad_omega(capsys):
    assert run(capsys, "augment-preview", "--omega", "0.1,0.2")[0] == 1


def test_train_writes_documented_header(tmp_path, capsys):
    code, out, _ = run(capsys, "train", *sets(*TINY, f"out.dir={tmp_path}"))
    assert code == 0
    assert (tmp_path / "metrics.csv").read_text().splitlines()[0] == CSV_HEADER
    assert json.loads(out)["out_dir"] == str(tmp_path)


def test_train_config_file_and_errors(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("\n".join(TINY + [f"out.dir={tmp_path / 'o'}"]) + "\n")
    assert run(capsys, "train", "--config", str(cfg))[0] == 0
    code, _, err = run(capsys, "train", "--config", str(cfg), *sets("loss.ss_task=BOGUS"))
    assert code == 1 and "loss.ss_task" in err
    assert run(capsys, "train", "--config", str(tmp_path / "nope.cfg"))[0] == 3


def test_probe_from_checkpoint(tmp_path, capsys):
    run(capsys, "train", *sets(*TINY, f"out.dir={tmp_path}"))
    code, out, _ = run(capsys, "probe", *sets(*TINY), "--checkpoint", str(tmp_path / "checkpoint.bin"))
    report = json.loads(out)
    assert code == 0 and set(report) == {"shape", "color", "pos"}
    assert 0 <= report["pos"]["accuracy"] <= 1


def test_sweep_lambda_rows(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--grid", "lambda", *sets(*TINY, "train.steps=1", f"out.dir={tmp_path}"))
    report = json.loads(out)
    assert code == 0 and len(report["points"]) == 8
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 9
    for lam in ("0", "0.1", "10"):
        assert (tmp_path / f"lambda_{lam}" / "metrics.csv").read_text().startswith(CSV_HEADER)


def test_config_describe(capsys):
    code, out, _ = run(capsys, "config", "--describe")
    assert code == 0 and "loss.lambda_d = 1.0" in out


def test_module_entry_point_exit_code(tmp_path):
    (tmp_path / "p.csv").write_text("0.5,0.5\n")
    done = subprocess.run([sys.executable, "-m", "augself.cli", "divergence", "p.csv", "p.csv"],
                          cwd=tmp_path, capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout == "0.000000e0\n"
    done = subprocess.run([sys.executable, "-m", "augself.cli", "train", "--set", "x.y=1"],
                          cwd=tmp_path, capture_output=True, text=True)
    assert done.returncode == 1 and "x.y" in done.stderr

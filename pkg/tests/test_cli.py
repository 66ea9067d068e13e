import csv
import json

import numpy as np
import pytest

from defocuskit import relative_rms
from defocuskit.bench import make_test_chart
from defocuskit.cli import main, parse_candidates, read_config_file
from defocuskit.estimate import synthetic_edge
from defocuskit.core import DefocusModel
from defocuskit.imageio import read_image, write_image

MODEL = ["--model-n", "6", "--dof-size", "4", "--blur-coeff", "0.3", "--focal-pos", "3.5",
         "--psf-size", "9"]


@pytest.fixture
def blurred(tmp_path):
    obj = make_test_chart(24)
    obj_path = str(tmp_path / "obj.npy")
    write_image(obj_path, obj)
    data_path = str(tmp_path / "data.npy")
    assert main(["blur", obj_path, "--out", data_path, *MODEL]) == 0
    return obj, obj_path, data_path


def test_blur_writes_data_and_sidecar(blurred):
    obj, _, data_path = blurred
    data = read_image(data_path)
    assert data.shape == (32, 32)
    params = read_config_file(data_path + ".params")
    assert params["blur_coeff"] == "0.3"
    assert len(params["model_hash"]) == 16


def test_blur_restore_round_trip(blurred, tmp_path, capsys):
    obj, obj_path, data_path = blurred
    out = str(tmp_path / "restored.npy")
    # model parameters come from the sidecar
    assert main(["restore", data_path, "--out", out, "--iters", "100", "--stepsize", "paper",
                 "--truth", obj_path]) == 0
    x = read_image(out)
    data = read_image(data_path)
    assert relative_rms(x, obj) < relative_rms(data[4:28, 4:28], obj)
    rows = list(csv.reader(open(tmp_path / "restored.trace.csv")))
    assert rows[0] == ["iteration", "objective", "change", "rms_vs_truth"]
    assert len(rows) == 101
    assert read_config_file(out + ".params")["model_hash"] == read_config_file(data_path + ".params")["model_hash"]
    assert "rms_restored" in capsys.readouterr().out


def test_zero_iterations_is_clamped_crop(blurred, tmp_path):
    _, _, data_path = blurred
    out = str(tmp_path / "k0.npy")
    assert main(["restore", data_path, "--out", out, "--iters", "0"]) == 0
    np.testing.assert_array_equal(read_image(out), np.clip(read_image(data_path)[4:28, 4:28], 0, 1))


@pytest.mark.parametrize("step", ["safe", "paper", "0.5"])
def test_stepsize_choices(blurred, tmp_path, step):
    _, _, data_path = blurred
    assert main(["restore", data_path, "--out", str(tmp_path / f"r{step}.npy"), "--iters", "3",
                 "--stepsize", step]) == 0


def test_bad_stepsize_and_method(blurred, tmp_path):
    _, _, data_path = blurred
    assert main(["restore", data_path, "--out", str(tmp_path / "a.npy"), "--stepsize", "fast"]) == 2
    assert main(["restore", data_path, "--out", str(tmp_path / "b.npy"), "--method", "cg"]) == 2


def test_pg_method(blurred, tmp_path):
    _, _, data_path = blurred
    assert main(["restore", data_path, "--out", str(tmp_path / "pg.npy"), "--iters", "5",
                 "--method", "pg"]) == 0


def test_missing_input_names_path(tmp_path, capsys):
    missing = str(tmp_path / "nope.pgm")
    assert main(["blur", missing, "--out", str(tmp_path / "o.pgm"), *MODEL]) == 2
    assert missing in capsys.readouterr().err


def test_missing_model_parameter(tmp_path, capsys):
    obj_path = str(tmp_path / "obj.npy")
    write_image(obj_path, np.zeros((8, 8)))
    assert main(["blur", obj_path, "--out", str(tmp_path / "d.npy"), "--model-n", "2"]) == 2
    assert "--dof-size" in capsys.readouterr().err


def test_refuses_overwrite(blurred):
    _, obj_path, data_path = blurred
    assert main(["blur", obj_path, "--out", data_path, *MODEL]) == 2
    assert main(["blur", obj_path, "--out", data_path, "--force", *MODEL]) == 0


def test_config_file_and_flag_precedence(tmp_path):
    obj_path = str(tmp_path / "obj.npy")
    write_image(obj_path, make_test_chart(24))
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# table\nmodel-n = 6\ndof_size = 4\nblur_coeff = 0.9\nfocal_pos = 3.5\npsf_size = 9\n")
    out = str(tmp_path / "d.npy")
    assert main(["blur", obj_path, "--out", out, "--config", str(cfg), "--blur-coeff", "0.3"]) == 0
    assert read_config_file(out + ".params")["blur_coeff"] == "0.3"
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign\n")
    assert main(["blur", obj_path, "--out", str(tmp_path / "e.npy"), "--config", str(bad)]) == 2


def test_noise_flag_is_seeded(tmp_path):
    obj_path = str(tmp_path / "obj.npy")
    write_image(obj_path, make_test_chart(24))
    outs = []
    for k, seed in enumerate(["1", "1", "2"]):
        out = str(tmp_path / f"n{k}.npy")
        assert main(["blur", obj_path, "--out", out, *MODEL, "--noise", "poisson:1000", "--seed", seed]) == 0
        outs.append(read_image(out))
    np.testing.assert_array_equal(outs[0], outs[1])
    assert not np.array_equal(outs[0], outs[2])


def test_estimate_recovers_blur(tmp_path, capsys):
    model = DefocusModel(40, 5, 0.03, 8, 23, "columns")
    region = 0.1 + 0.7 * synthetic_edge(model, 30)
    path = str(tmp_path / "gs.npy")
    write_image(path, region)
    out = tmp_path / "est"
    assert main(["estimate", path, "--out", str(out), "--model-n", "40", "--dof-size", "5",
                 "--focal-pos", "1", "--psf-size", "23", "--orientation", "columns",
                 "--candidates", "0.01:0.06:11"]) == 0
    text = capsys.readouterr().out
    fields = dict(kv.split("=") for kv in text.split()[:2])
    assert int(fields["focal_position"]) == 8
    assert abs(float(fields["blur_coefficient"]) - 0.03) <= 0.003
    rows = list(csv.reader(open(out / "candidates.csv")))
    assert rows[0] == ["blur_coefficient", "variation"] and len(rows) == 12
    assert (out / "sharpness.csv").exists()


def test_parse_candidates():
    assert parse_candidates("0.1:0.3:3") == pytest.approx([0.1, 0.2, 0.3])
    assert parse_candidates("0.2, 0.4") == [0.2, 0.4]


def test_sweep_command(tmp_path):
    out = tmp_path / "sw"
    argv = ["sweep", "solvability", "--grid", "0.1,0.2,0.3", "--iters", "3", "--out", str(out)]
    assert main(argv) == 0
    rows = list(csv.reader(open(out / "solvability.csv")))
    assert rows[0][0] == "blur_coefficient" and len(rows) == 4
    manifest = json.loads((out / "solvability_manifest.json").read_text())
    assert str(out / "solvability.csv") in manifest["files"]
    assert main(argv) == 2
    assert main(argv + ["--force"]) == 0


def test_sweep_truth_must_match_extent(tmp_path, capsys):
    truth = str(tmp_path / "truth.npy")
    write_image(truth, make_test_chart(40))
    assert main(["sweep", "solvability", "--grid", "0.1", "--truth", truth, "--out", str(tmp_path)]) == 2
    assert "423" in capsys.readouterr().err


def test_unknown_sweep_kind(tmp_path, capsys):
    assert main(["sweep", "everything", "--out", str(tmp_path)]) == 2
    assert "solvability" in capsys.readouterr().err


def test_pipeline_command(tmp_path):
    src = tmp_path / "imgs"
    out = tmp_path / "out"
    assert main(["pipeline", str(src), "--make-samples", "3", "--iters", "4", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest_0.2.json").read_text())
    assert len(manifest["images"]) == 3
    assert main(["pipeline", str(tmp_path / "absent"), "--out", str(out)]) == 2


def test_version_and_help(capsys):
    assert main(["--version"]) == 0
    assert main([]) == 2


def test_columns_restore_with_threshold(tmp_path, capsys):
    obj = make_test_chart(580)[:96]
    obj_path = str(tmp_path / "scene.npy")
    write_image(obj_path, obj)
    data_path = str(tmp_path / "data.npy")
    model = ["--model-n", "116", "--dof-size", "5", "--blur-coeff", "0.0296", "--focal-pos", "8",
             "--psf-size", "23", "--orientation", "columns"]
    assert main(["blur", obj_path, "--out", data_path, *model, "--noise", "poisson:1e6"]) == 0
    out = str(tmp_path / "restored.npy")
    assert main(["restore", data_path, "--out", out, "--iters", "10", "--stepsize", "paper",
                 "--threshold", "0.11", "--truth", obj_path]) == 0
    data = read_image(data_path)
    assert relative_rms(read_image(out), obj) < relative_rms(data[11:-11, 11:-11], obj)

import json

import numpy as np
import pytest
from click.testing import CliRunner

from pointedit.cli import main
from pointedit.cloud import ColoredPointCloud, read_pc6, write_pc6
from pointedit.mesh import read_obj
from pointedit.training import save_checkpoint


@pytest.fixture()
def runner():
    return CliRunner()


class TestShapeCommands:
    def test_shape_gen_writes_obj_and_sidecar(self, runner, tmp_path):
        out = tmp_path / "chair.obj"
        result = runner.invoke(main, ["shape", "gen", "--category", "chair",
                                      "--seed", "7", "-o", str(out)])
        assert result.exit_code == 0, result.output
        mesh = read_obj(out)
        assert mesh.n_triangles > 0
        assert (tmp_path / "chair.parts").exists()

    def test_shape_params_json(self, runner):
        result = runner.invoke(main, ["shape", "params", "--category", "vase"])
        assert result.exit_code == 0
        specs = json.loads(result.output)
        assert any(s["name"] == "handle_count" for s in specs)


class TestDatasetCommand:
    def test_gen(self, runner, tmp_path):
        result = runner.invoke(main, [
            "dataset", "gen", "--color-shapes", "1", "--geom-bases", "1",
            "--seed", "3", "--points", "64", "--diversify", "offline",
            "-o", str(tmp_path / "data")])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "data" / "manifest.json").exists()
        assert (tmp_path / "data" / "records.bin").exists()


class TestAlignCommand:
    def test_align(self, runner, tmp_path):
        rng = np.random.default_rng(0)
        src = ColoredPointCloud.from_parts(rng.normal(size=(40, 3)), rng.random((40, 3)))
        tgt = ColoredPointCloud(src.points[rng.permutation(40)])
        write_pc6(src, tmp_path / "src.pc6")
        write_pc6(tgt, tmp_path / "tgt.pc6")
        result = runner.invoke(main, ["align", str(tmp_path / "src.pc6"),
                                      str(tmp_path / "tgt.pc6"),
                                      "-o", str(tmp_path / "aligned.pc6"),
                                      "--report", str(tmp_path / "cost.json")])
        assert result.exit_code == 0, result.output
        aligned = read_pc6(tmp_path / "aligned.pc6")
        assert np.array_equal(aligned.points, src.points)
        report = json.loads((tmp_path / "cost.json").read_text())
        assert report["aligned"]["mean"] <= report["identity"]["mean"]


class TestModelCommands:
    def test_edit_and_baseline(self, runner, tmp_path, tiny_checkpoint):
        save_checkpoint(tiny_checkpoint, tmp_path / "ckpt" / "ckpt.npz")
        rng = np.random.default_rng(1)
        cloud = ColoredPointCloud.from_parts(rng.normal(size=(64, 3)), rng.random((64, 3)))
        write_pc6(cloud, tmp_path / "in.pc6")

        result = runner.invoke(main, [
            "edit", "--model", str(tmp_path / "ckpt"), "--input", str(tmp_path / "in.pc6"),
            "--instruction", "make the vase wider", "--sampler", "ddim",
            "--steps", "4", "--seed", "0", "-o", str(tmp_path / "out.pc6")])
        assert result.exit_code == 0, result.output
        assert read_pc6(tmp_path / "out.pc6").n == tiny_checkpoint.config.n_points

        result = runner.invoke(main, [
            "baseline", "--model", str(tmp_path / "ckpt"), "--input", str(tmp_path / "in.pc6"),
            "--src-prompt", "a vase", "--tgt-prompt", "a vase with longer neck",
            "--strength", "0.5", "--steps", "4", "-o", str(tmp_path / "base.pc6")])
        assert result.exit_code == 0, result.output
        assert read_pc6(tmp_path / "base.pc6").n == tiny_checkpoint.config.n_points

    def test_train_then_eval(self, runner, tmp_path):
        result = runner.invoke(main, [
            "dataset", "gen", "--color-shapes", "1", "--geom-bases", "1",
            "--seed", "5", "--points", "48", "--diversify", "none",
            "-o", str(tmp_path / "data")])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, [
            "train", "--data", str(tmp_path / "data"), "--steps", "5", "--batch", "2",
            "--d-model", "16", "--layers", "1", "--heads", "2", "--d-text", "16",
            "--points", "24", "--timesteps", "8", "-o", str(tmp_path / "ckpt")])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ckpt" / "ckpt.npz").exists()
        assert (tmp_path / "ckpt" / "loss_curve.csv").exists()
        result = runner.invoke(main, [
            "train", "--data", str(tmp_path / "data"), "--steps", "5", "--batch", "2",
            "--d-model", "16", "--layers", "1", "--heads", "2", "--d-text", "16",
            "--points", "24", "--timesteps", "8", "--baseline",
            "-o", str(tmp_path / "base_ckpt")])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, [
            "eval", "--model", str(tmp_path / "ckpt"),
            "--baseline-model", str(tmp_path / "base_ckpt"),
            "--testset", str(tmp_path / "data"), "--steps", "4", "--limit", "2",
            "-o", str(tmp_path / "report")])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "report" / "report.csv").exists()
        assert (tmp_path / "report" / "report.json").exists()

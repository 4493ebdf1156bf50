"""End-to-end runs of every CLI subcommand on a reduced scene.

The full pipeline goes synth -> depth -> train / fuse / compare / eval in
temporary directories, checking that each command exits cleanly, writes
the files the next stage consumes, and stays deterministic across reruns.
"""

import filecmp
import os

import numpy as np
import pytest

from binsweep.cli import main
from binsweep.fileio import read_pfm


SIZE = ["--height", "48", "--width", "64", "--margin", "16"]


def run(*argv):
    assert main(list(argv)) == 0


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "scene"
    run("synth", "--out", str(root), "--kind", "plane", "--seed", "0", *SIZE)
    return root


@pytest.fixture(scope="module")
def depth_dir(scene_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-depth") / "out"
    run("depth", "--scene", str(scene_dir), "--out", str(out), "--all-views",
        "--stages", "6")
    return out


class TestSynth:
    def test_writes_scene_layout(self, scene_dir):
        assert sorted(os.listdir(scene_dir)) == ["cams", "gt", "images"]
        assert len(os.listdir(scene_dir / "images")) == 3
        assert len(os.listdir(scene_dir / "cams")) == 3
        assert len(os.listdir(scene_dir / "gt")) == 3

    def test_rerun_is_byte_identical(self, scene_dir, tmp_path):
        again = tmp_path / "scene2"
        run("synth", "--out", str(again), "--kind", "plane", "--seed", "0",
            *SIZE)
        for sub in ("images", "cams", "gt"):
            for name in os.listdir(scene_dir / sub):
                assert filecmp.cmp(scene_dir / sub / name, again / sub / name,
                                   shallow=False), f"{sub}/{name}"

    def test_different_seed_changes_images(self, scene_dir, tmp_path):
        other = tmp_path / "scene-seed1"
        run("synth", "--out", str(other), "--kind", "plane", "--seed", "1",
            *SIZE)
        name = sorted(os.listdir(scene_dir / "images"))[0]
        assert not filecmp.cmp(scene_dir / "images" / name,
                               other / "images" / name, shallow=False)


class TestDepth:
    def test_writes_depth_conf_and_metrics(self, depth_dir):
        entries = os.listdir(depth_dir)
        assert "depth" in entries and "conf" in entries
        assert "metrics.csv" in entries
        assert len(os.listdir(depth_dir / "depth")) == 3
        assert len(os.listdir(depth_dir / "conf")) == 3
        depth = read_pfm(depth_dir / "depth" / sorted(
            os.listdir(depth_dir / "depth"))[0])
        assert depth.shape == (48, 64)
        assert np.isfinite(depth).all()

    def test_metrics_have_header_row(self, depth_dir):
        lines = (depth_dir / "metrics.csv").read_text().strip().splitlines()
        assert "mae" in lines[0]
        assert len(lines) >= 2

    def test_thread_count_does_not_change_output(self, scene_dir, tmp_path):
        a = tmp_path / "t1"
        b = tmp_path / "t8"
        run("depth", "--scene", str(scene_dir), "--out", str(a), "--ref", "0",
            "--stages", "4", "--threads", "1")
        run("depth", "--scene", str(scene_dir), "--out", str(b), "--ref", "0",
            "--stages", "4", "--threads", "8")
        name = sorted(os.listdir(a / "depth"))[0]
        da = read_pfm(a / "depth" / name)
        db = read_pfm(b / "depth" / name)
        assert np.abs(da - db).max() <= 1e-6

    def test_oracle_mode_matches_gt_closely(self, scene_dir, tmp_path):
        out = tmp_path / "oracle"
        run("depth", "--scene", str(scene_dir), "--out", str(out), "--ref",
            "0", "--stages", "6", "--oracle")
        depth = read_pfm(out / "depth" / sorted(
            os.listdir(out / "depth"))[0])
        gt = read_pfm(scene_dir / "gt" / sorted(
            os.listdir(scene_dir / "gt"))[0])
        assert np.abs(depth - gt).max() < 0.2


class TestTrain:
    def test_writes_params_records_and_curve(self, scene_dir, tmp_path):
        out = tmp_path / "trained"
        run("train", str(scene_dir), "--out", str(out), "--epochs", "2")
        entries = os.listdir(out)
        assert "params.txt" in entries
        assert "records.csv" in entries
        assert "loss.csv" in entries and "loss.png" in entries
        lines = (out / "records.csv").read_text().strip().splitlines()
        assert lines[0] == "stage,epoch,loss,valid_fraction"
        assert len(lines) == 1 + 2 * 8


class TestFuse:
    def test_writes_fused_maps_and_cloud(self, scene_dir, depth_dir,
                                         tmp_path):
        out = tmp_path / "fused"
        run("fuse", "--scene", str(scene_dir), "--depths", str(depth_dir),
            "--out", str(out), "--min-consistent", "1", "--tau-ph", "0.0")
        entries = os.listdir(out)
        assert "cloud.ply" in entries
        assert any(name.endswith(".pfm") for name in entries)
        assert (out / "cloud.ply").stat().st_size > 0


class TestCompare:
    def test_writes_strategy_tables(self, scene_dir, tmp_path):
        out = tmp_path / "cmp"
        run("compare", "--scene", str(scene_dir), "--out", str(out),
            "--dense", "64")
        entries = os.listdir(out)
        assert "compare.csv" in entries
        assert "strategies.csv" in entries
        assert "stage_valid_fraction.csv" in entries
        lines = (out / "strategies.csv").read_text().strip().splitlines()
        assert len(lines) == 4
        assert lines[1].startswith("staged,")
        assert lines[2].startswith("binary,")
        assert lines[3].startswith("dense,")


class TestEval:
    def test_scores_prediction_against_reference(self, scene_dir, depth_dir,
                                                 tmp_path):
        out = tmp_path / "evald"
        pred = depth_dir / "depth" / sorted(
            os.listdir(depth_dir / "depth"))[0]
        gt = scene_dir / "gt" / sorted(os.listdir(scene_dir / "gt"))[0]
        run("eval", "--pred", str(pred), "--gt", str(gt), "--out", str(out))
        entries = os.listdir(out)
        assert "metrics.csv" in entries
        text = (out / "metrics.csv").read_text()
        assert "mae" in text


class TestFigures:
    def test_report_images_are_written(self, scene_dir, tmp_path):
        out = tmp_path / "figs"
        run("depth", "--scene", str(scene_dir), "--out", str(out), "--ref",
            "0", "--stages", "4")
        figures = out / "figures"
        assert figures.is_dir()
        pngs = [n for n in os.listdir(figures) if n.endswith(".png")]
        assert pngs
        for name in pngs:
            assert (figures / name).stat().st_size > 1000

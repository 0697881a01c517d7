"""End-to-end pipeline runs on a small scripted scene."""

import dataclasses
import hashlib
import json
import shutil
from pathlib import Path
from types import SimpleNamespace

import pytest
from helpers import tiny_scene_spec

from splatinit.config import PipelineConfig, load_config
from splatinit.errors import ConfigError, MissingInput, StageFailure
from splatinit.pipeline import (
    resolve_scene,
    run_pipeline,
    run_stage,
    stage_detect,
    stage_track,
    stage_verify,
)
from splatinit.records import read_gaussians
from splatinit.sceneflow import read_trajectories

STAGES = ["detect", "track", "flow", "encode", "init", "verify"]


def tiny_config(scene_path) -> PipelineConfig:
    return PipelineConfig(
        scene=str(scene_path),
        d_fourier=3,
        n_query_points=300,
        n_per_frame=500,
        static_stride=5,
        seed=3,
    )


def run_tiny(root: Path, scene_path: Path | None = None):
    if scene_path is None:
        scene_path = root / "tiny.json"
        scene_path.write_text(tiny_scene_spec().to_json())
    config = tiny_config(scene_path)
    dataset = root / "dataset"
    output = root / "run"
    run_pipeline(config, dataset, output)
    report = stage_verify(config, dataset, output)
    return SimpleNamespace(
        config=config,
        scene_path=scene_path,
        dataset=dataset,
        output=output,
        report=report,
    )


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    return run_tiny(tmp_path_factory.mktemp("pipe"))


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestLayout:
    def test_every_stage_leaves_a_manifest(self, pipe):
        assert (pipe.dataset / "manifest.json").is_file()
        for stage in STAGES:
            assert (pipe.output / stage / "manifest.json").is_file(), stage

    def test_config_is_mirrored_next_to_outputs(self, pipe):
        assert load_config(pipe.output / "config.toml") == pipe.config

    def test_frame_file_counts(self, pipe):
        t_total = 12
        assert len(list((pipe.dataset / "images").glob("*.pfm"))) == t_total
        assert len(list((pipe.dataset / "depth").glob("*.pfm"))) == t_total
        assert len(list((pipe.dataset / "flow").glob("*.flo"))) == t_total - 1
        assert len(list((pipe.output / "detect").glob("*.pgm"))) == t_total - 1
        assert len(list((pipe.output / "track" / "masks").glob("*.pgm"))) == t_total

    def test_manifest_hashes_match_files(self, pipe):
        roots = {"dataset": pipe.dataset, "output": pipe.output}
        checked = 0
        for stage in STAGES:
            doc = json.loads((pipe.output / stage / "manifest.json").read_text())
            assert doc["stage"] == stage
            for section in ("inputs", "outputs"):
                for label, digest in doc[section].items():
                    kind, _, rel = label.partition("/")
                    assert kind in roots, label
                    assert not Path(rel).is_absolute()
                    payload = (roots[kind] / rel).read_bytes()
                    assert hashlib.sha256(payload).hexdigest() == digest
                    checked += 1
        assert checked > 50

    def test_manifest_parameters_record_stage_settings(self, pipe):
        doc = json.loads((pipe.output / "detect" / "manifest.json").read_text())
        assert doc["parameters"]["tau_epi"] == pipe.config.tau_epi
        doc = json.loads((pipe.output / "encode" / "manifest.json").read_text())
        assert doc["parameters"]["d_fourier"] == 3


class TestQuality:
    def test_trajectories_match_scripted_motion(self, pipe):
        assert pipe.report["trajectory_rmse"] < 1e-4

    def test_instance_masks_are_exact(self, pipe):
        assert pipe.report["min_iou"] == 1.0
        assert set(pipe.report["instances"]) == {"1", "2"}
        for entry in pipe.report["instances"].values():
            assert entry["iou"] == 1.0

    def test_dynamic_records_pair_with_trajectories(self, pipe):
        records, _ = read_gaussians(pipe.output / "init" / "gaussians.ply")
        dynamics = [r for r in records if r.kind == "dynamic"]
        pairing = json.loads(
            (pipe.output / "init" / "dynamic_tracks.json").read_text()
        )["track_ids"]
        trajs = read_trajectories(pipe.output / "flow" / "trajectories.csv")
        assert len(dynamics) == len(pairing) == len(trajs)
        assert pairing == [tr.track_id for tr in trajs]
        assert [r.instance_id for r in dynamics] == [tr.instance_id for tr in trajs]

    def test_static_budget_is_per_strided_frame(self, pipe):
        records, _ = read_gaussians(pipe.output / "init" / "gaussians.ply")
        statics = [r for r in records if r.kind == "static"]
        assert len(statics) == 3 * pipe.config.n_per_frame

    def test_report_file_matches_returned_dict(self, pipe):
        on_disk = json.loads((pipe.output / "verify" / "report.json").read_text())
        assert on_disk == pipe.report


class TestDeterminism:
    def test_rerun_is_byte_identical(self, pipe, tmp_path):
        again = run_tiny(tmp_path, scene_path=pipe.scene_path)
        assert tree_bytes(again.dataset) == tree_bytes(pipe.dataset)
        assert tree_bytes(again.output) == tree_bytes(pipe.output)

    def test_parallel_run_matches_serial(self, pipe, tmp_path):
        config = dataclasses.replace(pipe.config, jobs=3)
        run_pipeline(config, tmp_path / "dataset", tmp_path / "run")
        stage_verify(config, tmp_path / "dataset", tmp_path / "run")
        assert tree_bytes(tmp_path / "dataset") == tree_bytes(pipe.dataset)
        serial = tree_bytes(pipe.output)
        parallel = tree_bytes(tmp_path / "run")
        del serial["config.toml"], parallel["config.toml"]  # jobs differs
        assert parallel == serial

    def test_stage_reruns_from_files_alone(self, pipe, tmp_path):
        replay = tmp_path / "replay"
        shutil.copytree(pipe.output, replay)
        before = (replay / "encode" / "curves.csv").read_bytes()
        shutil.rmtree(replay / "encode")
        run_stage("encode", pipe.config, pipe.dataset, replay)
        assert (replay / "encode" / "curves.csv").read_bytes() == before


class TestFailureModes:
    def test_missing_cameras_names_the_stage(self, tmp_path):
        with pytest.raises(MissingInput, match="detect"):
            stage_detect(PipelineConfig(), tmp_path, tmp_path / "run")

    def test_missing_flow_directory(self, pipe, tmp_path):
        broken = tmp_path / "broken"
        shutil.copytree(pipe.dataset, broken)
        shutil.rmtree(broken / "flow")
        with pytest.raises(MissingInput, match="detect.*flow"):
            stage_detect(pipe.config, broken, tmp_path / "run")

    def test_track_requires_detect_outputs(self, pipe, tmp_path):
        with pytest.raises(MissingInput, match="track"):
            stage_track(pipe.config, pipe.dataset, tmp_path / "empty_run")

    def test_unknown_scene_is_a_config_error(self):
        with pytest.raises(ConfigError, match="neither a preset nor a file"):
            resolve_scene(PipelineConfig(scene="no_such_scene"))

    def test_preset_scene_resolves(self):
        assert resolve_scene(PipelineConfig(scene="scene_a")).name == "scene_a"

    def test_corrupt_stage_input_wraps_with_stage_name(self, pipe, tmp_path):
        replay = tmp_path / "replay"
        shutil.copytree(pipe.output, replay)
        (replay / "flow" / "trajectories.csv").write_text("track_id,bogus\n")
        with pytest.raises(StageFailure, match="encode"):
            run_stage("encode", pipe.config, pipe.dataset, replay)

    def test_verify_rejects_mismatched_pairing(self, pipe, tmp_path):
        replay = tmp_path / "replay"
        shutil.copytree(pipe.output, replay)
        pairing = json.loads((replay / "init" / "dynamic_tracks.json").read_text())
        pairing["track_ids"] = pairing["track_ids"][:-1]
        (replay / "init" / "dynamic_tracks.json").write_text(json.dumps(pairing))
        with pytest.raises(StageFailure, match="verify"):
            run_stage("verify", pipe.config, pipe.dataset, replay)

    def test_run_without_scene_skips_generation(self, pipe, tmp_path):
        config = PipelineConfig(
            scene="",
            d_fourier=3,
            n_query_points=300,
            n_per_frame=500,
            static_stride=5,
            seed=3,
        )
        out = tmp_path / "run"
        run_pipeline(config, pipe.dataset, out)
        assert (out / "init" / "gaussians.ply").is_file()
        report = stage_verify(config, pipe.dataset, out)
        assert report["min_iou"] == 1.0

import json

import numpy as np
import pytest

from pointedit.cloud import ColoredPointCloud
from pointedit.diffusion import SamplerConfig
from pointedit.pipeline import (
    PipelineError,
    Session,
    SessionStore,
    baseline_edit_once,
    cloud_to_wire,
    edit_once,
    evaluate,
    replay_transcript,
    session_edit,
    wire_to_cloud,
    wrap_model,
)
from pointedit.text_encoder import HashedTextEncoder


def random_cloud(n=100, seed=0):
    rng = np.random.default_rng(seed)
    return ColoredPointCloud.from_parts(rng.normal(size=(n, 3)), rng.random((n, 3)))


class TestWire:
    def test_roundtrip(self):
        cloud = random_cloud(33, seed=1)
        back = wire_to_cloud(cloud_to_wire(cloud))
        assert np.array_equal(back.points, cloud.points)

    def test_bad_base64(self):
        from pointedit.cloud import CloudError

        with pytest.raises(CloudError, match="base64"):
            wire_to_cloud({"n": 4, "data": "!!!not base64!!!", "color_range": "01"})

    def test_length_mismatch(self):
        from pointedit.cloud import CloudError

        wire = cloud_to_wire(random_cloud(5))
        wire["n"] = 6
        with pytest.raises(CloudError, match="length"):
            wire_to_cloud(wire)


class TestEditOnce:
    def test_deterministic(self, tiny_model):
        cloud = random_cloud(80, seed=2)
        cfg = SamplerConfig(kind="ddim", steps=8, seed=5)
        a = edit_once(tiny_model, cloud, "make the vase wider", cfg)
        b = edit_once(tiny_model, cloud, "make the vase wider", cfg)
        assert np.array_equal(a.points, b.points)

    def test_output_size_and_ranges(self, tiny_model):
        cloud = random_cloud(200, seed=3)
        out = edit_once(tiny_model, cloud, "make the vase neck longer",
                        SamplerConfig(steps=8, seed=0))
        assert out.n == tiny_model.n_points
        assert out.rgb.min() >= 0.0 and out.rgb.max() <= 1.0

    def test_empty_instruction(self, tiny_model):
        with pytest.raises(PipelineError, match="empty"):
            edit_once(tiny_model, random_cloud(), "  ", SamplerConfig(steps=8))

    def test_encoder_dim_checked(self, tiny_checkpoint):
        with pytest.raises(PipelineError, match="dim"):
            wrap_model(tiny_checkpoint, HashedTextEncoder(8))

    def test_ddpm_path(self, tiny_model):
        out = edit_once(tiny_model, random_cloud(64, seed=4), "make the vase wider",
                        SamplerConfig(kind="ddpm", steps=8, seed=1))
        assert out.n == tiny_model.n_points


class TestBaselineEdit:
    def test_runs_and_is_deterministic(self, tiny_model):
        cloud = random_cloud(64, seed=5)
        a = baseline_edit_once(tiny_model, cloud, "a vase", "a vase with longer neck",
                               strength=0.5, steps=8, seed=2)
        b = baseline_edit_once(tiny_model, cloud, "a vase", "a vase with longer neck",
                               strength=0.5, steps=8, seed=2)
        assert np.array_equal(a.points, b.points)

    def test_empty_prompt(self, tiny_model):
        with pytest.raises(PipelineError):
            baseline_edit_once(tiny_model, random_cloud(), " ", "a vase", 0.5, steps=8)


class TestEvaluate:
    def test_report_structure(self, tiny_model, tiny_dataset, tmp_path):
        triplets, _ = tiny_dataset
        report = evaluate(tiny_model, tiny_model, triplets[:3], steps=4, seed=0)
        assert len(report.rows) == 3
        for row in report.rows:
            assert row["ours_chamfer"] >= 0
            if row["kind"] == "color":
                assert row["ours_rgb_mse"] >= 0
        # aggregates equal means of per-row values
        geometry = [r for r in report.rows if r["kind"] == "geometry"]
        if geometry:
            mean = np.mean([r["ours_chamfer"] for r in geometry])
            assert report.aggregates["ours_chamfer_mean"] == pytest.approx(mean, abs=1e-9)
        report.to_csv(tmp_path / "report.csv")
        report.to_json(tmp_path / "report.json")
        header = (tmp_path / "report.csv").read_text().splitlines()[0]
        assert header == ",".join(report.COLUMNS)
        parsed = json.loads((tmp_path / "report.json").read_text())
        assert set(parsed) == {"rows", "aggregates", "aggregates_x100", "runtime_seconds"}
        for key, value in parsed["aggregates"].items():
            assert parsed["aggregates_x100"][key] == pytest.approx(100 * value)

    def test_oracle_stub_scores_zero(self, tiny_dataset):
        # a model that returns the target exactly gives Chamfer 0 / RGB MSE 0
        triplets, _ = tiny_dataset
        triplet = triplets[0]

        class OracleModel:
            n_points = triplet.target.n

            def __init__(self):
                self.encoder = HashedTextEncoder(8)

        from pointedit import pipeline

        report_row = {
            "chamfer": pipeline._chamfer_at_eval_size(triplet.target, triplet.target),
            "rgb": pipeline._matched_rgb_mse(triplet.target, triplet.target),
        }
        assert report_row["chamfer"] == pytest.approx(0.0, abs=1e-12)
        assert report_row["rgb"] == pytest.approx(0.0, abs=1e-12)


class TestSessions:
    def test_chaining_and_history(self, tiny_model):
        store = SessionStore()
        session = store.create(random_cloud(64, seed=6))
        cfg = SamplerConfig(steps=4, seed=3)
        for k, instr in enumerate(["make the vase wider", "make the vase narrower",
                                   "make the vase body taller"]):
            entry = session_edit(tiny_model, session, instr, cfg)
            assert entry.index == k
        assert len(session.entries) == 3
        assert session.current == 2

    def test_undo_then_edit_truncates(self, tiny_model):
        store = SessionStore()
        session = store.create(random_cloud(64, seed=7))
        cfg = SamplerConfig(steps=4, seed=4)
        session_edit(tiny_model, session, "make the vase wider", cfg)
        session_edit(tiny_model, session, "make the vase narrower", cfg)
        session.undo()
        assert session.current == 0
        session_edit(tiny_model, session, "make the vase body taller", cfg)
        assert len(session.entries) == 2
        assert session.entries[1].instruction == "make the vase body taller"

    def test_undo_past_initial(self, tiny_model):
        store = SessionStore()
        session = store.create(random_cloud(32, seed=8))
        assert session.undo() == -1
        assert session.undo() == -1
        assert session.current_cloud().n == 32

    def test_history_entries_immutable_after_creation(self, tiny_model):
        store = SessionStore()
        session = store.create(random_cloud(64, seed=9))
        cfg = SamplerConfig(steps=4, seed=5)
        entry = session_edit(tiny_model, session, "make the vase wider", cfg)
        snapshot = entry.cloud.points.copy()
        session_edit(tiny_model, session, "make the vase narrower", cfg)
        assert np.array_equal(session.entries[0].cloud.points, snapshot)


class TestTranscripts:
    def test_replay_reproduces_final_cloud(self, tiny_model, tmp_path):
        store = SessionStore(transcript_dir=tmp_path)
        session = store.create(random_cloud(64, seed=10))
        cfg1 = SamplerConfig(steps=4, seed=11)
        cfg2 = SamplerConfig(steps=4, seed=12)
        session_edit(tiny_model, session, "make the vase wider", cfg1)
        store.log_edit(session.id, "make the vase wider", cfg1)
        session_edit(tiny_model, session, "make the vase neck longer", cfg2)
        store.log_edit(session.id, "make the vase neck longer", cfg2)
        final = session.current_cloud()
        replayed = replay_transcript(tiny_model, tmp_path / f"{session.id}.jsonl")
        assert np.array_equal(replayed.points, final.points)

    def test_replay_with_undo(self, tiny_model, tmp_path):
        store = SessionStore(transcript_dir=tmp_path)
        session = store.create(random_cloud(64, seed=13))
        cfg = SamplerConfig(steps=4, seed=14)
        session_edit(tiny_model, session, "make the vase wider", cfg)
        store.log_edit(session.id, "make the vase wider", cfg)
        session.undo()
        store.log_undo(session.id)
        replayed = replay_transcript(tiny_model, tmp_path / f"{session.id}.jsonl")
        assert np.array_equal(replayed.points, session.current_cloud().points)

    def test_bad_transcript(self, tiny_model, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({"event": "edit"}) + "\n")
        with pytest.raises(PipelineError):
            replay_transcript(tiny_model, path)

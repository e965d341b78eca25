import numpy as np
import pytest

from pointedit.dataset import generate_dataset
from pointedit.denoiser import DenoiserConfig, init_params
from pointedit.diffusion import build_schedule
from pointedit.text_encoder import HashedTextEncoder
from pointedit.training import (
    AdamState,
    CheckpointError,
    TrainConfig,
    adam_step,
    clip_gradients,
    load_checkpoint,
    prepare_training_data,
    save_checkpoint,
    train,
)

TINY = DenoiserConfig(d_model=16, n_layers=1, n_heads=2, d_text=16, n_points=24, timesteps=8)


@pytest.fixture(scope="module")
def tiny_triplets():
    triplets, _, _ = generate_dataset(color_shapes=1, geom_bases=1, seed=21,
                                      n_points=48, diversify="offline",
                                      categories=("vase",))
    return triplets[:6]


@pytest.fixture(scope="module")
def tiny_data(tiny_triplets):
    return prepare_training_data(tiny_triplets, TINY, HashedTextEncoder(16))


class TestAdam:
    def test_single_step_closed_form(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        state = AdamState.fresh(params)
        adam_step(params, grads, state, lr=0.1, betas=(0.9, 0.999), eps=1e-8)
        # bias-corrected m_hat = 1, v_hat = 1 -> update = -lr / (1 + eps)
        expected = -0.1 * 1.0 / (1.0 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, abs=1e-12)

    def test_zero_grads_no_change(self):
        params = {"w": np.arange(4, dtype=float)}
        before = params["w"].copy()
        state = AdamState.fresh(params)
        adam_step(params, {"w": np.zeros(4)}, state, lr=0.1)
        assert np.array_equal(params["w"], before)

    def test_non_finite_grads_skipped(self):
        params = {"w": np.ones(2)}
        before = params["w"].copy()
        state = AdamState.fresh(params)
        ok = adam_step(params, {"w": np.array([np.nan, 1.0])}, state, lr=0.1)
        assert not ok
        assert state.skipped == 1
        assert state.updates == 0
        assert np.array_equal(params["w"], before)

    def test_deterministic_trajectories(self):
        def run():
            rng = np.random.default_rng(5)
            params = {"w": rng.normal(size=8)}
            state = AdamState.fresh(params)
            for _ in range(20):
                adam_step(params, {"w": params["w"] * 0.3 + 1}, state, lr=0.01)
            return params["w"]

        assert np.array_equal(run(), run())

    def test_clip(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        norm = clip_gradients(grads, max_norm=1.0)
        assert norm == pytest.approx(5.0)
        total = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
        assert total == pytest.approx(1.0)


class TestPrepare:
    def test_shapes_and_normalization(self, tiny_data):
        m = len(tiny_data.ids)
        assert tiny_data.sources.shape == (m, TINY.n_points, 6)
        assert tiny_data.targets.shape == (m, TINY.n_points, 6)
        # source clouds are normalized to max |coord| = 1
        for i in range(m):
            assert np.abs(tiny_data.sources[i, :, :3]).max() == pytest.approx(1.0, abs=1e-6)

    def test_pairing_preserved(self, tiny_triplets):
        data = prepare_training_data(tiny_triplets, TINY, HashedTextEncoder(16))
        # color triplets keep identical xyz rows after shared resampling
        for i, t in enumerate(tiny_triplets):
            if t.kind == "color":
                assert np.allclose(data.sources[i, :, :3], data.targets[i, :, :3])

    def test_baseline_mode(self, tiny_triplets):
        data = prepare_training_data(tiny_triplets, TINY, HashedTextEncoder(16), baseline=True)
        assert len(data.ids) == 2 * len(tiny_triplets)
        assert np.all(data.sources == 0)

    def test_variant_embeddings(self, tiny_data, tiny_triplets):
        assert tiny_data.embeddings[0].shape == (len(tiny_triplets[0].instructions), 16)


class TestTrainLoop:
    def test_loss_decreases(self, tiny_data):
        cfg = TrainConfig(steps=60, batch_size=4, lr=3e-3, cond_dropout=0.0, seed=0)
        _, curve = train(tiny_data, TINY, cfg)
        first = np.mean([l for _, l in curve[:10]])
        last = np.mean([l for _, l in curve[-10:]])
        assert last < first

    def test_fixed_batch_loss_strictly_decreases_early(self, tiny_data):
        # full-batch setting: every step sees the same records
        cfg = TrainConfig(steps=50, batch_size=1, lr=1e-3, cond_dropout=0.0, seed=1)
        single = type(tiny_data)(sources=tiny_data.sources[:1], targets=tiny_data.targets[:1],
                                 embeddings=[tiny_data.embeddings[0][:1]], ids=tiny_data.ids[:1],
                                 kinds=tiny_data.kinds[:1], dataset_hash="x")
        _, curve = train(single, TINY, cfg)
        losses = [l for _, l in curve]
        assert np.mean(losses[-5:]) < np.mean(losses[:5])

    def test_fixed_batch_strict_decrease(self, tiny_data):
        # 50 full-batch gradient steps on one frozen batch, small lr:
        # the loss must drop strictly every step
        from pointedit.denoiser import init_params
        from pointedit.diffusion import build_schedule, loss_gradients, training_loss

        rng = np.random.default_rng(9)
        schedule = build_schedule(TINY.timesteps)
        params = init_params(TINY, seed=9)
        state = AdamState.fresh(params)
        m = len(tiny_data.ids)
        target = tiny_data.targets
        source = tiny_data.sources
        emb = np.stack([e[0] for e in tiny_data.embeddings])
        t = rng.integers(1, TINY.timesteps + 1, size=m)
        eps = rng.standard_normal(target.shape)
        losses = []
        for _ in range(50):
            loss, ctx = training_loss(params, TINY, schedule, target, source, emb, t, eps)
            losses.append(loss)
            adam_step(params, loss_gradients(ctx), state, lr=1e-4)
        assert all(losses[i + 1] < losses[i] for i in range(49))

    def test_checkpoint_roundtrip(self, tiny_data, tmp_path):
        cfg = TrainConfig(steps=10, batch_size=2, seed=2)
        ckpt, _ = train(tiny_data, TINY, cfg, out_dir=tmp_path)
        loaded = load_checkpoint(tmp_path / "ckpt.npz")
        assert loaded.config == TINY
        assert loaded.step == 10
        for k in ckpt.params:
            assert np.array_equal(loaded.params[k], ckpt.params[k])
        for k in ckpt.adam.m:
            assert np.array_equal(loaded.adam.m[k], ckpt.adam.m[k])
        assert loaded.rng_state == ckpt.rng_state

    def test_resume_equals_uninterrupted(self, tiny_data, tmp_path):
        cfg_full = TrainConfig(steps=30, batch_size=2, seed=3)
        full, _ = train(tiny_data, TINY, cfg_full)

        cfg_half = TrainConfig(steps=20, batch_size=2, seed=3)
        half, _ = train(tiny_data, TINY, cfg_half, out_dir=tmp_path)
        loaded = load_checkpoint(tmp_path / "ckpt.npz")
        cfg_rest = TrainConfig(steps=10, batch_size=2, seed=3)
        resumed, _ = train(tiny_data, TINY, cfg_rest, resume=loaded)

        assert resumed.step == full.step
        for k in full.params:
            assert np.abs(resumed.params[k] - full.params[k]).max() < 1e-6

    def test_resume_dataset_mismatch_rejected(self, tiny_data, tmp_path):
        cfg = TrainConfig(steps=5, batch_size=2, seed=4)
        train(tiny_data, TINY, cfg, out_dir=tmp_path)
        loaded = load_checkpoint(tmp_path / "ckpt.npz")
        other = type(tiny_data)(sources=tiny_data.sources, targets=tiny_data.targets,
                                embeddings=tiny_data.embeddings, ids=tiny_data.ids,
                                kinds=tiny_data.kinds, dataset_hash="different")
        with pytest.raises(CheckpointError, match="dataset"):
            train(other, TINY, cfg, resume=loaded)

    def test_loss_curve_file(self, tiny_data, tmp_path):
        cfg = TrainConfig(steps=5, batch_size=2, seed=5)
        train(tiny_data, TINY, cfg, out_dir=tmp_path)
        lines = (tmp_path / "loss_curve.csv").read_text().strip().splitlines()
        assert lines[0] == "step,loss"
        assert len(lines) == 6


class TestCheckpointValidation:
    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "ckpt.npz"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_file(self, tiny_data, tmp_path):
        cfg = TrainConfig(steps=3, batch_size=2, seed=6)
        train(tiny_data, TINY, cfg, out_dir=tmp_path)
        blob = (tmp_path / "ckpt.npz").read_bytes()
        (tmp_path / "ckpt.npz").write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "ckpt.npz")

    def test_params_must_match_config(self, tiny_data, tmp_path):
        cfg = TrainConfig(steps=2, batch_size=2, seed=7)
        ckpt, _ = train(tiny_data, TINY, cfg)
        del ckpt.params["head.w"]
        save_checkpoint(ckpt, tmp_path / "bad.npz")
        with pytest.raises(CheckpointError, match="parameters"):
            load_checkpoint(tmp_path / "bad.npz")

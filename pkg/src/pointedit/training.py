"""Training loop, Adam optimizer, and checkpointing for the denoiser.

Batches are assembled from pre-resampled, pre-normalized triplets; geometry
pairs must already be aligned. Every random draw comes from one seeded
generator whose bit state is checkpointed, so a resumed run reproduces the
uninterrupted trajectory exactly.

Conditional training noises the target cloud expressed in the source
cloud's normalized frame; the baseline mode instead trains a text-only
generator on caption/cloud rows with zeroed source channels.
"""

from __future__ import annotations

import hashlib
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cloud import ColoredPointCloud, apply_norm_state, normalize, resample_indices
from .dataset import EditTriplet, derive_prompt_pair
from .denoiser import DenoiserConfig, ModelError, init_params
from .diffusion import NoiseSchedule, build_schedule, loss_gradients, training_loss

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DIVERGENCE_ABORT = 1e4


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-4  # desk-scale default; the reference fine-tuning rate 1e-5 is a flag away
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    cond_dropout: float = 0.1
    grad_clip: float = 0.0  # global max-norm; 0 disables
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final only
    log_every: int = 50

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: dict
    v: dict
    updates: int = 0
    skipped: int = 0

    @staticmethod
    def fresh(params: dict) -> "AdamState":
        return AdamState(m={k: np.zeros_like(p) for k, p in params.items()},
                         v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> bool:
    """One bias-corrected Adam update in place; skips (and counts) non-finite grads."""
    if any(not np.all(np.isfinite(g)) for g in grads.values()):
        state.skipped += 1
        log.warning("skipping Adam update %d: non-finite gradients", state.updates + 1)
        return False
    b1, b2 = betas
    state.updates += 1
    t = state.updates
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / (1 - b1 ** t)
        v_hat = state.v[k] / (1 - b2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return True


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale all gradients to a global norm cap; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float((g ** 2).sum()) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for k in grads:
            grads[k] *= scale
    return total


@dataclass
class PreparedDataset:
    """Triplets resampled to the model size, normalized, and pre-encoded."""

    sources: np.ndarray   # (M, N, 6)
    targets: np.ndarray   # (M, N, 6)
    embeddings: list      # per record: (V, d_text) instruction variants
    ids: list
    kinds: list
    dataset_hash: str


def _dataset_hash(ids: list, baseline: bool) -> str:
    payload = json.dumps({"ids": ids, "baseline": baseline}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def prepare_training_data(triplets: list[EditTriplet], config: DenoiserConfig,
                          encoder, baseline: bool = False,
                          resample_seed: int = 0) -> PreparedDataset:
    """Resample pairs to config.n_points with shared row indices and normalize.

    Conditional mode keeps (source, target-in-source-frame, instructions).
    Baseline mode emits two caption rows per triplet (source and target
    clouds under their own frames) with zeroed source channels.
    """
    if not triplets:
        raise ModelError("empty training set")
    sources, targets, embeddings, ids, kinds = [], [], [], [], []
    for t in triplets:
        idx = resample_indices(t.source, config.n_points, seed=resample_seed)
        src = t.source.points[idx]
        tgt = t.target.points[idx]
        if baseline:
            src_prompt, tgt_prompt = derive_prompt_pair(t)
            for prompt, pts in ((src_prompt, src), (tgt_prompt, tgt)):
                norm, _ = normalize(ColoredPointCloud(pts))
                targets.append(norm.points.astype(np.float64))
                sources.append(np.zeros((config.n_points, 6)))
                embeddings.append(np.stack([encoder.encode(prompt)]))
                ids.append(f"{t.id}:{prompt}")
                kinds.append(t.kind)
        else:
            norm_src, state = normalize(ColoredPointCloud(src))
            norm_tgt = apply_norm_state(ColoredPointCloud(tgt), state)
            sources.append(norm_src.points.astype(np.float64))
            targets.append(norm_tgt.points.astype(np.float64))
            embeddings.append(np.stack([encoder.encode(s) for s in t.instructions]))
            ids.append(t.id)
            kinds.append(t.kind)
    return PreparedDataset(sources=np.stack(sources), targets=np.stack(targets),
                           embeddings=embeddings, ids=ids, kinds=kinds,
                           dataset_hash=_dataset_hash(ids, baseline))


@dataclass
class Checkpoint:
    version: int
    config: DenoiserConfig
    params: dict
    adam: AdamState
    step: int
    schedule: dict
    train_config: dict
    dataset_hash: str
    rng_state: dict | None = None
    d_text: int = field(default=0)

    def __post_init__(self):
        if self.d_text == 0:
            self.d_text = self.config.d_text

    def model_schedule(self) -> NoiseSchedule:
        return NoiseSchedule.from_dict(self.schedule)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "schedule": ckpt.schedule,
        "train_config": ckpt.train_config,
        "dataset_hash": ckpt.dataset_hash,
        "rng_state": ckpt.rng_state,
        "adam_updates": ckpt.adam.updates,
        "adam_skipped": ckpt.adam.skipped,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for k, v in ckpt.params.items():
        arrays[f"param:{k}"] = v
    for k, v in ckpt.adam.m.items():
        arrays[f"adam_m:{k}"] = v
    for k, v in ckpt.adam.v.items():
        arrays[f"adam_v:{k}"] = v
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_checkpoint(path) -> Checkpoint:
    try:
        with np.load(Path(path)) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError, EOFError, zipfile.BadZipFile, KeyError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if "meta" not in arrays:
        raise CheckpointError("checkpoint missing metadata")
    try:
        meta = json.loads(bytes(arrays["meta"].tobytes()).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint metadata") from exc
    if meta["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta['version']}")
    config = DenoiserConfig.from_dict(meta["config"])
    params = {k.split(":", 1)[1]: arrays[k] for k in arrays if k.startswith("param:")}
    adam = AdamState(
        m={k.split(":", 1)[1]: arrays[k] for k in arrays if k.startswith("adam_m:")},
        v={k.split(":", 1)[1]: arrays[k] for k in arrays if k.startswith("adam_v:")},
        updates=meta["adam_updates"], skipped=meta["adam_skipped"])
    expected = set(init_params(config, seed=0))
    if set(params) != expected:
        raise CheckpointError("checkpoint parameters do not match its config")
    return Checkpoint(version=meta["version"], config=config, params=params, adam=adam,
                      step=meta["step"], schedule=meta["schedule"],
                      train_config=meta["train_config"], dataset_hash=meta["dataset_hash"],
                      rng_state=meta["rng_state"])


def write_loss_curve(curve: list, path) -> None:
    with open(Path(path), "w") as f:
        f.write("step,loss\n")
        for step, loss in curve:
            f.write(f"{step},{loss:.8f}\n")


def train(data: PreparedDataset, model_config: DenoiserConfig, train_config: TrainConfig,
          schedule: NoiseSchedule | None = None, resume: Checkpoint | None = None,
          out_dir=None, seed_params: int | None = None):
    """Run (or resume) training; returns (Checkpoint, loss curve).

    Per step: a uniform batch of records, one instruction variant each,
    t ~ U{1..T}, eps ~ N(0, I), optional condition dropout; then one Adam
    update on the batch-mean noise-prediction loss.
    """
    schedule = schedule or build_schedule(model_config.timesteps)
    if schedule.timesteps != model_config.timesteps:
        raise ModelError("schedule length must match model timesteps")
    m_records = len(data.ids)
    bsz = train_config.batch_size

    if resume is not None:
        if resume.config != model_config:
            raise CheckpointError("resume config mismatch")
        if resume.dataset_hash != data.dataset_hash:
            raise CheckpointError("resume dataset mismatch")
        params = {k: v.copy() for k, v in resume.params.items()}
        adam = AdamState(m={k: v.copy() for k, v in resume.adam.m.items()},
                         v={k: v.copy() for k, v in resume.adam.v.items()},
                         updates=resume.adam.updates, skipped=resume.adam.skipped)
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start_step = resume.step
    else:
        params = init_params(model_config,
                             seed=train_config.seed if seed_params is None else seed_params)
        adam = AdamState.fresh(params)
        rng = np.random.default_rng(train_config.seed)
        start_step = 0

    curve: list = []
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def snapshot(step):
        return Checkpoint(version=CHECKPOINT_VERSION, config=model_config,
                          params={k: v.copy() for k, v in params.items()},
                          adam=AdamState(m={k: v.copy() for k, v in adam.m.items()},
                                         v={k: v.copy() for k, v in adam.v.items()},
                                         updates=adam.updates, skipped=adam.skipped),
                          step=step, schedule=schedule.to_dict(),
                          train_config=train_config.to_dict(),
                          dataset_hash=data.dataset_hash,
                          rng_state=rng.bit_generator.state)

    for step in range(start_step + 1, start_step + train_config.steps + 1):
        idx = rng.integers(0, m_records, size=bsz)
        variants = np.array([rng.integers(0, len(data.embeddings[i])) for i in idx])
        t = rng.integers(1, model_config.timesteps + 1, size=bsz)
        eps = rng.standard_normal((bsz, model_config.n_points, 6))
        drop = rng.random(bsz) < train_config.cond_dropout

        target = data.targets[idx]
        source = data.sources[idx]
        emb = np.stack([data.embeddings[i][v] for i, v in zip(idx, variants)])

        loss, ctx = training_loss(params, model_config, schedule, target, source,
                                  emb, t, eps, null_mask=drop)
        if loss > DIVERGENCE_ABORT:
            raise ModelError(f"training diverged at step {step}: loss {loss:.3e}")
        grads = loss_gradients(ctx)
        if train_config.grad_clip > 0:
            clip_gradients(grads, train_config.grad_clip)
        adam_step(params, grads, adam, train_config.lr,
                  (train_config.adam_beta1, train_config.adam_beta2),
                  train_config.adam_eps)
        curve.append((step, loss))
        if step % train_config.log_every == 0:
            recent = np.mean([l for _, l in curve[-train_config.log_every:]])
            log.info("step %d loss %.5f (avg %.5f)", step, loss, recent)
        if out_dir is not None and train_config.checkpoint_every > 0 \
                and step % train_config.checkpoint_every == 0:
            save_checkpoint(snapshot(step), out_dir / "ckpt.npz")

    final = snapshot(start_step + train_config.steps)
    if out_dir is not None:
        save_checkpoint(final, out_dir / "ckpt.npz")
        write_loss_curve(curve, out_dir / "loss_curve.csv")
    return final, curve

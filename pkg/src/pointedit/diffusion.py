"""Noise schedules, forward diffusion, training loss, and samplers.

Implements the noise-prediction objective on (N, 6) position+color rows:
x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps, with the network predicting
eps given (t, instruction embedding, source cloud). Sampling covers DDPM
ancestral sampling, deterministic DDIM over a sub-sampled timestep grid,
DDIM inversion with a strength knob, and the inversion-based editing
baseline that conditions on text only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import denoiser
from .denoiser import DenoiserConfig, ModelError

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DIVERGENCE_LIMIT = 1e3


class ScheduleError(ValueError):
    """Invalid schedule parameters."""


@dataclass(frozen=True)
class NoiseSchedule:
    """beta/alpha/alpha-bar tables; index t-1 holds timestep t in [1, T]."""

    timesteps: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal retention; alpha_bar(0) = 1 by convention."""
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[t - 1])

    def to_dict(self) -> dict:
        return {"timesteps": self.timesteps,
                "beta_start": float(self.betas[0]),
                "beta_end": float(self.betas[-1])}

    @staticmethod
    def from_dict(d: dict) -> "NoiseSchedule":
        return build_schedule(d["timesteps"], d["beta_start"], d["beta_end"])


def build_schedule(timesteps: int, beta_start: float = DEFAULT_BETA_START,
                   beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linear beta schedule with strictly increasing betas in (0, 1)."""
    if timesteps < 2:
        raise ScheduleError("need at least 2 timesteps")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ScheduleError(f"need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(timesteps=timesteps, betas=betas, alphas=alphas,
                         alpha_bars=alpha_bars)


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "ddim"
    steps: int = 64
    eta: float = 0.0
    guidance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ddpm", "ddim"):
            raise ScheduleError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ScheduleError("eta must be in [0, 1]")
        if self.guidance_scale < 0:
            raise ScheduleError("guidance scale must be >= 0")
        if self.steps < 1:
            raise ScheduleError("steps must be >= 1")


def forward_sample(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, channel-wise on all 6 channels."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ScheduleError(f"noise shape {eps.shape} != data shape {x0.shape}")
    t_arr = np.asarray(t, dtype=np.int64).reshape(-1)
    if np.any(t_arr < 1) or np.any(t_arr > schedule.timesteps):
        raise ScheduleError(f"t out of range [1, {schedule.timesteps}]")
    abar = schedule.alpha_bars[t_arr - 1]
    extra = x0.ndim - 1 if np.ndim(t) > 0 else x0.ndim
    abar = abar.reshape(abar.shape + (1,) * extra) if np.ndim(t) > 0 else float(abar[0])
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


class DenoiserModel:
    """Bundles parameters + config into a single-trajectory eps predictor."""

    def __init__(self, params: dict, config: DenoiserConfig):
        self.params = params
        self.config = config

    def predict(self, x_t: np.ndarray, t: int, text_emb: np.ndarray | None,
                source: np.ndarray) -> np.ndarray:
        use_null = text_emb is None
        emb = np.zeros(self.config.d_text) if use_null else text_emb
        eps_hat, _ = denoiser.forward(
            self.params, self.config,
            x_t[None], np.array([t]), emb[None], source[None],
            null_mask=np.array([use_null]))
        return eps_hat[0]

    def guided_predict(self, x_t, t, text_emb, source, guidance: float) -> np.ndarray:
        cond = self.predict(x_t, t, text_emb, source)
        if guidance == 1.0 or text_emb is None:
            return cond
        uncond = self.predict(x_t, t, None, source)
        return uncond + guidance * (cond - uncond)


def _check_divergence(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)) or np.abs(x).max() > DIVERGENCE_LIMIT:
        raise ModelError("sampler diverged")


def training_loss(params: dict, config: DenoiserConfig, schedule: NoiseSchedule,
                  target: np.ndarray, source: np.ndarray, text_emb: np.ndarray,
                  t: np.ndarray, eps: np.ndarray,
                  null_mask: np.ndarray | None = None):
    """Noise-prediction MSE on a batch; returns (loss, backward context).

    `target` is the edited cloud the forward process noises; `source` rides
    along as the conditioning channels.
    """
    if schedule.timesteps != config.timesteps:
        raise ModelError("schedule length does not match model config")
    x_t = forward_sample(target, t, eps, schedule)
    eps_hat, cache = denoiser.forward(params, config, x_t, t, text_emb, source, null_mask)
    resid = eps_hat - np.asarray(eps, dtype=np.float64)
    loss = float((resid ** 2).mean())
    if not math.isfinite(loss):
        raise ModelError("numerical divergence in training loss")
    d_eps_hat = 2.0 * resid / resid.size
    return loss, (cache, d_eps_hat)


def loss_gradients(context) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients for a context from training_loss."""
    if context is None:
        raise ModelError("missing training context")
    cache, d_eps_hat = context
    return denoiser.backward(cache, d_eps_hat)


def ddim_time_grid(timesteps: int, steps: int) -> np.ndarray:
    """Uniformly sub-sampled ascending timestep grid; equals 1..T when steps == T."""
    if steps > timesteps:
        raise ScheduleError(f"steps {steps} > schedule length {timesteps}")
    return np.floor(np.arange(1, steps + 1) * (timesteps / steps)).astype(np.int64)


def ddpm_sample(model: DenoiserModel, schedule: NoiseSchedule, n_points: int,
                text_emb: np.ndarray | None, source: np.ndarray, seed: int = 0,
                guidance: float = 1.0) -> np.ndarray:
    """Ancestral sampling from pure noise down to x_0; deterministic given seed."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_points, 6))
    for t in range(schedule.timesteps, 0, -1):
        eps_hat = model.guided_predict(x, t, text_emb, source, guidance)
        abar_t = schedule.alpha_bar(t)
        mean = (x - schedule.beta(t) / np.sqrt(1.0 - abar_t) * eps_hat) / np.sqrt(schedule.alpha(t))
        if t > 1:
            var = (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - abar_t) * schedule.beta(t)
            x = mean + np.sqrt(var) * rng.standard_normal(x.shape)
        else:
            x = mean
        _check_divergence(x)
    return x


def ddim_sample(model: DenoiserModel, schedule: NoiseSchedule, cfg: SamplerConfig,
                x_start: np.ndarray, text_emb: np.ndarray | None, source: np.ndarray,
                start_index: int | None = None) -> np.ndarray:
    """DDIM over the sub-sampled grid; eta = 0 is fully deterministic.

    `start_index` resumes from grid position k (as returned by ddim_invert);
    None starts at the top of the grid from pure noise.
    """
    grid = ddim_time_grid(schedule.timesteps, cfg.steps)
    k = len(grid) if start_index is None else start_index
    if not 0 <= k <= len(grid):
        raise ScheduleError(f"start index {k} outside grid of {len(grid)} steps")
    rng = np.random.default_rng(cfg.seed)
    x = np.asarray(x_start, dtype=np.float64).copy()
    for j in range(k, 0, -1):
        t = int(grid[j - 1])
        t_prev = int(grid[j - 2]) if j >= 2 else 0
        eps_hat = model.guided_predict(x, t, text_emb, source, cfg.guidance_scale)
        abar = schedule.alpha_bar(t)
        abar_prev = schedule.alpha_bar(t_prev)
        x0_pred = (x - np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(abar)
        sigma = 0.0
        if cfg.eta > 0.0 and j >= 2:
            sigma = cfg.eta * np.sqrt((1.0 - abar_prev) / (1.0 - abar)) \
                * np.sqrt(1.0 - abar / abar_prev)
        x = np.sqrt(abar_prev) * x0_pred + np.sqrt(max(1.0 - abar_prev - sigma ** 2, 0.0)) * eps_hat
        if sigma > 0.0:
            x = x + sigma * rng.standard_normal(x.shape)
        _check_divergence(x)
    return x


def ddim_invert(model: DenoiserModel, schedule: NoiseSchedule, cfg: SamplerConfig,
                x0: np.ndarray, text_emb: np.ndarray | None, source: np.ndarray,
                strength: float) -> tuple[np.ndarray, int]:
    """Run ceil(strength * steps) reverse-DDIM updates from x_0 toward x_T.

    Returns (latent, k); sampling resumes from grid index k. strength = 1
    reaches the final grid timestep.
    """
    if not 0.0 < strength <= 1.0:
        raise ScheduleError("strength must be in (0, 1]")
    grid = ddim_time_grid(schedule.timesteps, cfg.steps)
    n_updates = math.ceil(strength * len(grid))
    x = np.asarray(x0, dtype=np.float64).copy()
    for j in range(1, n_updates + 1):
        t_prev = int(grid[j - 2]) if j >= 2 else 0
        t = int(grid[j - 1])
        # the model runs at the step's target timestep with the source latent
        eps_hat = model.guided_predict(x, t, text_emb, source, cfg.guidance_scale)
        abar_prev = schedule.alpha_bar(t_prev)
        abar = schedule.alpha_bar(t)
        x0_pred = (x - np.sqrt(1.0 - abar_prev) * eps_hat) / np.sqrt(abar_prev)
        x = np.sqrt(abar) * x0_pred + np.sqrt(1.0 - abar) * eps_hat
        _check_divergence(x)
    return x, n_updates


def baseline_edit(model: DenoiserModel, schedule: NoiseSchedule, x0: np.ndarray,
                  src_emb: np.ndarray, tgt_emb: np.ndarray, strength: float,
                  steps: int = 64, guidance: float = 1.0) -> np.ndarray:
    """Inversion-based editing: invert under the source prompt, sample under the target.

    The baseline conditions on text only; the source-cloud channels are fed
    zeros throughout.
    """
    cfg = SamplerConfig(kind="ddim", steps=steps, eta=0.0, guidance_scale=guidance)
    no_cloud = np.zeros_like(np.asarray(x0, dtype=np.float64))
    latent, k = ddim_invert(model, schedule, cfg, x0, src_emb, no_cloud, strength)
    return ddim_sample(model, schedule, cfg, latent, tgt_emb, no_cloud, start_index=k)

"""Shared fixtures: a tiny trained model reused by pipeline/service tests."""

import numpy as np
import pytest

from pointedit.dataset import generate_dataset
from pointedit.denoiser import DenoiserConfig
from pointedit.diffusion import build_schedule
from pointedit.pipeline import wrap_model
from pointedit.text_encoder import HashedTextEncoder
from pointedit.training import TrainConfig, prepare_training_data, train

TINY_MODEL = DenoiserConfig(d_model=32, n_layers=2, n_heads=4, d_text=32,
                            n_points=64, timesteps=16)


@pytest.fixture(scope="session")
def tiny_dataset():
    triplets, config, _ = generate_dataset(color_shapes=2, geom_bases=1, seed=77,
                                           n_points=128, diversify="offline",
                                           categories=("vase",))
    return triplets, config


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset):
    """A briefly trained (not converged) model; enough for plumbing tests."""
    triplets, _ = tiny_dataset
    encoder = HashedTextEncoder(TINY_MODEL.d_text)
    data = prepare_training_data(triplets[:6], TINY_MODEL, encoder)
    schedule = build_schedule(TINY_MODEL.timesteps, 1e-4, 0.15)
    cfg = TrainConfig(steps=40, batch_size=4, lr=2e-3, cond_dropout=0.1, seed=1)
    ckpt, _ = train(data, TINY_MODEL, cfg, schedule=schedule)
    return ckpt


@pytest.fixture(scope="session")
def tiny_model(tiny_checkpoint):
    return wrap_model(tiny_checkpoint, HashedTextEncoder(TINY_MODEL.d_text))


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance_slow: training-backed acceptance criteria (cached after first run)")


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1].split("[")[0]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}")

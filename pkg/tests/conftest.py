import numpy as np
import pytest
import torch

from distinctvad.clipio import load_manifest
from distinctvad.model import ModelConfig
from distinctvad.synth import SynthConfig, synth_dataset
from distinctvad.training import TrainConfig


TINY_SYNTH = dict(
    frame_size=(32, 32),
    train_videos=2,
    test_videos=2,
    frames_per_video=24,
    sprites=2,
)


def tiny_model_config(**overrides) -> ModelConfig:
    params = dict(variant="c3dsu", in_channels=1, clip_len=3, base_channels=8, depth=2, seed=0)
    params.update(overrides)
    return ModelConfig(**params)


def tiny_train_config(manifest_path, out_dir, **overrides) -> TrainConfig:
    params = dict(
        mode="ddl",
        epochs=2,
        batch_size=4,
        learning_rate=1e-3,
        seed=11,
        clip_len=3,
        model=tiny_model_config(),
        data=str(manifest_path),
        out_dir=str(out_dir),
    )
    params.update(overrides)
    return TrainConfig(**params)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small 32x32 corpus shared by training/CLI tests."""
    root = tmp_path_factory.mktemp("tiny_ds")
    manifest = synth_dataset(SynthConfig(**TINY_SYNTH), seed=11, root=root)
    return manifest


@pytest.fixture(scope="session")
def tiny_manifest_path(tiny_dataset):
    return tiny_dataset.root / "manifest.json"


@pytest.fixture()
def rng():
    return np.random.default_rng(123)


@pytest.fixture()
def torch_gen():
    return torch.Generator().manual_seed(123)

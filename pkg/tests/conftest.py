"""Shared fixtures: tiny synthetic data, toy backbones, temporary result roots."""

import numpy as np
import pytest
import torch
from torch import nn

from src.domain.experiment_types import ExperimentConfig
from src.domain.model_types import BackboneSpec
from src.infrastructure.config.config_loader import ConfigLoader
from src.services.synthetic_data import SyntheticSpec, generate_synthetic


TINY_CHANNELS = ("Pz", "Oz", "POz", "O1")


@pytest.fixture
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(
        num_categories=3,
        images_per_category=4,
        channels=TINY_CHANNELS,
        timepoints=20,
        image_size=16,
        snr=3.0,
        coupling_window=(-0.1, -0.05),
        trials=4,
        feature_dim=6,
        val_per_category=1,
    )


@pytest.fixture
def tiny_data(tiny_spec):
    """(train, val) paired datasets: 9 train and 3 val items."""
    return generate_synthetic(tiny_spec, seed=3)


@pytest.fixture
def toy_backbone(tiny_spec) -> BackboneSpec:
    return BackboneSpec.toy(num_classes=tiny_spec.num_categories, image_size=tiny_spec.image_size, seed=0)


class LinearClassifier(nn.Module):
    """logits = W x + b on flattened inputs."""

    def __init__(self, weight: torch.Tensor, bias: torch.Tensor):
        super().__init__()
        self.weight = nn.Parameter(weight.clone())
        self.bias = nn.Parameter(bias.clone())

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x.flatten(1) @ self.weight.T + self.bias


@pytest.fixture
def linear_model():
    torch.manual_seed(0)
    weight = torch.randn(3, 2 * 4 * 4, dtype=torch.float64)
    bias = torch.randn(3, dtype=torch.float64)
    return LinearClassifier(weight, bias).double()


@pytest.fixture
def random_images():
    generator = torch.Generator().manual_seed(1)
    return torch.rand(6, 2, 4, 4, generator=generator, dtype=torch.float64)


SMOKE_OVERRIDES = [
    "data.subjects=['sub-01']",
    "data.channels=['Pz', 'Oz', 'POz', 'O1']",
    "data.image_size=16",
    "data.val_per_category=2",
    "data.synthetic.num_categories=3",
    "data.synthetic.images_per_category=6",
    "data.synthetic.snr=3.0",
    "grid.archs=['CNN_Bk4', 'CNN(avg)_Bk34', 'RNN(LSTM)_Bk2']",
    "grid.seeds=[0]",
    "backbone.kind='toy_cnn'",
    "training.learning_rate=0.001",
    "training.epochs=1",
    "training.batch_size=8",
    "attacks.batch_size=8",
    "attacks.pgd_l2.epsilons=[0.07, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]",
    "attacks.pgd_l2.steps=2",
    "attacks.pgd_linf.epsilons=[8e-5, 1e-4, 3e-4, 5e-4, 7e-4, 8e-4, 1e-3, 8e-3, 1e-2]",
    "attacks.pgd_linf.steps=2",
    "attacks.cw_l2.epsilons=[0.5, 0.7, 0.9, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0]",
    "attacks.cw_l2.iterations=2",
    "evaluation.prepend_zero_epsilon=true",
    "evaluation.noise_ceiling_splits=5",
]


@pytest.fixture
def smoke_overrides():
    return list(SMOKE_OVERRIDES)


@pytest.fixture
def smoke_config(smoke_overrides) -> ExperimentConfig:
    return ConfigLoader(environ={}).load(overrides=smoke_overrides)


@pytest.fixture
def result_root(tmp_path):
    return tmp_path / "results"


@pytest.fixture
def rng():
    return np.random.default_rng(0)

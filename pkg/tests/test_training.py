"""Uncertainty-weighted loss and the training loop."""

import math

import numpy as np
import pytest
import torch

from src.domain.errors import NonFiniteError, ShapeMismatchError, ValidationError
from src.domain.model_types import BackboneSpec
from src.domain.training_types import TrainConfig, UncertaintyParams
from src.services.evaluation_service import top1_accuracy
from src.services.model_zoo.arch_names import parse_arch_name
from src.services.model_zoo.checkpoints import checkpoint_uncertainty, load_checkpoint
from src.services.model_zoo.dual_task_model import build_architecture
from src.services.synthetic_data import SyntheticSpec, generate_synthetic
from src.services.training_service import (
    TRAIN_LOG_FILE,
    Trainer,
    UncertaintyWeights,
    classification_loss,
    combined_loss,
    eeg_loss,
)


@pytest.fixture
def spec(toy_backbone, tiny_spec):
    return parse_arch_name("CNN_Bk4", channels=len(tiny_spec.channels), timepoints=tiny_spec.timepoints,
                           backbone=toy_backbone)


def quick_config(**changes):
    values = dict(learning_rate=1e-3, epochs=2, batch_size=4, head_seed=0)
    values.update(changes)
    return TrainConfig(**values)


def test_combined_loss_matches_the_closed_form():
    u = UncertaintyParams(s1=0.3, s2=-0.2)
    expected = 2.0 / (2 * math.exp(0.6)) + 0.5 / (2 * math.exp(-0.4)) + 0.1
    assert combined_loss(2.0, 0.5, u) == pytest.approx(expected)


def test_zero_log_scales_halve_the_plain_sum():
    assert combined_loss(1.2, 0.8, UncertaintyParams()) == pytest.approx(1.0)


def test_combined_loss_gradient_matches_finite_differences():
    weights = UncertaintyWeights(UncertaintyParams(s1=0.4, s2=-0.7))
    total = combined_loss(torch.tensor(1.5), torch.tensor(0.3), weights)
    total.backward()

    h = 1e-4
    for name, l in (("s1", 1.5), ("s2", 0.3)):
        value = float(getattr(weights, name).detach())

        def f(s):
            return l * 0.5 * math.exp(-2.0 * s) + s
        numeric = (f(value + h) - f(value - h)) / (2 * h)
        assert float(getattr(weights, name).grad) == pytest.approx(numeric, rel=1e-3)


def test_log_scale_settles_at_half_log_of_the_task_loss():
    l1, l2 = 2.5, 0.4
    weights = UncertaintyWeights()
    optimizer = torch.optim.Adam(weights.parameters(), lr=0.01)
    for _ in range(3000):
        optimizer.zero_grad()
        combined_loss(torch.tensor(l1), torch.tensor(l2), weights).backward()
        optimizer.step()
    assert float(weights.s1) == pytest.approx(0.5 * math.log(l1), abs=0.02)
    assert float(weights.s2) == pytest.approx(0.5 * math.log(l2), abs=0.02)


def test_eeg_loss_rejects_mismatched_shapes():
    with pytest.raises(ShapeMismatchError):
        eeg_loss(torch.zeros(2, 4, 20), torch.zeros(2, 4, 10))


def test_classification_loss_rejects_out_of_range_labels():
    with pytest.raises(ValidationError):
        classification_loss(torch.zeros(2, 3), torch.tensor([0, 3]))


def test_data_seed_follows_the_head_seed_unless_pinned():
    assert TrainConfig(head_seed=17).effective_data_seed == 17 * 7919 + 1
    assert TrainConfig(head_seed=17, data_seed=5).effective_data_seed == 5


def test_zero_learning_rate_leaves_every_weight_untouched(spec, tiny_data):
    train, _ = tiny_data
    report = Trainer().train(spec, train, quick_config(learning_rate=0.0, epochs=1))
    fresh = build_architecture(spec, 0)
    for key, value in fresh.state_dict().items():
        assert torch.equal(report.model.state_dict()[key], value), key
    assert report.uncertainty == UncertaintyParams(0.0, 0.0)


def test_training_is_deterministic_for_a_fixed_seed(spec, tiny_data):
    train, val = tiny_data
    first = Trainer().train(spec, train, quick_config(), val=val)
    second = Trainer().train(spec, train, quick_config(), val=val)
    assert first.total_losses == second.total_losses
    assert first.update_signature == second.update_signature
    for key, value in first.model.state_dict().items():
        assert torch.equal(second.model.state_dict()[key], value)


def test_controls_follow_the_same_update_sequence(spec, tiny_data):
    train, _ = tiny_data
    real = Trainer().train(spec, train, quick_config())
    shuffled = Trainer().train(spec, train, quick_config(control_kind="shuffled", control_seed=1))
    noise = Trainer().train(spec, train, quick_config(control_kind="random_normal"))
    assert real.update_signature == shuffled.update_signature == noise.update_signature


def test_epoch_records_carry_losses_and_validation_metrics(spec, tiny_data):
    train, val = tiny_data
    report = Trainer().train(spec, train, quick_config(), val=val)
    assert len(report.epochs) == 2
    for record in report.epochs:
        assert np.isfinite(record.total_loss)
        assert record.delta1 > 0 and record.delta2 > 0
        assert 0.0 <= record.val_top1 <= 1.0
        assert record.val_pcc_mean is not None


def test_uncertainty_moves_during_training(spec, tiny_data):
    train, _ = tiny_data
    report = Trainer().train(spec, train, quick_config(learning_rate=0.01, epochs=3))
    assert report.uncertainty != UncertaintyParams(0.0, 0.0)


def test_wrong_target_shape_is_rejected(toy_backbone, tiny_data):
    train, _ = tiny_data
    other = parse_arch_name("CNN_Bk4", channels=7, timepoints=20, backbone=toy_backbone)
    with pytest.raises(ShapeMismatchError):
        Trainer().train(other, train, quick_config())


def test_non_finite_targets_abort_training(spec, tiny_data):
    train, _ = tiny_data
    broken = train.with_targets(np.full_like(train.eeg_targets, np.nan))
    with pytest.raises(NonFiniteError) as excinfo:
        Trainer().train(spec, broken, quick_config())
    assert excinfo.value.epoch == 0 and excinfo.value.batch == 0


def test_outputs_are_persisted_with_uncertainty(spec, tiny_data, tmp_path):
    train, _ = tiny_data
    report = Trainer().train(spec, train, quick_config(), output_dir=tmp_path, manifest_extra={"seed": 0})
    model, manifest = load_checkpoint(report.checkpoint_path)

    assert (tmp_path / "logs" / TRAIN_LOG_FILE).exists()
    assert manifest["extra"]["arch"] == "CNN_Bk4"
    assert manifest["extra"]["seed"] == 0
    assert checkpoint_uncertainty(manifest).s1 == pytest.approx(report.uncertainty.s1, abs=1e-6)


def test_baseline_training_uses_classification_only(toy_backbone, tiny_data, tmp_path):
    train, val = tiny_data
    report = Trainer().train_baseline(toy_backbone, train, quick_config(), val=val, output_dir=tmp_path)
    assert all(record.eeg_mse == 0.0 for record in report.epochs)
    assert all(record.val_pcc_mean is None for record in report.epochs)
    _, manifest = load_checkpoint(report.checkpoint_path)
    assert manifest["kind"] == "baseline"
    assert checkpoint_uncertainty(manifest) is None


@pytest.mark.slow
def test_toy_baseline_separates_sixteen_synthetic_categories():
    data_spec = SyntheticSpec(num_categories=16, images_per_category=4, channels=("Pz", "Oz"), timepoints=20,
                              image_size=16, val_per_category=1)
    train, _ = generate_synthetic(data_spec, seed=1)
    backbone = BackboneSpec.toy(num_classes=16, image_size=16, seed=0)
    report = Trainer().train_baseline(backbone, train, quick_config(learning_rate=3e-3, epochs=50, batch_size=8))
    assert len(report.epochs) == 50
    assert top1_accuracy(report.model, train.images, train.category_ids) > 0.9

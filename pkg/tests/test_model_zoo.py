"""Architecture names, registry, forward shapes and checkpoints."""

import pytest
import torch

from src.domain.errors import ArchitectureNameError, ShapeMismatchError, WeightsMismatchError
from src.domain.model_types import BackboneSpec, Cluster, FusionModeName, HeadKind
from src.infrastructure.registry.architecture_registry import TABLE_ARCHITECTURES, registry_list
from src.services.model_zoo.arch_names import cluster_of, parse_arch_name, render_arch_name
from src.services.model_zoo.backbones import build_toy_cnn
from src.services.model_zoo.checkpoints import checkpoint_hash, load_checkpoint, save_checkpoint
from src.services.model_zoo.dual_task_model import build_architecture, build_baseline, forward_dual, fuse


SHAPE_CHECK_ARCHS = ["CNN_Bk4", "CNN(concat)_Bk12", "CNN(avg)_Bk234", "RNN_Bk2", "RNN(LSTM)_Bk1",
                     "Trans_Bk3", "Att(concat)_Bk34", "Att_Bk4"]


def toy_spec(name, backbone, channels=4, timepoints=20):
    return parse_arch_name(name, channels=channels, timepoints=timepoints, backbone=backbone)


def test_registry_lists_the_whole_table_in_order():
    specs = registry_list()
    assert len(specs) == 24
    assert [s.name for s in specs] == list(TABLE_ARCHITECTURES)


def test_every_table_name_renders_back_to_itself():
    for spec in registry_list():
        assert render_arch_name(spec) == spec.name


def test_cluster_sizes_match_the_table():
    counts = {}
    for spec in registry_list():
        counts[cluster_of(spec)] = counts.get(cluster_of(spec), 0) + 1
    assert counts == {Cluster.CNN: 8, Cluster.RNN: 7, Cluster.TRANSFORMER: 4, Cluster.ATTENTION: 5}


@pytest.mark.parametrize(
    "name, kind, fusion, blocks",
    [
        ("CNN(avg)_Bk34", HeadKind.DENSE, FusionModeName.AVERAGE, (3, 4)),
        ("RNN(LSTM)_Bk2", HeadKind.LSTM, FusionModeName.SINGLE, (2,)),
        ("Att(concat)_Bk12", HeadKind.SELF_ATTENTION, FusionModeName.CONCAT, (1, 2)),
        ("Att_Bk3", HeadKind.PAM_CAM, FusionModeName.SINGLE, (3,)),
        ("Trans_Bk1", HeadKind.TRANSFORMER, FusionModeName.SINGLE, (1,)),
    ],
)
def test_names_decode_to_head_fusion_and_taps(name, kind, fusion, blocks):
    spec = parse_arch_name(name)
    assert spec.head.kind == kind
    assert spec.fusion.mode == fusion
    assert spec.taps.blocks == blocks


@pytest.mark.parametrize(
    "name, position",
    [
        ("MLP_Bk4", 0),
        ("CNN_Bk43", 7),
        ("CNN_Bk5", 6),
        ("CNN_Bk", 6),
        ("CNN(max)_Bk4", 4),
        ("CNN-Bk4", 3),
        ("CNN_Bk34", 3),
        ("CNN(avg)_Bk4", 4),
    ],
)
def test_malformed_names_report_the_failing_position(name, position):
    with pytest.raises(ArchitectureNameError) as excinfo:
        parse_arch_name(name)
    assert excinfo.value.position == position
    assert name in str(excinfo.value)


@pytest.mark.parametrize("name", SHAPE_CHECK_ARCHS)
def test_forward_shapes_on_the_toy_backbone(name, toy_backbone):
    model = build_architecture(toy_spec(name, toy_backbone), seed=0).eval()
    with torch.no_grad():
        output = forward_dual(model, torch.randn(2, 3, 16, 16))
    assert output.logits.shape == (2, 3)
    assert output.eeg_pred.shape == (2, 4, 20)


def test_wrong_image_shape_is_rejected(toy_backbone):
    model = build_architecture(toy_spec("CNN_Bk4", toy_backbone), seed=0)
    with pytest.raises(ShapeMismatchError):
        model(torch.randn(2, 3, 32, 32))


def test_head_seed_changes_only_the_eeg_branch(toy_backbone):
    spec = toy_spec("CNN(concat)_Bk34", toy_backbone)
    a, b, again = build_architecture(spec, 0), build_architecture(spec, 17), build_architecture(spec, 0)
    for key, value in a.backbone.state_dict().items():
        assert torch.equal(value, b.backbone.state_dict()[key])
    assert not torch.equal(a.head.linear.weight, b.head.linear.weight)
    assert torch.equal(a.head.linear.weight, again.head.linear.weight)


def test_baseline_shares_backbone_initialization_and_has_no_eeg_output(toy_backbone):
    baseline = build_baseline(toy_backbone)
    model = build_architecture(toy_spec("CNN_Bk4", toy_backbone), seed=5)
    assert torch.equal(baseline.backbone.classifier.weight, model.backbone.classifier.weight)
    output = baseline(torch.randn(1, 3, 16, 16))
    assert output.eeg_pred is None


def test_checkpoint_round_trip_reproduces_outputs(tmp_path, toy_backbone):
    model = build_architecture(toy_spec("RNN_Bk4", toy_backbone), seed=3).eval()
    digest = save_checkpoint(model, tmp_path / "ckpt", head_seed=3, extra={"arch": "RNN_Bk4"})
    restored, manifest = load_checkpoint(tmp_path / "ckpt")
    restored.eval()

    images = torch.randn(2, 3, 16, 16)
    with torch.no_grad():
        assert torch.allclose(model(images).eeg_pred, restored(images).eeg_pred)
    assert manifest["extra"] == {"arch": "RNN_Bk4"}
    assert digest == checkpoint_hash(tmp_path / "ckpt")
    assert len(digest) == 64


def test_checkpoint_hash_changes_with_the_weights(tmp_path, toy_backbone):
    model = build_architecture(toy_spec("CNN_Bk4", toy_backbone), seed=0)
    first = save_checkpoint(model, tmp_path / "a")
    with torch.no_grad():
        model.head.linear.bias.add_(1.0)
    assert save_checkpoint(model, tmp_path / "b") != first


def test_pretrained_weights_tolerate_a_new_class_count(tmp_path):
    torch.manual_seed(0)
    source = build_toy_cnn(num_classes=10)
    path = tmp_path / "weights.pt"
    torch.save(source.state_dict(), path)

    model = build_baseline(BackboneSpec(kind="toy_cnn", num_classes=3, image_size=16, pretrained_weights=str(path)))
    assert torch.equal(model.backbone.blocks[0][0].weight, source.blocks[0][0].weight)
    assert model.backbone.classifier.weight.shape == (3, 128)


def test_pretrained_weights_with_missing_tensors_are_rejected(tmp_path):
    state = build_toy_cnn(num_classes=3).state_dict()
    state.pop("blocks.0.0.bias")
    path = tmp_path / "weights.pt"
    torch.save(state, path)

    with pytest.raises(WeightsMismatchError) as excinfo:
        build_baseline(BackboneSpec(kind="toy_cnn", num_classes=3, image_size=16, pretrained_weights=str(path)))
    assert excinfo.value.missing == ["blocks.0.0.bias"]


def test_fusion_of_identical_features_is_the_feature_or_its_repetition():
    f = torch.randn(4, 6)
    assert torch.equal(fuse([f, f], FusionModeName.AVERAGE), f)
    assert torch.equal(fuse([f, f], FusionModeName.CONCAT), torch.cat([f, f], dim=1))
    assert torch.equal(fuse([f], FusionModeName.SINGLE), f)
    a, b, c = torch.randn(3, 4, 6)
    assert torch.allclose(fuse([a, b, c], FusionModeName.AVERAGE), (a + b + c) / 3)
    assert fuse([a, b, c], FusionModeName.CONCAT).shape == (4, 18)


@pytest.mark.parametrize("name, tapped", [("CNN_Bk2", 2), ("RNN_Bk3", 3), ("CNN(concat)_Bk12", 2)])
def test_eeg_gradient_reaches_blocks_up_to_the_deepest_tap_only(name, tapped, toy_backbone):
    model = build_architecture(toy_spec(name, toy_backbone), seed=0).eval()
    output = model(torch.randn(2, 3, 16, 16))
    blocks = list(model.backbone.blocks)
    params = [p for block in blocks for p in block.parameters()]
    grads = torch.autograd.grad(output.eeg_pred.sum(), params, allow_unused=True)

    per_block = iter(grads)
    for index, block in enumerate(blocks, start=1):
        block_grads = [next(per_block) for _ in block.parameters()]
        reached = any(g is not None and bool(g.abs().sum() > 0) for g in block_grads)
        assert reached == (index <= tapped), f"block{index}"

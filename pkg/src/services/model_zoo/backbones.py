"""Four-block classification backbones with feature taps."""

from pathlib import Path
from typing import Dict, List, Tuple

import torch
from torch import nn
from torchvision.models import resnet50

from ...domain.errors import ResourceNotFoundError, WeightsMismatchError
from ...domain.model_types import BackboneKind, BackboneSpec
from ...infrastructure.logger import get_logger
from ...infrastructure.storage.tensor_container import read_tensor_dir


TOY_CHANNELS: Tuple[int, ...] = (16, 32, 64, 128)
RESNET50_CHANNELS: Tuple[int, ...] = (256, 512, 1024, 2048)

# Classifier parameters may differ in class count when fine-tuning.
CLASSIFIER_PREFIXES = ("classifier.",)

logger = get_logger("Backbones")


class Backbone(nn.Module):
    """stem -> block1..block4 -> pooled classifier; forward returns logits and block outputs."""

    def __init__(self, stem: nn.Module, blocks: List[nn.Module], classifier: nn.Module, block_channels: Tuple[int, ...]):
        super().__init__()
        self.stem = stem
        self.blocks = nn.ModuleList(blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = classifier
        self.block_channels = tuple(block_channels)

    def forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        x = self.stem(images)
        features = []
        for block in self.blocks:
            x = block(x)
            features.append(x)
        logits = self.classifier(torch.flatten(self.pool(x), 1))
        return logits, features


def _toy_block(c_in: int, c_out: int) -> nn.Module:
    return nn.Sequential(nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1), nn.ReLU(inplace=False))


def build_toy_cnn(num_classes: int) -> Backbone:
    """Four stride-2 conv blocks; each halves the spatial resolution."""
    channels = (3,) + TOY_CHANNELS
    blocks = [_toy_block(channels[i], channels[i + 1]) for i in range(4)]
    return Backbone(nn.Identity(), blocks, nn.Linear(TOY_CHANNELS[-1], num_classes), TOY_CHANNELS)


def build_resnet50(num_classes: int) -> Backbone:
    """torchvision ResNet50 with layer1..layer4 as the tap blocks."""
    net = resnet50(weights=None, num_classes=num_classes)
    stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
    blocks = [net.layer1, net.layer2, net.layer3, net.layer4]
    return Backbone(stem, blocks, net.fc, RESNET50_CHANNELS)


def _read_weights(path: Path) -> Dict[str, torch.Tensor]:
    if not path.exists():
        raise ResourceNotFoundError(f"Pretrained weights not found: {path}", path=str(path))
    if path.is_dir():
        tensors, _ = read_tensor_dir(path)
        return {name: torch.from_numpy(array) for name, array in tensors.items()}
    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    return dict(state)


def _remap_torchvision_names(weights: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    """Accept plain torchvision ResNet state dicts (conv1.*, layer1.*, fc.*)."""
    if any(key.startswith(("stem.", "blocks.")) for key in weights):
        return weights
    prefixes = {
        "conv1.": "stem.0.", "bn1.": "stem.1.",
        "layer1.": "blocks.0.", "layer2.": "blocks.1.", "layer3.": "blocks.2.", "layer4.": "blocks.3.",
        "fc.": "classifier.",
    }
    remapped = {}
    for key, value in weights.items():
        new_key = key
        for old, new in prefixes.items():
            if key.startswith(old):
                new_key = new + key[len(old):]
                break
        remapped[new_key] = value
    return remapped


def load_pretrained(backbone: Backbone, path: str) -> None:
    """Load weights, rejecting missing, unexpected or ill-shaped tensors."""
    weights = _remap_torchvision_names(_read_weights(Path(path)))
    own = backbone.state_dict()
    missing = sorted(set(own) - set(weights))
    unexpected = sorted(set(weights) - set(own))
    mismatched = sorted(
        key for key in set(own) & set(weights)
        if tuple(own[key].shape) != tuple(weights[key].shape) and not key.startswith(CLASSIFIER_PREFIXES)
    )
    if missing or unexpected or mismatched:
        raise WeightsMismatchError(missing=missing, unexpected=unexpected, mismatched=mismatched)

    skipped = [
        key for key in own
        if key.startswith(CLASSIFIER_PREFIXES) and tuple(own[key].shape) != tuple(weights[key].shape)
    ]
    for key in skipped:
        weights.pop(key)
    if skipped:
        logger.warn(f"Classifier re-initialized for a new class count: {', '.join(skipped)}")
    backbone.load_state_dict({**own, **{k: v.to(own[k].dtype) for k, v in weights.items()}})


def build_backbone(spec: BackboneSpec) -> Backbone:
    """Backbone of the given kind, initialized from the current torch RNG state."""
    if spec.kind == BackboneKind.TOY_CNN:
        backbone = build_toy_cnn(spec.num_classes)
    else:
        backbone = build_resnet50(spec.num_classes)
    if spec.pretrained_weights:
        load_pretrained(backbone, spec.pretrained_weights)
    return backbone

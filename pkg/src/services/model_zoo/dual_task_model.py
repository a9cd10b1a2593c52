"""Dual-task models: shared backbone, tapped features, EEG head."""

from contextlib import contextmanager
from typing import Dict, Iterator, List

import torch
from torch import nn

from ...domain.errors import ShapeMismatchError
from ...domain.model_types import (
    ArchitectureSpec,
    BackboneSpec,
    DualTaskOutput,
    FusionModeName,
)
from ...infrastructure.logger import get_logger
from .backbones import Backbone, build_backbone
from .heads import build_head


def fuse(projected: List[torch.Tensor], mode: FusionModeName) -> torch.Tensor:
    """Combine projected tap features [B x D] each."""
    mode = FusionModeName(mode)
    if mode == FusionModeName.CONCAT:
        return torch.cat(projected, dim=1)
    if mode == FusionModeName.AVERAGE:
        return torch.stack(projected, dim=0).mean(dim=0)
    return projected[0]


def _check_images(images: torch.Tensor, image_size: int) -> None:
    expected = (3, image_size, image_size)
    if images.dim() != 4 or tuple(images.shape[1:]) != expected:
        raise ShapeMismatchError(
            f"Expected images [batch x 3 x {image_size} x {image_size}], got {tuple(images.shape)}",
            expected=expected,
            actual=tuple(images.shape),
        )


class DualTaskModel(nn.Module):
    """Classification logits plus EEG prediction from tapped backbone blocks."""

    def __init__(self, spec: ArchitectureSpec, backbone: Backbone, projections: nn.ModuleDict, head: nn.Module):
        super().__init__()
        self.spec = spec
        self.backbone = backbone
        self.projections = projections
        self.head = head
        self.pool = nn.AdaptiveAvgPool2d(1)

    def _project(self, features: List[torch.Tensor]) -> List[torch.Tensor]:
        return [
            self.projections[f"block{b}"](torch.flatten(self.pool(features[b - 1]), 1))
            for b in self.spec.taps.blocks
        ]

    def fused_features(self, images: torch.Tensor) -> torch.Tensor:
        """Pre-head feature vector [B x fused width]."""
        _check_images(images, self.spec.backbone.image_size)
        _, features = self.backbone(images)
        return fuse(self._project(features), self.spec.fusion.mode)

    def forward(self, images: torch.Tensor) -> DualTaskOutput:
        _check_images(images, self.spec.backbone.image_size)
        logits, features = self.backbone(images)
        fused = fuse(self._project(features), self.spec.fusion.mode)
        return DualTaskOutput(logits=logits, eeg_pred=self.head(fused))

    def head_parameters(self) -> Dict[str, nn.Parameter]:
        """EEG-branch parameters (projections and head)."""
        params = {f"projections.{k}": v for k, v in self.projections.named_parameters()}
        params.update({f"head.{k}": v for k, v in self.head.named_parameters()})
        return params


class BaselineClassifier(nn.Module):
    """Classification-only model on the same backbone."""

    def __init__(self, backbone_spec: BackboneSpec, backbone: Backbone):
        super().__init__()
        self.backbone_spec = backbone_spec
        self.backbone = backbone

    def forward(self, images: torch.Tensor) -> DualTaskOutput:
        _check_images(images, self.backbone_spec.image_size)
        logits, _ = self.backbone(images)
        return DualTaskOutput(logits=logits, eeg_pred=None)


def _seeded_backbone(spec: BackboneSpec) -> Backbone:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(spec.seed)
        return build_backbone(spec)


def build_architecture(spec: ArchitectureSpec, seed: int) -> DualTaskModel:
    """Build a dual-task model; the head seed never touches backbone initialization."""
    logger = get_logger("ModelZoo")
    backbone = _seeded_backbone(spec.backbone)
    channels = backbone.block_channels
    dim = spec.taps.projection_dim
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        projections = nn.ModuleDict({f"block{b}": nn.Linear(channels[b - 1], dim) for b in spec.taps.blocks})
        head = build_head(spec.fusion.fused_width(spec.taps), spec.head)
    logger.debug(f"Built {spec.name} on {spec.backbone.kind.value} (head seed {seed})")
    return DualTaskModel(spec, backbone, projections, head)


def build_baseline(backbone_spec: BackboneSpec) -> BaselineClassifier:
    """Classification-only model, seeded like the dual-task backbones."""
    return BaselineClassifier(backbone_spec, _seeded_backbone(backbone_spec))


def forward_dual(model: nn.Module, images: torch.Tensor) -> DualTaskOutput:
    """Forward pass returning DualTaskOutput for dual-task and baseline models."""
    return model(images)


def logits_of(output: object) -> torch.Tensor:
    """Logits of a DualTaskOutput or of a plain classifier output."""
    if isinstance(output, DualTaskOutput):
        return output.logits
    return output  # type: ignore[return-value]


@contextmanager
def eval_mode(model: nn.Module) -> Iterator[None]:
    """Switch to eval mode, restoring the previous mode even when the body raises."""
    was_training = model.training
    model.eval()
    try:
        yield
    finally:
        model.train(was_training)

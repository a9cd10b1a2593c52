"""Architecture specification types for dual-task models."""

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from .errors import ValidationError


DEFAULT_PROJECTION_DIM = 256
DEFAULT_NUM_CLASSES = 1654
DEFAULT_IMAGE_SIZE = 224


class BackboneKind(str, Enum):
    """Classification backbone."""
    RESNET50 = "resnet50"
    TOY_CNN = "toy_cnn"


class FusionModeName(str, Enum):
    """How projected tap features are combined."""
    CONCAT = "concat"
    AVERAGE = "average"
    SINGLE = "single"


class HeadKind(str, Enum):
    """EEG-predictor head family."""
    DENSE = "dense"
    RNN_SKIP = "rnn_skip"
    LSTM = "lstm"
    TRANSFORMER = "transformer"
    SELF_ATTENTION = "self_attention"
    PAM_CAM = "pam_cam"


class Cluster(str, Enum):
    """Architecture cluster, as labelled in the architecture table."""
    CNN = "CNN"
    RNN = "RNN"
    TRANSFORMER = "Transformer"
    ATTENTION = "Attention layer"


HEAD_CLUSTERS: Dict[HeadKind, Cluster] = {
    HeadKind.DENSE: Cluster.CNN,
    HeadKind.RNN_SKIP: Cluster.RNN,
    HeadKind.LSTM: Cluster.RNN,
    HeadKind.TRANSFORMER: Cluster.TRANSFORMER,
    HeadKind.SELF_ATTENTION: Cluster.ATTENTION,
    HeadKind.PAM_CAM: Cluster.ATTENTION,
}


@dataclass(frozen=True)
class BackboneSpec:
    """Shared classification branch."""
    kind: BackboneKind = BackboneKind.RESNET50
    num_classes: int = DEFAULT_NUM_CLASSES
    pretrained_weights: Optional[str] = None
    image_size: int = DEFAULT_IMAGE_SIZE
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackboneKind(self.kind))
        if self.num_classes < 1:
            raise ValidationError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.kind == BackboneKind.TOY_CNN and self.image_size < 16:
            raise ValidationError("toy_cnn needs image_size >= 16 so every block keeps a spatial extent")
        if self.kind == BackboneKind.RESNET50 and self.image_size < 32:
            raise ValidationError("resnet50 needs image_size >= 32")

    @classmethod
    def toy(cls, num_classes: int, image_size: int = 32, seed: int = 0) -> "BackboneSpec":
        """Small 4-block CNN backbone."""
        return cls(kind=BackboneKind.TOY_CNN, num_classes=num_classes, image_size=image_size, seed=seed)


@dataclass(frozen=True)
class FeatureTapSpec:
    """Backbone blocks whose pooled outputs feed the EEG branch."""
    blocks: Tuple[int, ...] = (4,)
    projection_dim: int = DEFAULT_PROJECTION_DIM

    def __post_init__(self) -> None:
        blocks = tuple(int(b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValidationError("At least one block must be tapped")
        if any(b not in (1, 2, 3, 4) for b in blocks):
            raise ValidationError(f"Tapped blocks must be in 1..4, got {blocks}")
        if list(blocks) != sorted(set(blocks)):
            raise ValidationError(f"Tapped blocks must be strictly increasing, got {blocks}")
        if self.projection_dim < 1:
            raise ValidationError("projection_dim must be >= 1")


@dataclass(frozen=True)
class FusionMode:
    """Fusion of projected tap features."""
    mode: FusionModeName = FusionModeName.SINGLE

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FusionModeName(self.mode))

    def validate_for(self, taps: FeatureTapSpec) -> None:
        """Check the fusion/tap combination."""
        if self.mode == FusionModeName.SINGLE and len(taps.blocks) != 1:
            raise ValidationError("single fusion requires exactly one tapped block")

    def fused_width(self, taps: FeatureTapSpec) -> int:
        """Width of the fused feature vector."""
        if self.mode == FusionModeName.CONCAT:
            return taps.projection_dim * len(taps.blocks)
        return taps.projection_dim


@dataclass(frozen=True)
class HeadSpec:
    """EEG-predictor head and its hyperparameters."""
    kind: HeadKind = HeadKind.DENSE
    channels: int = 17
    timepoints: int = 100
    hidden_size: int = 256
    layers: int = 6
    heads: int = 32
    dropout: float = 0.5
    embed_dim: int = 256
    pam_channels: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", HeadKind(self.kind))
        if self.channels < 1 or self.timepoints < 1:
            raise ValidationError("Head output must have at least one channel and timepoint")
        if self.kind == HeadKind.TRANSFORMER and self.embed_dim % self.heads != 0:
            raise ValidationError(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")
        if self.kind == HeadKind.SELF_ATTENTION and self.embed_dim % self.heads != 0:
            raise ValidationError(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")

    @classmethod
    def for_kind(cls, kind: HeadKind, channels: int = 17, timepoints: int = 100) -> "HeadSpec":
        """Default hyperparameters of each head family."""
        kind = HeadKind(kind)
        if kind == HeadKind.TRANSFORMER:
            return cls(kind=kind, channels=channels, timepoints=timepoints, layers=6, heads=32, dropout=0.5, embed_dim=256)
        if kind == HeadKind.SELF_ATTENTION:
            return cls(kind=kind, channels=channels, timepoints=timepoints, layers=1, heads=4, dropout=0.0, embed_dim=256)
        if kind in (HeadKind.RNN_SKIP, HeadKind.LSTM):
            return cls(kind=kind, channels=channels, timepoints=timepoints, hidden_size=256, layers=1, heads=1, dropout=0.0)
        return cls(kind=kind, channels=channels, timepoints=timepoints, layers=1, heads=1, dropout=0.0)

    @property
    def output_size(self) -> int:
        return self.channels * self.timepoints


@dataclass(frozen=True)
class ArchitectureSpec:
    """Declarative recipe of one dual-task architecture."""
    name: str
    head: HeadSpec
    taps: FeatureTapSpec
    fusion: FusionMode
    backbone: BackboneSpec = field(default_factory=BackboneSpec)

    def __post_init__(self) -> None:
        self.fusion.validate_for(self.taps)
        if self.head.kind == HeadKind.SELF_ATTENTION and self.fusion.fused_width(self.taps) % self.head.embed_dim:
            raise ValidationError("self_attention head needs a fused width that is a multiple of embed_dim")
        if self.head.kind == HeadKind.PAM_CAM and self.fusion.fused_width(self.taps) % self.head.pam_channels:
            raise ValidationError("pam_cam head needs a fused width divisible by pam_channels")

    @property
    def cluster(self) -> Cluster:
        return HEAD_CLUSTERS[self.head.kind]

    def with_backbone(self, backbone: BackboneSpec) -> "ArchitectureSpec":
        """Same architecture on another backbone."""
        return replace(self, backbone=backbone)

    def with_target_shape(self, channels: int, timepoints: int) -> "ArchitectureSpec":
        """Same architecture predicting another EEG shape."""
        return replace(self, head=replace(self.head, channels=channels, timepoints=timepoints))

    def to_dict(self) -> Dict[str, Any]:
        """Plain dictionary with enum values as strings."""
        return json.loads(self.to_canonical_text())

    def to_canonical_text(self) -> str:
        """Stable JSON text, embedded in checkpoint manifests."""
        def encode(value: Any) -> Any:
            if isinstance(value, Enum):
                return value.value
            if isinstance(value, dict):
                return {k: encode(v) for k, v in value.items()}
            if isinstance(value, (list, tuple)):
                return [encode(v) for v in value]
            return value
        return json.dumps(encode(asdict(self)), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_canonical_text(cls, text: str) -> "ArchitectureSpec":
        """Inverse of to_canonical_text."""
        data = json.loads(text)
        return cls(
            name=data["name"],
            head=HeadSpec(**data["head"]),
            taps=FeatureTapSpec(blocks=tuple(data["taps"]["blocks"]), projection_dim=data["taps"]["projection_dim"]),
            fusion=FusionMode(**data["fusion"]),
            backbone=BackboneSpec(**data["backbone"]),
        )


@dataclass
class DualTaskOutput:
    """Classification logits and EEG prediction of one forward pass.

    logits: [batch x num_classes]; eeg_pred: [batch x channels x timepoints],
    None for classification-only models.
    """
    logits: Any
    eeg_pred: Optional[Any] = None

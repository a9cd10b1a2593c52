"""Training configuration and report types."""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .eeg_types import ControlKind, ControlKindName


DEFAULT_SEEDS = (0, 17, 337)


@dataclass(frozen=True)
class UncertaintyParams:
    """Log-scales of the two task uncertainties; delta_i = exp(s_i)."""
    s1: float = 0.0
    s2: float = 0.0

    @property
    def delta1(self) -> float:
        return math.exp(self.s1)

    @property
    def delta2(self) -> float:
        return math.exp(self.s2)

    @property
    def coefficients(self) -> tuple:
        """Loss weights 1/(2 delta_i^2)."""
        return 0.5 * math.exp(-2.0 * self.s1), 0.5 * math.exp(-2.0 * self.s2)


class TrainConfig(BaseModel):
    """Optimizer and schedule settings of one training run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(5e-6, ge=0.0, description="Adam learning rate")
    weight_decay: float = Field(0.0, ge=0.0, description="L2 weight decay")
    epochs: int = Field(200, ge=1, description="Number of passes over the training set")
    batch_size: int = Field(64, ge=1, description="Mini-batch size")
    head_seed: int = Field(0, description="Seed of the EEG-head initialization")
    data_seed: Optional[int] = Field(None, description="Seed of the data order, derived from head_seed when unset")
    control_kind: ControlKindName = Field(ControlKindName.REAL, description="EEG target condition")
    control_seed: int = Field(0, description="Seed of the control generator")
    optimizer: Literal["adam"] = Field("adam", description="Adaptive-moment first-order optimizer")
    grad_clip_norm: Optional[float] = Field(None, gt=0.0, description="Global gradient-norm clip, off when unset")
    device: str = Field("cpu", description="Torch device")

    @field_validator("control_kind", mode="before")
    @classmethod
    def _coerce_control(cls, value: Any) -> Any:
        if isinstance(value, ControlKind):
            return value.kind
        return value

    @property
    def control(self) -> ControlKind:
        return ControlKind(kind=self.control_kind, seed=self.control_seed)

    @property
    def effective_data_seed(self) -> int:
        """Data-order seed; follows head_seed unless pinned."""
        if self.data_seed is not None:
            return int(self.data_seed)
        return int(self.head_seed) * 7919 + 1


@dataclass
class EpochRecord:
    """Metrics of one epoch."""
    epoch: int
    classification_loss: float
    eeg_mse: float
    total_loss: float
    delta1: float
    delta2: float
    val_top1: Optional[float] = None
    val_pcc_mean: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainReport:
    """Per-epoch trajectories and artifacts of a training run."""
    arch_name: str
    config: TrainConfig
    epochs: List[EpochRecord] = field(default_factory=list)
    wall_time_s: float = 0.0
    checkpoint_path: Optional[str] = None
    update_signature: str = ""
    uncertainty: UncertaintyParams = field(default_factory=UncertaintyParams)
    model: Any = None

    @property
    def total_losses(self) -> List[float]:
        return [record.total_loss for record in self.epochs]

    def to_rows(self) -> List[Dict[str, Any]]:
        """One row per epoch, for CSV output."""
        return [record.to_dict() for record in self.epochs]

    def to_manifest(self) -> Dict[str, Any]:
        """JSON-friendly summary without the model object."""
        return {
            "arch_name": self.arch_name,
            "config": self.config.model_dump(mode="json"),
            "epochs": len(self.epochs),
            "wall_time_s": self.wall_time_s,
            "checkpoint_path": self.checkpoint_path,
            "update_signature": self.update_signature,
            "uncertainty": {"s1": self.uncertainty.s1, "s2": self.uncertainty.s2},
            "final": self.epochs[-1].to_dict() if self.epochs else None,
        }

"""Experiment configuration schema, manifest and grid-cell types."""

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .attack_types import AVG_GAIN_SUBSETS, EPSILON_GRIDS, AttackTag, CwConfig, Norm, PgdConfig, PixelBounds
from .eeg_types import (
    DEFAULT_MAX_TRIALS,
    DEFAULT_TARGET_HZ,
    DEFAULT_WINDOW_S,
    DEFAULT_CHANNELS,
    ControlKindName,
    ZScoreMode,
)
from .model_types import BackboneKind
from .training_types import DEFAULT_SEEDS, TrainConfig


IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

DEFAULT_CANDIDATE_WINDOWS: List[Tuple[float, float]] = [(0.10, 0.12), (0.09, 0.14), (0.05, 0.30)]
DEFAULT_CRITICAL_WINDOW: Tuple[float, float] = (0.09, 0.14)


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


def _ordered_window(value: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = float(value[0]), float(value[1])
    if not lo < hi:
        raise ValueError(f"window must satisfy start < end, got {value}")
    return lo, hi


class ExperimentSection(_Section):
    """[experiment]"""
    name: str = Field("eeg-robustness", description="Experiment label")
    description: str = Field("", description="Free text")


class SyntheticSection(_Section):
    """[data.synthetic]"""
    num_categories: int = Field(8, ge=1)
    images_per_category: int = Field(10, ge=1)
    timepoints: int = Field(100, ge=1)
    trials: int = Field(4, ge=1, description="Repetitions per image, averaged into targets")
    feature_dim: int = Field(16, ge=1, description="Latent image features read out into EEG")
    snr: float = Field(2.0, gt=0.0, description="Trial-average signal-to-noise ratio; inf disables noise")
    coupling_window: Tuple[float, float] = Field(DEFAULT_CRITICAL_WINDOW, description="Seconds carrying the image signal")
    seed: int = Field(7, description="Image seed, shared across subjects")

    @field_validator("coupling_window")
    @classmethod
    def _window(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        return _ordered_window(value)


class DataSection(_Section):
    """[data]"""
    source: Literal["synthetic", "recordings"] = Field("synthetic")
    recordings_dir: Optional[str] = Field(None, description="Directory with one sub-directory per subject")
    images_path: Optional[str] = Field(None, description="Image tensor container (images.nct)")
    subjects: List[str] = Field(default_factory=lambda: ["sub-01"])
    channels: List[str] = Field(default_factory=lambda: list(DEFAULT_CHANNELS))
    window_s: Tuple[float, float] = Field(DEFAULT_WINDOW_S)
    target_hz: float = Field(DEFAULT_TARGET_HZ, gt=0.0)
    max_trials: int = Field(DEFAULT_MAX_TRIALS, ge=1)
    anti_alias: bool = Field(True, description="Block-mean filter before decimation")
    zscore_mode: ZScoreMode = Field(ZScoreMode.PER_IMAGE_CHANNEL)
    val_per_category: int = Field(1, ge=0)
    image_size: int = Field(224, ge=16)
    pixel_mean: Tuple[float, float, float] = Field(IMAGENET_MEAN)
    pixel_std: Tuple[float, float, float] = Field(IMAGENET_STD)
    synthetic: SyntheticSection = Field(default_factory=SyntheticSection)

    @field_validator("window_s")
    @classmethod
    def _window(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        return _ordered_window(value)

    @field_validator("subjects", "channels")
    @classmethod
    def _unique(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("must not be empty")
        if len(set(value)) != len(value):
            raise ValueError("entries must be unique")
        return value

    @field_validator("pixel_std")
    @classmethod
    def _positive_std(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(v <= 0 for v in value):
            raise ValueError("pixel_std entries must be positive")
        return value

    @model_validator(mode="after")
    def _recordings_paths(self) -> "DataSection":
        if self.source == "recordings" and (not self.recordings_dir or not self.images_path):
            raise ValueError("recordings source needs recordings_dir and images_path")
        return self

    @property
    def pixel_bounds(self) -> PixelBounds:
        """Per-channel range of normalized pixels that came from [0, 1] images."""
        lows = tuple((0.0 - m) / s for m, s in zip(self.pixel_mean, self.pixel_std))
        highs = tuple((1.0 - m) / s for m, s in zip(self.pixel_mean, self.pixel_std))
        return lows, highs


class GridSection(_Section):
    """[grid]"""
    archs: List[str] = Field(default_factory=list, description="Architecture names, empty means all registered")
    seeds: List[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS))
    controls: List[ControlKindName] = Field(default_factory=lambda: [ControlKindName.REAL])
    control_seed: int = Field(0)

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, value: List[int]) -> List[int]:
        if not value or len(set(value)) != len(value):
            raise ValueError("seeds must be non-empty and unique")
        return value


class BackboneSection(_Section):
    """[backbone]"""
    kind: BackboneKind = Field(BackboneKind.RESNET50)
    pretrained_weights: Optional[str] = Field(None)
    num_classes: Optional[int] = Field(None, ge=1, description="Defaults to the dataset's category count")
    seed: int = Field(0, description="Backbone initialization seed")


class TrainingSection(_Section):
    """[training]"""
    learning_rate: float = Field(5e-6, ge=0.0)
    weight_decay: float = Field(0.0, ge=0.0)
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(64, ge=1)
    data_seed: Optional[int] = Field(None)
    grad_clip_norm: Optional[float] = Field(None, gt=0.0)

    def to_train_config(self, head_seed: int, control: ControlKindName, control_seed: int, device: str) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            head_seed=head_seed,
            data_seed=self.data_seed,
            control_kind=control,
            control_seed=control_seed,
            grad_clip_norm=self.grad_clip_norm,
            device=device,
        )


class AttackSection(_Section):
    """[attacks.<tag>]"""
    enabled: bool = Field(True)
    epsilons: Optional[List[float]] = Field(None, description="Defaults to the built-in grid")
    steps: Optional[int] = Field(None, ge=1, description="PGD iterations")
    rel_step: Optional[float] = Field(None, gt=0.0)
    random_start: bool = Field(False)
    iterations: int = Field(100, ge=1, description="C&W iterations")
    dist_weight: float = Field(1.0, gt=0.0)
    loss_weight: float = Field(1.0, ge=0.0)
    distance: Literal["l2_squared", "l2"] = Field("l2_squared")
    init_noise: float = Field(0.0, ge=0.0)
    seed: int = Field(0)

    def to_pgd_config(self, norm: Norm, pixel_bounds: PixelBounds) -> PgdConfig:
        overrides: Dict[str, Any] = {
            "random_start": self.random_start,
            "seed": self.seed,
            "pixel_bounds": pixel_bounds,
        }
        if self.epsilons is not None:
            overrides["epsilons"] = self.epsilons
        if self.steps is not None:
            overrides["steps"] = self.steps
        if self.rel_step is not None:
            overrides["rel_step"] = self.rel_step
        return PgdConfig.for_norm(norm, **overrides)

    def to_cw_config(self, pixel_bounds: PixelBounds) -> CwConfig:
        values: Dict[str, Any] = {
            "iterations": self.iterations,
            "dist_weight": self.dist_weight,
            "loss_weight": self.loss_weight,
            "distance": self.distance,
            "init_noise": self.init_noise,
            "seed": self.seed,
            "pixel_bounds": pixel_bounds,
        }
        if self.epsilons is not None:
            values["epsilons"] = self.epsilons
        if self.rel_step is not None:
            values["rel_step"] = self.rel_step
        return CwConfig(**values)


class AttacksSection(_Section):
    """[attacks]"""
    pgd_l2: AttackSection = Field(default_factory=AttackSection)
    pgd_linf: AttackSection = Field(default_factory=AttackSection)
    cw_l2: AttackSection = Field(default_factory=AttackSection)
    batch_size: int = Field(64, ge=1)
    max_images: Optional[int] = Field(None, ge=1, description="Cap on attacked validation images")

    def enabled_tags(self) -> List[AttackTag]:
        return [tag for tag in AttackTag if getattr(self, tag.value).enabled]


class EvaluationSection(_Section):
    """[evaluation]"""
    prepend_zero_epsilon: bool = Field(False, description="Add an eps=0 point to every curve")
    noise_ceiling_splits: int = Field(100, ge=1)
    noise_ceiling_window: Optional[Tuple[float, float]] = Field(None, description="Defaults to the whole epoch")
    avg_gain_whitelist: Dict[str, List[float]] = Field(
        default_factory=lambda: {"pgd_linf": [1e-1]},
        description="Averaging-subset entries allowed to be missing from the attack grid",
    )

    @field_validator("avg_gain_whitelist")
    @classmethod
    def _known_tags(cls, value: Dict[str, List[float]]) -> Dict[str, List[float]]:
        unknown = [k for k in value if k not in {t.value for t in AttackTag}]
        if unknown:
            raise ValueError(f"unknown attack tag(s): {', '.join(unknown)}")
        return value


class AnalysisSection(_Section):
    """[analysis]"""
    window_len_s: float = Field(0.06, gt=0.0)
    step_s: float = Field(0.01, gt=0.0)
    candidate_windows: List[Tuple[float, float]] = Field(default_factory=lambda: list(DEFAULT_CANDIDATE_WINDOWS))
    critical_window: Tuple[float, float] = Field(DEFAULT_CRITICAL_WINDOW)
    aggregate: bool = Field(True, description="Average over subjects and seeds per architecture")
    report_pooled: bool = Field(True, description="Also emit the unaggregated variant")
    alpha: float = Field(0.05, gt=0.0, lt=1.0)

    @field_validator("critical_window")
    @classmethod
    def _window(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        return _ordered_window(value)

    @field_validator("candidate_windows")
    @classmethod
    def _windows(cls, value: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if not value:
            raise ValueError("at least one candidate window is required")
        return [_ordered_window(w) for w in value]


class ExperimentConfig(_Section):
    """Complete experiment configuration."""
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    data: DataSection = Field(default_factory=DataSection)
    grid: GridSection = Field(default_factory=GridSection)
    backbone: BackboneSection = Field(default_factory=BackboneSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    attacks: AttacksSection = Field(default_factory=AttacksSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)

    @model_validator(mode="after")
    def _subsets_on_grid(self) -> "ExperimentConfig":
        bounds = self.data.pixel_bounds
        for tag in self.attacks.enabled_tags():
            section: AttackSection = getattr(self.attacks, tag.value)
            grid = section.epsilons or list(EPSILON_GRIDS[tag])
            allowed = self.evaluation.avg_gain_whitelist.get(tag.value, [])
            for eps in AVG_GAIN_SUBSETS[tag]:
                on_grid = any(abs(eps - g) <= 1e-12 * max(1.0, g) for g in grid)
                whitelisted = any(abs(eps - w) <= 1e-12 * max(1.0, w) for w in allowed)
                if not on_grid and not whitelisted:
                    raise ValueError(
                        f"attacks.{tag.value}: averaging epsilon {eps:g} is not on the attack grid "
                        f"(whitelist it under evaluation.avg_gain_whitelist)"
                    )
            if tag == AttackTag.CW_L2:
                section.to_cw_config(bounds)
            else:
                section.to_pgd_config(Norm.L2 if tag == AttackTag.PGD_L2 else Norm.LINF, bounds)
        return self


class CellStatus(str, Enum):
    """Lifecycle of a grid cell."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    SKIPPED = "skipped"


@dataclass(frozen=True, order=True)
class GridCell:
    """One (arch, subject, seed, control) training job."""
    arch: str
    subject: str
    seed: int
    control: str = ControlKindName.REAL.value

    @property
    def is_baseline(self) -> bool:
        return self.arch == BASELINE_ARCH

    @property
    def arch_dir(self) -> str:
        """Directory name; control cells get a suffix so paths stay disjoint."""
        if self.control == ControlKindName.REAL.value:
            return self.arch
        return f"{self.arch}~{self.control}"

    @property
    def cell_id(self) -> str:
        return f"{self.arch_dir}/{self.subject}/{self.seed}"

    def matches(self, clauses: Dict[str, List[str]]) -> bool:
        """True when every clause accepts one of its alternatives."""
        values = {"arch": self.arch, "subject": self.subject, "seed": str(self.seed), "control": self.control}
        return all(values[key] in options for key, options in clauses.items())


BASELINE_ARCH = "baseline"
BASELINE_SUBJECT = "all"


@dataclass
class ExperimentManifest:
    """Identity and provenance of an experiment run."""
    config_hash: str
    archs: List[str]
    subjects: List[str]
    seeds: List[int]
    controls: List[str]
    attack_configs: Dict[str, Any]
    dataset_fingerprints: Dict[str, str] = field(default_factory=dict)
    toolkit_version: str = ""
    created_at: str = ""
    updated_at: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentManifest":
        return cls(**data)


@dataclass
class CellOutcome:
    """Result of one grid-cell job."""
    cell_id: str
    status: CellStatus
    error: Optional[str] = None
    error_type: Optional[str] = None
    wall_time_s: float = 0.0


@dataclass
class GridRunSummary:
    """Counts and failures of a grid command."""
    command: str
    total: int = 0
    completed: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    failed: List[CellOutcome] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "total": self.total,
            "completed": len(self.completed),
            "skipped": len(self.skipped),
            "failed": [
                {"cell": o.cell_id, "error_type": o.error_type, "error": o.error} for o in self.failed
            ],
        }


@dataclass
class PrepareSummary:
    """Outcome of data preparation."""
    config_hash: str
    fingerprints: Dict[str, str] = field(default_factory=dict)
    written: List[str] = field(default_factory=list)
    unchanged: List[str] = field(default_factory=list)

    @property
    def skipped(self) -> bool:
        """True when every subject matched its recorded fingerprint."""
        return not self.written

"""EEG and paired-dataset domain types."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError


# Channels over occipital and parietal cortex, in training order.
DEFAULT_CHANNELS: Tuple[str, ...] = (
    "Pz", "P3", "P7", "O1", "Oz", "O2", "P4", "P8", "P1",
    "P5", "PO7", "PO3", "POz", "PO4", "PO8", "P6", "P2",
)

PARIETO_OCCIPITAL_CHANNELS: Tuple[str, ...] = ("PO7", "PO3", "POz", "PO4", "PO8")
OCCIPITAL_CHANNELS: Tuple[str, ...] = ("Oz", "O1", "O2")

DEFAULT_WINDOW_S: Tuple[float, float] = (-0.2, 0.8)
DEFAULT_TARGET_HZ = 100.0
DEFAULT_MAX_TRIALS = 4


class ControlKindName(str, Enum):
    """EEG condition used as regression target."""
    REAL = "real"
    SHUFFLED = "shuffled"
    RANDOM_GEOMETRIC = "random_geometric"
    RANDOM_NORMAL = "random_normal"


class SplitTag(str, Enum):
    """Dataset split."""
    TRAIN = "train"
    VAL = "val"


class ZScoreMode(str, Enum):
    """Grouping of z-score statistics."""
    PER_IMAGE_CHANNEL = "per_image_channel"
    POOLED = "pooled"


@dataclass(frozen=True)
class ControlKind:
    """Target condition and the seed of its generator."""
    kind: ControlKindName = ControlKindName.REAL
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ControlKindName(self.kind))

    @property
    def is_real(self) -> bool:
        """True for the unmodified EEG condition."""
        return self.kind == ControlKindName.REAL


@dataclass(frozen=True)
class EegEvent:
    """Stimulus onset of one image presentation."""
    image_id: str
    onset_sample: int
    category_id: int


@dataclass(frozen=True, eq=False)
class RawEegRecording:
    """Continuous multichannel recording with stimulus events."""
    subject_id: str
    channel_names: List[str]
    sample_rate_hz: float
    signal: np.ndarray
    events: List[EegEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if len(set(self.channel_names)) != len(self.channel_names):
            duplicates = sorted({n for n in self.channel_names if self.channel_names.count(n) > 1})
            raise ValidationError(f"Duplicate channel names: {', '.join(duplicates)}")
        if self.signal.ndim != 2 or self.signal.shape[0] != len(self.channel_names):
            raise ValidationError(
                f"signal must be [channels x samples] with {len(self.channel_names)} rows, "
                f"got shape {self.signal.shape}"
            )

    @property
    def num_samples(self) -> int:
        """Number of samples per channel."""
        return int(self.signal.shape[1])


@dataclass(frozen=True, eq=False)
class EegEpochSet:
    """Epoched EEG grouped by image: [images x trials x channels x timepoints]."""
    data: np.ndarray
    t_start_s: float
    dt_s: float
    channel_names: List[str]
    image_ids: List[str]
    category_ids: Optional[List[int]] = None
    subject_id: str = ""

    def __post_init__(self) -> None:
        if self.data.ndim != 4:
            raise ValidationError(f"EEG epoch data must be 4-D, got shape {self.data.shape}")
        if self.data.shape[2] != len(self.channel_names):
            raise ValidationError(
                f"Channel axis has {self.data.shape[2]} rows but {len(self.channel_names)} names"
            )
        if self.data.shape[0] != len(self.image_ids):
            raise ValidationError(
                f"Image axis has {self.data.shape[0]} rows but {len(self.image_ids)} image ids"
            )
        if self.category_ids is not None and len(self.category_ids) != len(self.image_ids):
            raise ValidationError("category_ids must align with image_ids")
        if self.dt_s <= 0:
            raise ValidationError(f"dt_s must be positive, got {self.dt_s}")

    @property
    def num_images(self) -> int:
        return int(self.data.shape[0])

    @property
    def num_trials(self) -> int:
        return int(self.data.shape[1])

    @property
    def num_channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def num_timepoints(self) -> int:
        return int(self.data.shape[3])

    @property
    def times(self) -> np.ndarray:
        """Time of each sample in seconds."""
        return self.t_start_s + self.dt_s * np.arange(self.num_timepoints)

    def with_data(self, data: np.ndarray, **changes) -> "EegEpochSet":
        """Copy with new data (and optionally other fields)."""
        fields = dict(
            data=data,
            t_start_s=self.t_start_s,
            dt_s=self.dt_s,
            channel_names=list(self.channel_names),
            image_ids=list(self.image_ids),
            category_ids=None if self.category_ids is None else list(self.category_ids),
            subject_id=self.subject_id,
        )
        fields.update(changes)
        return EegEpochSet(**fields)


@dataclass(frozen=True, eq=False)
class PairedDataset:
    """Image / EEG-target / category triplets, stored column-wise.

    images: [N x 3 x H x W] float32, eeg_targets: [N x C x T] float32.
    """
    images: np.ndarray
    eeg_targets: np.ndarray
    category_ids: np.ndarray
    image_ids: List[str]
    num_categories: int
    split_tag: SplitTag = SplitTag.TRAIN
    channel_names: List[str] = field(default_factory=list)
    t_start_s: float = DEFAULT_WINDOW_S[0]
    dt_s: float = 1.0 / DEFAULT_TARGET_HZ

    def __post_init__(self) -> None:
        object.__setattr__(self, "split_tag", SplitTag(self.split_tag))
        n = len(self.image_ids)
        if self.images.shape[0] != n or self.eeg_targets.shape[0] != n or len(self.category_ids) != n:
            raise ValidationError(
                f"Paired dataset columns disagree: {self.images.shape[0]} images, "
                f"{self.eeg_targets.shape[0]} targets, {len(self.category_ids)} labels, {n} ids"
            )
        if n and (self.images.ndim != 4 or self.images.shape[1] != 3 or self.images.shape[2] != self.images.shape[3]):
            raise ValidationError(f"images must be [N x 3 x H x H], got {self.images.shape}")
        if n and self.eeg_targets.ndim != 3:
            raise ValidationError(f"eeg_targets must be [N x C x T], got {self.eeg_targets.shape}")
        if n and (int(np.min(self.category_ids)) < 0 or int(np.max(self.category_ids)) >= self.num_categories):
            raise ValidationError(f"category ids must lie in [0, {self.num_categories})")

    def __len__(self) -> int:
        return len(self.image_ids)

    def __getitem__(self, index: int) -> Tuple[np.ndarray, np.ndarray, int]:
        return self.images[index], self.eeg_targets[index], int(self.category_ids[index])

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray, int]]:
        for index in range(len(self)):
            yield self[index]

    @property
    def image_size(self) -> int:
        return int(self.images.shape[-1])

    @property
    def target_shape(self) -> Tuple[int, int]:
        return int(self.eeg_targets.shape[1]), int(self.eeg_targets.shape[2])

    @property
    def times(self) -> np.ndarray:
        return self.t_start_s + self.dt_s * np.arange(self.eeg_targets.shape[2])

    def subset(self, indices: Sequence[int], split_tag: Optional[SplitTag] = None) -> "PairedDataset":
        """Rows at the given indices, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return PairedDataset(
            images=self.images[idx],
            eeg_targets=self.eeg_targets[idx],
            category_ids=self.category_ids[idx],
            image_ids=[self.image_ids[i] for i in idx],
            num_categories=self.num_categories,
            split_tag=split_tag or self.split_tag,
            channel_names=list(self.channel_names),
            t_start_s=self.t_start_s,
            dt_s=self.dt_s,
        )

    def with_targets(self, eeg_targets: np.ndarray) -> "PairedDataset":
        """Copy with replaced EEG targets."""
        if eeg_targets.shape != self.eeg_targets.shape:
            raise ValidationError(
                f"Replacement targets have shape {eeg_targets.shape}, expected {self.eeg_targets.shape}"
            )
        return PairedDataset(
            images=self.images,
            eeg_targets=eeg_targets.astype(np.float32),
            category_ids=self.category_ids,
            image_ids=list(self.image_ids),
            num_categories=self.num_categories,
            split_tag=self.split_tag,
            channel_names=list(self.channel_names),
            t_start_s=self.t_start_s,
            dt_s=self.dt_s,
        )

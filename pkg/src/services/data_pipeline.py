"""EEG preprocessing: epoching, channel selection, trial averaging, z-scoring, controls, splits."""

import warnings
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.nn import functional as F

from ..domain.eeg_types import (
    DEFAULT_MAX_TRIALS,
    ControlKind,
    ControlKindName,
    EegEpochSet,
    PairedDataset,
    RawEegRecording,
    SplitTag,
    ZScoreMode,
)
from ..domain.errors import (
    ChannelNotFoundError,
    EventWindowError,
    InsufficientDataError,
    ValidationError,
)
from ..domain.experiment_types import DataSection
from ..infrastructure.logger import get_logger


RATIO_TOLERANCE = 1e-9
GEOMETRIC_P = 0.5

logger = get_logger("DataPipeline")


def _decimation_ratio(sample_rate_hz: float, target_hz: float) -> int:
    if target_hz <= 0:
        raise ValidationError(f"target_hz must be positive, got {target_hz}", target="target_hz")
    if target_hz > sample_rate_hz:
        raise ValidationError(
            f"target_hz {target_hz} exceeds the recording rate {sample_rate_hz}", target="target_hz"
        )
    ratio = sample_rate_hz / target_hz
    if abs(ratio - round(ratio)) > RATIO_TOLERANCE * ratio:
        raise ValidationError(
            f"Decimation ratio {sample_rate_hz}/{target_hz} = {ratio:g} is not an integer", target="target_hz"
        )
    return int(round(ratio))


def epoch_and_downsample(
    raw: RawEegRecording,
    window: Tuple[float, float],
    target_hz: float,
    max_trials: int = DEFAULT_MAX_TRIALS,
    anti_alias: bool = True,
) -> EegEpochSet:
    """Cut stimulus-locked epochs, decimate them and group by sorted image id.

    Repetitions beyond max_trials are dropped (first in onset order are kept);
    images with fewer repetitions are NaN-padded.

    Output sample k is labelled t0 + k / target_hz in both modes. With anti_alias
    it is the mean of the raw samples in [t0 + k / target_hz, t0 + (k + 1) / target_hz),
    so a block mean carries the time of its first raw sample and the label grid
    starts exactly on the window edge; its centroid lies half a block later.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t0 < t1:
        raise ValidationError(f"Epoch window must satisfy t0 < t1, got {window}", target="window")
    if not raw.events:
        raise ValidationError(f"Recording '{raw.subject_id}' has no events", target="events")
    ratio = _decimation_ratio(raw.sample_rate_hz, target_hz)
    n_out = int(round((t1 - t0) * target_hz))
    n_raw = n_out * ratio
    offset = int(round(t0 * raw.sample_rate_hz))

    grouped: "OrderedDict[str, list]" = OrderedDict()
    categories: Dict[str, int] = {}
    for event in sorted(raw.events, key=lambda e: (e.onset_sample, e.image_id)):
        start = event.onset_sample + offset
        if start < 0 or start + n_raw > raw.num_samples:
            raise EventWindowError(event.image_id, event.onset_sample)
        known = categories.setdefault(event.image_id, event.category_id)
        if known != event.category_id:
            raise ValidationError(
                f"Image '{event.image_id}' carries categories {known} and {event.category_id}", target="events"
            )
        grouped.setdefault(event.image_id, []).append(start)

    image_ids = sorted(grouped)
    trials = min(max_trials, max(len(starts) for starts in grouped.values()))
    n_channels = len(raw.channel_names)
    data = np.full((len(image_ids), trials, n_channels, n_out), np.nan, dtype=np.float64)
    for i, image_id in enumerate(image_ids):
        for k, start in enumerate(grouped[image_id][:trials]):
            segment = np.asarray(raw.signal[:, start:start + n_raw], dtype=np.float64)
            if ratio == 1:
                data[i, k] = segment
            elif anti_alias:
                data[i, k] = segment.reshape(n_channels, n_out, ratio).mean(axis=2)
            else:
                data[i, k] = segment[:, ::ratio]

    padded = sum(1 for starts in grouped.values() if len(starts) < trials)
    if padded:
        logger.debug(f"{raw.subject_id}: {padded} image(s) with fewer than {trials} repetitions")
    return EegEpochSet(
        data=data,
        t_start_s=offset / raw.sample_rate_hz,
        dt_s=1.0 / target_hz,
        channel_names=list(raw.channel_names),
        image_ids=image_ids,
        category_ids=[categories[i] for i in image_ids],
        subject_id=raw.subject_id,
    )


def select_channels(epochs: EegEpochSet, names: Sequence[str]) -> EegEpochSet:
    """Keep the named channels, in the requested order."""
    index = {name: i for i, name in enumerate(epochs.channel_names)}
    missing = [name for name in names if name not in index]
    if missing:
        raise ChannelNotFoundError(missing)
    rows = [index[name] for name in names]
    return epochs.with_data(epochs.data[:, :, rows, :], channel_names=list(names))


def average_trials(epochs: EegEpochSet) -> EegEpochSet:
    """Mean over the trial axis, ignoring NaN padding."""
    if epochs.num_trials < 1:
        raise ValidationError("Cannot average an epoch set without trials", target="trials")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        averaged = np.nanmean(epochs.data, axis=1, keepdims=True)
    return epochs.with_data(averaged)


def _zscore_last_axis(data: np.ndarray) -> np.ndarray:
    mean = data.mean(axis=-1, keepdims=True)
    std = data.std(axis=-1, keepdims=True)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    safe = np.where(constant, 1.0, std)
    return np.where(constant, 0.0, (data - mean) / safe)


def _zscore_pooled(data: np.ndarray) -> np.ndarray:
    # Statistics per channel over images, trials and time.
    mean = data.mean(axis=(0, 1, 3), keepdims=True)
    std = data.std(axis=(0, 1, 3), keepdims=True)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    safe = np.where(constant, 1.0, std)
    return np.where(constant, 0.0, (data - mean) / safe)


def zscore_temporal(epochs: EegEpochSet, mode: ZScoreMode = ZScoreMode.PER_IMAGE_CHANNEL) -> EegEpochSet:
    """Z-score each series over time; constant series become zeros."""
    if epochs.num_trials != 1:
        raise ValidationError(f"z-scoring expects averaged epochs, got {epochs.num_trials} trials", target="trials")
    if ZScoreMode(mode) == ZScoreMode.POOLED:
        return epochs.with_data(_zscore_pooled(epochs.data))
    return epochs.with_data(_zscore_last_axis(epochs.data))


def make_control(epochs: EegEpochSet, ctrl: ControlKind) -> EegEpochSet:
    """Shuffled or random replacement of the EEG values."""
    if ctrl.is_real:
        raise ValidationError("make_control needs a non-real control kind", target="control")
    rng = np.random.default_rng(ctrl.seed)
    shape = epochs.data.shape
    if ctrl.kind == ControlKindName.SHUFFLED:
        permutation = rng.permutation(shape[0])
        return epochs.with_data(epochs.data[permutation].copy())
    if ctrl.kind == ControlKindName.RANDOM_GEOMETRIC:
        draws = rng.geometric(GEOMETRIC_P, size=shape).astype(np.float64)
    else:
        draws = rng.standard_normal(size=shape)
    return epochs.with_data(_zscore_last_axis(draws))


def targets_as_epochs(dataset: PairedDataset) -> EegEpochSet:
    """View PairedDataset targets as a single-trial epoch set."""
    return EegEpochSet(
        data=dataset.eeg_targets[:, None, :, :].astype(np.float64),
        t_start_s=dataset.t_start_s,
        dt_s=dataset.dt_s,
        channel_names=list(dataset.channel_names) or [f"ch{i}" for i in range(dataset.target_shape[0])],
        image_ids=list(dataset.image_ids),
        category_ids=[int(c) for c in dataset.category_ids],
    )


def apply_control(dataset: PairedDataset, ctrl: ControlKind) -> PairedDataset:
    """Dataset with targets replaced by the control condition; real is returned unchanged."""
    if ctrl.is_real:
        return dataset
    control = make_control(targets_as_epochs(dataset), ctrl)
    return dataset.with_targets(control.data[:, 0].astype(np.float32))


def split_train_val(dataset: PairedDataset, val_per_category: int) -> Tuple[PairedDataset, PairedDataset]:
    """First val_per_category items of each category (by sorted image id) go to validation."""
    if val_per_category < 0:
        raise ValidationError("val_per_category must be >= 0", target="val_per_category")
    by_category: Dict[int, List[int]] = {}
    for index, category in enumerate(dataset.category_ids):
        by_category.setdefault(int(category), []).append(index)

    val_indices = set()
    if val_per_category > 0:
        for category, indices in sorted(by_category.items()):
            if len(indices) <= val_per_category:
                raise InsufficientDataError(
                    f"Category {category} has {len(indices)} item(s), needs more than {val_per_category}",
                    available=len(indices),
                    required=val_per_category + 1,
                )
            ordered = sorted(indices, key=lambda i: dataset.image_ids[i])
            val_indices.update(ordered[:val_per_category])

    train = [i for i in range(len(dataset)) if i not in val_indices]
    val = [i for i in range(len(dataset)) if i in val_indices]
    return dataset.subset(train, SplitTag.TRAIN), dataset.subset(val, SplitTag.VAL)


def normalize_images(
    images: np.ndarray,
    image_size: int,
    pixel_mean: Sequence[float],
    pixel_std: Sequence[float],
) -> np.ndarray:
    """Bilinear resize to image_size, then per-channel normalization."""
    tensor = torch.as_tensor(np.asarray(images, dtype=np.float32))
    if tensor.shape[-1] != image_size or tensor.shape[-2] != image_size:
        tensor = F.interpolate(tensor, size=(image_size, image_size), mode="bilinear", align_corners=False)
    mean = torch.tensor(pixel_mean, dtype=torch.float32).view(1, 3, 1, 1)
    std = torch.tensor(pixel_std, dtype=torch.float32).view(1, 3, 1, 1)
    return ((tensor - mean) / std).numpy()


def build_paired_dataset(
    epochs: EegEpochSet,
    images_by_id: Dict[str, np.ndarray],
    image_size: int,
    pixel_mean: Sequence[float],
    pixel_std: Sequence[float],
    num_categories: Optional[int] = None,
) -> PairedDataset:
    """Pair averaged EEG targets with normalized images."""
    if epochs.num_trials != 1:
        raise ValidationError("Paired targets must be trial-averaged", target="trials")
    if epochs.category_ids is None:
        raise ValidationError("Epoch set carries no category ids", target="category_ids")
    missing = [i for i in epochs.image_ids if i not in images_by_id]
    if missing:
        raise ValidationError(f"No image for id(s): {', '.join(missing[:10])}", target="images")
    raw_images = np.stack([images_by_id[i] for i in epochs.image_ids])
    categories = np.asarray(epochs.category_ids, dtype=np.int64)
    return PairedDataset(
        images=normalize_images(raw_images, image_size, pixel_mean, pixel_std),
        eeg_targets=epochs.data[:, 0].astype(np.float32),
        category_ids=categories,
        image_ids=list(epochs.image_ids),
        num_categories=int(num_categories if num_categories is not None else categories.max() + 1),
        split_tag=SplitTag.TRAIN,
        channel_names=list(epochs.channel_names),
        t_start_s=epochs.t_start_s,
        dt_s=epochs.dt_s,
    )


@dataclass(frozen=True, eq=False)
class PreparedRecording:
    """Averaged z-scored targets and the trialwise epochs they came from."""
    targets: EegEpochSet
    trialwise: EegEpochSet


def preprocess_recording(raw: RawEegRecording, cfg: DataSection) -> PreparedRecording:
    """epoch -> select -> average -> z-score."""
    epochs = epoch_and_downsample(raw, cfg.window_s, cfg.target_hz, cfg.max_trials, cfg.anti_alias)
    selected = select_channels(epochs, cfg.channels)
    targets = zscore_temporal(average_trials(selected), cfg.zscore_mode)
    logger.info(
        f"{raw.subject_id}: {targets.num_images} images, {selected.num_trials} trials, "
        f"{targets.num_channels} channels, {targets.num_timepoints} timepoints"
    )
    return PreparedRecording(targets=targets, trialwise=selected)

"""Synthetic paired data and planted model grids for desk-scale runs and method checks."""

import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from ..domain.analysis_types import GridEntry, GridKey, ModelGridResult
from ..domain.attack_types import AttackTag
from ..domain.eeg_types import DEFAULT_TARGET_HZ, DEFAULT_WINDOW_S, DEFAULT_CHANNELS, EegEpochSet, PairedDataset
from ..domain.errors import ValidationError
from ..domain.evaluation_types import PccMatrix
from ..domain.experiment_types import IMAGENET_MEAN, IMAGENET_STD, DEFAULT_CRITICAL_WINDOW, DataSection
from ..infrastructure.logger import get_logger
from .data_pipeline import normalize_images, split_train_val


LATENT_JITTER = 0.3
IMAGE_CONTRAST = 0.12
IMAGE_NOISE = 0.05
NOISE_SMOOTHING_SAMPLES = 1.5

logger = get_logger("SyntheticData")


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and signal parameters of a synthetic dataset."""
    num_categories: int = 8
    images_per_category: int = 10
    channels: Tuple[str, ...] = DEFAULT_CHANNELS
    timepoints: int = 100
    image_size: int = 32
    snr: float = 2.0
    coupling_window: Tuple[float, float] = DEFAULT_CRITICAL_WINDOW
    trials: int = 4
    feature_dim: int = 16
    t_start_s: float = DEFAULT_WINDOW_S[0]
    dt_s: float = 1.0 / DEFAULT_TARGET_HZ
    val_per_category: int = 1
    pixel_mean: Tuple[float, float, float] = IMAGENET_MEAN
    pixel_std: Tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self) -> None:
        counts = {
            "num_categories": self.num_categories,
            "images_per_category": self.images_per_category,
            "channels": len(self.channels),
            "timepoints": self.timepoints,
            "trials": self.trials,
            "feature_dim": self.feature_dim,
        }
        low = [name for name, value in counts.items() if value < 1]
        if low:
            raise ValidationError(f"Synthetic counts must be >= 1: {', '.join(low)}", target="synthetic")
        if self.image_size < 8:
            raise ValidationError("Synthetic image_size must be >= 8", target="image_size")
        if not self.snr > 0:
            raise ValidationError("snr must be positive", target="snr")
        if not self.coupling_window[0] < self.coupling_window[1]:
            raise ValidationError("coupling_window must satisfy start < end", target="coupling_window")

    @classmethod
    def from_config(cls, data: DataSection) -> "SyntheticSpec":
        s = data.synthetic
        return cls(
            num_categories=s.num_categories,
            images_per_category=s.images_per_category,
            channels=tuple(data.channels),
            timepoints=s.timepoints,
            image_size=data.image_size,
            snr=s.snr,
            coupling_window=tuple(s.coupling_window),
            trials=s.trials,
            feature_dim=s.feature_dim,
            t_start_s=data.window_s[0],
            dt_s=1.0 / data.target_hz,
            val_per_category=data.val_per_category,
            pixel_mean=tuple(data.pixel_mean),
            pixel_std=tuple(data.pixel_std),
        )

    @property
    def times(self) -> np.ndarray:
        return self.t_start_s + self.dt_s * np.arange(self.timepoints)


@dataclass(frozen=True, eq=False)
class SyntheticSubject:
    """Images in [0, 1], their latents, and one subject's EEG."""
    images: np.ndarray
    image_ids: List[str]
    category_ids: np.ndarray
    latents: np.ndarray
    templates: np.ndarray
    readout: np.ndarray
    epochs: EegEpochSet
    targets: np.ndarray


def subject_seed(seed: int, subject_id: str) -> int:
    """Stable per-subject seed (independent of Python's hash randomization)."""
    return (seed * 1_000_003 + zlib.crc32(subject_id.encode("utf-8"))) % (2 ** 31)


def coupling_profile(times: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    """Gaussian bump centred on the window, sigma = width / 4."""
    lo, hi = window
    centre, sigma = (lo + hi) / 2.0, (hi - lo) / 4.0
    return np.exp(-0.5 * ((times - centre) / sigma) ** 2)


def _unit(values: np.ndarray) -> np.ndarray:
    std = values.std()
    return values / std if std > 0 else values


def _images(spec: SyntheticSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n = spec.num_categories * spec.images_per_category
    size = spec.image_size
    templates = rng.standard_normal((spec.num_categories, spec.feature_dim))
    categories = np.repeat(np.arange(spec.num_categories), spec.images_per_category)
    latents = templates[categories] + LATENT_JITTER * rng.standard_normal((n, spec.feature_dim))

    basis = np.stack([
        _unit(gaussian_filter(rng.standard_normal((3, size, size)), sigma=(0, size / 8, size / 8)))
        for _ in range(spec.feature_dim)
    ])
    pattern = np.tensordot(latents, basis, axes=(1, 0)) / np.sqrt(spec.feature_dim)
    colored = np.stack([
        _unit(gaussian_filter(rng.standard_normal((3, size, size)), sigma=(0, size / 16, size / 16)))
        for _ in range(n)
    ])
    images = np.clip(0.5 + IMAGE_CONTRAST * pattern + IMAGE_NOISE * colored, 0.0, 1.0)
    return images.astype(np.float32), categories, latents, templates


def synthesize_epochs(spec: SyntheticSpec, image_seed: int, eeg_seed: int, subject_id: str = "") -> SyntheticSubject:
    """Images from image_seed, subject-specific readout and trial noise from eeg_seed."""
    images, categories, latents, templates = _images(spec, np.random.default_rng(image_seed))
    rng = np.random.default_rng(eeg_seed)
    n, c, t = images.shape[0], len(spec.channels), spec.timepoints

    weights = rng.standard_normal((c, spec.feature_dim)) / np.sqrt(spec.feature_dim)
    amplitude = latents @ weights.T
    readout = amplitude[:, :, None] * coupling_profile(spec.times, spec.coupling_window)[None, None, :]

    if np.isinf(spec.snr):
        trials = np.repeat(readout[:, None], spec.trials, axis=1)
        targets = readout.copy()
    else:
        noise = gaussian_filter1d(rng.standard_normal((n, spec.trials, c, t)), NOISE_SMOOTHING_SAMPLES, axis=-1)
        noise = _unit(noise) * (amplitude.std() / spec.snr) * np.sqrt(spec.trials)
        trials = readout[:, None] + noise
        targets = readout + noise.mean(axis=1)

    image_ids = [f"img{cat:04d}_{k:03d}" for cat in range(spec.num_categories) for k in range(spec.images_per_category)]
    epochs = EegEpochSet(
        data=trials,
        t_start_s=spec.t_start_s,
        dt_s=spec.dt_s,
        channel_names=list(spec.channels),
        image_ids=image_ids,
        category_ids=[int(x) for x in categories],
        subject_id=subject_id,
    )
    return SyntheticSubject(
        images=images,
        image_ids=image_ids,
        category_ids=categories.astype(np.int64),
        latents=latents,
        templates=templates,
        readout=readout,
        epochs=epochs,
        targets=targets,
    )


def generate_synthetic(spec: SyntheticSpec, seed: int) -> Tuple[PairedDataset, PairedDataset]:
    """Seeded (train, val) paired datasets whose targets are a readout of image features."""
    subject = synthesize_epochs(spec, seed, seed)
    dataset = PairedDataset(
        images=normalize_images(subject.images, spec.image_size, spec.pixel_mean, spec.pixel_std),
        eeg_targets=subject.targets.astype(np.float32),
        category_ids=subject.category_ids,
        image_ids=list(subject.image_ids),
        num_categories=spec.num_categories,
        channel_names=list(spec.channels),
        t_start_s=spec.t_start_s,
        dt_s=spec.dt_s,
    )
    logger.debug(f"Synthetic dataset: {len(dataset)} items, snr {spec.snr}, seed {seed}")
    return split_train_val(dataset, spec.val_per_category)


DEFAULT_GAIN_SLOPES: Dict[str, float] = {
    AttackTag.PGD_L2.value: 0.3,
    AttackTag.PGD_LINF.value: 0.2,
    AttackTag.CW_L2.value: 0.25,
}


@dataclass(frozen=True)
class PlantedGridSpec:
    """Grid whose Avg_Gain is driven by PCC inside one window (optionally one channel)."""
    archs: Sequence[str]
    subjects: Sequence[str] = ("sub-01",)
    seeds: Sequence[int] = (0, 17, 337)
    channels: Sequence[str] = DEFAULT_CHANNELS
    t_start_s: float = DEFAULT_WINDOW_S[0]
    dt_s: float = 1.0 / DEFAULT_TARGET_HZ
    timepoints: int = 100
    window: Tuple[float, float] = DEFAULT_CRITICAL_WINDOW
    planted_channel: Optional[int] = None
    snr: float = 3.0
    slopes: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_GAIN_SLOPES))
    quality_range: Tuple[float, float] = (0.05, 0.45)
    background: Tuple[float, float] = (0.15, 0.1)
    jitter: float = 0.02

    @property
    def times(self) -> np.ndarray:
        return self.t_start_s + self.dt_s * np.arange(self.timepoints)


def synthesize_model_grid(spec: PlantedGridSpec, seed: int) -> ModelGridResult:
    """Grid with gain = slope * (planted PCC mean) + noise; PCC elsewhere is independent."""
    if not spec.archs:
        raise ValidationError("Planted grid needs at least one architecture", target="archs")
    rng = np.random.default_rng(seed)
    times = spec.times
    tol = 1e-9 * max(1.0, abs(spec.dt_s))
    in_window = (times >= spec.window[0] - tol) & (times <= spec.window[1] + tol)
    if not in_window.any():
        raise ValidationError(f"Window {spec.window} holds no timepoint", target="window")
    rows = np.arange(len(spec.channels)) if spec.planted_channel is None else np.array([spec.planted_channel])

    keys = [GridKey(a, s, int(z)) for a in spec.archs for s in spec.subjects for z in spec.seeds]
    matrices, drivers = [], []
    for _ in keys:
        mean, std = spec.background
        values = rng.normal(mean, std, size=(len(spec.channels), len(times)))
        quality = rng.uniform(*spec.quality_range)
        planted = quality + spec.jitter * rng.standard_normal((len(rows), int(in_window.sum())))
        values[np.ix_(rows, np.flatnonzero(in_window))] = planted
        values = np.clip(values, -0.99, 0.99)
        matrices.append(values)
        drivers.append(values[np.ix_(rows, np.flatnonzero(in_window))].mean())

    drivers_arr = np.asarray(drivers)
    grid = ModelGridResult()
    gains: Dict[str, np.ndarray] = {}
    for tag, slope in spec.slopes.items():
        signal = slope * drivers_arr
        spread = signal.std() / spec.snr if np.isfinite(spec.snr) else 0.0
        gains[tag] = signal + spread * rng.standard_normal(len(keys))
    for i, key in enumerate(keys):
        pcc = PccMatrix(values=matrices[i], channel_names=list(spec.channels), times=times)
        grid.add(key, GridEntry(avg_gain={tag: float(g[i]) for tag, g in gains.items()}, pcc=pcc))
    return grid

"""Robustness, prediction-accuracy and noise-ceiling result types."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RobustnessCurve:
    """Top-1 accuracy per attack strength."""
    attack_tag: str
    points: Tuple[Tuple[float, float], ...]
    model_id: str = ""
    n_images: int = 0

    def __post_init__(self) -> None:
        points = tuple((float(e), float(a)) for e, a in self.points)
        object.__setattr__(self, "points", points)
        eps = [e for e, _ in points]
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("Robustness curve epsilons must be strictly ascending", target="points")
        if any(not 0.0 <= a <= 1.0 for _, a in points):
            raise ValidationError("Robustness curve accuracies must lie in [0, 1]", target="points")

    @property
    def epsilons(self) -> List[float]:
        return [e for e, _ in self.points]

    @property
    def accuracies(self) -> List[float]:
        return [a for _, a in self.points]

    def accuracy_at(self, epsilon: float) -> Optional[float]:
        """Accuracy at a grid point, None if absent."""
        for e, a in self.points:
            if np.isclose(e, epsilon, rtol=1e-9, atol=0.0):
                return a
        return None


@dataclass(frozen=True)
class GainRecord:
    """Robustness gain of one co-trained model over its baseline."""
    arch_name: str
    subject_id: str
    seed: int
    attack_tag: str
    gain_curve: Tuple[Tuple[float, float], ...]
    avg_gain: float
    control: str = "real"

    def to_rows(self) -> List[Dict[str, object]]:
        """Rows of the gains table."""
        return [
            {
                "arch": self.arch_name,
                "control": self.control,
                "subject": self.subject_id,
                "seed": self.seed,
                "attack": self.attack_tag,
                "epsilon": eps,
                "gain": gain,
            }
            for eps, gain in self.gain_curve
        ]


@dataclass(frozen=True, eq=False)
class PccMatrix:
    """Per-channel, per-timepoint correlation between predicted and measured EEG."""
    values: np.ndarray
    channel_names: List[str]
    times: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValidationError(f"PCC matrix must be 2-D, got shape {self.values.shape}")
        if self.values.shape != (len(self.channel_names), len(self.times)):
            raise ValidationError(
                f"PCC matrix shape {self.values.shape} disagrees with "
                f"{len(self.channel_names)} channels x {len(self.times)} timepoints"
            )
        finite = self.values[np.isfinite(self.values)]
        if finite.size and np.max(np.abs(finite)) > 1.0 + 1e-9:
            raise ValidationError("PCC values must lie in [-1, 1]")

    @property
    def nan_mask(self) -> np.ndarray:
        """True where a series was constant."""
        return np.isnan(self.values)

    @property
    def dt_s(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True, eq=False)
class NoiseCeiling:
    """Split-half lower and upper noise ceilings per channel."""
    channel_names: List[str]
    lower: np.ndarray
    upper: np.ndarray
    n_splits: int = 0
    window: Tuple[float, float] = field(default=(float("-inf"), float("inf")))

    def __post_init__(self) -> None:
        if self.lower.shape != (len(self.channel_names),) or self.upper.shape != self.lower.shape:
            raise ValidationError("Noise ceilings must have one value per channel")

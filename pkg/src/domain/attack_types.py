"""Adversarial attack configuration and result types."""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class Norm(str, Enum):
    """Perturbation norm."""
    L2 = "l2"
    LINF = "linf"


class AttackTag(str, Enum):
    """Attack identifier."""
    PGD_L2 = "pgd_l2"
    PGD_LINF = "pgd_linf"
    CW_L2 = "cw_l2"


EPSILON_GRIDS: Dict[AttackTag, Tuple[float, ...]] = {
    AttackTag.PGD_L2: (
        1e-3, 5e-3, 7e-3, 1e-2, 2e-2, 3e-2, 5e-2, 7e-2, 1e-1, 2e-1, 3e-1, 5e-1, 7e-1, 1.0,
    ),
    AttackTag.PGD_LINF: (
        1e-5, 2e-5, 3e-5, 4e-5, 5e-5, 6e-5, 7e-5, 8e-5,
        1e-4, 3e-4, 5e-4, 7e-4, 8e-4, 1e-3, 8e-3, 1e-2,
    ),
    AttackTag.CW_L2: (
        1e-5, 7e-5, 1e-4, 7e-4, 1e-3, 1e-2, 1e-1, 3e-1, 5e-1, 7e-1, 9e-1, 1.0,
        1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0,
    ),
}

# High-epsilon subsets averaged into Avg_Gain.
AVG_GAIN_SUBSETS: Dict[AttackTag, Tuple[float, ...]] = {
    AttackTag.CW_L2: (
        5e-1, 7e-1, 9e-1, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0,
    ),
    AttackTag.PGD_LINF: (
        8e-5, 1e-4, 3e-4, 5e-4, 7e-4, 8e-4, 1e-3, 8e-3, 1e-2, 1e-1,
    ),
    AttackTag.PGD_L2: (7e-2, 1e-1, 2e-1, 3e-1, 5e-1, 7e-1, 1.0),
}

# A bound is one value for every channel or one value per channel.
PixelBound = Union[float, Tuple[float, ...]]
PixelBounds = Tuple[PixelBound, PixelBound]

DEFAULT_PIXEL_BOUNDS: PixelBounds = (0.0, 1.0)


def _check_epsilons(values: List[float]) -> List[float]:
    eps = [float(v) for v in values]
    if not eps:
        raise ValueError("epsilons must not be empty")
    if any(e <= 0 for e in eps):
        raise ValueError("epsilons must be positive")
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be sorted ascending and unique")
    return eps


def _as_bound(value: Any) -> PixelBound:
    if isinstance(value, (int, float)):
        return float(value)
    values = tuple(float(v) for v in value)
    if not values:
        raise ValueError("per-channel pixel bounds must not be empty")
    return values


def _check_bounds(bounds: PixelBounds) -> PixelBounds:
    low, high = _as_bound(bounds[0]), _as_bound(bounds[1])
    channels = {len(b) for b in (low, high) if isinstance(b, tuple)}
    if len(channels) > 1:
        raise ValueError(f"pixel_bounds low and high have different channel counts, got {bounds}")
    lows = np.broadcast_to(np.asarray(low, dtype=float), (channels.pop() if channels else 1,))
    highs = np.broadcast_to(np.asarray(high, dtype=float), lows.shape)
    if not np.all(lows < highs):
        raise ValueError(f"pixel_bounds must satisfy low < high on every channel, got {bounds}")
    return low, high


class PgdConfig(BaseModel):
    """Projected gradient descent settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    norm: Norm = Field(..., description="Threat-model norm")
    epsilons: List[float] = Field(..., description="Attack strengths, ascending")
    steps: int = Field(..., ge=1, description="Number of iterations")
    rel_step: float = Field(..., gt=0.0, description="Step size relative to epsilon")
    random_start: bool = Field(False, description="Start from a random point of the ball")
    seed: int = Field(0, description="Seed of the random start")
    pixel_bounds: PixelBounds = Field(DEFAULT_PIXEL_BOUNDS, description="Valid input range, scalar or per channel")

    @field_validator("epsilons")
    @classmethod
    def _validate_epsilons(cls, value: List[float]) -> List[float]:
        return _check_epsilons(value)

    @field_validator("pixel_bounds")
    @classmethod
    def _validate_bounds(cls, value: PixelBounds) -> PixelBounds:
        return _check_bounds(value)

    @classmethod
    def for_norm(cls, norm: Norm, **overrides: Any) -> "PgdConfig":
        """Defaults for the l2 (50 steps, 0.025) or linf (40 steps, 0.01/0.3) attack."""
        norm = Norm(norm)
        if norm == Norm.L2:
            base = dict(norm=norm, epsilons=list(EPSILON_GRIDS[AttackTag.PGD_L2]), steps=50, rel_step=0.025)
        else:
            base = dict(norm=norm, epsilons=list(EPSILON_GRIDS[AttackTag.PGD_LINF]), steps=40, rel_step=0.01 / 0.3)
        base.update(overrides)
        return cls(**base)

    @property
    def attack_tag(self) -> AttackTag:
        return AttackTag.PGD_L2 if self.norm == Norm.L2 else AttackTag.PGD_LINF


class CwConfig(BaseModel):
    """Carlini-Wagner style L2 attack settings.

    Descends J(x') = dist_weight * dist(x, x') - loss_weight * CE(f(x'), y).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilons: List[float] = Field(default_factory=lambda: list(EPSILON_GRIDS[AttackTag.CW_L2]))
    rel_step: float = Field(0.01, gt=0.0, description="Step size relative to epsilon")
    iterations: int = Field(100, ge=1, description="Gradient steps on J")
    dist_weight: float = Field(1.0, gt=0.0, description="Weight of the distance term")
    loss_weight: float = Field(1.0, ge=0.0, description="Weight of the classification loss term")
    distance: Literal["l2_squared", "l2"] = Field("l2_squared", description="Distance term of J")
    init_noise: float = Field(0.0, ge=0.0, description="Std of a Gaussian starting offset")
    seed: int = Field(0, description="Seed of the starting offset")
    pixel_bounds: PixelBounds = Field(DEFAULT_PIXEL_BOUNDS, description="Valid input range, scalar or per channel")

    @field_validator("epsilons")
    @classmethod
    def _validate_epsilons(cls, value: List[float]) -> List[float]:
        return _check_epsilons(value)

    @field_validator("pixel_bounds")
    @classmethod
    def _validate_bounds(cls, value: PixelBounds) -> PixelBounds:
        return _check_bounds(value)

    @property
    def attack_tag(self) -> AttackTag:
        return AttackTag.CW_L2


@dataclass
class AdversarialResult:
    """Adversarial batch and per-item diagnostics."""
    x_adv: Any
    achieved_norm: np.ndarray
    fooled: np.ndarray
    epsilon: float
    attack_tag: str
    clean_correct: Optional[np.ndarray] = None

    @property
    def accuracy(self) -> float:
        """Top-1 accuracy on the adversarial batch."""
        if len(self.fooled) == 0:
            return 0.0
        return float(1.0 - np.mean(self.fooled))

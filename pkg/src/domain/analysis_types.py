"""Model-grid and correlation-analysis types."""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .evaluation_types import PccMatrix


class GridKey(NamedTuple):
    """One trained model of the grid."""
    arch_name: str
    subject_id: str
    seed: int


@dataclass(frozen=True, eq=False)
class GridEntry:
    """Avg_Gain per attack and the PCC matrix of one model."""
    avg_gain: Dict[str, float]
    pcc: PccMatrix


@dataclass(eq=False)
class ModelGridResult:
    """Results of the (arch x subject x seed) grid."""
    entries: Dict[GridKey, GridEntry] = field(default_factory=dict)

    def add(self, key: GridKey, entry: GridEntry) -> None:
        """Insert one model, rejecting duplicates and foreign axes."""
        key = GridKey(*key)
        if key in self.entries:
            raise ValidationError(f"Duplicate grid key {tuple(key)}", target="grid")
        if self.entries:
            first = next(iter(self.entries.values())).pcc
            if entry.pcc.values.shape != first.values.shape or not np.allclose(entry.pcc.times, first.times):
                raise ValidationError("All PCC matrices of a grid must share channels and time axis", target="grid")
        self.entries[key] = entry

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Tuple[GridKey, GridEntry]]:
        return iter(sorted(self.entries.items()))

    @property
    def archs(self) -> List[str]:
        """Architecture names in first-seen order."""
        seen: List[str] = []
        for key in self.entries:
            if key.arch_name not in seen:
                seen.append(key.arch_name)
        return seen

    @property
    def subjects(self) -> List[str]:
        return sorted({key.subject_id for key in self.entries})

    @property
    def seeds(self) -> List[int]:
        return sorted({key.seed for key in self.entries})

    @property
    def times(self) -> np.ndarray:
        if not self.entries:
            return np.zeros(0)
        return next(iter(self.entries.values())).pcc.times

    @property
    def channel_names(self) -> List[str]:
        if not self.entries:
            return []
        return list(next(iter(self.entries.values())).pcc.channel_names)

    @property
    def attack_tags(self) -> List[str]:
        tags: List[str] = []
        for entry in self.entries.values():
            for tag in entry.avg_gain:
                if tag not in tags:
                    tags.append(tag)
        return tags


@dataclass(frozen=True)
class WindowPoint:
    """Correlation at one window position."""
    t_center: float
    t_lo: float
    t_hi: float
    r: float
    r_squared: float
    p_value: float
    n_points: int = 0


@dataclass
class WindowCorrelationTrace:
    """Sliding-window correlation of Avg_Gain with Avg_PCC."""
    attack_tag: str
    window_len_s: float
    step_s: float
    points: List[WindowPoint] = field(default_factory=list)
    aggregate: bool = True
    nan_excluded: int = 0

    def peak(self) -> Optional[WindowPoint]:
        """Position of maximal r (NaN positions ignored)."""
        finite = [p for p in self.points if np.isfinite(p.r)]
        if not finite:
            return None
        return max(finite, key=lambda p: p.r)

    def to_rows(self) -> List[Dict[str, object]]:
        return [
            {
                "attack": self.attack_tag,
                "t_center": p.t_center,
                "t_lo": p.t_lo,
                "t_hi": p.t_hi,
                "r": p.r,
                "r_squared": p.r_squared,
                "p_value": p.p_value,
                "n": p.n_points,
            }
            for p in self.points
        ]


@dataclass(frozen=True)
class WindowScore:
    """R-squared of one candidate window."""
    window: Tuple[float, float]
    r: float
    r_squared: float
    p_value: float


@dataclass
class ChannelCorrelationReport:
    """Per (attack, channel) correlation between Avg_Gain and channel-mean PCC."""
    critical_window: Tuple[float, float]
    channel_names: List[str]
    r: Dict[str, np.ndarray] = field(default_factory=dict)
    p_values: Dict[str, np.ndarray] = field(default_factory=dict)
    aggregate: bool = True

    def ranking(self, attack_tag: str) -> List[str]:
        """Channels by descending r."""
        values = np.nan_to_num(self.r[attack_tag], nan=-np.inf)
        order = np.argsort(-values, kind="stable")
        return [self.channel_names[i] for i in order]

    def to_rows(self) -> List[Dict[str, object]]:
        rows = []
        for tag, values in self.r.items():
            for i, name in enumerate(self.channel_names):
                rows.append({
                    "attack": tag,
                    "channel": name,
                    "r": float(values[i]),
                    "p_value": float(self.p_values[tag][i]) if tag in self.p_values else float("nan"),
                })
        return rows

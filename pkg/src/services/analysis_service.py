"""Correlating robustness gains with EEG-prediction accuracy across the model grid."""

import warnings
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from ..domain.analysis_types import (
    ChannelCorrelationReport,
    ModelGridResult,
    WindowCorrelationTrace,
    WindowPoint,
    WindowScore,
)
from ..domain.errors import InsufficientDataError, ValidationError
from ..domain.evaluation_types import PccMatrix
from ..infrastructure.logger import get_logger
from .evaluation_service import columnwise_pcc, avg_pcc_window, channel_window_means

MIN_POINTS = 3

NAN_TRIPLE = (float("nan"), float("nan"), float("nan"))


def pearson_with_p(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """Pearson r, r squared and the two-sided t-test p-value (n - 2 dof)."""
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"x and y differ in length ({a.size} vs {b.size})", target="series")
    if a.size < MIN_POINTS:
        raise InsufficientDataError(
            f"Correlation needs at least {MIN_POINTS} points, got {a.size}", available=a.size, required=MIN_POINTS
        )
    r = float(columnwise_pcc(a[:, None], b[:, None])[0])
    if np.isnan(r):
        return NAN_TRIPLE
    dof = a.size - 2
    if abs(r) >= 1.0:
        return r, r * r, 0.0
    t_stat = r * np.sqrt(dof / (1.0 - r * r))
    return r, r * r, float(2.0 * stats.t.sf(abs(t_stat), dof))


def bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> np.ndarray:
    """Significance mask p_i < alpha / n; NaN is never significant."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}", target="alpha")
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    with np.errstate(invalid="ignore"):
        return p < alpha / p.size


class GridAnalyzer:
    """Window and channel analyses over a ModelGridResult."""

    def __init__(self, aggregate: bool = True):
        self.aggregate = aggregate
        self._logger = get_logger(self.__class__.__name__)

    def _points(
        self, grid: ModelGridResult, attack_tag: str, feature: Callable[[PccMatrix], np.ndarray]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Gains [n] and features [n x k], one row per arch (aggregate) or per model."""
        if len(grid) == 0:
            raise ValidationError("Model grid is empty", target="grid")
        if attack_tag not in grid.attack_tags:
            raise ValidationError(f"Grid has no Avg_Gain for attack '{attack_tag}'", target="attack_tag")
        gains, features, archs = [], [], []
        for key, entry in grid:
            if attack_tag not in entry.avg_gain:
                raise ValidationError(f"{tuple(key)} lacks Avg_Gain for '{attack_tag}'", target="grid")
            gains.append(entry.avg_gain[attack_tag])
            features.append(np.atleast_1d(feature(entry.pcc)))
            archs.append(key.arch_name)
        gain_arr, feature_arr = np.asarray(gains, dtype=np.float64), np.vstack(features)
        if self.aggregate:
            order = grid.archs
            index = np.asarray([order.index(a) for a in archs])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", category=RuntimeWarning)
                gain_arr = np.asarray([gain_arr[index == i].mean() for i in range(len(order))])
                feature_arr = np.vstack([np.nanmean(feature_arr[index == i], axis=0) for i in range(len(order))])
        if gain_arr.size < MIN_POINTS:
            raise InsufficientDataError(
                f"Correlation needs at least {MIN_POINTS} {'architectures' if self.aggregate else 'models'}, "
                f"got {gain_arr.size}",
                available=int(gain_arr.size),
                required=MIN_POINTS,
            )
        return gain_arr, feature_arr

    def _correlate(self, gains: np.ndarray, values: np.ndarray) -> Tuple[Tuple[float, float, float], int, int]:
        keep = np.isfinite(values)
        excluded = int((~keep).sum())
        if keep.sum() < MIN_POINTS:
            return NAN_TRIPLE, excluded, int(keep.sum())
        return pearson_with_p(gains[keep], values[keep]), excluded, int(keep.sum())

    def sliding_window_correlation(
        self, grid: ModelGridResult, attack_tag: str, window_len_s: float, step_s: float
    ) -> WindowCorrelationTrace:
        """r between Avg_Gain and Avg_PCC at every window position along the time axis."""
        times = grid.times
        if len(times) < 2:
            raise ValidationError("PCC time axis needs at least two points", target="times")
        dt = float(times[1] - times[0])
        width = int(round(window_len_s / dt))
        stride = int(round(step_s / dt))
        if width < 1 or width > len(times):
            raise ValidationError(f"Window of {window_len_s} s does not fit the time axis", target="window_len_s")
        if stride < 1 or abs(stride * dt - step_s) > 1e-6 * dt:
            raise ValidationError(f"step_s {step_s} must be a positive multiple of {dt:g} s", target="step_s")
        starts = list(range(0, len(times) - width + 1, stride))

        def feature(m: PccMatrix) -> np.ndarray:
            return np.asarray([avg_pcc_window(m, (times[s], times[s + width - 1])) for s in starts])

        gains, features = self._points(grid, attack_tag, feature)
        trace = WindowCorrelationTrace(
            attack_tag=attack_tag, window_len_s=window_len_s, step_s=step_s, aggregate=self.aggregate
        )
        for column, start in enumerate(starts):
            (r, r2, p), excluded, n = self._correlate(gains, features[:, column])
            trace.nan_excluded += excluded
            lo, hi = float(times[start]), float(times[start + width - 1])
            trace.points.append(
                WindowPoint(t_center=(lo + hi) / 2.0, t_lo=lo, t_hi=hi, r=r, r_squared=r2, p_value=p, n_points=n)
            )
        if trace.nan_excluded:
            self._logger.info(f"{attack_tag}: {trace.nan_excluded} NaN window means excluded")
        return trace

    def optimize_window(
        self, grid: ModelGridResult, attack_tag: str, candidate_windows: Sequence[Tuple[float, float]]
    ) -> Tuple[WindowScore, List[WindowScore]]:
        """Candidate with the largest r squared; ties go to the shorter window."""
        if not candidate_windows:
            raise ValidationError("At least one candidate window is required", target="candidate_windows")
        windows = [(float(lo), float(hi)) for lo, hi in candidate_windows]
        gains, features = self._points(
            grid, attack_tag, lambda m: np.asarray([avg_pcc_window(m, w) for w in windows])
        )
        table = []
        for column, window in enumerate(windows):
            (r, r2, p), _, _ = self._correlate(gains, features[:, column])
            table.append(WindowScore(window=window, r=r, r_squared=r2, p_value=p))
        ranked = sorted(
            range(len(table)),
            key=lambda i: (-np.nan_to_num(table[i].r_squared, nan=-np.inf), windows[i][1] - windows[i][0], i),
        )
        return table[ranked[0]], table

    def per_channel_correlation(
        self, grid: ModelGridResult, attack_tags: Sequence[str], critical_window: Tuple[float, float]
    ) -> ChannelCorrelationReport:
        """Per (attack, channel) r between Avg_Gain and the channel's mean PCC in the critical window."""
        report = ChannelCorrelationReport(
            critical_window=(float(critical_window[0]), float(critical_window[1])),
            channel_names=grid.channel_names,
            aggregate=self.aggregate,
        )
        for tag in attack_tags:
            gains, features = self._points(grid, tag, lambda m: channel_window_means(m, critical_window))
            r = np.full(features.shape[1], np.nan)
            p = np.full(features.shape[1], np.nan)
            for channel in range(features.shape[1]):
                (r[channel], _, p[channel]), _, _ = self._correlate(gains, features[:, channel])
            report.r[tag], report.p_values[tag] = r, p
        return report


def sliding_window_correlation(
    grid: ModelGridResult, attack_tag: str, window_len_s: float = 0.06, step_s: float = 0.01, aggregate: bool = True
) -> WindowCorrelationTrace:
    return GridAnalyzer(aggregate).sliding_window_correlation(grid, attack_tag, window_len_s, step_s)


def optimize_window(
    grid: ModelGridResult,
    attack_tag: str,
    candidate_windows: Sequence[Tuple[float, float]],
    aggregate: bool = True,
) -> Tuple[WindowScore, List[WindowScore]]:
    return GridAnalyzer(aggregate).optimize_window(grid, attack_tag, candidate_windows)


def per_channel_correlation(
    grid: ModelGridResult,
    attack_tag: str,
    critical_window: Tuple[float, float],
    aggregate: bool = True,
) -> ChannelCorrelationReport:
    return GridAnalyzer(aggregate).per_channel_correlation(grid, [attack_tag], critical_window)


def channel_reports(
    grid: ModelGridResult,
    critical_window: Tuple[float, float],
    aggregate: bool = True,
) -> ChannelCorrelationReport:
    """per_channel_correlation for every attack of the grid in one report."""
    return GridAnalyzer(aggregate).per_channel_correlation(grid, grid.attack_tags, critical_window)


def significant_points(trace: WindowCorrelationTrace, alpha: float = 0.05) -> Dict[float, bool]:
    """Bonferroni significance per window centre."""
    mask = bonferroni([p.p_value for p in trace.points], alpha)
    return {p.t_center: bool(m) for p, m in zip(trace.points, mask)}

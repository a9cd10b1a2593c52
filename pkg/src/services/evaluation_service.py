"""Robustness curves and gains, EEG-prediction PCC, and split-half noise ceilings."""

import warnings
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from ..domain.attack_types import AVG_GAIN_SUBSETS, AttackTag, CwConfig, PgdConfig
from ..domain.eeg_types import EegEpochSet
from ..domain.errors import ConfigurationError, GridMismatchError, ShapeMismatchError, ValidationError
from ..domain.evaluation_types import GainRecord, NoiseCeiling, PccMatrix, RobustnessCurve
from ..infrastructure.logger import get_logger
from .attack_service import run_attack
from .model_zoo.dual_task_model import eval_mode, logits_of


DEFAULT_AVG_GAIN_WHITELIST: Dict[str, Tuple[float, ...]] = {AttackTag.PGD_LINF.value: (1e-1,)}
CONSTANT_TOLERANCE = 1e-12
CONTROL_COMPARISON_COLUMNS = ["arch", "control", "attack", "avg_gain", "avg_pcc", "n", "gain_vs_real", "pcc_vs_real"]

logger = get_logger("Evaluation")


def _as_tensor(values: Union[np.ndarray, torch.Tensor], dtype: torch.dtype) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(dtype)
    return torch.as_tensor(np.asarray(values), dtype=dtype)


@torch.no_grad()
def top1_accuracy(model: nn.Module, images, labels, batch_size: int = 256) -> float:
    """Fraction of items whose argmax logit equals the label."""
    x = _as_tensor(images, torch.float32)
    y = _as_tensor(labels, torch.long)
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatchError(
            f"{x.shape[0]} images but {y.shape[0]} labels", expected=x.shape[0], actual=y.shape[0]
        )
    if x.shape[0] == 0:
        return 0.0
    correct = 0
    with eval_mode(model):
        for start in range(0, x.shape[0], batch_size):
            logits = logits_of(model(x[start:start + batch_size]))
            correct += int((logits.argmax(dim=1) == y[start:start + batch_size]).sum())
    return correct / x.shape[0]


def robustness_curve(
    model: nn.Module,
    images,
    labels,
    cfg: Union[PgdConfig, CwConfig],
    include_zero: bool = False,
    batch_size: int = 64,
    model_id: str = "",
) -> RobustnessCurve:
    """Top-1 accuracy under the attack at every grid epsilon."""
    x = _as_tensor(images, torch.float32)
    y = _as_tensor(labels, torch.long)
    epsilons = ([0.0] if include_zero else []) + list(cfg.epsilons)
    points = []
    for eps in epsilons:
        fooled = []
        for start in range(0, x.shape[0], batch_size):
            result = run_attack(model, x[start:start + batch_size], y[start:start + batch_size], cfg, eps)
            fooled.append(result.fooled)
        accuracy = float(1.0 - np.concatenate(fooled).mean()) if fooled else 0.0
        points.append((eps, accuracy))
        logger.debug(f"{model_id or 'model'} {cfg.attack_tag.value} eps={eps:g}: top1 {accuracy:.4f}")
    return RobustnessCurve(attack_tag=cfg.attack_tag.value, points=tuple(points), model_id=model_id, n_images=int(x.shape[0]))


def avg_gain_subset(attack_tag: Union[str, AttackTag]) -> List[float]:
    """High-epsilon subset averaged into Avg_Gain."""
    try:
        tag = AttackTag(attack_tag)
    except ValueError:
        raise ValidationError(f"Unknown attack '{attack_tag}'", target="attack_tag")
    return list(AVG_GAIN_SUBSETS[tag])


def _close(a: float, b: float) -> bool:
    return bool(np.isclose(a, b, rtol=1e-9, atol=0.0)) or a == b


def robustness_gain(
    dtl: RobustnessCurve,
    base: RobustnessCurve,
    arch_name: str = "",
    subject_id: str = "",
    seed: int = 0,
    whitelist: Optional[Mapping[str, Sequence[float]]] = None,
    control: str = "real",
) -> GainRecord:
    """Pointwise accuracy difference and its mean over the averaging subset."""
    if dtl.attack_tag != base.attack_tag:
        raise GridMismatchError(f"Cannot compare {dtl.attack_tag} against {base.attack_tag}")
    if len(dtl.epsilons) != len(base.epsilons) or not all(
        _close(a, b) for a, b in zip(dtl.epsilons, base.epsilons)
    ):
        raise GridMismatchError(f"{dtl.attack_tag}: epsilon grids of model and baseline differ")
    curve = tuple((e, a - b) for (e, a), (_, b) in zip(dtl.points, base.points))

    allowed = (DEFAULT_AVG_GAIN_WHITELIST if whitelist is None else whitelist).get(dtl.attack_tag, ())
    selected = []
    for eps in avg_gain_subset(dtl.attack_tag):
        match = [g for e, g in curve if _close(e, eps)]
        if match:
            selected.append(match[0])
        elif not any(_close(eps, w) for w in allowed):
            raise ConfigurationError(
                f"{dtl.attack_tag}: averaging epsilon {eps:g} is missing from the curve and not whitelisted",
                key_path=f"evaluation.avg_gain_whitelist.{dtl.attack_tag}",
            )
    if not selected:
        raise ConfigurationError(
            f"{dtl.attack_tag}: no averaging epsilon is present on the curve",
            key_path=f"attacks.{dtl.attack_tag}.epsilons",
        )
    return GainRecord(
        arch_name=arch_name,
        subject_id=subject_id,
        seed=seed,
        attack_tag=dtl.attack_tag,
        gain_curve=curve,
        avg_gain=float(np.mean(selected)),
        control=control,
    )


def pcc(pred_series, true_series) -> float:
    """Pearson correlation; NaN when either series is constant."""
    a = np.asarray(pred_series, dtype=np.float64).ravel()
    b = np.asarray(true_series, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeMismatchError("pcc needs equal-length series", expected=a.shape, actual=b.shape)
    if a.size < 2:
        raise ValidationError("pcc needs at least two points", target="series")
    return float(columnwise_pcc(a[:, None], b[:, None])[0])


def columnwise_pcc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Correlation along axis 0 for every remaining position."""
    da = a - a.mean(axis=0)
    db = b - b.mean(axis=0)
    sa = np.sqrt((da * da).sum(axis=0))
    sb = np.sqrt((db * db).sum(axis=0))
    scale_a = CONSTANT_TOLERANCE * np.maximum(1.0, np.abs(a).max(axis=0)) * np.sqrt(a.shape[0])
    scale_b = CONSTANT_TOLERANCE * np.maximum(1.0, np.abs(b).max(axis=0)) * np.sqrt(b.shape[0])
    constant = (sa <= scale_a) | (sb <= scale_b)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (da * db).sum(axis=0) / (sa * sb)
    return np.where(constant, np.nan, np.clip(r, -1.0, 1.0))


def pcc_matrix(
    pred: np.ndarray,
    actual: np.ndarray,
    channel_names: Optional[Sequence[str]] = None,
    times: Optional[np.ndarray] = None,
) -> PccMatrix:
    """Correlation across images for every (channel, timepoint)."""
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape or pred.ndim != 3:
        raise ShapeMismatchError(
            f"pcc_matrix needs equal [images x C x T] arrays, got {pred.shape} and {actual.shape}",
            expected=actual.shape,
            actual=pred.shape,
        )
    if pred.shape[0] < 2:
        raise ValidationError("pcc_matrix needs at least two images", target="images")
    channels = list(channel_names) if channel_names is not None else [f"ch{i}" for i in range(pred.shape[1])]
    axis = np.asarray(times, dtype=np.float64) if times is not None else np.arange(pred.shape[2], dtype=np.float64)
    values = columnwise_pcc(pred, actual)
    excluded = int(np.isnan(values).sum())
    if excluded:
        logger.debug(f"pcc_matrix: {excluded} constant series flagged as NaN")
    return PccMatrix(values=values, channel_names=channels, times=axis)


def window_mask(times: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    """Timepoints inside the closed interval [t_lo, t_hi]."""
    lo, hi = float(window[0]), float(window[1])
    if not lo <= hi:
        raise ValidationError(f"Window must satisfy t_lo <= t_hi, got {window}", target="window")
    times = np.asarray(times, dtype=np.float64)
    step = float(np.min(np.diff(times))) if len(times) > 1 else 1.0
    tol = 1e-6 * step
    if len(times) == 0 or lo < times[0] - tol or hi > times[-1] + tol:
        raise ValidationError(f"Window {window} is outside the time axis", target="window")
    mask = (times >= lo - tol) & (times <= hi + tol)
    if not mask.any():
        raise ValidationError(f"Window {window} holds no timepoint", target="window")
    return mask


def _nanmean(values: np.ndarray, axis=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        return np.nanmean(values, axis=axis)


def avg_pcc_window(m: PccMatrix, window: Tuple[float, float]) -> float:
    """Mean PCC over all channels and the timepoints inside the window (NaN entries excluded)."""
    mask = window_mask(m.times, window)
    return float(_nanmean(m.values[:, mask]))


def channel_window_means(m: PccMatrix, window: Tuple[float, float]) -> np.ndarray:
    """Per-channel mean PCC inside the window."""
    mask = window_mask(m.times, window)
    return np.asarray(_nanmean(m.values[:, mask], axis=1), dtype=np.float64)


def noise_ceiling(
    trialwise: EegEpochSet,
    pred: Optional[np.ndarray] = None,
    window: Optional[Tuple[float, float]] = None,
    n_splits: int = 100,
    seed: int = 0,
) -> NoiseCeiling:
    """Split-half lower and upper ceilings per channel, averaged over seeded splits.

    lower: corr(half A average, half B average); upper: corr(half A average, all-trials average).
    Correlations run across images at each (channel, timepoint) and are averaged over the window.
    """
    if trialwise.num_trials < 2:
        raise ValidationError("Noise ceilings need at least two trials per image", target="trials")
    if trialwise.num_images < 2:
        raise ValidationError("Noise ceilings need at least two images", target="images")
    shape = (trialwise.num_images, trialwise.num_channels, trialwise.num_timepoints)
    if pred is not None and tuple(np.shape(pred)) != shape:
        raise ShapeMismatchError(f"Predictions {np.shape(pred)} do not match EEG {shape}", expected=shape, actual=np.shape(pred))
    if n_splits < 1:
        raise ValidationError("n_splits must be >= 1", target="n_splits")

    mask = window_mask(trialwise.times, window) if window is not None else np.ones(trialwise.num_timepoints, bool)
    data = trialwise.data[..., mask]
    everything = _nanmean(data, axis=1)
    rng = np.random.default_rng(seed)
    half = trialwise.num_trials // 2
    lower = np.zeros(trialwise.num_channels)
    upper = np.zeros(trialwise.num_channels)
    for _ in range(n_splits):
        order = rng.permutation(trialwise.num_trials)
        first = _nanmean(data[:, order[:half]], axis=1)
        second = _nanmean(data[:, order[half:]], axis=1)
        usable = ~(np.isnan(first).any(axis=(1, 2)) | np.isnan(second).any(axis=(1, 2)))
        lower += _nanmean(columnwise_pcc(first[usable], second[usable]), axis=1)
        upper += _nanmean(columnwise_pcc(first[usable], everything[usable]), axis=1)
    window_used = window if window is not None else (float(trialwise.times[0]), float(trialwise.times[-1]))
    return NoiseCeiling(
        channel_names=list(trialwise.channel_names),
        lower=lower / n_splits,
        upper=upper / n_splits,
        n_splits=n_splits,
        window=(float(window_used[0]), float(window_used[1])),
    )


def gain_band(records: Sequence[GainRecord]) -> List[Dict[str, object]]:
    """Mean gain and standard error per (arch, control, attack, epsilon) over the seeds and subjects of a series."""
    by_point: Dict[Tuple[str, str, str, float], List[float]] = {}
    for record in records:
        for eps, gain in record.gain_curve:
            key = (record.arch_name, record.control, record.attack_tag, float(eps))
            by_point.setdefault(key, []).append(float(gain))
    rows = []
    for (arch, control, tag, eps), gains in sorted(by_point.items()):
        values = np.asarray(gains)
        se = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else float("nan")
        rows.append({
            "arch": arch, "control": control, "attack": tag, "epsilon": eps,
            "mean": float(values.mean()), "se": se, "n": len(values),
        })
    return rows


def control_comparison(cell_rows: Sequence[Mapping[str, object]]) -> List[Dict[str, object]]:
    """Mean Avg_Gain and critical-window PCC per (arch, control, attack), with the difference to real targets.

    Each input row describes one trained cell and attack: arch, control, attack, avg_gain, avg_pcc.
    """
    groups: Dict[Tuple[str, str, str], List[Tuple[float, float]]] = {}
    for row in cell_rows:
        key = (str(row["arch"]), str(row["control"]), str(row["attack"]))
        groups.setdefault(key, []).append((float(row["avg_gain"]), float(row["avg_pcc"])))  # type: ignore[arg-type]
    means = {
        key: (float(np.mean([g for g, _ in values])), float(_nanmean(np.asarray([p for _, p in values]))), len(values))
        for key, values in groups.items()
    }
    rows = []
    for (arch, control, tag), (gain, pcc_mean, n) in sorted(means.items()):
        real = means.get((arch, "real", tag))
        rows.append({
            "arch": arch,
            "control": control,
            "attack": tag,
            "avg_gain": gain,
            "avg_pcc": pcc_mean,
            "n": n,
            "gain_vs_real": gain - real[0] if real else float("nan"),
            "pcc_vs_real": pcc_mean - real[1] if real else float("nan"),
        })
    return rows

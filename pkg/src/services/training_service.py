"""Dual-task training with uncertainty-weighted losses, and classification-only baselines."""

import hashlib
import math
import time
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..domain.errors import NonFiniteError, ShapeMismatchError, ValidationError
from ..domain.eeg_types import PairedDataset
from ..domain.model_types import ArchitectureSpec, BackboneSpec
from ..domain.training_types import EpochRecord, TrainConfig, TrainReport, UncertaintyParams
from ..infrastructure.logger import get_logger
from ..infrastructure.storage.result_store import write_csv
from ..infrastructure.storage.tensor_container import atomic_write_json
from .data_pipeline import apply_control
from .evaluation_service import pcc_matrix
from .model_zoo.checkpoints import save_checkpoint
from .model_zoo.dual_task_model import build_architecture, build_baseline, eval_mode, logits_of

Number = Union[float, torch.Tensor]

TRAIN_LOG_FILE = "train_log.csv"
TRAIN_REPORT_FILE = "train_report.json"


def combined_loss(l1: Number, l2: Number, u: Union[UncertaintyParams, "UncertaintyWeights"]) -> Number:
    """l1 / (2 exp(2 s1)) + l2 / (2 exp(2 s2)) + s1 + s2."""
    s1, s2 = u.s1, u.s2
    if any(isinstance(v, torch.Tensor) for v in (l1, l2, s1, s2)):
        s1_t, s2_t = torch.as_tensor(s1), torch.as_tensor(s2)
        return l1 * 0.5 * torch.exp(-2.0 * s1_t) + l2 * 0.5 * torch.exp(-2.0 * s2_t) + s1_t + s2_t
    return l1 * 0.5 * math.exp(-2.0 * s1) + l2 * 0.5 * math.exp(-2.0 * s2) + s1 + s2


def eeg_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            f"EEG prediction {tuple(pred.shape)} does not match target {tuple(target.shape)}",
            expected=tuple(target.shape),
            actual=tuple(pred.shape),
        )
    return F.mse_loss(pred, target, reduction="mean")


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Batch-averaged cross-entropy."""
    num_classes = logits.shape[-1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= num_classes):
        raise ValidationError(f"Labels must lie in [0, {num_classes})", target="labels")
    return F.cross_entropy(logits, labels.long(), reduction="mean")


class UncertaintyWeights(nn.Module):
    """Trainable log-scales s1 (classification) and s2 (EEG)."""

    def __init__(self, params: Optional[UncertaintyParams] = None):
        super().__init__()
        params = params or UncertaintyParams()
        self.s1 = nn.Parameter(torch.tensor(float(params.s1)))
        self.s2 = nn.Parameter(torch.tensor(float(params.s2)))

    def params(self) -> UncertaintyParams:
        return UncertaintyParams(s1=float(self.s1.detach()), s2=float(self.s2.detach()))


class _UpdateSignature:
    """Hash of the update-sequence structure: batch sizes and loss terms, never values."""

    def __init__(self) -> None:
        self._digest = hashlib.sha256()

    def step(self, epoch: int, batch: int, size: int, terms: Tuple[str, ...], groups: int) -> None:
        self._digest.update(f"{epoch}:{batch}:{size}:{','.join(terms)}:{groups};".encode("utf-8"))

    def hexdigest(self) -> str:
        return self._digest.hexdigest()


def _batches(n: int, batch_size: int, generator: torch.Generator) -> Iterator[torch.Tensor]:
    order = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _tensors(data: PairedDataset, device: torch.device) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    return (
        torch.as_tensor(data.images, dtype=torch.float32, device=device),
        torch.as_tensor(data.eeg_targets, dtype=torch.float32, device=device),
        torch.as_tensor(np.asarray(data.category_ids), dtype=torch.long, device=device),
    )


def _check_finite(value: torch.Tensor, what: str, epoch: int, batch: int) -> None:
    if not torch.isfinite(value).all():
        raise NonFiniteError(f"Non-finite {what} at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch)


class Trainer:
    """Runs the optimization loop for dual-task and baseline models."""

    def __init__(self, eval_batch_size: int = 256):
        self._logger = get_logger(self.__class__.__name__)
        self.eval_batch_size = eval_batch_size

    def train(
        self,
        spec: ArchitectureSpec,
        data: PairedDataset,
        cfg: TrainConfig,
        val: Optional[PairedDataset] = None,
        output_dir: Optional[Path] = None,
        manifest_extra: Optional[dict] = None,
        control_applied: bool = False,
    ) -> TrainReport:
        """Jointly optimize model weights and (s1, s2) on the combined loss.

        For a control config the targets are replaced by make_control output, unless
        control_applied says data already carries that control (a stored variant).
        """
        self._check_data(data, spec.backbone.image_size)
        expected = (spec.head.channels, spec.head.timepoints)
        if data.target_shape != expected:
            raise ShapeMismatchError(
                f"{spec.name} predicts {expected} but targets are {data.target_shape}",
                expected=expected,
                actual=data.target_shape,
            )
        if not cfg.control.is_real and not control_applied:
            data = apply_control(data, cfg.control)
            self._logger.info(f"{spec.name}: targets replaced by the {cfg.control_kind.value} control")

        model = build_architecture(spec, cfg.head_seed)
        weights = UncertaintyWeights()
        report = self._fit(spec.name, model, weights, data, cfg, val, dual=True)
        report.uncertainty = weights.params()
        if output_dir is not None:
            self._persist(
                report, model, output_dir, cfg,
                extra={"arch": spec.name, "control": cfg.control_kind.value, **(manifest_extra or {})},
                uncertainty=report.uncertainty,
            )
        return report

    def train_baseline(
        self,
        backbone: BackboneSpec,
        data: PairedDataset,
        cfg: TrainConfig,
        val: Optional[PairedDataset] = None,
        output_dir: Optional[Path] = None,
        manifest_extra: Optional[dict] = None,
    ) -> TrainReport:
        """Classification-only training of the backbone."""
        self._check_data(data, backbone.image_size)
        model = build_baseline(backbone)
        report = self._fit("baseline", model, None, data, cfg, val, dual=False)
        if output_dir is not None:
            self._persist(
                report, model, output_dir, cfg,
                extra={"arch": "baseline", **(manifest_extra or {})},
                uncertainty=None,
            )
        return report

    def _check_data(self, data: PairedDataset, image_size: int) -> None:
        if len(data) == 0:
            raise ValidationError("Training data is empty", target="data")
        if data.image_size != image_size:
            raise ShapeMismatchError(
                f"Images are {data.image_size}px but the backbone expects {image_size}px",
                expected=image_size,
                actual=data.image_size,
            )

    def _fit(
        self,
        name: str,
        model: nn.Module,
        weights: Optional[UncertaintyWeights],
        data: PairedDataset,
        cfg: TrainConfig,
        val: Optional[PairedDataset],
        dual: bool,
    ) -> TrainReport:
        device = torch.device(cfg.device)
        model.to(device)
        params: List[nn.Parameter] = list(model.parameters())
        if weights is not None:
            weights.to(device)
            params += list(weights.parameters())
        optimizer = torch.optim.Adam(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        images, targets, labels = _tensors(data, device)
        terms = ("classification", "eeg") if dual else ("classification",)
        signature = _UpdateSignature()
        report = TrainReport(arch_name=name, config=cfg)
        started = time.perf_counter()

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.effective_data_seed)
            generator = torch.Generator().manual_seed(cfg.effective_data_seed)
            for epoch in range(cfg.epochs):
                model.train()
                sums = np.zeros(3)
                for batch, index in enumerate(_batches(len(data), cfg.batch_size, generator)):
                    index = index.to(device)
                    output = model(images[index])
                    l1 = classification_loss(logits_of(output), labels[index])
                    if dual:
                        l2 = eeg_loss(output.eeg_pred, targets[index])
                        total = combined_loss(l1, l2, weights)
                    else:
                        l2 = torch.zeros((), device=device)
                        total = l1
                    _check_finite(total, "loss", epoch, batch)
                    optimizer.zero_grad(set_to_none=True)
                    total.backward()
                    for p in params:
                        if p.grad is not None:
                            _check_finite(p.grad, "gradient", epoch, batch)
                    if cfg.grad_clip_norm is not None:
                        nn.utils.clip_grad_norm_(params, cfg.grad_clip_norm)
                    optimizer.step()
                    signature.step(epoch, batch, int(index.numel()), terms, len(optimizer.param_groups))
                    sums += np.array([l1.item(), l2.item(), total.item()]) * index.numel()

                means = sums / len(data)
                current = weights.params() if weights is not None else UncertaintyParams()
                record = EpochRecord(
                    epoch=epoch,
                    classification_loss=float(means[0]),
                    eeg_mse=float(means[1]),
                    total_loss=float(means[2]),
                    delta1=current.delta1,
                    delta2=current.delta2,
                )
                if val is not None and len(val) > 0:
                    record.val_top1, record.val_pcc_mean = self._validate(model, val, device, dual)
                report.epochs.append(record)
                self._logger.info(
                    f"{name} epoch {epoch + 1}/{cfg.epochs}: total {record.total_loss:.5f} "
                    f"ce {record.classification_loss:.5f} mse {record.eeg_mse:.5f} "
                    f"d1 {record.delta1:.4f} d2 {record.delta2:.4f}"
                    + (f" val_top1 {record.val_top1:.4f}" if record.val_top1 is not None else "")
                )

        model.eval()
        report.wall_time_s = time.perf_counter() - started
        report.update_signature = signature.hexdigest()
        report.model = model
        return report

    @torch.no_grad()
    def _validate(
        self, model: nn.Module, val: PairedDataset, device: torch.device, dual: bool
    ) -> Tuple[float, Optional[float]]:
        images, targets, labels = _tensors(val, device)
        correct, preds = 0, []
        with eval_mode(model):
            for start in range(0, len(val), self.eval_batch_size):
                output = model(images[start:start + self.eval_batch_size])
                logits = logits_of(output)
                correct += int((logits.argmax(dim=1) == labels[start:start + self.eval_batch_size]).sum())
                if dual:
                    preds.append(output.eeg_pred.cpu().numpy())
        top1 = correct / len(val)
        if not dual or len(val) < 2:
            return top1, None
        matrix = pcc_matrix(np.concatenate(preds), targets.cpu().numpy(), val.channel_names or None, val.times)
        values = matrix.values[np.isfinite(matrix.values)]
        return top1, float(values.mean()) if values.size else None

    def _persist(
        self,
        report: TrainReport,
        model: nn.Module,
        output_dir: Path,
        cfg: TrainConfig,
        extra: dict,
        uncertainty: Optional[UncertaintyParams],
    ) -> None:
        output_dir = Path(output_dir)
        checkpoint = output_dir / "checkpoints" / "final"
        save_checkpoint(model, checkpoint, uncertainty=uncertainty, head_seed=cfg.head_seed, extra=extra)
        report.checkpoint_path = str(checkpoint)
        write_csv(output_dir / "logs" / TRAIN_LOG_FILE, report.to_rows())
        atomic_write_json(output_dir / "logs" / TRAIN_REPORT_FILE, report.to_manifest())
        self._logger.debug(f"{report.arch_name}: checkpoint written to {checkpoint}")


def train(
    spec: ArchitectureSpec,
    data: PairedDataset,
    cfg: TrainConfig,
    val: Optional[PairedDataset] = None,
    output_dir: Optional[Path] = None,
) -> TrainReport:
    return Trainer().train(spec, data, cfg, val=val, output_dir=output_dir)


def train_baseline(
    backbone: BackboneSpec,
    data: PairedDataset,
    cfg: TrainConfig,
    val: Optional[PairedDataset] = None,
    output_dir: Optional[Path] = None,
) -> TrainReport:
    return Trainer().train_baseline(backbone, data, cfg, val=val, output_dir=output_dir)

"""Experiment orchestration: prepare, train-grid, attack-eval, analyze and report."""

import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from .. import __version__
from ..domain.analysis_types import GridEntry, GridKey, ModelGridResult
from ..domain.attack_types import AttackTag, CwConfig, Norm, PgdConfig
from ..domain.eeg_types import ControlKind, ControlKindName, EegEpochSet, PairedDataset
from ..domain.errors import ConfigurationError, InsufficientDataError, ResourceNotFoundError, ValidationError
from ..domain.evaluation_types import GainRecord, NoiseCeiling, PccMatrix, RobustnessCurve
from ..domain.experiment_types import (
    BASELINE_SUBJECT,
    CellOutcome,
    CellStatus,
    ExperimentConfig,
    ExperimentManifest,
    GridCell,
    GridRunSummary,
    PrepareSummary,
)
from ..domain.model_types import ArchitectureSpec, BackboneSpec
from ..infrastructure.config.config_loader import config_hash
from ..infrastructure.events.run_event_log import RunEventLog
from ..infrastructure.logger import get_logger
from ..infrastructure.plotting.figures import FigureWriter
from ..infrastructure.registry.architecture_registry import ArchitectureRegistry
from ..infrastructure.reporting.report_formatter import FormattingOptions, ReportFormat, ReportFormatter
from ..infrastructure.storage.recording_io import index_images, load_image_tensor, load_raw_recording
from ..infrastructure.storage.result_store import (
    ResultStore,
    load_epoch_set,
    load_paired_dataset,
    read_csv,
    save_epoch_set,
    save_paired_dataset,
    write_csv,
)
from ..infrastructure.storage.tensor_container import (
    atomic_write_json,
    fingerprint_dir,
    fingerprint_tensors,
    read_json,
    read_sidecar,
    read_tensor,
    write_tensor,
)
from .analysis_service import GridAnalyzer, significant_points
from .data_pipeline import (
    apply_control,
    average_trials,
    build_paired_dataset,
    preprocess_recording,
    split_train_val,
    zscore_temporal,
)
from .evaluation_service import (
    CONTROL_COMPARISON_COLUMNS,
    avg_pcc_window,
    channel_window_means,
    control_comparison,
    gain_band,
    noise_ceiling,
    pcc_matrix,
    robustness_curve,
    robustness_gain,
)
from .model_zoo.arch_names import parse_arch_name
from .model_zoo.checkpoints import checkpoint_hash, load_checkpoint
from .model_zoo.dual_task_model import forward_dual
from .synthetic_data import SyntheticSpec, subject_seed, synthesize_epochs
from .training_service import Trainer


FINGERPRINTS_FILE = "fingerprints.json"
CONFIG_FILE = "config.json"
SUMMARY_FILE = "summary.json"
PCC_FILE = "pcc_matrix.nct"
AVG_GAIN_FILE = "avg_gain.json"
FILTER_KEYS = ("arch", "subject", "seed", "control")
REPORT_SUFFIXES = {ReportFormat.MARKDOWN: "md", ReportFormat.JSON: "json", ReportFormat.TEXT: "txt"}


def parse_grid_filter(expr: Optional[str]) -> Dict[str, List[str]]:
    """'arch=CNN_Bk4|RNN_Bk4,seed=0' -> {'arch': [...], 'seed': ['0']}."""
    if not expr:
        return {}
    clauses: Dict[str, List[str]] = {}
    for clause in expr.split(","):
        if "=" not in clause:
            raise ConfigurationError(f"Grid filter clause '{clause}' must look like key=value", key_path="grid_filter")
        key, values = clause.split("=", 1)
        key = key.strip()
        if key not in FILTER_KEYS:
            raise ConfigurationError(
                f"Unknown grid filter key '{key}', expected one of {', '.join(FILTER_KEYS)}", key_path="grid_filter"
            )
        options = [v.strip() for v in values.split("|") if v.strip()]
        if not options:
            raise ConfigurationError(f"Grid filter clause '{clause}' has no value", key_path="grid_filter")
        clauses.setdefault(key, []).extend(options)
    return clauses


def resolve_architecture(name: str) -> ArchitectureSpec:
    """Registered architecture, or the one the name describes."""
    registry = ArchitectureRegistry.get_instance()
    if name in registry.names():
        return registry.get(name)
    return parse_arch_name(name)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class CellJob:
    """Picklable unit of work for a worker process."""
    kind: str
    config: Dict[str, Any]
    result_root: str
    cell: GridCell
    device: str
    force: bool = False


def run_cell_job(job: CellJob) -> CellOutcome:
    """Worker entry point."""
    service = ExperimentService(ExperimentConfig.model_validate(job.config), job.result_root, device=job.device)
    return service.run_job(job.kind, job.cell, job.force)


class ExperimentService:
    """Runs the pipeline stages against one ResultStore."""

    def __init__(
        self,
        config: ExperimentConfig,
        result_root: Union[str, Path],
        device: str = "cpu",
        workers: int = 1,
    ):
        self._logger = get_logger(self.__class__.__name__)
        self.config = config
        self.config_hash = config_hash(config)
        self.store = ResultStore(result_root, self.config_hash)
        self.events = RunEventLog(self.store.events_path)
        self.device = device
        self.workers = workers
        self._trainer = Trainer()

    # Grid

    @property
    def archs(self) -> List[str]:
        names = list(self.config.grid.archs) or ArchitectureRegistry.get_instance().names()
        for name in names:
            resolve_architecture(name)
        return names

    def grid_cells(self, clauses: Optional[Dict[str, List[str]]] = None) -> List[GridCell]:
        """Model cells followed by one baseline per seed, filtered."""
        cells = [
            GridCell(arch=arch, subject=subject, seed=seed, control=control.value)
            for arch in self.archs
            for subject in self.config.data.subjects
            for seed in self.config.grid.seeds
            for control in self.config.grid.controls
        ]
        cells += [self.store.baseline_cell(seed) for seed in self.config.grid.seeds]
        if clauses:
            cells = [cell for cell in cells if cell.matches(clauses)]
        return cells

    def backbone_spec(self, num_categories: int) -> BackboneSpec:
        section = self.config.backbone
        return BackboneSpec(
            kind=section.kind,
            num_classes=section.num_classes or num_categories,
            pretrained_weights=section.pretrained_weights,
            image_size=self.config.data.image_size,
            seed=section.seed,
        )

    def cell_spec(self, arch: str, data: PairedDataset) -> ArchitectureSpec:
        spec = resolve_architecture(arch).with_backbone(self.backbone_spec(data.num_categories))
        return spec.with_target_shape(*data.target_shape)

    def attack_config(self, tag: AttackTag) -> Union[PgdConfig, CwConfig]:
        section = getattr(self.config.attacks, tag.value)
        bounds = self.config.data.pixel_bounds
        if tag == AttackTag.CW_L2:
            return section.to_cw_config(bounds)
        return section.to_pgd_config(Norm.L2 if tag == AttackTag.PGD_L2 else Norm.LINF, bounds)

    def manifest(self, fingerprints: Dict[str, str]) -> ExperimentManifest:
        created = _now()
        if self.store.has_manifest():
            created = self.store.read_manifest().get("created_at", created)
        return ExperimentManifest(
            config_hash=self.config_hash,
            archs=self.archs,
            subjects=list(self.config.data.subjects),
            seeds=list(self.config.grid.seeds),
            controls=[c.value for c in self.config.grid.controls],
            attack_configs={
                tag.value: self.attack_config(tag).model_dump(mode="json") for tag in self.config.attacks.enabled_tags()
            },
            dataset_fingerprints=fingerprints,
            toolkit_version=__version__,
            created_at=created,
            updated_at=_now(),
        )

    # prepare

    def _subject_data(self, subject: str) -> Tuple[PairedDataset, EegEpochSet]:
        """Averaged paired dataset and the trialwise epochs behind it."""
        data = self.config.data
        if data.source == "synthetic":
            spec = SyntheticSpec.from_config(data)
            synth = synthesize_epochs(spec, data.synthetic.seed, subject_seed(data.synthetic.seed, subject), subject)
            trialwise = synth.epochs
            targets = zscore_temporal(average_trials(trialwise), data.zscore_mode)
            images_by_id = index_images(synth.images, synth.image_ids)
            num_categories: Optional[int] = spec.num_categories
        else:
            directory = Path(data.recordings_dir) / subject
            if not directory.exists():
                raise ResourceNotFoundError(f"No recording directory for subject '{subject}': {directory}", path=str(directory))
            prepared = preprocess_recording(load_raw_recording(directory), data)
            trialwise, targets = prepared.trialwise, prepared.targets
            images, image_ids = load_image_tensor(data.images_path)
            images_by_id = index_images(images, image_ids)
            num_categories = None
        paired = build_paired_dataset(
            targets, images_by_id, data.image_size, data.pixel_mean, data.pixel_std, num_categories=num_categories
        )
        return paired, trialwise

    def _subject_artifacts(self, subject: str) -> Dict[str, Any]:
        paired, trialwise = self._subject_data(subject)
        train, val = split_train_val(paired, self.config.data.val_per_category)
        position = {image_id: i for i, image_id in enumerate(trialwise.image_ids)}
        index = [position[image_id] for image_id in val.image_ids]
        trialwise_val = trialwise.with_data(
            trialwise.data[index],
            image_ids=list(val.image_ids),
            category_ids=[int(c) for c in val.category_ids],
        )
        controls = {
            control.value: apply_control(train, ControlKind(control, self.config.grid.control_seed))
            for control in self.config.grid.controls
            if control != ControlKindName.REAL
        }
        tensors = {
            "train_images": train.images,
            "train_targets": train.eeg_targets,
            "val_images": val.images,
            "val_targets": val.eeg_targets,
            "trialwise_val": trialwise_val.data,
        }
        tensors.update({f"train_{name}_targets": ds.eeg_targets for name, ds in controls.items()})
        fingerprint = fingerprint_tensors(
            tensors,
            extra={
                "train_ids": train.image_ids,
                "val_ids": val.image_ids,
                "train_categories": [int(c) for c in train.category_ids],
                "val_categories": [int(c) for c in val.category_ids],
                "channels": train.channel_names,
                "t_start_s": train.t_start_s,
                "dt_s": train.dt_s,
            },
        )
        return {"train": train, "val": val, "trialwise_val": trialwise_val, "controls": controls, "fingerprint": fingerprint}

    def cmd_prepare(self, force: bool = False) -> PrepareSummary:
        """Write paired datasets, control variants and fingerprints for every subject."""
        recorded: Dict[str, Dict[str, str]] = {}
        fingerprint_path = self.store.data_root / FINGERPRINTS_FILE
        if fingerprint_path.exists():
            recorded = read_json(fingerprint_path)
        summary = PrepareSummary(config_hash=self.config_hash)
        for subject in self.config.data.subjects:
            artifacts = self._subject_artifacts(subject)
            directory = self.store.data_dir(subject)
            previous = recorded.get(subject, {})
            intact = directory.exists() and previous.get("files") == fingerprint_dir(directory)
            if not force and previous.get("content") == artifacts["fingerprint"] and intact:
                self._logger.info(f"{subject}: fingerprint unchanged, skipping")
                summary.unchanged.append(subject)
                summary.fingerprints[subject] = artifacts["fingerprint"]
                continue
            save_paired_dataset(directory, "train", artifacts["train"])
            save_paired_dataset(directory, "val", artifacts["val"])
            save_epoch_set(directory / "trialwise_val.nct", artifacts["trialwise_val"])
            for name, dataset in artifacts["controls"].items():
                save_paired_dataset(directory, f"train_{name}", dataset)
            recorded[subject] = {"content": artifacts["fingerprint"], "files": fingerprint_dir(directory)}
            summary.written.append(subject)
            summary.fingerprints[subject] = artifacts["fingerprint"]
            self._logger.info(
                f"{subject}: {len(artifacts['train'])} train / {len(artifacts['val'])} val items, "
                f"fingerprint {artifacts['fingerprint'][:12]}"
            )
        atomic_write_json(fingerprint_path, recorded)
        atomic_write_json(self.store.run_dir / CONFIG_FILE, self.config.model_dump(mode="json"))
        self.store.write_manifest(self.manifest(summary.fingerprints).to_dict())
        return summary

    def _require_prepared(self) -> None:
        if not (self.store.data_root / FINGERPRINTS_FILE).exists():
            raise ResourceNotFoundError(
                f"No prepared data under {self.store.data_root}; run 'prepare' first", path=str(self.store.data_root)
            )

    def _load_split(self, subject: str, name: str) -> PairedDataset:
        if subject == BASELINE_SUBJECT:
            subject = self.config.data.subjects[0]
        return load_paired_dataset(self.store.data_dir(subject), name)

    # jobs

    def run_job(self, kind: str, cell: GridCell, force: bool = False) -> CellOutcome:
        """Run one cell job, recording failure instead of raising."""
        started = time.perf_counter()
        self.store.ensure_cell_dirs(cell)
        if kind == "train":
            self.store.mark_cell(cell, CellStatus.RUNNING)
        self.events.record(CellStatus.RUNNING, cell.cell_id, stage=kind)
        try:
            details = self._train_cell(cell) if kind == "train" else self._evaluate_cell(cell, force)
        except Exception as error:
            elapsed = time.perf_counter() - started
            if kind == "train":
                self.store.mark_cell(cell, CellStatus.FAILED, error=str(error), error_type=type(error).__name__)
            self.events.record(CellStatus.FAILED, cell.cell_id, stage=kind, error=str(error), error_type=type(error).__name__)
            self._logger.error(f"{cell.cell_id} {kind} failed: {type(error).__name__}: {error}")
            return CellOutcome(cell.cell_id, CellStatus.FAILED, str(error), type(error).__name__, elapsed)
        elapsed = time.perf_counter() - started
        if kind == "train":
            self.store.mark_cell(cell, CellStatus.COMPLETED, wall_time_s=elapsed, **details)
        self.events.record(CellStatus.COMPLETED, cell.cell_id, stage=kind, **details)
        self._logger.info(f"{cell.cell_id} {kind} completed in {elapsed:.1f}s")
        return CellOutcome(cell.cell_id, CellStatus.COMPLETED, wall_time_s=elapsed)

    def _run_jobs(self, kind: str, cells: Sequence[GridCell], summary: GridRunSummary, force: bool) -> None:
        if not cells:
            return
        outcomes: List[CellOutcome] = []
        if self.workers <= 1 or len(cells) == 1:
            outcomes = [self.run_job(kind, cell, force) for cell in cells]
        else:
            payload = self.config.model_dump()
            jobs = [CellJob(kind, payload, str(self.store.root), cell, self.device, force) for cell in cells]
            context = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=self.workers, mp_context=context) as pool:
                futures = {pool.submit(run_cell_job, job): job for job in jobs}
                for future in as_completed(futures):
                    job = futures[future]
                    try:
                        outcomes.append(future.result())
                    except Exception as error:
                        self.events.record(CellStatus.FAILED, job.cell.cell_id, stage=kind, error=str(error))
                        if kind == "train":
                            self.store.mark_cell(job.cell, CellStatus.FAILED, error=str(error))
                        outcomes.append(CellOutcome(job.cell.cell_id, CellStatus.FAILED, str(error), type(error).__name__))
        for outcome in sorted(outcomes, key=lambda o: o.cell_id):
            if outcome.status == CellStatus.COMPLETED:
                summary.completed.append(outcome.cell_id)
            else:
                summary.failed.append(outcome)

    # train-grid

    def _train_cell(self, cell: GridCell) -> Dict[str, Any]:
        stored_control = cell.control != ControlKindName.REAL.value
        train = self._load_split(cell.subject, f"train_{cell.control}" if stored_control else "train")
        val = self._load_split(cell.subject, "val")
        cfg = self.config.training.to_train_config(
            head_seed=cell.seed,
            control=ControlKindName(cell.control),
            control_seed=self.config.grid.control_seed,
            device=self.device,
        )
        output_dir = self.store.cell_dir(cell)
        extra = {"config_hash": self.config_hash, "cell": cell.cell_id}
        if cell.is_baseline:
            report = self._trainer.train_baseline(
                self.backbone_spec(train.num_categories), train, cfg, val, output_dir=output_dir, manifest_extra=extra
            )
        else:
            spec = self.cell_spec(cell.arch, train)
            report = self._trainer.train(
                spec, train, cfg, val, output_dir=output_dir, manifest_extra=extra, control_applied=stored_control
            )
            self._write_pcc(cell, report.model, val)
        return {
            "checkpoint_hash": checkpoint_hash(self.store.checkpoint_dir(cell)),
            "update_signature": report.update_signature,
        }

    @torch.no_grad()
    def _write_pcc(self, cell: GridCell, model: nn.Module, val: PairedDataset) -> PccMatrix:
        """PCC of the model's EEG prediction against the measured validation EEG."""
        model.eval()
        images = torch.as_tensor(val.images, dtype=torch.float32, device=self.device)
        batch = self.config.attacks.batch_size
        preds = [forward_dual(model, images[s:s + batch]).eeg_pred.cpu().numpy() for s in range(0, len(val), batch)]
        matrix = pcc_matrix(np.concatenate(preds), val.eeg_targets, val.channel_names, val.times)
        directory = self.store.cell_dir(cell) / "pcc"
        write_tensor(
            directory / PCC_FILE,
            matrix.values,
            sidecar={
                "channel_names": matrix.channel_names,
                "times": [float(t) for t in matrix.times],
                "config_hash": self.config_hash,
            },
        )
        rows = [
            {"channel": name, "time": float(t), "pcc": float(matrix.values[c, k])}
            for c, name in enumerate(matrix.channel_names)
            for k, t in enumerate(matrix.times)
        ]
        write_csv(directory / "pcc_matrix.csv", rows, columns=["channel", "time", "pcc"])
        return matrix

    def read_pcc(self, cell: GridCell) -> PccMatrix:
        path = self.store.cell_dir(cell) / "pcc" / PCC_FILE
        meta = read_sidecar(path)
        return PccMatrix(
            values=read_tensor(path).astype(np.float64),
            channel_names=list(meta["channel_names"]),
            times=np.asarray(meta["times"], dtype=np.float64),
        )

    def cmd_train_grid(self, force: bool = False, clauses: Optional[Dict[str, List[str]]] = None) -> GridRunSummary:
        """Train every selected cell; completed cells are skipped unless forced."""
        self._require_prepared()
        cells = self.grid_cells(clauses)
        summary = GridRunSummary(command="train-grid", total=len(cells))
        pending = []
        for cell in cells:
            if not force and self.store.is_completed(cell):
                summary.skipped.append(cell.cell_id)
            else:
                pending.append(cell)
        self._logger.info(f"train-grid: {len(pending)} to run, {len(summary.skipped)} already completed")
        self._run_jobs("train", pending, summary, force)
        self._log_failures(summary)
        return summary

    # attack-eval

    def _curve_path(self, cell: GridCell, tag: AttackTag) -> Path:
        return self.store.cell_dir(cell) / "curves" / f"{tag.value}.csv"

    def _evaluate_cell(self, cell: GridCell, force: bool) -> Dict[str, Any]:
        tags = [t for t in self.config.attacks.enabled_tags() if force or not self._curve_path(cell, t).exists()]
        checkpoint = self.store.checkpoint_dir(cell)
        if tags:
            model, _ = load_checkpoint(checkpoint)
            model.to(self.device).eval()
            val = self._load_split(cell.subject, "val")
            limit = self.config.attacks.max_images or len(val)
            images = torch.as_tensor(val.images[:limit], dtype=torch.float32, device=self.device)
            labels = torch.as_tensor(val.category_ids[:limit], dtype=torch.long, device=self.device)
            for tag in tags:
                curve = robustness_curve(
                    model,
                    images,
                    labels,
                    self.attack_config(tag),
                    include_zero=self.config.evaluation.prepend_zero_epsilon,
                    batch_size=self.config.attacks.batch_size,
                    model_id=cell.cell_id,
                )
                rows = [
                    {"attack": tag.value, "epsilon": e, "accuracy": a, "n_images": curve.n_images}
                    for e, a in curve.points
                ]
                write_csv(self._curve_path(cell, tag), rows, columns=["attack", "epsilon", "accuracy", "n_images"])
                self._logger.info(f"{cell.cell_id} {tag.value}: {len(rows)} points")
        digest = checkpoint_hash(checkpoint)
        atomic_write_json(
            self.store.cell_dir(cell) / "curves" / "curves.json",
            {
                "config_hash": self.config_hash,
                "checkpoint_hash": digest,
                "attacks": [t.value for t in self.config.attacks.enabled_tags()],
            },
        )
        return {"checkpoint_hash": digest}

    def read_curve(self, cell: GridCell, tag: AttackTag) -> RobustnessCurve:
        frame = read_csv(self._curve_path(cell, tag))
        return RobustnessCurve(
            attack_tag=tag.value,
            points=tuple(zip(frame["epsilon"].tolist(), frame["accuracy"].tolist())),
            model_id=cell.cell_id,
            n_images=int(frame["n_images"].iloc[0]) if len(frame) else 0,
        )

    def cmd_attack_eval(self, force: bool = False, clauses: Optional[Dict[str, List[str]]] = None) -> GridRunSummary:
        """Robustness curves for trained cells and baselines, then gains against the matching baseline."""
        self._require_prepared()
        models = [c for c in self.grid_cells(clauses) if not c.is_baseline and self.store.is_completed(c)]
        seeds = sorted({c.seed for c in models} | {c.seed for c in self.grid_cells(clauses) if c.is_baseline})
        baselines = [self.store.baseline_cell(seed) for seed in seeds]
        missing = [b.cell_id for b in baselines if not self.store.is_completed(b)]
        if missing:
            raise ResourceNotFoundError(
                f"Missing baseline cell(s) {', '.join(missing)}; run train-grid first", path=str(self.store.run_dir)
            )
        summary = GridRunSummary(command="attack-eval", total=len(models) + len(baselines))
        self._run_jobs("attack", baselines + models, summary, force)
        failed = {o.cell_id for o in summary.failed}
        failed_baselines = {b.seed for b in baselines if b.cell_id in failed}
        whitelist = self.config.evaluation.avg_gain_whitelist
        rows, averages = [], []
        for cell in models:
            if cell.cell_id in failed or cell.seed in failed_baselines:
                continue
            base = self.store.baseline_cell(cell.seed)
            records = [
                robustness_gain(
                    self.read_curve(cell, tag),
                    self.read_curve(base, tag),
                    arch_name=cell.arch,
                    subject_id=cell.subject,
                    seed=cell.seed,
                    whitelist=whitelist,
                    control=cell.control,
                )
                for tag in self.config.attacks.enabled_tags()
            ]
            cell_rows = [row for record in records for row in record.to_rows()]
            write_csv(self.store.cell_dir(cell) / "curves" / "gains.csv", cell_rows, columns=list(cell_rows[0]))
            atomic_write_json(
                self.store.cell_dir(cell) / "curves" / AVG_GAIN_FILE, {r.attack_tag: r.avg_gain for r in records}
            )
            rows += cell_rows
            averages += [
                {"arch": cell.arch, "control": cell.control, "subject": cell.subject, "seed": cell.seed,
                 "attack": r.attack_tag, "avg_gain": r.avg_gain}
                for r in records
            ]
        if averages:
            write_csv(self.store.analysis_dir / "gains.csv", rows)
            write_csv(self.store.analysis_dir / "avg_gain.csv", averages)
        self._log_failures(summary)
        return summary

    def read_gain_records(self, cell: GridCell) -> List[GainRecord]:
        frame = read_csv(self.store.cell_dir(cell) / "curves" / "gains.csv")
        averages = read_json(self.store.cell_dir(cell) / "curves" / AVG_GAIN_FILE)
        records = []
        for tag, group in frame.groupby("attack", sort=False):
            records.append(GainRecord(
                arch_name=cell.arch,
                subject_id=cell.subject,
                seed=cell.seed,
                attack_tag=str(tag),
                gain_curve=tuple(zip(group["epsilon"].tolist(), group["gain"].tolist())),
                avg_gain=float(averages[str(tag)]),
                control=cell.control,
            ))
        return records

    # analyze

    def model_grid(self) -> Tuple[ModelGridResult, List[GainRecord], List[Dict[str, Any]]]:
        """Grid of real-target cells with gains and a PCC matrix, gain records and per-cell rows of every control."""
        grid = ModelGridResult()
        records: List[GainRecord] = []
        cell_rows: List[Dict[str, Any]] = []
        window = self.config.analysis.critical_window
        for cell in self.grid_cells():
            if cell.is_baseline or not (self.store.cell_dir(cell) / "curves" / AVG_GAIN_FILE).exists():
                continue
            gains = read_json(self.store.cell_dir(cell) / "curves" / AVG_GAIN_FILE)
            pcc = self.read_pcc(cell)
            records += self.read_gain_records(cell)
            cell_rows += [
                {"arch": cell.arch, "control": cell.control, "subject": cell.subject, "seed": cell.seed,
                 "attack": tag, "avg_gain": float(value), "avg_pcc": avg_pcc_window(pcc, window)}
                for tag, value in gains.items()
            ]
            if cell.control == ControlKindName.REAL.value:
                grid.add(GridKey(cell.arch, cell.subject, cell.seed), GridEntry(avg_gain=gains, pcc=pcc))
        if len(grid) == 0:
            raise ResourceNotFoundError("No evaluated cells found; run attack-eval first", path=str(self.store.run_dir))
        return grid, records, cell_rows

    def _noise_ceiling(self) -> Optional[NoiseCeiling]:
        """Ceilings averaged over subjects, None when trials are too few."""
        ceilings = []
        for subject in self.config.data.subjects:
            trialwise = load_epoch_set(self.store.data_dir(subject) / "trialwise_val.nct")
            try:
                ceilings.append(noise_ceiling(
                    trialwise,
                    window=self.config.evaluation.noise_ceiling_window,
                    n_splits=self.config.evaluation.noise_ceiling_splits,
                ))
            except ValidationError as error:
                self._logger.warn(f"{subject}: no noise ceiling ({error})")
                return None
        return NoiseCeiling(
            channel_names=ceilings[0].channel_names,
            lower=np.mean([c.lower for c in ceilings], axis=0),
            upper=np.mean([c.upper for c in ceilings], axis=0),
            n_splits=ceilings[0].n_splits,
            window=ceilings[0].window,
        )

    def _scatter_rows(self, grid: ModelGridResult, tag: str) -> List[Dict[str, Any]]:
        window = self.config.analysis.critical_window
        groups: Dict[str, List[Tuple[float, float]]] = {}
        for key, entry in grid:
            label = key.arch_name if self.config.analysis.aggregate else f"{key.arch_name}/{key.subject_id}/{key.seed}"
            groups.setdefault(label, []).append((avg_pcc_window(entry.pcc, window), entry.avg_gain[tag]))
        rows = []
        for label, values in groups.items():
            arch = label.split("/")[0]
            rows.append({
                "arch": label,
                "cluster": resolve_architecture(arch).cluster.value,
                "avg_pcc": float(np.nanmean([v[0] for v in values])),
                "avg_gain": float(np.mean([v[1] for v in values])),
            })
        return rows

    def cmd_analyze(self) -> Dict[str, Any]:
        """Correlation analyses, figures with companion CSVs, and summary.json."""
        grid, records, cell_rows = self.model_grid()
        analysis = self.config.analysis
        writer = FigureWriter(self.store.analysis_dir / "figures")
        analyzer = GridAnalyzer(aggregate=analysis.aggregate)
        warnings: List[str] = []
        summary: Dict[str, Any] = {
            "config_hash": self.config_hash,
            "models": len(grid),
            "archs": len(grid.archs),
            "subjects": grid.subjects,
            "seeds": grid.seeds,
            "aggregate": analysis.aggregate,
            "peaks": [],
            "best_windows": [],
            "channel_ranking": {},
        }

        def warn(message: str) -> None:
            warnings.append(message)
            self._logger.warn(message)

        traces = []
        for tag in grid.attack_tags:
            try:
                trace = analyzer.sliding_window_correlation(grid, tag, analysis.window_len_s, analysis.step_s)
            except InsufficientDataError as error:
                warn(f"{tag}: window correlation skipped ({error})")
                continue
            traces.append(trace)
            peak = trace.peak()
            flags = significant_points(trace, analysis.alpha)
            summary["peaks"].append({
                "attack": tag,
                "t_center": peak.t_center if peak else None,
                "r": peak.r if peak else None,
                "significant_windows": int(sum(flags.values())),
            })
            best, table = analyzer.optimize_window(grid, tag, analysis.candidate_windows)
            for score in table:
                summary["best_windows"].append({
                    "attack": tag,
                    "t_lo": score.window[0],
                    "t_hi": score.window[1],
                    "r": score.r,
                    "r_squared": score.r_squared,
                    "p_value": score.p_value,
                    "best": score is best,
                })
        trace_columns = ["attack", "t_center", "t_lo", "t_hi", "r", "r_squared", "p_value", "n"]
        if traces:
            writer.window_trace(traces)
        else:
            writer.table("window_correlation", [], trace_columns)
        write_csv(
            self.store.analysis_dir / "window_scores.csv",
            summary["best_windows"],
            columns=["attack", "t_lo", "t_hi", "r", "r_squared", "p_value", "best"],
        )

        for tag in grid.attack_tags:
            artifact = writer.gain_pcc_scatter(self._scatter_rows(grid, tag), tag)
            warnings += artifact.warnings

        channel_pcc = np.nanmean(
            np.vstack([channel_window_means(entry.pcc, analysis.critical_window) for _, entry in grid]), axis=0
        )
        writer.channel_pcc_bars(grid.channel_names, channel_pcc, self._noise_ceiling())
        try:
            writer.electrode_scatter(grid.channel_names, channel_pcc)
        except ValidationError as error:
            warn(f"electrode scatter skipped ({error})")

        try:
            report = analyzer.per_channel_correlation(grid, grid.attack_tags, analysis.critical_window)
            writer.channel_correlation_bars(report)
            summary["channel_ranking"] = {tag: report.ranking(tag)[:5] for tag in grid.attack_tags}
        except InsufficientDataError as error:
            warn(f"channel correlation skipped ({error})")
            writer.table("channel_correlation", [], ["attack", "channel", "r", "p_value"])

        writer.gain_bands(gain_band(records))
        comparison = control_comparison(cell_rows)
        write_csv(self.store.analysis_dir / "control_comparison.csv", comparison, columns=CONTROL_COMPARISON_COLUMNS)
        writer.control_comparison(comparison)
        summary["controls"] = [row for row in comparison if row["control"] != ControlKindName.REAL.value]

        if analysis.aggregate and analysis.report_pooled:
            self._pooled_tables(grid, warn)

        summary["warnings"] = warnings
        atomic_write_json(self.store.analysis_dir / SUMMARY_FILE, summary)
        self._logger.info(f"analyze: {len(grid)} models, {len(warnings)} warning(s)")
        return summary

    def _pooled_tables(self, grid: ModelGridResult, warn) -> None:
        """Per-model (unaggregated) variants, CSV only."""
        analysis = self.config.analysis
        pooled = GridAnalyzer(aggregate=False)
        rows: List[Dict[str, Any]] = []
        for tag in grid.attack_tags:
            try:
                rows += pooled.sliding_window_correlation(grid, tag, analysis.window_len_s, analysis.step_s).to_rows()
            except InsufficientDataError as error:
                warn(f"{tag}: pooled window correlation skipped ({error})")
        write_csv(
            self.store.analysis_dir / "window_correlation_pooled.csv",
            rows,
            columns=["attack", "t_center", "t_lo", "t_hi", "r", "r_squared", "p_value", "n"],
        )
        try:
            report = pooled.per_channel_correlation(grid, grid.attack_tags, analysis.critical_window)
            write_csv(self.store.analysis_dir / "channel_correlation_pooled.csv", report.to_rows())
        except InsufficientDataError as error:
            warn(f"pooled channel correlation skipped ({error})")

    # report

    def cmd_report(self, report_format: ReportFormat = ReportFormat.MARKDOWN) -> str:
        """Render manifest, analysis summary and failures; also written under analysis/."""
        manifest = self.store.read_manifest() if self.store.has_manifest() else {}
        summary_path = self.store.analysis_dir / SUMMARY_FILE
        if not summary_path.exists():
            raise ResourceNotFoundError("No analysis summary; run 'analyze' first", path=str(summary_path))
        summary = read_json(summary_path)
        failures = [
            {"cell": e.cell_id, "stage": e.data.get("stage", ""), "error": e.data.get("error", "")}
            for e in self.events.failures()
        ]
        sections: Dict[str, Any] = {
            "run": {
                "config_hash": self.config_hash,
                "experiment": self.config.experiment.name,
                "toolkit_version": manifest.get("toolkit_version", __version__),
                "models": summary.get("models"),
                "architectures": summary.get("archs"),
                "subjects": ", ".join(summary.get("subjects", [])),
                "seeds": ", ".join(str(s) for s in summary.get("seeds", [])),
            },
            "peaks": summary.get("peaks", []),
            "best_windows": summary.get("best_windows", []),
            "channel_ranking": summary.get("channel_ranking", {}),
            "controls": summary.get("controls", []) or "none",
            "failures": failures or "none",
            "warnings": summary.get("warnings", []) or "none",
        }
        options = FormattingOptions(report_format=report_format)
        text = ReportFormatter.format(f"Robustness analysis: {self.config.experiment.name}", sections, options)
        path = self.store.analysis_dir / f"report.{REPORT_SUFFIXES[options.report_format]}"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return text

    def _log_failures(self, summary: GridRunSummary) -> None:
        for outcome in summary.failed:
            self._logger.error(f"FAILED {outcome.cell_id}: {outcome.error_type}: {outcome.error}")
        self._logger.info(
            f"{summary.command}: {len(summary.completed)} completed, {len(summary.skipped)} skipped, "
            f"{len(summary.failed)} failed of {summary.total}"
        )

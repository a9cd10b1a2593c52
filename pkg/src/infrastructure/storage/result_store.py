"""File-system result store.

Layout under the result root::

    runs/<config-hash>/manifest.json
    runs/<config-hash>/events.jsonl
    runs/<config-hash>/data/<subject>/{train,val}_{images,targets}.nct, trialwise_val.nct
    runs/<config-hash>/<arch>[~<control>]/<subject>/<seed>/{checkpoints,curves,pcc,logs}/
    runs/<config-hash>/baseline/all/<seed>/...
    runs/<config-hash>/analysis/
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ...domain.eeg_types import EegEpochSet, PairedDataset, SplitTag
from ...domain.errors import ResourceNotFoundError
from ...domain.experiment_types import BASELINE_ARCH, BASELINE_SUBJECT, CellStatus, GridCell
from ..logger import get_logger
from .tensor_container import (
    PathLike,
    atomic_write_json,
    atomic_write_text,
    read_json,
    read_sidecar,
    read_tensor,
    write_tensor,
)


CSV_FLOAT_FORMAT = "%.10g"
CELL_SUBDIRS = ("checkpoints", "curves", "pcc", "logs")


def write_csv(path: PathLike, rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> None:
    """Write rows with a fixed float format so reruns are byte-identical."""
    frame = pd.DataFrame(list(rows), columns=columns)
    atomic_write_text(path, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"))


def read_csv(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ResourceNotFoundError(f"Missing table: {path}", path=str(path))
    return pd.read_csv(path)


def save_paired_dataset(directory: PathLike, name: str, dataset: PairedDataset) -> None:
    """<name>_images.nct + <name>_targets.nct (sidecar carries ids and axes)."""
    directory = Path(directory)
    write_tensor(directory / f"{name}_images.nct", dataset.images)
    write_tensor(
        directory / f"{name}_targets.nct",
        dataset.eeg_targets,
        sidecar={
            "image_ids": list(dataset.image_ids),
            "category_ids": [int(c) for c in dataset.category_ids],
            "num_categories": dataset.num_categories,
            "split_tag": dataset.split_tag.value,
            "channel_names": list(dataset.channel_names),
            "t_start_s": dataset.t_start_s,
            "dt_s": dataset.dt_s,
        },
    )


def load_paired_dataset(directory: PathLike, name: str) -> PairedDataset:
    directory = Path(directory)
    images = read_tensor(directory / f"{name}_images.nct")
    targets = read_tensor(directory / f"{name}_targets.nct")
    meta = read_sidecar(directory / f"{name}_targets.nct")
    return PairedDataset(
        images=images,
        eeg_targets=targets,
        category_ids=np.asarray(meta["category_ids"], dtype=np.int64),
        image_ids=list(meta["image_ids"]),
        num_categories=int(meta["num_categories"]),
        split_tag=SplitTag(meta["split_tag"]),
        channel_names=list(meta["channel_names"]),
        t_start_s=float(meta["t_start_s"]),
        dt_s=float(meta["dt_s"]),
    )


def save_epoch_set(path: PathLike, epochs: EegEpochSet) -> None:
    write_tensor(
        path,
        epochs.data,
        sidecar={
            "t_start_s": epochs.t_start_s,
            "dt_s": epochs.dt_s,
            "channel_names": list(epochs.channel_names),
            "image_ids": list(epochs.image_ids),
            "category_ids": epochs.category_ids,
            "subject_id": epochs.subject_id,
        },
    )


def load_epoch_set(path: PathLike) -> EegEpochSet:
    data = read_tensor(path).astype(np.float64)
    meta = read_sidecar(path)
    return EegEpochSet(
        data=data,
        t_start_s=float(meta["t_start_s"]),
        dt_s=float(meta["dt_s"]),
        channel_names=list(meta["channel_names"]),
        image_ids=list(meta["image_ids"]),
        category_ids=meta.get("category_ids"),
        subject_id=str(meta.get("subject_id", "")),
    )


class ResultStore:
    """Directory layout and atomic bookkeeping of one experiment run."""

    def __init__(self, root: PathLike, config_hash: str):
        self._logger = get_logger(self.__class__.__name__)
        self.root = Path(root)
        self.config_hash = config_hash
        self.run_dir = self.root / "runs" / config_hash

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.json"

    @property
    def events_path(self) -> Path:
        return self.run_dir / "events.jsonl"

    @property
    def data_root(self) -> Path:
        return self.run_dir / "data"

    @property
    def analysis_dir(self) -> Path:
        return self.run_dir / "analysis"

    def data_dir(self, subject: str) -> Path:
        return self.data_root / subject

    def cell_dir(self, cell: GridCell) -> Path:
        return self.run_dir / cell.arch_dir / cell.subject / str(cell.seed)

    def baseline_cell(self, seed: int) -> GridCell:
        return GridCell(arch=BASELINE_ARCH, subject=BASELINE_SUBJECT, seed=seed)

    def ensure_cell_dirs(self, cell: GridCell) -> Path:
        base = self.cell_dir(cell)
        for sub in CELL_SUBDIRS:
            (base / sub).mkdir(parents=True, exist_ok=True)
        return base

    def checkpoint_dir(self, cell: GridCell) -> Path:
        return self.cell_dir(cell) / "checkpoints" / "final"

    def write_manifest(self, manifest: Dict[str, Any]) -> None:
        atomic_write_json(self.manifest_path, manifest)

    def read_manifest(self) -> Dict[str, Any]:
        return read_json(self.manifest_path)

    def has_manifest(self) -> bool:
        return self.manifest_path.exists()

    def cell_status(self, cell: GridCell) -> Optional[Dict[str, Any]]:
        """Content of cell.json, None when the cell never ran."""
        path = self.cell_dir(cell) / "cell.json"
        if not path.exists():
            return None
        return read_json(path)

    def is_completed(self, cell: GridCell) -> bool:
        status = self.cell_status(cell)
        return bool(status) and status.get("status") == CellStatus.COMPLETED.value

    def mark_cell(self, cell: GridCell, status: CellStatus, **details: Any) -> None:
        body = {"cell": cell.cell_id, "status": status.value, "config_hash": self.config_hash}
        body.update(details)
        atomic_write_json(self.cell_dir(cell) / "cell.json", body)
        self._logger.debug(f"Cell {cell.cell_id} -> {status.value}")

    def list_cells(self, cells: Sequence[GridCell], status: CellStatus) -> List[GridCell]:
        out = []
        for cell in cells:
            current = self.cell_status(cell)
            if current and current.get("status") == status.value:
                out.append(cell)
        return out

"""Raw recording, events table and image tensor ingestion."""

from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from ...domain.eeg_types import EegEvent, RawEegRecording
from ...domain.errors import ResourceNotFoundError, ValidationError
from .tensor_container import PathLike, atomic_write_text, read_sidecar, read_tensor, write_tensor


EEG_FILE = "eeg.nct"
EVENTS_FILE = "events.csv"
EVENTS_COLUMNS = ["image_id", "onset_sample", "category_id"]


def load_events_table(path: PathLike) -> List[EegEvent]:
    """Parse `image_id,onset_sample,category_id` rows."""
    path = Path(path)
    if not path.exists():
        raise ResourceNotFoundError(f"Missing events table: {path}", path=str(path))
    frame = pd.read_csv(path, dtype={"image_id": str})
    missing = [c for c in EVENTS_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path}: events table lacks column(s) {', '.join(missing)}", target="events")
    return [
        EegEvent(image_id=str(row.image_id), onset_sample=int(row.onset_sample), category_id=int(row.category_id))
        for row in frame.itertuples(index=False)
    ]


def write_events_table(path: PathLike, events: List[EegEvent]) -> None:
    frame = pd.DataFrame(
        [(e.image_id, e.onset_sample, e.category_id) for e in events],
        columns=EVENTS_COLUMNS,
    )
    atomic_write_text(path, frame.to_csv(index=False))


def load_raw_recording(directory: PathLike) -> RawEegRecording:
    """Read eeg.nct, its sidecar and events.csv from one subject directory."""
    directory = Path(directory)
    signal = read_tensor(directory / EEG_FILE).astype(np.float64)
    meta = read_sidecar(directory / EEG_FILE)
    for key in ("channel_names", "sample_rate_hz"):
        if key not in meta:
            raise ValidationError(f"{directory / 'eeg.json'}: missing '{key}'", target="sidecar")
    return RawEegRecording(
        subject_id=str(meta.get("subject_id", directory.name)),
        channel_names=list(meta["channel_names"]),
        sample_rate_hz=float(meta["sample_rate_hz"]),
        signal=signal,
        events=load_events_table(directory / EVENTS_FILE),
    )


def write_raw_recording(directory: PathLike, recording: RawEegRecording) -> None:
    directory = Path(directory)
    write_tensor(
        directory / EEG_FILE,
        recording.signal,
        sidecar={
            "subject_id": recording.subject_id,
            "channel_names": list(recording.channel_names),
            "sample_rate_hz": recording.sample_rate_hz,
        },
    )
    write_events_table(directory / EVENTS_FILE, recording.events)


def load_image_tensor(path: PathLike) -> Tuple[np.ndarray, List[str]]:
    """Images [N x 3 x H x W] in [0, 1] and their ids, from images.nct + images.json."""
    images = read_tensor(path)
    meta = read_sidecar(path)
    image_ids = [str(i) for i in meta.get("image_ids", [])]
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValidationError(f"{path}: images must be [N x 3 x H x W], got {images.shape}", target="images")
    if len(image_ids) != images.shape[0]:
        raise ValidationError(
            f"{path}: {images.shape[0]} images but {len(image_ids)} image ids", target="images"
        )
    return images, image_ids


def write_image_tensor(path: PathLike, images: np.ndarray, image_ids: List[str]) -> None:
    write_tensor(path, images, sidecar={"image_ids": list(image_ids)})


def index_images(images: np.ndarray, image_ids: List[str]) -> Dict[str, np.ndarray]:
    """Map image id to its [3 x H x W] array."""
    if len(set(image_ids)) != len(image_ids):
        raise ValidationError("Duplicate image ids in image tensor", target="images")
    return {image_id: images[i] for i, image_id in enumerate(image_ids)}

"""NCT1 binary tensor container.

Layout: magic b"NCT1", little-endian u32 rank, u32 dims[rank], then the
float32 payload in row-major order. Metadata lives in a JSON sidecar.
"""

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from ...domain.errors import ResourceNotFoundError, ValidationError


MAGIC = b"NCT1"
TENSOR_SUFFIX = ".nct"
PathLike = Union[str, os.PathLike]


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: PathLike, data: Any) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


def read_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.exists():
        raise ResourceNotFoundError(f"Missing file: {path}", path=str(path))
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def encode_tensor(array: np.ndarray) -> bytes:
    """Serialize an array as NCT1 bytes."""
    data = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    header = MAGIC + struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return header + data.tobytes(order="C")


def decode_tensor(payload: bytes, source: str = "<bytes>") -> np.ndarray:
    """Parse NCT1 bytes into a float32 array."""
    if payload[:4] != MAGIC:
        raise ValidationError(f"{source}: not an NCT1 container", target="container")
    if len(payload) < 8:
        raise ValidationError(f"{source}: truncated header", target="container")
    (rank,) = struct.unpack_from("<I", payload, 4)
    offset = 8 + 4 * rank
    if len(payload) < offset:
        raise ValidationError(f"{source}: truncated header", target="container")
    dims: Tuple[int, ...] = struct.unpack_from(f"<{rank}I", payload, 8) if rank else ()
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    if len(payload) - offset != expected:
        raise ValidationError(
            f"{source}: payload has {len(payload) - offset} bytes, expected {expected} for shape {dims}",
            target="container",
        )
    return np.frombuffer(payload, dtype="<f4", offset=offset).reshape(dims).astype(np.float32)


def write_tensor(path: PathLike, array: np.ndarray, sidecar: Optional[Dict[str, Any]] = None) -> None:
    """Write one tensor file and, optionally, its JSON sidecar (same stem, .json)."""
    path = Path(path)
    atomic_write_bytes(path, encode_tensor(array))
    if sidecar is not None:
        atomic_write_json(path.with_suffix(".json"), sidecar)


def read_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ResourceNotFoundError(f"Missing tensor file: {path}", path=str(path))
    return decode_tensor(path.read_bytes(), source=str(path))


def read_sidecar(path: PathLike) -> Dict[str, Any]:
    """JSON sidecar of a tensor file."""
    return read_json(Path(path).with_suffix(".json"))


def write_tensor_dir(directory: PathLike, tensors: Dict[str, np.ndarray], manifest: Dict[str, Any]) -> None:
    """One .nct file per named tensor plus manifest.json, written last."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, array in tensors.items():
        write_tensor(directory / f"{name}{TENSOR_SUFFIX}", array)
    body = dict(manifest)
    body["tensors"] = {name: list(np.shape(array)) for name, array in tensors.items()}
    atomic_write_json(directory / "manifest.json", body)


def read_tensor_dir(directory: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Inverse of write_tensor_dir."""
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    tensors = {name: read_tensor(directory / f"{name}{TENSOR_SUFFIX}") for name in manifest.get("tensors", {})}
    return tensors, manifest


def fingerprint_tensors(tensors: Dict[str, np.ndarray], extra: Any = None) -> str:
    """sha256 over names, shapes and float32 payloads."""
    digest = hashlib.sha256()
    for name in sorted(tensors):
        digest.update(name.encode("utf-8"))
        digest.update(encode_tensor(tensors[name]))
    if extra is not None:
        digest.update(json.dumps(extra, sort_keys=True, default=str).encode("utf-8"))
    return digest.hexdigest()


def fingerprint_dir(directory: PathLike) -> str:
    """sha256 over every file of a directory, in sorted relative-path order."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(directory)).encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()

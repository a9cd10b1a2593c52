"""Checkpoints: one NCT1 tensor per state-dict entry plus a manifest."""

from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from ...domain.errors import ValidationError
from ...domain.model_types import ArchitectureSpec, BackboneSpec
from ...domain.training_types import UncertaintyParams
from ...infrastructure.storage.tensor_container import fingerprint_dir, read_tensor_dir, write_tensor_dir
from .dual_task_model import BaselineClassifier, DualTaskModel, build_architecture, build_baseline


def save_checkpoint(
    model: nn.Module,
    directory: Union[str, Path],
    uncertainty: Optional[UncertaintyParams] = None,
    head_seed: int = 0,
    extra: Optional[Dict[str, Any]] = None,
) -> str:
    """Write the model state and return the checkpoint hash."""
    state = model.state_dict()
    tensors = {name: value.detach().cpu().float().numpy() for name, value in state.items()}
    manifest: Dict[str, Any] = {
        "dtypes": {name: str(value.dtype).replace("torch.", "") for name, value in state.items()},
        "head_seed": head_seed,
        "extra": extra or {},
    }
    if isinstance(model, DualTaskModel):
        manifest["kind"] = "dual_task"
        manifest["architecture"] = model.spec.to_canonical_text()
    elif isinstance(model, BaselineClassifier):
        manifest["kind"] = "baseline"
        manifest["backbone"] = _backbone_dict(model.backbone_spec)
    else:
        raise ValidationError(f"Cannot checkpoint {type(model).__name__}", target="model")
    if uncertainty is not None:
        manifest["uncertainty"] = {"s1": uncertainty.s1, "s2": uncertainty.s2}
    write_tensor_dir(directory, tensors, manifest)
    return checkpoint_hash(directory)


def _backbone_dict(spec: BackboneSpec) -> Dict[str, Any]:
    return {
        "kind": spec.kind.value,
        "num_classes": spec.num_classes,
        "pretrained_weights": spec.pretrained_weights,
        "image_size": spec.image_size,
        "seed": spec.seed,
    }


def load_checkpoint(directory: Union[str, Path]) -> Tuple[nn.Module, Dict[str, Any]]:
    """Rebuild the model recorded in a checkpoint and restore its state."""
    tensors, manifest = read_tensor_dir(directory)
    if manifest.get("kind") == "dual_task":
        spec = ArchitectureSpec.from_canonical_text(manifest["architecture"])
        spec = spec.with_backbone(replace(spec.backbone, pretrained_weights=None))
        model: nn.Module = build_architecture(spec, int(manifest.get("head_seed", 0)))
    elif manifest.get("kind") == "baseline":
        backbone = dict(manifest["backbone"])
        backbone["pretrained_weights"] = None
        model = build_baseline(BackboneSpec(**backbone))
    else:
        raise ValidationError(f"{directory}: unknown checkpoint kind {manifest.get('kind')!r}", target="checkpoint")
    dtypes = manifest.get("dtypes", {})
    state = {
        name: torch.from_numpy(np.asarray(array)).to(getattr(torch, dtypes.get(name, "float32")))
        for name, array in tensors.items()
    }
    model.load_state_dict(state)
    return model, manifest


def checkpoint_uncertainty(manifest: Dict[str, Any]) -> Optional[UncertaintyParams]:
    values = manifest.get("uncertainty")
    if values is None:
        return None
    return UncertaintyParams(s1=float(values["s1"]), s2=float(values["s2"]))


def checkpoint_hash(directory: Union[str, Path]) -> str:
    """sha256 over every file of the checkpoint directory."""
    return fingerprint_dir(directory)

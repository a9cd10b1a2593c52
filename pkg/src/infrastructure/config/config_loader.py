"""Layered experiment configuration: defaults < TOML file < EEGROB_CONFIG__* < CLI overrides."""

import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from pydantic import ValidationError as PydanticValidationError

from ...domain.errors import ConfigurationError, ResourceNotFoundError
from ...domain.experiment_types import ExperimentConfig
from ..logger import get_logger

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


ENV_OVERRIDE_PREFIX = "EEGROB_CONFIG__"


def parse_value(text: str) -> Any:
    """TOML scalar/array syntax, falling back to the raw string."""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def parse_assignment(assignment: str) -> Dict[str, Any]:
    """'training.epochs=3' -> {'training': {'epochs': 3}}."""
    if "=" not in assignment:
        raise ConfigurationError(f"Override '{assignment}' must look like section.key=value", key_path=assignment)
    path, raw = assignment.split("=", 1)
    keys = [k.strip() for k in path.strip().split(".") if k.strip()]
    if not keys:
        raise ConfigurationError(f"Override '{assignment}' has an empty key path", key_path=assignment)
    nested: Dict[str, Any] = {keys[-1]: parse_value(raw.strip())}
    for key in reversed(keys[:-1]):
        nested = {key: nested}
    return nested


def deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; update wins."""
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def format_validation_errors(error: PydanticValidationError) -> List[str]:
    """One 'key.path: message' line per offending field."""
    lines = []
    for err in error.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return lines


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form; any field change changes the hash."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ConfigLoader:
    """Reads and validates experiment configurations."""

    def __init__(self, environ: Optional[Mapping[str, str]] = None):
        self._environ = os.environ if environ is None else environ
        self._logger = get_logger(self.__class__.__name__)

    def read_file(self, path: Union[str, Path]) -> Dict[str, Any]:
        path = Path(path)
        if not path.exists():
            raise ResourceNotFoundError(f"Config file not found: {path}", path=str(path))
        try:
            with path.open("rb") as handle:
                return tomllib.load(handle)
        except tomllib.TOMLDecodeError as error:
            raise ConfigurationError(f"{path}: invalid TOML ({error})") from error
        except UnicodeDecodeError as error:
            raise ConfigurationError(f"{path}: config files must be UTF-8") from error

    def env_overrides(self) -> Dict[str, Any]:
        """EEGROB_CONFIG__training__epochs=3 style variables."""
        layer: Dict[str, Any] = {}
        for name in sorted(self._environ):
            if name.startswith(ENV_OVERRIDE_PREFIX):
                path = name[len(ENV_OVERRIDE_PREFIX):].lower().replace("__", ".")
                layer = deep_merge(layer, parse_assignment(f"{path}={self._environ[name]}"))
        return layer

    def load(self, path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
        """Merge every layer and validate the result."""
        data: Dict[str, Any] = {}
        if path is not None:
            data = self.read_file(path)
            self._logger.debug(f"Loaded config file {path}")
        env_layer = self.env_overrides()
        if env_layer:
            self._logger.debug(f"Applying environment overrides: {sorted(env_layer)}")
        data = deep_merge(data, env_layer)
        for assignment in overrides:
            data = deep_merge(data, parse_assignment(assignment))
        return self.validate(data, source=str(path) if path else "<defaults>")

    def validate(self, data: Mapping[str, Any], source: str = "<config>") -> ExperimentConfig:
        try:
            return ExperimentConfig.model_validate(dict(data))
        except PydanticValidationError as error:
            lines = format_validation_errors(error)
            first_path = lines[0].split(":", 1)[0] if lines else None
            raise ConfigurationError(
                f"Invalid configuration in {source}:\n  " + "\n  ".join(lines), key_path=first_path
            ) from error

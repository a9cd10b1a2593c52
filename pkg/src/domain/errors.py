"""Domain error types and error handling utilities."""

from typing import Any, List, Optional, Sequence


class DomainError(Exception):
    """Base domain error."""

    def __init__(self, message: str):
        super().__init__(message)
        self.name = self.__class__.__name__


class ValidationError(DomainError):
    """Invalid input value, range or combination."""

    def __init__(self, message: str, target: Optional[str] = None):
        super().__init__(message)
        self.name = "ValidationError"
        self.target = target


class ConfigurationError(DomainError):
    """Configuration error."""

    def __init__(self, message: str, key_path: Optional[str] = None):
        super().__init__(message)
        self.name = "ConfigurationError"
        self.key_path = key_path


class ResourceNotFoundError(DomainError):
    """Missing file, checkpoint or result."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.name = "ResourceNotFoundError"
        self.path = path


class ChannelNotFoundError(ValidationError):
    """Requested EEG channel names are not in the montage."""

    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        super().__init__(f"Unknown EEG channel(s): {', '.join(self.names)}", target="channels")
        self.name = "ChannelNotFoundError"


class EventWindowError(ValidationError):
    """An event's epoch window falls outside the recorded signal."""

    def __init__(self, image_id: str, onset_sample: int, message: Optional[str] = None):
        super().__init__(
            message or f"Epoch window for image '{image_id}' (onset {onset_sample}) exceeds signal bounds",
            target="events",
        )
        self.name = "EventWindowError"
        self.image_id = image_id
        self.onset_sample = onset_sample


class ArchitectureNameError(ValidationError):
    """Architecture name does not follow the <Cluster>[(qualifier)]_Bk<digits> grammar."""

    def __init__(self, arch_name: str, position: int, reason: str):
        super().__init__(
            f"Malformed architecture name '{arch_name}' at position {position}: {reason}",
            target="arch",
        )
        self.name = "ArchitectureNameError"
        self.arch_name = arch_name
        self.position = position
        self.reason = reason


class ShapeMismatchError(ValidationError):
    """Tensor shapes do not agree."""

    def __init__(self, message: str, expected: Any = None, actual: Any = None):
        super().__init__(message)
        self.name = "ShapeMismatchError"
        self.expected = expected
        self.actual = actual


class WeightsMismatchError(ValidationError):
    """Pretrained weights do not match the model parameters."""

    def __init__(
        self,
        missing: Optional[List[str]] = None,
        unexpected: Optional[List[str]] = None,
        mismatched: Optional[List[str]] = None,
    ):
        self.missing = sorted(missing or [])
        self.unexpected = sorted(unexpected or [])
        self.mismatched = sorted(mismatched or [])
        parts = []
        if self.missing:
            parts.append(f"missing: {', '.join(self.missing)}")
        if self.unexpected:
            parts.append(f"unexpected: {', '.join(self.unexpected)}")
        if self.mismatched:
            parts.append(f"shape mismatch: {', '.join(self.mismatched)}")
        super().__init__("Pretrained weights do not match model (" + "; ".join(parts) + ")")
        self.name = "WeightsMismatchError"


class NonFiniteError(DomainError):
    """A loss or gradient became NaN or infinite."""

    def __init__(
        self,
        message: str,
        epoch: Optional[int] = None,
        batch: Optional[int] = None,
        item: Optional[int] = None,
    ):
        super().__init__(message)
        self.name = "NonFiniteError"
        self.epoch = epoch
        self.batch = batch
        self.item = item


class GridMismatchError(ValidationError):
    """Two curves do not share attack tag or epsilon grid."""

    def __init__(self, message: str):
        super().__init__(message, target="epsilon_grid")
        self.name = "GridMismatchError"


class InsufficientDataError(ValidationError):
    """Too few points for the requested statistic."""

    def __init__(self, message: str, available: int = 0, required: int = 0):
        super().__init__(message)
        self.name = "InsufficientDataError"
        self.available = available
        self.required = required


USER_ERROR_EXIT_CODE = 2
INTERNAL_ERROR_EXIT_CODE = 1


def is_user_error(error: Exception) -> bool:
    """User or configuration mistakes, as opposed to internal failures."""
    return isinstance(error, (ValidationError, ConfigurationError, ResourceNotFoundError))


def exit_code_for(error: Exception) -> int:
    """Map an error to the CLI exit code."""
    return USER_ERROR_EXIT_CODE if is_user_error(error) else INTERNAL_ERROR_EXIT_CODE

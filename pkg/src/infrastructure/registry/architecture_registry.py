"""Registry of the dual-task architectures."""

from typing import Dict, List, Optional

from ...domain.errors import ResourceNotFoundError
from ...domain.model_types import ArchitectureSpec, BackboneSpec
from ..logger import get_logger


TABLE_ARCHITECTURES = (
    "CNN_Bk4",
    "CNN(concat)_Bk12",
    "CNN(concat)_Bk1234",
    "CNN(avg)_Bk1234",
    "CNN(concat)_Bk34",
    "CNN(avg)_Bk34",
    "CNN(concat)_Bk234",
    "CNN(avg)_Bk234",
    "RNN(concat)_Bk34",
    "RNN(avg)_Bk34",
    "RNN(LSTM)_Bk2",
    "RNN(LSTM)_Bk1",
    "RNN_Bk4",
    "RNN_Bk2",
    "RNN_Bk3",
    "Trans_Bk4",
    "Trans_Bk1",
    "Trans_Bk2",
    "Trans_Bk3",
    "Att(concat)_Bk34",
    "Att(concat)_Bk12",
    "Att_Bk4",
    "Att_Bk3",
    "Att_Bk2",
)


class ArchitectureRegistry:
    """Central registry of all available architectures."""

    _instance: Optional["ArchitectureRegistry"] = None
    _specs: Dict[str, ArchitectureSpec]

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._specs = {}
            cls._instance._logger = get_logger(cls.__name__)
            cls._instance._register_built_in_architectures()
        return cls._instance

    @classmethod
    def get_instance(cls) -> "ArchitectureRegistry":
        """Get the singleton instance."""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    def register(self, spec: ArchitectureSpec) -> None:
        """Register a new architecture."""
        if spec.name in self._specs:
            self._logger.warn(f"Architecture '{spec.name}' is already registered and will be overwritten.")
        self._specs[spec.name] = spec

    def get(self, name: str) -> ArchitectureSpec:
        spec = self._specs.get(name)
        if spec is None:
            raise ResourceNotFoundError(f"Unknown architecture '{name}'", path=name)
        return spec

    def names(self) -> List[str]:
        return list(self._specs)

    def list(self, backbone: Optional[BackboneSpec] = None) -> List[ArchitectureSpec]:
        """All specs in table order, optionally moved onto another backbone."""
        specs = list(self._specs.values())
        if backbone is not None:
            specs = [spec.with_backbone(backbone) for spec in specs]
        return specs

    def _register_built_in_architectures(self) -> None:
        from ...services.model_zoo.arch_names import parse_arch_name

        for name in TABLE_ARCHITECTURES:
            self.register(parse_arch_name(name))


def registry_list() -> List[ArchitectureSpec]:
    """The architecture table as specs."""
    return ArchitectureRegistry.get_instance().list()

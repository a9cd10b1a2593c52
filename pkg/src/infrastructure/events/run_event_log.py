"""Append-only JSONL log of grid-cell transitions."""

import json
import os
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from ...domain.experiment_types import CellStatus
from ..logger import get_logger


@dataclass
class RunEvent:
    """One cell transition."""
    id: str
    type: str
    cell_id: str
    timestamp: str
    data: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunEventQuery:
    """Run event query."""
    type: Optional[str] = None
    cell_id: Optional[str] = None
    limit: Optional[int] = None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunEventLog:
    """Append-only run log; one JSON object per line."""

    def __init__(self, path: os.PathLike):
        self._logger = get_logger(self.__class__.__name__)
        self._path = Path(path)

    @property
    def path(self) -> Path:
        return self._path

    def record(self, event_type: CellStatus, cell_id: str, **data: Any) -> RunEvent:
        """Append a transition and return it."""
        event = RunEvent(
            id=uuid.uuid4().hex,
            type=CellStatus(event_type).value,
            cell_id=cell_id,
            timestamp=_now(),
            data=data,
        )
        self.append(event)
        return event

    def append(self, event: RunEvent) -> None:
        self._path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(asdict(event), sort_keys=True, default=str)
        # Single write per line; O_APPEND keeps concurrent writers line-atomic.
        fd = os.open(self._path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        try:
            os.write(fd, (line + "\n").encode("utf-8"))
        finally:
            os.close(fd)
        self._logger.debug(f"Recorded {event.type} for {event.cell_id}")

    def read_all(self) -> List[RunEvent]:
        if not self._path.exists():
            return []
        events = []
        with open(self._path, "r", encoding="utf-8") as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(RunEvent(**json.loads(line)))
                except (json.JSONDecodeError, TypeError) as error:
                    self._logger.warn(f"Skipping malformed event line {number}: {error}")
        return events

    def query(self, query: Optional[RunEventQuery] = None) -> List[RunEvent]:
        query = query or RunEventQuery()
        events = [
            e for e in self.read_all()
            if (query.type is None or e.type == query.type)
            and (query.cell_id is None or e.cell_id == query.cell_id)
        ]
        if query.limit is not None:
            events = events[-query.limit:]
        return events

    def latest_status(self) -> Dict[str, str]:
        """Last recorded status per cell."""
        status: Dict[str, str] = {}
        for event in self.read_all():
            status[event.cell_id] = event.type
        return status

    def failures(self) -> List[RunEvent]:
        """Failure events of cells whose latest status is still failed."""
        latest = self.latest_status()
        return [
            e for e in self.read_all()
            if e.type == CellStatus.FAILED.value and latest.get(e.cell_id) == CellStatus.FAILED.value
        ]

"""Note events, scores and their JSON form."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidInputError


@dataclass(frozen=True, order=True)
class NoteEvent:
    onset_seconds: float
    duration_seconds: float
    pitch: int
    velocity: int
    instrument: str = ""

    def __post_init__(self):
        if not self.onset_seconds >= 0:
            raise InvalidInputError(f"onset must be >= 0, got {self.onset_seconds}")
        if not self.duration_seconds > 0:
            raise InvalidInputError(f"duration must be > 0, got {self.duration_seconds}")
        if not 0 <= self.pitch <= 127:
            raise InvalidInputError(f"pitch {self.pitch} outside [0, 127]")
        if not 0 <= self.velocity <= 127:
            raise InvalidInputError(f"velocity {self.velocity} outside [0, 127]")

    @property
    def end_seconds(self) -> float:
        return self.onset_seconds + self.duration_seconds


@dataclass(frozen=True)
class Score:
    """Notes ordered by onset. ``meta`` records parsing or editing notes."""

    events: tuple
    total_duration: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ev = tuple(sorted(self.events, key=lambda e: (e.onset_seconds, e.pitch, e.velocity,
                                                      e.duration_seconds, e.instrument)))
        object.__setattr__(self, "events", ev)
        if self.total_duration is None:
            end = max((e.end_seconds for e in ev), default=0.0)
            object.__setattr__(self, "total_duration", end)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def onsets(self) -> np.ndarray:
        """Distinct onset times (simultaneous notes count once)."""
        return np.unique(np.array([e.onset_seconds for e in self.events], dtype=np.float64))

    def pitches(self) -> set:
        return {e.pitch for e in self.events}

    def with_events(self, events, **meta) -> "Score":
        return Score(tuple(events), self.total_duration, dict(self.meta, **meta))

    def to_json(self) -> str:
        doc = {"total_duration": self.total_duration,
               "events": [asdict(e) for e in self.events]}
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Score":
        doc = json.loads(text)
        if isinstance(doc, list):
            doc = {"events": doc}
        events = tuple(NoteEvent(**e) for e in doc["events"])
        return cls(events, doc.get("total_duration"))

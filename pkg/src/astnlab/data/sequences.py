from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

TrialKey = tuple[int, int]


def label_windows(frame_labels, sample_rate: int) -> np.ndarray:
    """Per-second labels: a window is positive iff any of its frames is.

    The frame count must already be a whole number of seconds.
    """
    frame_labels = np.asarray(frame_labels)
    if sample_rate < 1:
        raise ValueError(f"sample rate must be >= 1, got {sample_rate}")
    if frame_labels.ndim != 1 or frame_labels.size % sample_rate:
        raise ValueError(
            f"{frame_labels.size} frame labels is not a multiple of the sample rate {sample_rate}; truncate first"
        )
    return (frame_labels.reshape(-1, sample_rate) != 0).any(axis=1).astype(np.uint8)


def normalize_levels(raw, levels: int) -> np.ndarray:
    """Map discrete force levels 0..levels-1 onto [0, 1]."""
    if levels < 2:
        raise ValueError("need at least two pressure levels")
    raw = np.asarray(raw, dtype=np.float64)
    if raw.min(initial=0) < 0 or raw.max(initial=0) > levels - 1:
        raise ValueError(f"raw pressure outside 0..{levels - 1}")
    return (raw / (levels - 1)).astype(np.float32)


@dataclass(eq=False)
class PressureSequence:
    """One trial: ``T * P`` pressure frames of ``W x H`` with per-second labels."""

    subject_id: int
    trial_id: int
    frames: np.ndarray
    sample_rate: int
    labels: np.ndarray
    frame_labels: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.frame_labels is not None:
            self.frame_labels = np.asarray(self.frame_labels, dtype=np.uint8)
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be (T*P, W, H), got shape {self.frames.shape}")
        n = self.frames.shape[0]
        if n == 0 or n % self.sample_rate:
            raise ValueError(f"trial ({self.subject_id}, {self.trial_id}): {n} frames is not a whole number of seconds")
        if not np.all(np.isfinite(self.frames)) or self.frames.min() < 0 or self.frames.max() > 1:
            raise ValueError(f"trial ({self.subject_id}, {self.trial_id}): pressure values must lie in [0, 1]")
        if self.labels.shape != (n // self.sample_rate,):
            raise ValueError(
                f"trial ({self.subject_id}, {self.trial_id}): {self.labels.size} labels for {n // self.sample_rate} seconds"
            )
        if self.frame_labels is not None and self.frame_labels.shape != (n,):
            raise ValueError("frame_labels must have one entry per frame")

    @classmethod
    def from_frames(cls, subject_id: int, trial_id: int, frames, sample_rate: int, frame_labels,
                    levels: int | None = None) -> "PressureSequence":
        """Build a trial from raw frames, dropping the trailing partial second.

        With ``levels`` given, frames are raw force levels and get normalized.
        """
        frames = np.asarray(frames)
        frame_labels = np.asarray(frame_labels, dtype=np.uint8)
        if frames.shape[0] != frame_labels.shape[0]:
            raise ValueError("need exactly one label per frame")
        keep = (frames.shape[0] // sample_rate) * sample_rate
        frames, frame_labels = frames[:keep], frame_labels[:keep]
        if levels is not None:
            frames = normalize_levels(frames, levels)
        return cls(subject_id, trial_id, frames, sample_rate, label_windows(frame_labels, sample_rate), frame_labels)

    @property
    def key(self) -> TrialKey:
        return (self.subject_id, self.trial_id)

    @property
    def n_seconds(self) -> int:
        return self.frames.shape[0] // self.sample_rate

    @property
    def grid(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def windows(self) -> np.ndarray:
        """View of the frames as ``(T, P, W, H)``."""
        return self.frames.reshape(self.n_seconds, self.sample_rate, *self.grid)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PressureSequence):
            return NotImplemented
        same_fl = (self.frame_labels is None) == (other.frame_labels is None) and (
            self.frame_labels is None or np.array_equal(self.frame_labels, other.frame_labels)
        )
        return (
            self.key == other.key
            and self.sample_rate == other.sample_rate
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
            and np.array_equal(self.labels, other.labels)
            and same_fl
        )


@dataclass(eq=False)
class Cohort:
    """Trials of several subjects sharing one grid geometry and sample rate."""

    sequences: list[PressureSequence] = field(default_factory=list)

    def __post_init__(self):
        keys = [s.key for s in self.sequences]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (subject, trial) pairs in cohort")
        if self.sequences:
            first = self.sequences[0]
            for s in self.sequences[1:]:
                if s.grid != first.grid or s.sample_rate != first.sample_rate:
                    raise ValueError(f"trial {s.key} geometry differs from {first.key}")
        self._index = {s.key: s for s in self.sequences}

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[PressureSequence]:
        return iter(self.sequences)

    def __getitem__(self, key: TrialKey) -> PressureSequence:
        return self._index[tuple(key)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cohort):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self.sequences, other.sequences))

    @property
    def keys(self) -> list[TrialKey]:
        return [s.key for s in self.sequences]

    @property
    def subjects(self) -> list[int]:
        return sorted({s.subject_id for s in self.sequences})

    def trials_of(self, subject_id: int) -> list[int]:
        return sorted(s.trial_id for s in self.sequences if s.subject_id == subject_id)

    @property
    def sample_rate(self) -> int:
        return self.sequences[0].sample_rate

    @property
    def grid(self) -> tuple[int, int]:
        return self.sequences[0].grid

    def select(self, keys: Iterable[TrialKey]) -> list[PressureSequence]:
        return [self[k] for k in sorted(keys)]

    def event_rate(self) -> float:
        labels = np.concatenate([s.labels for s in self.sequences])
        return float(labels.mean())

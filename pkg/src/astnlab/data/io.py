"""Cohort container and CSV ingest.

Cohort file layout (little-endian)::

    b"FPSQ1"          magic
    uint64            manifest length in bytes
    manifest          UTF-8 JSON: width, height, sample_rate and one entry per
                      trial (subject, trial, n_frames, labels, frame_labels)
    payload           float32 frames, trial by trial in (t, p, w, h) order

CSV ingest reads ``<root>/trial_<m>_<n>/frame_<k>.csv`` (one W x H grid of raw
force levels per frame, k counting from 0) plus ``frame_labels.csv`` holding
one 0/1 label per frame.
"""

from __future__ import annotations

import json
import os
import re
import struct
from pathlib import Path

import numpy as np

from .sequences import Cohort, PressureSequence

MAGIC = b"FPSQ1"


class CohortFileError(ValueError):
    pass


def save_cohort(cohort: Cohort, path: str | os.PathLike) -> None:
    if len(cohort) == 0:
        raise ValueError("refusing to write an empty cohort")
    w, h = cohort.grid
    trials = []
    for s in cohort:
        trials.append({
            "subject": s.subject_id,
            "trial": s.trial_id,
            "n_frames": int(s.frames.shape[0]),
            "labels": s.labels.tolist(),
            "frame_labels": None if s.frame_labels is None else s.frame_labels.tolist(),
        })
    manifest = json.dumps(
        {"format": "FPSQ1", "width": w, "height": h, "sample_rate": cohort.sample_rate, "trials": trials},
        separators=(",", ":"),
    ).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for s in cohort:
            fh.write(s.frames.astype("<f4", copy=False).tobytes())
    os.replace(tmp, path)


def load_cohort(path: str | os.PathLike) -> Cohort:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise CohortFileError(f"{path}: not a cohort file (bad magic {data[:5]!r})")
    if len(data) < 13:
        raise CohortFileError(f"{path}: truncated before manifest length")
    (mlen,) = struct.unpack_from("<Q", data, 5)
    start = 13 + mlen
    if len(data) < start:
        raise CohortFileError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[13:start].decode("utf-8"))
        w, h, p = int(manifest["width"]), int(manifest["height"]), int(manifest["sample_rate"])
        trials = manifest["trials"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CohortFileError(f"{path}: corrupt manifest ({exc})") from exc

    expected = sum(int(t["n_frames"]) for t in trials) * w * h * 4
    if len(data) - start != expected:
        raise CohortFileError(
            f"{path}: payload has {len(data) - start} bytes but manifest dims need {expected}"
        )
    payload = np.frombuffer(data, dtype="<f4", offset=start)
    sequences = []
    offset = 0
    for t in trials:
        n = int(t["n_frames"])
        frames = payload[offset : offset + n * w * h].reshape(n, w, h).astype(np.float32)
        offset += n * w * h
        try:
            sequences.append(PressureSequence(int(t["subject"]), int(t["trial"]), frames, p,
                                              np.asarray(t["labels"]), t.get("frame_labels")))
        except ValueError as exc:
            raise CohortFileError(f"{path}: {exc}") from exc
    return Cohort(sequences)


_TRIAL_DIR = re.compile(r"^trial_(\d+)_(\d+)$")
_FRAME_FILE = re.compile(r"^frame_(\d+)\.csv$")


def ingest_csv_dir(root: str | os.PathLike, sample_rate: int, levels: int = 10) -> Cohort:
    """Read externally produced trials from per-frame CSV grids of raw levels."""
    root = Path(root)
    sequences = []
    for trial_dir in sorted(root.iterdir()):
        match = _TRIAL_DIR.match(trial_dir.name)
        if not trial_dir.is_dir() or not match:
            continue
        m, n = int(match.group(1)), int(match.group(2))
        frame_files = sorted(
            (int(_FRAME_FILE.match(f.name).group(1)), f) for f in trial_dir.iterdir() if _FRAME_FILE.match(f.name)
        )
        if not frame_files:
            raise CohortFileError(f"{trial_dir}: no frame_<k>.csv files")
        if [k for k, _ in frame_files] != list(range(len(frame_files))):
            raise CohortFileError(f"{trial_dir}: frame numbering must run 0..{len(frame_files) - 1} without gaps")
        frames = np.stack([np.loadtxt(f, delimiter=",", ndmin=2) for _, f in frame_files])
        label_file = trial_dir / "frame_labels.csv"
        if not label_file.exists():
            raise CohortFileError(f"{trial_dir}: missing frame_labels.csv")
        frame_labels = np.loadtxt(label_file, delimiter=",", ndmin=1).astype(np.uint8).reshape(-1)
        sequences.append(PressureSequence.from_frames(m, n, frames, sample_rate, frame_labels, levels=levels))
    if not sequences:
        raise CohortFileError(f"{root}: no trial_<m>_<n> directories found")
    return Cohort(sequences)

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sequences import Cohort, TrialKey

SUBJECT_LEVEL = "subject"
TRIAL_LEVEL = "trial"
MODES = (SUBJECT_LEVEL, TRIAL_LEVEL)


@dataclass(frozen=True)
class SplitPlan:
    mode: str
    train_ids: tuple[TrialKey, ...]
    val_ids: tuple[TrialKey, ...]
    test_ids: tuple[TrialKey, ...]
    seed: int

    def subjects(self, part: str) -> set[int]:
        return {m for m, _ in getattr(self, f"{part}_ids")}

    def validate(self, cohort: Cohort) -> None:
        parts = [set(self.train_ids), set(self.val_ids), set(self.test_ids)]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise ValueError("split partitions overlap")
        if set().union(*parts) != set(cohort.keys):
            raise ValueError("split does not cover exactly the cohort's trials")
        if self.mode == SUBJECT_LEVEL and (self.subjects("train") | self.subjects("val")) & self.subjects("test"):
            raise ValueError("subject-level split leaks a subject across the train/test boundary")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "train": [list(k) for k in self.train_ids],
            "val": [list(k) for k in self.val_ids],
            "test": [list(k) for k in self.test_ids],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SplitPlan":
        conv = lambda xs: tuple(sorted((int(m), int(n)) for m, n in xs))
        return cls(d["mode"], conv(d["train"]), conv(d["val"]), conv(d["test"]), int(d["seed"]))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def make_split(cohort: Cohort, mode: str = SUBJECT_LEVEL, ratios: Sequence[float] = (0.5, 0.5),
               seed: int = 0, val_fraction: float = 0.2) -> SplitPlan:
    """Draw a train/val/test partition.

    ``ratios`` is (train, test) and must sum to 1. Subject-level mode assigns
    whole subjects; trial-level mode assigns trials regardless of subject. In
    both modes the validation set is ``val_fraction`` of the training trials.
    """
    if mode not in MODES:
        raise ValueError(f"unknown split mode {mode!r}; expected one of {MODES}")
    if len(cohort) == 0:
        raise ValueError("cannot split an empty cohort")
    if len(ratios) != 2 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
        raise ValueError(f"ratios must be two positive fractions summing to 1, got {ratios}")
    if not 0 <= val_fraction < 1:
        raise ValueError("val_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)

    if mode == SUBJECT_LEVEL:
        subjects = np.array(cohort.subjects)
        if len(subjects) < 3:
            raise ValueError(f"subject-level split needs at least 3 subjects, cohort has {len(subjects)}")
        order = rng.permutation(subjects)
        n_train = _round_half_up(len(order) * ratios[0])
        n_train = min(max(n_train, 1), len(order) - 1)
        train_subjects = set(order[:n_train].tolist())
        train_pool = [k for k in cohort.keys if k[0] in train_subjects]
        test = [k for k in cohort.keys if k[0] not in train_subjects]
    else:
        keys = sorted(cohort.keys)
        if len(keys) < 2:
            raise ValueError("trial-level split needs at least 2 trials")
        order = rng.permutation(len(keys))
        n_train = min(max(_round_half_up(len(keys) * ratios[0]), 1), len(keys) - 1)
        train_pool = [keys[i] for i in order[:n_train]]
        test = [keys[i] for i in order[n_train:]]

    train_pool = sorted(train_pool)
    n_val = _round_half_up(len(train_pool) * val_fraction) if val_fraction > 0 else 0
    if n_val >= len(train_pool):
        raise ValueError("validation fraction leaves no training trials")
    pick = set(rng.choice(len(train_pool), size=n_val, replace=False).tolist()) if n_val else set()
    val = [k for i, k in enumerate(train_pool) if i in pick]
    train = [k for i, k in enumerate(train_pool) if i not in pick]
    plan = SplitPlan(mode, tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)), seed)
    plan.validate(cohort)
    return plan

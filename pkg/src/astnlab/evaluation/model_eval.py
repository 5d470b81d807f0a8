"""Evaluation of trained parameters on labeled trials."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..autograd import Tensor, no_grad
from ..data import Cohort, PressureSequence, TrialKey
from ..model import AstnConfig, AstnParams, classify, discriminate, generate, pair_features
from ..model.network import RepresentationBatch
from .metrics import MetricReport, binary_report, roc_auc
from .pca import Projection, pca_project

# trials per forward pass; bounds peak memory during evaluation
EVAL_CHUNK = 8


def represent(trials: Sequence[PressureSequence], params: AstnParams, config: AstnConfig) -> RepresentationBatch:
    """Representations of ``trials`` without recording a graph."""
    batches = []
    with no_grad():
        for i in range(0, len(trials), EVAL_CHUNK):
            batches.append(generate([t.frames for t in trials[i : i + EVAL_CHUNK]], params, config))
    if len(batches) == 1:
        return batches[0]
    cat = lambda name: Tensor(np.concatenate([getattr(b, name).values for b in batches], axis=0))
    return RepresentationBatch(cat("s"), cat("g_dot"), cat("g_ddot"), [n for b in batches for n in b.lengths])


def predict(trials: Sequence[PressureSequence], params: AstnParams, config: AstnConfig) -> list[np.ndarray]:
    """Per-second FoG probabilities for each trial."""
    if not trials:
        raise ValueError("no trials to predict")
    batch = represent(trials, params, config)
    with no_grad():
        scores = classify(batch.g_ddot, params, config).values.astype(np.float64)
    return np.split(scores, np.cumsum(batch.lengths)[:-1])


def evaluate_model(params: AstnParams, config: AstnConfig, trials: Sequence[PressureSequence],
                   macro: bool = False) -> MetricReport:
    """Table-I metrics over every second of ``trials``.

    Seconds are pooled across trials by default. With ``macro`` the AUC is the
    mean of per-trial AUCs (trials with a single class are skipped) while the
    operating-point metrics still come from the pooled scores.
    """
    if not trials:
        raise ValueError("evaluate_model needs at least one trial")
    scores = predict(trials, params, config)
    labels = [t.labels for t in trials]
    report = binary_report(np.concatenate(scores), np.concatenate(labels))
    if not macro:
        return report
    aucs = [roc_auc(s, y).auc for s, y in zip(scores, labels) if 0 < y.sum() < y.size]
    if not aucs:
        raise ValueError("no trial contains both classes; macro AUC undefined")
    return MetricReport(**{**report.__dict__, "auc": float(np.mean(aucs))})


@dataclass(frozen=True)
class TrialPair:
    a: TrialKey
    b: TrialKey

    @property
    def different(self) -> bool:
        return self.a[0] != self.b[0]


def sample_pairs(anchor_keys: Sequence[TrialKey], partner_keys: Sequence[TrialKey], n_pairs: int = 200,
                 seed: int = 0) -> list[TrialPair]:
    """Balanced same/different-subject pairs, each anchored on one of ``anchor_keys``.

    Partners come from ``partner_keys`` (anchors included). Half the budget is
    same-subject pairs, half different-subject.
    """
    anchors = sorted(set(anchor_keys))
    partners = sorted(set(partner_keys) | set(anchors))
    if n_pairs < 2:
        raise ValueError("need a budget of at least two pairs")
    same_ok = [a for a in anchors if any(p[0] == a[0] and p != a for p in partners)]
    diff_ok = [a for a in anchors if any(p[0] != a[0] for p in partners)]
    if not same_ok:
        raise ValueError("cannot form a same-subject pair: no anchor subject has a second trial")
    if not diff_ok:
        raise ValueError("cannot form a different-subject pair: only one subject available")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_pairs):
        want_same = i < n_pairs // 2
        pool = same_ok if want_same else diff_ok
        a = pool[rng.integers(len(pool))]
        cands = [p for p in partners if (p[0] == a[0]) == want_same and p != a]
        b = cands[rng.integers(len(cands))]
        pairs.append(TrialPair(a, b))
    return pairs


def pair_scores(params: AstnParams, config: AstnConfig, cohort: Cohort, pairs: Sequence[TrialPair]) -> np.ndarray:
    """Discriminator probability of "different subjects" for each pair."""
    keys = sorted({k for p in pairs for k in (p.a, p.b)})
    index = {k: i for i, k in enumerate(keys)}
    batch = represent(cohort.select(keys), params, config)
    with no_grad():
        feats = pair_features(batch, [(index[p.a], index[p.b]) for p in pairs], config)
        d = discriminate(feats, params).values.astype(np.float64)
    return d if config.same_subject_target == 0 else 1.0 - d


def discriminator_auc(params: AstnParams, config: AstnConfig, cohort: Cohort, pairs: Sequence[TrialPair]) -> float:
    """AUC of D separating different-subject (positive) from same-subject pairs."""
    labels = np.array([p.different for p in pairs])
    return roc_auc(pair_scores(params, config, cohort, pairs), labels).auc


def level_projections(params: AstnParams, config: AstnConfig, trials: Sequence[PressureSequence],
                      k: int = 2) -> dict[str, tuple[Projection, np.ndarray, np.ndarray]]:
    """PCA of each representation level, with per-window true and predicted labels.

    Spatial window stacks are flattened to one vector per second. Predicted
    labels use the Youden threshold on these same trials.
    """
    batch = represent(trials, params, config)
    with no_grad():
        scores = classify(batch.g_ddot, params, config).values.astype(np.float64)
    truth = np.concatenate([t.labels for t in trials]).astype(int)
    if 0 < truth.sum() < truth.size:
        threshold = binary_report(scores, truth).threshold
    else:
        threshold = 0.5
    pred = (scores >= threshold).astype(int)
    levels = {
        "spatial": batch.s.values.reshape(batch.s.shape[0], -1),
        "intrinsic": batch.g_dot.values,
        "dynamic": batch.g_ddot.values,
    }
    return {name: (pca_project(v.astype(np.float64), k), truth, pred) for name, v in levels.items()}


def projection_rows(projection: Projection, truth: np.ndarray, pred: np.ndarray) -> list[tuple]:
    """``(pc1, pc2, true_label, pred_label)`` rows."""
    c = projection.coords
    return [(float(c[i, 0]), float(c[i, 1]) if c.shape[1] > 1 else 0.0, int(truth[i]), int(pred[i]))
            for i in range(c.shape[0])]

"""Pairwise subject discriminator D and the adversarial losses."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .config import LEVELS, VARIANTS, AstnConfig
from .network import RepresentationBatch, Representations
from .params import AstnParams


def _pair_difference(a: Tensor, b: Tensor, variant: str) -> Tensor:
    if variant == "second_order":
        return ag.square(a - b)
    if variant == "first_order":
        return a - b
    if variant == "abs_first_order":
        return ag.abs(a - b)
    if variant == "concatenated":
        return ag.concat([a, b], axis=-1)
    raise ValueError(f"unknown discriminator variant {variant!r}; choose from {VARIANTS}")


def discriminator_features(rep_a: Representations, rep_b: Representations, variant: str = "second_order",
                           levels: str = "multi_level") -> Tensor:
    """Pair feature vector: per-window differences, mean-pooled over aligned time.

    Both trials are truncated to the shorter length. ``multi_level`` uses the
    spatial, intrinsic and dynamic levels; ``dynamic_only`` just the last.
    """
    if levels not in LEVELS:
        raise ValueError(f"unknown discriminator levels {levels!r}; choose from {LEVELS}")
    t = min(rep_a.length, rep_b.length)
    pairs = [(rep_a.g_ddot, rep_b.g_ddot)]
    if levels == "multi_level":
        pairs = [(rep_a.s, rep_b.s), (rep_a.g_dot, rep_b.g_dot)] + pairs
    feats = []
    for a, b in pairs:
        if a.shape[1:] != b.shape[1:]:
            raise ValueError(f"representation dims differ: {a.shape[1:]} vs {b.shape[1:]}")
        diff = _pair_difference(a[:t], b[:t], variant)
        feats.append(diff.mean(axis=0).reshape(-1))
    return ag.concat(feats, axis=0)


def pair_features(batch: RepresentationBatch, pairs: Sequence[tuple[int, int]], config: AstnConfig) -> Tensor:
    """Stack features for index pairs into ``batch``: ``len(pairs) x feature_dim``."""
    trials = {}
    rows = []
    for i, j in pairs:
        for k in (i, j):
            if k not in trials:
                trials[k] = batch.trial(k)
        rows.append(discriminator_features(trials[i], trials[j], config.discriminator_variant,
                                           config.discriminator_levels))
    return ag.stack(rows, axis=0)


def discriminate(features: Tensor, params: AstnParams) -> Tensor:
    """One dense layer and a sigmoid; 1 means "different subjects" under the default coding."""
    x = ag.as_tensor(features)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    w = params["discriminator.weight"]
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"discriminator expects {w.shape[0]} features, got {x.shape[1]}")
    out = ag.sigmoid(x @ w + params["discriminator.bias"]).reshape(-1)
    return out.reshape(()) if single else out


def _as_vector(d) -> Tensor:
    d = ag.as_tensor(d)
    return d.reshape(-1) if d.ndim != 1 else d


def loss_jd(d_same, d_diff, same_target: int = 0) -> Tensor:
    """Discriminator BCE, summed over pairs: same-subject pairs toward
    ``same_target``, different-subject pairs toward the other label."""
    d_same, d_diff = _as_vector(d_same), _as_vector(d_diff)
    if d_same.size == 0 and d_diff.size == 0:
        raise ValueError("J_D needs at least one pair")
    preds = ag.concat([d_same, d_diff], axis=0)
    targets = np.r_[np.full(d_same.size, same_target), np.full(d_diff.size, 1 - same_target)]
    return ag.bce(preds, targets)


def loss_ja(d_same, same_target: int = 0) -> Tensor:
    """Discriminator loss on same-subject pairs; the generator ascends it."""
    return ag.bce(_as_vector(d_same), np.full(_as_vector(d_same).size, same_target))


ADVERSARIAL_OBJECTIVES = ("ascent", "confusion")


def generator_adversarial_loss(d_same, scale: float, objective: str = "ascent", same_target: int = 0) -> Tensor:
    """What G minimizes in the adversarial phase.

    ``ascent`` is ``-scale * J_A``: plain gradient ascent on the
    discriminator's loss. It is unbounded, since G can always make the two
    trials look more different. ``confusion`` is ``scale * BCE(d, 0.5)``,
    which is smallest when D outputs 0.5, i.e. at the equilibrium.
    """
    d = _as_vector(d_same)
    if objective == "ascent":
        return loss_ja(d, same_target) * (-float(scale))
    if objective == "confusion":
        return ag.bce(d, np.full(d.size, 0.5)) * float(scale)
    raise ValueError(f"unknown adversarial objective {objective!r}; choose from {ADVERSARIAL_OBJECTIVES}")

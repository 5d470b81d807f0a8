"""Adversarial training loop: one batch of four trials per iteration.

Each iteration runs three phases on the same batch:

1. J_C over all four trials updates G and C.
2. With G fixed, representations are recomputed and J_D over one
   different-subject pair and one same-subject pair updates D.
3. With D fixed, G is updated through its own Adam state to confuse D on the
   same-subject pair (``confusion``, the default) or to ascend J_A there
   (``ascent``), scaled by lambda.

Phases 2 and 3 are skipped entirely when the discriminator is disabled.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..autograd import Adam, Tensor, load_tensors, no_grad, save_tensors
from ..data import Cohort, PressureSequence, SplitPlan, TrialKey
from ..evaluation import discriminator_auc, evaluate_model, sample_pairs
from ..model import (
    ADVERSARIAL_OBJECTIVES,
    AstnConfig,
    AstnParams,
    classify,
    discriminate,
    generate,
    generator_adversarial_loss,
    loss_ja,
    loss_jc,
    loss_jd,
    pair_features,
)
from ..model.network import RepresentationBatch

STATE_FILE = "train_state.astn"


@dataclass
class TrainConfig:
    max_iterations: int = 2000
    patience: int = 10
    adversarial_scale: float = 1.0
    adversarial_objective: str = "confusion"
    seed: int = 0
    eval_every: int = 25
    use_discriminator: bool = True
    learning_rate: float = 1e-3
    disc_pairs: int = 200
    # check the freeze contract after every phase
    debug: bool = False

    def validate(self) -> None:
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.patience <= 0:
            raise ValueError("patience must be positive")
        if not self.adversarial_scale >= 0:
            raise ValueError("adversarial_scale must be >= 0")
        if self.adversarial_objective not in ADVERSARIAL_OBJECTIVES:
            raise ValueError(f"adversarial_objective must be one of {ADVERSARIAL_OBJECTIVES}")
        if self.eval_every <= 0:
            raise ValueError("eval_every must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.disc_pairs < 2:
            raise ValueError("disc_pairs must be at least 2")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class IterationTrace:
    iteration: int
    j_c: float
    j_d: float = math.nan
    j_a: float = math.nan
    val_auc: float = math.nan
    disc_auc: float = math.nan


TRACE_COLUMNS = ("iteration", "j_c", "j_d", "j_a", "val_auc", "disc_auc")


class FreezeViolation(AssertionError):
    pass


@dataclass
class Optimizers:
    """Independent Adam states for G and C, for D, and for G's adversarial step."""

    gc: Adam
    d: Adam
    g_adv: Adam

    @classmethod
    def build(cls, params: AstnParams, lr: float = 1e-3, adversarial_scale: float = 1.0) -> "Optimizers":
        # Adam divides out any constant factor on the loss, so lambda would only
        # switch the adversarial step on or off; scaling its step size keeps
        # lambda meaningful, as it is under plain gradient descent
        return cls(
            Adam(params.partition("G") + params.partition("C"), lr=lr),
            Adam(params.partition("D"), lr=lr),
            Adam(params.partition("G"), lr=lr * adversarial_scale),
        )

    def items(self):
        return (("gc", self.gc), ("d", self.d), ("g_adv", self.g_adv))


def _by_subject(keys: Sequence[TrialKey]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for m, n in sorted(set(keys)):
        out.setdefault(m, []).append(n)
    return out


def check_trainable(keys: Sequence[TrialKey]) -> None:
    subjects = _by_subject(keys)
    if len(subjects) < 2:
        raise ValueError(f"training split has {len(subjects)} subject(s); a different-subject pair needs 2")
    if not any(len(v) >= 2 for v in subjects.values()):
        raise ValueError("no training subject has two trials; a same-subject pair is impossible")


def sample_batch(keys: Sequence[TrialKey], rng: np.random.Generator) -> tuple[TrialKey, TrialKey, TrialKey, TrialKey]:
    """Four trials: (m1, n1), (m2, n2) with m1 != m2, then (m3, n3), (m3, n4) with n3 != n4."""
    check_trainable(keys)
    subjects = _by_subject(keys)
    ids = sorted(subjects)
    m1, m2 = (ids[i] for i in rng.choice(len(ids), size=2, replace=False))
    n1 = subjects[m1][rng.integers(len(subjects[m1]))]
    n2 = subjects[m2][rng.integers(len(subjects[m2]))]
    multi = [m for m in ids if len(subjects[m]) >= 2]
    m3 = multi[rng.integers(len(multi))]
    n3, n4 = (subjects[m3][i] for i in rng.choice(len(subjects[m3]), size=2, replace=False))
    return (m1, n1), (m2, n2), (m3, n3), (m3, n4)


def _finite(value: Tensor, what: str, iteration: int) -> float:
    v = value.item()
    if not math.isfinite(v):
        raise FloatingPointError(f"{what} became non-finite ({v}) at iteration {iteration}")
    return v


def _detached(batch: RepresentationBatch) -> RepresentationBatch:
    return RepresentationBatch(batch.s.detach(), batch.g_dot.detach(), batch.g_ddot.detach(), batch.lengths)


def _expect_unchanged(params: AstnParams, before: dict[str, bytes], phase: str) -> None:
    for part, fp in before.items():
        if params.fingerprint(part) != fp:
            raise FreezeViolation(f"partition {part} changed during {phase}")


def train_iteration(trials: Sequence[PressureSequence], params: AstnParams, optimizers: Optimizers,
                    config: AstnConfig, adversarial_scale: float = 1.0, use_discriminator: bool = True,
                    iteration: int = 0, debug: bool = False, objective: str = "confusion") -> IterationTrace:
    """Run the three phases on one four-trial batch; returns the losses."""
    if len(trials) != 4:
        raise ValueError(f"a batch is exactly four trials, got {len(trials)}")
    frames = [t.frames for t in trials]

    # phase 1: J_C updates G and C
    params.set_trainable("G", "C")
    optimizers.gc.zero_grad()
    rep = generate(frames, params, config)
    jc = loss_jc(classify(rep.g_ddot, params, config), np.concatenate([t.labels for t in trials]), rep.lengths)
    trace = IterationTrace(iteration, _finite(jc, "J_C", iteration))
    jc.backward()
    optimizers.gc.step()
    del rep
    if not use_discriminator:
        return trace

    # phase 2: fresh representations from the updated G; J_D updates D only
    frozen = {p: params.fingerprint(p) for p in ("G", "C")} if debug else {}
    params.set_trainable("G")
    with no_grad():
        rep_diff = generate(frames[:2], params, config)
    # the same-subject pair keeps its graph for phase 3
    rep_same = generate(frames[2:], params, config)
    params.set_trainable("D")
    optimizers.d.zero_grad()
    d_diff = discriminate(pair_features(rep_diff, [(0, 1)], config), params)
    d_same = discriminate(pair_features(_detached(rep_same), [(0, 1)], config), params)
    jd = loss_jd(d_same, d_diff, config.same_subject_target)
    trace.j_d = _finite(jd, "J_D", iteration)
    jd.backward()
    optimizers.d.step()
    if debug:
        _expect_unchanged(params, frozen, "the discriminator phase")

    # phase 3: the adversarial objective on the same-subject pair updates G, D frozen
    frozen = {p: params.fingerprint(p) for p in ("C", "D")} if debug else {}
    params.set_trainable("G")
    optimizers.g_adv.zero_grad()
    d_same = discriminate(pair_features(rep_same, [(0, 1)], config), params)
    ja = loss_ja(d_same, config.same_subject_target)
    trace.j_a = _finite(ja, "J_A", iteration)
    generator_adversarial_loss(d_same, adversarial_scale, objective, config.same_subject_target).backward()
    optimizers.g_adv.step()
    if debug:
        _expect_unchanged(params, frozen, "the adversarial phase")
        if any(t.grad is not None for t in params.partition("D")):
            raise FreezeViolation("discriminator holds gradient buffers while frozen")
    return trace


@dataclass
class TrainResult:
    params: AstnParams           # best-validation parameters
    final_params: AstnParams
    trace: list[IterationTrace]
    best_iteration: int
    best_val_auc: float
    stopped_early: bool


@dataclass
class _LoopState:
    iteration: int = 0
    best_val_auc: float = -math.inf
    best_iteration: int = -1
    checks_since_best: int = 0
    stopped_early: bool = False


def _save_state(path: Path, params: AstnParams, best: AstnParams, optimizers: Optimizers,
                rng: np.random.Generator, trace: list[IterationTrace], loop: _LoopState, fingerprint: dict) -> None:
    arrays = {f"param.{k}": v for k, v in params.state_dict().items()}
    arrays.update({f"best.{k}": v for k, v in best.state_dict().items()})
    for prefix, opt in optimizers.items():
        arrays.update(opt.state_arrays(f"adam.{prefix}"))
    meta = {
        "fingerprint": fingerprint,
        "loop": asdict(loop),
        "steps": {prefix: opt.state.step_count for prefix, opt in optimizers.items()},
        "rng": rng.bit_generator.state,
        "trace": [[None if isinstance(v, float) and math.isnan(v) else v for v in asdict(t).values()]
                  for t in trace],
    }
    save_tensors(path, arrays, meta)


def _load_state(path: Path, params: AstnParams, best: AstnParams, optimizers: Optimizers,
                rng: np.random.Generator, fingerprint: dict) -> tuple[list[IterationTrace], _LoopState]:
    arrays, meta = load_tensors(path)
    if meta.get("fingerprint") != fingerprint:
        raise ValueError(f"{path} was written by a different experiment configuration")
    params.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("param.")})
    best.load_state_dict({k[5:]: v for k, v in arrays.items() if k.startswith("best.")})
    for prefix, opt in optimizers.items():
        opt.load_state_arrays(f"adam.{prefix}", arrays, meta["steps"][prefix])
    rng.bit_generator.state = meta["rng"]
    trace = [IterationTrace(*[math.nan if v is None else v for v in row]) for row in meta["trace"]]
    return trace, _LoopState(**meta["loop"])


def train(cohort: Cohort, split: SplitPlan, config: AstnConfig, train_config: TrainConfig,
          state_dir: str | os.PathLike | None = None, resume: bool = False,
          on_iteration: Callable[[IterationTrace], None] | None = None,
          init_params: AstnParams | None = None) -> TrainResult:
    """Train until ``max_iterations`` or until validation AUC stalls for ``patience`` checks.

    With ``state_dir`` the full loop state is written at every validation
    check; ``resume`` picks it up again and continues bit-identically.
    """
    train_config.validate()
    config.validate()
    split.validate(cohort)
    if not split.val_ids:
        raise ValueError("training needs a validation subset for model selection")
    train_keys = list(split.train_ids)
    check_trainable(train_keys)
    if cohort.grid != (config.width, config.height) or cohort.sample_rate != config.sample_rate:
        raise ValueError(
            f"cohort geometry {cohort.grid} @ {cohort.sample_rate} Hz does not match model "
            f"{(config.width, config.height)} @ {config.sample_rate} Hz"
        )
    val_trials = cohort.select(split.val_ids)

    params = init_params.copy() if init_params is not None else AstnParams.init(config, seed=train_config.seed)
    optimizers = Optimizers.build(params, train_config.learning_rate, train_config.adversarial_scale)
    rng = np.random.default_rng([train_config.seed, 7])
    pairs = None
    if train_config.use_discriminator:
        pairs = sample_pairs(split.val_ids, split.train_ids + split.val_ids, train_config.disc_pairs,
                             seed=train_config.seed)
    best = params.copy()
    trace: list[IterationTrace] = []
    loop = _LoopState()
    fingerprint = {"model": config.to_json(), "train": train_config.to_json(), "split": split.to_json()}
    state_path = Path(state_dir) / STATE_FILE if state_dir is not None else None
    if resume:
        if state_path is None or not state_path.exists():
            raise FileNotFoundError(f"nothing to resume: {state_path} does not exist")
        trace, loop = _load_state(state_path, params, best, optimizers, rng, fingerprint)

    while loop.iteration < train_config.max_iterations and not loop.stopped_early:
        keys = sample_batch(train_keys, rng)
        entry = train_iteration(cohort.select(keys), params, optimizers, config, train_config.adversarial_scale,
                                train_config.use_discriminator, loop.iteration, train_config.debug,
                                train_config.adversarial_objective)
        loop.iteration += 1
        if loop.iteration % train_config.eval_every == 0 or loop.iteration == train_config.max_iterations:
            entry.val_auc = evaluate_model(params, config, val_trials).auc
            if pairs is not None:
                entry.disc_auc = discriminator_auc(params, config, cohort, pairs)
            if entry.val_auc > loop.best_val_auc:
                loop.best_val_auc = entry.val_auc
                loop.best_iteration = entry.iteration
                loop.checks_since_best = 0
                best = params.copy()
            else:
                loop.checks_since_best += 1
                loop.stopped_early = loop.checks_since_best >= train_config.patience
        trace.append(entry)
        if on_iteration is not None:
            on_iteration(entry)
        if state_path is not None and not math.isnan(entry.val_auc):
            _save_state(state_path, params, best, optimizers, rng, trace, loop, fingerprint)

    params.set_trainable()
    best.set_trainable()
    return TrainResult(best, params, trace, loop.best_iteration, loop.best_val_auc, loop.stopped_early)


def write_trace_csv(path: str | os.PathLike, trace: Sequence[IterationTrace]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t in trace:
            w.writerow([t.iteration] + [("" if math.isnan(v) else repr(float(v)))
                                        for v in (t.j_c, t.j_d, t.j_a, t.val_auc, t.disc_auc)])


def read_trace_csv(path: str | os.PathLike) -> list[IterationTrace]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [IterationTrace(int(r["iteration"]), *[float(r[c]) if r[c] else math.nan for c in TRACE_COLUMNS[1:]])
            for r in rows]

"""Experiment matrices: (variant, seed) cells, their artifacts, and summaries."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import MODES, Cohort, SplitPlan, SynthConfig, generate_cohort, load_cohort, make_split
from .evaluation import MetricReport, evaluate_model, level_projections, projection_rows, roc_auc
from .evaluation.model_eval import predict
from .model import LEVELS, VARIANTS, AstnConfig, save_model
from .training import IterationTrace, TrainConfig, train, write_trace_csv

SUMMARY_METRICS = ("auc", "youden_j", "sensitivity", "specificity", "lr_positive", "lr_negative", "accuracy")


def _strict(cls, d: dict, what: str):
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown {what} fields: {sorted(unknown)}")
    return cls(**d)


@dataclass
class Variant:
    """One row of the model matrix."""

    name: str
    split_mode: str = "subject"
    bidirectional: bool = False
    use_discriminator: bool = False
    adversarial_scale: float = 1.0
    discriminator_variant: str = "second_order"
    discriminator_levels: str = "multi_level"

    def validate(self) -> None:
        if not self.name or "/" in self.name:
            raise ValueError(f"variant name {self.name!r} must be non-empty and contain no '/'")
        if self.split_mode not in MODES:
            raise ValueError(f"variant {self.name}: split_mode must be one of {MODES}")
        if self.discriminator_variant not in VARIANTS:
            raise ValueError(f"variant {self.name}: discriminator_variant must be one of {VARIANTS}")
        if self.discriminator_levels not in LEVELS:
            raise ValueError(f"variant {self.name}: discriminator_levels must be one of {LEVELS}")
        if not self.adversarial_scale >= 0:
            raise ValueError(f"variant {self.name}: adversarial_scale must be >= 0")


def table_variants() -> list[Variant]:
    """Forward and bidirectional, each trial-level, subject-level, and subject-level with D."""
    rows = []
    for bi, tag in ((False, "fwd"), (True, "bidir")):
        rows += [
            Variant(f"{tag}-trial", "trial", bi),
            Variant(f"{tag}-subject", "subject", bi),
            Variant(f"{tag}-subject-disc", "subject", bi, use_discriminator=True),
        ]
    return rows


@dataclass
class ExperimentConfig:
    out_dir: str = "runs"
    # existing cohort file; when empty the cohort is generated from ``synth``
    cohort_path: str = ""
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: AstnConfig = field(default_factory=AstnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    variants: list[Variant] = field(default_factory=table_variants)
    split_ratios: tuple[float, float] = (0.5, 0.5)
    val_fraction: float = 0.2

    def validate(self, need_cohort: bool = False) -> None:
        self.synth.validate()
        self.model.validate()
        self.train.validate()
        if not self.seeds:
            raise ValueError("seed list must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seed list contains duplicates")
        if not self.variants:
            raise ValueError("variant matrix must not be empty")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError("variant names must be unique")
        for v in self.variants:
            v.validate()
        if len(self.split_ratios) != 2 or abs(sum(self.split_ratios) - 1) > 1e-9 or min(self.split_ratios) <= 0:
            raise ValueError("split_ratios must be two positive fractions summing to 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if need_cohort and self.cohort_path and not Path(self.cohort_path).is_file():
            raise ValueError(f"cohort file {self.cohort_path} does not exist")

    def to_json(self) -> dict:
        return {
            "out_dir": self.out_dir,
            "cohort_path": self.cohort_path,
            "synth": self.synth.to_json(),
            "model": self.model.to_json(),
            "train": self.train.to_json(),
            "seeds": list(self.seeds),
            "variants": [asdict(v) for v in self.variants],
            "split_ratios": list(self.split_ratios),
            "val_fraction": self.val_fraction,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        if "synth" in d:
            d["synth"] = _strict(SynthConfig, d["synth"], "synth")
        if "model" in d:
            d["model"] = AstnConfig.from_json(d["model"])
        if "train" in d:
            d["train"] = TrainConfig.from_json(d["train"])
        if "variants" in d:
            d["variants"] = [_strict(Variant, v, "variant") for v in d["variants"]]
        if "seeds" in d:
            d["seeds"] = [int(s) for s in d["seeds"]]
        if "split_ratios" in d:
            d["split_ratios"] = tuple(float(r) for r in d["split_ratios"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


def desk_scale(**overrides) -> ExperimentConfig:
    """A 12 x 6 cohort with strong subject nuisance and a small model; minutes per cell on one core."""
    synth = SynthConfig(n_subjects=12, trials_per_subject=6, width=16, height=8, sample_rate=8, min_seconds=10,
                        max_seconds=20, subject_nuisance_amplitude=1.5, fog_signal_strength=0.3)
    model = AstnConfig(width=16, height=8, sample_rate=8, spatial_channels=(4, 8, 8), spatial_pool_after=(0, 1),
                       spatial_dim=16, intrinsic_channels=(16, 16), intrinsic_dim=16, hidden_dim=16,
                       classifier_hidden=(16,))
    tc = TrainConfig(max_iterations=1000, eval_every=50, patience=100)
    cfg = ExperimentConfig(synth=synth, model=model, train=tc, seeds=[0, 1, 2])
    return replace(cfg, **overrides)


def set_dotted(d: dict, path: str, value) -> None:
    """Assign ``value`` at ``a.b.c`` inside nested dicts; list items by index."""
    keys = path.split(".")
    node = d
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form dotted.path=value")
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.strip(), value


# -- cells ---------------------------------------------------------------------


def obtain_cohort(cfg: ExperimentConfig) -> Cohort:
    return load_cohort(cfg.cohort_path) if cfg.cohort_path else generate_cohort(cfg.synth)


def cell_model(cfg: ExperimentConfig, variant: Variant) -> AstnConfig:
    return replace(cfg.model, bidirectional=variant.bidirectional,
                   discriminator_variant=variant.discriminator_variant,
                   discriminator_levels=variant.discriminator_levels)


def cell_train(cfg: ExperimentConfig, variant: Variant, seed: int) -> TrainConfig:
    return replace(cfg.train, seed=seed, use_discriminator=variant.use_discriminator,
                   adversarial_scale=variant.adversarial_scale)


def cell_split(cfg: ExperimentConfig, cohort: Cohort, variant: Variant, seed: int) -> SplitPlan:
    return make_split(cohort, variant.split_mode, cfg.split_ratios, seed, cfg.val_fraction)


def cell_dir(out_dir: str | os.PathLike, variant: Variant, seed: int) -> Path:
    return Path(out_dir) / variant.name / f"seed{seed}"


@dataclass
class CellResult:
    variant: str
    seed: int
    report: MetricReport
    best_iteration: int
    iterations: int
    trace: list[IterationTrace]

    @property
    def disc_trace(self) -> list[float]:
        return [t.disc_auc for t in self.trace if not math.isnan(t.disc_auc)]


def write_roc_csv(path: Path, scores: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("threshold", "fpr", "tpr"))
        for thr, fpr, tpr in roc_auc(scores, labels).rows():
            w.writerow((repr(thr), repr(fpr), repr(tpr)))


def write_projection_csvs(out: Path, params, model: AstnConfig, trials, prefix: str = "pca") -> list[Path]:
    paths = []
    for level, (proj, truth, pred) in level_projections(params, model, trials).items():
        path = out / f"{prefix}_{level}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("pc1", "pc2", "true_label", "pred_label"))
            for pc1, pc2, t, p in projection_rows(proj, truth, pred):
                w.writerow((repr(pc1), repr(pc2), t, p))
        paths.append(path)
    return paths


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def run_cell(cfg: ExperimentConfig, variant: Variant, seed: int, cohort: Cohort | None = None,
             out_dir: str | os.PathLike | None = None, resume: bool = False) -> CellResult:
    """Train and test one (variant, seed) cell; writes its artifacts when ``out_dir`` is set."""
    cohort = cohort if cohort is not None else obtain_cohort(cfg)
    model = cell_model(cfg, variant)
    split = cell_split(cfg, cohort, variant, seed)
    out = cell_dir(out_dir, variant, seed) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    result = train(cohort, split, model, cell_train(cfg, variant, seed), state_dir=out, resume=resume)
    test_trials = cohort.select(split.test_ids)
    report = evaluate_model(result.params, model, test_trials)
    if out is not None:
        save_model(out / "model.astn", model, result.params,
                   {"variant": asdict(variant), "seed": seed, "best_iteration": result.best_iteration})
        write_trace_csv(out / "trace.csv", result.trace)
        write_json(out / "split.json", split.to_json())
        write_json(out / "report.json", {"variant": variant.name, "seed": seed, "split": "test",
                                         "best_iteration": result.best_iteration, "metrics": report.to_json()})
        scores = np.concatenate(predict(test_trials, result.params, model))
        write_roc_csv(out / "roc.csv", scores, np.concatenate([t.labels for t in test_trials]))
    return CellResult(variant.name, seed, report, result.best_iteration, len(result.trace), result.trace)


def _cell_job(args) -> CellResult:
    cfg, variant, seed, out_dir, resume = args
    return run_cell(cfg, variant, seed, out_dir=out_dir, resume=resume)


def worker_count() -> int:
    raw = os.environ.get("ASTNLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"ASTNLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("ASTNLAB_THREADS must be at least 1")
    return n


def run_matrix(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None, cohort: Cohort | None = None,
               workers: int = 1, resume: bool = False, progress=None) -> list[CellResult]:
    """Every (variant, seed) cell, in matrix order.

    Cells are independent, so ``workers > 1`` runs them in processes; each
    worker then rebuilds the cohort from ``cfg`` rather than using ``cohort``.
    """
    cfg.validate()
    jobs = [(v, s) for v in cfg.variants for s in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, [(cfg, v, s, out_dir, resume) for v, s in jobs]))
        if progress:
            for r in results:
                progress(r)
        return results
    cohort = cohort if cohort is not None else obtain_cohort(cfg)
    results = []
    for v, s in jobs:
        results.append(run_cell(cfg, v, s, cohort, out_dir, resume))
        if progress:
            progress(results[-1])
    return results


# -- summaries -----------------------------------------------------------------


@dataclass
class SummaryRow:
    variant: str
    n: int
    mean: dict[str, float]
    sd: dict[str, float]

    def to_json(self) -> dict:
        clean = lambda d: {k: (None if not math.isfinite(v) else v) for k, v in d.items()}
        return {"variant": self.variant, "n": self.n, "mean": clean(self.mean), "sd": clean(self.sd)}


def summarize(results: Sequence[CellResult], order: Sequence[str] | None = None) -> list[SummaryRow]:
    """Mean and sample standard deviation of each metric per variant."""
    groups: dict[str, list[CellResult]] = {}
    for r in results:
        groups.setdefault(r.variant, []).append(r)
    rows = []
    for name in order or list(groups):
        cells = groups.get(name, [])
        if not cells:
            continue
        mean, sd = {}, {}
        for m in SUMMARY_METRICS:
            vals = np.array([getattr(c.report, m) for c in cells], dtype=np.float64)
            mean[m] = float(vals.mean())
            sd[m] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(SummaryRow(name, len(cells), mean, sd))
    return rows


def format_summary(rows: Sequence[SummaryRow]) -> str:
    head = f"{'variant':<24}{'n':>3}  {'AUC':>13}  {'J':>13}  {'sens':>6}  {'spec':>6}  {'LR+':>6}  {'LR-':>6}"
    lines = [head, "-" * len(head)]
    for r in rows:
        m, s = r.mean, r.sd
        lines.append(f"{r.variant:<24}{r.n:>3}  {m['auc']:.3f} ± {s['auc']:.3f}  {m['youden_j']:.3f} ± "
                     f"{s['youden_j']:.3f}  {m['sensitivity']:6.3f}  {m['specificity']:6.3f}  "
                     f"{m['lr_positive']:6.2f}  {m['lr_negative']:6.2f}")
    return "\n".join(lines)


def write_summary(out_dir: Path, rows: Sequence[SummaryRow], results: Sequence[CellResult]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    js = out_dir / "summary.json"
    write_json(js, {"rows": [r.to_json() for r in rows],
                    "cells": [{"variant": c.variant, "seed": c.seed, "auc": c.report.auc,
                               "best_iteration": c.best_iteration, "iterations": c.iterations} for c in results]})
    cs = out_dir / "summary.csv"
    with open(cs, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "n"] + [f"{m}_{k}" for m in SUMMARY_METRICS for k in ("mean", "sd")])
        for r in rows:
            w.writerow([r.variant, r.n] + [repr(v[m]) for m in SUMMARY_METRICS for v in (r.mean, r.sd)])
    return [js, cs]


def lambda_variants(base: Variant, scales: Sequence[float]) -> list[Variant]:
    """One discriminator variant per adversarial scale; 0 keeps D but removes its influence on G."""
    return [replace(base, name=f"{base.name}-lambda{s:g}", use_discriminator=True, adversarial_scale=float(s))
            for s in scales]

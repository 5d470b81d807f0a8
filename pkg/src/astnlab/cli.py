"""Command-line entry point: ``astnlab <command> CONFIG.json [--set path=value ...]``.

Exit codes: 0 success, 1 invalid configuration or inputs, 2 runtime failure,
3 a verification check failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autograd import CheckpointError
from .data import ingest_csv_dir, save_cohort
from .data.io import CohortFileError
from .evaluation import binary_report, check_identities
from .evaluation.model_eval import predict
from .experiment import (
    ExperimentConfig,
    Variant,
    cell_split,
    format_summary,
    lambda_variants,
    obtain_cohort,
    parse_override,
    run_matrix,
    set_dotted,
    summarize,
    worker_count,
    write_json,
    write_projection_csvs,
    write_roc_csv,
    write_summary,
)
from .model import load_model
from .verify import COMPOSITES, PRIMITIVES, eps_sweep, run_suite

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
DEFAULT_LAMBDAS = "0,0.25,0.5,1,2,4"
INPUT_ERRORS = (ValueError, KeyError, TypeError, CohortFileError, CheckpointError, FileNotFoundError,
                json.JSONDecodeError)


class InvalidInput(Exception):
    pass


def load_config(path: str | None, overrides: list[str], out_dir: str | None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise InvalidInput(f"config file {path} not found") from None
        except json.JSONDecodeError as e:
            raise InvalidInput(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise InvalidInput(f"config file {path} must hold a JSON object")
    raw = {**ExperimentConfig().to_json(), **raw}
    for text in overrides:
        key, value = parse_override(text)
        set_dotted(raw, key, value)
    if out_dir is not None:
        raw["out_dir"] = out_dir
    return ExperimentConfig.from_json(raw)


def update_manifest(out_dir: Path, command: str, cfg: ExperimentConfig, artifacts: list[Path]) -> Path:
    path = out_dir / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {"commands": {}}
    manifest["commands"][command] = {
        "config": cfg.to_json(),
        "artifacts": sorted(str(p.resolve().relative_to(out_dir.resolve())) for p in artifacts),
    }
    write_json(path, manifest)
    return path


def default_cohort_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.cohort_path) if cfg.cohort_path else Path(cfg.out_dir) / "cohort.fpsq"


# -- commands ------------------------------------------------------------------
# each command validates its inputs, then returns a closure that performs the side effects


def cmd_gen_data(args, cfg: ExperimentConfig):
    target = Path(args.output) if args.output else default_cohort_path(cfg)
    if args.from_csv and not Path(args.from_csv).is_dir():
        raise InvalidInput(f"--from-csv {args.from_csv} is not a directory")

    def execute():
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.from_csv:
            cohort = ingest_csv_dir(args.from_csv, cfg.synth.sample_rate, cfg.synth.levels)
        else:
            cohort = obtain_cohort(replace(cfg, cohort_path=""))
        target.parent.mkdir(parents=True, exist_ok=True)
        save_cohort(cohort, target)
        w, h = cohort.grid
        print(f"wrote {target}: {len(cohort.subjects)} subjects, {len(cohort)} trials, "
              f"{sum(s.n_seconds for s in cohort)} windows, {w}x{h} @ {cohort.sample_rate} Hz")
        print(f"event rate {cohort.event_rate():.3f} (target {cfg.synth.fog_episode_rate:.3f})")
        artifacts = [target] if target.resolve().is_relative_to(out.resolve()) else []
        update_manifest(out, "gen-data", cfg, artifacts)
        return EXIT_OK

    return execute


def _check_cohort(cfg: ExperimentConfig):
    cohort = obtain_cohort(cfg)
    if cohort.grid != (cfg.model.width, cfg.model.height) or cohort.sample_rate != cfg.model.sample_rate:
        raise InvalidInput(f"cohort is {cohort.grid} @ {cohort.sample_rate} Hz but the model expects "
                           f"{(cfg.model.width, cfg.model.height)} @ {cfg.model.sample_rate} Hz")
    return cohort


def _run_and_report(args, cfg: ExperimentConfig, command: str):
    cfg.validate(need_cohort=True)
    cohort = _check_cohort(cfg)
    workers = worker_count()

    def execute():
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()

        def progress(r):
            print(f"{r.variant:<24} seed {r.seed}: test AUC {r.report.auc:.3f} "
                  f"(best iteration {r.best_iteration}, {r.iterations} run)", flush=True)

        results = run_matrix(cfg, out, cohort, workers=workers, resume=args.resume, progress=progress)
        rows = summarize(results, [v.name for v in cfg.variants])
        print(format_summary(rows))
        print(f"{len(results)} cells in {time.perf_counter() - start:.0f}s")
        artifacts = write_summary(out, rows, results)
        for r in results:
            cell = out / r.variant / f"seed{r.seed}"
            artifacts += [p for p in sorted(cell.iterdir()) if p.is_file()]
        update_manifest(out, command, cfg, artifacts)
        return EXIT_OK

    return execute


def cmd_train(args, cfg: ExperimentConfig):
    return _run_and_report(args, cfg, "train")


def cmd_sweep_lambda(args, cfg: ExperimentConfig):
    try:
        scales = [float(s) for s in args.lambdas.split(",") if s.strip()]
    except ValueError:
        raise InvalidInput(f"--lambdas must be comma-separated numbers, got {args.lambdas!r}") from None
    if not scales or min(scales) < 0:
        raise InvalidInput("--lambdas needs at least one non-negative scale")
    named = {v.name: v for v in cfg.variants}
    if args.base:
        if args.base not in named:
            raise InvalidInput(f"--base {args.base!r} is not a configured variant: {sorted(named)}")
        base = named[args.base]
    else:
        base = next((v for v in cfg.variants if v.use_discriminator), Variant("subject-disc", use_discriminator=True))
    sweep = replace(cfg, variants=lambda_variants(base, scales))
    return _run_and_report(args, sweep, "sweep-lambda")


def _load_checkpoint(args, cfg: ExperimentConfig):
    path = Path(args.checkpoint)
    if not path.is_file():
        raise InvalidInput(f"checkpoint {path} not found")
    model, params, meta = load_model(path)
    cohort = obtain_cohort(cfg)
    if cohort.grid != (model.width, model.height) or cohort.sample_rate != model.sample_rate:
        raise InvalidInput(f"checkpoint model expects {(model.width, model.height)} @ {model.sample_rate} Hz "
                           f"but the cohort is {cohort.grid} @ {cohort.sample_rate} Hz")
    variant = Variant(**meta["variant"]) if "variant" in meta else Variant("checkpoint")
    seed = args.seed if args.seed is not None else int(meta.get("seed", cfg.seeds[0]))
    split = cell_split(cfg, cohort, variant, seed)
    parts = ("train", "val", "test") if args.split == "all" else (args.split,)
    trials = cohort.select([k for p in parts for k in getattr(split, f"{p}_ids")])
    labels = np.concatenate([t.labels for t in trials])
    if not 0 < labels.sum() < labels.size:
        raise InvalidInput(f"the {args.split} split has a single class; metrics are undefined")
    out = Path(args.report_dir) if args.report_dir else path.parent / f"eval_{args.split}"
    return model, params, trials, labels, out, variant, seed


def cmd_eval(args, cfg: ExperimentConfig):
    model, params, trials, labels, out, variant, seed = _load_checkpoint(args, cfg)

    def execute():
        out.mkdir(parents=True, exist_ok=True)
        scores = np.concatenate(predict(trials, params, model))
        report = binary_report(scores, labels)
        bad = check_identities(report)
        if bad:
            raise RuntimeError(f"report violates identities: {bad}")
        write_json(out / "report.json", {"variant": variant.name, "seed": seed, "split": args.split,
                                         "checkpoint": str(args.checkpoint), "metrics": report.to_json()})
        write_roc_csv(out / "roc.csv", scores, labels)
        pcas = write_projection_csvs(out, params, model, trials)
        r = report
        print(f"{args.split}: AUC {r.auc:.3f}  J {r.youden_j:.3f}  sens {r.sensitivity:.3f}  spec {r.specificity:.3f}"
              f"  LR+ {r.lr_positive:.2f}  LR- {r.lr_negative:.2f}  threshold {r.threshold:.4f}")
        _manifest_near(out, cfg, "eval", [out / "report.json", out / "roc.csv"] + pcas)
        return EXIT_OK

    return execute


def cmd_project(args, cfg: ExperimentConfig):
    model, params, trials, _, out, _, _ = _load_checkpoint(args, cfg)

    def execute():
        out.mkdir(parents=True, exist_ok=True)
        paths = write_projection_csvs(out, params, model, trials)
        for p in paths:
            print(f"wrote {p}")
        _manifest_near(out, cfg, "project", paths)
        return EXIT_OK

    return execute


def _manifest_near(out: Path, cfg: ExperimentConfig, command: str, artifacts: list[Path]) -> None:
    # index under the experiment's out_dir when the report lives there, else beside the report
    root = Path(cfg.out_dir)
    update_manifest(root if out.resolve().is_relative_to(root.resolve()) else out, command, cfg, artifacts)


def cmd_grad_check(args, cfg: ExperimentConfig):
    if args.seeds < 1:
        raise InvalidInput("--seeds must be at least 1")
    known = PRIMITIVES + ("gru_step",) + COMPOSITES
    if args.fault and args.fault not in PRIMITIVES:
        raise InvalidInput(f"--fault must name a primitive op: {', '.join(PRIMITIVES)}")
    if args.only:
        names = [n.strip() for n in args.only.split(",")]
        if set(names) - set(known):
            raise InvalidInput(f"unknown checks {sorted(set(names) - set(known))}; known: {', '.join(known)}")
    else:
        names = None

    def execute():
        start = time.perf_counter()
        results = run_suite(range(args.seeds), eps=args.eps, fault=args.fault, names=names)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<16} max rel err {r.max_error:.2e}  "
                  f"({r.seeds} seeds, {r.seconds:.1f}s)")
        failed = [r.name for r in results if not r.passed]
        print(f"{len(results) - len(failed)}/{len(results)} passed in {time.perf_counter() - start:.1f}s")
        if args.eps_sweep:
            for eps, err in eps_sweep().items():
                print(f"eps {eps:.0e}: worst error {err:.2e}")
        if failed:
            print("failed: " + ", ".join(failed))
            return EXIT_CHECK
        return EXIT_OK

    return execute


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="astnlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="experiment JSON")
        else:
            p.add_argument("config", nargs="?", help="experiment JSON (optional)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field, e.g. train.max_iterations=200 (value parsed as JSON)")
        p.add_argument("--out-dir", help="output directory (overrides out_dir)")
        return p

    p = common(sub.add_parser("gen-data", help="render or ingest a cohort file"))
    p.add_argument("--from-csv", help="ingest trial_<m>_<n>/frame_<k>.csv directories instead of rendering")
    p.add_argument("--output", help="cohort file to write (default: cohort_path or OUT_DIR/cohort.fpsq)")
    p.set_defaults(handler=cmd_gen_data)

    for name, handler, help_text in (("train", cmd_train, "train every (variant, seed) cell"),
                                     ("sweep-lambda", cmd_sweep_lambda, "train across adversarial scales")):
        p = common(sub.add_parser(name, help=help_text))
        p.add_argument("--resume", action="store_true", help="continue cells from their saved loop state")
        if name == "sweep-lambda":
            p.add_argument("--lambdas", default=DEFAULT_LAMBDAS, help=f"comma-separated (default {DEFAULT_LAMBDAS})")
            p.add_argument("--base", help="variant to sweep (default: first with a discriminator)")
        p.set_defaults(handler=handler)

    for name, handler, help_text in (("eval", cmd_eval, "metrics, ROC and PCA for a checkpoint"),
                                     ("project", cmd_project, "PCA projections of the three levels")):
        p = common(sub.add_parser(name, help=help_text))
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        p.add_argument("--seed", type=int, help="split seed (default: the checkpoint's)")
        p.add_argument("--report-dir", help="where to write (default: next to the checkpoint)")
        p.set_defaults(handler=handler)

    p = common(sub.add_parser("grad-check", help="finite-difference gradient suite"), config_required=False)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--only", help="comma-separated subset of checks")
    p.add_argument("--fault", help="corrupt this op's backward rule while checking (harness self-test)")
    p.add_argument("--eps-sweep", action="store_true", help="also report errors for eps in 1e-3, 1e-4, 1e-5")
    p.set_defaults(handler=cmd_grad_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.out_dir)
        execute = args.handler(args, cfg)
    except (InvalidInput, *INPUT_ERRORS) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return execute()
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - every runtime failure maps to one exit code
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

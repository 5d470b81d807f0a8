"""Test AUC of the forward subject-split model with D as the adversarial scale varies.

    python scripts/lambda_sweep.py --lambdas 0,0.25,0.5,1,2,4
"""

import argparse
from pathlib import Path

from astnlab.experiment import desk_scale, format_summary, lambda_variants, run_matrix, summarize, worker_count
from astnlab.experiment import write_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/lambda")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--lambdas", default="0,0.25,0.5,1,2,4")
    ap.add_argument("--base", default="fwd-subject-disc")
    args = ap.parse_args()

    cfg = desk_scale(out_dir=args.out_dir, seeds=[int(s) for s in args.seeds.split(",")])
    base = next(v for v in cfg.variants if v.name == args.base)
    cfg.variants = lambda_variants(base, [float(x) for x in args.lambdas.split(",")])
    out = Path(args.out_dir)
    results = run_matrix(cfg, out, workers=worker_count(),
                         progress=lambda c: print(f"{c.variant:<30} seed {c.seed}  AUC {c.report.auc:.3f}", flush=True))
    rows = summarize(results, [v.name for v in cfg.variants])
    write_summary(out, rows, results)
    print(format_summary(rows))


if __name__ == "__main__":
    main()

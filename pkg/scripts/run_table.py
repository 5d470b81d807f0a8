"""Forward/bidirectional x trial/subject/subject+D table at desk scale.

    python scripts/run_table.py --out-dir runs/table --seeds 0,1,2
"""

import argparse
import time
from pathlib import Path

from astnlab.experiment import desk_scale, format_summary, run_matrix, summarize, worker_count, write_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/table")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--iterations", type=int, default=None)
    args = ap.parse_args()

    cfg = desk_scale(out_dir=args.out_dir, seeds=[int(s) for s in args.seeds.split(",")])
    if args.iterations:
        cfg.train.max_iterations = args.iterations
    out = Path(args.out_dir)
    start = time.perf_counter()
    results = run_matrix(cfg, out, workers=worker_count(),
                         progress=lambda c: print(f"{c.variant:<22} seed {c.seed}  AUC {c.report.auc:.3f}", flush=True))
    rows = summarize(results, [v.name for v in cfg.variants])
    write_summary(out, rows, results)
    print(format_summary(rows))
    print(f"{len(results)} cells in {(time.perf_counter() - start) / 60:.1f} min")


if __name__ == "__main__":
    main()

"""Compare pair-feature variants and representation levels for D on the subject split.

    python scripts/discriminator_variants.py --seeds 0,1,2
"""

import argparse
import itertools
from pathlib import Path

from astnlab.experiment import Variant, desk_scale, format_summary, run_matrix, summarize, worker_count, write_summary
from astnlab.model import LEVELS, VARIANTS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/disc_variants")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--bidirectional", action="store_true")
    args = ap.parse_args()

    cfg = desk_scale(out_dir=args.out_dir, seeds=[int(s) for s in args.seeds.split(",")])
    cfg.variants = [Variant(f"{kind}-{levels}", "subject", bidirectional=args.bidirectional, use_discriminator=True,
                            discriminator_variant=kind, discriminator_levels=levels)
                    for kind, levels in itertools.product(VARIANTS, LEVELS)]
    out = Path(args.out_dir)
    results = run_matrix(cfg, out, workers=worker_count(),
                         progress=lambda c: print(f"{c.variant:<30} seed {c.seed}  AUC {c.report.auc:.3f}", flush=True))
    rows = summarize(results, [v.name for v in cfg.variants])
    write_summary(out, rows, results)
    print(format_summary(rows))


if __name__ == "__main__":
    main()

"""Weighted-loss study: ML versus the tempered shrinkage estimator."""

import time

from _common import parser, setup, show
from ebnf.simulate import metrics_rows, run_estimation_study, write_metrics

if __name__ == "__main__":
    args = parser(__doc__, reps=50).parse_args()
    spec, cfg = setup(args)
    t0 = time.perf_counter()
    rep = run_estimation_study(spec, args.reps, cfg, workers=args.workers)
    show(rep)
    print(f"{time.perf_counter() - t0:.1f}s")
    if args.output:
        write_metrics(args.output, metrics_rows(spec, rep))

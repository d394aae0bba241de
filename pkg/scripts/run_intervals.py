"""Coverage and average length of ML t intervals and empirical Bayes intervals."""

import time

from _common import parser, setup, show
from ebnf.simulate import metrics_rows, run_interval_study, write_metrics

if __name__ == "__main__":
    p = parser(__doc__, reps=50)
    p.add_argument("--alpha", type=float, default=0.05)
    args = p.parse_args()
    spec, cfg = setup(args)
    t0 = time.perf_counter()
    rep = run_interval_study(spec, args.reps, args.alpha, cfg, workers=args.workers)
    show(rep)
    print(f"{time.perf_counter() - t0:.1f}s")
    if args.output:
        write_metrics(args.output, metrics_rows(spec, rep))

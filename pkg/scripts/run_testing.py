"""FDR and TPR of interval-null tests: posterior null probabilities, t-test, BH."""

import time

from _common import parser, setup, show
from ebnf.simulate import metrics_rows, run_testing_study, write_metrics

if __name__ == "__main__":
    p = parser(__doc__, reps=30)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=1.0)
    p.set_defaults(n=1000)
    args = p.parse_args()
    spec, cfg = setup(args)
    t0 = time.perf_counter()
    rep = run_testing_study(spec, args.reps, args.alpha, args.delta, cfg, workers=args.workers)
    show(rep)
    print(f"{time.perf_counter() - t0:.1f}s")
    if args.output:
        write_metrics(args.output, metrics_rows(spec, rep))

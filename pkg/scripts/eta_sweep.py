"""Weighted-loss curves over eta for one scenario, written as plot data."""

from _common import parser, setup
from ebnf.core import write_csv
from ebnf.simulate import PLOT_HEADER, eta_sweep

if __name__ == "__main__":
    p = parser(__doc__, reps=20)
    p.add_argument("--etas", default="0,1,2,3,4,5,6,7,8")
    args = p.parse_args()
    spec, cfg = setup(args)
    rows = eta_sweep(spec, [float(e) for e in args.etas.split(",")], args.reps, cfg, workers=args.workers)
    for r in rows:
        print(f"eta={r[1]:.1f} {r[4]:6s} {r[5]:.4f}")
    if args.output:
        write_csv(args.output, PLOT_HEADER, rows)

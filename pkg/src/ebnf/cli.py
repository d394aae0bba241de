"""Command-line interface: ``ebnf {ingest,fit,estimate,interval,test,simulate}``.

Every verb is a pure function of its input files, configuration and seed.
Configuration is resolved as CLI flag > ``--config`` file > built-in default.
Work is split into contiguous chunks for ``--threads`` workers and merged in
input order, so the thread count never changes the output bytes.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .core import Dataset, EngineConfig, load_config, read_dataset, require_shrinkable, tomllib, write_csv, write_dataset
from .density import fit_auto, load_model, partials, save_model
from .errors import ConfigError, EbnfError, ValidationError
from .ingest import ingest_file
from .posterior import PosteriorCdf, flag_names
from .shrinkage import tempered_estimates
from .simulate import (
    PLOT_HEADER,
    SCENARIOS,
    ScenarioSpec,
    eta_sweep,
    metrics_rows,
    run_estimation_study,
    run_interval_study,
    run_testing_study,
    summary_json,
    write_metrics,
)
from .testing import bh_reject, fdr_reject, posterior_null_probs, ttest_pvalues

ESTIMATE_HEADER = ("id", "x", "s2", "k", "theta_hat", "floored")
INTERVAL_HEADER = ("id", "theta_hat", "lo", "hi", "alpha", "flags")
TEST_HEADER = ("id", "pn", "p_value", "rejected_nf", "rejected_bh")

# flag name -> EngineConfig field
CONFIG_FLAGS = {
    "rho": "rho",
    "grid_size": "grid_size_S",
    "cw": "grid_halfwidth_cw",
    "mgf_points": "mgf_points",
    "alpha": "alpha",
    "delta": "delta",
    "seed": "seed",
}
STUDIES = ("estimation", "interval", "testing")
TESTING_DEFAULTS = {"alpha": 0.1, "delta": 1.0}


class CliError(ValidationError):
    code = 105


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# configuration


def _parse_set(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def resolve_config(args) -> tuple[EngineConfig, set[str]]:
    """Config from defaults, then the file, then ``--set`` pairs, then named flags.

    Also returns the names of fields given explicitly by a file or the command line.
    """
    overrides: dict[str, Any] = _parse_set(args.set or [])
    for flag, field in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    cfg = load_config(args.config, overrides)
    explicit = set(overrides)
    if args.config is not None:
        with open(args.config, "rb") as fh:
            explicit |= set(tomllib.load(fh))
    return cfg, explicit


# chunked execution


def chunked(fn: Callable[[np.ndarray], list], n: int, threads: int) -> list:
    """Apply ``fn`` to contiguous index chunks and concatenate results in order."""
    threads = max(1, min(threads, n))
    chunks = [c for c in np.array_split(np.arange(n), threads) if c.size]
    if threads == 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    return [row for part in parts for row in part]


def _emit(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _shrink(model, data: Dataset, cfg: EngineConfig, idx: np.ndarray):
    x, s2, k = data.x[idx], data.s2[idx], data.k[idx]
    f, fx, fs2 = partials(model, x, s2, k, cfg.fd_step_cap)
    return tempered_estimates(f, fx, fs2, x, s2, k, cfg.rho)


# verbs


def cmd_ingest(args, cfg: EngineConfig) -> int:
    data, dropped = ingest_file(args.input, args.min_k, args.train_split)
    for uid in dropped:
        print(f"dropped unit {uid}", file=sys.stderr)
    _emit(args.output, write_dataset(None, data))
    return 0


def cmd_fit(args, cfg: EngineConfig) -> int:
    data = read_dataset(args.input)
    _emit(args.output, save_model(fit_auto(data, cfg), None))
    return 0


def cmd_estimate(args, cfg: EngineConfig) -> int:
    data = read_dataset(args.data)
    require_shrinkable(data)
    model = load_model(args.model)

    def work(idx):
        theta, _, floored = _shrink(model, data, cfg, idx)
        return [
            (data.ids[i], data.x[i], data.s2[i], data.k[i], float(t), bool(fl))
            for i, t, fl in zip(idx, theta, floored)
        ]

    rows = chunked(work, len(data), args.threads)
    _emit(args.output, write_csv(None, ESTIMATE_HEADER, rows))
    return 0


def cmd_interval(args, cfg: EngineConfig) -> int:
    data = read_dataset(args.data)
    require_shrinkable(data)
    model = load_model(args.model)
    alpha = cfg.alpha

    def work(idx):
        theta, _, floored = _shrink(model, data, cfg, idx)
        pc = PosteriorCdf(model, data.x[idx], data.s2[idx], data.k[idx], cfg, ids=[data.ids[i] for i in idx])
        lo, hi = pc.interval(alpha)
        return [
            (data.ids[i], float(t), float(a), float(b), alpha, flag_names(int(fl)))
            for i, t, a, b, fl in zip(idx, theta, lo, hi, pc.flags)
        ]

    rows = chunked(work, len(data), args.threads)
    _emit(args.output, write_csv(None, INTERVAL_HEADER, rows))
    return 0


def cmd_test(args, cfg: EngineConfig) -> int:
    data = read_dataset(args.data)
    model = load_model(args.model)

    def work(idx):
        pc = PosteriorCdf(model, data.x[idx], data.s2[idx], data.k[idx], cfg, ids=[data.ids[i] for i in idx])
        return list(posterior_null_probs(pc, cfg.delta))

    pn = np.array(chunked(work, len(data), args.threads))
    pv = ttest_pvalues(data.x, data.s2, data.k, cfg.delta)
    nf = np.zeros(len(data), dtype=bool)
    nf[fdr_reject(pn, cfg.alpha)] = True
    bh = np.zeros(len(data), dtype=bool)
    bh[bh_reject(pv, cfg.alpha)] = True
    rows = [(i, float(a), float(b), bool(r1), bool(r2)) for i, a, b, r1, r2 in zip(data.ids, pn, pv, nf, bh)]
    _emit(args.output, write_csv(None, TEST_HEADER, rows))
    return 0


def cmd_simulate(args, cfg: EngineConfig, explicit: set[str]) -> int:
    spec = ScenarioSpec(args.scenario, args.eta, args.n, args.k, seed=cfg.seed)
    studies = STUDIES if args.study == "all" else (args.study,)
    reports = {}
    rows = []
    for study in studies:
        if study == "estimation":
            rep = run_estimation_study(spec, args.reps, cfg, workers=args.threads)
        elif study == "interval":
            rep = run_interval_study(spec, args.reps, cfg.alpha, cfg, workers=args.threads)
        else:
            # the testing study has its own defaults unless alpha/delta were set
            alpha = cfg.alpha if "alpha" in explicit else TESTING_DEFAULTS["alpha"]
            delta = cfg.delta if "delta" in explicit else TESTING_DEFAULTS["delta"]
            rep = run_testing_study(spec, args.reps, alpha, delta, cfg, workers=args.threads)
        reports[study] = rep
        rows += metrics_rows(spec, rep)
    _emit(args.output, write_metrics(None, rows))
    if args.json is not None:
        _emit(args.json, summary_json(spec, reports))
    if args.emit_plot_data is not None:
        etas = [float(e) for e in args.etas.split(",")]
        curve = eta_sweep(spec, etas, args.reps, cfg, workers=args.threads)
        _emit(args.emit_plot_data, write_csv(None, PLOT_HEADER, curve))
    return 0


# parser


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file of EngineConfig fields")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any EngineConfig field")
    common.add_argument("--rho", type=float, help="density floor of the shrinkage denominator")
    common.add_argument("--grid-size", type=int, help="number of grid knots S")
    common.add_argument("--cw", type=float, help="grid half-width in posterior sd units")
    common.add_argument("--mgf-points", help="comma-separated MGF evaluation points")
    common.add_argument("--alpha", type=float, help="interval level 1 - alpha, or FDR target")
    common.add_argument("--delta", type=float, help="half-width of the interval null |theta| <= delta")
    common.add_argument("--seed", type=int, help="RNG seed (simulate only)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker count")
    common.add_argument("-o", "--output", help="output path (default: stdout)")

    p = _Parser(prog="ebnf", description="Nonparametric empirical Bayes for normal means with unknown variances.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="raw records -> dataset CSV")
    s.add_argument("input")
    s.add_argument("--min-k", type=float, help="drop units with k <= this value")
    s.add_argument("--train-split", action="store_true", help="keep the first half of each unit's records")

    s = sub.add_parser("fit", parents=[common], help="dataset CSV -> density model JSON")
    s.add_argument("input")

    for verb, help_ in (
        ("estimate", "shrinkage estimates"),
        ("interval", "empirical Bayes intervals"),
        ("test", "interval-null tests with FDR control"),
    ):
        s = sub.add_parser(verb, parents=[common], help=help_)
        s.add_argument("--model", required=True)
        s.add_argument("--data", required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte-Carlo studies -> metrics CSV/JSON")
    s.add_argument("--scenario", choices=SCENARIOS, default="S1")
    s.add_argument("--eta", type=float, default=4.0)
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--reps", type=_positive_int, default=50)
    s.add_argument("--study", choices=STUDIES + ("all",), default="estimation")
    s.add_argument("--json", help="also write a JSON summary here")
    s.add_argument("--emit-plot-data", metavar="PATH", help="write weighted-loss curves over --etas")
    s.add_argument("--etas", default="0,1,2,3,4,5,6,7,8")
    return p


VERBS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "estimate": cmd_estimate,
    "interval": cmd_interval,
    "test": cmd_test,
}


def report(exc: EbnfError) -> None:
    print(f"EBNF-E{exc.code}: {exc}", file=sys.stderr)
    for i in exc.ids:
        print(f"EBNF-E{exc.code}: id {i}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg, explicit = resolve_config(args)
        if args.verb == "simulate":
            return cmd_simulate(args, cfg, explicit)
        return VERBS[args.verb](args, cfg)
    except EbnfError as exc:
        report(exc)
        return exc.exit_status
    except OSError as exc:
        print(f"EBNF-E{CliError.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

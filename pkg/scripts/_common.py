"""Shared argument handling for the study runners."""

from __future__ import annotations

import argparse

from ebnf.core import EngineConfig, load_config
from ebnf.simulate import SCENARIOS, ScenarioSpec


def parser(description: str, reps: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--scenario", choices=SCENARIOS, default="S1")
    p.add_argument("--eta", type=float, default=4.0)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="TOML file of EngineConfig fields")
    p.add_argument("-o", "--output", help="metrics CSV path (default: stdout)")
    return p


def setup(args) -> tuple[ScenarioSpec, EngineConfig]:
    return ScenarioSpec(args.scenario, args.eta, args.n, args.k, seed=args.seed), load_config(args.config)


def show(reports) -> None:
    for method, r in reports.items():
        vals = "  ".join(f"{k}={v:.4f}" for k, v in r.values().items())
        print(f"{method:6s} reps={r.reps}  {vals}")

"""Shared domain types: observations, datasets, engine configuration and their file formats."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import sys
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegreesOfFreedomError, DuplicateIdError, ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SCHEMA_LINE = "# ebnf-schema v1"


@dataclass(frozen=True)
class Observation:
    id: str
    x: float
    s2: float
    k: float


@dataclass(frozen=True)
class Dataset:
    observations: tuple[Observation, ...]
    homogeneous_k: bool

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.observations)

    @cached_property
    def x(self) -> np.ndarray:
        return np.array([o.x for o in self.observations], dtype=float)

    @cached_property
    def s2(self) -> np.ndarray:
        return np.array([o.s2 for o in self.observations], dtype=float)

    @cached_property
    def k(self) -> np.ndarray:
        return np.array([o.k for o in self.observations], dtype=float)

    def raw(self) -> list[tuple[str, float, float, float]]:
        return [(o.id, o.x, o.s2, o.k) for o in self.observations]

    def subset(self, index: Sequence[int]) -> "Dataset":
        return validate_dataset([self.raw()[i] for i in index])

    @classmethod
    def from_arrays(cls, x, s2, k, ids: Sequence[str] | None = None) -> "Dataset":
        x = np.asarray(x, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        k = np.broadcast_to(np.asarray(k, dtype=float), x.shape)
        if ids is None:
            ids = [str(i) for i in range(x.size)]
        return validate_dataset(list(zip(ids, x.tolist(), s2.tolist(), k.tolist())))


def validate_dataset(raw: Iterable[tuple[Any, Any, Any, Any]]) -> Dataset:
    """Build a :class:`Dataset` from ``(id, x, s2, k)`` rows, preserving order."""
    rows = list(raw)
    if not rows:
        raise ValidationError("dataset is empty")
    seen: set[str] = set()
    obs = []
    for row in rows:
        if len(row) != 4:
            raise ValidationError(f"expected 4 fields (id, x, s2, k), got {len(row)}")
        rid, x, s2, k = row
        rid = str(rid)
        try:
            x, s2, k = float(x), float(s2), float(k)
        except (TypeError, ValueError):
            raise ValidationError(f"id {rid!r}: non-numeric field", (rid,)) from None
        if rid in seen:
            raise DuplicateIdError(f"duplicate id {rid!r}", (rid,))
        seen.add(rid)
        if not math.isfinite(x):
            raise ValidationError(f"id {rid!r}: x is not finite", (rid,))
        if not (math.isfinite(s2) and s2 > 0):
            raise ValidationError(f"id {rid!r}: s2 must be finite and > 0", (rid,))
        if not (math.isfinite(k) and k > 0):
            raise DegreesOfFreedomError(f"id {rid!r}: k must be finite and > 0", (rid,))
        obs.append(Observation(rid, x, s2, k))
    ks = {o.k for o in obs}
    return Dataset(tuple(obs), homogeneous_k=len(ks) == 1)


def require_shrinkable(data: Dataset | Sequence[Observation]) -> None:
    """Reject observations with k <= 2, where the Bayes-estimator denominator changes sign."""
    bad = tuple(o.id for o in data if not o.k > 2)
    if bad:
        shown = ", ".join(bad[:10]) + (" ..." if len(bad) > 10 else "")
        raise DegreesOfFreedomError(f"k must exceed 2 for shrinkage estimation; offending ids: {shown}", bad)


@dataclass(frozen=True)
class EngineConfig:
    rho: float = 1e-3
    fd_step_cap: float = 1e-3
    grid_size_S: int = 100
    grid_halfwidth_cw: float = 5.0
    mgf_points: tuple[float, ...] = (-0.3, -0.2, -0.1, 0.1, 0.2, 0.3)
    newton_tol: float = 1e-10
    newton_max_iter: int = 200
    bisect_tol: float = 1e-4
    alpha: float = 0.05
    delta: float = 0.0
    seed: int = 0
    min_fit_size: int = 10
    mgf_floor: float = 0.0
    mgf_domain_fraction: float = 0.95
    clip_unbracketed: bool = True
    maxent_ridge: float = 1e-2
    mgf_spread_cap: float = 0.5

    def __post_init__(self):
        pts = tuple(float(t) for t in self.mgf_points)
        object.__setattr__(self, "mgf_points", pts)
        if not self.rho > 0:
            raise ConfigError("rho must be > 0")
        if not self.fd_step_cap > 0:
            raise ConfigError("fd_step_cap must be > 0")
        if any(t == 0 for t in pts):
            raise ConfigError("mgf_points must not contain 0")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ConfigError("mgf_points must be strictly increasing")
        if self.grid_size_S < 2 + len(pts):
            raise ConfigError("grid_size_S must be at least 2 + number of mgf_points")
        if not self.grid_halfwidth_cw > 0:
            raise ConfigError("grid_halfwidth_cw must be > 0")
        if not (self.newton_tol > 0 and self.bisect_tol > 0):
            raise ConfigError("tolerances must be > 0")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.delta >= 0:
            raise ConfigError("delta must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not self.mgf_floor >= 0:
            raise ConfigError("mgf_floor must be >= 0")
        if not self.mgf_spread_cap >= 0:
            raise ConfigError("mgf_spread_cap must be >= 0")
        if not self.maxent_ridge >= 0:
            raise ConfigError("maxent_ridge must be >= 0")
        if not 0 < self.mgf_domain_fraction < 1:
            raise ConfigError("mgf_domain_fraction must lie in (0, 1)")
        if self.min_fit_size < 1:
            raise ConfigError("min_fit_size must be >= 1")

    def replace(self, **changes) -> "EngineConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "EngineConfig | None" = None) -> "EngineConfig":
        base = base or cls()
        known = {f.name: f for f in dataclasses.fields(cls)}
        changes = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, value, known[key].type)
        return dataclasses.replace(base, **changes)


def _coerce(key: str, value: Any, annotation: str) -> Any:
    try:
        if annotation == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if annotation == "float":
            return float(value)
        if annotation == "bool":
            if isinstance(value, str):
                value = {"true": True, "1": True, "false": False, "0": False}[value.strip().lower()]
            if not isinstance(value, (bool, int)) or value not in (0, 1):
                raise ValueError
            return bool(value)
        if isinstance(value, str):
            value = [v for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
        return tuple(float(v) for v in value)
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> EngineConfig:
    """Defaults, then the ``key = value`` file, then explicit overrides (highest precedence)."""
    cfg = EngineConfig()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                values = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        cfg = EngineConfig.from_mapping(values, cfg)
    if overrides:
        cfg = EngineConfig.from_mapping({k: v for k, v in overrides.items() if v is not None}, cfg)
    return cfg


def _data_lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def read_csv_records(path: str | Path, required: Sequence[str]) -> list[dict[str, str]]:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO("\n".join(_data_lines(text))))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")
    return list(reader)


def read_dataset(path: str | Path) -> Dataset:
    rows = read_csv_records(path, ("id", "x", "s2", "k"))
    return validate_dataset([(r["id"], r["x"], r["s2"], r["k"]) for r in rows])


def fmt(v: float | int | bool | str) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path | None, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def write_dataset(path: str | Path | None, data: Dataset) -> str:
    return write_csv(path, ("id", "x", "s2", "k"), data.raw())

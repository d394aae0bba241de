"""Turn replicated or count records into per-unit summary statistics (x, s2, k)."""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset, Observation, read_csv_records, validate_dataset
from .errors import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountRecord:
    unit_id: str
    successes: int
    trials: int

    def __post_init__(self):
        if self.trials <= 0 or self.successes < 0 or self.successes > self.trials:
            raise ValidationError(
                f"unit {self.unit_id!r}: need 0 <= successes <= trials and trials > 0", (self.unit_id,)
            )


@dataclass(frozen=True)
class ReplicateRecord:
    unit_id: str
    value: float
    weight: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"unit {self.unit_id!r}: value is not finite", (self.unit_id,))
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise ValidationError(f"unit {self.unit_id!r}: weight must be finite and > 0", (self.unit_id,))


def arcsine_transform(rec: CountRecord) -> tuple[float, float]:
    """Variance-stabilized value arcsin(sqrt((H + 1/4) / (AB + 1/2))) and its weight 4 AB."""
    value = math.asin(math.sqrt((rec.successes + 0.25) / (rec.trials + 0.5)))
    return value, 4.0 * rec.trials


def aggregate_unit(recs: Sequence[ReplicateRecord]) -> Observation:
    """Weighted mean, weighted variance of the mean and df = n - 1 for one unit."""
    if len(recs) < 2:
        uid = recs[0].unit_id if recs else "?"
        raise ValidationError(f"unit {uid!r}: need at least 2 replicates", (uid,))
    uid = recs[0].unit_id
    if any(r.unit_id != uid for r in recs):
        raise ValidationError("aggregate_unit received records from several units")
    v = np.array([r.value for r in recs])
    w = np.array([r.weight for r in recs])
    n = v.size
    wsum = w.sum()
    xbar = float((w * v).sum() / wsum)
    s2 = float((w * (v - xbar) ** 2).sum() / ((n - 1) * wsum))
    if np.ptp(v) == 0 or not s2 > 0:
        raise ValidationError(f"unit {uid!r}: zero variance (all replicates equal)", (uid,))
    return Observation(uid, xbar, s2, float(n - 1))


def group_by_unit(recs: Iterable[ReplicateRecord]) -> "OrderedDict[str, list[ReplicateRecord]]":
    groups: OrderedDict[str, list[ReplicateRecord]] = OrderedDict()
    for r in recs:
        groups.setdefault(r.unit_id, []).append(r)
    return groups


def training_split(groups: "OrderedDict[str, list]") -> "OrderedDict[str, list]":
    """Keep the first floor(n_i / 2) records of each unit, in file order."""
    return OrderedDict((u, rs[: len(rs) // 2]) for u, rs in groups.items())


def ingest_replicates(
    rows: Iterable[ReplicateRecord],
    min_k_exclusive: float | None = None,
    train_split: bool = False,
) -> tuple[Dataset, list[str]]:
    """Aggregate replicate records per unit.

    Units with fewer than two records, zero variance, or (when
    ``min_k_exclusive`` is given) ``k <= min_k_exclusive`` are dropped; their
    ids are returned alongside the dataset.
    """
    groups = group_by_unit(rows)
    if train_split:
        groups = training_split(groups)
    kept: list[Observation] = []
    dropped: list[str] = []
    for uid, recs in groups.items():
        if len(recs) < 2:
            log.warning("unit %s dropped: %d record(s)", uid, len(recs))
            dropped.append(uid)
            continue
        try:
            obs = aggregate_unit(recs)
        except ValidationError as exc:
            log.warning("unit %s dropped: %s", uid, exc)
            dropped.append(uid)
            continue
        if min_k_exclusive is not None and not obs.k > min_k_exclusive:
            dropped.append(uid)
            continue
        kept.append(obs)
    if not kept:
        raise ValidationError("no units left after filtering")
    return validate_dataset([(o.id, o.x, o.s2, o.k) for o in kept]), dropped


def ingest_counts(
    rows: Iterable[CountRecord],
    min_k_exclusive: float | None = None,
    train_split: bool = False,
) -> tuple[Dataset, list[str]]:
    reps = []
    for rec in rows:
        value, weight = arcsine_transform(rec)
        reps.append(ReplicateRecord(rec.unit_id, value, weight))
    return ingest_replicates(reps, min_k_exclusive=min_k_exclusive, train_split=train_split)


def read_raw_records(path: str | Path) -> list[CountRecord] | list[ReplicateRecord]:
    """Read either a ``unit_id,successes,trials`` or a ``unit_id,value,weight`` CSV."""
    try:
        rows = read_csv_records(path, ("unit_id", "successes", "trials"))
        counts = True
    except ValidationError:
        rows = read_csv_records(path, ("unit_id", "value", "weight"))
        counts = False
    out = []
    for r in rows:
        try:
            if counts:
                out.append(CountRecord(r["unit_id"], int(r["successes"]), int(r["trials"])))
            else:
                out.append(ReplicateRecord(r["unit_id"], float(r["value"]), float(r["weight"])))
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"unit {r.get('unit_id')!r}: unparsable record", (str(r.get("unit_id")),)) from None
    return out


def ingest_file(path, min_k_exclusive=None, train_split=False) -> tuple[Dataset, list[str]]:
    recs = read_raw_records(path)
    if recs and isinstance(recs[0], CountRecord):
        return ingest_counts(recs, min_k_exclusive, train_split)
    return ingest_replicates(recs, min_k_exclusive, train_split)

"""Per-user network trace analysis: loss-ratio and upload-speed CDFs.

Input is a CSV with one row per measurement.  Column names are configurable;
the defaults are ``unit_id, packets_received, packets_lost, throughput_mbps``.
Rows sharing a user id are merged into one record.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_COLUMNS = {
    "user_id": "unit_id",
    "received": "packets_received",
    "lost": "packets_lost",
    "throughput": "throughput_mbps",
}


@dataclass(frozen=True)
class UserNetRecord:
    user_id: str
    received_packets: float
    lost_packets: float
    throughput_mbps: float
    loss_ratio: float


def ingest(path: str | Path, columns: dict[str, str] | None = None,
           aggregate: str = "mean_ratio") -> tuple[list[UserNetRecord], int]:
    """Read a trace file.  Returns ``(records, skipped_row_count)``.

    ``aggregate='mean_ratio'`` averages each user's per-row loss ratios;
    ``'pooled'`` divides the user's summed lost packets by summed packets.
    Packet counts and throughput are averaged per user either way.
    """
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    if aggregate not in ("mean_ratio", "pooled"):
        raise ValueError(f"unknown aggregation {aggregate!r}")
    per_user: dict[str, list[tuple[float, float, float]]] = {}
    skipped = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in cols.values() if c not in (reader.fieldnames or [])]
        if missing and reader.fieldnames:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            try:
                uid = row[cols["user_id"]].strip()
                recv = float(row[cols["received"]])
                lost = float(row[cols["lost"]])
                tput = float(row[cols["throughput"]])
            except (TypeError, ValueError, KeyError):
                skipped += 1
                continue
            if not uid or recv < 0 or lost < 0 or recv + lost <= 0 or not tput > 0:
                skipped += 1
                continue
            per_user.setdefault(uid, []).append((recv, lost, tput))
    if not per_user:
        raise ValueError(f"{path}: no valid trace rows ({skipped} skipped)")
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    records = []
    for uid, rows in per_user.items():
        arr = np.array(rows)
        recv, lost, tput = arr.mean(axis=0)
        if aggregate == "mean_ratio":
            ratio = float(np.mean(arr[:, 1] / (arr[:, 0] + arr[:, 1])))
        else:
            ratio = float(arr[:, 1].sum() / arr[:, :2].sum())
        records.append(UserNetRecord(uid, float(recv), float(lost), float(tput), ratio))
    return records, skipped


def cdf(values) -> list[tuple[float, float]]:
    """Empirical CDF as ``(value, fraction <= value)`` at each distinct value."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("cdf of an empty sample")
    uniq, counts = np.unique(v, return_counts=True)
    return list(zip(uniq.tolist(), (np.cumsum(counts) / v.size).tolist()))


def cdf_at(values, x: float) -> float:
    """Fraction of values <= x."""
    v = np.asarray(values, dtype=float)
    return float(np.count_nonzero(v <= x) / v.size)


def eligible_ratio_at(records: list[UserNetRecord], speed_threshold_mbps: float) -> float:
    """Fraction of users whose throughput is strictly above the threshold."""
    if not records:
        raise ValueError("no trace records")
    speeds = np.array([r.throughput_mbps for r in records])
    return float(np.count_nonzero(speeds > speed_threshold_mbps) / speeds.size)


def write_cdf_csv(points: list[tuple[float, float]], path: str | Path, value_name: str = "value") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([value_name, "cumulative_fraction"])
        for x, f in points:
            w.writerow([repr(x), f"{f:.6f}"])
    return path

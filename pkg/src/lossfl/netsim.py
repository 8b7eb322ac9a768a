"""Client network profiles and packetized, lossy parameter uploads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NetworkProfile:
    sufficient: bool
    loss_ratio: float = 0.0
    upload_speed_mbps: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.loss_ratio < 1.0:
            raise ValueError(f"loss ratio must lie in [0, 1), got {self.loss_ratio}")
        if self.upload_speed_mbps is not None and self.upload_speed_mbps <= 0:
            raise ValueError("upload speed must be positive")


@dataclass
class TransmitResult:
    received: np.ndarray
    drop_mask: np.ndarray  # bool, True = entry arrived
    packets_total: int
    packets_dropped: int
    retransmissions: int

    @property
    def drop_fraction(self) -> float:
        """Fraction of parameter entries lost after retransmission."""
        return 1.0 - float(self.drop_mask.mean()) if self.drop_mask.size else 0.0


def assign_profiles(
    num_clients: int,
    eligible_ratio: float,
    loss_ratio: float,
    rng: np.random.Generator,
    speeds: tuple[float, float] | None = None,
) -> list[NetworkProfile]:
    """Mark ``floor((1 - eligible_ratio) * num_clients)`` random clients insufficient.

    The clients are ranked by one random permutation and the worst-ranked are
    made insufficient, so under a fixed generator the insufficient set at a
    lower eligible ratio contains the set at any higher ratio.  ``speeds`` is
    an optional ``(sufficient_mbps, insufficient_mbps)`` pair.
    """
    if num_clients < 1:
        raise ValueError("num_clients must be >= 1")
    if not 0.0 < eligible_ratio <= 1.0:
        raise ValueError("eligible_ratio must lie in (0, 1]")
    if not 0.0 <= loss_ratio < 1.0:
        raise ValueError("loss_ratio must lie in [0, 1)")
    # small epsilon keeps e.g. (1 - 0.7) * 100 = 30.000000000000004 at 30
    n_bad = math.floor((1.0 - eligible_ratio) * num_clients + 1e-9)
    bad = set(rng.permutation(num_clients)[:n_bad].tolist())
    fast, slow = speeds if speeds is not None else (None, None)
    return [
        NetworkProfile(False, loss_ratio, slow) if k in bad else NetworkProfile(True, 0.0, fast)
        for k in range(num_clients)
    ]


def sufficiency_report(profile: NetworkProfile) -> int:
    """One-bit self report: 1 if sufficient, 0 otherwise."""
    return 1 if profile.sufficient else 0


def packet_mask(dim: int, packet_size: int, loss_ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Per-packet Bernoulli survival mask (True = packet arrived)."""
    n_packets = -(-dim // packet_size)
    return rng.random(n_packets) >= loss_ratio


def transmit(
    params: np.ndarray,
    profile: NetworkProfile,
    packet_size: int,
    rng: np.random.Generator,
    forced_packets: np.ndarray | None = None,
) -> TransmitResult:
    """Upload ``params`` in contiguous packets of ``packet_size`` entries.

    Insufficient clients lose each packet independently with probability
    ``profile.loss_ratio`` and the lost entries are zero-filled.  Sufficient
    clients retransmit every dropped packet, so their payload arrives intact.
    ``forced_packets`` overrides the random per-packet survival mask.
    """
    if packet_size < 1:
        raise ValueError("packet_size must be >= 1")
    dim = params.shape[0]
    n_packets = -(-dim // packet_size)
    if forced_packets is None:
        arrived = packet_mask(dim, packet_size, profile.loss_ratio, rng)
    else:
        arrived = np.asarray(forced_packets, dtype=bool)
        if arrived.shape != (n_packets,):
            raise ValueError(f"forced mask needs {n_packets} packets")
    dropped = int(n_packets - arrived.sum())
    if profile.sufficient:
        return TransmitResult(params.copy(), np.ones(dim, dtype=bool), n_packets, dropped, dropped)
    mask = np.repeat(arrived, packet_size)[:dim]
    return TransmitResult(np.where(mask, params, 0.0), mask, n_packets, dropped, 0)


def round_time(profiles: list[NetworkProfile], payload_bytes: int, tra: bool) -> float | None:
    """Simulated upload time of one round: the slowest selected client.

    Each client needs ``payload_bytes * 8 / (speed * 1e6)`` seconds per
    attempt.  Without TRA an insufficient client also waits for
    ``ceil(r / (1 - r))`` retransmission rounds; with TRA it never retransmits.
    Returns None when any profile lacks a speed.
    """
    if payload_bytes <= 0:
        raise ValueError("payload_bytes must be positive")
    if not profiles or any(p.upload_speed_mbps is None for p in profiles):
        return None
    worst = 0.0
    for p in profiles:
        extra = 0 if (p.sufficient or tra) else math.ceil(p.loss_ratio / (1.0 - p.loss_ratio))
        worst = max(worst, payload_bytes * 8 / (p.upload_speed_mbps * 1e6) * (1 + extra))
    return worst

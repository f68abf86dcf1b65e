"""Transport emulation: per-link latency, jitter, loss and ordering.

Links are modeled end to end: a send samples one latency from
base +/- jitter (uniform, integer microseconds) and one loss draw. Ordering
is enforced per sender for links that forbid reordering: a frame never
overtakes an earlier frame from the same sender, it is held until the
earlier one is due. Dropped frames never gate later ones.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np


@dataclass(frozen=True)
class LinkProfile:
    name: str
    base_latency_us: int
    jitter_us: int
    loss_probability: float
    reorder_allowed: bool = False

    def __post_init__(self) -> None:
        if self.base_latency_us < 0 or self.jitter_us < 0:
            raise ValueError("latency and jitter must be non-negative")
        if self.jitter_us > self.base_latency_us:
            raise ValueError("jitter half-width cannot exceed base latency")
        if not (0.0 <= self.loss_probability <= 1.0) or not math.isfinite(self.loss_probability):
            raise ValueError("loss_probability must be in [0, 1]")


URLLC = LinkProfile("urllc", base_latency_us=1000, jitter_us=200,
                    loss_probability=1e-5, reorder_allowed=False)
DEGRADED = LinkProfile("degraded", base_latency_us=20000, jitter_us=5000,
                       loss_probability=1e-2, reorder_allowed=False)

BUILTIN_LINKS = {p.name: p for p in (URLLC, DEGRADED)}


@dataclass(frozen=True)
class InTransit:
    """Outcome of one send: either a future delivery or a drop.

    delivery_time is the raw sampled arrival; in-order holding (see
    DeliveryQueue) may hand the frame over later but never earlier.
    """

    payload: bytes
    link: LinkProfile
    sender: Hashable
    send_time: int
    delivery_time: int
    dropped: bool

    def __post_init__(self) -> None:
        if not self.dropped and self.delivery_time < self.send_time:
            raise ValueError("delivery cannot precede send")


def send(payload: bytes, link: LinkProfile, now: int,
         rng: np.random.Generator, sender: Hashable = None) -> InTransit:
    """Sample one transit through the link.

    Both the latency and the loss draw are always consumed, so a stream of
    sends advances the generator identically whether or not frames drop.
    """
    jitter = int(rng.integers(-link.jitter_us, link.jitter_us + 1)) if link.jitter_us else 0
    dropped = bool(rng.random() < link.loss_probability)
    latency = link.base_latency_us + jitter
    return InTransit(payload=payload, link=link, sender=sender,
                     send_time=now, delivery_time=now + latency, dropped=dropped)


class DeliveryQueue:
    """Time-ordered delivery with per-sender in-order enforcement.

    Frames are handed over at their effective time: the raw sampled arrival,
    or the previous same-sender frame's effective time if that is later and
    the link forbids reordering. poll() must be called with non-decreasing
    `now`; each delivered frame is returned exactly once.
    """

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, InTransit]] = []
        self._last_effective: dict[Hashable, int] = {}
        self._seq = 0
        self._last_poll: int | None = None
        self.dropped_count = 0
        self.delivered_count = 0

    def offer(self, item: InTransit) -> int | None:
        """Enqueue a transit. Returns the effective delivery time, or None if dropped."""
        if item.dropped:
            self.dropped_count += 1
            return None
        effective = item.delivery_time
        if not item.link.reorder_allowed:
            prev = self._last_effective.get(item.sender)
            if prev is not None and prev > effective:
                effective = prev
            self._last_effective[item.sender] = effective
        heapq.heappush(self._heap, (effective, self._seq, item))
        self._seq += 1
        return effective

    def poll(self, now: int) -> list[tuple[int, InTransit]]:
        """Return all (effective_time, frame) pairs due at or before `now`."""
        if self._last_poll is not None and now < self._last_poll:
            raise ValueError("poll time went backwards")
        self._last_poll = now
        due = []
        while self._heap and self._heap[0][0] <= now:
            effective, _, item = heapq.heappop(self._heap)
            due.append((effective, item))
            self.delivered_count += 1
        return due

    def next_time(self) -> int | None:
        """Effective time of the earliest pending frame, if any."""
        return self._heap[0][0] if self._heap else None

    def pending(self) -> int:
        return len(self._heap)

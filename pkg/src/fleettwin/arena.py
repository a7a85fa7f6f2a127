"""Static mission-space geometry shared by the twin and the simulated robots.

Everything here is immutable per run, so socket-mode robot processes can
rebuild an identical arena from the scenario file without synchronization.
Obstacles are advisory: they decide scout verdicts, not collisions.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

Point = tuple[float, float]


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, p: Point) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1


@dataclass(frozen=True)
class Asset:
    id: str
    kind: str
    position: Point
    pinned_severity: float | None = None


@dataclass(frozen=True)
class ItemSpec:
    id: str
    kind: str
    position: Point  # starting position


@dataclass(frozen=True)
class Arena:
    width: float
    height: float
    locations: dict[str, Point] = field(default_factory=dict)
    obstacles: tuple[Rect, ...] = ()
    assets: dict[str, Asset] = field(default_factory=dict)
    items: dict[str, ItemSpec] = field(default_factory=dict)

    def path_blocked(self, a: Point, b: Point) -> bool:
        return any(segment_intersects_rect(a, b, rect) for rect in self.obstacles)


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def segment_intersects_rect(a: Point, b: Point, rect: Rect) -> bool:
    """Axis-aligned slab clipping (Liang-Barsky)."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for delta, lo, hi, start in (
        (dx, rect.x0, rect.x1, a[0]),
        (dy, rect.y0, rect.y1, a[1]),
    ):
        if delta == 0.0:
            if start < lo or start > hi:
                return False
            continue
        ta = (lo - start) / delta
        tb = (hi - start) / delta
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


def scan_severity(asset: Asset, seed: int) -> float:
    """Deterministic stand-in for the radar scan: pinned value if the
    scenario fixes one, else a stable hash of (asset, seed)."""
    if asset.pinned_severity is not None:
        return round(asset.pinned_severity, 3)
    digest = hashlib.sha256(f"{asset.id}:{seed}".encode()).digest()
    raw = int.from_bytes(digest[:4], "big") / 0xFFFFFFFF
    return round(raw, 3)


def scan_subsurface(asset: Asset, seed: int) -> bool:
    digest = hashlib.sha256(f"{asset.id}:{seed}:sub".encode()).digest()
    return digest[0] % 2 == 1

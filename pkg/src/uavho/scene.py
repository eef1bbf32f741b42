"""Street geometry and kinematics.

Coordinates are metres: ``x`` runs along the street, ``y`` across it and
``z`` is height above the road surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_USER_HEIGHT = 1.5
# Stations may sit on facades just outside the paved street.
STREET_MARGIN = 5.0
_FOV_EPS = 1e-9
_BISECT_TOL = 1e-6


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite vector component: {self!r}")

    @classmethod
    def of(cls, seq: Iterable[float]) -> "Vec3":
        x, y, z = (float(c) for c in seq)
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def replace(self, **kw) -> "Vec3":
        d = {"x": self.x, "y": self.y, "z": self.z}
        d.update(kw)
        return Vec3(**d)


@dataclass(frozen=True)
class ObstacleBox:
    """Axis-aligned box, e.g. a parked bus."""

    center: Vec3
    half_extents: Vec3

    def __post_init__(self):
        h = self.half_extents
        if min(h.x, h.y, h.z) <= 0:
            raise ValueError("obstacle half_extents must be strictly positive")

    @property
    def lo(self) -> np.ndarray:
        return self.center.as_array() - self.half_extents.as_array()

    @property
    def hi(self) -> np.ndarray:
        return self.center.as_array() + self.half_extents.as_array()

    @cached_property
    def bounds(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        c, h = self.center, self.half_extents
        return (c.x - h.x, c.y - h.y, c.z - h.z), (c.x + h.x, c.y + h.y, c.z + h.z)

    @property
    def top(self) -> float:
        return self.center.z + self.half_extents.z

    def contains(self, p: Vec3) -> bool:
        a = p.as_array()
        return bool(np.all(a >= self.lo) and np.all(a <= self.hi))


@dataclass(frozen=True)
class Trajectory:
    """Constant-velocity motion starting at ``start``."""

    start: Vec3
    velocity: Vec3
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("trajectory duration must be > 0")

    @property
    def speed(self) -> float:
        return self.velocity.norm()

    def position(self, t: float) -> Vec3:
        return self.start + self.velocity.scale(t)


@dataclass(frozen=True)
class CameraFov:
    """Conical field of view of a station-mounted camera."""

    mount: Vec3
    facing: Vec3
    half_angle: float
    max_range: float

    def __post_init__(self):
        n = self.facing.norm()
        if n == 0:
            raise ValueError("camera facing must be non-zero")
        # normalise so callers may pass any direction
        object.__setattr__(self, "facing", self.facing.scale(1.0 / n))
        if not 0 < self.half_angle < math.pi / 2:
            raise ValueError("camera half_angle must lie in (0, pi/2)")
        if not self.max_range > 0:
            raise ValueError("camera max_range must be > 0")


@dataclass(frozen=True)
class Station:
    id: str
    position: Vec3
    camera: Optional[CameraFov] = None


@dataclass(frozen=True)
class StreetScenario:
    street_length: float
    street_width: float
    sbs: tuple[Station, ...]
    uav: Station
    obstacles: tuple[ObstacleBox, ...] = ()
    user_height: float = DEFAULT_USER_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, "sbs", tuple(self.sbs))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.street_length > 0:
            raise ValueError("street_length must be > 0")
        if not self.street_width > 0:
            raise ValueError("street_width must be > 0")
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate station ids: {ids}")
        for s in self.stations:
            p = s.position
            if not (-STREET_MARGIN <= p.x <= self.street_length + STREET_MARGIN
                    and -STREET_MARGIN <= p.y <= self.street_width + STREET_MARGIN
                    and p.z >= 0):
                raise ValueError(f"station {s.id} is not inside or adjacent to the street")
        for ob in self.obstacles:
            if self.uav.position.z <= ob.top:
                raise ValueError(
                    f"uav height {self.uav.position.z} must exceed obstacle top {ob.top}")

    @property
    def stations(self) -> tuple[Station, ...]:
        return self.sbs + (self.uav,)

    @property
    def station_ids(self) -> list[str]:
        return [s.id for s in self.stations]

    def station(self, station_id: str) -> Station:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise KeyError(f"unknown station id {station_id!r}")

    def with_uav_z(self, z: float) -> "StreetScenario":
        uav = Station(self.uav.id, self.uav.position.replace(z=z), self.uav.camera)
        return StreetScenario(self.street_length, self.street_width, self.sbs, uav,
                              self.obstacles, self.user_height)


def _segment_hits_box(p0: tuple, p1: tuple, lo: tuple, hi: tuple) -> bool:
    # slab test restricted to the open parameter range (0, 1); the box is closed.
    # Plain floats: this runs for every station on every tick.
    t_enter, t_exit = -math.inf, math.inf
    for a, b, l, h in zip(p0, p1, lo, hi):
        d = b - a
        if d == 0.0:
            if a < l or a > h:
                return False
            continue
        t1 = (l - a) / d
        t2 = (h - a) / d
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_enter:
            t_enter = t1
        if t2 < t_exit:
            t_exit = t2
        if t_enter > t_exit:
            return False
    return t_enter < 1.0 and t_exit > 0.0


def los_clear(tx: Vec3, rx: Vec3, obstacles: Sequence[ObstacleBox]) -> bool:
    """True iff the open segment ``tx -> rx`` misses every obstacle."""
    if tx == rx:
        raise ValueError("coincident endpoints")
    # fixed endpoint order keeps the answer exactly symmetric under rounding
    p0, p1 = sorted(((tx.x, tx.y, tx.z), (rx.x, rx.y, rx.z)))
    return not any(_segment_hits_box(p0, p1, *ob.bounds) for ob in obstacles)


def elevation_angles(uav: Vec3, user: Vec3) -> tuple[float, float, float]:
    """Return ``(theta, alpha, d)`` for a transmitter above the user.

    ``theta`` is measured from the vertical, so it is zero when the user is
    directly below; ``alpha = pi/2 - theta`` is the angle fed to the antenna
    pattern and ``d`` is the straight-line distance.
    """
    vertical = uav.z - user.z
    if vertical <= 0:
        raise ValueError("UAV below user")
    horizontal = math.hypot(uav.x - user.x, uav.y - user.y)
    theta = math.atan2(horizontal, vertical)
    return theta, math.pi / 2 - theta, math.hypot(horizontal, vertical)


def in_fov(cam: CameraFov, p: Vec3) -> bool:
    rel = p - cam.mount
    dist = rel.norm()
    if dist > cam.max_range * (1 + _FOV_EPS):
        return False
    if dist == 0:
        return True
    cos_a = (rel.x * cam.facing.x + rel.y * cam.facing.y + rel.z * cam.facing.z) / dist
    angle = math.acos(max(-1.0, min(1.0, cos_a)))
    return angle <= cam.half_angle + _FOV_EPS


_PAIRS = {10: tuple(np.array(ix) for ix in zip(*combinations(range(10), 2)))}


def _blocked_interval(traj: Trajectory, tx: Vec3, box: ObstacleBox) -> Optional[tuple[float, float]]:
    """Times in ``[0, duration]`` at which the box cuts the ``tx`` link.

    With ``q = tx + s*(p0 - tx) + u*v`` and ``u = s*t`` every constraint is
    linear in ``(s, u)``, so the feasible set is a polygon and the extreme
    values of ``t = u/s`` sit on its vertices. The shadow of a convex box is
    convex, so the blocked set along a straight path is one interval.
    """
    t_end = traj.duration
    a = traj.start.as_array() - tx.as_array()
    v = traj.velocity.as_array()
    c0 = tx.as_array()
    rows, rhs = [], []
    for k in range(3):
        rows.append((a[k], v[k]))
        rhs.append(box.hi[k] - c0[k])
        rows.append((-a[k], -v[k]))
        rhs.append(c0[k] - box.lo[k])
    rows += [(1.0, 0.0), (-1.0, 0.0), (0.0, -1.0), (-t_end, 1.0)]
    rhs += [1.0, 0.0, 0.0, 0.0]
    A = np.array(rows)
    b = np.array(rhs)
    tol = 1e-9 * (1.0 + np.abs(A).sum(axis=1) + np.abs(b))
    i, j = _PAIRS[len(rows)]
    det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
    ok = np.abs(det) >= 1e-14
    i, j, det = i[ok], j[ok], det[ok]
    # Cramer's rule for every pair of active constraints at once
    s = (b[i] * A[j, 1] - A[i, 1] * b[j]) / det
    u = (A[i, 0] * b[j] - b[i] * A[j, 0]) / det
    keep = s > 1e-12
    s, u = s[keep], u[keep]
    feasible = np.all(A @ np.vstack((s, u)) - b[:, None] <= tol[:, None], axis=0)
    ratios = np.clip(u[feasible] / s[feasible], 0.0, t_end)
    if ratios.size == 0:
        return None
    return float(ratios.min()), float(ratios.max())


def occlusion_intervals(traj: Trajectory, tx: Vec3,
                        obstacles: Sequence[ObstacleBox]) -> list[tuple[float, float]]:
    """Per-obstacle blocked time intervals (unmerged, sorted by entry)."""
    out = [iv for ob in obstacles if (iv := _blocked_interval(traj, tx, ob)) is not None]
    return sorted(out)


def time_to_occlusion(traj: Trajectory, tx: Vec3,
                      obstacles: Sequence[ObstacleBox]) -> Optional[float]:
    """Earliest time the link from ``tx`` to the moving user is blocked."""
    if not obstacles:
        return None
    if not los_clear(tx, traj.start, obstacles):
        return 0.0
    best = None
    for t_in, t_out in occlusion_intervals(traj, tx, obstacles):
        if best is not None and t_in >= best:
            break
        t_hit = _refine_entry(traj, tx, obstacles, t_in, t_out)
        if t_hit is not None and (best is None or t_hit < best):
            best = t_hit
    return best


def _refine_entry(traj, tx, obstacles, t_in, t_out):
    # the analytic vertex may sit a rounding error outside the shadow;
    # bisect between a clear time and a blocked one
    def blocked(t):
        return not los_clear(tx, traj.position(t), obstacles)

    hi = 0.5 * (t_in + t_out)
    if not blocked(hi):
        if blocked(t_in):
            hi = t_in
        elif blocked(t_out):
            hi = t_out
        else:
            return None
    lo = max(0.0, t_in - 10 * _BISECT_TOL)
    if blocked(lo):
        return lo if lo == 0.0 else _bisect(blocked, 0.0, lo)
    return _bisect(blocked, lo, hi)


def _bisect(blocked, lo, hi):
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if blocked(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _segments_hit_box(p0: np.ndarray, p1: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # vectorised twin of _segment_hits_box: one tx, many rx points (rows of p1)
    d = p1 - p0
    t_enter = np.full(len(p1), -np.inf)
    t_exit = np.full(len(p1), np.inf)
    outside = np.zeros(len(p1), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            flat = d[:, k] == 0.0
            outside |= flat & ((p0[k] < lo[k]) | (p0[k] > hi[k]))
            t1 = (lo[k] - p0[k]) / d[:, k]
            t2 = (hi[k] - p0[k]) / d[:, k]
            t_enter = np.where(flat, t_enter, np.maximum(t_enter, np.minimum(t1, t2)))
            t_exit = np.where(flat, t_exit, np.minimum(t_exit, np.maximum(t1, t2)))
    return ~outside & (t_enter <= t_exit) & (t_enter < 1.0) & (t_exit > 0.0)


def time_to_occlusion_oracle(traj: Trajectory, tx: Vec3,
                             obstacles: Sequence[ObstacleBox], dt: float) -> Optional[float]:
    """Brute-force scan of ``time_to_occlusion`` at step ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not obstacles:
        return None
    n = int(math.floor(traj.duration / dt + 1e-9))
    times = np.arange(n + 1) * dt
    if n * dt < traj.duration:
        times = np.append(times, traj.duration)
    pts = traj.start.as_array() + np.outer(times, traj.velocity.as_array())
    p0 = tx.as_array()
    if np.any(np.all(pts == p0, axis=1)):
        raise ValueError("coincident endpoints")
    blocked = np.zeros(len(times), dtype=bool)
    for ob in obstacles:
        blocked |= _segments_hit_box(p0, pts, ob.lo, ob.hi)
    if not blocked.any():
        return None
    return float(times[np.argmax(blocked)])

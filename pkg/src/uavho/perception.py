"""Ground-truth stand-in for the camera pipeline.

Detections are the true entity positions plus optional Gaussian noise in
world coordinates. From the user's recent detections we estimate its
velocity, extrapolate the path and look for the point where the serving
link enters the blocker's shadow.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .scene import CameraFov, ObstacleBox, Trajectory, Vec3, in_fov, time_to_occlusion

# "no impending block" stands in for infinity so comparisons stay total
T_MAX = 86400.0
DEFAULT_FRAME_PERIOD = 1.0 / 30.0
DEFAULT_SPEED_WINDOW = 10
DEFAULT_HORIZON = 10.0


class ObjectClass(enum.Enum):
    USER = "user"
    BLOCKER = "blocker"


@dataclass(frozen=True)
class SceneEntity:
    object_class: ObjectClass
    position: Vec3
    half_extents: Optional[Vec3] = None


@dataclass(frozen=True)
class Detection:
    object_class: ObjectClass
    position_est: Vec3
    frame_t: float
    half_extents: Optional[Vec3] = None


@dataclass(frozen=True)
class BlkEvent:
    t: float
    user_pos_est: Vec3
    user_speed_est: float
    blocker_pos: Vec3
    distance_to_block_point: float
    user_velocity_est: Vec3 = Vec3(0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.user_speed_est < 0:
            raise ValueError("speed estimate must be >= 0")
        if self.distance_to_block_point < 0:
            raise ValueError("distance to block point must be >= 0")


@dataclass(frozen=True)
class TimingBudget:
    """Latency budget of one proactive handover, seconds."""

    t_rgb: float = 0.040
    t_odl: float = 0.102
    t_inf: float = 0.001
    t_ho: float = 0.010

    def __post_init__(self):
        for name in ("t_rgb", "t_odl", "t_inf", "t_ho"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


class TblkPredictor(Protocol):
    def predict(self, event: BlkEvent) -> float: ...


class GeometricPredictor:
    """Time to block = remaining distance / estimated speed."""

    def predict(self, event: BlkEvent) -> float:
        if event.user_speed_est <= 0:
            return T_MAX
        return min(event.distance_to_block_point / event.user_speed_est, T_MAX)


def t_exec(budget: TimingBudget) -> float:
    return budget.t_rgb + budget.t_odl + budget.t_inf + budget.t_ho


def t_w_max(t_blk: float, t_exec: float) -> float:
    """Waiting margin; negative means the handover cannot finish in time."""
    return t_blk - t_exec


def predict_t_blk(event: BlkEvent, predictor: Optional[TblkPredictor] = None) -> float:
    p = (predictor or GeometricPredictor()).predict(event)
    if p < 0:
        raise ValueError(f"predictor returned negative time {p}")
    return p


def odl_detect(entities: Sequence[SceneEntity], cam: CameraFov, noise_sigma: float,
               rng: np.random.Generator, frame_t: float = 0.0,
               bounds: Optional[tuple[float, float]] = None) -> list[Detection]:
    """Detect every entity inside the camera cone.

    Positions get independent ``N(0, noise_sigma)`` errors on x and y; height
    is left exact. With ``bounds=(length, width)`` estimates are clamped to
    the street.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    out = []
    for e in entities:
        if not in_fov(cam, e.position):
            continue
        dx, dy = rng.normal(0.0, noise_sigma, size=2)
        x, y = e.position.x + dx, e.position.y + dy
        if bounds is not None:
            x = min(max(x, 0.0), bounds[0])
            y = min(max(y, 0.0), bounds[1])
        out.append(Detection(e.object_class, Vec3(x, y, e.position.z), frame_t, e.half_extents))
    return out


def _window(history: Sequence[tuple[float, Vec3]], window: int):
    if len(history) < 2:
        raise ValueError("need at least 2 samples to estimate speed")
    if window < 1:
        raise ValueError("window must be >= 1")
    recent = history[-(window + 1):]
    t = np.array([h[0] for h in recent], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    return t, np.array([h[1].as_array() for h in recent])


def estimate_velocity(history: Sequence[tuple[float, Vec3]],
                      window: int = DEFAULT_SPEED_WINDOW) -> Vec3:
    """Least-squares velocity over the last ``window`` frame intervals."""
    t, pos = _window(history, window)
    tc = t - t.mean()
    slope = tc @ (pos - pos.mean(axis=0)) / (tc @ tc)
    return Vec3.of(slope)


def estimate_speed(history: Sequence[tuple[float, Vec3]],
                   window: int = DEFAULT_SPEED_WINDOW) -> float:
    return estimate_velocity(history, window).norm()


def blk_event_check(frames: Sequence[Sequence[Detection]], tx: Vec3,
                    window: int = DEFAULT_SPEED_WINDOW,
                    horizon: float = DEFAULT_HORIZON) -> Optional[BlkEvent]:
    """Raise a blockage event from the serving camera's recent frames.

    ``frames`` holds one detection list per frame, oldest first. An event
    needs the user and at least one blocker in the latest frame and a
    predicted path that enters a blocker's shadow within ``horizon``.
    """
    if not frames:
        return None
    current = frames[-1]
    users = [d for d in current if d.object_class is ObjectClass.USER]
    blockers = [d for d in current
                if d.object_class is ObjectClass.BLOCKER and d.half_extents is not None]
    if not users or not blockers:
        return None
    history = []
    for frame in frames:
        for d in frame:
            if d.object_class is ObjectClass.USER:
                history.append((d.frame_t, d.position_est))
                break
    if len(history) < 2:
        return None
    vel = estimate_velocity(history, window)
    speed = vel.norm()
    here = users[0].position_est
    if here == tx:
        return None
    boxes = [ObstacleBox(b.position_est, b.half_extents) for b in blockers]
    t_occ = time_to_occlusion(Trajectory(here, vel, horizon), tx, boxes)
    if t_occ is None:
        return None
    nearest = min(blockers, key=lambda b: (b.position_est - here).norm())
    return BlkEvent(users[0].frame_t, here, speed, nearest.position_est,
                    t_occ * speed, vel)


class FrameBuffer:
    """Rolling per-camera frame history for one simulation."""

    def __init__(self, window: int = DEFAULT_SPEED_WINDOW):
        self.frames: deque[list[Detection]] = deque(maxlen=window + 1)

    def push(self, detections: list[Detection]) -> None:
        self.frames.append(detections)

    def __len__(self) -> int:
        return len(self.frames)

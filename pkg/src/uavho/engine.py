"""Fixed-step simulation loop, run metrics, height sweep and A/B comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import DIPOLE_H, ChannelParams, LinkSample, calibrate_p_tx, rssi_at
from .handover import (DEFAULT_UAV_ID, ConnectionState, HandoverDecision, Phase,
                       TriggerConfig, step_controller)
from .perception import (DEFAULT_FRAME_PERIOD, DEFAULT_HORIZON, DEFAULT_SPEED_WINDOW,
                         BlkEvent, FrameBuffer, ObjectClass, SceneEntity, TimingBudget,
                         blk_event_check, odl_detect)
from .scene import (CameraFov, ObstacleBox, Station, StreetScenario, Trajectory, Vec3,
                    los_clear)

MAX_TICKS = 10_000_000

# Calibration anchor: peak UAV RSSI directly overhead at 15 m clearance.
UAV_CALIBRATION_DBM = -48.0
UAV_CALIBRATION_CLEARANCE = 15.0
DEFAULT_SBS_P_TX_DBM = 36.5


@dataclass(frozen=True)
class SimConfig:
    scenario: StreetScenario
    sbs_channel: ChannelParams
    uav_channel: ChannelParams
    trajectory: Trajectory
    budget: TimingBudget = TimingBudget()
    trigger: TriggerConfig = TriggerConfig()
    dt: float = 0.005
    seed: int = 0
    noise_sigma: float = 0.0
    frame_period: float = DEFAULT_FRAME_PERIOD
    speed_window: int = DEFAULT_SPEED_WINDOW
    horizon: float = DEFAULT_HORIZON
    initial_serving: Optional[str] = None
    calibration: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.frame_period > 0:
            raise ValueError("frame_period must be > 0")
        if self.dt > self.frame_period:
            raise ValueError("dt must not exceed the camera frame period")
        if self.trajectory.duration / self.dt > MAX_TICKS:
            raise ValueError(f"duration/dt exceeds {MAX_TICKS} ticks")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.speed_window < 1:
            raise ValueError("speed_window must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.initial_serving is not None:
            self.scenario.station(self.initial_serving)

    @property
    def n_ticks(self) -> int:
        return int(round(self.trajectory.duration / self.dt)) + 1

    def channel_for(self, station_id: str) -> ChannelParams:
        return self.uav_channel if station_id == self.scenario.uav.id else self.sbs_channel


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: str
    payload: object = None


@dataclass
class RunTrace:
    samples: list[LinkSample]
    events: list[Event] = field(default_factory=list)
    config_echo: Optional[SimConfig] = None

    def ticks(self) -> list[tuple[float, list[LinkSample]]]:
        """Samples grouped by tick, in time order."""
        out: list[tuple[float, list[LinkSample]]] = []
        for s in self.samples:
            if out and out[-1][0] == s.t:
                out[-1][1].append(s)
            else:
                out.append((s.t, [s]))
        return out

    def serving_series(self) -> list[Optional[LinkSample]]:
        """Serving sample per tick, None while disconnected."""
        return [next((s for s in group if s.serving), None) for _, group in self.ticks()]

    def station_series(self, station_id: str) -> list[LinkSample]:
        return [s for s in self.samples if s.station_id == station_id]

    @property
    def dt(self) -> float:
        if self.config_echo is not None:
            return self.config_echo.dt
        times = [t for t, _ in self.ticks()]
        return times[1] - times[0] if len(times) > 1 else 0.0


@dataclass(frozen=True)
class Metrics:
    outage_s: float
    ho_count: int
    mean_serving_rssi_dbm: float
    min_serving_rssi_dbm: float
    normalized_rssi: tuple[float, ...]
    improvement_pct: Optional[float] = None


def default_config(**overrides) -> SimConfig:
    """The reference street: one bus, three SBSs and a UAV hovering over the bus."""
    bus = ObstacleBox(Vec3(45.0, 7.0, 2.0), Vec3(6.0, 1.5, 2.0))
    toward_bus = Vec3(-1.0, -0.35, -0.15)
    sbs = (
        Station("SBS1", Vec3(75.0, 14.0, 6.0), CameraFov(Vec3(75.0, 14.0, 6.0), toward_bus,
                                                         math.radians(60), 80.0)),
        Station("SBS2", Vec3(15.0, -5.0, 6.0), CameraFov(Vec3(15.0, -5.0, 6.0),
                                                         Vec3(1.0, 0.3, -0.1),
                                                         math.radians(60), 80.0)),
        Station("SBS3", Vec3(45.0, -5.0, 6.0), CameraFov(Vec3(45.0, -5.0, 6.0),
                                                         Vec3(0.0, 1.0, -0.3),
                                                         math.radians(70), 60.0)),
    )
    uav = Station(DEFAULT_UAV_ID, Vec3(45.0, 5.0, 20.0))
    scenario = StreetScenario(90.0, 15.0, sbs, uav, (bus,))
    traj = Trajectory(Vec3(88.0, 5.0, scenario.user_height), Vec3(-10.0, 0.0, 0.0), 8.8)
    uav_ch = ChannelParams(tx_antenna=DIPOLE_H)
    p_uav = calibrate_p_tx(uav_ch, UAV_CALIBRATION_DBM, UAV_CALIBRATION_CLEARANCE)
    cfg = SimConfig(
        scenario=scenario,
        sbs_channel=ChannelParams(p_tx_dbm=DEFAULT_SBS_P_TX_DBM),
        uav_channel=replace(uav_ch, p_tx_dbm=p_uav),
        trajectory=traj,
        calibration={"uav_p_tx_dbm": p_uav, "target_dbm": UAV_CALIBRATION_DBM,
                     "clearance_m": UAV_CALIBRATION_CLEARANCE},
    )
    return replace(cfg, **overrides) if overrides else cfg


def _frame_ticks(cfg: SimConfig) -> set[int]:
    n = cfg.n_ticks
    out, j = set(), 0
    while True:
        k = int(round(j * cfg.frame_period / cfg.dt))
        if k >= n:
            return out
        out.add(k)
        j += 1


def _initial_serving(cfg: SimConfig, samples: Sequence[LinkSample]) -> str:
    if cfg.initial_serving is not None:
        return cfg.initial_serving
    uav_id = cfg.scenario.uav.id
    ok = [s for s in samples if s.los and (s.station_id != uav_id or cfg.trigger.uav_allowed)]
    if not ok:
        ok = list(samples)
    return min(ok, key=lambda s: (-s.rssi_dbm, s.station_id)).station_id


def _describe(state: ConnectionState) -> str:
    if state.phase is Phase.HANDOVER:
        return f"{state.phase.value}:{state.serving}>{state.target}"
    return f"{state.phase.value}:{state.serving}"


def run(cfg: SimConfig) -> RunTrace:
    """Simulate one traverse; a pure function of ``cfg``."""
    sc = cfg.scenario
    rng = np.random.default_rng(cfg.seed)
    frames = _frame_ticks(cfg)
    buffers = {s.id: FrameBuffer(cfg.speed_window) for s in sc.stations if s.camera}
    blockers = [SceneEntity(ObjectClass.BLOCKER, ob.center, ob.half_extents)
                for ob in sc.obstacles]
    bounds = (sc.street_length, sc.street_width)
    uav_id = sc.uav.id
    floor = cfg.sbs_channel.rssi_floor_dbm
    samples: list[LinkSample] = []
    events: list[Event] = []
    state: Optional[ConnectionState] = None

    for k in range(cfg.n_ticks):
        t = k * cfg.dt
        user = cfg.trajectory.position(t)
        tick = [rssi_at(sc, cfg.channel_for(s.id), s.id, user, t) for s in sc.stations]
        rssi_map = {s.station_id: s for s in tick}
        if state is None:
            state = ConnectionState(_initial_serving(cfg, tick))

        blk: Optional[BlkEvent] = None
        if k in frames:
            entities = [SceneEntity(ObjectClass.USER, user)] + blockers
            for s in sc.stations:
                if s.camera is not None:
                    buffers[s.id].push(odl_detect(entities, s.camera, cfg.noise_sigma, rng, t,
                                                   bounds))
            wants_blk = (cfg.trigger.enabled and state.phase is Phase.CONNECTED
                         and state.episode is None and state.serving in buffers)
            if wants_blk:
                blk = blk_event_check(list(buffers[state.serving].frames),
                                      sc.station(state.serving).position,
                                      cfg.speed_window, cfg.horizon)
                if blk is not None:
                    events.append(Event(t, "blk", f"station={state.serving};"
                                        f"speed={blk.user_speed_est:.6g};"
                                        f"distance={blk.distance_to_block_point:.6g}", blk))

        before = state
        state, decision = step_controller(state, t, blk, rssi_map, cfg.budget, cfg.trigger,
                                          floor_dbm=floor, uav_id=uav_id)
        if decision is not None:
            if not decision.t_blk > decision.t_exec:
                raise RuntimeError(f"decision with t_blk <= t_exec at t={t}")
            events.append(Event(t, "ho_decision", _decision_detail(decision), decision))
        if (before.phase, before.serving, before.target) != (state.phase, state.serving,
                                                             state.target):
            events.append(Event(t, "state", f"{_describe(before)}->{_describe(state)}"))

        serving = None if state.phase is Phase.DISCONNECTED else state.serving
        if serving is not None and serving not in rssi_map:
            raise RuntimeError(f"serving station {serving!r} unknown at t={t}")
        samples.extend(replace(s, serving=s.station_id == serving) for s in tick)

    return RunTrace(samples, events, cfg)


def _decision_detail(d: HandoverDecision) -> str:
    return (f"from={d.from_station};to={d.to_station};t_blk={d.t_blk:.6g};"
            f"t_exec={d.t_exec:.6g};t_w={d.t_w:.6g};D={d.trigger_distance:.6g}")


def _serving_values(trace: RunTrace) -> list[Optional[float]]:
    return [None if s is None else s.rssi_dbm for s in trace.serving_series()]


def metrics(trace: RunTrace, pool: Optional[Sequence[RunTrace]] = None) -> Metrics:
    """Run metrics; ``pool`` is the comparison set sharing the normalisation scale."""
    series = _serving_values(trace)
    if not series:
        raise ValueError("empty trace")
    pool = [trace] if pool is None else list(pool)
    if not any(p is trace for p in pool):
        pool.append(trace)
    union = [v for p in pool for v in _serving_values(p) if v is not None]
    served = [v for v in series if v is not None]
    outage = trace.dt * (len(series) - len(served))
    ho = 0
    prev = None
    for s in trace.serving_series():
        if s is None:
            continue
        if prev is not None and s.station_id != prev:
            ho += 1
        prev = s.station_id
    lo, hi = (min(union), max(union)) if union else (0.0, 0.0)
    norm = tuple(0.0 if v is None else (1.0 if hi == lo else (v - lo) / (hi - lo))
                 for v in series)
    nan = float("nan")
    return Metrics(outage, ho, float(np.mean(served)) if served else nan,
                   min(served) if served else nan, norm)


def shadow_mask(trace: RunTrace, station_id: str) -> np.ndarray:
    """Ticks at which ``station_id`` has no line of sight to the user."""
    return np.array([not s.los for s in trace.station_series(station_id)], dtype=bool)


@dataclass(frozen=True)
class Comparison:
    uav_trace: RunTrace
    baseline_trace: RunTrace
    uav_metrics: Metrics
    baseline_metrics: Metrics
    improvement_pct: float
    shadow_station: str


def compare(base: SimConfig, arms: tuple[bool, bool] = (True, False)) -> Comparison:
    """Run the UAV-assisted and the ground-only controller on the same seed.

    ``arms`` gives ``uav_allowed`` for the two runs; it exists so that tests
    can force two identical arms.
    """
    traces = [run(replace(base, trigger=replace(base.trigger, uav_allowed=a))) for a in arms]
    uav_tr, base_tr = traces
    first = base_tr.serving_series()[0]
    if first is None:
        raise ValueError("no blockage to compare")
    mask = shadow_mask(base_tr, first.station_id)
    if not mask.any():
        raise ValueError("no blockage to compare")
    mu, mb = (metrics(tr, traces) for tr in traces)
    nu = float(np.mean(np.asarray(mu.normalized_rssi)[mask]))
    nb = float(np.mean(np.asarray(mb.normalized_rssi)[mask]))
    if nb > 0:
        imp = 100.0 * (nu - nb) / nb
    else:
        imp = 0.0 if nu == nb else math.inf
    return Comparison(uav_tr, base_tr, replace(mu, improvement_pct=imp),
                      replace(mb, improvement_pct=imp), imp, first.station_id)


def sweep_heights(base: SimConfig, heights: Sequence[float]) -> list[tuple[float, RunTrace, float]]:
    """Rerun ``base`` with the UAV at each clearance above the user antenna."""
    out = []
    top = max((ob.top for ob in base.scenario.obstacles), default=0.0)
    for h in heights:
        z = h + base.scenario.user_height
        if not h > 0 or z <= top:
            raise ValueError(f"height {h} does not clear the obstacles (top {top})")
        tr = run(replace(base, scenario=base.scenario.with_uav_z(z)))
        uav_id = base.scenario.uav.id
        # the UAV link alone: ground stations would mask the height dependence
        peak = max(s.rssi_dbm for s in tr.station_series(uav_id))
        out.append((h, tr, peak))
    return out


def ground_truth_shadow(cfg: SimConfig, station_id: str) -> float:
    """Seconds the user spends in ``station_id``'s shadow, sampled on the tick grid."""
    tx = cfg.scenario.station(station_id).position
    hits = sum(not los_clear(tx, cfg.trajectory.position(k * cfg.dt), cfg.scenario.obstacles)
               for k in range(cfg.n_ticks))
    return hits * cfg.dt

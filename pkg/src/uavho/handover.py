"""Proactive handover controller.

A blockage event starts an *episode*: the first feasible prediction fixes
the waiting budget ``S_u * (T_blk - T_exec)``, i.e. how far the user may
travel before the handover has to be initiated. The controller waits while
the budget lasts (staying on the good link) and fires once the remaining
slack drops under ``lead_s``. The switch lands ``T_exec`` after the frame
that triggered it, because the frame still has to be shipped, detected and
inferred on before the handover itself runs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from .channel import LinkSample
from .perception import BlkEvent, TblkPredictor, TimingBudget, predict_t_blk, t_exec, t_w_max

DEFAULT_UAV_ID = "UAV"


class Phase(enum.Enum):
    CONNECTED = "Connected"
    HANDOVER = "HandoverInProgress"
    DISCONNECTED = "Disconnected"


@dataclass(frozen=True)
class Episode:
    """Reference prediction taken at the first feasible BLK frame."""

    t0: float
    s_u: float
    t_blk: float
    t_exec: float

    @property
    def budget_distance(self) -> float:
        return self.s_u * (self.t_blk - self.t_exec)


@dataclass(frozen=True)
class ConnectionState:
    serving: str
    phase: Phase = Phase.CONNECTED
    target: Optional[str] = None
    completes_at: Optional[float] = None
    episode: Optional[Episode] = None
    # station lost when the link dropped; used for re-attachment
    lost: Optional[str] = None


@dataclass(frozen=True)
class TriggerConfig:
    enabled: bool = True
    uav_allowed: bool = True
    rssi_hysteresis_db: float = 0.0
    # fire when the remaining waiting slack falls below this; inf = fire at once
    lead_s: float = 0.1
    reconnect_margin_db: float = 3.0

    def __post_init__(self):
        if not self.rssi_hysteresis_db >= 0:
            raise ValueError("rssi_hysteresis_db must be >= 0")
        if not self.lead_s >= 0:
            raise ValueError("lead_s must be >= 0")
        if not self.reconnect_margin_db >= 0:
            raise ValueError("reconnect_margin_db must be >= 0")


@dataclass(frozen=True)
class HandoverDecision:
    t: float
    from_station: str
    to_station: str
    t_blk: float
    t_exec: float
    t_w: float
    trigger_distance: float
    s_u: float


def trigger_ok(s_u: float, t_blk: float, t_exec: float, distance_to_block_point: float) -> bool:
    """Feasibility gate: enough time left and still inside the trigger region."""
    if s_u < 0:
        raise ValueError("speed must be >= 0")
    return t_blk > t_exec and distance_to_block_point <= s_u * (t_blk - t_exec)


def select_target(candidates: Sequence[tuple[str, float]], current: tuple[str, float],
                  uav_allowed: bool, hysteresis: float = 0.0,
                  uav_id: str = DEFAULT_UAV_ID) -> str:
    """Pick the handover target.

    The UAV wins only if it strictly beats both the current link and the best
    ground station by ``hysteresis``; otherwise the strongest ground station is
    chosen, ties going to the lowest id. Stays on ``current`` when nothing
    else qualifies.
    """
    if not candidates:
        raise ValueError("empty candidate list")
    ground = [(sid, r) for sid, r in candidates if sid != uav_id and sid != current[0]]
    best_ground = min(ground, key=lambda c: (-c[1], c[0])) if ground else None
    uav = [r for sid, r in candidates if sid == uav_id]
    if uav_allowed and uav:
        ref = current[1] if best_ground is None else max(current[1], best_ground[1])
        if uav[0] > ref + hysteresis:
            return uav_id
    return best_ground[0] if best_ground else current[0]


def _reattach(state: ConnectionState, rssi_map: Mapping[str, LinkSample], cfg: TriggerConfig,
              floor_dbm: float, uav_id: str) -> Optional[str]:
    threshold = floor_dbm + cfg.reconnect_margin_db
    if not cfg.enabled:
        # no mobility management: only the lost link can come back
        s = rssi_map[state.lost] if state.lost else None
        return state.lost if s is not None and s.los and s.rssi_dbm >= threshold else None
    ok = [(sid, s.rssi_dbm) for sid, s in rssi_map.items()
          if s.los and s.rssi_dbm >= threshold and (cfg.uav_allowed or sid != uav_id)]
    if not ok:
        return None
    return min(ok, key=lambda c: (-c[1], c[0]))[0]


def step_controller(state: ConnectionState, t: float, blk: Optional[BlkEvent],
                    rssi_map: Mapping[str, LinkSample], budget: TimingBudget,
                    cfg: TriggerConfig, predictor: Optional[TblkPredictor] = None,
                    floor_dbm: float = -120.0, uav_id: str = DEFAULT_UAV_ID,
                    ) -> tuple[ConnectionState, Optional[HandoverDecision]]:
    """Advance the controller by one tick."""
    if state.phase is Phase.HANDOVER and t >= state.completes_at - 1e-12:
        state = ConnectionState(state.target)

    if state.phase is Phase.DISCONNECTED:
        sid = _reattach(state, rssi_map, cfg, floor_dbm, uav_id)
        if sid is None:
            return state, None
        state = ConnectionState(sid)

    if not rssi_map[state.serving].los:
        return ConnectionState(state.serving, Phase.DISCONNECTED, lost=state.serving), None

    if state.phase is not Phase.CONNECTED or not cfg.enabled:
        return state, None

    ep = state.episode
    if ep is None:
        if blk is None:
            return state, None
        te = t_exec(budget)
        t_blk = predict_t_blk(blk, predictor)
        if not t_blk > te:
            return state, None
        ep = Episode(t, blk.user_speed_est, t_blk, te)
        state = replace(state, episode=ep)
    travelled = ep.s_u * (t - ep.t0)
    # time left before the handover must start to beat the blockage
    slack = ep.t_blk - ep.t_exec - (t - ep.t0)
    if slack > cfg.lead_s:
        return state, None
    if not trigger_ok(ep.s_u, ep.t_blk, ep.t_exec, travelled):
        # the predicted block never came; wait for a fresh event
        return replace(state, episode=None), None
    current = (state.serving, rssi_map[state.serving].rssi_dbm)
    cands = [(sid, s.rssi_dbm) for sid, s in rssi_map.items() if sid != state.serving]
    target = select_target(cands, current, cfg.uav_allowed, cfg.rssi_hysteresis_db, uav_id)
    if target == state.serving:
        return state, None
    decision = HandoverDecision(t, state.serving, target, ep.t_blk, ep.t_exec,
                                t_w_max(ep.t_blk, ep.t_exec), travelled, ep.s_u)
    return (ConnectionState(state.serving, Phase.HANDOVER, target, t + ep.t_exec, ep),
            decision)

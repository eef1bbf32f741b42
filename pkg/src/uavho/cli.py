"""Command-line front end.

    uavho run      CONFIG [--out DIR] [--set key=value ...]
    uavho sweep    CONFIG [--heights 15,20,25,30] [--out DIR] [--set ...]
    uavho compare  CONFIG [--out DIR] [--set ...]
    uavho validate CONFIG [--set ...]

Exit codes: 0 success, 1 config or usage error, 2 runtime or I/O error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import engine
from .channel import (CIRCULAR_L, CIRCULAR_R, DIPOLE_H, DIPOLE_V, ISOTROPIC, LINEAR_H,
                      LINEAR_V, AntennaOrientation, ChannelParams, LinkSample,
                      calibrate_p_tx)
from .handover import TriggerConfig
from .perception import TimingBudget
from .scene import CameraFov, ObstacleBox, Station, StreetScenario, Trajectory, Vec3

TRACE_HEADER = ["t_s", "station_id", "rssi_dbm", "los", "serving"]
EVENTS_HEADER = ["t_s", "event_type", "detail"]
DEFAULT_HEIGHTS = (15.0, 20.0, 25.0, 30.0)


class ConfigError(Exception):
    """Bad config file, override or value; maps to exit code 1."""


# Documented defaults; a config file only needs the keys it changes.
DEFAULTS: dict[str, Any] = {
    "scenario": {"street_length": 90.0, "street_width": 15.0, "user_height": 1.5},
    "sbs": {
        "SBS1": {"position": [75.0, 14.0, 6.0],
                 "camera": {"facing": [-1.0, -0.35, -0.15], "half_angle_deg": 60.0,
                            "max_range": 80.0}},
        "SBS2": {"position": [15.0, -5.0, 6.0],
                 "camera": {"facing": [1.0, 0.3, -0.1], "half_angle_deg": 60.0,
                            "max_range": 80.0}},
        "SBS3": {"position": [45.0, -5.0, 6.0],
                 "camera": {"facing": [0.0, 1.0, -0.3], "half_angle_deg": 70.0,
                            "max_range": 60.0}},
    },
    "uav": {"id": "UAV", "x": 45.0, "y": 5.0, "height": 20.0},
    "obstacles": {"bus": {"center": [45.0, 7.0, 2.0], "half_extents": [6.0, 1.5, 2.0]}},
    "channel": {
        "sbs": {"p_tx_dbm": engine.DEFAULT_SBS_P_TX_DBM, "antenna": "isotropic"},
        "uav": {"antenna": "dipole_h",
                "calibrate_dbm": engine.UAV_CALIBRATION_DBM,
                "calibrate_clearance_m": engine.UAV_CALIBRATION_CLEARANCE},
    },
    "trajectory": {"start": [88.0, 5.0], "velocity": [-10.0, 0.0], "duration": 8.8},
    "budget": {},
    "trigger": {},
    "engine": {},
}

# sections whose tables replace the defaults wholesale when given in a file
_REPLACED = ("sbs", "obstacles")

_ANTENNAS = {"isotropic": ISOTROPIC, "dipole_h": DIPOLE_H, "dipole_v": DIPOLE_V}
_POLS = {"linear_v": LINEAR_V, "linear_h": LINEAR_H,
         "circular_l": CIRCULAR_L, "circular_r": CIRCULAR_R}


# -- config ----------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        # bare words such as station ids
        return text


def apply_override(doc: dict, item: str) -> None:
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key or any(not p for p in key.split(".")):
        raise ConfigError(f"override {item!r} is not of the form key=value")
    node = doc
    parts = key.split(".")
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key}: {p} is not a table")
        node = nxt
    node[parts[-1]] = _parse_value(value.strip())


_REQUIRED = object()


class _Table:
    """Typed access to one config table with the dotted path in every error."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table")
        self.data, self.path, self.used = data, path, set()

    def _get(self, key, default):
        self.used.add(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{self.path}.{key}: missing")
            return default
        return self.data[key]

    def num(self, key, default=None):
        v = self._get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{self.path}.{key}: expected a finite number, got {v!r}")
        return float(v)

    def int(self, key, default):
        v = self._get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self.path}.{key}: expected an integer, got {v!r}")
        return v

    def bool(self, key, default):
        v = self._get(key, default)
        if not isinstance(v, bool):
            raise ConfigError(f"{self.path}.{key}: expected true or false, got {v!r}")
        return v

    def str(self, key, default):
        v = self._get(key, default)
        if v is not None and not isinstance(v, str):
            raise ConfigError(f"{self.path}.{key}: expected a string, got {v!r}")
        return v

    def vec(self, key, n, default=_REQUIRED):
        v = self._get(key, default)
        if (not isinstance(v, list) or len(v) != n
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
            raise ConfigError(f"{self.path}.{key}: expected {n} numbers, got {v!r}")
        return [float(c) for c in v]

    def sub(self, key):
        return _Table(self._get(key, {}), f"{self.path}.{key}")

    def check_unused(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.path}.{extra[0]}: unknown key")


def _guard(path: str, fn, *args, **kw):
    # turn library ValueErrors into config errors that name the field
    try:
        return fn(*args, **kw)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _channel(t: _Table, p_tx_default: Optional[float]) -> tuple[ChannelParams, dict]:
    antenna = t.str("antenna", "isotropic")
    if antenna not in _ANTENNAS:
        raise ConfigError(f"{t.path}.antenna: expected one of {sorted(_ANTENNAS)}")
    peak = t.num("peak_gain", 1.0)
    pols = []
    for key in ("tx_pol", "rx_pol"):
        name = t.str(key, "linear_v")
        if name not in _POLS:
            raise ConfigError(f"{t.path}.{key}: expected one of {sorted(_POLS)}")
        pols.append(_POLS[name])
    base = ChannelParams()
    kw = dict(
        freq_hz=t.num("freq_hz", base.freq_hz),
        gamma=t.num("gamma", base.gamma),
        tx_antenna=_guard(f"{t.path}.peak_gain", AntennaOrientation,
                          _ANTENNAS[antenna].kind, peak),
        tx_pol=pols[0], rx_pol=pols[1],
        nlos_penalty_db=t.num("nlos_penalty_db", base.nlos_penalty_db),
        rssi_floor_dbm=t.num("rssi_floor_dbm", base.rssi_floor_dbm),
    )
    p_tx = t.num("p_tx_dbm", p_tx_default)
    cal_dbm = t.num("calibrate_dbm", None)
    cal_h = t.num("calibrate_clearance_m", None)
    t.check_unused()
    params = _guard(t.path, ChannelParams, p_tx_dbm=0.0, **kw)
    calibration = {}
    if p_tx is None:
        if cal_dbm is None or cal_h is None:
            raise ConfigError(f"{t.path}.p_tx_dbm: missing (or give calibrate_dbm "
                              "and calibrate_clearance_m)")
        if not cal_h > 0:
            raise ConfigError(f"{t.path}.calibrate_clearance_m: must be > 0")
        p_tx = calibrate_p_tx(params, cal_dbm, cal_h)
        calibration = {"uav_p_tx_dbm": p_tx, "target_dbm": cal_dbm, "clearance_m": cal_h}
    return _guard(f"{t.path}.p_tx_dbm", replace, params, p_tx_dbm=p_tx), calibration


def _camera(t: _Table, mount: Vec3) -> Optional[CameraFov]:
    if not t.data:
        return None
    facing = Vec3(*t.vec("facing", 3))
    half = t.num("half_angle_deg", None)
    rng = t.num("max_range", None)
    if half is None or rng is None:
        raise ConfigError(f"{t.path}: needs facing, half_angle_deg and max_range")
    t.check_unused()
    return _guard(t.path, CameraFov, mount, facing, math.radians(half), rng)


def build_config(doc: dict) -> engine.SimConfig:
    """Turn a merged config document into a validated :class:`SimConfig`."""
    root = _Table(doc, "config")
    known = set(DEFAULTS)
    for k in doc:
        if k not in known:
            raise ConfigError(f"{k}: unknown section")

    sc = root.sub("scenario")
    street_length = sc.num("street_length", 90.0)
    street_width = sc.num("street_width", 15.0)
    user_height = sc.num("user_height", 1.5)
    sc.check_unused()

    sbs_t = root.sub("sbs")
    stations = []
    for sid in sbs_t.data:
        st = sbs_t.sub(sid)
        pos = Vec3(*st.vec("position", 3))
        cam = _camera(st.sub("camera"), pos)
        st.check_unused()
        stations.append(Station(sid, pos, cam))
    if not stations:
        raise ConfigError("sbs: at least one station is required")

    ut = root.sub("uav")
    uav = Station(ut.str("id", "UAV"),
                  Vec3(ut.num("x", 45.0), ut.num("y", 5.0), ut.num("height", 20.0)))
    ut.check_unused()

    obs_t = root.sub("obstacles")
    obstacles = []
    for name in obs_t.data:
        ot = obs_t.sub(name)
        box = _guard(f"obstacles.{name}", ObstacleBox, Vec3(*ot.vec("center", 3)),
                     Vec3(*ot.vec("half_extents", 3)))
        ot.check_unused()
        obstacles.append(box)

    scenario = _guard("scenario", StreetScenario, street_length, street_width,
                      tuple(stations), uav, tuple(obstacles), user_height)

    ch = root.sub("channel")
    sbs_ch, _ = _channel(ch.sub("sbs"), None)
    uav_ch, calibration = _channel(ch.sub("uav"), None)
    ch.check_unused()

    tr = root.sub("trajectory")
    start = tr.vec("start", 2)
    vel = tr.vec("velocity", 2)
    traj = _guard("trajectory.duration", Trajectory, Vec3(start[0], start[1], user_height),
                  Vec3(vel[0], vel[1], 0.0), tr.num("duration", 8.8))
    tr.check_unused()

    bt = root.sub("budget")
    d = TimingBudget()
    budget = _guard("budget", TimingBudget, bt.num("t_rgb", d.t_rgb), bt.num("t_odl", d.t_odl),
                    bt.num("t_inf", d.t_inf), bt.num("t_ho", d.t_ho))
    bt.check_unused()

    tt = root.sub("trigger")
    d = TriggerConfig()
    trigger = _guard("trigger", TriggerConfig, tt.bool("enabled", d.enabled),
                     tt.bool("uav_allowed", d.uav_allowed),
                     tt.num("rssi_hysteresis_db", d.rssi_hysteresis_db),
                     tt.num("lead_s", d.lead_s),
                     tt.num("reconnect_margin_db", d.reconnect_margin_db))
    tt.check_unused()

    et = root.sub("engine")
    kw = dict(
        dt=et.num("dt", 0.005), seed=et.int("seed", 0), noise_sigma=et.num("noise_sigma", 0.0),
        frame_period=et.num("frame_period", engine.DEFAULT_FRAME_PERIOD),
        speed_window=et.int("speed_window", engine.DEFAULT_SPEED_WINDOW),
        horizon=et.num("horizon", engine.DEFAULT_HORIZON),
        initial_serving=et.str("initial_serving", None),
    )
    et.check_unused()
    return _guard("engine", engine.SimConfig, scenario, sbs_ch, uav_ch, traj, budget, trigger,
                  calibration=calibration, **kw)


def load_config(path: Optional[str | Path], overrides: Sequence[str] = ()) -> engine.SimConfig:
    """Read a TOML config (``None`` = defaults only) and apply dotted overrides."""
    doc = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            user = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: parse error: {exc}") from None
        for key in _REPLACED:
            if key in user:
                doc[key] = {}
        doc = _merge(doc, user)
    for item in overrides:
        apply_override(doc, item)
    return build_config(doc)


# -- output ----------------------------------------------------------------

def _g(x: float) -> str:
    return f"{x:.6g}"


def emit_trace_csv(trace: engine.RunTrace, path: str | Path,
                   events_path: Optional[str | Path] = None) -> None:
    """Write ``trace.csv`` (one row per tick and station) and the events file."""
    path = Path(path)
    if events_path is None:
        events_path = path.with_name(path.name.replace("trace", "events", 1)
                                     if "trace" in path.name else "events.csv")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for s in trace.samples:
            w.writerow([_g(s.t), s.station_id, _g(s.rssi_dbm), int(s.los), int(s.serving)])
    with open(events_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EVENTS_HEADER)
        for e in trace.events:
            w.writerow([_g(e.t), e.kind, e.detail])


def parse_trace_csv(path: str | Path) -> engine.RunTrace:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != TRACE_HEADER:
        raise ValueError(f"{path}: missing trace header")
    samples = [LinkSample(float(t), sid, float(r), los == "1", srv == "1")
               for t, sid, r, los, srv in rows[1:]]
    return engine.RunTrace(samples)


def _metric_lines(m: engine.Metrics, prefix: str = "") -> list[str]:
    return [f"{prefix}outage_s={_g(m.outage_s)}", f"{prefix}ho_count={m.ho_count}",
            f"{prefix}mean_serving_rssi_dbm={_g(m.mean_serving_rssi_dbm)}",
            f"{prefix}min_serving_rssi_dbm={_g(m.min_serving_rssi_dbm)}"]


def report(lines: Sequence[str], out_dir: Optional[Path]) -> None:
    """Print the summary and mirror it to ``summary.txt``."""
    for line in lines:
        print(line)
    if out_dir is not None:
        (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


# -- commands ----------------------------------------------------------------

def _cmd_run(cfg, args, out):
    tr = engine.run(cfg)
    emit_trace_csv(tr, out / "trace.csv", out / "events.csv")
    return _metric_lines(engine.metrics(tr))


def _cmd_sweep(cfg, args, out):
    lines = []
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["height_m", "peak_rssi_dbm"])
        for h, tr, peak in engine.sweep_heights(cfg, args.heights):
            w.writerow([_g(h), _g(peak)])
            emit_trace_csv(tr, out / f"trace_h{_g(h)}.csv", out / f"events_h{_g(h)}.csv")
            lines.append(f"peak_rssi_dbm.h{_g(h)}={_g(peak)}")
    return lines


def _cmd_compare(cfg, args, out):
    c = engine.compare(cfg)
    emit_trace_csv(c.uav_trace, out / "trace_uav.csv", out / "events_uav.csv")
    emit_trace_csv(c.baseline_trace, out / "trace_baseline.csv", out / "events_baseline.csv")
    return ([f"improvement_pct={_g(c.improvement_pct)}"]
            + _metric_lines(c.uav_metrics, "uav.") + _metric_lines(c.baseline_metrics, "baseline."))


def _cmd_validate(cfg, args, out):
    return ["status=ok", f"stations={','.join(cfg.scenario.station_ids)}",
            f"uav_p_tx_dbm={_g(cfg.uav_channel.p_tx_dbm)}",
            f"ticks={cfg.n_ticks}"]


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare,
             "validate": _cmd_validate}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _heights(text: str) -> list[float]:
    try:
        hs = [float(h) for h in text.split(",") if h.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad height list {text!r}") from None
    if not hs:
        raise argparse.ArgumentTypeError("empty height list")
    return hs


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavho", description="UAV-assisted proactive handover simulator")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in _COMMANDS:
        s = sub.add_parser(verb)
        s.add_argument("config", nargs="?", help="TOML config; omit for the defaults")
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted override, e.g. uav.height=25")
        if verb != "validate":
            s.add_argument("--out", default="out", help="output directory (default: out)")
        if verb == "sweep":
            s.add_argument("--heights", type=_heights, default=list(DEFAULT_HEIGHTS),
                           help="comma-separated UAV clearances in metres")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    out = None
    try:
        if args.verb != "validate":
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
        lines = _COMMANDS[args.verb](cfg, args, out)
        report(lines, out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

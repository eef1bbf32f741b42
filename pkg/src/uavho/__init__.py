"""Street-scale mmWave simulator for camera-triggered, UAV-assisted handover."""
from .channel import ChannelParams, LinkSample
from .engine import Metrics, RunTrace, SimConfig, compare, default_config, metrics, run, sweep_heights
from .handover import ConnectionState, HandoverDecision, Phase, TriggerConfig
from .perception import BlkEvent, TimingBudget
from .scene import ObstacleBox, Station, StreetScenario, Trajectory, Vec3

__all__ = [
    "BlkEvent", "ChannelParams", "ConnectionState", "HandoverDecision", "LinkSample", "Metrics",
    "ObstacleBox", "Phase", "RunTrace", "SimConfig", "Station", "StreetScenario", "TimingBudget",
    "Trajectory", "TriggerConfig", "Vec3", "compare", "default_config", "metrics", "run",
    "sweep_heights",
]
__version__ = "0.1.0"

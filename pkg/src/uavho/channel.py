"""Analytic radio layer: antenna patterns, polarisation, Friis, RSSI."""
from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .scene import StreetScenario, Vec3, elevation_angles, los_clear

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_FREQ_HZ = 60e9
DEFAULT_NLOS_PENALTY_DB = 20.0
DEFAULT_RSSI_FLOOR_DBM = -120.0
# Linear gains below this (-200 dB) are rounding residue of an exact null,
# e.g. cos(pi/2)**2, and count as a lost signal.
_NULL_GAIN = 1e-20


class AntennaKind(enum.Enum):
    ISOTROPIC = "isotropic"
    DIPOLE_HORIZONTAL = "dipole_h"
    DIPOLE_VERTICAL = "dipole_v"


@dataclass(frozen=True)
class AntennaOrientation:
    kind: AntennaKind = AntennaKind.ISOTROPIC
    peak_gain: float = 1.0

    def __post_init__(self):
        if not self.peak_gain > 0:
            raise ValueError("peak_gain must be > 0")


ISOTROPIC = AntennaOrientation()
DIPOLE_H = AntennaOrientation(AntennaKind.DIPOLE_HORIZONTAL)
DIPOLE_V = AntennaOrientation(AntennaKind.DIPOLE_VERTICAL)


class PolKind(enum.Enum):
    LINEAR = "linear"
    CIRCULAR_L = "circular_l"
    CIRCULAR_R = "circular_r"


@dataclass(frozen=True)
class Polarization:
    """Linear polarisation at tilt ``psi`` (0 = horizontal) or circular."""

    kind: PolKind = PolKind.LINEAR
    psi: float = math.pi / 2

    def __post_init__(self):
        if self.kind is PolKind.LINEAR and not 0 <= self.psi < math.pi:
            raise ValueError("linear polarisation angle must lie in [0, pi)")

    @classmethod
    def linear(cls, psi: float) -> "Polarization":
        return cls(PolKind.LINEAR, psi)


LINEAR_V = Polarization.linear(math.pi / 2)
LINEAR_H = Polarization.linear(0.0)
CIRCULAR_L = Polarization(PolKind.CIRCULAR_L, 0.0)
CIRCULAR_R = Polarization(PolKind.CIRCULAR_R, 0.0)


@dataclass(frozen=True)
class ChannelParams:
    p_tx_dbm: float = 30.0
    freq_hz: float = DEFAULT_FREQ_HZ
    gamma: float = 2.0
    tx_antenna: AntennaOrientation = ISOTROPIC
    rx_antenna: AntennaOrientation = ISOTROPIC
    tx_pol: Polarization = LINEAR_V
    rx_pol: Polarization = LINEAR_V
    nlos_penalty_db: float = DEFAULT_NLOS_PENALTY_DB
    rssi_floor_dbm: float = DEFAULT_RSSI_FLOOR_DBM

    def __post_init__(self):
        if not self.freq_hz > 0:
            raise ValueError("freq_hz must be > 0")
        if not self.gamma >= 1:
            raise ValueError("gamma must be >= 1")
        if not self.nlos_penalty_db >= 0:
            raise ValueError("nlos_penalty_db must be >= 0")
        if not math.isfinite(self.rssi_floor_dbm):
            raise ValueError("rssi_floor_dbm must be finite")
        if not math.isfinite(self.p_tx_dbm):
            raise ValueError("p_tx_dbm must be finite")


@dataclass(frozen=True)
class MultipathComponent:
    """One propagation path of the narrowband phasor model.

    ``aod``/``aoa`` are ``(azimuth, elevation)`` pairs; the elevation entry is
    the pattern angle handed to :func:`dipole_gain`.
    """

    index: int
    d: float
    gamma_refl: complex = 1.0
    tau: float = 0.0
    pol_mismatch: float = 1.0
    aod: tuple[float, float] = (0.0, math.pi / 2)
    aoa: tuple[float, float] = (0.0, math.pi / 2)

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("index must be >= 0")
        if not self.d > 0:
            raise ValueError("path length must be > 0")
        if self.tau < 0:
            raise ValueError("delay must be >= 0")
        if not 0 <= self.pol_mismatch <= 1:
            raise ValueError("pol_mismatch must lie in [0, 1]")
        if abs(self.gamma_refl) > 1 + 1e-12:
            raise ValueError("|gamma_refl| must be <= 1")


@dataclass(frozen=True)
class LinkSample:
    t: float
    station_id: str
    rssi_dbm: float
    los: bool
    serving: bool = False


def wavelength(freq_hz: float) -> float:
    if not freq_hz > 0:
        raise ValueError("frequency must be > 0")
    return SPEED_OF_LIGHT / freq_hz


def dipole_gain(alpha: float, antenna: AntennaOrientation) -> float:
    """Linear gain at pattern angle ``alpha`` (radians, in [0, pi])."""
    if not 0 <= alpha <= math.pi:
        raise ValueError(f"alpha={alpha} outside [0, pi]")
    if antenna.kind is AntennaKind.ISOTROPIC:
        return antenna.peak_gain
    if antenna.kind is AntennaKind.DIPOLE_HORIZONTAL:
        return antenna.peak_gain * math.sin(alpha) ** 2
    return antenna.peak_gain * math.cos(alpha) ** 2


def polarization_loss(tx_pol: Polarization, rx_pol: Polarization) -> float:
    circ = {PolKind.CIRCULAR_L, PolKind.CIRCULAR_R}
    if tx_pol.kind is PolKind.LINEAR and rx_pol.kind is PolKind.LINEAR:
        return math.cos(tx_pol.psi - rx_pol.psi) ** 2
    if tx_pol.kind in circ and rx_pol.kind in circ:
        return 1.0 if tx_pol.kind is rx_pol.kind else 0.0
    return 0.5


def friis_rx_power(params: ChannelParams, alpha: float, d: float) -> float:
    """Received power in dBm for a link of length ``d`` at pattern angle ``alpha``."""
    if not d > 0:
        raise ValueError("distance must be > 0")
    gain = (dipole_gain(alpha, params.tx_antenna) * dipole_gain(alpha, params.rx_antenna)
            * polarization_loss(params.tx_pol, params.rx_pol))
    if gain <= _NULL_GAIN:
        return params.rssi_floor_dbm
    lam = wavelength(params.freq_hz)
    return (params.p_tx_dbm + 10 * math.log10(gain)
            - 10 * params.gamma * math.log10(4 * math.pi * d / lam))


def los_rx_power_uav(p_tx_dbm: float, theta: float, freq_hz: float, d: float,
                     rssi_floor_dbm: float = DEFAULT_RSSI_FLOOR_DBM) -> float:
    """Closed-form LOS power from a horizontal-dipole UAV at elevation ``theta``."""
    if not 0 <= theta <= math.pi / 2:
        raise ValueError("theta must lie in [0, pi/2]")
    params = ChannelParams(p_tx_dbm=p_tx_dbm, freq_hz=freq_hz, gamma=2.0,
                           tx_antenna=DIPOLE_H, rx_antenna=ISOTROPIC,
                           rssi_floor_dbm=rssi_floor_dbm)
    return friis_rx_power(params, math.pi / 2 - theta, d)


def rx_signal_multipath(tx_amplitude: complex, components: Sequence[MultipathComponent],
                        freq_hz: float, tx_antenna: AntennaOrientation = ISOTROPIC,
                        rx_antenna: AntennaOrientation = ISOTROPIC) -> complex:
    """Complex baseband amplitude of the single-tone multipath sum."""
    if not components:
        raise ValueError("at least one multipath component is required")
    lam = wavelength(freq_hz)
    total = 0j
    for c in components:
        g = dipole_gain(c.aod[1], tx_antenna) * dipole_gain(c.aoa[1], rx_antenna)
        total += (lam / (4 * math.pi * c.d) * c.gamma_refl * math.sqrt(g) * c.pol_mismatch
                  * cmath.exp(-2j * math.pi * c.d / lam))
    return total * tx_amplitude


def link_rx_power(params: ChannelParams, tx: Vec3, rx: Vec3) -> float:
    """Unobstructed received power between two points, unclamped."""
    if tx.z > rx.z:
        _, alpha, d = elevation_angles(tx, rx)
    else:
        # station at or below the user: same pattern angle, measured upward
        horizontal = math.hypot(tx.x - rx.x, tx.y - rx.y)
        vertical = rx.z - tx.z
        alpha = math.pi / 2 - math.atan2(horizontal, vertical)
        d = math.hypot(horizontal, vertical)
    return friis_rx_power(params, alpha, d)


def rssi_at(scenario: StreetScenario, params: ChannelParams, station: str,
            user: Vec3, t: float) -> LinkSample:
    """Sample the link from ``station`` to the user at time ``t``."""
    st = scenario.station(station)
    los = los_clear(st.position, user, scenario.obstacles)
    p = link_rx_power(params, st.position, user)
    if not los:
        p -= params.nlos_penalty_db
    return LinkSample(t, station, max(p, params.rssi_floor_dbm), los)


def calibrate_p_tx(params: ChannelParams, target_dbm: float, clearance: float) -> float:
    """Transmit power that yields ``target_dbm`` directly below at ``clearance`` metres."""
    probe = replace(params, p_tx_dbm=0.0)
    return target_dbm - friis_rx_power(probe, math.pi / 2, clearance)

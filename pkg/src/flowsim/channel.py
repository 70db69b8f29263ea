"""THz in-body link budget and SINR-based reception decisions.

Path loss combines free-space spreading with bulk (or layered) medium
attenuation through vessel/tissue/skin. Reception fails below the receiver
sensitivity, on SINR collisions against time-overlapping transmissions, or
(never at physiological speeds) on excessive Doppler offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SPEED_OF_LIGHT = 3.0e8  # m/s


@dataclass
class ChannelParams:
    frequency: float = 1.0e12        # Hz
    bandwidth: float = 10.0e9        # Hz
    tx_power: float = -20.0          # dBm, both link ends
    sensitivity: float = -110.0      # dBm
    sinr_threshold: float = 10.0     # dB
    # noise floor sits sinr_threshold below the sensitivity so that, absent
    # interference, the SINR gate coincides with the sensitivity gate
    noise_floor: float = -120.0      # dBm
    attenuation_db_per_mm: float = 1.5
    # optional layered mode: [(name, dB/mm, thickness mm), ...] applied from
    # the receiver inward; remaining distance uses the last layer's rate
    medium_layers: list[tuple[str, float, float]] = field(default_factory=list)
    bit_time: float = 25e-6          # s per pulse slot; 40-bit report = 1 ms
    beacon_bits: int = 8
    report_bits: int = 40

    def airtime(self, bits: int) -> float:
        return bits * self.bit_time


@dataclass
class LinkBudget:
    distance: float          # m
    spreading_loss: float    # dB
    medium_loss: float       # dB
    received_power: float    # dBm
    doppler_shift: float = 0.0  # Hz


def _medium_loss_db(distance_m: float, params: ChannelParams) -> float:
    d_mm = distance_m * 1000.0
    if not params.medium_layers:
        return params.attenuation_db_per_mm * d_mm
    loss = 0.0
    remaining = d_mm
    rate = params.medium_layers[-1][1]
    for _, rate, thickness in params.medium_layers:
        step = min(thickness, remaining)
        loss += rate * step
        remaining -= step
        if remaining <= 0.0:
            return loss
    return loss + rate * remaining


def path_loss_db(distance: float, params: ChannelParams, relative_speed: float = 0.0) -> LinkBudget:
    """Link budget at `distance` metres; optional radial speed for Doppler."""
    if distance <= 0.0:
        raise ValueError("distance must be > 0")
    spreading = 20.0 * math.log10(
        4.0 * math.pi * distance * params.frequency / SPEED_OF_LIGHT
    )
    medium = _medium_loss_db(distance, params)
    return LinkBudget(
        distance=distance,
        spreading_loss=spreading,
        medium_loss=medium,
        received_power=params.tx_power - spreading - medium,
        doppler_shift=doppler_shift_hz(relative_speed, params),
    )


def doppler_shift_hz(relative_speed: float, params: ChannelParams) -> float:
    """Frequency offset for radial speed in m/s, positive when closing."""
    return params.frequency * relative_speed / SPEED_OF_LIGHT


def _dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def receive_decision(
    candidate: LinkBudget,
    interferers: list[LinkBudget],
    params: ChannelParams,
) -> tuple[bool, str]:
    """Adjudicate one reception against concurrent transmissions.

    Returns (accepted, reason); reason is 'ok', 'below_sensitivity',
    'collision', or 'doppler'.
    """
    if candidate.received_power < params.sensitivity:
        return False, "below_sensitivity"
    noise_mw = _dbm_to_mw(params.noise_floor)
    interference_mw = sum(_dbm_to_mw(i.received_power) for i in interferers)
    sinr_db = 10.0 * math.log10(_dbm_to_mw(candidate.received_power) / (noise_mw + interference_mw))
    if sinr_db < params.sinr_threshold:
        return False, "collision"
    if abs(candidate.doppler_shift) > params.bandwidth / 2.0:
        return False, "doppler"
    return True, "ok"


def communication_range_m(params: ChannelParams, tol: float = 1e-6) -> float:
    """Distance where the received power crosses the sensitivity (bisection)."""
    lo, hi = 1e-6, 1.0
    while path_loss_db(hi, params).received_power > params.sensitivity:
        hi *= 2.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if path_loss_db(mid, params).received_power >= params.sensitivity:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def propagation_delay_s(distance_m: float) -> float:
    return distance_m / SPEED_OF_LIGHT

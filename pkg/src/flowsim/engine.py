"""Deterministic simulation engine.

One scenario is a single-threaded loop over 10 ms macro-steps. Device state
lives in numpy arrays so the per-step work is a handful of vector ops;
per-device Python runs only for the rare events: segment crossings, sensing
samples near the event, and beacon slots with devices near the anchor.

Schedules: mobility every step, harvesting every `cycle` (20 ms), sensing
per device at its own phase and period, anchor beacons every 10 ms with
propagation-delayed, SINR-adjudicated receptions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng
from .channel import (
    ChannelParams,
    communication_range_m,
    path_loss_db,
    receive_decision,
)
from .mobility import MOBILITY_DT, DevicePosition, advance_device
from .power import PowerParams
from .protocol import CirculationState, PACKET_BITS, encode_report, exchange_outcome
from .topology import (
    VascularTopology,
    load_and_validate,
    point_to_polyline_distance,
    region_centroid,
)

MAX_DEVICES = 128  # device ids must fit the 7-bit packet field


class ConfigError(ValueError):
    """Raised for invalid scenario configurations."""


@dataclass(frozen=True)
class EventSpec:
    """Where the sensed event sits: explicit point, or region directive."""
    point: tuple[float, float, float] | None = None
    region: str | None = None
    placement: str = "centroid"  # or "random": uniform along the region's vessels

    def resolve(self, topo: VascularTopology, rng: np.random.Generator) -> tuple[float, float, float]:
        if self.point is not None:
            return self.point
        if self.region is None:
            raise ConfigError("event needs a point or a region")
        if self.placement == "centroid":
            return region_centroid(topo, self.region)
        if self.placement == "random":
            return random_point_in_region(topo, self.region, rng)
        raise ConfigError(f"unknown event placement '{self.placement}'")


def random_point_in_region(
    topo: VascularTopology, region: str, rng: np.random.Generator
) -> tuple[float, float, float]:
    """Uniform-by-length point on the region's vessel polylines."""
    segs = [topo.segments[sid] for sid in topo.regions[region]]
    lengths = np.array([s.length for s in segs])
    idx = int(rng.choice(len(segs), p=lengths / lengths.sum()))
    offset = float(rng.uniform(0.0, lengths[idx]))
    return segs[idx].point_at(offset)


@dataclass
class ScenarioConfig:
    topology: str | Path | VascularTopology
    n_devices: int = 64
    sampling_rate: float = 3.0        # samples/s
    detection_threshold: float = 1.0  # cm
    sim_time: float = 1100.0          # s
    event: EventSpec = field(default_factory=EventSpec)
    seed: int = 0
    power: PowerParams = field(default_factory=PowerParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    beacon_interval: float = 0.01     # s
    jitter_max: float = 0.005         # s
    audit: bool = False
    trace: bool = False               # record every response attempt

    def validate(self) -> "ScenarioConfig":
        if not 0 < self.n_devices <= MAX_DEVICES:
            raise ConfigError(f"n_devices must be in 1..{MAX_DEVICES}")
        if self.sampling_rate <= 0:
            raise ConfigError("sampling_rate must be > 0")
        if self.detection_threshold <= 0:
            raise ConfigError("detection_threshold must be > 0")
        if self.sim_time <= 0:
            raise ConfigError("sim_time must be > 0")
        if self.beacon_interval < MOBILITY_DT:
            raise ConfigError("beacon_interval must be >= the 10 ms mobility step")
        airtime = self.channel.airtime(self.channel.report_bits)
        if self.jitter_max + airtime > self.beacon_interval:
            raise ConfigError("jitter plus report airtime must fit one beacon interval")
        return self


# keys mirror the simulation-parameter table labels
_POWER_KEYS = {
    "generator_voltage_v": "generator_voltage",
    "e_rx_pulse_pj": "e_rx_pulse",
    "e_tx_pulse_pj": "e_tx_pulse",
    "e_max_pj": "e_max",
    "turn_on_pj": "turn_on",
    "turn_off_pj": "turn_off",
    "cycle_s": "cycle",
    "charge_per_cycle_pc": "charge_per_cycle",
    "e_sense_pj": "e_sense",
}
_CHANNEL_KEYS = {
    "frequency_hz": "frequency",
    "bandwidth_hz": "bandwidth",
    "tx_power_dbm": "tx_power",
    "sensitivity_dbm": "sensitivity",
    "sinr_threshold_db": "sinr_threshold",
    "noise_floor_dbm": "noise_floor",
    "attenuation_db_per_mm": "attenuation_db_per_mm",
    "bit_time_s": "bit_time",
    "beacon_bits": "beacon_bits",
    "report_bits": "report_bits",
}


def config_from_dict(data: dict, base_dir: Path | None = None) -> ScenarioConfig:
    try:
        topo_path = Path(data["topology"])
        if base_dir is not None and not topo_path.is_absolute():
            topo_path = base_dir / topo_path
        ev = data.get("event", {})
        if "point_cm" in ev:
            event = EventSpec(point=tuple(float(c) for c in ev["point_cm"]))
        else:
            event = EventSpec(region=ev.get("region"), placement=ev.get("placement", "centroid"))
        power = PowerParams(**{
            _POWER_KEYS[k]: float(v) for k, v in data.get("power", {}).items()
        })
        raw_channel = {_CHANNEL_KEYS[k]: v for k, v in data.get("channel", {}).items()}
        if "beacon_bits" in raw_channel:
            raw_channel["beacon_bits"] = int(raw_channel["beacon_bits"])
        if "report_bits" in raw_channel:
            raw_channel["report_bits"] = int(raw_channel["report_bits"])
        channel = ChannelParams(**raw_channel)
        proto = data.get("protocol", {})
        cfg = ScenarioConfig(
            topology=topo_path,
            n_devices=int(data.get("n_devices", 64)),
            sampling_rate=float(data.get("sampling_rate_hz", 3.0)),
            detection_threshold=float(data.get("detection_threshold_cm", 1.0)),
            sim_time=float(data.get("sim_time_s", 1100.0)),
            event=event,
            seed=int(data.get("seed", 0)),
            power=power,
            channel=channel,
            beacon_interval=float(proto.get("beacon_interval_s", 0.01)),
            jitter_max=float(proto.get("jitter_max_s", 0.005)),
        )
    except KeyError as exc:
        raise ConfigError(f"unknown or missing config key: {exc}") from exc
    return cfg.validate()


def load_config(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario config {p}: {exc}") from exc
    return config_from_dict(data, base_dir=p.parent)


@dataclass(frozen=True)
class ReportRecord:
    t_sim: float      # anchor reception time, s
    device_id: int
    elapsed: float    # s since the device's last successful reset
    event_bit: int


@dataclass
class AttemptTrace:
    t: float
    device_id: int
    elapsed: float
    event_bit: int
    accepted: bool
    reason: str


@dataclass
class ScenarioResult:
    records: list[ReportRecord]
    event_point: tuple[float, float, float]
    final_energy: np.ndarray
    energy_log: list[list[float]] | None = None  # audit: signed deltas per device
    attempts: list[AttemptTrace] | None = None
    max_doppler_hz: float = 0.0


def event_detect(
    position: tuple[float, float, float],
    event: tuple[float, float, float],
    threshold: float,
    powered: bool,
) -> bool:
    """True iff the device is ON and strictly within the detection threshold."""
    return powered and math.dist(position, event) < threshold


def _quantize_time(t: float) -> float:
    # records carry microsecond times so the CSV round-trips exactly
    return float(format(t, ".6f"))


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Run one deterministic scenario and return its report records."""
    config.validate()
    topo = (
        config.topology
        if isinstance(config.topology, VascularTopology)
        else load_and_validate(config.topology)
    )
    n = config.n_devices
    dt = MOBILITY_DT
    power = config.power
    chan = config.channel
    anchor = topo.anchor_position

    seg_ids = sorted(topo.segments)
    seg_index = {sid: i for i, sid in enumerate(seg_ids)}
    seg_objs = [topo.segments[sid] for sid in seg_ids]
    seg_speed = np.array([s.speed for s in seg_objs])
    seg_len = np.array([s.length for s in seg_objs])

    # event placement
    event_rng = _rng.stream(config.seed, "event_placement")
    event_point = config.event.resolve(topo, event_rng)

    # exact skip masks: a segment matters for sensing only if some point of it
    # is strictly within the threshold; for beacons only if within radio range
    event_near = np.array([
        point_to_polyline_distance(event_point, s.polyline) < config.detection_threshold
        for s in seg_objs
    ])
    range_m = communication_range_m(chan)
    range_cm = range_m * 100.0
    anchor_near = np.array([
        point_to_polyline_distance(anchor, s.polyline) <= range_cm + 0.5
        for s in seg_objs
    ])

    # device state
    mob_rng = _rng.stream(config.seed, "mobility")
    heart_id = topo.heart_segment_ids()[0]
    heart_idx = seg_index[heart_id]
    offsets = mob_rng.uniform(0.0, seg_len[heart_idx], size=n)
    seg_of = np.full(n, heart_idx, dtype=np.int64)
    speed_of = np.full(n, seg_speed[heart_idx])
    len_of = np.full(n, seg_len[heart_idx])
    energy = np.zeros(n)
    powered = np.zeros(n, dtype=bool)
    t_last_reset = np.zeros(n)
    event_bit = np.zeros(n, dtype=bool)
    period = 1.0 / config.sampling_rate
    next_sense = mob_rng.uniform(0.0, period, size=n)
    branch_rngs = [_rng.stream(config.seed, f"branching:{i}") for i in range(n)]
    jitter_rngs = [_rng.stream(config.seed, f"jitter:{i}") for i in range(n)]

    hot: set[int] = {i for i in range(n) if anchor_near[seg_of[i]]}

    harvest_every = max(1, round(power.cycle / dt))
    beacon_every = max(1, round(config.beacon_interval / dt))
    hfrac = power.harvest_fraction
    e_max = power.e_max
    turn_on = power.turn_on
    turn_off = power.turn_off
    e_sense = power.e_sense
    tx_cost = PACKET_BITS * power.e_tx_pulse
    beacon_air = chan.airtime(chan.beacon_bits)
    report_air = chan.airtime(chan.report_bits)
    c_m_per_s = 3.0e8

    audit = config.audit
    energy_log: list[list[float]] | None = [[] for _ in range(n)] if audit else None
    attempts: list[AttemptTrace] | None = [] if config.trace else None
    records: list[ReportRecord] = []
    max_doppler = 0.0

    offsets_before = np.empty_like(offsets)
    n_steps = int(round(config.sim_time / dt))

    for k in range(1, n_steps + 1):
        t = k * dt

        # -- mobility ------------------------------------------------------
        np.copyto(offsets_before, offsets)
        offsets += speed_of * dt
        crossed = offsets > len_of
        if crossed.any():
            for i in np.nonzero(crossed)[0]:
                pos = DevicePosition(segment=seg_ids[seg_of[i]], offset=offsets_before[i])
                new_pos, _ = advance_device(pos, dt, topo, branch_rngs[i])
                si = seg_index[new_pos.segment]
                seg_of[i] = si
                offsets[i] = new_pos.offset
                speed_of[i] = seg_speed[si]
                len_of[i] = seg_len[si]
                if anchor_near[si]:
                    hot.add(int(i))
                else:
                    hot.discard(int(i))

        # -- harvesting ----------------------------------------------------
        if k % harvest_every == 0:
            delta = (e_max - energy) * hfrac  # < headroom since hfrac < 1, so no clamp
            energy += delta
            powered = np.where(powered, energy > turn_off, energy >= turn_on)
            if audit:
                for i in range(n):
                    energy_log[i].append(delta[i])

        # -- sensing -------------------------------------------------------
        due = next_sense <= t
        if due.any():
            for i in np.nonzero(due)[0]:
                next_sense[i] += period
                if powered[i] and energy[i] >= e_sense:
                    energy[i] -= e_sense
                    if audit:
                        energy_log[i].append(-e_sense)
                    if energy[i] <= turn_off:
                        powered[i] = False
                    elif event_near[seg_of[i]]:
                        coords = seg_objs[seg_of[i]].point_at(offsets[i])
                        if math.dist(coords, event_point) < config.detection_threshold:
                            event_bit[i] = True

        # -- beacon + backscatter responses ---------------------------------
        if k % beacon_every == 0 and hot:
            responders = []
            for i in sorted(hot):
                seg = seg_objs[seg_of[i]]
                coords = seg.point_at(offsets[i])
                d_cm = math.dist(coords, anchor)
                if d_cm <= 0.0 or d_cm > range_cm:
                    continue
                if not powered[i] or energy[i] < tx_cost:
                    continue  # beacon heard but the response is silently missed
                # radial speed toward the anchor for the Doppler check
                ahead = seg.point_at(min(offsets[i] + 1e-4, seg.length))
                step_len = math.dist(coords, ahead)
                if step_len > 0.0:
                    closing = (
                        (anchor[0] - coords[0]) * (ahead[0] - coords[0])
                        + (anchor[1] - coords[1]) * (ahead[1] - coords[1])
                        + (anchor[2] - coords[2]) * (ahead[2] - coords[2])
                    ) / (step_len * d_cm)
                else:
                    closing = 0.0
                v_radial = seg.speed * closing / 100.0  # m/s, positive when closing
                energy[i] -= tx_cost
                if audit:
                    energy_log[i].append(-tx_cost)
                if energy[i] <= turn_off:
                    powered[i] = False
                d_m = d_cm / 100.0
                budget = path_loss_db(d_m, chan, relative_speed=v_radial)
                jitter = jitter_rngs[i].uniform(0.0, config.jitter_max)
                arrival = t + beacon_air + jitter + 2.0 * d_m / c_m_per_s
                circ = CirculationState(
                    elapsed_since_reset=t - t_last_reset[i],
                    event_bit=bool(event_bit[i]),
                )
                packet, _ = encode_report(int(i), circ, power.e_tx_pulse)
                responders.append((arrival, int(i), budget, packet, circ))
                max_doppler = max(max_doppler, abs(budget.doppler_shift))

            for arrival, i, budget, packet, circ in responders:
                interferers = [
                    b for (a2, j, b, _, _) in responders
                    if j != i and abs(a2 - arrival) < report_air
                ]
                accepted, reason = receive_decision(budget, interferers, chan)
                exchange_outcome(True, accepted, circ)
                if accepted:
                    t_last_reset[i] = t
                    event_bit[i] = False
                    records.append(ReportRecord(
                        t_sim=_quantize_time(arrival),
                        device_id=packet.device_id,
                        elapsed=packet.elapsed_ms / 1000.0,
                        event_bit=packet.event_bit,
                    ))
                if attempts is not None:
                    attempts.append(AttemptTrace(
                        t=t, device_id=i, elapsed=packet.elapsed_ms / 1000.0,
                        event_bit=packet.event_bit, accepted=accepted, reason=reason,
                    ))

        if audit and k % 100 == 0:
            if energy.min() < 0.0 or energy.max() > e_max:
                raise AssertionError(f"energy bounds violated at t={t}")

    records.sort(key=lambda r: (r.t_sim, r.device_id))
    return ScenarioResult(
        records=records,
        event_point=tuple(event_point),
        final_energy=energy,
        energy_log=energy_log,
        attempts=attempts,
        max_doppler_hz=max_doppler,
    )


# ---------------------------------------------------------------------------
# Raw record persistence
# ---------------------------------------------------------------------------

RAW_HEADER = "t_sim_s,device_id,elapsed_s,event_bit"


def persist_raw(records: list[ReportRecord], path: str | Path) -> None:
    """Write records as CSV with 6-decimal fixed-point times."""
    lines = [RAW_HEADER]
    for r in records:
        lines.append(f"{r.t_sim:.6f},{r.device_id},{r.elapsed:.6f},{r.event_bit}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_raw(path: str | Path) -> list[ReportRecord]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != RAW_HEADER:
        raise ValueError(f"unexpected raw CSV header in {path}")
    out = []
    for line in text[1:]:
        t, dev, elapsed, bit = line.split(",")
        out.append(ReportRecord(
            t_sim=float(t), device_id=int(dev), elapsed=float(elapsed), event_bit=int(bit),
        ))
    return out

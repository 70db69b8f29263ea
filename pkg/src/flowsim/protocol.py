"""Report packets and the circulation-counter / event-bit lifecycle.

A report is 40 bits: device_id:7 | elapsed_ms:32 | event_bit:1, MSB first.
The elapsed counter and the sticky event bit reset only on a successful
two-way exchange (beacon received and response accepted at the anchor);
failed exchanges leave both compounding across further circulations.
"""

from __future__ import annotations

from dataclasses import dataclass

DEVICE_ID_BITS = 7
ELAPSED_BITS = 32
EVENT_BITS = 1
PACKET_BITS = DEVICE_ID_BITS + ELAPSED_BITS + EVENT_BITS
ELAPSED_MAX_MS = 2**ELAPSED_BITS - 1


@dataclass(frozen=True)
class ReportPacket:
    device_id: int
    elapsed_ms: int
    event_bit: int

    def to_bits(self) -> int:
        """Pack into a 40-bit integer, device id in the most significant bits."""
        return (
            (self.device_id << (ELAPSED_BITS + EVENT_BITS))
            | (self.elapsed_ms << EVENT_BITS)
            | self.event_bit
        )

    @classmethod
    def from_bits(cls, payload: int) -> "ReportPacket":
        if payload < 0 or payload >= 2**PACKET_BITS:
            raise ValueError(f"payload does not fit {PACKET_BITS} bits")
        return cls(
            device_id=payload >> (ELAPSED_BITS + EVENT_BITS),
            elapsed_ms=(payload >> EVENT_BITS) & ELAPSED_MAX_MS,
            event_bit=payload & 1,
        )


@dataclass
class CirculationState:
    elapsed_since_reset: float = 0.0  # s
    event_bit: bool = False
    last_exchange_ok: bool = False


def encode_report(
    device_id: int,
    circulation: CirculationState,
    e_tx_pulse: float = 1.0,
) -> tuple[ReportPacket, float]:
    """Build the backscatter packet; cost is one pulse per bit."""
    if not 0 <= device_id < 2**DEVICE_ID_BITS:
        raise ValueError(f"device id must fit {DEVICE_ID_BITS} bits")
    elapsed_ms = min(ELAPSED_MAX_MS, round(circulation.elapsed_since_reset * 1000.0))
    packet = ReportPacket(
        device_id=device_id,
        elapsed_ms=int(elapsed_ms),
        event_bit=1 if circulation.event_bit else 0,
    )
    return packet, PACKET_BITS * e_tx_pulse


def decode_report(packet: ReportPacket) -> tuple[int, float, int]:
    """(device_id, elapsed seconds, event bit) from a packet."""
    return packet.device_id, packet.elapsed_ms / 1000.0, packet.event_bit


def exchange_outcome(
    beacon_received: bool,
    response_accepted: bool,
    circulation: CirculationState,
) -> CirculationState:
    """Reset counter and event bit only on a fully successful exchange."""
    if beacon_received and response_accepted:
        circulation.elapsed_since_reset = 0.0
        circulation.event_bit = False
        circulation.last_exchange_ok = True
    else:
        circulation.last_exchange_ok = False
    return circulation

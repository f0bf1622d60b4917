"""32-byte radio frame codec, lossy channel model and stop-and-wait ARQ.

Wire layout (bit-exact contract, 32 bytes total):

    offset  size  field
    0       1     magic 0xA7
    1       1     version 0x01
    2       1     msg_type
    3       2     seq, big-endian
    5       1     sender_id
    6       24    payload (zero-padded)
    30      2     CRC-16/CCITT-FALSE over bytes 0..29, big-endian

The fixed 32-byte frame codifies the NRF24L01-class payload ceiling of the
link; larger application messages fragment into multiple frames with a
1-byte fragment header inside the payload.
"""

import math
import struct
from dataclasses import dataclass
from enum import IntEnum

from .rng import derive_rng
from .world import GeoFix

FRAME_LEN = 32
MAGIC = 0xA7
VERSION = 0x01
MAX_PAYLOAD = 24
SEQ_MODULUS = 65536
DEDUP_WINDOW = 4096

RETX_INTERVAL_TICKS = 5
MAX_ATTEMPTS = 8


class MsgType(IntEnum):
    GAS_TELEMETRY = 0x01
    GPS_TELEMETRY = 0x02
    THERMAL_SUMMARY = 0x03
    VISUAL_SUMMARY = 0x04
    TARGET_REPORT = 0x05
    DISPATCH_ORDER = 0x06
    ACK = 0x07
    RETRIEVER_STATUS = 0x08


class RadioError(ValueError):
    code = "RADIO"


class FrameSizeError(RadioError):
    code = "FRAME_SIZE"


class FrameFormatError(RadioError):
    code = "FRAME_FORMAT"


class FrameCorruptError(RadioError):
    code = "CORRUPT"


class UnknownTypeError(RadioError):
    code = "UNKNOWN_TYPE"


class PayloadSizeError(RadioError):
    code = "PAYLOAD_SIZE"


class LinkDown(Exception):
    """Raised to the owning agent after 8 failed send attempts."""

    def __init__(self, seq):
        super().__init__(f"link down: no ack for seq {seq} after {MAX_ATTEMPTS} attempts")
        self.seq = seq


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
    Check value over b"123456789" is 0x29B1."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


@dataclass(frozen=True)
class RadioFrame:
    msg_type: int
    seq: int
    sender_id: int
    payload: bytes  # exactly 24 bytes, zero-padded

    def to_bytes(self) -> bytes:
        head = struct.pack(">BBBHB", MAGIC, VERSION, self.msg_type,
                           self.seq, self.sender_id) + self.payload
        return head + struct.pack(">H", crc16_ccitt_false(head))


def encode(msg_type: int, sender_id: int, seq: int, payload: bytes = b"") -> RadioFrame:
    """Build a well-formed frame; payload zero-padded to 24 bytes."""
    if len(payload) > MAX_PAYLOAD:
        raise PayloadSizeError(
            f"payload {len(payload)} bytes exceeds {MAX_PAYLOAD}; caller must fragment")
    return RadioFrame(
        msg_type=int(msg_type),
        seq=seq % SEQ_MODULUS,
        sender_id=sender_id & 0xFF,
        payload=bytes(payload) + b"\x00" * (MAX_PAYLOAD - len(payload)),
    )


def decode(raw: bytes) -> RadioFrame:
    """Validate and decode a 32-byte frame.

    Check order is deterministic: length, then magic/version, then CRC,
    then msg_type; each failure raises a distinct error class.
    """
    if len(raw) != FRAME_LEN:
        raise FrameSizeError(f"frame must be {FRAME_LEN} bytes, got {len(raw)}")
    if raw[0] != MAGIC or raw[1] != VERSION:
        raise FrameFormatError(
            f"bad magic/version: {raw[0]:#04x}/{raw[1]:#04x}")
    (crc,) = struct.unpack(">H", raw[30:32])
    if crc != crc16_ccitt_false(raw[:30]):
        raise FrameCorruptError("CRC mismatch")
    msg_type = raw[2]
    try:
        msg_type = MsgType(msg_type)
    except ValueError:
        raise UnknownTypeError(f"unknown msg_type {msg_type:#04x}") from None
    (seq,) = struct.unpack(">H", raw[3:5])
    return RadioFrame(msg_type=msg_type, seq=seq, sender_id=raw[5],
                      payload=raw[6:30])


@dataclass(frozen=True)
class ChannelModel:
    loss_prob: float = 0.0
    corrupt_prob: float = 0.0
    latency_ticks: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.loss_prob <= 1.0 and 0.0 <= self.corrupt_prob <= 1.0):
            raise ValueError("channel probabilities must be in [0, 1]")
        if self.latency_ticks < 0:
            raise ValueError("latency must be >= 0")


class Channel:
    """Seeded lossy channel: loses, corrupts (one random bit flip) or
    delays raw frames. All draws come from the channel's own generator,
    so a run is reproducible frame for frame."""

    def __init__(self, model: ChannelModel, name: str = "ch"):
        self.model = model
        self._rng = derive_rng(model.seed, "channel", name)
        self._pending = []  # (deliver_tick, arrival_index, raw bytes)
        self._arrivals = 0
        self.stats = {"sent": 0, "lost": 0, "corrupted": 0, "delivered": 0}

    def transmit(self, raw: bytes, tick: int):
        self.stats["sent"] += 1
        if self._rng.random() < self.model.loss_prob:
            self.stats["lost"] += 1
            return
        if self._rng.random() < self.model.corrupt_prob:
            bit = self._rng.randrange(len(raw) * 8)
            b = bytearray(raw)
            b[bit // 8] ^= 1 << (bit % 8)
            raw = bytes(b)
            self.stats["corrupted"] += 1
        self._pending.append((tick + self.model.latency_ticks, self._arrivals, raw))
        self._arrivals += 1

    def deliver(self, tick: int):
        """Pop every frame due at this tick, in transmission order."""
        due = sorted(t for t in self._pending if t[0] <= tick)
        self._pending = [t for t in self._pending if t[0] > tick]
        self.stats["delivered"] += len(due)
        return [raw for _, _, raw in due]


class Endpoint:
    """One radio endpoint: assigns sequence numbers, runs stop-and-wait
    ARQ with retransmission every 5 ticks up to 8 attempts, acknowledges
    and deduplicates inbound traffic by (sender_id, seq)."""

    def __init__(self, sender_id: int):
        self.sender_id = sender_id
        self._next_seq = 0
        self._pending = {}  # seq -> [raw, channel, next_retx_tick, attempts]
        self._seen = {}  # peer sender_id -> ordered list + set of recent seqs
        self.link_down_seqs = []

    @property
    def busy(self):
        return bool(self._pending)

    def send(self, channel: Channel, msg_type: int, payload: bytes, tick: int) -> int:
        """Reliable send of one frame; returns the assigned seq."""
        seq = self._next_seq
        self._next_seq = (self._next_seq + 1) % SEQ_MODULUS
        raw = encode(msg_type, self.sender_id, seq, payload).to_bytes()
        channel.transmit(raw, tick)
        self._pending[seq] = [raw, channel, tick + RETX_INTERVAL_TICKS, 1]
        return seq

    def send_message(self, channel: Channel, msg_type: int, payloads, tick: int):
        """Reliable send of a possibly fragmented message (list of payloads)."""
        return [self.send(channel, msg_type, p, tick) for p in payloads]

    def send_unreliable(self, channel: Channel, msg_type: int, payload: bytes,
                        tick: int) -> int:
        """Fire-and-forget send (periodic beacons); no retransmission."""
        seq = self._next_seq
        self._next_seq = (self._next_seq + 1) % SEQ_MODULUS
        channel.transmit(encode(msg_type, self.sender_id, seq, payload).to_bytes(),
                         tick)
        return seq

    def on_tick(self, tick: int):
        """Retransmit overdue frames; surface LinkDown after 8 attempts."""
        downs = []
        for seq, entry in list(self._pending.items()):
            raw, channel, retx_tick, attempts = entry
            if tick < retx_tick:
                continue
            if attempts >= MAX_ATTEMPTS:
                del self._pending[seq]
                downs.append(seq)
                continue
            channel.transmit(raw, tick)
            entry[2] = tick + RETX_INTERVAL_TICKS
            entry[3] = attempts + 1
        self.link_down_seqs.extend(downs)
        return downs

    def _dedup(self, peer: int, seq: int) -> bool:
        """True if (peer, seq) was already delivered within the window."""
        order, seen = self._seen.setdefault(peer, ([], set()))
        if seq in seen:
            return True
        order.append(seq)
        seen.add(seq)
        if len(order) > DEDUP_WINDOW:
            seen.discard(order.pop(0))
        return False

    def receive(self, raw: bytes, tick: int, ack_channel: Channel = None):
        """Process one inbound raw frame.

        Returns the decoded frame for first-time application delivery, or
        None (ack, duplicate, or undecodable frame). Data frames are
        acknowledged on ack_channel when given.
        """
        try:
            frame = decode(raw)
        except RadioError:
            return None
        if frame.msg_type == MsgType.ACK:
            (acked,) = struct.unpack(">H", frame.payload[:2])
            self._pending.pop(acked, None)
            return None
        if ack_channel is not None:
            ack = encode(MsgType.ACK, self.sender_id, frame.seq,
                         struct.pack(">H", frame.seq))
            ack_channel.transmit(ack.to_bytes(), tick)
        if self._dedup(frame.sender_id, frame.seq):
            return None
        return frame


# --- application payload codecs -----------------------------------------

GEOFIX_STRUCT = struct.Struct(">iii")  # lat_e7, lon_e7, alt_cm


def pack_geofix(fix: GeoFix) -> bytes:
    return GEOFIX_STRUCT.pack(fix.lat_e7, fix.lon_e7, fix.alt_cm)


def unpack_geofix(raw: bytes) -> GeoFix:
    lat, lon, alt = GEOFIX_STRUCT.unpack(raw[:12])
    return GeoFix(lat, lon, alt)


def encode_gas_telemetry(raw_adc: int, tick: int) -> bytes:
    return struct.pack(">HI", raw_adc, tick & 0xFFFFFFFF)


def decode_gas_telemetry(payload: bytes):
    raw_adc, tick = struct.unpack(">HI", payload[:6])
    return {"raw": raw_adc, "tick": tick}


def encode_gps_telemetry(fix: GeoFix, tick: int) -> bytes:
    return pack_geofix(fix) + struct.pack(">I", tick & 0xFFFFFFFF)


def decode_gps_telemetry(payload: bytes):
    fix = unpack_geofix(payload)
    (tick,) = struct.unpack(">I", payload[12:16])
    return {"fix": fix, "tick": tick}


def encode_thermal_summary(max_temp_dc: int, hot_pixels: int, tick: int) -> bytes:
    return struct.pack(">hHI", max_temp_dc, min(hot_pixels, 0xFFFF),
                       tick & 0xFFFFFFFF)


def decode_thermal_summary(payload: bytes):
    max_temp_dc, hot_pixels, tick = struct.unpack(">hHI", payload[:8])
    return {"max_temp_dc": max_temp_dc, "hot_pixels": hot_pixels, "tick": tick}


def encode_visual_summary(frame_id: int, drone_fix: GeoFix, fov_cdeg: int,
                          tick: int) -> bytes:
    return (struct.pack(">I", frame_id) + pack_geofix(drone_fix)
            + struct.pack(">HI", fov_cdeg, tick & 0xFFFFFFFF))


def decode_visual_summary(payload: bytes):
    (frame_id,) = struct.unpack(">I", payload[:4])
    fix = unpack_geofix(payload[4:16])
    fov_cdeg, tick = struct.unpack(">HI", payload[16:22])
    return {"frame_id": frame_id, "drone_fix": fix, "fov_cdeg": fov_cdeg,
            "tick": tick}


def encode_dispatch_order(candidate_id: int, tick: int) -> bytes:
    return struct.pack(">HI", candidate_id, tick & 0xFFFFFFFF)


def decode_dispatch_order(payload: bytes):
    candidate_id, tick = struct.unpack(">HI", payload[:6])
    return {"candidate_id": candidate_id, "tick": tick}


def encode_retriever_status(phase_code: int, fix: GeoFix, lidar_mm: int,
                            flags: int) -> bytes:
    return struct.pack(">B", phase_code) + pack_geofix(fix) + \
        struct.pack(">HB", min(lidar_mm, 0xFFFF), flags & 0xFF)


def decode_retriever_status(payload: bytes):
    phase_code = payload[0]
    fix = unpack_geofix(payload[1:13])
    lidar_mm, flags = struct.unpack(">HB", payload[13:16])
    return {"phase_code": phase_code, "fix": fix, "lidar_mm": lidar_mm,
            "flags": flags}


# TargetReport exceeds 24 bytes (id + confidence + GeoFix + label), so it
# always ships as 2 fragments. Fragment header byte: total in the high
# nibble, index in the low nibble.

def _fragment(body: bytes, min_fragments: int = 1):
    chunk = MAX_PAYLOAD - 1
    total = max(min_fragments, math.ceil(len(body) / chunk))
    if total > 15:
        raise PayloadSizeError("message too large to fragment")
    return [bytes([(total << 4) | i]) + body[i * chunk:(i + 1) * chunk]
            for i in range(total)]


def encode_target_report(candidate_id: int, label: str, confidence: float,
                         geo: GeoFix) -> list:
    """Serialize a target report into its 2-fragment payload list."""
    label_bytes = label.encode("utf-8")[:16]
    body = struct.pack(">HH", candidate_id, round(confidence * 10000)) \
        + pack_geofix(geo) + struct.pack(">B", len(label_bytes)) + label_bytes
    # target reports always span two frames regardless of label length
    return _fragment(body, min_fragments=2)


class FragmentAssembler:
    """Reassembles fragmented payloads; stop-and-wait ARQ guarantees
    in-order arrival per sender, so a simple buffer suffices."""

    def __init__(self):
        self._buf = {}  # (sender_id, msg_type) -> list of fragment bodies

    def push(self, sender_id: int, msg_type: int, payload: bytes):
        """Feed one fragment payload; returns the full body when complete."""
        header = payload[0]
        total, index = header >> 4, header & 0x0F
        key = (sender_id, msg_type)
        frags = self._buf.setdefault(key, [])
        if index != len(frags):
            # out-of-sequence fragment: restart assembly
            frags.clear()
            if index != 0:
                return None
        frags.append(payload[1:])
        if len(frags) < total:
            return None
        body = b"".join(frags)
        del self._buf[key]
        return body


def decode_target_report(body: bytes):
    candidate_id, conf_1e4 = struct.unpack(">HH", body[:4])
    geo = unpack_geofix(body[4:16])
    label_len = body[16]
    label = body[17:17 + label_len].decode("utf-8")
    return {"candidate_id": candidate_id, "confidence": conf_1e4 / 10000.0,
            "geo": geo, "label": label}

"""Bit-exact 1090ES (DF17) frame codec.

Layout of the 112-bit extended squitter, MSB first::

    DF(5) | CA(3) | ICAO(24) | ME(56) | PI(24)

The parity field PI is the Mode S CRC-24 of the first 88 bits (generator
0xFFF409).  Only DF17 is modeled.  The ME payload helpers cover airborne
position (type codes 9-18, CPR with NZ = 15) and airborne velocity
(type code 19, subtype 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputSizeError, ParityError, RangeError, UnsupportedFormat

DF_EXTENDED_SQUITTER = 17
FRAME_BITS = 112
DATA_BITS = 88
ME_BITS = 56

CRC_GENERATOR = 0xFFF409

FT_PER_M = 1.0 / 0.3048
KT_PER_MPS = 3600.0 / 1852.0

CPR_NZ = 15
CPR_NB = 17
CPR_SCALE = 1 << CPR_NB

ICAO_MAX = (1 << 24) - 1


def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 16
        for _ in range(8):
            crc = (crc << 1) ^ CRC_GENERATOR if crc & 0x800000 else crc << 1
        table.append(crc & 0xFFFFFF)
    return table


_CRC_TABLE = _build_crc_table()


def bits_from_int(value: int, width: int) -> np.ndarray:
    """MSB-first bit array of ``value`` using exactly ``width`` bits."""
    if value < 0 or value >> width:
        raise RangeError(f"{value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def int_from_bits(bits: Sequence[int] | np.ndarray) -> int:
    out = 0
    for b in np.asarray(bits, dtype=np.uint8).tolist():
        out = (out << 1) | (b & 1)
    return out


def crc24(data_bits: Sequence[int] | np.ndarray) -> int:
    """Mode S parity of exactly 88 data bits.

    Remainder of ``data(x) * x^24`` divided by the generator polynomial,
    computed a byte at a time.
    """
    bits = np.asarray(data_bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size != DATA_BITS:
        raise InputSizeError(f"crc24 expects {DATA_BITS} bits, got {bits.size}")
    crc = 0
    for byte in np.packbits(bits).tolist():
        crc = ((crc << 8) ^ _CRC_TABLE[((crc >> 16) ^ byte) & 0xFF]) & 0xFFFFFF
    return crc


def check_icao(icao: int) -> int:
    if not 0 <= int(icao) <= ICAO_MAX:
        raise RangeError(f"ICAO address {icao} outside 24-bit range")
    return int(icao)


def format_icao(icao: int) -> str:
    return f"{check_icao(icao):06X}"


def parse_icao(text: str) -> int:
    return check_icao(int(text, 16))


@dataclass(frozen=True)
class AdsbFrame:
    capability: int
    icao: int
    me: int
    parity: int
    downlink_format: int = DF_EXTENDED_SQUITTER

    def __post_init__(self) -> None:
        if not 0 <= self.capability < 8:
            raise RangeError("capability must be 3 bits")
        check_icao(self.icao)
        if not 0 <= self.me < (1 << ME_BITS):
            raise RangeError("ME field must be 56 bits")
        if not 0 <= self.parity <= 0xFFFFFF:
            raise RangeError("parity must be 24 bits")

    @property
    def type_code(self) -> int:
        return self.me >> (ME_BITS - 5)

    def bits(self) -> np.ndarray:
        return np.concatenate([
            bits_from_int(self.downlink_format, 5),
            bits_from_int(self.capability, 3),
            bits_from_int(self.icao, 24),
            bits_from_int(self.me, ME_BITS),
            bits_from_int(self.parity, 24),
        ])

    def to_hex(self) -> str:
        return f"{int_from_bits(self.bits()):028X}"

    @classmethod
    def from_hex(cls, text: str) -> "AdsbFrame":
        text = text.strip()
        if len(text) != FRAME_BITS // 4:
            raise InputSizeError(f"expected 28 hex characters, got {len(text)}")
        return decode_frame(bits_from_int(int(text, 16), FRAME_BITS))


def encode_frame(capability: int, icao: int, me: int) -> np.ndarray:
    """Assemble DF17 ‖ CA ‖ ICAO ‖ ME and append the CRC-24 parity."""
    head = np.concatenate([
        bits_from_int(DF_EXTENDED_SQUITTER, 5),
        bits_from_int(capability, 3),
        bits_from_int(check_icao(icao), 24),
        bits_from_int(me, ME_BITS),
    ])
    return np.concatenate([head, bits_from_int(crc24(head), 24)])


def decode_frame(bits: Sequence[int] | np.ndarray) -> AdsbFrame:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 1 or bits.size != FRAME_BITS:
        raise InputSizeError(f"expected {FRAME_BITS} bits, got {bits.size}")
    df = int_from_bits(bits[:5])
    if df != DF_EXTENDED_SQUITTER:
        raise UnsupportedFormat(f"downlink format {df} is not supported (only DF17)")
    stored = int_from_bits(bits[DATA_BITS:])
    computed = crc24(bits[:DATA_BITS])
    if stored != computed:
        raise ParityError(computed, stored)
    return AdsbFrame(
        capability=int_from_bits(bits[5:8]),
        icao=int_from_bits(bits[8:32]),
        me=int_from_bits(bits[32:DATA_BITS]),
        parity=stored,
        downlink_format=df,
    )


def parity_ok(bits: Sequence[int] | np.ndarray) -> bool:
    bits = np.asarray(bits, dtype=np.uint8)
    return bits.size == FRAME_BITS and crc24(bits[:DATA_BITS]) == int_from_bits(bits[DATA_BITS:])


@dataclass(frozen=True)
class AircraftState:
    """Kinematic state used to fill position and velocity payloads.

    Altitude in meters, ground speed in m/s, heading in degrees clockwise
    from true north.
    """

    latitude: float
    longitude: float
    altitude: float
    ground_speed: float
    heading: float
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if not abs(self.latitude) <= 90.0:
            raise RangeError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude < 180.0:
            raise RangeError(f"longitude {self.longitude} out of range")
        if not 0.0 <= self.heading < 360.0:
            raise RangeError(f"heading {self.heading} out of range")


# ---------------------------------------------------------------- altitude

def encode_altitude(altitude_m: float) -> int:
    """12-bit barometric altitude field with Q = 1 (25 ft steps)."""
    n = math.floor((altitude_m * FT_PER_M + 1000.0) / 25.0 + 0.5)
    if not 0 <= n < 2048:
        raise RangeError(f"altitude {altitude_m} m not encodable in 25 ft steps")
    return ((n >> 4) << 5) | 0x10 | (n & 0xF)


def decode_altitude(field: int) -> float:
    """Inverse of :func:`encode_altitude`, in meters."""
    if not field & 0x10:
        raise UnsupportedFormat("only Q=1 (25 ft) altitude encoding is supported")
    n = ((field >> 5) << 4) | (field & 0xF)
    return (25.0 * n - 1000.0) / FT_PER_M


# --------------------------------------------------------------------- CPR

def cpr_nl(lat: float) -> int:
    """Number of longitude zones at ``lat`` for NZ = 15."""
    lat = abs(lat)
    if lat == 0.0:
        return 59
    if lat == 87.0:
        return 2
    if lat > 87.0:
        return 1
    a = 1.0 - math.cos(math.pi / (2 * CPR_NZ))
    b = math.cos(math.pi * lat / 180.0) ** 2
    return int(math.floor(2.0 * math.pi / math.acos(1.0 - a / b)))


def _mod(x: float, y: float) -> float:
    return x - y * math.floor(x / y)


def cpr_encode(lat: float, lon: float, odd: bool) -> tuple[int, int]:
    """Airborne CPR encoding; returns the 17-bit (lat, lon) fields."""
    i = 1 if odd else 0
    dlat = 360.0 / (4 * CPR_NZ - i)
    yz = math.floor(CPR_SCALE * _mod(lat, dlat) / dlat + 0.5)
    rlat = dlat * (yz / CPR_SCALE + math.floor(lat / dlat))
    nl = cpr_nl(rlat) - i
    dlon = 360.0 / nl if nl > 0 else 360.0
    xz = math.floor(CPR_SCALE * _mod(lon, dlon) / dlon + 0.5)
    return yz % CPR_SCALE, xz % CPR_SCALE


def cpr_decode_global(even: tuple[int, int], odd: tuple[int, int],
                      latest_is_odd: bool) -> tuple[float, float] | None:
    """Globally unambiguous position from an even/odd field pair.

    Returns None when the two frames straddle a longitude-zone boundary.
    """
    lat_e, lon_e = even[0] / CPR_SCALE, even[1] / CPR_SCALE
    lat_o, lon_o = odd[0] / CPR_SCALE, odd[1] / CPR_SCALE
    dlat_e, dlat_o = 360.0 / 60, 360.0 / 59
    j = math.floor(59 * lat_e - 60 * lat_o + 0.5)
    rlat_e = dlat_e * (_mod(j, 60) + lat_e)
    rlat_o = dlat_o * (_mod(j, 59) + lat_o)
    if rlat_e >= 270.0:
        rlat_e -= 360.0
    if rlat_o >= 270.0:
        rlat_o -= 360.0
    if cpr_nl(rlat_e) != cpr_nl(rlat_o):
        return None
    lat = rlat_o if latest_is_odd else rlat_e
    nl = cpr_nl(lat)
    i = 1 if latest_is_odd else 0
    ni = max(nl - i, 1)
    m = math.floor(lon_e * (nl - 1) - lon_o * nl + 0.5)
    lon = (360.0 / ni) * (_mod(m, ni) + (lon_o if latest_is_odd else lon_e))
    if lon >= 180.0:
        lon -= 360.0
    return lat, lon


def encode_airborne_position(state: AircraftState, cpr_odd: bool, type_code: int = 11,
                             surveillance_status: int = 0) -> int:
    """56-bit ME: TC(5) SS(2) SAF(1) ALT(12) T(1) F(1) LAT(17) LON(17)."""
    if not 9 <= type_code <= 18:
        raise RangeError("airborne position type code must be 9..18")
    alt = encode_altitude(state.altitude)
    yz, xz = cpr_encode(state.latitude, state.longitude, cpr_odd)
    me = type_code
    me = (me << 2) | (surveillance_status & 0x3)
    me = (me << 1) | 0
    me = (me << 12) | alt
    me = (me << 1) | 0
    me = (me << 1) | int(cpr_odd)
    me = (me << 17) | yz
    me = (me << 17) | xz
    return me


def decode_airborne_position_fields(me: int) -> dict:
    tc = me >> 51
    if not 9 <= tc <= 18:
        raise UnsupportedFormat(f"type code {tc} is not an airborne position")
    return {
        "type_code": tc,
        "altitude": decode_altitude((me >> 36) & 0xFFF),
        "odd": bool((me >> 34) & 1),
        "lat_cpr": (me >> 17) & 0x1FFFF,
        "lon_cpr": me & 0x1FFFF,
    }


# ---------------------------------------------------------------- velocity

def encode_airborne_velocity(state: AircraftState) -> int:
    """TC 19 subtype 1 (subsonic ground speed, 1 kt resolution).

    Vertical rate is reported as 0 ft/min since the state carries none.
    """
    speed_kt = state.ground_speed * KT_PER_MPS
    if not 0.0 <= speed_kt < 1022.0:
        raise RangeError(f"ground speed {speed_kt:.1f} kt outside subsonic range")
    hdg = math.radians(state.heading)
    v_ew = round(speed_kt * math.sin(hdg))
    v_ns = round(speed_kt * math.cos(hdg))
    if abs(v_ew) > 1022 or abs(v_ns) > 1022:
        raise RangeError("velocity component overflow")
    me = 19
    me = (me << 3) | 1           # subtype: subsonic ground speed
    me = (me << 1) | 0           # intent change
    me = (me << 1) | 0           # IFR capability
    me = (me << 3) | 0           # NUCv
    me = (me << 1) | int(v_ew < 0)
    me = (me << 10) | (abs(v_ew) + 1)
    me = (me << 1) | int(v_ns < 0)
    me = (me << 10) | (abs(v_ns) + 1)
    me = (me << 1) | 0           # vertical rate source
    me = (me << 1) | 0           # vertical rate sign
    me = (me << 9) | 1           # 0 ft/min
    me = (me << 2) | 0           # reserved
    me = (me << 1) | 0           # GNSS/baro difference sign
    me = (me << 7) | 0           # difference unavailable
    return me


def decode_airborne_velocity(me: int) -> tuple[float, float]:
    """Return (east, north) ground velocity in m/s."""
    tc, st = me >> 51, (me >> 48) & 0x7
    if tc != 19 or st != 1:
        raise UnsupportedFormat(f"TC {tc} subtype {st} is not a subsonic ground-speed message")
    ew_field, ns_field = (me >> 32) & 0x3FF, (me >> 21) & 0x3FF
    if ew_field == 0 or ns_field == 0:
        raise UnsupportedFormat("velocity component unavailable")
    east = (ew_field - 1) * (-1 if (me >> 42) & 1 else 1)
    north = (ns_field - 1) * (-1 if (me >> 31) & 1 else 1)
    return east / KT_PER_MPS, north / KT_PER_MPS

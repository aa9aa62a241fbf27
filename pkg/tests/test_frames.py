import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofdet import frames
from spoofdet.errors import InputSizeError, ParityError, RangeError, UnsupportedFormat
from spoofdet.frames import (
    AdsbFrame,
    AircraftState,
    crc24,
    decode_frame,
    encode_airborne_position,
    encode_airborne_velocity,
    encode_frame,
)

GENERATOR_BITS = [1] + [int(c) for c in f"{0xFFF409:024b}"]


def long_division_crc(bits):
    """Schoolbook GF(2) division of bits * x^24 by the 25-bit generator."""
    work = list(bits) + [0] * 24
    for i in range(len(bits)):
        if work[i]:
            for j, g in enumerate(GENERATOR_BITS):
                work[i + j] ^= g
    return int("".join(map(str, work[-24:])), 2)


def random_frame_bits(rng):
    return encode_frame(int(rng.integers(8)), int(rng.integers(1 << 24)), int(rng.integers(1 << 56, dtype=np.uint64)))


class TestCrc24:
    def test_zero_dividend(self):
        assert crc24(np.zeros(88, dtype=np.uint8)) == 0

    def test_matches_long_division_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            bits = rng.integers(0, 2, 88)
            assert crc24(bits) == long_division_crc(bits.tolist())

    def test_wrong_length(self):
        with pytest.raises(InputSizeError):
            crc24(np.zeros(87, dtype=np.uint8))

    @given(st.integers(0, (1 << 88) - 1), st.integers(0, (1 << 88) - 1))
    def test_linear(self, a, b):
        fa, fb = frames.bits_from_int(a, 88), frames.bits_from_int(b, 88)
        assert crc24(fa ^ fb) == crc24(fa) ^ crc24(fb)

    def test_known_real_frame(self):
        # identification squitter from a real aircraft, ICAO 4840D6
        f = AdsbFrame.from_hex("8D4840D6202CC371C32CE0576098")
        assert f.icao == 0x4840D6
        assert f.type_code == 4


class TestFrameCodec:
    def test_all_zero_payload(self):
        bits = encode_frame(0, 0, 0)
        assert bits.size == 112
        assert bits[:5].tolist() == [1, 0, 0, 0, 1]
        assert frames.int_from_bits(bits[88:]) == crc24(bits[:88])

    def test_round_trip_random(self):
        rng = np.random.default_rng(2)
        for _ in range(10_000):
            ca, icao = int(rng.integers(8)), int(rng.integers(1 << 24))
            me = int(rng.integers(1 << 56, dtype=np.uint64))
            f = decode_frame(encode_frame(ca, icao, me))
            assert (f.capability, f.icao, f.me, f.downlink_format) == (ca, icao, me, 17)
            assert decode_frame(f.bits()) == f

    def test_icao_all_ones(self):
        bits = encode_frame(5, (1 << 24) - 1, 0)
        assert bits[8:32].tolist() == [1] * 24
        assert decode_frame(bits).icao == 0xFFFFFF

    def test_icao_out_of_range(self):
        with pytest.raises(RangeError):
            encode_frame(0, 1 << 24, 0)

    def test_flipped_me_bit_raises_parity_error(self):
        bits = encode_frame(5, 0xABCDEF, 0x123456789ABC)
        bits[40] ^= 1
        with pytest.raises(ParityError) as exc:
            decode_frame(bits)
        assert exc.value.stored == frames.int_from_bits(bits[88:])
        assert exc.value.computed == crc24(bits[:88])

    def test_df11_unsupported(self):
        bits = encode_frame(5, 0xABCDEF, 0)
        bits[:5] = [0, 1, 0, 1, 1]
        with pytest.raises(UnsupportedFormat):
            decode_frame(bits)

    def test_wrong_length(self):
        with pytest.raises(InputSizeError):
            decode_frame(np.zeros(56, dtype=np.uint8))

    def test_every_single_bit_error_detected(self):
        bits = encode_frame(5, 0x4840D6, 0x202CC371C32CE0)
        for pos in range(112):
            bad = bits.copy()
            bad[pos] ^= 1
            assert not frames.parity_ok(bad)

    def test_random_double_bit_errors_detected(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            bits = random_frame_bits(rng)
            i, j = rng.choice(112, size=2, replace=False)
            bits[i] ^= 1
            bits[j] ^= 1
            assert not frames.parity_ok(bits)

    def test_hex_round_trip(self):
        text = "8D40621D58C382D690C8AC2863A7"
        assert AdsbFrame.from_hex(text).to_hex() == text


def altitude_field_oracle(altitude_m):
    table = [(-1000 + 25 * n, n) for n in range(2048)]
    ft = altitude_m / 0.3048
    _, n = min(table, key=lambda e: abs(e[0] - ft))
    s = f"{n:011b}"
    return int(s[:7] + "1" + s[7:], 2)


def cpr_global_oracle(lat_e_cpr, lon_e_cpr, lat_o_cpr, lon_o_cpr):
    """Independent global CPR decode (even frame taken as most recent)."""

    def nl(lat):
        if abs(lat) >= 87.0:
            return 2 if abs(lat) == 87.0 else 1
        return math.floor(2 * math.pi / math.acos(
            1 - (1 - math.cos(math.pi / 30)) / math.cos(math.radians(lat)) ** 2))

    y0, y1 = lat_e_cpr / 131072, lat_o_cpr / 131072
    x0, x1 = lon_e_cpr / 131072, lon_o_cpr / 131072
    j = math.floor(59 * y0 - 60 * y1 + 0.5)
    lat0 = 6.0 * ((j % 60) + y0)
    lat1 = (360 / 59) * ((j % 59) + y1)
    lat0 = lat0 - 360 if lat0 >= 270 else lat0
    lat1 = lat1 - 360 if lat1 >= 270 else lat1
    if nl(lat0) != nl(lat1):
        return None
    n = nl(lat0)
    m = math.floor(x0 * (n - 1) - x1 * n + 0.5)
    ni = max(n, 1)
    lon = (360 / ni) * ((m % ni) + x0)
    return lat0, (lon + 180) % 360 - 180


def state(lat=0.0, lon=0.0, alt=9000.0, speed=230.0, heading=0.0):
    return AircraftState(lat, lon, alt, speed, heading)


class TestPosition:
    def test_origin_even_lat_zero(self):
        me = encode_airborne_position(state(0.0, 0.0), cpr_odd=False)
        assert (me >> 17) & 0x1FFFF == 0
        assert 9 <= me >> 51 <= 18

    def test_altitude_field_matches_table(self):
        me = encode_airborne_position(state(alt=9000.0), cpr_odd=False)
        assert (me >> 36) & 0xFFF == altitude_field_oracle(9000.0)

    @pytest.mark.parametrize("alt", [-300.0, 0.0, 1234.5, 9000.0, 15000.0])
    def test_altitude_table(self, alt):
        assert frames.encode_altitude(alt) == altitude_field_oracle(alt)

    def test_altitude_out_of_range(self):
        with pytest.raises(RangeError):
            encode_airborne_position(state(alt=20000.0), cpr_odd=False)

    def test_reference_pair_encodes_known_fields(self):
        # published example pair, ICAO 40621D at 38000 ft
        even = frames.decode_airborne_position_fields(AdsbFrame.from_hex("8D40621D58C382D690C8AC2863A7").me)
        odd = frames.decode_airborne_position_fields(AdsbFrame.from_hex("8D40621D58C386435CC412692AD6").me)
        assert (even["lat_cpr"], even["lon_cpr"]) == (93000, 51372)
        assert (odd["lat_cpr"], odd["lon_cpr"]) == (74158, 50194)
        assert round(even["altitude"] / 0.3048) == 38000
        lat, lon = frames.cpr_decode_global((93000, 51372), (74158, 50194), latest_is_odd=False)
        assert lat == pytest.approx(52.2572021484375, abs=1e-9)
        assert lon == pytest.approx(3.91937255859375, abs=1e-9)
        assert frames.cpr_encode(lat, lon, odd=False) == (93000, 51372)

    def test_round_trip_against_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            lat, lon = rng.uniform(-86.0, 86.0), rng.uniform(-180.0, 180.0)
            s = state(lat, lon)
            e = frames.decode_airborne_position_fields(encode_airborne_position(s, False))
            o = frames.decode_airborne_position_fields(encode_airborne_position(s, True))
            got = cpr_global_oracle(e["lat_cpr"], e["lon_cpr"], o["lat_cpr"], o["lon_cpr"])
            assert got is not None
            dlat = 6.0 / 131072
            dlon = 360.0 / max(frames.cpr_nl(lat), 1) / 131072
            assert abs(got[0] - lat) <= dlat
            assert abs((got[1] - lon + 180) % 360 - 180) <= dlon


class TestVelocity:
    def test_zero_speed(self):
        me = encode_airborne_velocity(state(speed=0.0))
        assert me >> 51 == 19
        assert (me >> 32) & 0x3FF == 1 and (me >> 21) & 0x3FF == 1

    def test_east_heading(self):
        east, north = frames.decode_airborne_velocity(encode_airborne_velocity(state(speed=100.0, heading=90.0)))
        step = 1 / frames.KT_PER_MPS
        assert east == pytest.approx(100.0, abs=step)
        assert north == pytest.approx(0.0, abs=step)

    def test_heading_wraparound_is_continuous(self):
        a = frames.decode_airborne_velocity(encode_airborne_velocity(state(speed=200.0, heading=360 - 1e-9)))
        b = frames.decode_airborne_velocity(encode_airborne_velocity(state(speed=200.0, heading=1e-9)))
        assert a == pytest.approx(b, abs=1e-9)

    def test_overflow(self):
        with pytest.raises(RangeError):
            encode_airborne_velocity(state(speed=600.0))

    def test_published_velocity_frame(self):
        east, north = frames.decode_airborne_velocity(AdsbFrame.from_hex("8D485020994409940838175B284F").me)
        gs_kt = math.hypot(east, north) * frames.KT_PER_MPS
        track = math.degrees(math.atan2(east, north)) % 360
        assert gs_kt == pytest.approx(159.20, abs=0.01)
        assert track == pytest.approx(182.88, abs=0.01)

    @settings(max_examples=200)
    @given(st.floats(0, 520), st.floats(0, 359.999))
    def test_decode_within_one_knot(self, speed, heading):
        east, north = frames.decode_airborne_velocity(encode_airborne_velocity(state(speed=speed, heading=heading)))
        step = 0.5 / frames.KT_PER_MPS + 1e-9
        assert east == pytest.approx(speed * math.sin(math.radians(heading)), abs=step)
        assert north == pytest.approx(speed * math.cos(math.radians(heading)), abs=step)

"""Impairment chain and synthetic data sources.

Everything a real receiver would see is generated here: authentic
transponders flying trajectories past a ground station, and the three
ground-based attacks (message replay A1, IQ replay A2, ghost injection A3)
emitted by an SDR spoofer.

Per-capture randomness comes from a child generator seeded with
``(base_seed, capture_index)`` so results do not depend on the order in
which captures are synthesized.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateSignal, SpoofDetError
from .frames import (
    AdsbFrame,
    AircraftState,
    decode_frame,
    encode_airborne_position,
    encode_airborne_velocity,
    encode_frame,
)
from .phy import DEFAULT_SAMPLE_RATE, IqCapture, Label, demodulate, modulate

SPEED_OF_LIGHT = 299_792_458.0
ADSB_CARRIER_HZ = 1090e6
EARTH_RADIUS_M = 6_371_000.0


# ------------------------------------------------------------ sample-level ops

def apply_frequency_offset(capture: IqCapture, delta_f: float, delta_phi: float = 0.0) -> IqCapture:
    """Rotate sample k by exp(j(2 pi delta_f k Ts + delta_phi))."""
    k = np.arange(len(capture))
    rot = np.exp(1j * (2 * np.pi * delta_f * k / capture.sample_rate + delta_phi))
    return replace(capture, samples=capture.samples * rot)


def doppler_alpha(radial_velocity: float, observer_velocity: float = 0.0) -> float:
    """alpha = (c + v_o)/(c - v_s) - 1, with v_s the source's closing speed."""
    return (SPEED_OF_LIGHT + observer_velocity) / (SPEED_OF_LIGHT - radial_velocity) - 1.0


def doppler_shift(carrier: float, radial_velocity: float) -> float:
    """Frequency shift seen by a static receiver; positive when closing."""
    return doppler_alpha(radial_velocity) * carrier


def apply_doppler_exact(capture: IqCapture, alpha: float, carrier: float = ADSB_CARRIER_HZ) -> IqCapture:
    """Time-scaling Doppler model.

    The passband signal becomes (1+alpha) s_p((1+alpha) t); in complex
    baseband that is (1+alpha) s((1+alpha) t) exp(j 2 pi f_c alpha t).  The
    envelope is resampled by linear interpolation on the original grid, so
    the sample count is unchanged.
    """
    n = len(capture)
    k = np.arange(n)
    t_scaled = (1.0 + alpha) * k
    x = capture.samples
    resampled = np.interp(t_scaled, k, x.real) + 1j * np.interp(t_scaled, k, x.imag)
    carrier_term = np.exp(1j * 2 * np.pi * carrier * alpha * k / capture.sample_rate)
    return replace(capture, samples=(1.0 + alpha) * resampled * carrier_term)


def signal_power(samples: np.ndarray) -> float:
    return float(np.mean(np.abs(samples) ** 2))


def apply_awgn(capture: IqCapture, snr_db: float, rng: np.random.Generator) -> IqCapture:
    """Complex white noise at ``snr_db`` below the capture's mean power.

    ``snr_db = inf`` is the noise-free mode and returns an unchanged copy.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return replace(capture, samples=capture.samples.copy())
    p = signal_power(capture.samples)
    if p == 0.0:
        raise DegenerateSignal("cannot set an SNR on a zero-power capture")
    sigma = math.sqrt(p / (2.0 * 10 ** (snr_db / 10.0)))
    n = len(capture)
    noise = rng.normal(0.0, sigma, n) + 1j * rng.normal(0.0, sigma, n)
    return replace(capture, samples=capture.samples + noise)


def gaussian_taps(sigma_us: float, sample_rate: float) -> np.ndarray:
    """Unit-peak Gaussian FIR with time spread ``sigma_us``, cut at 3 sigma."""
    sigma = sigma_us * 1e-6 * sample_rate
    half = int(math.floor(3 * sigma))
    t = np.arange(-half, half + 1)
    return np.exp(-0.5 * (t / sigma) ** 2)


def apply_bandlimit(capture: IqCapture, sigma_us: float) -> IqCapture:
    """Real, symmetric Gaussian low-pass; spreads each pulse into its neighbors."""
    if sigma_us <= 0:
        return capture
    taps = gaussian_taps(sigma_us, capture.sample_rate)
    return replace(capture, samples=np.convolve(capture.samples, taps, mode="same"))


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class TransponderProfile:
    """Transmitter fingerprint.

    ``cfo_mean`` is the oscillator's offset from 1090 MHz; each message
    draws ``cfo_mean + N(0, cfo_jitter_sigma^2)``.  The carrier phase at the
    receiver is uniform on [0, 2 pi) per message when ``random_phase``.
    ``tx_shaping_sigma_us`` is the spread of the transmit chain's pulse
    shaping (0 for the sharp pulses of a transponder's keyed amplifier).
    """

    cfo_mean: float = 0.0
    cfo_jitter_sigma: float = 0.0
    amplitude: float = 0.5
    amplitude_jitter_sigma: float = 0.0
    random_phase: bool = True
    tx_shaping_sigma_us: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude <= 0:
            raise ConfigError("amplitude must be positive")
        if self.cfo_jitter_sigma < 0 or self.amplitude_jitter_sigma < 0 or self.tx_shaping_sigma_us < 0:
            raise ConfigError("jitter and shaping parameters must be non-negative")

    def draw_amplitude(self, rng: np.random.Generator) -> float:
        a = self.amplitude * (1.0 + rng.normal(0.0, self.amplitude_jitter_sigma))
        return max(a, 0.05 * self.amplitude)


class DopplerMode(str, enum.Enum):
    NONE = "none"
    CALCULATED = "calculated"
    RANDOM = "random"


class CfoMode(str, enum.Enum):
    NONE = "none"
    RANDOM = "random"


# the five offset cases: (Doppler, carrier offset)
ATTACK_CASES = {
    "i": (DopplerMode.NONE, CfoMode.NONE),
    "ii": (DopplerMode.CALCULATED, CfoMode.NONE),
    "iii": (DopplerMode.CALCULATED, CfoMode.RANDOM),
    "iv": (DopplerMode.RANDOM, CfoMode.NONE),
    "v": (DopplerMode.RANDOM, CfoMode.RANDOM),
}


@dataclass(frozen=True)
class SpooferProfile(TransponderProfile):
    """SDR spoofer: its own hardware fingerprint plus deliberate offsets.

    Deliberate offsets are added on top of the hardware CFO: a random
    Doppler from U[-random_doppler_max, +random_doppler_max] and/or a random
    carrier offset from U[-random_cfo_max, +random_cfo_max].  Every attack
    waveform is emitted once per entry in ``gains``.
    """

    doppler_mode: DopplerMode = DopplerMode.NONE
    cfo_mode: CfoMode = CfoMode.NONE
    random_doppler_max: float = 1e3
    random_cfo_max: float = 10e3
    gains: tuple[float, ...] = (1.0, 0.6, 0.3)

    def __post_init__(self) -> None:
        super().__post_init__()
        object.__setattr__(self, "doppler_mode", DopplerMode(self.doppler_mode))
        object.__setattr__(self, "cfo_mode", CfoMode(self.cfo_mode))
        object.__setattr__(self, "gains", tuple(float(g) for g in self.gains))
        if not self.gains or min(self.gains) <= 0:
            raise ConfigError("gains must be a non-empty list of positive values")

    def with_case(self, case: str) -> "SpooferProfile":
        try:
            dm, cm = ATTACK_CASES[case]
        except KeyError:
            raise ConfigError(f"unknown attack case {case!r}; expected one of {list(ATTACK_CASES)}") from None
        return replace(self, doppler_mode=dm, cfo_mode=cm)

    def draw_offset(self, rng: np.random.Generator, calculated_doppler: float | None) -> tuple[float, float]:
        """Return (doppler_hz, total carrier offset excluding Doppler)."""
        if self.doppler_mode is DopplerMode.CALCULATED:
            if calculated_doppler is None:
                calculated_doppler = doppler_shift(ADSB_CARRIER_HZ, rng.uniform(-250.0, 250.0))
            fd = calculated_doppler
        elif self.doppler_mode is DopplerMode.RANDOM:
            fd = rng.uniform(-self.random_doppler_max, self.random_doppler_max)
        else:
            fd = 0.0
        fc = self.cfo_mean + rng.normal(0.0, self.cfo_jitter_sigma) if self.cfo_jitter_sigma else self.cfo_mean
        if self.cfo_mode is CfoMode.RANDOM:
            fc += rng.uniform(-self.random_cfo_max, self.random_cfo_max)
        return fd, fc


def default_spoofer(case: str = "v") -> SpooferProfile:
    """SDR spoofer used by the CLI and the desk-scale experiments."""
    return SpooferProfile(
        cfo_mean=0.0,
        cfo_jitter_sigma=50.0,
        amplitude=0.5,
        amplitude_jitter_sigma=0.0,
        tx_shaping_sigma_us=0.25,
    ).with_case(case)


@dataclass(frozen=True)
class ChannelParams:
    """Ground-station receive chain.

    The receiver's front-end low-pass is modeled as a Gaussian with spread
    ``rx_filter_sigma_us`` (0 disables it).
    """

    snr_db: float = 20.0
    station_lat: float = 47.6534
    station_lon: float = -122.3076
    station_alt: float = 50.0
    rx_filter_sigma_us: float = 0.25

    def receive(self, capture: IqCapture, rng: np.random.Generator) -> IqCapture:
        return apply_awgn(apply_bandlimit(capture, self.rx_filter_sigma_us), self.snr_db, rng)


# -------------------------------------------------------------- trajectories

def _ecef(lat: float, lon: float, alt: float) -> np.ndarray:
    r = EARTH_RADIUS_M + alt
    la, lo = math.radians(lat), math.radians(lon)
    return np.array([r * math.cos(la) * math.cos(lo), r * math.cos(la) * math.sin(lo), r * math.sin(la)])


def _wrap_lon(lon: float) -> float:
    return (lon + 180.0) % 360.0 - 180.0


def offset_position(lat: float, lon: float, north_m: float, east_m: float) -> tuple[float, float]:
    new_lat = lat + math.degrees(north_m / EARTH_RADIUS_M)
    new_lat = min(max(new_lat, -89.9), 89.9)
    coslat = max(math.cos(math.radians(lat)), 1e-6)
    return new_lat, _wrap_lon(lon + math.degrees(east_m / (EARTH_RADIUS_M * coslat)))


@dataclass(frozen=True)
class Trajectory:
    """Constant-heading, constant-speed track starting at ``start``."""

    icao: int
    start: AircraftState

    def state_at(self, t: float) -> AircraftState:
        s = self.start
        dist = s.ground_speed * t
        h = math.radians(s.heading)
        lat, lon = offset_position(s.latitude, s.longitude, dist * math.cos(h), dist * math.sin(h))
        return AircraftState(lat, lon, s.altitude, s.ground_speed, s.heading, s.timestamp + t)

    def closing_speed(self, t: float, channel: ChannelParams, dt: float = 0.5) -> float:
        """Rate at which the range to the station shrinks, in m/s."""
        station = _ecef(channel.station_lat, channel.station_lon, channel.station_alt)

        def rng_at(tt: float) -> float:
            st = self.state_at(tt)
            return float(np.linalg.norm(_ecef(st.latitude, st.longitude, st.altitude) - station))

        return -(rng_at(t + dt) - rng_at(t - dt)) / (2 * dt)


# alias used where the track belongs to a ghost aircraft
GhostTrajectory = Trajectory


def sample_trajectory(rng: np.random.Generator, icao: int, channel: ChannelParams,
                      speed_mean: float = 230.0, speed_sd: float = 10.0,
                      alt_mean: float = 9000.0, alt_sd: float = 500.0,
                      min_range_km: float = 20.0, max_range_km: float = 150.0) -> Trajectory:
    """Random track: speed ~ N(230, 10) m/s (redrawn until positive),
    altitude ~ N(9000, 500) m, heading ~ U[0, 360), start within the range
    annulus around the station."""
    speed = rng.normal(speed_mean, speed_sd)
    while speed <= 0:
        speed = rng.normal(speed_mean, speed_sd)
    alt = rng.normal(alt_mean, alt_sd)
    heading = rng.uniform(0.0, 360.0)
    bearing = rng.uniform(0.0, 2 * math.pi)
    dist = 1e3 * rng.uniform(min_range_km, max_range_km)
    lat, lon = offset_position(channel.station_lat, channel.station_lon,
                               dist * math.cos(bearing), dist * math.sin(bearing))
    return Trajectory(icao, AircraftState(lat, lon, alt, speed, heading % 360.0))


def random_icaos(rng: np.random.Generator, n: int, exclude: set[int] | frozenset = frozenset()) -> list[int]:
    out: list[int] = []
    seen = set(exclude)
    while len(out) < n:
        icao = int(rng.integers(1, 1 << 24))
        if icao not in seen:
            seen.add(icao)
            out.append(icao)
    return out


@dataclass(frozen=True)
class FleetMember:
    profile: TransponderProfile
    trajectory: Trajectory

    @property
    def icao(self) -> int:
        return self.trajectory.icao


def make_fleet(n: int, rng: np.random.Generator, channel: ChannelParams = ChannelParams(),
               cfo_spread: float = 20e3, cfo_jitter: float = 100.0,
               amplitude_range: tuple[float, float] = (0.3, 0.8),
               amplitude_jitter: float = 0.05) -> list[FleetMember]:
    """Authentic fleet with CFO means evenly spread over +-cfo_spread.

    Means are assigned to aircraft in random order.
    """
    if n < 1:
        raise ConfigError("fleet must contain at least one aircraft")
    cfos = np.linspace(-cfo_spread, cfo_spread, n) if n > 1 else np.zeros(1)
    cfos = cfos[rng.permutation(n)]
    icaos = random_icaos(rng, n)
    fleet = []
    for icao, cfo in zip(icaos, cfos):
        profile = TransponderProfile(
            cfo_mean=float(cfo),
            cfo_jitter_sigma=cfo_jitter,
            amplitude=float(rng.uniform(*amplitude_range)),
            amplitude_jitter_sigma=amplitude_jitter,
        )
        fleet.append(FleetMember(profile, sample_trajectory(rng, icao, channel)))
    return fleet


# ----------------------------------------------------------------- synthesis

def _child(base: int, index: int) -> np.random.Generator:
    return np.random.default_rng([base, index])


def _base_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def message_schedule(duration: float, per_second: int) -> list[tuple[float, str, bool]]:
    """(time offset, kind, cpr_odd) for each message in ``duration`` seconds.

    Kinds alternate position/velocity; CPR parity alternates between
    successive position messages.
    """
    out = []
    j = 0
    for s in range(int(math.floor(duration))):
        for k in range(per_second):
            kind = "position" if j % 2 == 0 else "velocity"
            out.append((s + k / per_second, kind, (j // 2) % 2 == 1))
            j += 1
    return out


def frame_for_state(icao: int, state: AircraftState, kind: str, cpr_odd: bool, capability: int = 5) -> np.ndarray:
    if kind == "position":
        me = encode_airborne_position(state, cpr_odd)
    else:
        me = encode_airborne_velocity(state)
    return encode_frame(capability, icao, me)


def _transmit(bits: np.ndarray, profile: TransponderProfile, amplitude: float, freq: float, phase: float,
              sample_rate: float, alpha: float | None = None, **meta) -> IqCapture:
    """Transmitter side: PPM, pulse shaping, oscillator offset and phase."""
    cap = modulate(bits, sample_rate, amplitude, **meta)
    cap = apply_bandlimit(cap, profile.tx_shaping_sigma_us)
    if alpha is not None:
        cap = apply_doppler_exact(cap, alpha)
    return apply_frequency_offset(cap, freq, phase)


def synth_authentic(fleet: Sequence[FleetMember], duration: float, channel: ChannelParams,
                    rng: np.random.Generator, sample_rate: float = DEFAULT_SAMPLE_RATE,
                    per_second: int = 1, start_time: float = 0.0) -> list[IqCapture]:
    """A0 captures: every aircraft emits ``per_second`` messages each second.

    Each message carries its aircraft's CFO (mean plus jitter), the true
    Doppler from the track geometry, a random carrier phase and amplitude
    jitter, then passes the receive chain.
    """
    if not fleet:
        raise ConfigError("fleet must not be empty")
    base = _base_seed(rng)
    schedule = message_schedule(duration, per_second)
    out: list[IqCapture] = []
    idx = 0
    for member in fleet:
        prof = member.profile
        for t, kind, odd in schedule:
            r = _child(base, idx)
            idx += 1
            state = member.trajectory.state_at(t)
            bits = frame_for_state(member.icao, state, kind, odd)
            v_close = member.trajectory.closing_speed(t, channel)
            alpha = doppler_alpha(v_close)
            cfo = prof.cfo_mean + (r.normal(0.0, prof.cfo_jitter_sigma) if prof.cfo_jitter_sigma else 0.0)
            phase = r.uniform(0.0, 2 * math.pi) if prof.random_phase else 0.0
            cap = _transmit(bits, prof, prof.draw_amplitude(r), cfo, phase, sample_rate, alpha=alpha,
                            label=Label.A0, claimed_icao=member.icao, truth_icao=member.icao,
                            timestamp=start_time + t,
                            info={"kind": kind, "doppler_hz": alpha * ADSB_CARRIER_HZ, "cfo_hz": cfo})
            out.append(channel.receive(cap, r))
    out.sort(key=lambda c: (c.timestamp, c.claimed_icao))
    return out


def _spoofed(bits: np.ndarray, spoofer: SpooferProfile, channel: ChannelParams, r: np.random.Generator,
             sample_rate: float, label: Label, claimed: int, timestamp: float,
             calculated_doppler: float | None, case: str | None) -> list[IqCapture]:
    fd, fc = spoofer.draw_offset(r, calculated_doppler)
    phase = r.uniform(0.0, 2 * math.pi) if spoofer.random_phase else 0.0
    amp = spoofer.draw_amplitude(r)
    info = {"doppler_hz": fd, "cfo_hz": fc}
    if case:
        info["case"] = case
    wave = _transmit(bits, spoofer, amp, fd + fc, phase, sample_rate,
                     label=label, claimed_icao=claimed, truth_icao=None, timestamp=timestamp)
    out = []
    for g in spoofer.gains:
        cap = replace(wave, samples=wave.samples * g, info={**info, "gain": g})
        out.append(channel.receive(cap, r))
    return out


def _case_name(spoofer: SpooferProfile) -> str | None:
    for name, modes in ATTACK_CASES.items():
        if modes == (spoofer.doppler_mode, spoofer.cfo_mode):
            return name
    return None


def synth_message_replay(authentic: Sequence[AdsbFrame], spoofer: SpooferProfile, channel: ChannelParams,
                         rng: np.random.Generator, sample_rate: float = DEFAULT_SAMPLE_RATE,
                         calculated_doppler: Sequence[float] | None = None,
                         timestamps: Sequence[float] | None = None) -> list[IqCapture]:
    """A1: re-modulate previously decoded frames with the spoofer's hardware.

    ``calculated_doppler`` optionally gives, per frame, the Doppler the
    attacker computed for the impersonated aircraft.
    """
    base = _base_seed(rng)
    case = _case_name(spoofer)
    out: list[IqCapture] = []
    for i, frame in enumerate(authentic):
        r = _child(base, i)
        fd = None if calculated_doppler is None else calculated_doppler[i]
        ts = float(timestamps[i]) if timestamps is not None else float(i)
        out.extend(_spoofed(frame.bits(), spoofer, channel, r, sample_rate, Label.A1,
                            frame.icao, ts, fd, case))
    return out


def synth_iq_replay(authentic: Sequence[IqCapture], spoofer: SpooferProfile, channel: ChannelParams,
                    rng: np.random.Generator, worst_case: bool = False) -> list[IqCapture]:
    """A2: retransmit recorded samples.

    The default path passes the recording through the spoofer's transmit
    chain (shaping, its carrier offset, gain sweep) and the station's
    receive chain again.  ``worst_case`` replays the station's own
    recording untouched except for fresh noise.
    """
    base = _base_seed(rng)
    out: list[IqCapture] = []
    for i, src in enumerate(authentic):
        r = _child(base, i)
        meta = dict(label=Label.A2, claimed_icao=src.claimed_icao, truth_icao=None, timestamp=src.timestamp)
        if worst_case:
            cap = replace(src, samples=src.samples.copy(), info={"worst_case": True}, **meta)
            out.append(apply_awgn(cap, channel.snr_db, r))
            continue
        _, fc = spoofer.draw_offset(r, None)
        fd = 0.0
        if spoofer.doppler_mode is DopplerMode.RANDOM:
            fd = r.uniform(-spoofer.random_doppler_max, spoofer.random_doppler_max)
        phase = r.uniform(0.0, 2 * math.pi) if spoofer.random_phase else 0.0
        wave = apply_bandlimit(replace(src, **meta), spoofer.tx_shaping_sigma_us)
        wave = apply_frequency_offset(wave, fd + fc, phase)
        info = {"doppler_hz": fd, "cfo_hz": fc}
        for g in spoofer.gains:
            cap = replace(wave, samples=wave.samples * g, info={**info, "gain": g})
            out.append(channel.receive(cap, r))
    return out


def synth_ghost_injection(n_aircraft: int, duration: float, spoofer: SpooferProfile, channel: ChannelParams,
                          rng: np.random.Generator, sample_rate: float = DEFAULT_SAMPLE_RATE,
                          per_second: int = 2, exclude_icaos: set[int] | frozenset = frozenset(),
                          start_time: float = 0.0) -> list[IqCapture]:
    """A3: fabricated tracks for ``n_aircraft`` non-existent aircraft.

    Each ghost broadcasts position and velocity every second; "calculated"
    Doppler is the one its fake track would produce at the station.
    """
    if n_aircraft < 1:
        raise ConfigError("n_aircraft must be >= 1")
    icaos = random_icaos(rng, n_aircraft, exclude_icaos)
    tracks = [sample_trajectory(rng, icao, channel) for icao in icaos]
    base = _base_seed(rng)
    case = _case_name(spoofer)
    schedule = message_schedule(duration, per_second)
    out: list[IqCapture] = []
    idx = 0
    for track in tracks:
        for t, kind, odd in schedule:
            r = _child(base, idx)
            idx += 1
            bits = frame_for_state(track.icao, track.state_at(t), kind, odd)
            calc = doppler_shift(ADSB_CARRIER_HZ, track.closing_speed(t, channel))
            out.extend(_spoofed(bits, spoofer, channel, r, sample_rate, Label.A3, track.icao,
                                start_time + t, calc, case))
    out.sort(key=lambda c: (c.timestamp, c.claimed_icao))
    return out


def decoded_frames(captures: Sequence[IqCapture]) -> list[AdsbFrame]:
    """Frames an attacker recovers from recorded captures (parity-valid only)."""
    out = []
    for c in captures:
        try:
            out.append(decode_frame(demodulate(c)))
        except SpoofDetError:
            continue
    return out


# ------------------------------------------------------------------ scenario

ATTACK_LABELS = {"a0": Label.A0, "a1": Label.A1, "a2": Label.A2, "a3": Label.A3}


@dataclass
class Scenario:
    """Everything needed to synthesize a labeled corpus.

    Attack waveforms are spread round-robin over ``cases``; each waveform is
    then emitted at every spoofer gain, so ``attack_messages`` counts
    received captures, not waveforms.
    """

    fleet_size: int = 20
    messages_per_aircraft: int = 500
    attack_messages: int = 500
    attacks: tuple[str, ...] = ("a0", "a1", "a2", "a3")
    cases: tuple[str, ...] = ("i", "ii", "iii", "iv", "v")
    ghost_aircraft: int = 20
    iq_replay_worst_case: bool = False
    sample_rate: float = DEFAULT_SAMPLE_RATE
    channel: ChannelParams = field(default_factory=ChannelParams)
    spoofer: SpooferProfile = field(default_factory=default_spoofer)
    cfo_spread: float = 20e3
    cfo_jitter: float = 100.0

    def __post_init__(self) -> None:
        self.attacks = tuple(a.lower() for a in self.attacks)
        bad = [a for a in self.attacks if a not in ATTACK_LABELS]
        if bad:
            raise ConfigError(f"unknown attack labels {bad}")
        for c in self.cases:
            if c not in ATTACK_CASES:
                raise ConfigError(f"unknown attack case {c!r}")
        if self.fleet_size < 1 or self.messages_per_aircraft < 0 or self.attack_messages < 0:
            raise ConfigError("scenario sizes must be non-negative and the fleet non-empty")


@dataclass
class Corpus:
    captures: list[IqCapture]
    fleet: list[FleetMember]

    def by_label(self, label: Label) -> list[IqCapture]:
        return [c for c in self.captures if c.label is label]


def _take(captures: list[IqCapture], n: int, rng: np.random.Generator) -> list[IqCapture]:
    if len(captures) <= n:
        return captures
    keep = np.sort(rng.choice(len(captures), size=n, replace=False))
    return [captures[i] for i in keep]


def synth_scenario(scenario: Scenario, seed: int) -> Corpus:
    """Synthesize the full labeled corpus for ``scenario``.

    The authentic fleet and its A0 traffic are always generated because the
    replay attacks draw on them; A0 captures are only returned when "a0" is
    requested.
    """
    root = np.random.SeedSequence(seed)
    s_fleet, s_a0, s_a1, s_a2, s_a3, s_take = (np.random.default_rng(s) for s in root.spawn(6))
    sc = scenario
    ch = sc.channel
    fleet = make_fleet(sc.fleet_size, s_fleet, ch, sc.cfo_spread, sc.cfo_jitter)
    a0 = synth_authentic(fleet, sc.messages_per_aircraft, ch, s_a0, sc.sample_rate)
    out: list[IqCapture] = list(a0) if "a0" in sc.attacks else []

    n_gain = len(sc.spoofer.gains)
    n_wave = -(-sc.attack_messages // n_gain)
    per_case = [n_wave // len(sc.cases) + (k < n_wave % len(sc.cases)) for k in range(len(sc.cases))]

    if "a1" in sc.attacks and sc.attack_messages:
        pool = [a0[i] for i in s_a1.permutation(len(a0))[:n_wave]]
        frames = decoded_frames(pool)
        caps: list[IqCapture] = []
        start = 0
        for case, n in zip(sc.cases, per_case):
            chunk = list(zip(pool, frames))[start:start + n]
            start += n
            if not chunk:
                continue
            caps += synth_message_replay(
                [f for _, f in chunk], sc.spoofer.with_case(case), ch, s_a1, sc.sample_rate,
                calculated_doppler=[c.info["doppler_hz"] for c, _ in chunk],
                timestamps=[c.timestamp for c, _ in chunk])
        out += _take(caps, sc.attack_messages, s_take)

    if "a2" in sc.attacks and sc.attack_messages:
        pool = [a0[i] for i in s_a2.permutation(len(a0))[:n_wave]]
        caps = []
        start = 0
        for case, n in zip(sc.cases, per_case):
            chunk = pool[start:start + n]
            start += n
            if chunk:
                caps += synth_iq_replay(chunk, sc.spoofer.with_case(case), ch, s_a2, sc.iq_replay_worst_case)
        out += _take(caps, sc.attack_messages, s_take)

    if "a3" in sc.attacks and sc.attack_messages:
        caps = []
        taken: set[int] = {m.icao for m in fleet}
        for case, n in zip(sc.cases, per_case):
            if not n:
                continue
            ghosts = max(1, min(sc.ghost_aircraft, n))
            duration = math.ceil(n / (2 * ghosts))
            wave = synth_ghost_injection(ghosts, duration, sc.spoofer.with_case(case), ch, s_a3,
                                         sc.sample_rate, exclude_icaos=frozenset(taken))
            taken |= {c.claimed_icao for c in wave}
            # gain copies of one waveform are adjacent; keep whole groups
            groups = [wave[i:i + n_gain] for i in range(0, len(wave), n_gain)]
            keep = np.sort(s_take.choice(len(groups), size=min(n, len(groups)), replace=False))
            caps += [c for i in keep for c in groups[i]]
        out += _take(caps, sc.attack_messages, s_take)
    return Corpus(out, fleet)

"""Pulse-position modulation, preamble search, demodulation and IQ files.

Timing is expressed in half-microsecond *chips*: the 8 us preamble is 16
chips with pulses on chips 0, 2, 7 and 9, and data bit ``m`` occupies chips
``16 + 2m`` (pulse when the bit is 1) and ``17 + 2m`` (pulse when 0).  A
full extended squitter is 240 chips = 120 us.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import ConfigError, FormatError
from .frames import FRAME_BITS, format_icao, parse_icao

CHIP_RATE = 2_000_000          # chips per second (0.5 us chips)
DEFAULT_SAMPLE_RATE = 2_000_000
PREAMBLE_CHIPS = 16
MESSAGE_CHIPS = PREAMBLE_CHIPS + 2 * FRAME_BITS
PREAMBLE_PULSES = (0, 2, 7, 9)
PREAMBLE_GAPS = tuple(c for c in range(PREAMBLE_CHIPS) if c not in PREAMBLE_PULSES)
DEFAULT_MIN_RATIO_DB = 6.0


class Label(str, enum.Enum):
    A0 = "A0"   # authentic
    A1 = "A1"   # message replay
    A2 = "A2"   # IQ replay
    A3 = "A3"   # ghost aircraft injection

    @property
    def malicious(self) -> bool:
        return self is not Label.A0


@dataclass
class IqCapture:
    """One message worth of complex baseband samples plus its metadata."""

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    label: Label = Label.A0
    claimed_icao: int = 0
    truth_icao: int | None = None
    timestamp: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        self.label = Label(self.label)

    @property
    def sample_period(self) -> float:
        return 1.0 / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class IqStream:
    samples: np.ndarray
    sample_rate: float


def samples_per_chip(sample_rate: float) -> int:
    spc = sample_rate / CHIP_RATE
    if spc < 1 or abs(spc - round(spc)) > 1e-9:
        raise ConfigError(f"sample rate {sample_rate} is not an integer multiple of 2 MHz")
    return int(round(spc))


def message_length(sample_rate: float) -> int:
    return MESSAGE_CHIPS * samples_per_chip(sample_rate)


def chip_pattern(bits: Iterable[int]) -> np.ndarray:
    """On/off pattern of the 240 chips for a 112-bit frame."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size != FRAME_BITS:
        raise ConfigError(f"expected {FRAME_BITS} bits, got {bits.size}")
    chips = np.zeros(MESSAGE_CHIPS)
    chips[list(PREAMBLE_PULSES)] = 1.0
    data = np.where(bits == 1, 0, 1) + PREAMBLE_CHIPS + 2 * np.arange(FRAME_BITS)
    chips[data] = 1.0
    return chips


def modulate(frame: Iterable[int], sample_rate: float = DEFAULT_SAMPLE_RATE,
             amplitude: float = 1.0, **meta) -> IqCapture:
    """Zero-phase PPM baseband rendering of a 112-bit frame."""
    spc = samples_per_chip(sample_rate)
    if amplitude < 0:
        raise ConfigError("amplitude must be non-negative")
    samples = np.repeat(chip_pattern(frame) * amplitude, spc).astype(np.complex128)
    return IqCapture(samples=samples, sample_rate=sample_rate, **meta)


def _chip_sums(mag: np.ndarray, spc: int) -> np.ndarray:
    """Sum of ``mag`` over each length-``spc`` window, indexed by window start."""
    cs = np.concatenate([[0.0], np.cumsum(mag)])
    return cs[spc:] - cs[:-spc]


def detect_preamble(stream: np.ndarray, sample_rate: float = DEFAULT_SAMPLE_RATE,
                    threshold: float | None = None,
                    min_ratio_db: float = DEFAULT_MIN_RATIO_DB) -> list[int]:
    """Start indices of messages in a long sample stream.

    A candidate start ``i`` is scored by correlating the magnitude with the
    preamble template (mean over pulse chips minus mean over gap chips).  It
    is accepted when the pulse mean reaches ``threshold`` and exceeds the
    in-preamble gap level by ``min_ratio_db``, and every pulse chip must
    outweigh every gap chip.  When ``threshold`` is None it
    defaults to 6 dB above the median magnitude of the stream.  Survivors go
    through greedy non-maximum suppression over one message length.
    """
    spc = samples_per_chip(sample_rate)
    mag = np.abs(np.asarray(stream))
    n_starts = mag.size - PREAMBLE_CHIPS * spc + 1
    if n_starts <= 0:
        return []
    sums = _chip_sums(mag, spc)
    idx = np.arange(n_starts)
    pulse = sum(sums[idx + c * spc] for c in PREAMBLE_PULSES) / (len(PREAMBLE_PULSES) * spc)
    gap = sum(sums[idx + c * spc] for c in PREAMBLE_GAPS) / (len(PREAMBLE_GAPS) * spc)
    if threshold is None:
        threshold = 10 ** (DEFAULT_MIN_RATIO_DB / 20) * float(np.median(mag))
    ratio = 10 ** (min_ratio_db / 20)
    # every pulse chip must stand above every gap chip
    min_pulse = np.min([sums[idx + c * spc] for c in PREAMBLE_PULSES], axis=0)
    max_gap = np.max([sums[idx + c * spc] for c in PREAMBLE_GAPS], axis=0)
    ok = (pulse >= threshold) & (pulse > 0) & (pulse >= ratio * gap) & (min_pulse > max_gap)
    cand = np.flatnonzero(ok)
    if cand.size == 0:
        return []
    score = pulse[cand] - gap[cand]
    order = cand[np.lexsort((cand, -score))]
    span = message_length(sample_rate)
    taken: list[int] = []
    for i in order.tolist():
        if all(abs(i - t) >= span for t in taken):
            taken.append(i)
    return sorted(taken)


def demodulate_samples(samples: np.ndarray, sample_rate: float = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    spc = samples_per_chip(sample_rate)
    need = MESSAGE_CHIPS * spc
    samples = np.asarray(samples)
    if samples.size < need:
        raise FormatError(f"need {need} samples to demodulate, got {samples.size}")
    chips = np.abs(samples[:need]).reshape(MESSAGE_CHIPS, spc).sum(axis=1)
    data = chips[PREAMBLE_CHIPS:].reshape(FRAME_BITS, 2)
    return (data[:, 0] > data[:, 1]).astype(np.uint8)


def demodulate(capture: IqCapture) -> np.ndarray:
    """Recover the 112 bits of a capture aligned to its preamble.

    Bit m is 1 iff the first half of its slot carries more summed magnitude
    than the second half; decisions therefore ignore phase entirely.
    """
    return demodulate_samples(capture.samples, capture.sample_rate)


# ----------------------------------------------------------------- IQ files

def quantize(samples: np.ndarray) -> bytes:
    """Interleaved unsigned 8-bit I/Q, value = round(127.5 + 127.5 x)."""
    samples = np.asarray(samples, dtype=np.complex128)
    iq = np.empty(2 * samples.size)
    iq[0::2] = samples.real
    iq[1::2] = samples.imag
    q = np.floor(127.5 + 127.5 * iq + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8).tobytes()


def write_iq_file(captures: Iterable[IqCapture]) -> bytes:
    return b"".join(quantize(c.samples) for c in captures)


def read_iq_file(data: bytes, sample_rate: float = DEFAULT_SAMPLE_RATE) -> IqStream:
    if sample_rate <= 0:
        raise ConfigError("sample_rate must be positive")
    if len(data) % 2:
        raise FormatError(f"IQ byte stream has odd length {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8).astype(np.float64)
    iq = (raw - 127.5) / 127.5
    return IqStream(samples=iq[0::2] + 1j * iq[1::2], sample_rate=sample_rate)


def manifest_records(captures: Iterable[IqCapture]) -> list[dict]:
    records, offset = [], 0
    for i, c in enumerate(captures):
        records.append({
            "index": i,
            "byte_offset": offset,
            "n_samples": len(c),
            "sample_rate": c.sample_rate,
            "label": c.label.value,
            "claimed_icao": format_icao(c.claimed_icao),
            "truth_icao": None if c.truth_icao is None else format_icao(c.truth_icao),
            "timestamp": c.timestamp,
            **({"info": c.info} if c.info else {}),
        })
        offset += 2 * len(c)
    return records


def write_manifest(captures: Iterable[IqCapture], fh: IO[str]) -> None:
    """One JSON object per line, in capture order."""
    for rec in manifest_records(captures):
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(fh: IO[str]) -> list[dict]:
    out = []
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest line {lineno}: {exc}") from exc
    return out


def load_captures(iq_bytes: bytes, manifest: list[dict]) -> list[IqCapture]:
    """Rebuild captures from an IQ byte stream and its manifest records."""
    captures = []
    for rec in manifest:
        try:
            start = int(rec["byte_offset"])
            n = int(rec["n_samples"])
            rate = float(rec["sample_rate"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad manifest record {rec!r}") from exc
        chunk = iq_bytes[start:start + 2 * n]
        if len(chunk) != 2 * n:
            raise FormatError(f"manifest record {rec.get('index')} runs past end of IQ data")
        captures.append(IqCapture(
            samples=read_iq_file(chunk, rate).samples,
            sample_rate=rate,
            label=Label(rec["label"]),
            claimed_icao=parse_icao(rec["claimed_icao"]),
            truth_icao=None if rec.get("truth_icao") is None else parse_icao(rec["truth_icao"]),
            timestamp=float(rec.get("timestamp", 0.0)),
            info=dict(rec.get("info", {})),
        ))
    return captures

"""Exception hierarchy shared by every module."""

from __future__ import annotations


class SpoofDetError(Exception):
    """Base class for all errors raised by this package."""


class InputSizeError(SpoofDetError, ValueError):
    pass


class ParityError(SpoofDetError, ValueError):
    """Stored parity does not match the CRC-24 of the first 88 bits."""

    def __init__(self, computed: int, stored: int):
        self.computed = computed
        self.stored = stored
        super().__init__(f"parity mismatch: computed {computed:06X}, stored {stored:06X}")


class UnsupportedFormat(SpoofDetError, ValueError):
    pass


class RangeError(SpoofDetError, ValueError):
    pass


class ConfigError(SpoofDetError, ValueError):
    pass


class FormatError(SpoofDetError, ValueError):
    pass


class ShapeError(SpoofDetError, ValueError):
    pass


class DegenerateSignal(SpoofDetError, ValueError):
    pass


class UndefinedMetric(SpoofDetError, ValueError):
    pass


class UnknownAircraft(SpoofDetError, KeyError):
    def __init__(self, icao: int):
        self.icao = icao
        super().__init__(f"ICAO {icao:06X} is not in the aircraft classifier index")

    def __str__(self) -> str:
        return self.args[0]

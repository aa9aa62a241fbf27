"""Two-stage detector.

Stage 1 scores a message's raw IQ samples for ground-based spoofing.  Only
messages that pass go to stage 2, which predicts the transmitting aircraft
from the phase pattern and compares it with the ICAO address the message
claims.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import ConfigError, UnknownAircraft
from .features import extract_iq_features, extract_phase_features
from .frames import format_icao
from .nn import MlpModel, forward, load_model, save_model
from .phy import IqCapture

DEFAULT_THRESHOLD = 0.5
MALICIOUS_CLASS = 1


class VerdictKind(str, enum.Enum):
    AUTHENTIC = "Authentic"
    GROUND_SPOOF = "GroundSpoof"
    AIRCRAFT_SPOOF = "AircraftSpoof"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    claimed: int
    predicted: int | None
    message_malicious_prob: float
    aircraft_class_probs: tuple[float, ...] | None = None
    timestamp: float = 0.0

    def to_record(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "claimed": format_icao(self.claimed),
            "predicted": None if self.predicted is None else format_icao(self.predicted),
            "message_malicious_prob": self.message_malicious_prob,
            "aircraft_max_prob": None if self.aircraft_class_probs is None else max(self.aircraft_class_probs),
        }


class Pipeline:
    """Message model (2 classes, IQ input) plus aircraft model (phase input).

    The aircraft model's ``classes`` list is the class-to-ICAO table.
    """

    def __init__(self, message_model: MlpModel, aircraft_model: MlpModel,
                 message_threshold: float = DEFAULT_THRESHOLD):
        if message_model.n_classes != 2:
            raise ConfigError("message model must have exactly two outputs")
        if aircraft_model.classes is None:
            raise ConfigError("aircraft model needs a class-to-ICAO table")
        if len(set(aircraft_model.classes)) != len(aircraft_model.classes):
            raise ConfigError("class-to-ICAO table must be one-to-one")
        if not 0.0 < message_threshold < 1.0:
            raise ConfigError("message threshold must lie in (0, 1)")
        self.message_model = message_model
        self.aircraft_model = aircraft_model
        self.message_threshold = message_threshold
        self.icao_to_class = {int(a): i for i, a in enumerate(aircraft_model.classes)}

    @property
    def class_to_icao(self) -> list[int]:
        return [int(a) for a in self.aircraft_model.classes]

    def save(self, message_path: str | Path, aircraft_path: str | Path) -> None:
        save_model(self.message_model, message_path)
        save_model(self.aircraft_model, aircraft_path)

    @classmethod
    def load(cls, message_path: str | Path, aircraft_path: str | Path,
             message_threshold: float = DEFAULT_THRESHOLD) -> "Pipeline":
        return cls(load_model(message_path), load_model(aircraft_path), message_threshold)


def _iq_row(model: MlpModel, capture: IqCapture) -> np.ndarray:
    normalize = model.flags.get("normalized", True)
    return extract_iq_features(capture, normalize)[None, :]


def classify_message(pipeline: Pipeline, capture: IqCapture) -> float:
    """Probability that the message is a ground-based attack."""
    return float(forward(pipeline.message_model, _iq_row(pipeline.message_model, capture))[0, MALICIOUS_CLASS])


def classify_aircraft(pipeline: Pipeline, capture: IqCapture) -> tuple[int, np.ndarray]:
    """(predicted ICAO, class distribution); argmax ties go to the lowest index.

    Raises UnknownAircraft when the claimed address is not one the model
    was trained on.
    """
    if capture.claimed_icao not in pipeline.icao_to_class:
        raise UnknownAircraft(capture.claimed_icao)
    probs = forward(pipeline.aircraft_model, extract_phase_features(capture)[None, :])[0]
    return pipeline.class_to_icao[int(np.argmax(probs))], probs


def detect(pipeline: Pipeline, capture: IqCapture) -> Verdict:
    p_mal = classify_message(pipeline, capture)
    if p_mal >= pipeline.message_threshold:
        return Verdict(VerdictKind.GROUND_SPOOF, capture.claimed_icao, None, p_mal, timestamp=capture.timestamp)
    predicted, probs = classify_aircraft(pipeline, capture)
    kind = VerdictKind.AUTHENTIC if predicted == capture.claimed_icao else VerdictKind.AIRCRAFT_SPOOF
    return Verdict(kind, capture.claimed_icao, predicted, p_mal, tuple(float(p) for p in probs),
                   timestamp=capture.timestamp)


def detect_batch(pipeline: Pipeline, captures: list[IqCapture]) -> list[Verdict]:
    """``detect`` over many captures with one forward pass per stage."""
    if not captures:
        return []
    X = np.stack([_iq_row(pipeline.message_model, c)[0] for c in captures])
    p_mal = forward(pipeline.message_model, X)[:, MALICIOUS_CLASS]
    passed = [i for i, p in enumerate(p_mal) if p < pipeline.message_threshold]
    for i in passed:
        if captures[i].claimed_icao not in pipeline.icao_to_class:
            raise UnknownAircraft(captures[i].claimed_icao)
    probs = {}
    if passed:
        P = forward(pipeline.aircraft_model, np.stack([extract_phase_features(captures[i]) for i in passed]))
        probs = dict(zip(passed, P))
    out = []
    for i, c in enumerate(captures):
        p = float(p_mal[i])
        if i not in probs:
            out.append(Verdict(VerdictKind.GROUND_SPOOF, c.claimed_icao, None, p, timestamp=c.timestamp))
            continue
        predicted = pipeline.class_to_icao[int(np.argmax(probs[i]))]
        kind = VerdictKind.AUTHENTIC if predicted == c.claimed_icao else VerdictKind.AIRCRAFT_SPOOF
        out.append(Verdict(kind, c.claimed_icao, predicted, p, tuple(float(v) for v in probs[i]), c.timestamp))
    return out


def write_verdicts(verdicts: Iterable[Verdict], fh: IO[str]) -> int:
    n = 0
    for v in verdicts:
        fh.write(json.dumps(v.to_record(), sort_keys=True) + "\n")
        n += 1
    return n

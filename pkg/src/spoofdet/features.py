"""Classifier inputs derived from aligned captures.

Message classification consumes interleaved I/Q samples; aircraft
classification consumes per-sample wrapped phases, which carry the carrier
offset fingerprint but not the (spoofable) bit pattern's sign structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateSignal, FormatError, ShapeError
from .phy import IqCapture, Label, message_length

FEATURE_KINDS = ("iq", "phase")
LABEL_CODES = {lab: i for i, lab in enumerate(Label)}
HEADER_VERSION = 1


def _check(capture: IqCapture) -> np.ndarray:
    expected = message_length(capture.sample_rate)
    if capture.samples.size != expected:
        raise ShapeError(f"capture has {capture.samples.size} samples, expected {expected}")
    if not np.any(capture.samples):
        raise DegenerateSignal("capture is all zeros")
    return capture.samples


def extract_iq_features(capture: IqCapture, normalize: bool = True) -> np.ndarray:
    """Interleave (i0, q0, i1, q1, ...), scaled by the largest |component|."""
    x = _check(capture)
    out = np.empty(2 * x.size)
    out[0::2] = x.real
    out[1::2] = x.imag
    if normalize:
        out /= np.max(np.abs(out))
    return out


def extract_phase_features(capture: IqCapture) -> np.ndarray:
    """Wrapped per-sample phase in (-pi, pi]; exact zeros map to 0."""
    x = _check(capture)
    phase = np.arctan2(x.imag, x.real)
    phase[phase <= -np.pi] = np.pi
    phase[x == 0] = 0.0
    return phase


def extract(capture: IqCapture, kind: str, normalize: bool = True) -> np.ndarray:
    if kind == "iq":
        return extract_iq_features(capture, normalize)
    if kind == "phase":
        return extract_phase_features(capture)
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass
class FeatureSet:
    """Row-per-message feature matrix with its ground-truth columns."""

    X: np.ndarray
    labels: np.ndarray          # Label codes 0..3
    claimed_icao: np.ndarray
    truth_icao: np.ndarray      # -1 when unknown
    kind: str
    sample_rate: float
    normalized: bool = True

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx)
        return FeatureSet(self.X[idx], self.labels[idx], self.claimed_icao[idx], self.truth_icao[idx],
                          self.kind, self.sample_rate, self.normalized)

    @property
    def malicious(self) -> np.ndarray:
        return (self.labels != LABEL_CODES[Label.A0]).astype(np.int64)


def build_feature_set(captures: Sequence[IqCapture], kind: str, normalize: bool = True) -> FeatureSet:
    if not captures:
        raise ShapeError("no captures to extract features from")
    rates = {c.sample_rate for c in captures}
    if len(rates) != 1:
        raise ShapeError(f"mixed sample rates {sorted(rates)}")
    X = np.stack([extract(c, kind, normalize) for c in captures])
    return FeatureSet(
        X=X,
        labels=np.array([LABEL_CODES[c.label] for c in captures], dtype=np.int64),
        claimed_icao=np.array([c.claimed_icao for c in captures], dtype=np.int64),
        truth_icao=np.array([-1 if c.truth_icao is None else c.truth_icao for c in captures], dtype=np.int64),
        kind=kind,
        sample_rate=rates.pop(),
        normalized=normalize if kind == "iq" else False,
    )


def save_feature_set(fs: FeatureSet, stem: str | Path) -> tuple[Path, Path]:
    """Write ``<stem>.npy`` (float64 rows) and the ``<stem>.json`` header.

    The matrix holds the feature columns followed by label, claimed ICAO and
    truth ICAO columns; the header names their positions.
    """
    stem = Path(stem)
    n_feat = fs.X.shape[1]
    matrix = np.column_stack([fs.X, fs.labels, fs.claimed_icao, fs.truth_icao]).astype(np.float64)
    header = {
        "version": HEADER_VERSION,
        "rows": int(matrix.shape[0]),
        "cols": int(matrix.shape[1]),
        "feature_cols": n_feat,
        "label_column": n_feat,
        "claimed_icao_column": n_feat + 1,
        "truth_icao_column": n_feat + 2,
        "labels": [lab.value for lab in Label],
        "kind": fs.kind,
        "sample_rate": fs.sample_rate,
        "normalized": fs.normalized,
    }
    npy, hdr = stem.with_suffix(".npy"), stem.with_suffix(".json")
    np.save(npy, matrix)
    hdr.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return npy, hdr


def load_feature_set(stem: str | Path) -> FeatureSet:
    stem = Path(stem)
    if stem.suffix in (".npy", ".json"):
        stem = stem.with_suffix("")
    try:
        header = json.loads(stem.with_suffix(".json").read_text())
        matrix = np.load(stem.with_suffix(".npy"))
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read feature set {stem}: {exc}") from exc
    if header.get("version") != HEADER_VERSION or matrix.shape != (header["rows"], header["cols"]):
        raise FormatError(f"feature set {stem} does not match its header")
    nf = header["feature_cols"]
    return FeatureSet(
        X=matrix[:, :nf],
        labels=matrix[:, header["label_column"]].astype(np.int64),
        claimed_icao=matrix[:, header["claimed_icao_column"]].astype(np.int64),
        truth_icao=matrix[:, header["truth_icao_column"]].astype(np.int64),
        kind=header["kind"],
        sample_rate=header["sample_rate"],
        normalized=header["normalized"],
    )

"""Splits, metrics and the experiment harnesses.

Precision is reported two ways.  The *rate* form divides the true-positive
rate by the sum of true- and false-positive rates; the *count* form is the
usual TP / (TP + FP).  Both use macro averages over classes.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, UndefinedMetric
from .features import LABEL_CODES, FeatureSet
from .nn import ModelSpec, TrainConfig, build_model, predict, train
from .phy import Label

ATTACKS = (Label.A1, Label.A2, Label.A3)
DEFAULT_RATIOS = tuple(round(0.2 + 0.1 * i, 1) for i in range(9))
MIN_STRATUM = 5


# ------------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    validation: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.train, self.validation, self.test) < 0 or not math.isclose(
                self.train + self.validation + self.test, 1.0, abs_tol=1e-9):
            raise ConfigError("split fractions must be non-negative and sum to 1")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def split_indices(strata: Sequence, spec: SplitSpec = SplitSpec()) -> Split:
    """Stratified, seeded partition of ``range(len(strata))``.

    Each stratum is shuffled and cut at round(train * n) and
    round((train + validation) * n).
    """
    strata = np.asarray(strata)
    rng = np.random.default_rng(spec.seed)
    parts: tuple[list, list, list] = ([], [], [])
    for value in sorted(set(strata.tolist())):
        idx = np.flatnonzero(strata == value)
        if idx.size < MIN_STRATUM:
            raise ConfigError(f"stratum {value!r} has {idx.size} members; need at least {MIN_STRATUM}")
        idx = idx[rng.permutation(idx.size)]
        a = int(round(spec.train * idx.size))
        b = int(round((spec.train + spec.validation) * idx.size))
        for part, chunk in zip(parts, (idx[:a], idx[a:b], idx[b:])):
            part.append(chunk)
    return Split(*(np.sort(np.concatenate(p)) for p in parts))


def split_dataset(items: Sequence, strata: Sequence, spec: SplitSpec = SplitSpec()) -> tuple[list, list, list]:
    s = split_indices(strata, spec)
    return tuple([items[i] for i in part] for part in (s.train, s.validation, s.test))


# ------------------------------------------------------------------ metrics

def pd_pfa(predictions: Sequence[int], labels: Sequence[int]) -> tuple[float, float]:
    """(detection probability, false-alarm probability); 1 means malicious."""
    pred = np.asarray(predictions).astype(bool)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ShapeError("predictions and labels differ in length")
    if not np.all((lab == 0) | (lab == 1)):
        raise ValueError("labels must be binary")
    mal, auth = lab == 1, lab == 0
    if not mal.any() or not auth.any():
        raise UndefinedMetric("need both malicious and authentic samples")
    return float(pred[mal].mean()), float(pred[auth].mean())


def detection_rate(predictions: Sequence[int]) -> float:
    p = np.asarray(predictions)
    if p.size == 0:
        raise UndefinedMetric("no samples")
    return float(p.astype(bool).mean())


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray        # row = true class, column = predicted

    @classmethod
    def from_predictions(cls, y_true: Sequence[int], y_pred: Sequence[int], k: int) -> "ConfusionMatrix":
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(counts)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)


@dataclass
class PrfReport:
    rate_precision: np.ndarray
    rate_recall: np.ndarray
    rate_f: np.ndarray
    count_precision: np.ndarray
    count_recall: np.ndarray
    count_f: np.ndarray
    avg_rate_precision: float
    avg_rate_recall: float
    avg_rate_f: float
    avg_precision: float
    avg_recall: float
    avg_f: float
    accuracy: float
    excluded_classes: int = 0

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "avg_precision": self.avg_precision,
            "avg_recall": self.avg_recall,
            "avg_f": self.avg_f,
            "avg_rate_precision": self.avg_rate_precision,
            "avg_rate_recall": self.avg_rate_recall,
            "avg_rate_f": self.avg_rate_f,
            "excluded_classes": self.excluded_classes,
        }


def _harmonic(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2 * a * b / (a + b)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.full(num.shape, np.nan), where=den > 0)


def prf_scores(confusion: ConfusionMatrix) -> PrfReport:
    """Per-class and macro-averaged precision, recall and F-score.

    Classes with no true samples have undefined recall; they are dropped
    from every macro average and counted in ``excluded_classes``.  A class
    that is never predicted gets count precision 0.
    """
    c = confusion.counts.astype(np.float64)
    if confusion.k < 2:
        raise ConfigError("need at least two classes")
    total = c.sum()
    if total == 0:
        raise UndefinedMetric("empty confusion matrix")
    tp = np.diag(c)
    actual = c.sum(axis=1)
    predicted = c.sum(axis=0)
    fp = predicted - tp
    fn = actual - tp
    negatives = total - actual
    tpr = _ratio(tp, actual)
    fnr = _ratio(fn, actual)
    fpr = np.divide(fp, negatives, out=np.zeros(c.shape[0]), where=negatives > 0)
    rate_p = _ratio(tpr, tpr + fpr)
    rate_p = np.where(np.isnan(rate_p) & (actual > 0), 0.0, rate_p)
    rate_r = _ratio(tpr, tpr + fnr)
    count_p = np.where(actual > 0, np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0), np.nan)
    count_r = tpr
    keep = actual > 0
    f = np.vectorize(_harmonic)
    rate_f = np.where(keep, f(np.nan_to_num(rate_p), np.nan_to_num(rate_r)), np.nan)
    count_f = np.where(keep, f(np.nan_to_num(count_p), np.nan_to_num(count_r)), np.nan)
    arp, arr = float(np.mean(rate_p[keep])), float(np.mean(rate_r[keep]))
    ap, ar = float(np.mean(count_p[keep])), float(np.mean(count_r[keep]))
    return PrfReport(rate_p, rate_r, rate_f, count_p, count_r, count_f,
                     arp, arr, _harmonic(arp, arr), ap, ar, _harmonic(ap, ar),
                     float(tp.sum() / total), int((~keep).sum()))


# -------------------------------------------------------------- harnesses

def fit(spec: ModelSpec, train_xy: tuple[np.ndarray, np.ndarray], val_xy: tuple[np.ndarray, np.ndarray],
        n_classes: int, config: TrainConfig, classes: list[int] | None = None, flags: dict | None = None):
    """Fresh model from ``spec`` seeded by ``config.seed``, then trained."""
    model = build_model(spec, train_xy[0].shape[1], n_classes, np.random.default_rng(config.seed),
                        classes=classes, flags=flags)
    history = train(model, train_xy, val_xy, config)
    return model, history


def message_targets(fs: FeatureSet) -> np.ndarray:
    return fs.malicious


def _require_labels(fs: FeatureSet, labels: Sequence[Label]) -> None:
    present = set(fs.labels.tolist())
    missing = [lab.value for lab in labels if LABEL_CODES[lab] not in present]
    if missing:
        raise ConfigError(f"corpus lacks labels {missing}")


def attack_subsets() -> list[tuple[Label, ...]]:
    """The seven non-empty subsets of {A1, A2, A3}, singletons first."""
    return [s for r in (1, 2, 3) for s in itertools.combinations(ATTACKS, r)]


def subset_name(subset: Sequence[Label]) -> str:
    return "{" + ",".join(l.value for l in subset) + "}"


def run_attack_diversity(fs: FeatureSet, spec: ModelSpec, config: TrainConfig,
                         split_spec: SplitSpec = SplitSpec(),
                         subsets: Sequence[Sequence[Label]] | None = None,
                         return_models: bool = False):
    """Train one message classifier per attack subset; P_d per attack, P_fa on A0.

    Training and validation use A0 plus the subset's attacks; every row is
    tested on the same pooled test split.
    """
    _require_labels(fs, (Label.A0, *ATTACKS))
    split = split_indices(fs.labels, split_spec)
    y = fs.malicious
    rows, models = [], {}
    for subset in subsets or attack_subsets():
        allowed = [LABEL_CODES[Label.A0]] + [LABEL_CODES[a] for a in subset]
        tr = split.train[np.isin(fs.labels[split.train], allowed)]
        va = split.validation[np.isin(fs.labels[split.validation], allowed)]
        model, _ = fit(spec, (fs.X[tr], y[tr]), (fs.X[va], y[va]), 2, config,
                       flags={"features": "iq", "normalized": fs.normalized})
        pred = predict(model, fs.X[split.test])
        lab = fs.labels[split.test]
        row = {"training_set": subset_name(subset)}
        for a in ATTACKS:
            row[f"pd_{a.value}"] = detection_rate(pred[lab == LABEL_CODES[a]])
        row["pfa"] = detection_rate(pred[lab == LABEL_CODES[Label.A0]])
        rows.append(row)
        models[subset_name(subset)] = model
    return (rows, models) if return_models else rows


@dataclass
class AircraftData:
    """Authentic phase features with class indices over sorted ICAOs."""

    X: np.ndarray
    y: np.ndarray
    classes: list[int]
    split: Split

    @classmethod
    def from_features(cls, fs: FeatureSet, split_spec: SplitSpec = SplitSpec()) -> "AircraftData":
        keep = fs.labels == LABEL_CODES[Label.A0]
        truth = fs.truth_icao[keep]
        classes = sorted(set(truth.tolist()))
        index = {a: i for i, a in enumerate(classes)}
        y = np.array([index[a] for a in truth.tolist()], dtype=np.int64)
        return cls(fs.X[keep], y, classes, split_indices(y, split_spec))


def _aircraft_run(data: AircraftData, spec: ModelSpec, config: TrainConfig,
                  train_idx: np.ndarray, class_ids: Sequence[int]):
    """Train on ``train_idx`` restricted to ``class_ids``; report on the test split."""
    class_ids = sorted(class_ids)
    remap = {c: i for i, c in enumerate(class_ids)}
    def take(idx):
        idx = idx[np.isin(data.y[idx], class_ids)]
        return data.X[idx], np.array([remap[c] for c in data.y[idx].tolist()], dtype=np.int64)
    tr, va, te = take(train_idx), take(data.split.validation), take(data.split.test)
    model, hist = fit(spec, tr, va, len(class_ids), config, classes=[data.classes[c] for c in class_ids],
                      flags={"features": "phase"})
    cm = ConfusionMatrix.from_predictions(te[1], predict(model, te[0]), len(class_ids))
    return model, prf_scores(cm), cm


def run_aircraft_baseline(data: AircraftData, spec: ModelSpec, config: TrainConfig):
    """(model, report, confusion) for the full fleet and full training split."""
    return _aircraft_run(data, spec, config, data.split.train, range(len(data.classes)))


def sweep_training_ratio(data: AircraftData, spec: ModelSpec, config: TrainConfig,
                         ratios: Sequence[float] = DEFAULT_RATIOS, seed: int = 0) -> list[dict]:
    """Nested seeded subsamples of the training split; fixed test split.

    Ratio 1.0 keeps the training split unchanged (same order), so it
    reproduces the baseline run.
    """
    if any(not 0 < r <= 1 for r in ratios):
        raise ConfigError("ratios must lie in (0, 1]")
    order = data.split.train[np.random.default_rng(seed).permutation(data.split.train.size)]
    rows = []
    for r in ratios:
        n = max(1, int(round(r * order.size)))
        idx = data.split.train if n == order.size else np.sort(order[:n])
        _, rep, _ = _aircraft_run(data, spec, config, idx, range(len(data.classes)))
        rows.append({"ratio": r, "train_rows": int(idx.size), **rep.summary()})
    return rows


def sweep_num_classes(data: AircraftData, spec: ModelSpec, config: TrainConfig,
                      counts: Sequence[int], seed: int = 0) -> list[dict]:
    """Nested seeded subsets of aircraft; each cell trains a model sized to its count."""
    k = len(data.classes)
    if any(c > k or c < 2 for c in counts):
        raise ConfigError(f"counts must lie in [2, {k}]")
    order = np.random.default_rng(seed).permutation(k)
    rows = []
    for c in counts:
        ids = order[:c].tolist()
        _, rep, _ = _aircraft_run(data, spec, config, data.split.train, ids)
        rows.append({"num_aircraft": c, **rep.summary()})
    return rows


# ------------------------------------------------------------------ output

def write_table(rows: Sequence[dict], fh: IO[str]) -> None:
    if not rows:
        return
    writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_confusion(cm: ConfusionMatrix, fh: IO[str]) -> None:
    for row in cm.counts:
        fh.write(",".join(str(int(v)) for v in row) + "\n")

"""End-to-end acceptance criteria, one verdict line per criterion.

The desk-scale corpus (20 transponders, 500 messages each, 500 captures per
attack type) is synthesized once per module and shared by criteria 8 to 12.
"""

import math
import shutil
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from spoofdet import evaluation as ev
from spoofdet import frames, impairments, nn
from spoofdet.cli import main as cli_main
from spoofdet.detector import Pipeline, VerdictKind, detect_batch
from spoofdet.features import LABEL_CODES, build_feature_set
from spoofdet.phy import IqCapture, Label, demodulate, modulate

SEED = 2024
EPOCHS = 50


def verdict(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1 to 7

def test_01_codec_round_trip():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bit_errors = parity_failures = 0
    for _ in range(10_000):
        bits = frames.encode_frame(5, int(rng.integers(1 << 24)), int(rng.integers(1 << 56, dtype=np.uint64)))
        got = demodulate(modulate(bits))
        bit_errors += int(np.sum(got != bits))
        try:
            frames.decode_frame(got)
        except frames.ParityError:
            parity_failures += 1
    elapsed = time.perf_counter() - t0
    verdict(1, "codec round trip", bit_errors == 0 and parity_failures == 0 and elapsed < 10,
            f"bit errors {bit_errors}, parity failures {parity_failures}, {elapsed:.1f} s")


GENERATOR = [1] + [int(c) for c in f"{0xFFF409:024b}"]


def long_division(bits):
    work = list(bits) + [0] * 24
    for i in range(len(bits)):
        if work[i]:
            for j, g in enumerate(GENERATOR):
                work[i + j] ^= g
    return int("".join(map(str, work[-24:])), 2)


def test_02_crc_oracle():
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(1000):
        bits = rng.integers(0, 2, 88).astype(np.uint8)
        mismatches += frames.crc24(bits) != long_division(bits.tolist())
    verdict(2, "CRC-24 matches long division", mismatches == 0, f"{mismatches} mismatches in 1000")


def test_03_cpr_round_trip():
    rng = np.random.default_rng(3)
    worst_lat = worst_lon = 0.0
    failures = 0
    for _ in range(1000):
        lat, lon = rng.uniform(-87.0, 87.0), rng.uniform(-180.0, 180.0)
        even, odd = frames.cpr_encode(lat, lon, False), frames.cpr_encode(lat, lon, True)
        got = frames.cpr_decode_global(even, odd, latest_is_odd=bool(rng.integers(2)))
        if got is None:
            failures += 1
            continue
        dlat = 6.0 / 131072
        dlon = 360.0 / max(frames.cpr_nl(lat), 1) / 131072
        worst_lat = max(worst_lat, abs(got[0] - lat) / dlat)
        worst_lon = max(worst_lon, abs((got[1] - lon + 180) % 360 - 180) / dlon)
    ok = failures == 0 and worst_lat <= 1 and worst_lon <= 1
    verdict(3, "CPR round trip", ok,
            f"worst error {worst_lat:.2f} lat / {worst_lon:.2f} lon resolution cells, {failures} undecodable")


def tone(n=240, rate=2e6):
    return IqCapture(np.ones(n, complex), rate)


def test_04_frequency_offset_increment():
    worst = 0.0
    for df in (-10e3, -1e3, 1e3, 10e3):
        ph = np.unwrap(np.angle(impairments.apply_frequency_offset(tone(), df).samples))
        worst = max(worst, abs(np.mean(np.diff(ph)) - 2 * math.pi * df / 2e6))
    verdict(4, "frequency-offset phase increment", worst <= 1e-6, f"max deviation {worst:.2e} rad")


def test_05_doppler_narrowband():
    worst = 0.0
    c = modulate(frames.encode_frame(5, 0xABCDEF, 0x58C382D690C8AC))
    for alpha in (-1e-6, -3e-7, 1e-7, 5e-7, 1e-6):
        exact = impairments.apply_doppler_exact(c, alpha)
        shifted = impairments.apply_frequency_offset(c, alpha * impairments.ADSB_CARRIER_HZ)
        on = np.abs(c.samples) > 0
        diff = np.angle(exact.samples[on] * np.conj(shifted.samples[on]))
        worst = max(worst, math.sqrt(np.mean(diff ** 2)))
    verdict(5, "Doppler narrowband equivalence", worst < 0.01, f"max phase RMS {worst:.2e} rad")


def test_06_gradient_check():
    rng = np.random.default_rng(6)
    model = nn.build_model((5,), 8, 3, rng, batch_norm=True)
    bn = next(l for l in model.layers if isinstance(l, nn.BatchNormLayer))
    bn.gamma[:] = rng.normal(1.0, 0.3, bn.gamma.shape)
    bn.beta[:] = rng.normal(0.0, 0.3, bn.beta.shape)
    X = rng.normal(size=(10, 8))
    T = nn.one_hot(rng.integers(0, 3, 10), 3)
    _, grads = nn.backward(model, X, T, l2=1e-2)
    worst = 0.0
    for i, name, arr in model.parameters():
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + 1e-5
            up = nn.loss(model, X, T, 1e-2)
            arr[idx] = old - 1e-5
            down = nn.loss(model, X, T, 1e-2)
            arr[idx] = old
            num[idx] = (up - down) / 2e-5
        rel = np.abs(grads[(i, name)] - num) / np.maximum(1e-8, np.abs(grads[(i, name)]) + np.abs(num))
        worst = max(worst, float(rel.max()))
    verdict(6, "gradient check 8-5(BN)-3", worst < 1e-4, f"max relative error {worst:.2e}")


def test_07_adam_oracle():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    w_ref, m, v = 1.0, 0.0, 0.0
    params, state = {"w": np.array([1.0])}, nn.AdamState()
    worst = 0.0
    for t in range(1, 11):
        g = 2 * w_ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w_ref -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        nn.adam_step(params, {"w": 2 * params["w"]}, state, t, nn.TrainConfig(learning_rate=lr))
        worst = max(worst, abs(params["w"][0] - w_ref))
    verdict(7, "Adam matches scalar oracle", worst <= 1e-12, f"max per-step deviation {worst:.1e}")


# ---------------------------------------------------------------- desk corpus

@pytest.fixture(scope="module")
def corpus():
    t0 = time.perf_counter()
    c = impairments.synth_scenario(impairments.Scenario(), SEED)
    return c, time.perf_counter() - t0


@pytest.fixture(scope="module")
def iq_set(corpus):
    return build_feature_set(corpus[0].captures, "iq")


@pytest.fixture(scope="module")
def phase_set(corpus):
    return build_feature_set(corpus[0].captures, "phase")


@pytest.fixture(scope="module")
def diversity(corpus, iq_set):
    t0 = time.perf_counter()
    subsets = [(Label.A1, Label.A2, Label.A3), (Label.A1,), (Label.A3,)]
    rows, models = ev.run_attack_diversity(iq_set, nn.get_preset("d3"), nn.TrainConfig(epochs=EPOCHS, seed=SEED),
                                           subsets=subsets, return_models=True)
    first = time.perf_counter() - t0
    return {r["training_set"]: r for r in rows}, models, first


@pytest.fixture(scope="module")
def aircraft(phase_set):
    data = ev.AircraftData.from_features(phase_set)
    model, report, _ = ev.run_aircraft_baseline(data, nn.get_preset("m3"), nn.TrainConfig(epochs=EPOCHS, seed=SEED))
    return data, model, report


def test_08_message_classifier(corpus, diversity):
    rows, _, train_time = diversity
    row = rows["{A1,A2,A3}"]
    pd = np.mean([row["pd_A1"], row["pd_A2"], row["pd_A3"]])
    # pooled P_d over the three attacks, equal test counts per attack
    elapsed = corpus[1] + train_time
    ok = pd >= 0.95 and row["pfa"] <= 0.05
    verdict(8, "D3 message classifier", ok,
            f"P_d {pd:.4f}, P_fa {row['pfa']:.4f}, corpus+training of all three subsets {elapsed / 60:.1f} min")


def test_09_aircraft_classifier(aircraft):
    _, _, rep = aircraft
    gap = abs(rep.accuracy - rep.avg_f)
    verdict(9, "M3 aircraft classifier", rep.accuracy >= 0.90 and gap <= 0.02,
            f"accuracy {rep.accuracy:.4f}, AvgF {rep.avg_f:.4f}, rate-based AvgF {rep.avg_rate_f:.4f}")


def test_10_aircraft_spoof(corpus, phase_set, diversity, aircraft):
    data, aircraft_model, _ = aircraft
    pipeline = Pipeline(diversity[1]["{A1,A2,A3}"], aircraft_model)
    captures = corpus[0].captures
    authentic = np.flatnonzero(phase_set.labels == LABEL_CODES[Label.A0])
    test_idx = authentic[data.split.test][:200]
    rng = np.random.default_rng(SEED)
    fleet = data.classes
    spoofed = []
    for i in test_idx:
        c = captures[i]
        others = [a for a in fleet if a != c.truth_icao]
        spoofed.append(IqCapture(c.samples, c.sample_rate, Label.A0, int(rng.choice(others)), c.truth_icao))
    verdicts = detect_batch(pipeline, spoofed)
    flagged = np.mean([v.kind is VerdictKind.AIRCRAFT_SPOOF for v in verdicts])
    source = np.mean([v.predicted == c.truth_icao for v, c in zip(verdicts, spoofed)])
    verdict(10, "aircraft-spoof detection", flagged >= 0.90 and source >= 0.85,
            f"AircraftSpoof {flagged:.3f}, predicted = true source {source:.3f}, n={len(spoofed)}")


def test_11_attack_diversity(diversity):
    rows = diversity[0]
    a1, a3, full = rows["{A1}"], rows["{A3}"], rows["{A1,A2,A3}"]
    worst = min(full["pd_A1"], full["pd_A2"], full["pd_A3"])
    ok = a3["pd_A1"] < a1["pd_A1"] and worst >= 0.90
    verdict(11, "attack-diversity trend", ok,
            f"P_d(A1) trained on A3 {a3['pd_A1']:.3f} vs on A1 {a1['pd_A1']:.3f}, "
            f"all-attack model min P_d {worst:.3f}")


def test_12_sweep_trends(aircraft):
    data, _, base = aircraft
    spec, config = nn.get_preset("m3"), nn.TrainConfig(epochs=EPOCHS, seed=SEED)
    # ratio 1.0 and the full 20-aircraft count reproduce the baseline run exactly
    low = ev.sweep_training_ratio(data, spec, config, [0.2], seed=SEED)[0]
    five = ev.sweep_num_classes(data, spec, config, [5], seed=SEED)[0]
    ok = base.accuracy >= low["accuracy"] and five["accuracy"] >= base.accuracy - 0.02
    verdict(12, "sweep trends", ok,
            f"accuracy ratio 0.2 {low['accuracy']:.4f} / 1.0 {base.accuracy:.4f}; "
            f"5 aircraft {five['accuracy']:.4f} / 20 aircraft {base.accuracy:.4f}")


# ---------------------------------------------------------------- 13, 14

def test_13_metrics():
    checks = []
    labels = [1] * 100 + [0] * 1000
    pred = [1] * 99 + [0] + [1] * 4 + [0] * 996
    checks.append(ev.pd_pfa(pred, labels) == (0.99, 0.004))
    checks.append(ev.pd_pfa([1, 1, 0, 0], [1, 1, 0, 0]) == (1.0, 0.0))

    two = ev.prf_scores(ev.ConfusionMatrix(np.array([[9, 1], [2, 8]])))
    checks += [two.count_precision.tolist() == [9 / 11, 8 / 9], two.count_recall.tolist() == [0.9, 0.8],
               two.rate_precision.tolist() == [0.9 / (0.9 + 0.2), 0.8 / (0.8 + 0.1)], two.accuracy == 0.85]

    counts = [[5, 1, 0, 0], [0, 4, 2, 0], [1, 0, 6, 1], [0, 0, 0, 3]]
    four = ev.prf_scores(ev.ConfusionMatrix(np.array(counts)))
    cols = [sum(r[j] for r in counts) for j in range(4)]
    rows = [sum(r) for r in counts]
    checks.append(four.count_precision.tolist() == [float(Fraction(counts[i][i], cols[i])) for i in range(4)])
    checks.append(four.count_recall.tolist() == [float(Fraction(counts[i][i], rows[i])) for i in range(4)])
    checks.append(four.accuracy == 18 / 23)
    verdict(13, "metric hand values", all(checks), f"{sum(checks)}/{len(checks)} exact matches")


def test_14_cli_determinism(tmp_path):
    small = ["--fleet", "3", "--duration", "30", "--attack-messages", "24", "--ghosts", "2", "--seed", "9"]
    d = tmp_path / "out"
    steps = [
        ["synth", "--out-dir", d, *small],
        ["features", "--input", d, "--out-dir", d],
        ["train", "--features", d / "features_iq", "--preset", "d1", "--epochs", "2", "--out-dir", d],
        ["train", "--features", d / "features_phase", "--preset", "m1", "--stage", "aircraft",
         "--epochs", "2", "--out-dir", d],
        ["eval", "--features", d / "features_iq", "--model", d / "message_model.json", "--out-dir", d],
    ]
    runs = []
    for _ in range(2):
        codes = [cli_main([str(a) for a in s]) for s in steps]
        assert codes == [0] * len(codes)
        runs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        shutil.rmtree(d)
    differing = [k for k in runs[0] if runs[0][k] != runs[1].get(k)]
    verdict(14, "CLI determinism", not differing and runs[0].keys() == runs[1].keys(),
            f"{len(runs[0])} artifacts compared, differing: {differing or 'none'}")

"""Command-line entry point: ``spoofdet {synth,features,train,eval,detect}``.

Settings come from three layers, later ones winning: built-in defaults, an
optional YAML or JSON file given with ``--config``, and explicit flags.
Every command writes its fully resolved settings next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import detector, evaluation, features, impairments, nn, phy
from .errors import ConfigError, SpoofDetError, UnknownAircraft
from .frames import decode_frame, format_icao
from .phy import Label

DEFAULTS: dict[str, dict] = {
    "synth": {
        "seed": 0, "sample_rate": 2_000_000, "out_dir": "out", "fleet": 20, "duration": 500,
        "attack_messages": 500, "attacks": "a0,a1,a2,a3", "doppler_case": "all", "ghosts": 20,
        "snr": 20.0, "worst_case": False, "cfo_spread": 20e3, "cfo_jitter": 100.0,
        "gains": "1.0,0.6,0.3",
    },
    "features": {"input": "out", "out_dir": "out", "kind": "both", "no_normalize": False},
    "train": {
        "features": None, "preset": "d3", "stage": "message", "seed": 0, "epochs": None,
        "attacks": "a1,a2,a3", "out_dir": "out", "learning_rate": 1e-3, "batch_size": 32,
        "l2": 1e-4, "split_seed": 0,
    },
    "eval": {
        "features": None, "model": None, "stage": "message", "experiment": "test", "preset": None,
        "seed": 0, "epochs": None, "ratios": ",".join(str(r) for r in evaluation.DEFAULT_RATIOS),
        "counts": None, "out_dir": "out", "threshold": 0.5, "split_seed": 0,
    },
    "detect": {
        "input": None, "message_model": None, "aircraft_model": None, "threshold": 0.5,
        "sample_rate": 2_000_000, "out_dir": "out", "preamble_threshold": None,
    },
}


class CliError(SpoofDetError):
    pass


# ------------------------------------------------------------------ helpers

class Outputs:
    """Tracks written files so a failed command can remove them."""

    def __init__(self, out_dir: str | Path):
        self.dir = Path(out_dir)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(p)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def cleanup(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def _csv_list(text: str | None) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()] if text is not None else []


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text) if not path.endswith(".json") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a mapping")
    return {str(k).replace("-", "_"): v for k, v in doc.items()}


def resolve(command: str, ns: argparse.Namespace) -> dict:
    file_cfg = load_config_file(getattr(ns, "config", None))
    unknown = set(file_cfg) - set(DEFAULTS[command])
    if unknown:
        raise ConfigError(f"unknown {command} settings in config file: {sorted(unknown)}")
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "func")}
    return {**DEFAULTS[command], **file_cfg, **flags}


def _write_resolved(out: Outputs, command: str, cfg: dict) -> None:
    out.write_text(f"{command}_config.json", json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n")


def _need(cfg: dict, key: str) -> str:
    if not cfg.get(key):
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return cfg[key]


def _need_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"input not found: {p}")
    return p


def _feature_stem(path: str) -> Path:
    p = Path(path)
    stem = p.with_suffix("") if p.suffix in (".npy", ".json") else p
    _need_file(stem.with_suffix(".json"))
    return stem


# ----------------------------------------------------------------- commands

def cmd_synth(cfg: dict, out: Outputs) -> None:
    attacks = tuple(a.lower() for a in _csv_list(cfg["attacks"]))
    cases = tuple(impairments.ATTACK_CASES) if cfg["doppler_case"] == "all" else tuple(_csv_list(cfg["doppler_case"]))
    spoofer = replace(impairments.default_spoofer(), gains=tuple(float(g) for g in _csv_list(cfg["gains"])))
    scenario = impairments.Scenario(
        fleet_size=int(cfg["fleet"]),
        messages_per_aircraft=int(cfg["duration"]),
        attack_messages=int(cfg["attack_messages"]),
        attacks=attacks,
        cases=cases,
        ghost_aircraft=int(cfg["ghosts"]),
        iq_replay_worst_case=bool(cfg["worst_case"]),
        sample_rate=float(cfg["sample_rate"]),
        channel=impairments.ChannelParams(snr_db=float(cfg["snr"])),
        spoofer=spoofer,
        cfo_spread=float(cfg["cfo_spread"]),
        cfo_jitter=float(cfg["cfo_jitter"]),
    )
    corpus = impairments.synth_scenario(scenario, int(cfg["seed"]))
    out.path("captures.iq").write_bytes(phy.write_iq_file(corpus.captures))
    with out.path("manifest.jsonl").open("w") as fh:
        phy.write_manifest(corpus.captures, fh)
    fleet = [{"icao": format_icao(m.icao), "cfo_mean": m.profile.cfo_mean, "amplitude": m.profile.amplitude}
             for m in corpus.fleet]
    out.write_text("fleet.json", json.dumps(fleet, indent=2) + "\n")
    _write_resolved(out, "synth", cfg)
    counts = {lab.value: sum(c.label is lab for c in corpus.captures) for lab in Label}
    print(json.dumps({"captures": len(corpus.captures), **counts}, sort_keys=True))


def _load_corpus(input_dir: str) -> list[phy.IqCapture]:
    d = Path(input_dir)
    data = _need_file(d / "captures.iq").read_bytes()
    with _need_file(d / "manifest.jsonl").open() as fh:
        records = phy.read_manifest(fh)
    return phy.load_captures(data, records)


def cmd_features(cfg: dict, out: Outputs) -> None:
    caps = _load_corpus(cfg["input"])
    kinds = ("iq", "phase") if cfg["kind"] == "both" else (cfg["kind"],)
    for kind in kinds:
        if kind not in features.FEATURE_KINDS:
            raise ConfigError(f"unknown feature kind {kind!r}")
        fs = features.build_feature_set(caps, kind, normalize=not cfg["no_normalize"])
        out.path(f"features_{kind}.npy")
        out.path(f"features_{kind}.json")
        features.save_feature_set(fs, out.dir / f"features_{kind}")
    _write_resolved(out, "features", cfg)


def _train_config(cfg: dict, spec: nn.ModelSpec) -> nn.TrainConfig:
    return nn.TrainConfig(
        epochs=int(cfg["epochs"]) if cfg.get("epochs") else spec.epochs,
        batch_size=int(cfg.get("batch_size", 32)),
        learning_rate=float(cfg.get("learning_rate", 1e-3)),
        l2_coefficient=float(cfg.get("l2", 1e-4)),
        seed=int(cfg["seed"]),
    )


def _check_stage(spec: nn.ModelSpec, stage: str, fs: features.FeatureSet) -> None:
    if stage not in ("message", "aircraft"):
        raise ConfigError("--stage must be message or aircraft")
    if spec.stage != stage:
        raise ConfigError(f"preset {spec.name} is for the {spec.stage} stage, not {stage}")
    want = "iq" if stage == "message" else "phase"
    if fs.kind != want:
        raise ConfigError(f"{stage} models need {want} features, got {fs.kind}")


def _attack_labels(text: str) -> list[Label]:
    labels = []
    for a in _csv_list(text):
        try:
            lab = impairments.ATTACK_LABELS[a.lower()]
        except KeyError:
            raise ConfigError(f"unknown attack {a!r}") from None
        if lab is not Label.A0:
            labels.append(lab)
    if not labels:
        raise ConfigError("need at least one attack label")
    return labels


def cmd_train(cfg: dict, out: Outputs) -> None:
    fs = features.load_feature_set(_feature_stem(_need(cfg, "features")))
    spec = nn.get_preset(cfg["preset"])
    _check_stage(spec, cfg["stage"], fs)
    tc = _train_config(cfg, spec)
    split_spec = evaluation.SplitSpec(seed=int(cfg["split_seed"]))
    if cfg["stage"] == "message":
        allowed = [features.LABEL_CODES[Label.A0]] + [features.LABEL_CODES[l] for l in _attack_labels(cfg["attacks"])]
        split = evaluation.split_indices(fs.labels, split_spec)
        tr = split.train[np.isin(fs.labels[split.train], allowed)]
        va = split.validation[np.isin(fs.labels[split.validation], allowed)]
        y = fs.malicious
        model, hist = evaluation.fit(spec, (fs.X[tr], y[tr]), (fs.X[va], y[va]), 2, tc,
                                     flags={"features": "iq", "normalized": fs.normalized, "preset": spec.name})
    else:
        data = evaluation.AircraftData.from_features(fs, split_spec)
        model, hist = evaluation.fit(spec, (data.X[data.split.train], data.y[data.split.train]),
                                     (data.X[data.split.validation], data.y[data.split.validation]),
                                     len(data.classes), tc, classes=data.classes,
                                     flags={"features": "phase", "preset": spec.name})
    nn.save_model(model, out.path(f"{cfg['stage']}_model.json"))
    out.write_text(f"{cfg['stage']}_history.csv", hist.to_csv())
    _write_resolved(out, "train", cfg)
    print(json.dumps({"architecture": model.architecture(), "best_epoch": hist.best_epoch,
                      "best_val_accuracy": max(hist.val_accuracy)}))


def _eval_test(cfg: dict, fs: features.FeatureSet, out: Outputs) -> None:
    model = nn.load_model(_need_file(_need(cfg, "model")))
    split_spec = evaluation.SplitSpec(seed=int(cfg["split_seed"]))
    if cfg["stage"] == "message":
        split = evaluation.split_indices(fs.labels, split_spec)
        te = split.test
        probs = nn.forward(model, fs.X[te])[:, detector.MALICIOUS_CLASS]
        pred = (probs >= float(cfg["threshold"])).astype(int)
        pd, pfa = evaluation.pd_pfa(pred, fs.malicious[te])
        row = {"pd": pd, "pfa": pfa}
        for a in evaluation.ATTACKS:
            sel = fs.labels[te] == features.LABEL_CODES[a]
            if sel.any():
                row[f"pd_{a.value}"] = evaluation.detection_rate(pred[sel])
        with out.path("eval_message.csv").open("w") as fh:
            evaluation.write_table([row], fh)
        print(json.dumps(row, sort_keys=True))
        return
    data = evaluation.AircraftData.from_features(fs, split_spec)
    if model.classes != data.classes:
        raise ConfigError("model class table does not match the feature set's aircraft")
    te = data.split.test
    cm = evaluation.ConfusionMatrix.from_predictions(data.y[te], nn.predict(model, data.X[te]), len(data.classes))
    rep = evaluation.prf_scores(cm)
    with out.path("eval_aircraft.csv").open("w") as fh:
        evaluation.write_table([rep.summary()], fh)
    with out.path("confusion.csv").open("w") as fh:
        evaluation.write_confusion(cm, fh)
    print(json.dumps(rep.summary(), sort_keys=True))


def cmd_eval(cfg: dict, out: Outputs) -> None:
    fs = features.load_feature_set(_feature_stem(_need(cfg, "features")))
    exp = cfg["experiment"]
    if exp == "test":
        _eval_test(cfg, fs, out)
        _write_resolved(out, "eval", cfg)
        return
    split_spec = evaluation.SplitSpec(seed=int(cfg["split_seed"]))
    if exp == "attack-diversity":
        spec = nn.get_preset(cfg["preset"] or "d3")
        _check_stage(spec, "message", fs)
        rows = evaluation.run_attack_diversity(fs, spec, _train_config(cfg, spec), split_spec)
        name = "attack_diversity.csv"
    elif exp in ("ratio-sweep", "class-sweep"):
        spec = nn.get_preset(cfg["preset"] or "m3")
        _check_stage(spec, "aircraft", fs)
        data = evaluation.AircraftData.from_features(fs, split_spec)
        tc = _train_config(cfg, spec)
        if exp == "ratio-sweep":
            ratios = [float(r) for r in _csv_list(cfg["ratios"])]
            rows = evaluation.sweep_training_ratio(data, spec, tc, ratios, seed=int(cfg["seed"]))
            name = "ratio_sweep.csv"
        else:
            k = len(data.classes)
            counts = [int(c) for c in _csv_list(cfg["counts"])] if cfg.get("counts") else \
                sorted({max(2, int(round(k * f))) for f in (0.25, 0.5, 0.75, 1.0)})
            rows = evaluation.sweep_num_classes(data, spec, tc, counts, seed=int(cfg["seed"]))
            name = "class_sweep.csv"
    else:
        raise ConfigError(f"unknown experiment {exp!r}")
    with out.path(name).open("w") as fh:
        evaluation.write_table(rows, fh)
    _write_resolved(out, "eval", cfg)
    evaluation.write_table(rows, sys.stdout)


def cmd_detect(cfg: dict, out: Outputs) -> None:
    rate = float(cfg["sample_rate"])
    pipeline = detector.Pipeline.load(_need_file(_need(cfg, "message_model")),
                                      _need_file(_need(cfg, "aircraft_model")), float(cfg["threshold"]))
    stream = phy.read_iq_file(_need_file(_need(cfg, "input")).read_bytes(), rate)
    thr = cfg.get("preamble_threshold")
    starts = phy.detect_preamble(stream.samples, rate, threshold=None if thr is None else float(thr))
    span = phy.message_length(rate)
    records = []
    for s in starts:
        if s + span > stream.samples.size:
            continue
        cap = phy.IqCapture(stream.samples[s:s + span], rate, timestamp=s / rate)
        try:
            frame = decode_frame(phy.demodulate(cap))
        except SpoofDetError as exc:
            print(f"warning: message at sample {s} not decodable ({exc})", file=sys.stderr)
            continue
        cap.claimed_icao = frame.icao
        try:
            rec = detector.detect(pipeline, cap).to_record()
        except UnknownAircraft as exc:
            rec = {"timestamp": cap.timestamp, "kind": "UnknownAircraft", "claimed": format_icao(exc.icao),
                   "predicted": None, "message_malicious_prob": detector.classify_message(pipeline, cap),
                   "aircraft_max_prob": None}
        rec["sample_index"] = s
        records.append(rec)
    if not starts:
        print("warning: no preamble found in input", file=sys.stderr)
    out.write_text("verdicts.jsonl", "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    _write_resolved(out, "detect", cfg)
    for r in records:
        print(json.dumps(r, sort_keys=True))


COMMANDS: dict[str, Callable[[dict, Outputs], None]] = {
    "synth": cmd_synth, "features": cmd_features, "train": cmd_train, "eval": cmd_eval, "detect": cmd_detect,
}


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="spoofdet", description="PHY-layer ADS-B spoofing detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed=True, rate=True):
        p.add_argument("--config", help="YAML or JSON file with default settings")
        p.add_argument("--out-dir", default=S)
        if seed:
            p.add_argument("--seed", type=int, default=S)
        if rate:
            p.add_argument("--sample-rate", type=float, default=S)

    p = sub.add_parser("synth", help="synthesize a labeled IQ corpus")
    common(p)
    p.add_argument("--fleet", type=int, default=S, help="number of authentic aircraft")
    p.add_argument("--duration", type=int, default=S, help="seconds of authentic traffic (1 msg/s per aircraft)")
    p.add_argument("--attack-messages", type=int, default=S, help="captures per attack type")
    p.add_argument("--attacks", default=S, help="comma list from a0,a1,a2,a3")
    p.add_argument("--doppler-case", default=S, help="i..v, a comma list, or 'all'")
    p.add_argument("--ghosts", type=int, default=S)
    p.add_argument("--snr", type=float, default=S)
    p.add_argument("--worst-case", action="store_true", default=S, help="IQ replay without spoofer impairments")
    p.add_argument("--cfo-spread", type=float, default=S)
    p.add_argument("--cfo-jitter", type=float, default=S)
    p.add_argument("--gains", default=S, help="comma list of spoofer gain levels")

    p = sub.add_parser("features", help="extract IQ and phase feature files")
    common(p, seed=False, rate=False)
    p.add_argument("--input", default=S, help="directory holding captures.iq and manifest.jsonl")
    p.add_argument("--kind", choices=["iq", "phase", "both"], default=S)
    p.add_argument("--no-normalize", action="store_true", default=S)

    p = sub.add_parser("train", help="train a message or aircraft classifier")
    common(p, rate=False)
    p.add_argument("--features", default=S, help="feature file stem")
    p.add_argument("--preset", default=S, choices=sorted(nn.PRESETS))
    p.add_argument("--stage", choices=["message", "aircraft"], default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--attacks", default=S, help="attack labels used for message training")
    p.add_argument("--learning-rate", type=float, default=S)
    p.add_argument("--batch-size", type=int, default=S)
    p.add_argument("--l2", type=float, default=S)
    p.add_argument("--split-seed", type=int, default=S)

    p = sub.add_parser("eval", help="evaluate a model or run an experiment")
    common(p, rate=False)
    p.add_argument("--features", default=S)
    p.add_argument("--model", default=S)
    p.add_argument("--stage", choices=["message", "aircraft"], default=S)
    p.add_argument("--experiment", choices=["test", "attack-diversity", "ratio-sweep", "class-sweep"], default=S)
    p.add_argument("--preset", default=S, choices=sorted(nn.PRESETS))
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--ratios", default=S)
    p.add_argument("--counts", default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--split-seed", type=int, default=S)

    p = sub.add_parser("detect", help="run both stages over a raw IQ stream")
    common(p, seed=False)
    p.add_argument("--input", default=S, help="8-bit interleaved IQ file")
    p.add_argument("--message-model", default=S)
    p.add_argument("--aircraft-model", default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--preamble-threshold", type=float, default=S)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    out = None
    try:
        cfg = resolve(ns.command, ns)
        out = Outputs(cfg["out_dir"])
        COMMANDS[ns.command](cfg, out)
    except (SpoofDetError, OSError, ValueError) as exc:
        if out is not None:
            out.cleanup()
        name = type(exc).__name__
        print(f"error: {name}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

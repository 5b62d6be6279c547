"""Command-line front end: generate trials, train over seeds, evaluate a checkpoint.

All commands take a JSON experiment spec.  Signals are exchanged as CSV with
the header ``t,emg_bi,emg_tri,q``; results and checkpoints are JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from . import datagen
from .network import NetworkConfig, check_weights, rollout
from .physics import PARAM_NAMES, IdentMode, IdentTargets, metrics, percent_errors
from .trainer import DEFAULT_INITIAL, TrainConfig, run_experiment

CSV_HEADER = ("t", "emg_bi", "emg_tri", "q")

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_USAGE = 2


class SpecError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trial_csv(path: Path, trial: datagen.Trial, extra: dict[str, np.ndarray] | None = None) -> None:
    columns = [trial.t, trial.emg_bi, trial.emg_tri, trial.q]
    header = list(CSV_HEADER)
    for name, col in (extra or {}).items():
        header.append(name)
        columns.append(col)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([_fmt(v) for v in row])


def read_trial_csv(path: Path, index: int = 0) -> datagen.Trial:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:4]) != CSV_HEADER:
            raise SpecError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = [[float(v) for v in row[:4]] for row in reader if row]
    if not rows:
        raise SpecError(f"{path}: no samples")
    data = np.array(rows)
    return datagen.Trial(index, data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def trial_path(directory: Path, index: int) -> Path:
    return directory / f"trial_{index}.csv"


# ---- spec handling -------------------------------------------------------

def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise SpecError(f"expected comma-separated integers, got {text!r}") from None


def load_spec(path: Path) -> dict[str, Any]:
    try:
        spec = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SpecError(f"spec file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(spec, dict) or not spec:
        raise SpecError("spec must be a non-empty JSON object")
    unknown = set(spec) - {"data", "train", "data_dir"}
    if unknown:
        raise SpecError(f"unknown spec sections: {sorted(unknown)}")
    return spec


def data_settings(spec: dict[str, Any]) -> dict[str, Any]:
    data = dict(spec.get("data", {}))
    unknown = set(data) - {"noise_sigma", "seed", "n", "dt"}
    if unknown:
        raise SpecError(f"unknown data fields: {sorted(unknown)}")
    out = {"noise_sigma": float(data.get("noise_sigma", 0.1)), "seed": int(data.get("seed", 0)),
           "n": int(data.get("n", datagen.N_SAMPLES)), "dt": float(data.get("dt", datagen.DT))}
    if out["noise_sigma"] < 0 or out["n"] < 8 or out["dt"] <= 0:
        raise SpecError("data needs noise_sigma >= 0, n >= 8 and dt > 0")
    return out


def train_config(spec: dict[str, Any], seeds=None, scales=None) -> TrainConfig:
    raw = dict(spec.get("train", {}))
    net = dict(raw.pop("network", {}))
    ident = dict(raw.pop("ident", {}))
    try:
        network = NetworkConfig(**net)
        mode = IdentMode(ident.pop("mode", "normalized"))
        targets = IdentTargets(mode, ident.pop("initial", DEFAULT_INITIAL), ident.pop("anchors", {}))
        if ident:
            raise SpecError(f"unknown ident fields: {sorted(ident)}")
        if seeds is not None:
            raw["seeds"] = seeds
        if scales is not None:
            raw["scales"] = scales
        return TrainConfig(network=network, ident=targets, **raw)
    except TypeError as exc:
        raise SpecError(f"invalid train settings: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"invalid train settings: {exc}") from None


def resolved_config(config: TrainConfig) -> dict[str, Any]:
    out = asdict(config)
    out["ident"] = {"mode": config.ident.mode.value, "initial": dict(config.ident.initial),
                    "anchors": {k: list(v) for k, v in config.ident.anchors.items()}}
    out["stage_epochs"] = config.stage_epochs
    return out


# ---- commands ------------------------------------------------------------

def cmd_generate(spec: dict[str, Any], out: Path) -> int:
    settings = data_settings(spec)
    clean = datagen.clean_trials(n=settings["n"], dt=settings["dt"], seed=settings["seed"])
    trialset = datagen.apply_noise_case(clean, settings["noise_sigma"], settings["seed"])
    out.mkdir(parents=True, exist_ok=True)
    for trial in trialset.trials:
        write_trial_csv(trial_path(out, trial.index), trial)
    truth = {"parameters": trialset.truth, "noise_sigma": settings["noise_sigma"], "seed": settings["seed"],
             "dt": settings["dt"], "n": settings["n"],
             "train_trials": list(trialset.train_ids), "test_trials": list(trialset.test_ids)}
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    print(f"wrote {len(trialset.trials)} trials to {out}")
    return EXIT_OK


def load_trialset(directory: Path, dt: float) -> datagen.TrialSet:
    trials = []
    for k in datagen.TRIAL_IDS:
        path = trial_path(directory, k)
        if path.exists():
            trials.append(read_trial_csv(path, k))
    if not trials:
        raise SpecError(f"no trial CSV files in {directory}")
    truth_file = directory / "truth.json"
    truth = json.loads(truth_file.read_text())["parameters"] if truth_file.exists() else {}
    return datagen.TrialSet(tuple(trials), dt, float("nan"), -1, truth)


def _weights_json(weights: dict[str, np.ndarray]) -> dict[str, Any]:
    return {k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]} for k, v in weights.items()}


def _weights_from_json(blob: dict[str, Any]) -> dict[str, np.ndarray]:
    return {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in blob.items()}


def cmd_train(spec: dict[str, Any], out: Path, spec_path: Path, seeds=None, scales=None) -> int:
    settings = data_settings(spec)
    config = train_config(spec, seeds, scales)
    data_dir = Path(spec.get("data_dir", out))
    if not data_dir.is_absolute():
        data_dir = spec_path.parent / data_dir if "data_dir" in spec else data_dir
    trialset = load_trialset(data_dir, settings["dt"])
    missing = set(config.train_trial_ids + config.test_trial_ids) - {t.index for t in trialset.trials}
    if missing:
        raise SpecError(f"trial files missing for {sorted(missing)} in {data_dir}")
    start = time.perf_counter()
    results = run_experiment(trialset, config)
    out.mkdir(parents=True, exist_ok=True)

    per_seed = []
    for res in results:
        entry: dict[str, Any] = {"seed": res.seed, "seconds": res.seconds, "error": res.error}
        if not res.diverged:
            entry["scales"] = [
                {"scale": rep.scale, "epochs_run": rep.epochs_run, "best_loss": rep.best_loss,
                 "identified": rep.identified,
                 "test": {str(k): m.as_dict() for k, m in rep.test_metrics.items()},
                 "test_mean": rep.mean_metrics.as_dict() if rep.test_metrics else None}
                for rep in res.reports
            ]
            checkpoint = {"network": asdict(config.network), "identified": res.identified,
                          "weights": _weights_json(res.final.weights)}
            (out / f"checkpoint_seed{res.seed}.json").write_text(json.dumps(checkpoint) + "\n")
        per_seed.append(entry)

    ok = [r for r in results if not r.diverged]
    summary: dict[str, Any] = {}
    if ok:
        summary["identified"] = {
            name: {"mean": statistics.fmean(r.identified[name] for r in ok),
                   "std": statistics.pstdev([r.identified[name] for r in ok])}
            for name in PARAM_NAMES
        }
        if trialset.truth:
            means = {n: v["mean"] for n, v in summary["identified"].items()}
            summary["percent_error"] = percent_errors(means, trialset.truth)
        if config.test_trial_ids:
            summary["test_mean"] = {
                key: statistics.fmean(getattr(r.reports[-1].mean_metrics, key) for r in ok) for key in ("mse", "r2", "nmse")
            }
    record = {"config": resolved_config(config), "data": settings, "data_dir": str(data_dir),
              "seeds": per_seed, "summary": summary, "wall_clock_seconds": time.perf_counter() - start}
    (out / "results.json").write_text(json.dumps(record, indent=2) + "\n")
    for entry in per_seed:
        status = "diverged: " + entry["error"] if entry["error"] else "ok"
        print(f"seed {entry['seed']}: {status}")
    if not ok:
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_evaluate(spec: dict[str, Any], out: Path, checkpoint: Path, trial_file: Path) -> int:
    try:
        blob = json.loads(Path(checkpoint).read_text())
    except FileNotFoundError:
        raise SpecError(f"checkpoint not found: {checkpoint}") from None
    if not Path(trial_file).exists():
        raise SpecError(f"trial file not found: {trial_file}")
    try:
        network = NetworkConfig(**blob["network"])
        weights = _weights_from_json(blob["weights"])
        check_weights(weights, network)
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"invalid checkpoint: {exc}") from None
    trial = read_trial_csv(Path(trial_file))
    if network.n_inputs != trial.inputs.shape[1]:
        raise SpecError(f"checkpoint expects {network.n_inputs} inputs, trial provides {trial.inputs.shape[1]}")
    m = network.history_steps
    if len(trial.q) <= m:
        raise SpecError(f"trial too short for {m} history steps")
    pred = rollout(weights, trial.inputs, trial.q[:m], network)
    out.mkdir(parents=True, exist_ok=True)
    score = metrics(trial.q[m:], pred[m:])
    stem = Path(trial_file).stem
    write_trial_csv(out / f"{stem}_pred.csv", trial, {"q_pred": pred})
    (out / f"{stem}_metrics.json").write_text(json.dumps(
        {"trial": str(trial_file), "checkpoint": str(checkpoint), **score.as_dict()}, indent=2) + "\n")
    print(f"mse={score.mse:.6g} r2={score.r2:.6f} nmse={score.nmse:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrpirnn", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=("generate", "train", "evaluate"))
    parser.add_argument("--spec", required=True, type=Path)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--seeds", type=_parse_ints, help="comma-separated seeds, overrides the spec")
    parser.add_argument("--scales", type=_parse_ints, help="comma-separated scales such as -2,-1,0")
    parser.add_argument("--checkpoint", type=Path, help="evaluate: checkpoint JSON")
    parser.add_argument("--trial", type=Path, help="evaluate: trial CSV")
    return parser


def _attach_list_values(argv: list[str]) -> list[str]:
    """Glue ``--scales -2,-1,0`` into one token; argparse would read ``-2,...`` as a flag."""
    out: list[str] = []
    it = iter(argv)
    for token in it:
        if token in ("--scales", "--seeds"):
            value = next(it, None)
            out.append(token if value is None else f"{token}={value}")
        else:
            out.append(token)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_attach_list_values(argv))
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        spec = load_spec(args.spec)
        if args.command == "generate":
            return cmd_generate(spec, args.out)
        if args.command == "train":
            return cmd_train(spec, args.out, args.spec, args.seeds, args.scales)
        if args.checkpoint is None or args.trial is None:
            raise SpecError("evaluate needs --checkpoint and --trial")
        return cmd_evaluate(spec, args.out, args.checkpoint, args.trial)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

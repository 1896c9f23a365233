"""Command-line entry point: train / eval / features / subset / synth.

Config files are flat key = value text. Exit codes: 0 success, 2 config
error, 3 data error, 4 numerical error. PROTOAUDIO_SEED overrides the
config seed for any command that uses one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .audio_io import load_wav
from .datasetkit import (
    filter_to_subset,
    gen_synthetic_corpus,
    load_manifest,
    make_splits,
    save_manifest,
    save_split,
    select_single_label_subset,
)
from .dsp import FrontendConfig, extract_features, save_features
from .encoders import EncoderSpec, build_encoder
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    CorruptCheckpointError,
    CorruptContainerError,
    InsufficientClassesError,
    InsufficientExamplesError,
    KernelTooLongError,
    ManifestError,
    MissingRunError,
    NonFiniteValueError,
    ShapeMismatchError,
    TooFewClassesError,
    UnsupportedFormatError,
)
from .training import (
    TrainConfig,
    evaluate,
    InputCache,
    render_eval_table,
    restore_encoder,
    save_encoder_checkpoint,
    save_history,
    train,
)

_DATA_ERRORS = (
    FileNotFoundError,
    ManifestError,
    UnsupportedFormatError,
    CorruptContainerError,
    TooFewClassesError,
    InsufficientClassesError,
    InsufficientExamplesError,
    MissingRunError,
    CheckpointMismatchError,
    CorruptCheckpointError,
    KernelTooLongError,
)

CONFIG_DEFAULTS = {
    "encoder": "vgg",
    "scale": "desk",
    "manifest": "",
    "split_ratios": "0.6,0.2,0.2",
    "min_per_class": "10",
    "n_shot": "5",
    "k_way": "5",
    "q_query": "5",
    "max_episodes": "25000",
    "eval_interval": "500",
    "patience_checks": "10",
    "lr": "1e-5",
    "test_episodes": "1000",
    "val_episodes": "200",
    "seed": "0",
}


def parse_config_text(text: str) -> dict:
    values = dict(CONFIG_DEFAULTS)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def effective_seed(values: dict) -> int:
    env = os.environ.get("PROTOAUDIO_SEED")
    raw = env if env is not None else values["seed"]
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"seed {raw!r} is not an integer") from exc


def build_train_config(values: dict) -> TrainConfig:
    try:
        return TrainConfig(
            n_shot=int(values["n_shot"]),
            k_way=int(values["k_way"]),
            q_query=int(values["q_query"]),
            max_episodes=int(values["max_episodes"]),
            eval_interval=int(values["eval_interval"]),
            patience_checks=int(values["patience_checks"]),
            lr=float(values["lr"]),
            test_episodes=int(values["test_episodes"]),
            val_episodes=int(values["val_episodes"]),
            seed=effective_seed(values),
        )
    except ValueError as exc:
        raise ConfigError(f"bad numeric value in config: {exc}") from exc


def load_run_config(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


def resolve_splits(values: dict, cfg: TrainConfig):
    manifest_path = values["manifest"]
    if not manifest_path:
        raise ConfigError("config key 'manifest' is required")
    manifest = load_manifest(manifest_path)
    try:
        ratios = tuple(float(r) for r in values["split_ratios"].split(","))
    except ValueError as exc:
        raise ConfigError(f"bad split_ratios {values['split_ratios']!r}") from exc
    if len(ratios) != 3:
        raise ConfigError(f"split_ratios needs 3 numbers, got {values['split_ratios']!r}")
    try:
        min_per_class = int(values["min_per_class"])
    except ValueError as exc:
        raise ConfigError(f"bad min_per_class {values['min_per_class']!r}") from exc
    return make_splits(manifest, ratios, min_per_class, seed=cfg.seed)


def cmd_train(args) -> int:
    config_path = Path(args.config)
    values = load_run_config(config_path)
    cfg = build_train_config(values)
    spec = EncoderSpec(values["encoder"], values["scale"])
    run = Path(args.out)
    run.mkdir(parents=True, exist_ok=True)
    # snapshot before anything else touches the run dir
    (run / "config.snapshot").write_text(config_path.read_text(encoding="utf-8"),
                                         encoding="utf-8")
    split = resolve_splits(values, cfg)
    save_split(split, run / "splits")
    encoder = build_encoder(spec, FrontendConfig(), seed=cfg.seed)
    print(f"training {spec.kind} ({spec.scale}) seed={cfg.seed} "
          f"{cfg.n_shot}-shot {cfg.k_way}-way")

    def progress(ep, loss, train_acc, val_acc):
        if val_acc is not None:
            print(f"episode {ep}: loss {loss:.4f} val_accuracy {val_acc:.4f}")

    result = train(encoder, split.train, split.val, cfg, progress=progress)
    save_history(run / "history.jsonl", result.history)
    meta = {
        "seed": cfg.seed,
        "episode": result.best_episode,
        "val_accuracy": result.best_val_accuracy,
    }
    save_encoder_checkpoint(run / "best.ckpt", encoder, params=result.best_params,
                            extra_meta=meta)
    save_encoder_checkpoint(run / "last.ckpt", encoder,
                            extra_meta={**meta, "episode": result.episodes_run})
    stop = "early stop" if result.stopped_early else "max episodes"
    print(f"done after {result.episodes_run} episodes ({stop}); "
          f"best val_accuracy "
          f"{'n/a' if result.best_val_accuracy is None else f'{result.best_val_accuracy:.4f}'} "
          f"at episode {result.best_episode}")
    return 0


def cmd_eval(args) -> int:
    run = Path(args.run)
    snapshot = run / "config.snapshot"
    ckpt = run / "best.ckpt"
    if not snapshot.exists() or not ckpt.exists():
        raise MissingRunError(f"{run}: missing config.snapshot or best.ckpt")
    values = parse_config_text(snapshot.read_text(encoding="utf-8"))
    cfg = build_train_config(values)
    spec = EncoderSpec(values["encoder"], values["scale"])
    split = resolve_splits(values, cfg)
    encoder = restore_encoder(ckpt, spec, FrontendConfig())
    cache = InputCache(encoder)
    part = split.part(args.split)
    seed = cfg.seed if args.seed is None else args.seed
    report = evaluate(encoder, cache, part, cfg, n_episodes=args.episodes, seed=seed)
    print(report.summary())
    table = render_eval_table({spec.kind: {(cfg.n_shot, cfg.k_way): report}})
    record = {
        "encoder": spec.kind,
        "scale": spec.scale,
        "split": args.split,
        "n_shot": cfg.n_shot,
        "k_way": cfg.k_way,
        "seed": seed,
        "report": report.to_dict(),
    }
    (run / f"eval_{args.split}.txt").write_text(table, encoding="utf-8")
    (run / f"eval_{args.split}.json").write_text(
        json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return 0


def cmd_features(args) -> int:
    waveform = load_wav(args.wav)
    feats = extract_features(waveform, FrontendConfig())
    save_features(args.out, feats)
    print(f"wrote {feats.shape[0]}x{feats.shape[1]} features to {args.out}")
    return 0


def cmd_subset(args) -> int:
    manifest = load_manifest(args.manifest)
    chosen, j = select_single_label_subset(manifest, args.classes, budget=args.budget)
    print(f"J={j}")
    print("classes: " + ",".join(chosen))
    if args.out:
        save_manifest(filter_to_subset(manifest, chosen), args.out)
        print(f"wrote filtered manifest to {args.out}")
    return 0


def cmd_synth(args) -> int:
    env = os.environ.get("PROTOAUDIO_SEED")
    seed = int(env) if env is not None else args.seed
    manifest, manifest_path = gen_synthetic_corpus(
        args.out, args.classes, args.per_class, seed=seed
    )
    print(f"wrote {len(manifest)} clips across {len(manifest.classes)} classes; "
          f"manifest at {manifest_path}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoaudio",
        description="Few-shot audio classification: training, evaluation, and data tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an encoder on a manifest")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--out", required=True, help="run directory to create/populate")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run's best checkpoint")
    p.add_argument("--run", required=True, help="run directory from train")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--episodes", type=int, default=None,
                   help="episode count (default: config test_episodes, 1000)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("features", help="dump log-mel features for one WAV")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("subset", help="pick a near-optimal single-label class subset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--budget", type=int, default=50_000)
    p.add_argument("--out", default=None, help="write the filtered manifest here")
    p.set_defaults(fn=cmd_subset)

    p = sub.add_parser("synth", help="generate a synthetic timbre corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NonFiniteValueError, ShapeMismatchError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

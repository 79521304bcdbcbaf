"""Command-line surface: synth, train, eval, diagnose, dump-embeddings.

Exit codes: 0 ok, 2 configuration problem, 3 numeric failure during
training, 4 corrupt artifact. All outputs except timing.txt are
byte-deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import ConfigError, RunConfig, dumps_config, load_config
from .formats import CorruptArtifactError, load_checkpoint, load_dataset, save_checkpoint, save_dataset
from .protocol import build_test_subsets, diagnostics_report, dump_embeddings, evaluate_subsets
from .reports import format_json, format_table, write_text
from .seeding import derive_seed
from .synthdata import GeneratorSpec, generate_dataset
from .training import NumericFailureError, build_model_from_config, load_weights, train_model

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CORRUPT = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirage",
        description="Desk-scale lab for generated-image detection experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config's first seed")
        p.add_argument("--out", required=True, help="output directory")

    p_synth = sub.add_parser("synth", help="generate and persist a training dataset")
    common(p_synth)

    p_train = sub.add_parser("train", help="train a model and write checkpoint + metrics")
    common(p_train)
    p_train.add_argument("--resume", default=None, help="checkpoint to initialize from")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over the test subsets")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_diag = sub.add_parser("diagnose", help="emit variation/separation diagnostics")
    common(p_diag)
    p_diag.add_argument("--checkpoint", required=True)

    p_dump = sub.add_parser("dump-embeddings", help="write test-subset embeddings as CSV")
    common(p_dump)
    p_dump.add_argument("--checkpoint", required=True)
    return parser


def _run_seed(config: RunConfig, override) -> int:
    if override is not None:
        return int(override)
    return int(config.protocol.seeds[0])


def _load_model(config: RunConfig, seed: int, checkpoint_path):
    model = build_model_from_config(config, seed, arm="full")
    tensors = load_checkpoint(checkpoint_path)
    load_weights(model, tensors)
    return model


def cmd_synth(config: RunConfig, seed: int, out_dir: Path) -> int:
    side = config.encoder.image_side
    channels = config.encoder.channels
    count = config.data.train_count_per_class
    natural = generate_dataset(
        GeneratorSpec.natural(config.data.correlation_length, config.data.contrast),
        count,
        derive_seed(seed, "train", "real"),
        side,
        channels,
    )
    fake = generate_dataset(
        GeneratorSpec(
            config.data.train_family,
            config.data.artifact_strength,
            config.data.correlation_length,
            config.data.contrast,
        ),
        count,
        derive_seed(seed, "train", "fake"),
        side,
        channels,
    )
    path = out_dir / "dataset.mird"
    save_dataset(path, natural + fake)
    print(f"NATURAL: {len(natural)}")
    print(f"{config.data.train_family}: {len(fake)}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_train(config: RunConfig, seed: int, out_dir: Path, resume) -> int:
    if resume is not None:
        # verify the resume checkpoint matches the config before training
        model = build_model_from_config(config, seed, arm="full")
        load_weights(model, load_checkpoint(resume))
        initial = {name: t.data for name, t in model.named_tensors().items()}
    else:
        initial = None

    result = train_model(config, seed, arm="full", initial_tensors=initial)
    tensors = {name: t.data for name, t in result.model.named_tensors().items()}
    save_checkpoint(out_dir / "checkpoint.mirg", tensors)
    metrics = {
        "seed": seed,
        "initial": result.initial_diagnostics,
        "epochs": result.epoch_log,
    }
    write_text(out_dir / "metrics.json", format_json(metrics))
    print(f"trained {len(result.epoch_log)} epochs; checkpoint at {out_dir / 'checkpoint.mirg'}")
    return EXIT_OK


def cmd_eval(config: RunConfig, seed: int, out_dir: Path, checkpoint) -> int:
    started = time.time()
    model = _load_model(config, seed, checkpoint)
    subsets = build_test_subsets(config)
    evaluation = evaluate_subsets(model, subsets, config.loss.temperature)
    report = {
        "config": config.to_dict(),
        "seed": seed,
        "per_subset": evaluation["subsets"],
        "mean_accuracy": evaluation["mean_accuracy"],
        "mean_average_precision": evaluation["mean_average_precision"],
    }
    write_text(out_dir / "report.json", format_json(report))

    subset_ids = sorted(evaluation["subsets"])
    headers = ["metric"] + subset_ids + ["Avg"]
    acc_row = (
        ["accuracy"]
        + [f"{evaluation['subsets'][s]['accuracy']:.4f}" for s in subset_ids]
        + [f"{evaluation['mean_accuracy']:.4f}"]
    )
    ap_row = (
        ["avg precision"]
        + [f"{evaluation['subsets'][s]['average_precision']:.4f}" for s in subset_ids]
        + [f"{evaluation['mean_average_precision']:.4f}"]
    )
    write_text(
        out_dir / "report.txt",
        format_table(headers, [acc_row, ap_row], title="per-subset evaluation"),
    )
    write_text(out_dir / "timing.txt", f"eval wall clock: {time.time() - started:.3f}s\n")
    print(f"mean accuracy {evaluation['mean_accuracy']:.4f} over {len(subset_ids)} subsets")
    return EXIT_OK


def cmd_diagnose(config: RunConfig, seed: int, out_dir: Path, checkpoint) -> int:
    model = _load_model(config, seed, checkpoint)
    report = diagnostics_report(model, config)
    write_text(out_dir / "diagnostics.json", format_json(report))
    subsets = build_test_subsets(config)
    clean = {k: v for k, v in subsets.items() if "+" not in k}
    dump_embeddings(model, clean, out_dir / "embeddings.csv")
    print(
        "v_clip {v_clip:.4f} separation {separation:.4f} sup_variation {sup_variation:.4f}".format(
            **report
        )
    )
    return EXIT_OK


def cmd_dump_embeddings(config: RunConfig, seed: int, out_dir: Path, checkpoint) -> int:
    model = _load_model(config, seed, checkpoint)
    subsets = build_test_subsets(config)
    clean = {k: v for k, v in subsets.items() if "+" not in k}
    dump_embeddings(model, clean, out_dir / "embeddings.csv")
    print(f"wrote {out_dir / 'embeddings.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        seed = _run_seed(config, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(dumps_config(config), encoding="utf-8")
        if args.command == "synth":
            return cmd_synth(config, seed, out_dir)
        if args.command == "train":
            return cmd_train(config, seed, out_dir, args.resume)
        if args.command == "eval":
            return cmd_eval(config, seed, out_dir, args.checkpoint)
        if args.command == "diagnose":
            return cmd_diagnose(config, seed, out_dir, args.checkpoint)
        if args.command == "dump-embeddings":
            return cmd_dump_embeddings(config, seed, out_dir, args.checkpoint)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CorruptArtifactError as exc:
        print(f"corrupt artifact: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Cross-generator evaluation protocol: seeds x arms, seen and unseen subsets.

Test subsets are fixed by the protocol's test seed (shared across run seeds
and arms so comparisons isolate the training deltas); degradations add one
subset per (family, degradation) pair. Workers for independent runs are
capped by the MIRAGE_THREADS environment variable.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .diagnostics import (
    DistributionFamily,
    EmpiricalDistribution,
    estimate_generalization_error,
    sup_variation,
)
from .metrics import accuracy, average_precision, mean_average_precision
from .objective import FAKE, REAL
from .seeding import derive_seed
from .synthdata import DegradationSpec, GeneratorSpec, degrade, generate_dataset
from .training import encode_samples, score_samples, train_model

__all__ = [
    "build_test_subsets",
    "dump_embeddings",
    "evaluate_subsets",
    "max_workers",
    "run_protocol",
]


def max_workers() -> int:
    cap = os.environ.get("MIRAGE_THREADS", "")
    try:
        requested = int(cap) if cap else 1
    except ValueError:
        requested = 1
    return max(1, min(requested, os.cpu_count() or 1))


def _family_spec(config: RunConfig, family: str) -> GeneratorSpec:
    data = config.data
    return GeneratorSpec(
        family, data.artifact_strength, data.correlation_length, data.contrast
    )


def build_test_subsets(config: RunConfig) -> dict:
    """subset id -> sample list (fake family + equal naturals, degraded per spec)."""
    proto = config.protocol
    side = config.encoder.image_side
    channels = config.encoder.channels
    count = proto.test_count_per_class
    natural = generate_dataset(
        GeneratorSpec.natural(config.data.correlation_length, config.data.contrast),
        count,
        derive_seed(proto.test_seed, "test", "natural"),
        side,
        channels,
    )
    subsets = {}
    degradations = [None] + proto.degradation_specs()
    for family in proto.test_families:
        fakes = generate_dataset(
            _family_spec(config, family),
            count,
            derive_seed(proto.test_seed, "test", family),
            side,
            channels,
        )
        for deg in degradations:
            samples = fakes + natural
            if deg is not None:
                samples = [degrade(s, deg) for s in samples]
                subset_id = f"{family}+{deg.tag()}"
            else:
                subset_id = family
            subsets[subset_id] = samples
    return subsets


def evaluate_subsets(model, subsets: dict, tau: float) -> dict:
    """Per-subset accuracy and AP plus unweighted means."""
    per_subset = {}
    for subset_id in sorted(subsets):
        preds = score_samples(model, subsets[subset_id], tau, subset_id)
        per_subset[subset_id] = {
            "accuracy": accuracy(preds),
            "average_precision": average_precision(preds),
            "count": len(preds),
        }
    accs = [v["accuracy"] for v in per_subset.values()]
    aps = [v["average_precision"] for v in per_subset.values()]
    return {
        "subsets": per_subset,
        "mean_accuracy": sum(accs) / len(accs),
        "mean_average_precision": mean_average_precision(aps),
    }


def _single_run(config: RunConfig, seed: int, arm: str) -> dict:
    result = train_model(config, seed, arm)
    subsets = build_test_subsets(config)
    tau = config.loss.temperature
    evaluation = evaluate_subsets(result.model, subsets, tau)
    train_family = config.data.train_family
    seen = [v["accuracy"] for k, v in evaluation["subsets"].items() if k == train_family]
    unseen = [
        v["accuracy"]
        for k, v in evaluation["subsets"].items()
        if "+" not in k and k != train_family
    ]
    record = {
        "seed": seed,
        "arm": arm,
        "evaluation": evaluation,
        "initial_diagnostics": result.initial_diagnostics,
        "epoch_log": result.epoch_log,
        "seen_accuracy": seen[0] if seen else None,
        "unseen_mean_accuracy": (sum(unseen) / len(unseen)) if unseen else None,
    }
    return record


def _worker(payload):
    config_dict, seed, arm = payload
    from .config import parse_config
    import json

    config = parse_config(json.dumps(config_dict))
    return _single_run(config, seed, arm)


def run_protocol(config: RunConfig, workers: int | None = None) -> dict:
    """Train and evaluate every (seed, arm); deterministic for a fixed config."""
    jobs = [(seed, arm) for seed in config.protocol.seeds for arm in config.protocol.arms]
    if workers is None:
        workers = max_workers()
    runs = {}
    if workers > 1 and len(jobs) > 1:
        payloads = [(config.to_dict(), seed, arm) for seed, arm in jobs]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for record in pool.map(_worker, payloads):
                runs[f"seed={record['seed']}/arm={record['arm']}"] = record
    else:
        for seed, arm in jobs:
            runs[f"seed={seed}/arm={arm}"] = _single_run(config, seed, arm)

    summary = {}
    for arm in config.protocol.arms:
        arm_runs = [runs[f"seed={s}/arm={arm}"] for s in config.protocol.seeds]
        seen = [r["seen_accuracy"] for r in arm_runs if r["seen_accuracy"] is not None]
        unseen = [
            r["unseen_mean_accuracy"] for r in arm_runs if r["unseen_mean_accuracy"] is not None
        ]
        v_down = sum(
            1
            for r in arm_runs
            if r["epoch_log"] and r["epoch_log"][-1]["v_clip"] < r["initial_diagnostics"]["v_clip"]
        )
        sep_up = sum(
            1
            for r in arm_runs
            if r["epoch_log"]
            and r["epoch_log"][-1]["separation"] > r["initial_diagnostics"]["separation"]
        )
        summary[arm] = {
            "mean_seen_accuracy": sum(seen) / len(seen) if seen else None,
            "mean_unseen_accuracy": sum(unseen) / len(unseen) if unseen else None,
            "mean_map": sum(r["evaluation"]["mean_average_precision"] for r in arm_runs)
            / len(arm_runs),
            "v_clip_decreased_seeds": v_down,
            "separation_increased_seeds": sep_up,
        }
    return {"runs": runs, "summary": summary, "config": config.to_dict()}


def diagnostics_report(model, config: RunConfig) -> dict:
    """Theory diagnostics over the protocol's clean test subsets."""
    proto = config.protocol
    side = config.encoder.image_side
    channels = config.encoder.channels
    tau = config.loss.temperature
    count = proto.test_count_per_class
    e_real, e_fake = model.anchors()
    anchors = (e_real.data.astype(np.float64), e_fake.data.astype(np.float64))

    natural = generate_dataset(
        GeneratorSpec.natural(config.data.correlation_length, config.data.contrast),
        count,
        derive_seed(proto.test_seed, "diag", "natural"),
        side,
        channels,
    )
    real_dist = EmpiricalDistribution(
        encode_samples(model, natural).astype(np.float64), "natural", REAL
    )
    fake_dists = []
    for family in proto.test_families:
        fakes = generate_dataset(
            _family_spec(config, family),
            count,
            derive_seed(proto.test_seed, "diag", family),
            side,
            channels,
        )
        fake_dists.append(
            EmpiricalDistribution(
                encode_samples(model, fakes).astype(np.float64), family, FAKE
            )
        )

    train_fake = next(d for d in fake_dists if d.source == config.data.train_family)
    from .diagnostics import inter_class_separation, v_clip

    report = {
        "v_clip": float(v_clip(train_fake, real_dist, anchors)),
        "separation": float(
            inter_class_separation(
                DistributionFamily(fake_dists), DistributionFamily([real_dist])
            )
        ),
        "sup_variation": float(
            sup_variation(
                train_fake,
                real_dist,
                anchors,
                num_directions=proto.sup_directions,
                bins=proto.sup_bins,
                seed=proto.test_seed,
            )
        ),
        "sup_directions": proto.sup_directions,
        "generalization_error": float(
            estimate_generalization_error(
                train_fake,
                real_dist,
                DistributionFamily(fake_dists),
                DistributionFamily([real_dist]),
                anchors,
                tau,
            )
        ),
    }
    return report


def dump_embeddings(model, samples_by_subset: dict, path) -> None:
    """CSV of (subset, label, embedding); the two anchors head the table."""
    e_real, e_fake = model.anchors()
    d_out = e_real.shape[0]
    header = "subset,label," + ",".join(f"e{i}" for i in range(d_out))
    lines = [header]
    for name, vec in (("anchor", e_real.data), ("anchor", e_fake.data)):
        label = REAL if vec is e_real.data else FAKE
        lines.append(f"{name},{label}," + ",".join(f"{x:.8f}" for x in vec))
    for subset_id in sorted(samples_by_subset):
        samples = samples_by_subset[subset_id]
        embeddings = encode_samples(model, samples)
        for sample, vec in zip(samples, embeddings):
            lines.append(
                f"{subset_id},{sample.label}," + ",".join(f"{x:.8f}" for x in vec)
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

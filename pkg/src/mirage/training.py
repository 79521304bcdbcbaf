"""Training loop: per-step anchor refresh, combined objective, bank updates.

Ablation arms map onto the objective pieces:

* full                  multimodal prompts + discriminative loss + bank
* no-bank               multimodal prompts + discriminative loss
* ce-only               multimodal prompts, cross-entropy only
* single-modal-prompts  text prompts only, cross-entropy only
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import OptimizerState, Tape, backward, sgd_step
from .config import ConfigError, RunConfig
from .diagnostics import EmpiricalDistribution, inter_class_separation, DistributionFamily, v_clip
from .encoders import DualEncoder, Vocabulary, build_model, predict_from_embeddings
from .metrics import ScoredPrediction
from .objective import (
    MemoryBank,
    bank_update,
    build_embedding_set,
    cross_entropy_loss,
    discriminative_loss,
    discriminative_loss_with_bank,
    total_loss,
)
from .seeding import child_rng, derive_seed
from .synthdata import GeneratorSpec, augment, default_augmentations, generate_dataset

__all__ = [
    "NumericFailureError",
    "TrainResult",
    "arm_settings",
    "build_model_from_config",
    "encode_samples",
    "load_weights",
    "score_samples",
    "train_model",
]


class NumericFailureError(Exception):
    pass


class TrainResult:
    def __init__(self, model, epoch_log, initial_diagnostics, bank):
        self.model = model
        self.epoch_log = epoch_log
        self.initial_diagnostics = initial_diagnostics
        self.bank = bank


def arm_settings(arm: str, loss) -> dict:
    if arm == "full":
        return {"multimodal": True, "dis_weight": loss.dis_weight, "bank": loss.bank_enabled}
    if arm == "no-bank":
        return {"multimodal": True, "dis_weight": loss.dis_weight, "bank": False}
    if arm == "ce-only":
        return {"multimodal": True, "dis_weight": 0.0, "bank": False}
    if arm == "single-modal-prompts":
        return {"multimodal": False, "dis_weight": 0.0, "bank": False}
    raise ConfigError(f"unknown arm {arm!r}")


def build_model_from_config(config: RunConfig, seed: int, arm: str = "full") -> DualEncoder:
    settings = arm_settings(arm, config.loss)
    template = config.encoder.template()
    vocab = Vocabulary.from_templates([template])
    return build_model(
        config.encoder.encoder_config(),
        vocab,
        template,
        seed,
        multimodal=settings["multimodal"],
        mapping_kind=config.encoder.mapping_kind,
        prompt_init=config.encoder.prompt_init,
    )


def _train_sets(config: RunConfig, seed: int):
    side = config.encoder.image_side
    channels = config.encoder.channels
    data = config.data
    natural = GeneratorSpec.natural(data.correlation_length, data.contrast)
    fake = GeneratorSpec(
        data.train_family, data.artifact_strength, data.correlation_length, data.contrast
    )
    train = generate_dataset(
        natural, data.train_count_per_class, derive_seed(seed, "train", "real"), side, channels
    ) + generate_dataset(
        fake, data.train_count_per_class, derive_seed(seed, "train", "fake"), side, channels
    )
    hold_real = generate_dataset(
        natural, data.holdout_per_class, derive_seed(seed, "holdout", "real"), side, channels
    )
    hold_fake = generate_dataset(
        fake, data.holdout_per_class, derive_seed(seed, "holdout", "fake"), side, channels
    )
    return train, hold_real, hold_fake


def encode_samples(model: DualEncoder, samples, chunk: int = 64) -> np.ndarray:
    out = []
    for start in range(0, len(samples), chunk):
        batch = np.stack([s.pixels for s in samples[start : start + chunk]])
        out.append(model.encode_image(batch).data)
    return np.vstack(out)


def score_samples(model: DualEncoder, samples, tau: float, subset: str, chunk: int = 64):
    e_real, e_fake = model.anchors()
    h = encode_samples(model, samples, chunk)
    _, scores = predict_from_embeddings(h, e_real.data, e_fake.data, tau)
    return [
        ScoredPrediction(float(score), s.label, subset) for score, s in zip(scores, samples)
    ]


def _diagnostics(model, hold_real, hold_fake) -> dict:
    e_real, e_fake = model.anchors()
    real_cloud = EmpiricalDistribution(
        encode_samples(model, hold_real).astype(np.float64), "natural", 0
    )
    fake_cloud = EmpiricalDistribution(
        encode_samples(model, hold_fake).astype(np.float64), hold_fake[0].generator, 1
    )
    return {
        "v_clip": float(v_clip(fake_cloud, real_cloud, (e_real.data, e_fake.data))),
        "separation": float(
            inter_class_separation(
                DistributionFamily([fake_cloud]), DistributionFamily([real_cloud])
            )
        ),
    }


def train_model(
    config: RunConfig, seed: int, arm: str = "full", initial_tensors: dict | None = None
) -> TrainResult:
    settings = arm_settings(arm, config.loss)
    model = build_model_from_config(config, seed, arm)
    if initial_tensors is not None:
        load_weights(model, initial_tensors)
    tau = config.loss.temperature
    dis_weight = settings["dis_weight"]
    use_bank = settings["bank"] and config.loss.bank_capacity > 0

    train, hold_real, hold_fake = _train_sets(config, seed)
    pipeline = None
    if config.data.augment_probability > 0:
        pipeline = default_augmentations(
            config.data.augment_probability, seed=derive_seed(seed, "augment")
        )

    opt = config.optimizer
    steps_per_epoch = max(1, (len(train) + opt.batch_size - 1) // opt.batch_size)
    total_steps = max(1, opt.epochs * steps_per_epoch)
    params = model.trainable_params()
    names = sorted(params)
    state = OptimizerState(
        [params[n] for n in names],
        base_lr=opt.learning_rate,
        momentum=opt.momentum,
        total_steps=total_steps,
    )
    bank = MemoryBank(config.loss.bank_capacity if use_bank else 0)

    initial = _diagnostics(model, hold_real, hold_fake)
    initial["lr"] = state.current_lr()
    epoch_log = []
    order_rng = child_rng(seed, "batch-order")

    for epoch in range(1, opt.epochs + 1):
        order = order_rng.permutation(len(train))
        sums = {"total": 0.0, "ce": 0.0, "dis": 0.0}
        for start in range(0, len(train), opt.batch_size):
            idx = order[start : start + opt.batch_size]
            chosen = [train[i] for i in idx]
            if pipeline is not None:
                chosen = [
                    augment(s, pipeline, draw_seed=int(epoch * len(train) + i))
                    for s, i in zip(chosen, idx)
                ]
            pixels = np.stack([s.pixels for s in chosen])
            labels = np.array([s.label for s in chosen], dtype=np.int64)

            with Tape() as tape:
                anchors = model.anchors()
                h = model.encode_image(pixels)
                ce = cross_entropy_loss(h, labels, anchors, tau)
                if dis_weight > 0:
                    pooled = build_embedding_set(anchors, h, labels)
                    if use_bank:
                        dis = discriminative_loss_with_bank(
                            pooled, bank, tau, normalize=config.loss.normalize
                        )
                    else:
                        dis = discriminative_loss(pooled, tau, normalize=config.loss.normalize)
                    loss = total_loss(ce, dis, dis_weight)
                else:
                    dis = ad.constant(np.zeros((), dtype=np.float32))
                    loss = ce

            if not np.isfinite(loss.data).all():
                raise NumericFailureError(
                    f"non-finite loss at seed {seed} arm {arm} epoch {epoch}"
                )
            grads = backward(tape, loss)
            updated = sgd_step([params[n] for n in names], grads, state)
            params = dict(zip(names, updated))
            model.rebind(params)
            if use_bank:
                bank_update(bank, h.detach(), labels)

            sums["total"] += loss.item() * len(chosen)
            sums["ce"] += ce.item() * len(chosen)
            sums["dis"] += dis.item() * len(chosen)

        record = {key: value / len(train) for key, value in sums.items()}
        record.update(_diagnostics(model, hold_real, hold_fake))
        record["epoch"] = epoch
        record["lr"] = state.current_lr()
        epoch_log.append(record)

    return TrainResult(model, epoch_log, initial, bank)


def load_weights(model: DualEncoder, tensors: dict) -> None:
    """Overwrite every named tensor from a checkpoint, validating shapes."""
    from .autodiff import Tensor

    current = model.named_tensors()
    missing = sorted(set(current) - set(tensors))
    extra = sorted(set(tensors) - set(current))
    if missing or extra:
        raise ConfigError(
            f"checkpoint does not match config (missing {missing}, unexpected {extra})"
        )
    params = {}
    for name, arr in tensors.items():
        if tuple(arr.shape) != tuple(current[name].shape):
            raise ConfigError(
                f"checkpoint tensor {name!r} has shape {arr.shape}, expected {current[name].shape}"
            )
        if name.startswith("backbone."):
            model.backbone[name] = Tensor(arr.astype(np.float32))
        else:
            params[name] = Tensor(arr.astype(np.float32), grad_tracked=True)
    if params:
        model.rebind(params)

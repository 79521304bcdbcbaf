"""Run configuration: JSON schema, strict validation, round-trip parsing.

Unknown keys anywhere in the document are hard errors so ablation configs
cannot silently drift. Every default below is overridable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .encoders import EncoderConfig, PromptTemplate
from .objective import LossConfig
from .synthdata import DegradationSpec

__all__ = ["ARMS", "ConfigError", "RunConfig", "dumps_config", "load_config", "parse_config"]

ARMS = ("full", "no-bank", "ce-only", "single-modal-prompts")


class ConfigError(Exception):
    pass


@dataclass
class EncoderSection:
    embed_dim: int = 64
    out_dim: int = 64
    text_depth: int = 4
    image_depth: int = 4
    prompt_depth: int = 2
    prompt_len: int = 2
    patch_size: int = 8
    image_side: int = 32
    channels: int = 3
    head_count: int = 4
    mlp_ratio: float = 4.0
    prompt_init: str = "random"
    mapping_kind: str = "linear"
    template_prefix: list = field(default_factory=lambda: ["a", "photo", "of", "a"])
    template_real_word: str = "real"
    template_fake_word: str = "fake"
    template_suffix: list = field(default_factory=list)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            embed_dim=self.embed_dim,
            out_dim=self.out_dim,
            text_depth=self.text_depth,
            image_depth=self.image_depth,
            prompt_depth=self.prompt_depth,
            prompt_len=self.prompt_len,
            patch_size=self.patch_size,
            image_side=self.image_side,
            channels=self.channels,
            head_count=self.head_count,
            mlp_ratio=self.mlp_ratio,
        )

    def template(self) -> PromptTemplate:
        return PromptTemplate(
            prefix=tuple(self.template_prefix),
            class_words=(("real", self.template_real_word), ("fake", self.template_fake_word)),
            suffix=tuple(self.template_suffix),
        )


@dataclass
class LossSection:
    temperature: float = 0.07
    dis_weight: float = 0.1
    bank_enabled: bool = True
    bank_capacity: int = 64
    normalize: bool = False

    def loss_config(self) -> LossConfig:
        return LossConfig(
            temperature=self.temperature,
            dis_weight=self.dis_weight,
            bank_enabled=self.bank_enabled,
            bank_capacity=self.bank_capacity,
            normalize=self.normalize,
        )


@dataclass
class OptimizerSection:
    learning_rate: float = 0.002
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 32

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class DataSection:
    train_family: str = "F_CHECKER"
    artifact_strength: float = 0.5
    correlation_length: float = 2.0
    contrast: float = 0.8
    train_count_per_class: int = 500
    holdout_per_class: int = 64
    augment_probability: float = 0.0

    def validate(self):
        if self.train_family in ("NATURAL",):
            raise ConfigError("train_family must be a fake family")
        if self.train_count_per_class < 1 or self.holdout_per_class < 1:
            raise ConfigError("counts must be >= 1")
        if not 0.0 <= self.augment_probability <= 1.0:
            raise ConfigError("augment_probability must be in [0, 1]")


@dataclass
class ProtocolSection:
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    arms: list = field(default_factory=lambda: list(ARMS))
    test_families: list = field(default_factory=lambda: ["F_CHECKER", "F_SPECTRAL", "F_SEAM"])
    test_count_per_class: int = 300
    test_seed: int = 777
    degradations: list = field(default_factory=list)  # [{"kind":..., "parameter":...}]
    sup_directions: int = 16
    sup_bins: int = 32

    def validate(self):
        if not self.seeds:
            raise ConfigError("protocol.seeds must not be empty")
        for arm in self.arms:
            if arm not in ARMS:
                raise ConfigError(f"unknown arm {arm!r}; valid: {list(ARMS)}")
        if self.test_count_per_class < 1:
            raise ConfigError("test_count_per_class must be >= 1")
        for spec in self.degradation_specs():
            pass  # construction validates

    def degradation_specs(self) -> list:
        return [DegradationSpec(d["kind"], d["parameter"]) for d in self.degradations]


@dataclass
class RunConfig:
    encoder: EncoderSection = field(default_factory=EncoderSection)
    loss: LossSection = field(default_factory=LossSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    data: DataSection = field(default_factory=DataSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    output_dir: str = "runs"

    def validate(self) -> "RunConfig":
        self.encoder.encoder_config()
        self.encoder.template()
        self.loss.loss_config()
        self.optimizer.validate()
        self.data.validate()
        self.protocol.validate()
        from .synthdata import FAMILIES

        for family in [self.data.train_family] + list(self.protocol.test_families):
            if family not in FAMILIES or family == "NATURAL":
                raise ConfigError(f"unknown fake family {family!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "encoder": EncoderSection,
    "loss": LossSection,
    "optimizer": OptimizerSection,
    "data": DataSection,
    "protocol": ProtocolSection,
}


def _build_section(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected an object")
    allowed = set(cls.__dataclass_fields__)
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}; allowed: {sorted(allowed)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("top level must be an object")
    allowed = set(_SECTIONS) | {"output_dir"}
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}; allowed: {sorted(allowed)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in payload:
            kwargs[name] = _build_section(cls, payload[name], name)
    if "output_dir" in payload:
        if not isinstance(payload["output_dir"], str):
            raise ConfigError("output_dir must be a string")
        kwargs["output_dir"] = payload["output_dir"]
    config = RunConfig(**kwargs)
    try:
        config.validate()
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc
    return config


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dumps_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"

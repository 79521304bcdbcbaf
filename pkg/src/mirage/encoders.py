"""Toy dual-encoder: text and vision transformers with deep prompt tuning.

Both towers are frozen after seeded random init. Learnable per-layer text
prompts are injected for the first ``prompt_depth`` layers and coupled into
vision prompts through a per-layer mapping; past that depth the sequence
(including the final prompt slots) propagates unchanged in structure.

Token layout: text rows are [prompts, words], vision rows are
[class, patches, prompts]; the text readout is the last word row, the vision
readout is the class row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .objective import FAKE, REAL
from .seeding import child_rng

__all__ = [
    "DEFAULT_TEMPLATE",
    "DualEncoder",
    "EncoderConfig",
    "PromptTemplate",
    "Vocabulary",
    "build_backbone",
    "build_model",
    "map_prompts",
    "predict_from_embeddings",
    "render_prompt",
]


@dataclass(frozen=True)
class PromptTemplate:
    prefix: tuple = ("a", "photo", "of", "a")
    class_words: tuple = (("real", "real"), ("fake", "fake"))  # (label name, word)
    suffix: tuple = ()

    def word_for(self, label: int) -> str:
        return dict(self.class_words)["real" if label == REAL else "fake"]

    def render(self, label: int) -> list:
        return list(self.prefix) + [self.word_for(label)] + list(self.suffix)

    def all_words(self) -> list:
        words = list(self.prefix) + list(self.suffix)
        words.extend(w for _, w in self.class_words)
        return words


DEFAULT_TEMPLATE = PromptTemplate()


class Vocabulary:
    """Bijective word/id map over template words plus a pad token."""

    PAD = "<pad>"

    def __init__(self, words):
        ordered = [self.PAD] + sorted(set(words))
        self.tokens = ordered
        self.ids = {w: i for i, w in enumerate(ordered)}
        self.pad_id = 0

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_templates(cls, templates) -> "Vocabulary":
        words = []
        for t in templates:
            words.extend(t.all_words())
        return cls(words)


def render_prompt(label: int, vocab: Vocabulary, template: PromptTemplate = DEFAULT_TEMPLATE):
    """Token ids for one class prompt; both classes render to the same length."""
    if label not in (REAL, FAKE):
        raise ValueError(f"unknown label {label!r}")
    words = template.render(label)
    missing = [w for w in words if w not in vocab.ids]
    if missing:
        raise ValueError(f"words not in vocabulary: {missing}")
    return np.array([vocab.ids[w] for w in words], dtype=np.int64)


@dataclass
class EncoderConfig:
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
    vocab_size: int = 0  # filled from the vocabulary at build time

    def __post_init__(self):
        if self.prompt_depth > min(self.text_depth, self.image_depth):
            raise ValueError(
                f"prompt_depth {self.prompt_depth} exceeds tower depth "
                f"min({self.text_depth}, {self.image_depth})"
            )
        if self.image_side % self.patch_size != 0:
            raise ValueError(f"image_side {self.image_side} not divisible by patch {self.patch_size}")
        if self.embed_dim % self.head_count != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.head_count}")
        if self.prompt_depth < 0 or self.prompt_len < 0:
            raise ValueError("prompt_depth and prompt_len must be >= 0")

    @property
    def patch_count(self) -> int:
        return (self.image_side // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def mlp_dim(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)


def _layer_names(tower: str, i: int):
    base = f"backbone.{tower}.layer{i}"
    return {
        "ln1_gain": f"{base}.ln1_gain",
        "ln1_bias": f"{base}.ln1_bias",
        "wq": f"{base}.wq",
        "bq": f"{base}.bq",
        "wk": f"{base}.wk",
        "bk": f"{base}.bk",
        "wv": f"{base}.wv",
        "bv": f"{base}.bv",
        "wo": f"{base}.wo",
        "bo": f"{base}.bo",
        "ln2_gain": f"{base}.ln2_gain",
        "ln2_bias": f"{base}.ln2_bias",
        "w1": f"{base}.w1",
        "b1": f"{base}.b1",
        "w2": f"{base}.w2",
        "b2": f"{base}.b2",
    }


def build_backbone(
    config: EncoderConfig, vocab: Vocabulary, seed: int, max_text_len: int, dtype=np.float32
) -> dict:
    """Seeded random weights, all untracked (frozen)."""
    d = config.embed_dim
    rng = child_rng(seed, "backbone")

    def w(shape, std=0.02):
        return Tensor(rng.normal(0.0, std, size=shape).astype(dtype))

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=dtype))

    weights = {
        "backbone.text.word_embed": w((len(vocab), d)),
        "backbone.text.pos": w((max_text_len, d)),
        "backbone.text.proj": w((d, config.out_dim), std=1.0 / math.sqrt(d)),
        "backbone.image.patch_proj": w((config.patch_dim, d), std=1.0 / math.sqrt(config.patch_dim)),
        "backbone.image.patch_bias": zeros(d),
        "backbone.image.class_embed": w((1, d)),
        "backbone.image.pos": w((config.patch_count + 1, d)),
        "backbone.image.proj": w((d, config.out_dim), std=1.0 / math.sqrt(d)),
    }
    for tower, depth in (("text", config.text_depth), ("image", config.image_depth)):
        for i in range(depth):
            names = _layer_names(tower, i)
            weights[names["ln1_gain"]] = Tensor(np.ones(d, dtype=dtype))
            weights[names["ln1_bias"]] = zeros(d)
            for mat in ("wq", "wk", "wv", "wo"):
                weights[names[mat]] = w((d, d), std=1.0 / math.sqrt(d))
            for vec in ("bq", "bk", "bv", "bo"):
                weights[names[vec]] = zeros(d)
            weights[names["ln2_gain"]] = Tensor(np.ones(d, dtype=dtype))
            weights[names["ln2_bias"]] = zeros(d)
            weights[names["w1"]] = w((d, config.mlp_dim), std=1.0 / math.sqrt(d))
            weights[names["b1"]] = zeros(config.mlp_dim)
            weights[names["w2"]] = w((config.mlp_dim, d), std=1.0 / math.sqrt(config.mlp_dim))
            weights[names["b2"]] = zeros(d)
    return weights


def _attention(x: Tensor, weights: dict, names: dict, config: EncoderConfig) -> Tensor:
    n, t, d = x.shape
    heads = config.head_count
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)

    def split_heads(m):
        return ad.transpose(ad.reshape(m, (n, t, heads, dh)), (0, 2, 1, 3))

    q = split_heads(ad.matmul(x, weights[names["wq"]]) + weights[names["bq"]])
    k = split_heads(ad.matmul(x, weights[names["wk"]]) + weights[names["bk"]])
    v = split_heads(ad.matmul(x, weights[names["wv"]]) + weights[names["bv"]])
    scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * scale
    mixed = ad.matmul(ad.softmax(scores, axis=-1), v)
    merged = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (n, t, d))
    return ad.matmul(merged, weights[names["wo"]]) + weights[names["bo"]]


def _transformer_layer(x: Tensor, weights: dict, tower: str, i: int, config: EncoderConfig) -> Tensor:
    names = _layer_names(tower, i)
    h = x + _attention(
        ad.layer_norm(x, weights[names["ln1_gain"]], weights[names["ln1_bias"]]),
        weights,
        names,
        config,
    )
    normed = ad.layer_norm(h, weights[names["ln2_gain"]], weights[names["ln2_bias"]])
    mlp = ad.matmul(ad.gelu(ad.matmul(normed, weights[names["w1"]]) + weights[names["b1"]]), weights[names["w2"]]) + weights[names["b2"]]
    return h + mlp


def _tile_prompt(prompt: Tensor, n: int) -> Tensor:
    b, d = prompt.shape
    return ad.broadcast_to(ad.reshape(prompt, (1, b, d)), (n, b, d))


def map_prompts(prompts, mapping) -> list:
    """Couple text prompts into vision prompts through the per-layer mapping."""
    if len(prompts) != len(mapping):
        raise ValueError(f"depth mismatch: {len(prompts)} prompts vs {len(mapping)} mappings")
    vision = []
    for theta, m in zip(prompts, mapping):
        out = ad.matmul(theta, m["weight"]) + m["bias"]
        if "w2" in m:
            out = ad.matmul(ad.relu(out), m["w2"]) + m["b2"]
        vision.append(out)
    return vision


class DualEncoder:
    """Frozen towers plus the trainable prompt and coupling parameters."""

    def __init__(self, config, vocab, template, backbone, prompts, mapping, multimodal=True):
        self.config = config
        self.vocab = vocab
        self.template = template
        self.backbone = backbone
        self.prompts = prompts
        self.mapping = mapping
        self.multimodal = multimodal

    # -- parameter plumbing ------------------------------------------------

    def trainable_params(self) -> dict:
        params = {}
        for i, p in enumerate(self.prompts):
            params[f"prompts.{i}"] = p
        if self.multimodal:
            for i, m in enumerate(self.mapping):
                params[f"mapping.{i}.weight"] = m["weight"]
                params[f"mapping.{i}.bias"] = m["bias"]
                if "w2" in m:
                    params[f"mapping.{i}.w2"] = m["w2"]
                    params[f"mapping.{i}.b2"] = m["b2"]
        return params

    def rebind(self, params: dict) -> None:
        for i in range(len(self.prompts)):
            self.prompts[i] = params[f"prompts.{i}"]
        if self.multimodal:
            for i, m in enumerate(self.mapping):
                m["weight"] = params[f"mapping.{i}.weight"]
                m["bias"] = params[f"mapping.{i}.bias"]
                if "w2" in m:
                    m["w2"] = params[f"mapping.{i}.w2"]
                    m["b2"] = params[f"mapping.{i}.b2"]

    def named_tensors(self) -> dict:
        out = dict(self.backbone)
        out.update(self.trainable_params())
        return out

    # -- forward passes ----------------------------------------------------

    def encode_text(self, token_batch: np.ndarray) -> Tensor:
        """(n, N) token ids -> (n, out_dim) unit-norm embeddings."""
        tokens = np.atleast_2d(np.asarray(token_batch, dtype=np.int64))
        n, length = tokens.shape
        if length == 0:
            raise ValueError("empty token sequence")
        cfg = self.config
        depth_prompted = self._effective_prompt_depth()
        if depth_prompted and len(self.prompts) != cfg.prompt_depth:
            raise ValueError(
                f"prompt stack depth {len(self.prompts)} != configured {cfg.prompt_depth}"
            )
        table = self.backbone["backbone.text.word_embed"].data
        pos = self.backbone["backbone.text.pos"].data[:length]
        x = ad.constant((table[tokens] + pos).astype(table.dtype))
        words = x
        full = x
        for i in range(cfg.text_depth):
            if i < depth_prompted:
                full = ad.concat([_tile_prompt(self.prompts[i], n), words], axis=1)
            full = _transformer_layer(full, self.backbone, "text", i, cfg)
            if i < depth_prompted:
                words = ad.slice_axis(full, 1, full.shape[1] - length, full.shape[1])
        readout = ad.reshape(
            ad.slice_axis(full, 1, full.shape[1] - 1, full.shape[1]), (n, cfg.embed_dim)
        )
        return ad.l2_normalize(ad.matmul(readout, self.backbone["backbone.text.proj"]), axis=-1)

    def _effective_prompt_depth(self) -> int:
        if self.config.prompt_len == 0 or self.config.prompt_depth == 0:
            return 0
        return self.config.prompt_depth

    def vision_prompts(self) -> list:
        if not self.multimodal or self._effective_prompt_depth() == 0:
            return []
        return map_prompts(self.prompts, self.mapping)

    def encode_image(self, images: np.ndarray, vision_prompts=None) -> Tensor:
        """(n, H, W, C) pixels in [0,1] -> (n, out_dim) unit-norm embeddings."""
        cfg = self.config
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 3:
            images = images[None]
        n, h, w, c = images.shape
        if (h, w, c) != (cfg.image_side, cfg.image_side, cfg.channels):
            raise ValueError(
                f"image dims {(h, w, c)} do not match config "
                f"{(cfg.image_side, cfg.image_side, cfg.channels)}"
            )
        if vision_prompts is None:
            vision_prompts = self.vision_prompts()
        depth_prompted = len(vision_prompts)
        if depth_prompted and depth_prompted != cfg.prompt_depth:
            raise ValueError(
                f"vision prompt depth {depth_prompted} != configured {cfg.prompt_depth}"
            )

        patches = self._patchify(images)
        e0 = ad.matmul(ad.constant(patches), self.backbone["backbone.image.patch_proj"])
        e0 = e0 + self.backbone["backbone.image.patch_bias"]
        cls = _tile_prompt(self.backbone["backbone.image.class_embed"], n)
        seq = ad.concat([cls, e0], axis=1)
        seq = seq + ad.constant(self.backbone["backbone.image.pos"].data[None, :, :])

        body = seq  # class embedding + patches; prompts are appended per layer
        full = seq
        keep = cfg.patch_count + 1
        for i in range(cfg.image_depth):
            if i < depth_prompted:
                full = ad.concat([body, _tile_prompt(vision_prompts[i], n)], axis=1)
            full = _transformer_layer(full, self.backbone, "image", i, cfg)
            if i < depth_prompted:
                body = ad.slice_axis(full, 1, 0, keep)
        readout = ad.reshape(ad.slice_axis(full, 1, 0, 1), (n, cfg.embed_dim))
        return ad.l2_normalize(ad.matmul(readout, self.backbone["backbone.image.proj"]), axis=-1)

    def _patchify(self, images: np.ndarray) -> np.ndarray:
        cfg = self.config
        n = images.shape[0]
        g = cfg.image_side // cfg.patch_size
        p = cfg.patch_size
        x = images.reshape(n, g, p, g, p, cfg.channels)
        x = x.transpose(0, 1, 3, 2, 4, 5).reshape(n, cfg.patch_count, cfg.patch_dim)
        dtype = self.backbone["backbone.image.patch_proj"].data.dtype
        return ((x - 0.5) * 2.0).astype(dtype)  # center pixels at 0

    def anchors(self):
        """Both class anchors from the current prompts, as a (2, out_dim) pass."""
        tokens = np.stack(
            [
                render_prompt(REAL, self.vocab, self.template),
                render_prompt(FAKE, self.vocab, self.template),
            ]
        )
        both = self.encode_text(tokens)
        d_out = self.config.out_dim
        e_real = ad.reshape(ad.slice_axis(both, 0, 0, 1), (d_out,))
        e_fake = ad.reshape(ad.slice_axis(both, 0, 1, 2), (d_out,))
        return e_real, e_fake

    def predict(self, images: np.ndarray, tau: float = 0.07):
        """Labels by highest anchor similarity; score is the Fake softmax mass."""
        e_real, e_fake = self.anchors()
        h = self.encode_image(images).data
        return predict_from_embeddings(h, e_real.data, e_fake.data, tau)


def predict_from_embeddings(h: np.ndarray, e_real: np.ndarray, e_fake: np.ndarray, tau: float):
    """Argmax over anchor similarities plus the Fake-class softmax score.

    Exact similarity ties classify Real (conservative, documented constant).
    """
    h = np.atleast_2d(h)
    s_real = h @ e_real
    s_fake = h @ e_fake
    labels = np.where(s_fake > s_real, FAKE, REAL)
    z = np.stack([s_real, s_fake], axis=1) / tau
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    scores = ez[:, 1] / ez.sum(axis=1)
    return labels, scores


def build_model(
    config: EncoderConfig,
    vocab: Vocabulary,
    template: PromptTemplate,
    seed: int,
    multimodal: bool = True,
    mapping_kind: str = "linear",
    prompt_init: str = "random",
    dtype=np.float32,
) -> DualEncoder:
    max_text_len = len(template.render(REAL))
    if len(template.render(FAKE)) != max_text_len:
        raise ValueError("template renders different lengths per class")
    config.vocab_size = len(vocab)
    backbone = build_backbone(config, vocab, seed, max_text_len, dtype=dtype)

    d = config.embed_dim
    prompts = []
    rng = child_rng(seed, "prompts")
    for i in range(config.prompt_depth):
        if prompt_init == "template":
            ids = render_prompt(REAL, vocab, template)[: config.prompt_len]
            base = backbone["backbone.text.word_embed"].data[ids]
            if base.shape[0] < config.prompt_len:
                reps = int(np.ceil(config.prompt_len / max(1, base.shape[0])))
                base = np.tile(base, (reps, 1))[: config.prompt_len]
            prompts.append(Tensor(base.astype(dtype), grad_tracked=True))
        else:
            prompts.append(
                Tensor(
                    rng.normal(0.0, 0.02, size=(config.prompt_len, d)).astype(dtype),
                    grad_tracked=True,
                )
            )

    mapping = []
    if multimodal:
        for i in range(config.prompt_depth):
            entry = {
                "weight": Tensor(np.eye(d, dtype=dtype), grad_tracked=True),
                "bias": Tensor(np.zeros(d, dtype=dtype), grad_tracked=True),
            }
            if mapping_kind == "mlp2":
                entry["w2"] = Tensor(np.eye(d, dtype=dtype), grad_tracked=True)
                entry["b2"] = Tensor(np.zeros(d, dtype=dtype), grad_tracked=True)
            elif mapping_kind != "linear":
                raise ValueError(f"unknown mapping kind {mapping_kind!r}")
            mapping.append(entry)

    return DualEncoder(config, vocab, template, backbone, prompts, mapping, multimodal=multimodal)

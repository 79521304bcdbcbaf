"""Random instance builders that exercise every registered primitive.

Each builder returns (fn, point): a scalar-valued function of one packed
float64 tensor plus the point to probe. Packing lets grad_check's
single-tensor signature cover multi-input primitives.
"""

from __future__ import annotations

import numpy as np

from mirage import autodiff as ad


def _split(packed, shapes):
    parts = []
    offset = 0
    for shape in shapes:
        n = int(np.prod(shape))
        flat = ad.slice_axis(packed, 0, offset, offset + n)
        parts.append(ad.reshape(flat, shape))
        offset += n
    return parts


def _case(rng, shapes, build, low=-1.0, high=1.0):
    arrays = [rng.uniform(low, high, size=shape) for shape in shapes]
    point = np.concatenate([a.reshape(-1) for a in arrays])
    weights = None

    def fn(packed):
        nonlocal weights
        parts = _split(packed, shapes)
        out = build(*parts)
        if weights is None:
            weights = rng.standard_normal(out.shape)
        return ad.sum_(out * ad.constant(weights.astype(np.float64)))

    return fn, point


def _away_from_zero(rng, shape, margin=0.1):
    a = rng.uniform(margin, 1.0, size=shape)
    return a * rng.choice([-1.0, 1.0], size=shape)


def make_case(name: str, rng):
    d1 = int(rng.integers(2, 5))
    d2 = int(rng.integers(2, 5))
    d3 = int(rng.integers(2, 5))
    if name == "add":
        return _case(rng, [(d1, d2), (d1, d2)], ad.add)
    if name == "sub":
        return _case(rng, [(d1, d2), (d1, d2)], ad.sub)
    if name == "mul":
        return _case(rng, [(d1, d2), (d1, d2)], ad.mul)
    if name == "div":
        num = rng.uniform(-1, 1, size=(d1, d2))
        den = _away_from_zero(rng, (d1, d2), margin=0.3)
        point = np.concatenate([num.reshape(-1), den.reshape(-1)])
        w = rng.standard_normal((d1, d2))

        def fn(packed):
            a, b = _split(packed, [(d1, d2), (d1, d2)])
            return ad.sum_(ad.div(a, b) * ad.constant(w))

        return fn, point
    if name == "neg":
        return _case(rng, [(d1, d2)], ad.neg)
    if name == "exp":
        return _case(rng, [(d1, d2)], ad.exp)
    if name == "log":
        return _case(rng, [(d1, d2)], ad.log, low=0.3, high=2.0)
    if name == "relu":
        point = _away_from_zero(rng, (d1 * d2,), margin=0.05)
        w = rng.standard_normal((d1 * d2,))

        def fn(packed):
            return ad.sum_(ad.relu(packed) * ad.constant(w))

        return fn, point
    if name == "gelu":
        return _case(rng, [(d1, d2)], ad.gelu)
    if name == "matmul":
        return _case(rng, [(d1, d2), (d2, d3)], ad.matmul)
    if name == "transpose":
        return _case(rng, [(d1, d2, d3)], lambda a: ad.transpose(a, (2, 0, 1)))
    if name == "reshape":
        return _case(rng, [(d1, d2)], lambda a: ad.reshape(a, (d2 * d1,)))
    if name == "broadcast_to":
        return _case(rng, [(1, d2)], lambda a: ad.broadcast_to(a, (d1, d2)))
    if name == "concat":
        return _case(rng, [(d1, d2), (d3, d2)], lambda a, b: ad.concat([a, b], axis=0))
    if name == "slice_axis":
        return _case(rng, [(d1 + 2, d2)], lambda a: ad.slice_axis(a, 0, 1, d1 + 1))
    if name == "sum":
        return _case(rng, [(d1, d2)], lambda a: ad.sum_(a, axis=1))
    if name == "mean":
        return _case(rng, [(d1, d2)], lambda a: ad.mean(a, axis=0))
    if name == "softmax":
        return _case(rng, [(d1, d2)], lambda a: ad.softmax(a, axis=-1))
    if name == "log_softmax":
        return _case(rng, [(d1, d2)], lambda a: ad.log_softmax(a, axis=-1))
    if name == "layer_norm":
        x = rng.uniform(-1, 1, size=(d1, d2))
        gain = rng.uniform(0.5, 1.5, size=(d2,))
        bias = rng.uniform(-0.5, 0.5, size=(d2,))
        point = np.concatenate([x.reshape(-1), gain, bias])
        w = rng.standard_normal((d1, d2))

        def fn(packed):
            xs, g, b = _split(packed, [(d1, d2), (d2,), (d2,)])
            return ad.sum_(ad.layer_norm(xs, g, b) * ad.constant(w))

        return fn, point
    if name == "l2_normalize":
        x = _away_from_zero(rng, (d1, d2), margin=0.2)
        w = rng.standard_normal((d1, d2))

        def fn(packed):
            xs = ad.reshape(packed, (d1, d2))
            return ad.sum_(ad.l2_normalize(xs, axis=-1) * ad.constant(w))

        return fn, x.reshape(-1)
    if name == "cosine_similarity":
        a = _away_from_zero(rng, (d1, d2), margin=0.2)
        b = _away_from_zero(rng, (d1, d2), margin=0.2)
        point = np.concatenate([a.reshape(-1), b.reshape(-1)])
        w = rng.standard_normal((d1,))

        def fn(packed):
            xs, ys = _split(packed, [(d1, d2), (d1, d2)])
            return ad.sum_(ad.cosine_similarity(xs, ys, axis=-1) * ad.constant(w))

        return fn, point
    raise KeyError(f"no case builder for primitive '{name}'")


def composite_cases(rng):
    """Three deeper graphs: an MLP block, attention-like mixing, and a loss."""
    d = 4

    def mlp(packed):
        x, w1, b1, w2, b2 = _split(packed, [(3, d), (d, d), (d,), (d, d), (d,)])
        h = ad.gelu(ad.matmul(x, w1) + b1)
        out = ad.layer_norm(ad.matmul(h, w2) + b2, ad.constant(np.ones(d)), ad.constant(np.zeros(d)))
        return ad.sum_(out * out)

    p_mlp = rng.uniform(-0.8, 0.8, size=3 * d + d * d + d + d * d + d)

    def attention(packed):
        q, k, v = _split(packed, [(3, d), (3, d), (3, d)])
        scores = ad.matmul(q, ad.transpose(k, (1, 0))) * (1.0 / np.sqrt(d))
        mixed = ad.matmul(ad.softmax(scores, axis=-1), v)
        return ad.mean(mixed * mixed)

    p_attn = rng.uniform(-1, 1, size=3 * 3 * d)

    onehot = np.zeros((4, 5))
    onehot[np.arange(4), rng.integers(0, 5, size=4)] = 1.0

    def softmax_xent(packed):
        logits = ad.reshape(packed, (4, 5))
        logp = ad.log_softmax(logits, axis=-1)
        return ad.neg(ad.mean(ad.sum_(logp * ad.constant(onehot), axis=1)))

    p_xent = rng.uniform(-2, 2, size=20)

    return [("mlp_block", mlp, p_mlp), ("attention", attention, p_attn), ("softmax_xent", softmax_xent, p_xent)]

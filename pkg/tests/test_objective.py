import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirage import autodiff as ad
from mirage.autodiff import Tape, Tensor, backward, grad_check
from mirage.objective import (
    FAKE,
    REAL,
    LossConfig,
    MemoryBank,
    bank_update,
    build_embedding_set,
    cross_entropy_loss,
    discriminative_loss,
    discriminative_loss_with_bank,
    per_sample_cross_entropy,
    total_loss,
)

from oracles import (
    discriminative_loss_from_sim,
    naive_bank_loss,
    naive_cross_entropy,
    naive_discriminative_loss,
)


def random_unit(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_set(rng, batch, d, labels=None):
    anchors = random_unit(rng, 2, d)
    h = random_unit(rng, batch, d)
    if labels is None:
        labels = rng.integers(0, 2, size=batch)
        labels[0] = FAKE  # at least one fake keeps pool nondegenerate
    e_real = Tensor(anchors[0], grad_tracked=True)
    e_fake = Tensor(anchors[1], grad_tracked=True)
    batch_t = Tensor(h, grad_tracked=True)
    return build_embedding_set((e_real, e_fake), batch_t, labels), anchors, h, labels


def test_index_sets_single_fake():
    rng = np.random.default_rng(0)
    es, *_ = make_set(rng, 1, 8, labels=np.array([FAKE]))
    assert es.positives(0) == [1]
    assert es.positives(1) == [0]
    assert es.positives(-1) == []
    for i in es.indices():
        assert len(es.others(i)) == es.batch_size + 1


def test_index_sets_one_per_class():
    rng = np.random.default_rng(1)
    es, *_ = make_set(rng, 2, 8, labels=np.array([FAKE, REAL]))
    for i in es.indices():
        assert len(es.positives(i)) == 1


def test_build_rejects_bad_inputs():
    rng = np.random.default_rng(2)
    anchors = random_unit(rng, 2, 4)
    with pytest.raises(ValueError, match="unit-norm"):
        build_embedding_set(
            (Tensor(anchors[0]), Tensor(anchors[1])),
            Tensor(np.ones((2, 4))),
            [FAKE, REAL],
        )
    with pytest.raises(ValueError):
        build_embedding_set(
            (Tensor(anchors[0]), Tensor(anchors[1])), Tensor(np.zeros((0, 4))), []
        )


def test_orthonormal_case_two_ln_two():
    e_real = Tensor(np.array([1.0, 0, 0]), grad_tracked=True)
    e_fake = Tensor(np.array([0, 1.0, 0]), grad_tracked=True)
    h1 = Tensor(np.array([[0, 0, 1.0]]), grad_tracked=True)
    es = build_embedding_set((e_real, e_fake), h1, [FAKE])
    loss = discriminative_loss(es, tau=1.0)
    assert loss.item() == pytest.approx(2 * math.log(2), abs=1e-6)


def test_identical_embeddings_uniform_softmax():
    v = np.array([1.0, 0.0])
    e_real = Tensor(v)
    e_fake = Tensor(v)
    h = Tensor(np.tile(v, (3, 1)))
    es = build_embedding_set((e_real, e_fake), h, [FAKE, FAKE, FAKE])
    k = 5
    loss = discriminative_loss(es, tau=0.5)
    assert loss.item() == pytest.approx((k - 1) * math.log(k - 1), rel=1e-5)


def test_matches_naive_reference():
    rng = np.random.default_rng(3)
    for trial in range(40):
        batch = int(rng.integers(2, 9))
        d = int(rng.integers(3, 17))
        es, anchors, h, labels = make_set(rng, batch, d)
        pool = np.vstack([anchors, h])
        pool_labels = [REAL, FAKE] + list(labels)
        tau = float(rng.uniform(0.05, 1.5))
        expected = naive_discriminative_loss(pool, pool_labels, tau)
        got = discriminative_loss(es, tau).item()
        assert got == pytest.approx(expected, abs=1e-6)
        assert got >= 0.0


def test_empty_bank_reduces_exactly():
    rng = np.random.default_rng(4)
    es, *_ = make_set(rng, 4, 8)
    bank = MemoryBank(capacity=16)
    a = discriminative_loss(es, 0.07).item()
    b = discriminative_loss_with_bank(es, bank, 0.07).item()
    assert a == b


def test_bank_doubled_pool_matches_naive():
    rng = np.random.default_rng(5)
    for _ in range(10):
        batch = int(rng.integers(2, 6))
        d = int(rng.integers(3, 10))
        es, anchors, h, labels = make_set(rng, batch, d)
        bank = MemoryBank(capacity=32)
        bank_update(bank, h, labels)
        pool = np.vstack([anchors, h])
        pool_labels = [REAL, FAKE] + list(labels)
        tau = 0.3
        expected = naive_bank_loss(pool, pool_labels, h, list(labels), tau)
        got = discriminative_loss_with_bank(es, bank, tau).item()
        assert got == pytest.approx(expected, abs=1e-6)


def test_bank_entries_receive_no_gradient():
    rng = np.random.default_rng(6)
    with Tape() as tape:
        es, anchors, h, labels = make_set(rng, 3, 6)
        stored = Tensor(random_unit(rng, 4, 6), grad_tracked=True)
        bank = MemoryBank(capacity=8)
        bank_update(bank, stored.detach(), [REAL, FAKE, REAL, FAKE])
        loss = discriminative_loss_with_bank(es, bank, 0.1)
    grads = backward(tape, loss)
    assert stored not in grads
    assert any(g is not None for g in grads.values())


def test_fifo_scalar_pushes():
    bank = MemoryBank(capacity=2)
    for name, vec in (("a", [1.0]), ("b", [2.0]), ("c", [3.0])):
        bank_update(bank, np.array([vec]), [FAKE])
    vecs, _ = bank.stacked()
    np.testing.assert_allclose(vecs.reshape(-1), [2.0, 3.0])


def test_fifo_across_batches():
    bank = MemoryBank(capacity=3)
    bank_update(bank, np.array([[1.0], [2.0]]), [REAL, REAL])
    bank_update(bank, np.array([[3.0], [4.0]]), [FAKE, FAKE])
    vecs, labels = bank.stacked()
    np.testing.assert_allclose(vecs.reshape(-1), [2.0, 3.0, 4.0])
    assert labels.tolist() == [REAL, FAKE, FAKE]


def test_fifo_overflow_single_batch():
    bank = MemoryBank(capacity=1)
    bank_update(bank, np.array([[1.0], [2.0], [3.0]]), [REAL, FAKE, REAL])
    vecs, labels = bank.stacked()
    np.testing.assert_allclose(vecs.reshape(-1), [3.0])
    assert labels.tolist() == [REAL]


@settings(max_examples=60, deadline=None)
@given(
    capacity=st.integers(min_value=1, max_value=8),
    batches=st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=6),
)
def test_fifo_property(capacity, batches):
    bank = MemoryBank(capacity=capacity)
    pushed = []
    counter = 0
    for size in batches:
        vals = [[float(counter + i)] for i in range(size)]
        counter += size
        bank_update(bank, np.array(vals), [FAKE] * size)
        pushed.extend(v[0] for v in vals)
        assert len(bank) <= capacity
        vecs, _ = bank.stacked()
        np.testing.assert_allclose(vecs.reshape(-1), pushed[-min(capacity, len(pushed)) :])


def test_cross_entropy_analytic():
    e_real = Tensor(np.array([1.0, 0.0]))
    e_fake = Tensor(np.array([0.0, 1.0]))
    h = Tensor(np.array([[0.0, 1.0]]))
    loss = cross_entropy_loss(h, [FAKE], (e_real, e_fake), tau=1.0)
    assert loss.item() == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-6)
    mid = Tensor(np.array([[1.0, 1.0]]) / math.sqrt(2))
    loss = cross_entropy_loss(mid, [REAL], (e_real, e_fake), tau=1.0)
    assert loss.item() == pytest.approx(math.log(2), abs=1e-6)


def test_cross_entropy_matches_naive():
    rng = np.random.default_rng(7)
    for _ in range(40):
        batch = int(rng.integers(1, 9))
        d = int(rng.integers(3, 17))
        anchors = random_unit(rng, 2, d)
        h = random_unit(rng, batch, d)
        labels = rng.integers(0, 2, size=batch)
        tau = float(rng.uniform(0.05, 1.5))
        expected = naive_cross_entropy(h, labels, anchors[0], anchors[1], tau)
        got = cross_entropy_loss(
            Tensor(h), labels, (Tensor(anchors[0]), Tensor(anchors[1])), tau
        ).item()
        assert got == pytest.approx(expected, abs=1e-6)
        per = per_sample_cross_entropy(h, labels, anchors[0], anchors[1], tau)
        assert per.mean() == pytest.approx(expected, abs=1e-6)


def test_total_loss():
    assert total_loss(Tensor(1.0), Tensor(2.0), 0.1).item() == pytest.approx(1.2)
    assert total_loss(Tensor(3.0), Tensor(99.0), 0.0).item() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        total_loss(Tensor(float("nan")), Tensor(1.0), 0.1)
    with pytest.raises(ValueError):
        total_loss(Tensor(1.0), Tensor(1.0), -0.5)


def test_temperature_validation():
    rng = np.random.default_rng(8)
    es, *_ = make_set(rng, 2, 4)
    with pytest.raises(ValueError):
        discriminative_loss(es, tau=0.0)
    with pytest.raises(ValueError):
        cross_entropy_loss(es.embeddings, [REAL, FAKE, FAKE, FAKE], (Tensor(np.ones(4)), Tensor(np.ones(4))), tau=-1)
    with pytest.raises(ValueError):
        LossConfig(temperature=-0.1)


def test_separation_pressure():
    # raising one cross-class similarity (held symmetric) always raises the loss
    rng = np.random.default_rng(9)
    for _ in range(30):
        batch = int(rng.integers(2, 7))
        d = int(rng.integers(4, 12))
        es, anchors, h, labels = make_set(rng, batch, d)
        pool = np.vstack([anchors, h])
        pool_labels = np.array([REAL, FAKE] + list(labels))
        sim = pool @ pool.T
        base = discriminative_loss_from_sim(sim, pool_labels, 0.2)
        neg_pairs = [
            (i, j)
            for i in range(len(pool_labels))
            for j in range(i + 1, len(pool_labels))
            if pool_labels[i] != pool_labels[j]
        ]
        i, j = neg_pairs[rng.integers(0, len(neg_pairs))]
        bumped = sim.copy()
        bumped[i, j] += 0.05
        bumped[j, i] += 0.05
        assert discriminative_loss_from_sim(bumped, pool_labels, 0.2) > base


def test_attraction():
    # Strict decrease holds for the least-similar positive: its softmax mass
    # is provably below 1/|P(i)|, so raising it cannot crowd the others out.
    rng = np.random.default_rng(10)
    for _ in range(30):
        batch = int(rng.integers(2, 7))
        es, anchors, h, labels = make_set(rng, batch, 8)
        pool = np.vstack([anchors, h])
        pool_labels = np.array([REAL, FAKE] + list(labels))
        sim = pool @ pool.T
        anchored = [i for i in range(len(pool_labels)) if
                    any(pool_labels[p] == pool_labels[i] for p in range(len(pool_labels)) if p != i)]
        i = anchored[rng.integers(0, len(anchored))]
        positives = [p for p in range(len(pool_labels)) if p != i and pool_labels[p] == pool_labels[i]]
        p = min(positives, key=lambda q: sim[i, q])

        def term(s, i=i, positives=positives):
            k = len(pool_labels)
            others = [j for j in range(k) if j != i]
            denom = sum(math.exp(s[i, j] / 0.2) for j in others)
            return -sum(
                math.log(math.exp(s[i, q] / 0.2) / denom) for q in positives
            ) / len(positives)

        bumped = sim.copy()
        bumped[i, p] += 0.05
        assert term(bumped) < term(sim)


def test_permutation_invariance():
    rng = np.random.default_rng(11)
    for _ in range(10):
        batch = int(rng.integers(2, 8))
        d = 8
        anchors = random_unit(rng, 2, d)
        h = random_unit(rng, batch, d)
        labels = rng.integers(0, 2, size=batch)
        perm = rng.permutation(batch)
        es1 = build_embedding_set((Tensor(anchors[0]), Tensor(anchors[1])), Tensor(h), labels)
        es2 = build_embedding_set(
            (Tensor(anchors[0]), Tensor(anchors[1])), Tensor(h[perm]), labels[perm]
        )
        bank = MemoryBank(capacity=8)
        bank_update(bank, random_unit(rng, 5, d), [REAL, FAKE, REAL, FAKE, FAKE])
        assert discriminative_loss(es1, 0.1).item() == pytest.approx(
            discriminative_loss(es2, 0.1).item(), abs=1e-6
        )
        assert discriminative_loss_with_bank(es1, bank, 0.1).item() == pytest.approx(
            discriminative_loss_with_bank(es2, bank, 0.1).item(), abs=1e-6
        )
        assert cross_entropy_loss(
            Tensor(h), labels, (Tensor(anchors[0]), Tensor(anchors[1])), 0.1
        ).item() == pytest.approx(
            cross_entropy_loss(
                Tensor(h[perm]), labels[perm], (Tensor(anchors[0]), Tensor(anchors[1])), 0.1
            ).item(),
            abs=1e-6,
        )


def test_total_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    batch, d = 3, 5
    labels = np.array([FAKE, REAL, FAKE])
    raw = rng.standard_normal((batch + 2) * d)

    def objective(flat):
        rows = ad.l2_normalize(ad.reshape(flat, (batch + 2, d)), axis=-1)
        e_real = ad.reshape(ad.slice_axis(rows, 0, 0, 1), (d,))
        e_fake = ad.reshape(ad.slice_axis(rows, 0, 1, 2), (d,))
        h = ad.slice_axis(rows, 0, 2, batch + 2)
        es = build_embedding_set((e_real, e_fake), h, labels)
        ce = cross_entropy_loss(h, labels, (e_real, e_fake), tau=0.5)
        dis = discriminative_loss(es, tau=0.5)
        return total_loss(ce, dis, alpha=0.1)

    err = grad_check(objective, Tensor(raw.astype(np.float64)), step=1e-5)
    assert err < 1e-6


def test_normalize_flag():
    rng = np.random.default_rng(13)
    es, *_ = make_set(rng, 4, 8)
    raw = discriminative_loss(es, 0.1, normalize=False).item()
    normed = discriminative_loss(es, 0.1, normalize=True).item()
    active = sum(1 for i in es.indices() if es.positives(i))
    assert normed == pytest.approx(raw / active, rel=1e-6)

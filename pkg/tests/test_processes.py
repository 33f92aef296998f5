import math

import numpy as np
import pytest

from qdimred.errors import StructuralError
from qdimred.imps import finite_qsample
from qdimred.processes import (DysonSpec, UnifilarModel, WalkSpec, coin, cyclic_walk_model,
                               dyson_ising_model, iid_model, qsample_imps, sample_sequence,
                               spin_word)


@pytest.fixture
def golden_mean():
    return UnifilarModel(np.array([[0.5, 0.5], [1.0, 0.0]]), np.array([[0, 1], [0, -1]]),
                         ("0", "1"))


def test_model_validation():
    with pytest.raises(StructuralError):
        UnifilarModel(np.array([[0.5, 0.4]]), np.array([[0, 0]]), ("0", "1"))
    with pytest.raises(StructuralError):
        UnifilarModel(np.array([[0.5, 0.5]]), np.array([[0, -1]]), ("0", "1"))


def test_coin_qsample():
    a = qsample_imps(coin(0.3))
    assert a["0"][0, 0] == pytest.approx(math.sqrt(0.3))
    assert a["1"][0, 0] == pytest.approx(math.sqrt(0.7))


def test_golden_mean_qsample(golden_mean):
    a = qsample_imps(golden_mean)
    assert np.allclose(a["0"], [[math.sqrt(0.5), 1.0], [0.0, 0.0]])
    assert np.allclose(a["1"], [[0.0, 0.0], [math.sqrt(0.5), 0.0]])


@pytest.mark.parametrize("make", [
    lambda: coin(0.3),
    lambda: iid_model([0.2, 0.5, 0.3]),
    lambda: UnifilarModel(np.array([[0.5, 0.5], [1.0, 0.0]]), np.array([[0, 1], [0, -1]]), ("0", "1")),
    lambda: dyson_ising_model(DysonSpec(2, 1.5)),
    lambda: cyclic_walk_model(WalkSpec(4, "normal", 0.2)),
])
def test_qsample_probabilities_match_forward_algorithm(make):
    m = make()
    probs = finite_qsample(qsample_imps(m), 4).probabilities
    assert np.allclose(probs, m.sequence_probabilities(4), atol=1e-12)


def test_walk_n4_uniform_rows():
    m = cyclic_walk_model(WalkSpec(4, "uniform", 0.1))
    assert np.allclose(m.emit[0], [0.8, 0.1, 0.0, 0.1], atol=1e-14)
    for j in range(4):
        assert np.allclose(m.emit[j], np.roll(m.emit[0], j))


def test_walk_n2_full_wrap():
    m = cyclic_walk_model(WalkSpec(2, "uniform", 0.5))
    assert np.allclose(m.emit, 0.5)


@pytest.mark.parametrize("n", [4, 16, 64, 256])
def test_normal_walk_rows_normalized_and_quad_agrees(n):
    m = cyclic_walk_model(WalkSpec(n, "normal", 0.1))
    assert np.allclose(m.emit.sum(axis=1), 1.0, atol=1e-10)
    q = cyclic_walk_model(WalkSpec(n, "normal", 0.1), method="quad")
    assert np.max(np.abs(q.emit - m.emit)) < 1e-10


def test_walk_requires_power_of_two():
    with pytest.raises(StructuralError):
        WalkSpec(10, "uniform", 0.1)


def test_dyson_high_temperature_is_fair():
    m = dyson_ising_model(DysonSpec(3, 1e9))
    assert np.allclose(m.emit, 0.5, atol=1e-8)


def test_dyson_l1_flip_probability():
    m = dyson_ising_model(DysonSpec(1, 1.0))
    e = math.e
    for j in range(2):
        # symbol equal to the previous spin means "same"
        same = m.emit[j, j]
        assert same == pytest.approx(1 / (e * e + 1), abs=1e-12)
        assert 1 - same == pytest.approx(e / (e + 1 / e), abs=1e-12)


def test_dyson_l2_flip_symmetry():
    m = dyson_ising_model(DysonSpec(2, 1.3))
    n = m.n_states
    for j in range(n):
        flipped = (n - 1) ^ j
        assert np.allclose(m.emit[j], m.emit[flipped][::-1], atol=1e-12)


def test_spin_word_orders_most_recent_last():
    assert spin_word(0b01, 2)[-1] == 1


def test_sampling_examples():
    det = iid_model([1.0, 0.0])
    assert np.all(sample_sequence(det, 50, seed=1) == 0)
    s = sample_sequence(coin(0.5), 100_000, seed=42)
    assert 0.494 <= s.mean() <= 0.506
    assert np.array_equal(sample_sequence(coin(0.5), 1000, seed=3),
                          sample_sequence(coin(0.5), 1000, seed=3))


def test_model_json_round_trip(golden_mean):
    back = UnifilarModel.from_json(golden_mean.to_json())
    assert np.array_equal(back.emit, golden_mean.emit)
    assert np.array_equal(back.next, golden_mean.next)
    assert back.alphabet == golden_mean.alphabet

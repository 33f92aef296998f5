import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdimred.errors import InvalidStateError, ResourceError, StructuralError
from qdimred.imps import (SchmidtSpectrum, SiteTensor, canonicalize, finite_qsample, leading_eig,
                          memory_costs, random_imps, transfer_matrix, word_amplitude)
from qdimred.processes import DysonSpec, UnifilarModel, coin, dyson_ising_model, qsample_imps


@pytest.fixture
def golden_mean():
    return UnifilarModel(np.array([[0.5, 0.5], [1.0, 0.0]]), np.array([[0, 1], [0, -1]]),
                         ("0", "1"))


def test_coin_transfer_matrix_is_one():
    for p in (0.5, 0.3):
        e = transfer_matrix(qsample_imps(coin(p))).dense()
        assert e.shape == (1, 1)
        assert e[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_golden_mean_transfer_matches_brute_force(golden_mean):
    a = qsample_imps(golden_mean)
    brute = sum(np.kron(a.matrices[x], a.matrices[x].conj()) for x in range(2))
    assert np.allclose(transfer_matrix(a).dense(), brute, atol=1e-15)


def test_dimension_mismatch_is_structural_error():
    with pytest.raises(StructuralError):
        SiteTensor.from_mapping({"0": np.eye(2), "1": np.eye(3)})


def test_leading_eig_trivial_and_golden_mean(golden_mean):
    res = leading_eig(transfer_matrix(qsample_imps(coin(0.5))), "right")
    assert res.value == pytest.approx(1.0)
    assert np.allclose(res.vector, [[1.0]])
    e = transfer_matrix(qsample_imps(golden_mean))
    res = leading_eig(e, "left")
    assert res.value == pytest.approx(1.0, abs=1e-12)
    w, v = np.linalg.eig(e.dense().T)
    ref = v[:, np.argmax(abs(w))].reshape(2, 2)
    ref = ref / np.linalg.norm(ref)
    overlap = abs(np.vdot(ref, res.vector))
    assert overlap == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_leading_eig_matches_dense_solver(seed):
    a = random_imps(3, 2, np.random.default_rng(seed))
    e = transfer_matrix(a)
    w = np.linalg.eigvals(e.dense())
    res = leading_eig(e, "right")
    assert abs(res.value - w[np.argmax(abs(w))]) < 1e-10
    assert abs(res.value) == pytest.approx(1.0, abs=1e-10)


def test_canonicalize_coin():
    b = canonicalize(qsample_imps(coin(0.3)))
    assert b.bond_dim == 1
    assert np.allclose(b.A_l.matrices, b.A_r.matrices)
    assert np.allclose(abs(b.C), [[1.0]])
    assert np.allclose(b.spectrum.values, [1.0])


def test_canonicalize_two_state_spectrum_matches_fixed_point(golden_mean):
    b = canonicalize(qsample_imps(golden_mean))
    lam = b.spectrum.values
    assert np.count_nonzero(lam > 1e-12) == 2
    assert lam.sum() == pytest.approx(1.0, abs=1e-12)
    # dense oracle: spectrum of sqrt(V_r) V_l sqrt(V_r)
    e = transfer_matrix(qsample_imps(golden_mean)).dense()
    w, v = np.linalg.eig(e)
    vr = v[:, np.argmax(abs(w))].reshape(2, 2)
    w, v = np.linalg.eig(e.T)
    vl = v[:, np.argmax(abs(w))].reshape(2, 2)
    vr, vl = vr / np.trace(vr), vl / np.trace(vl)
    ref = np.sort(np.linalg.eigvals(vl @ vr).real)[::-1]
    assert np.allclose(lam, ref / ref.sum(), atol=1e-12)


def test_canonical_invariants_random():
    rng = np.random.default_rng(7)
    for _ in range(10):
        b = canonicalize(random_imps(int(rng.integers(2, 6)), 3, rng))
        assert max(b.completeness_errors()) <= 1e-10
        assert max(b.gauge_errors()) <= 1e-10
        lam = b.spectrum.values
        assert np.all(lam >= 0) and lam.sum() == pytest.approx(1.0, abs=1e-10)
        rho = b.rho
        s = np.linalg.eigvalsh(rho)
        s = s[s > 1e-300]
        von_neumann = -float(np.sum(s * np.log2(s)))
        assert b.spectrum.entropy() == pytest.approx(von_neumann, abs=1e-8)


def test_canonicalize_dyson_small():
    b = canonicalize(qsample_imps(dyson_ising_model(DysonSpec(2, 10.0))))
    assert b.bond_dim <= 4
    assert b.spectrum.entropy() <= 1.0


def test_canonicalize_zero_tensor_fails():
    with pytest.raises(InvalidStateError):
        canonicalize(SiteTensor(np.zeros((2, 2, 2))))


def test_memory_costs_examples():
    b = canonicalize(qsample_imps(coin(0.5)))
    assert memory_costs(b) == (pytest.approx(0.0), pytest.approx(0.0))
    assert SchmidtSpectrum(np.array([0.5, 0.5])).entropy() == pytest.approx(1.0)


def test_finite_qsample_coin_and_forbidden_word(golden_mean):
    qs = finite_qsample(qsample_imps(coin(0.5)), 2)
    assert np.allclose(np.abs(qs.scalar_amplitudes), 0.5)
    gm = finite_qsample(qsample_imps(golden_mean), 2, boundary=0)
    assert gm.scalar_amplitudes[1, 1] == 0.0
    assert gm.probabilities.sum() == pytest.approx(1.0)


def test_finite_qsample_matches_per_word_products():
    a = random_imps(3, 2, np.random.default_rng(3))
    qs = finite_qsample(a, 5, boundary=1)
    b = canonicalize(a)
    # independent oracle: the left fixed point in the raw gauge
    e = transfer_matrix(a).dense()
    w, v = np.linalg.eig(e.T)
    vl = v[:, np.argmax(abs(w))].reshape(3, 3).T  # u^T vec(X) = Tr(U^T X)
    vl = vl / vl[1, 1]
    start = np.zeros(3)
    start[1] = 1.0
    for word in itertools.product(range(2), repeat=5):
        vec = word_amplitude(a, word) @ start
        p = (vec.conj() @ vl @ vec).real
        assert qs.probabilities[word] == pytest.approx(p, abs=1e-12)
    assert b.bond_dim == 3


def test_finite_qsample_resource_limit():
    with pytest.raises(ResourceError):
        finite_qsample(qsample_imps(coin(0.5)), 40)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(2, 3), st.integers(0, 10**6))
def test_steady_qsample_is_normalized(d, n, seed):
    a = random_imps(d, n, np.random.default_rng(seed))
    probs = finite_qsample(a, 3).probabilities
    assert probs.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(probs >= -1e-14)
    assert math.isfinite(float(probs.max()))

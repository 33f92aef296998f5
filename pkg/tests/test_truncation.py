import json
import warnings

import numpy as np
import pytest

from qdimred.divergences import qfdr
from qdimred.errors import ConvergenceError, PreconditionError, StructuralError
from qdimred.imps import canonicalize, random_imps, transfer_matrix
from qdimred.processes import DysonSpec, WalkSpec, coin, cyclic_walk_model, dyson_ising_model, qsample_imps
from qdimred.truncation import (TieWarning, TruncationConfig, direct_truncate, two_step_truncate,
                                variational_truncate)


def test_config_validation():
    with pytest.raises(StructuralError):
        TruncationConfig(d_tilde=0)
    with pytest.raises(StructuralError):
        TruncationConfig(d_tilde=2, damping=1.0)


def test_direct_identity_projection():
    b = canonicalize(random_imps(3, 2, np.random.default_rng(1)))
    small = direct_truncate(b, 3)
    assert qfdr(b.left_op, small).rate <= 1e-10


def test_direct_rejects_oversized_target():
    b = canonicalize(random_imps(2, 2, np.random.default_rng(1)))
    with pytest.raises(PreconditionError):
        direct_truncate(b, 3)


def test_direct_truncation_is_canonical():
    b = canonicalize(random_imps(4, 3, np.random.default_rng(5)))
    small = direct_truncate(b, 2)
    assert small.bond_dim == 2
    e = np.einsum("xba,xbc->ac", small.matrices.conj(), small.matrices)
    assert np.allclose(e, np.eye(2), atol=1e-10)
    w = np.linalg.eigvals(transfer_matrix(small).dense())
    assert np.max(abs(w)) == pytest.approx(1.0, abs=1e-10)


def test_direct_tie_warning():
    # the uniform walk spectrum comes in mirror pairs
    b = canonicalize(qsample_imps(cyclic_walk_model(WalkSpec(8, "uniform", 0.1))))
    lam = b.spectrum.values
    cut = next(k for k in range(1, len(lam)) if abs(lam[k - 1] - lam[k]) < 1e-14)
    with pytest.warns(TieWarning):
        direct_truncate(b, cut)


def test_variational_full_dimension_direct_seed():
    a = random_imps(3, 2, np.random.default_rng(2))
    res = variational_truncate(a, TruncationConfig(d_tilde=3, init="direct"))
    assert res.converged and res.qfdr <= 1e-10


def test_variational_histories_and_invariants():
    a = random_imps(4, 2, np.random.default_rng(11))
    res = variational_truncate(a, TruncationConfig(d_tilde=2, restarts=3, seed=5))
    assert res.converged
    assert res.delta_history[-1] < 1e-10
    best = res.best_qfdr_history
    assert np.all(np.diff(best) <= 0)
    assert res.max_completeness_error <= 1e-9
    assert res.max_eta_mismatch <= 1e-9
    assert len(res.restart_qfdrs) == 3
    assert res.qfdr == min(res.restart_qfdrs)
    assert res.qfdr == pytest.approx(qfdr(a, res.A_tilde).rate, abs=1e-12)
    assert res.A_tilde.bond_dim == 2


def test_variational_beats_or_matches_direct():
    rng = np.random.default_rng(4)
    for _ in range(3):
        a = random_imps(4, 2, rng)
        b = canonicalize(a)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TieWarning)
            direct = qfdr(b.left_op, direct_truncate(b, 2)).rate
        res = two_step_truncate(b, TruncationConfig(d_tilde=2, raise_on_failure=False))
        assert res.qfdr <= direct + 1e-12


def test_variational_is_deterministic():
    a = random_imps(3, 2, np.random.default_rng(9))
    cfg = TruncationConfig(d_tilde=2, restarts=2, seed=3)
    r1, r2 = variational_truncate(a, cfg), variational_truncate(a, cfg)
    assert np.array_equal(r1.A_tilde.matrices, r2.A_tilde.matrices)
    assert r1.restart_qfdrs == r2.restart_qfdrs


def test_variational_failure_carries_result():
    a = random_imps(4, 2, np.random.default_rng(13))
    with pytest.raises(ConvergenceError) as info:
        variational_truncate(a, TruncationConfig(d_tilde=2, restarts=1, max_iters=1))
    assert info.value.result is not None
    assert info.value.result.iterations == 1


def test_monotone_in_dimension_uniform_walk():
    b = canonicalize(qsample_imps(cyclic_walk_model(WalkSpec(16, "uniform", 0.1))))
    # the uniform walk approaches its fixed point slowly, so bound the budget
    rates = [variational_truncate(b, TruncationConfig(d_tilde=dt, restarts=4, screen_iters=20,
                                                      max_iters=300, raise_on_failure=False)).qfdr
             for dt in (3, 5, 7)]
    assert rates[2] <= rates[1] <= rates[0]


def test_screening_continues_only_the_leader():
    a = random_imps(4, 2, np.random.default_rng(11))
    cfg = TruncationConfig(d_tilde=2, restarts=3, seed=5, screen_iters=3)
    res = variational_truncate(a, cfg)
    assert res.converged
    assert np.all(np.diff(res.best_qfdr_history) <= 0)
    assert len(res.restart_qfdrs) == 3
    assert res.qfdr == min(res.restart_qfdrs)
    full = variational_truncate(a, TruncationConfig(d_tilde=2, restarts=3, seed=5))
    assert res.qfdr == pytest.approx(full.qfdr, abs=1e-8)
    with pytest.raises(StructuralError):
        TruncationConfig(d_tilde=2, screen_iters=0)


def test_two_step_examples():
    b = canonicalize(random_imps(3, 2, np.random.default_rng(6)))
    res = two_step_truncate(b, TruncationConfig(d_tilde=3))
    assert res.qfdr <= 1e-10
    assert np.allclose(res.A_tilde.matrices, b.A_l.matrices)
    res = two_step_truncate(qsample_imps(coin(0.3)), TruncationConfig(d_tilde=1))
    assert res.iterations == 0 and res.qfdr == 0.0


def test_two_step_dyson_not_worse_than_direct():
    b = canonicalize(qsample_imps(dyson_ising_model(DysonSpec(3, 2.0))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TieWarning)
        direct = qfdr(b.left_op, direct_truncate(b, 2)).rate
    res = two_step_truncate(b, TruncationConfig(d_tilde=2, raise_on_failure=False))
    assert res.qfdr <= direct


def test_result_json_round_trip():
    a = random_imps(3, 2, np.random.default_rng(8))
    res = variational_truncate(a, TruncationConfig(d_tilde=2, restarts=1))
    obj = json.loads(res.to_json())
    assert obj["d_tilde"] == 2 and obj["tensor"]["bond_dim"] == 2
    assert obj["config"]["seed"] == 42
    assert len(obj["delta_history"]) == res.iterations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lpv_rci.datamatrices import (build, informativity, membership, numerical_rank,
                                  residual_membership, unvec, vec, vectorize_check)
from lpv_rci.trajectory import ConstraintSets, Trajectory

from oracles import regressor_cols, vec_f

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def scalar_constraints():
    return ConstraintSets([[1.0]], [[1.0]], [[1.0]], [[1.0]])


def test_hand_expansion_T1():
    traj = Trajectory([[2.0], [3.0]], [[5.0]], [[1.0]])
    dm = build(traj, scalar_constraints())
    np.testing.assert_array_equal(dm.Xplus, [[3.0]])
    np.testing.assert_array_equal(dm.Xpu, [[2.0], [5.0]])
    np.testing.assert_array_equal(dm.Z, [[2.0, 5.0]])
    np.testing.assert_array_equal(dm.d, [3.0])


def test_example_data_shapes(dm20):
    assert dm20.Xpu.shape == (5, 20)
    assert dm20.Xplus.shape == (2, 20)
    assert dm20.Z.shape == (40, 10)
    assert dm20.d.shape == (40,)


def test_columns_match_oracle(traj20, dm20, setup):
    ref = regressor_cols(traj20.states, traj20.inputs, traj20.scheduling)
    np.testing.assert_array_equal(dm20.Xpu, ref)
    H_w = setup.constraints.H_w
    d_ref = np.concatenate([H_w @ traj20.states[k + 1] for k in range(20)])
    np.testing.assert_allclose(dm20.d, d_ref, rtol=0, atol=1e-12)
    for k in range(20):
        for c in range(5):
            np.testing.assert_array_equal(dm20.Z[2 * k:2 * k + 2, 2 * c:2 * c + 2],
                                          dm20.Xpu[c, k] * H_w)


def test_zero_trajectory():
    traj = Trajectory(np.zeros((4, 2)), np.zeros((3, 1)), np.ones((3, 1)))
    dm = build(traj, ConstraintSets(np.eye(2), [[1.0]], np.eye(2), [[1.0]]))
    assert not dm.Z.any() and not dm.d.any()


def test_build_rejects_wrong_H_w(traj20):
    with pytest.raises(ValueError, match="H_w"):
        build(traj20, ConstraintSets(np.eye(3), [[1.0]], np.eye(3), [[1.0, 0.0]]))


def test_vec_is_column_major(rng):
    A = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(vec(A), vec_f(A))
    np.testing.assert_array_equal(unvec(vec(A), 3), A)


def test_vectorize_identity_case():
    I = np.eye(2)
    assert vectorize_check(I, I, I, I)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 2), elements=finite), arrays(float, (2, 2), elements=finite),
       arrays(float, (2, 4), elements=finite))
def test_vectorization_identity(A, B, C):
    D = A @ B @ C
    assert vectorize_check(A, B, C, D, tol=1e-10 * max(1.0, np.abs(D).max()))
    D_bad = D.copy()
    D_bad[0, 0] += 1.0
    assert not vectorize_check(A, B, C, D_bad)


def test_vectorize_shape_errors():
    with pytest.raises(ValueError):
        vectorize_check(np.eye(2), np.eye(3), np.eye(3), np.eye(2))
    with pytest.raises(ValueError):
        vectorize_check(np.eye(2), np.eye(2), np.eye(2), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_model_kron_identity(seed):
    """Z vec(M) stacks H_w M z_k, the vectorized form of the residual test."""
    rng = np.random.default_rng(seed)
    Xpu = rng.standard_normal((5, 7))
    H_w = rng.standard_normal((3, 2))
    M = rng.standard_normal((2, 5))
    lhs = np.kron(Xpu.T, H_w) @ vec(M)
    rhs = np.concatenate([H_w @ M @ Xpu[:, k] for k in range(7)])
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_informativity_example_data(dm20, setup):
    rep = informativity(dm20, setup.constraints)
    assert rep.rank_Xpu == 5 == rep.required_rank
    assert rep.H_w_full_column_rank
    assert rep.bounded


def test_informativity_short_data(setup):
    traj = setup.collect(T=2, seed=0)
    rep = informativity(build(traj, setup.constraints), setup.constraints)
    assert rep.rank_Xpu <= 2 < 5
    assert not rep.bounded


def test_duplicate_columns_detected(traj20, setup):
    idx = [0, 1, 2, 3] * 5
    traj = Trajectory(traj20.states[idx + [4]], traj20.inputs[idx], traj20.scheduling[idx])
    dm = build(traj, setup.constraints)
    sv = np.linalg.svd(dm.Xpu, compute_uv=False)
    assert informativity(dm, setup.constraints).rank_Xpu == int(np.sum(sv > 1e-8 * sv[0])) == 4


def test_numerical_rank_tolerance():
    A = np.diag([1.0, 1e-9, 1e-7])
    assert numerical_rank(A) == 2
    assert numerical_rank(np.zeros((3, 3))) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_rank_never_exceeds_bounds(T, rows, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, T))
    assert numerical_rank(A) <= min(rows, T)


def test_true_model_is_member(dm20, setup, traj20):
    assert membership(dm20, setup.plant.M)
    assert residual_membership(traj20, setup.constraints.H_w, setup.plant.M)


def test_perturbed_model_is_not_member(dm20, setup):
    M = setup.plant.M.copy()
    M[0, 0] += 10.0
    assert not membership(dm20, M)
    # direct inequality evaluation
    r = dm20.Xplus - M @ dm20.Xpu
    assert np.abs(setup.constraints.H_w @ r).max() > 1


def test_empty_data_is_vacuous(setup, caplog):
    traj = Trajectory(np.zeros((1, 2)), np.zeros((0, 1)), np.zeros((0, 2)))
    dm = build(traj, setup.constraints)
    assert dm.degenerate
    assert membership(dm, np.full((2, 5), 1e6))
    assert "vacuous" in caplog.text


def test_membership_shape_check(dm20):
    with pytest.raises(ValueError):
        membership(dm20, np.zeros((2, 4)))


def test_membership_equivalence_100_models(dm20, traj20, setup, rng):
    """Vectorized and residual forms agree on 100 models scattered around the true one."""
    H_w = setup.constraints.H_w
    agree, inside = 0, 0
    for q in range(100):
        scale = [0.0, 1e-3, 3e-3, 1e-2, 1e-1][q % 5]
        M = setup.plant.M + scale * rng.standard_normal((2, 5))
        a = membership(dm20, M)
        b = residual_membership(traj20, H_w, M)
        agree += a == b
        inside += a
    assert agree == 100
    assert 0 < inside < 100


def test_membership_shrinks_with_data(setup, rng):
    traj = setup.collect(T=60, seed=3)
    H_w = setup.constraints.H_w
    dms = {T: build(traj.prefix(T), setup.constraints) for T in (10, 30, 60)}
    for _ in range(200):
        M = setup.plant.M + 0.01 * rng.standard_normal((2, 5))
        if membership(dms[60], M):
            assert membership(dms[30], M)
        if membership(dms[30], M):
            assert membership(dms[10], M)
        assert membership(dms[30], M) == residual_membership(traj.prefix(30), H_w, M)


def test_report_serializes(dm20, setup):
    d = informativity(dm20, setup.constraints).to_dict()
    assert d["bounded"] is True and d["rank_Xpu"] == 5

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpv_rci.datamatrices import build
from lpv_rci.synthesis import (ALPHA_CAP, InformativityError, SynthesisConfig, SynthesisError,
                               SynthesisInfeasible, SynthesisResult, extract_gains,
                               init_iteration, scheduled_gain, state_scaling, synthesize)
from lpv_rci.trajectory import ConstraintSets
from lpv_rci.verify import check_containment, vertex_invariance

from oracles import alpha_lp


def cfg_for(setup, nc=2, constraints=None, **kw):
    return SynthesisConfig(C=setup.C(nc), constraints=constraints or setup.constraints, **kw)


@pytest.mark.parametrize("nc", [2, 3])
def test_alpha_matches_lp(setup, nc):
    alpha = state_scaling(setup.C(nc), setup.constraints.H_x)
    assert alpha == pytest.approx(alpha_lp(setup.C(nc), setup.constraints.H_x), rel=1e-9)


def test_alpha_unconstrained_is_capped(caplog):
    caplog.set_level("INFO")
    assert state_scaling(np.eye(2), np.zeros((1, 2))) == ALPHA_CAP
    assert "capped" in caplog.text


def test_alpha_scalar_state():
    H_x = np.array([[0.5], [-2.0]])
    assert state_scaling([[1.0]], H_x) == pytest.approx(1 / 2.0)


def test_init_iteration(setup):
    cfg = cfg_for(setup, 3)
    st0 = init_iteration(cfg)
    alpha = alpha_lp(setup.C(3), setup.constraints.H_x)
    np.testing.assert_allclose(st0.W_q, alpha * np.eye(2))
    assert len(st0.X_q) == 6 * 2 * 3
    for Z in st0.Z_q().values():
        np.testing.assert_allclose(Z, st0.W_q)


def test_config_validation(setup):
    with pytest.raises(ValueError):
        cfg_for(setup, max_iters=0)
    with pytest.raises(ValueError, match="columns"):
        SynthesisConfig(C=np.eye(3), constraints=setup.constraints)
    with pytest.raises(ValueError):
        SynthesisConfig(C=[[1.0, 0.0], [2.0, 0.0]], constraints=setup.constraints)


def test_gains_identity_blocks():
    W = np.array([[2.0, 1.0], [0.5, 3.0]])
    for K in extract_gains(W, np.hstack([W, W])):
        np.testing.assert_allclose(K, np.eye(2), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_gain_round_trip(n, m, s, seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, n)) + 3 * np.eye(n)
    N = rng.standard_normal((m, n * s))
    Ks = extract_gains(W, N)
    assert len(Ks) == s
    np.testing.assert_allclose(np.hstack([K @ W for K in Ks]), N, atol=1e-10)


def test_printed_gains_reconstruct_N():
    """N = [K1 W, K2 W] from the printed n_c = 2 solution, pushed back through extract_gains."""
    W = np.array([[6.02, -0.79], [0.02, 2.15]])
    K1, K2 = np.array([[-0.11, -0.73]]), np.array([[-0.18, -0.94]])
    N = np.hstack([K1 @ W, K2 @ W])
    back = extract_gains(W, N)
    np.testing.assert_allclose(back[0], K1, atol=5e-3)
    np.testing.assert_allclose(back[1], K2, atol=5e-3)


def test_singular_W():
    with pytest.raises(SynthesisError):
        extract_gains(np.ones((2, 2)), np.ones((1, 4)))
    with pytest.raises(ValueError):
        extract_gains(np.eye(2), np.ones((1, 3)))


def test_controller_scheduling_identity(synth2, rng):
    res, _ = synth2
    Winv = np.linalg.inv(res.W)
    for _ in range(100):
        p = rng.dirichlet([1.0, 1.0])
        x = rng.uniform(-10, 10, 2)
        lhs = res.K(p) @ x
        rhs = res.N @ np.kron(p, Winv @ x)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9 * max(1, np.abs(rhs).max()))
    np.testing.assert_allclose(scheduled_gain(res.K_list, [1.0, 0.0]), res.K_list[0])


@pytest.mark.parametrize("which", ["synth2", "synth3"])
def test_result_properties(which, request, setup):
    res, _ = request.getfixturevalue(which)
    cs = setup.constraints
    assert len(res.volume_history) == 5
    for a, b in zip(res.volume_history, res.volume_history[1:]):
        assert b >= a * (1 - 1e-6)
    assert check_containment(res.W, res.N, cs, res.theta_vertices, tol=1e-7).passed
    assert vertex_invariance(res, setup.plant.M, cs).passed
    assert abs(np.linalg.det(res.W)) > 1e-9
    for rec in res.iterations:
        assert rec.certificate["passed"]


def test_gains_stabilize_true_plant(synth2, setup):
    res, _ = synth2
    plant = setup.plant
    for p in setup.constraints.scheduling_vertices:
        Acl = plant.A(p) + plant.B @ res.K(p)
        assert np.abs(np.linalg.eigvals(Acl)).max() < 1


def test_volume_grows_with_complexity(synth2, synth3):
    assert synth3[0].volume >= synth2[0].volume


def test_uninformative_data_rejected(setup):
    dm = build(setup.collect(T=2, seed=0), setup.constraints)
    with pytest.raises(InformativityError) as info:
        synthesize(dm, cfg_for(setup))
    assert not info.value.report.bounded


def test_inflated_disturbance_does_not_crash(setup, dm20):
    cs = setup.constraints
    big = ConstraintSets(cs.H_x, cs.H_u, cs.H_w / 100, cs.scheduling_vertices)
    dm = build(setup.collect(T=20, seed=0), big)
    try:
        res = synthesize(dm, cfg_for(setup, constraints=big, max_iters=2))
    except SynthesisInfeasible as exc:
        assert exc.program.psd
        assert not exc.result.ok
    else:
        assert res.volume < 1e-3 * 53.14


def test_json_round_trip(synth3, tmp_path):
    res, _ = synth3
    path = tmp_path / "res.json"
    res.save_json(path)
    data = json.loads(path.read_text())
    assert {"W", "N", "K_list", "volume_history", "status", "set_vertices"} <= set(data)
    back = SynthesisResult.load_json(path)
    np.testing.assert_array_equal(back.W, res.W)
    np.testing.assert_array_equal(back.N, res.N)
    assert back.volume == res.volume
    np.testing.assert_allclose(back.set_vertices(), res.set_vertices())

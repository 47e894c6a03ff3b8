import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpv_rci.affine import AffineExpr, bmat, diag_congruence, hstack, kron, sym_bmat, vstack
from lpv_rci.lmi import LmiProgram

seeds = st.integers(0, 2**31 - 1)


def two_vars(rng, shape_a=(2, 3), shape_b=(3, 2)):
    prog = LmiProgram()
    A = prog.add_variable("A", shape_a)
    B = prog.add_variable("B", shape_b)
    x = rng.standard_normal(prog.nvars)
    return prog, A.expr, B.expr, x, A.value(x), B.value(x)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_products_and_transpose(seed):
    rng = np.random.default_rng(seed)
    prog, A, B, x, Av, Bv = two_vars(rng)
    L = rng.standard_normal((4, 2))
    R = rng.standard_normal((3, 5))
    np.testing.assert_allclose((L @ A @ R).value(x), L @ Av @ R, atol=1e-12)
    np.testing.assert_allclose(A.T.value(x), Av.T)
    np.testing.assert_allclose((A + B.T - 2.0 * A).value(x), Av + Bv.T - 2 * Av, atol=1e-12)
    np.testing.assert_allclose((1.0 - A).value(x), 1.0 - Av)
    np.testing.assert_allclose(A.sum().value(x), [[Av.sum()]], atol=1e-12)
    v = rng.standard_normal(3)
    np.testing.assert_allclose((A @ v).value(x), (Av @ v)[:, None], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_kron_both_orders(seed):
    rng = np.random.default_rng(seed)
    prog, A, B, x, Av, Bv = two_vars(rng)
    K = rng.standard_normal((2, 3))
    K[0, 1] = 0.0
    np.testing.assert_allclose(kron(K, A).value(x), np.kron(K, Av), atol=1e-12)
    np.testing.assert_allclose(kron(A, K).value(x), np.kron(Av, K), atol=1e-12)
    np.testing.assert_array_equal(kron(np.zeros((2, 2)), A).value(x), np.zeros((4, 6)))


def test_kron_of_two_variables_rejected():
    prog, A, B, *_ = two_vars(np.random.default_rng(0))
    with pytest.raises(TypeError):
        kron(A, B)
    with pytest.raises(TypeError):
        A @ B


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_block_assembly(seed):
    rng = np.random.default_rng(seed)
    prog, A, B, x, Av, Bv = two_vars(rng)
    M = bmat([[A, None], [np.eye(3), B]])
    ref = np.block([[Av, np.zeros((2, 2))], [np.eye(3), Bv]])
    np.testing.assert_allclose(M.value(x), ref)
    np.testing.assert_allclose(vstack([A, B.T]).value(x), np.vstack([Av, Bv.T]))
    np.testing.assert_allclose(hstack([A, B.T]).value(x), np.hstack([Av, Bv.T]))


def test_sym_bmat_mirrors_upper_blocks(rng):
    prog = LmiProgram()
    S = prog.add_variable("S", (2, 2), "symmetric").expr
    F = prog.add_variable("F", (2, 3)).expr
    x = rng.standard_normal(prog.nvars)
    M = sym_bmat([[S, F], [None, np.eye(3)]]).value(x)
    np.testing.assert_array_equal(M, M.T)
    np.testing.assert_allclose(M[2:, :2], F.value(x).T)


def test_diag_congruence(rng):
    prog = LmiProgram()
    lam = prog.add_variable("lam", (4, 4), "diagonal").expr
    x = rng.standard_normal(prog.nvars)
    F = rng.standard_normal((4, 3))
    np.testing.assert_allclose(diag_congruence(F, lam).value(x),
                               F.T @ np.diag(lam.value(x)[:, 0]) @ F, atol=1e-12)


def test_ragged_blocks_rejected():
    with pytest.raises(ValueError):
        bmat([[np.eye(2), np.eye(3)]])
    with pytest.raises(ValueError):
        bmat([[None, np.eye(2)], [None, np.eye(2)]])


def test_shape_mismatch():
    a = AffineExpr.constant(np.eye(2))
    with pytest.raises(ValueError):
        a + np.eye(3)
    with pytest.raises(ValueError):
        a @ np.ones((3, 1))
    with pytest.raises(TypeError):
        a * np.eye(2)


def test_variable_kinds_round_trip(rng):
    prog = LmiProgram()
    prog.add_variable("F", (2, 3))
    prog.add_variable("S", (3, 3), "symmetric")
    prog.add_variable("L", (3, 3), "lower")
    prog.add_variable("D", (4, 4), "diagonal", scale=[1.0, 2.0, 3.0, 4.0])
    prog.add_variable("s", (1, 1), "scalar")
    S = rng.standard_normal((3, 3))
    vals = {"F": rng.standard_normal((2, 3)), "S": S + S.T, "L": np.tril(S),
            "D": rng.standard_normal(4), "s": 2.5}
    got = prog.assignments(prog.pack(vals))
    for k, v in vals.items():
        np.testing.assert_allclose(got[k], v, atol=1e-12)

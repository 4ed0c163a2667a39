import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetorus import algebra as alg
from hetorus import bundles as bd
from hetorus import fields as fl
from hetorus import geometry as geo
from hetorus.errors import (BidegreeMismatch, InvalidPower, InvalidSpec, NotDdbarClosedBetaStar,
                            RankMismatch, ShapeMismatch)

import oracles


def beta_star_const(b, n=2):
    c = np.zeros((1, n, 1, 1), dtype=complex)
    c[0, 0, 0, 0] = b
    return alg.MatrixPQForm(n, 0, 1, c)


def small_weight(grid, seed, amp=0.1):
    return fl.random_band_limited(grid, np.random.default_rng(seed), 1, amp)


def test_line_curvature_examples(grid):
    phi = small_weight(grid, 0, 0.3)
    curv = bd.chern_curvature(bd.line_bundle(n=2, weight=phi))
    assert np.max(np.abs(curv.coeffs[..., 0, 0] - fl.i_ddbar(phi).coeffs)) < 1e-12
    C = alg.i_dz_dzbar(2, 0, 0) * 1.5
    curv = bd.chern_curvature(bd.line_bundle(C))
    assert np.allclose(curv.coeffs[..., 0, 0], C.coeffs)


@pytest.mark.parametrize("b", [0.7, 0.3 - 0.4j, 1.0j])
def test_constant_extension_closed_form(grid, b):
    L = bd.line_bundle(n=2)
    E = bd.extension(L, L, beta_star_const(b))
    curv = bd.chern_curvature(E, grid=grid)
    expect = np.zeros(curv.coeffs.shape, dtype=complex)
    expect[..., 0, 0, 0, 0] = 1j * abs(b) ** 2
    expect[..., 0, 0, 1, 1] = -1j * abs(b) ** 2
    assert np.max(np.abs(curv.coeffs - expect)) < 1e-10
    S, Q = bd.subquotient_curvatures(curv, bd.second_fundamental_form(E, grid))
    assert S.sup_norm() < 1e-10 and Q.sup_norm() < 1e-10


def extension_with_weights(grid, seed=0, b=0.5):
    w1, w2 = small_weight(grid, seed), small_weight(grid, seed + 1)
    return bd.extension(bd.line_bundle(n=2, weight=w1), bd.line_bundle(n=2, weight=w2),
                        beta_star_const(b))


def test_chern_connection_is_integrable(grid):
    E = extension_with_weights(grid)
    a10 = bd.connection_10(E, 2, grid)
    theta20 = fl.d(a10) + alg.wedge(a10, a10)
    assert theta20.sup_norm() < 1e-10


def test_curvature_h_hermitian(grid):
    E = extension_with_weights(grid)
    curv = bd.chern_curvature(E)
    assert curv.hermitian_residual(E.metric.matrix(grid)) < 1e-11
    T = bd.trivial_bundle(2, 2, gram=np.array([[2, 0.5j], [-0.5j, 1]]), weights=(small_weight(grid, 4), None))
    curv = bd.chern_curvature(T)
    assert curv.hermitian_residual(T.metric.matrix(grid)) < 1e-11


def test_rescaling_adds_i_ddbar_f(grid):
    E = extension_with_weights(grid)
    f = small_weight(grid, 9)
    diff = bd.chern_curvature(E.rescaled(f)).coeffs - bd.chern_curvature(E).coeffs
    expect = fl.i_ddbar(f).coeffs[..., None, None] * np.eye(2)
    assert np.max(np.abs(diff - expect)) < 1e-10


def test_trace_identities(grid):
    E = extension_with_weights(grid)
    curv = bd.chern_curvature(E)
    beta = bd.second_fundamental_form(E, grid)
    H = E.metric.matrix(grid)
    S, Q = bd.subquotient_curvatures(curv, beta, H)
    total = S.trace().coeffs + Q.trace().coeffs
    assert np.max(np.abs(total - curv.trace().coeffs)) < 1e-12
    # sub/quotient curvatures agree with the curvature of S and Q with their own metrics
    assert np.max(np.abs(S.coeffs - bd.chern_curvature(E.sub).coeffs)) < 1e-10
    assert np.max(np.abs(Q.coeffs - bd.chern_curvature(E.quotient).coeffs)) < 1e-10
    det = bd.transform_curvature(curv, "det")
    assert np.max(np.abs(det.trace().coeffs - curv.trace().coeffs)) == 0


def test_beta_zero_gives_blocks(grid):
    curv = bd.chern_curvature(bd.direct_sum(bd.line_bundle(alg.i_dz_dzbar(2, 0, 0)),
                                            bd.line_bundle(n=2, weight=small_weight(grid, 2))))
    beta = alg.MatrixPQForm(2, 1, 0, np.zeros(grid.shape + (2, 1, 1, 1)), grid)
    S, Q = bd.subquotient_curvatures(curv, beta)
    assert np.allclose(S.coeffs, curv.block(slice(0, 1), slice(0, 1)).coeffs)
    assert np.allclose(Q.coeffs, curv.block(slice(1, 2), slice(1, 2)).coeffs)


def test_extension_validation(grid):
    L = bd.line_bundle(n=2)
    f = geo.trig_field(grid, [(1.0, [0, 0, 1, 0], "cos")])
    c = np.zeros(grid.shape + (1, 2, 1, 1), dtype=complex)
    c[..., 0, 0, 0, 0] = f.values
    with pytest.raises(NotDdbarClosedBetaStar):
        bd.extension(L, L, alg.MatrixPQForm(2, 0, 1, c, grid))
    # a dbar-closed non-constant beta*: dbar(g) for a function g
    g = geo.trig_field(grid, [(1.0, [1, 0, 0, 1], "sin")])
    exact = fl.dbar(g)
    bs = alg.MatrixPQForm(2, 0, 1, exact.coeffs[..., None, None], grid)
    bd.extension(L, L, bs)
    assert np.max(np.abs(bd.extension_class_zero_mode(bs))) < 1e-14
    with pytest.raises(InvalidSpec):
        bd.extension(bd.line_bundle(alg.i_dz_dzbar(2, 0, 0)), L, beta_star_const(1.0))
    with pytest.raises(BidegreeMismatch):
        bd.extension(L, L, alg.MatrixPQForm(2, 1, 0, np.ones((2, 1, 1, 1))))
    with pytest.raises(ShapeMismatch):
        bd.extension(L, L, alg.MatrixPQForm(2, 0, 1, np.ones((1, 2, 2, 1))))
    with pytest.raises(InvalidSpec):
        bd.line_bundle(alg.i_dz_dzbar(2, 0, 1))


def test_transform_examples():
    a, b = 1.5, -0.5
    L1 = bd.line_bundle(alg.i_dz_dzbar(2, 0, 0) * a)
    L2 = bd.line_bundle(alg.i_dz_dzbar(2, 1, 1) * b)
    c1 = bd.chern_curvature(L1)
    assert np.allclose(bd.transform_curvature(c1, "dual").coeffs, -c1.coeffs)
    s = bd.chern_curvature(bd.direct_sum(L1, L2))
    det = bd.transform_curvature(s, "det")
    expect = (alg.i_dz_dzbar(2, 0, 0) * a + alg.i_dz_dzbar(2, 1, 1) * b).coeffs
    assert np.allclose(det.coeffs[..., 0, 0], expect)
    with pytest.raises(InvalidPower):
        bd.transform_curvature(s, "wedge_power", p=3)
    with pytest.raises(RankMismatch):
        bd.transform_curvature(s, "tensor")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 16))
def test_exterior_power_matches_compound_derivative(r, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    for p in range(1, r + 1):
        ours = bd.exterior_power_matrix(A, p)
        assert np.allclose(ours, oracles.exterior_derivation(A, p), atol=1e-7)


def test_tensor_and_end_are_derivations():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    mk = lambda M: alg.MatrixPQForm(1, 1, 1, M.reshape(1, 1, *M.shape))  # noqa: E731
    t = bd.transform_curvature(mk(A), "tensor", mk(B)).coeffs[0, 0]
    assert np.allclose(t, np.kron(A, np.eye(3)) + np.kron(np.eye(2), B))
    # End(E) = E (x) E*: action on X is [A, X]
    X = rng.standard_normal((2, 2))
    e = bd.transform_curvature(mk(A), "end").coeffs[0, 0]
    assert np.allclose((e @ X.reshape(-1)).reshape(2, 2), A @ X - X @ A)


def test_integral_class_flag():
    assert bd.is_integral_class(alg.i_dz_dzbar(2, 0, 0) * np.pi)
    assert not bd.is_integral_class(alg.i_dz_dzbar(2, 0, 0))
    assert bd.is_integral_class(alg.zeros(2, 1, 1))

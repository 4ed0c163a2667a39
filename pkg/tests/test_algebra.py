from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetorus import algebra as alg
from hetorus.errors import (BidegreeMismatch, DegenerateMetric, DegreeOverflow, RankMismatch,
                            ZeroVolumeForm)

import oracles


def rand_form(rng, n, p, q):
    c = rng.standard_normal((comb(n, p), comb(n, q))) + 1j * rng.standard_normal((comb(n, p), comb(n, q)))
    return alg.PQForm(n, p, q, c)


bidegrees = st.tuples(st.integers(1, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 3),
                      st.integers(0, 3), st.integers(0, 2 ** 16))


@settings(max_examples=80, deadline=None)
@given(bidegrees)
def test_wedge_matches_bruteforce(params):
    n, pa, qa, pb, qb, seed = params
    if max(pa, qa, pb, qb) > n or pa + pb > n or qa + qb > n:
        return
    rng = np.random.default_rng(seed)
    a, b = rand_form(rng, n, pa, qa), rand_form(rng, n, pb, qb)
    ref = oracles.dict_to_array(oracles.wedge_dict(oracles.to_dict(a), oracles.to_dict(b), n),
                                n, pa + pb, qa + qb)
    assert np.allclose(alg.wedge(a, b).coeffs, ref, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_wedge_associative_and_graded(seed):
    rng = np.random.default_rng(seed)
    n = 3
    a, b, c = rand_form(rng, n, 1, 0), rand_form(rng, n, 0, 1), rand_form(rng, n, 1, 1)
    left = alg.wedge(alg.wedge(a, b), c)
    right = alg.wedge(a, alg.wedge(b, c))
    assert np.allclose(left.coeffs, right.coeffs)
    # a ^ b = (-1)^{deg a deg b} b ^ a
    assert np.allclose(alg.wedge(a, b).coeffs, -alg.wedge(b, a).coeffs)
    assert np.allclose(alg.wedge(a, c).coeffs, alg.wedge(c, a).coeffs)


def test_dz_squares_to_zero():
    assert alg.wedge(alg.dz(2, 0), alg.dz(2, 0)).sup_norm() == 0


def test_degree_overflow():
    with pytest.raises(DegreeOverflow):
        alg.wedge(alg.volume_form(2), alg.dz(2, 0))
    with pytest.raises(BidegreeMismatch):
        alg.wedge(alg.dz(2, 0), alg.dz(3, 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2 ** 16))
def test_conjugate_matches_bruteforce(n, p, q, seed):
    if p > n or q > n:
        return
    a = rand_form(np.random.default_rng(seed), n, p, q)
    ref = {}
    for key, v in oracles.to_dict(a).items():
        swapped = tuple(("zb" if k == "z" else "z", j) for k, j in key)
        sign, srt = oracles._sort_sign(swapped, n)
        ref[srt] = ref.get(srt, 0) + sign * np.conj(v)
    assert np.allclose(a.conjugate().coeffs, oracles.dict_to_array(ref, n, q, p))
    assert np.allclose(a.conjugate().conjugate().coeffs, a.coeffs)


def test_real_forms():
    assert alg.i_dz_dzbar(2, 0, 0).is_real()
    assert alg.flat_kahler(3).is_real()
    assert not (alg.i_dz_dzbar(2, 0, 1)).is_real()
    x = alg.i_dz_dzbar(2, 0, 1) + alg.i_dz_dzbar(2, 1, 0)
    assert x.is_real()


def test_volume_form_coefficients():
    # i dz1 dzb1 ^ i dz2 dzb2 = - dz1 dz2 dzb1 dzb2 * i^2 ... stored on dz_12 ^ dzb_12
    assert alg.volume_form(2).coeffs[0, 0] == pytest.approx(1.0)
    assert alg.volume_form(3).coeffs[0, 0] == pytest.approx(1j)
    assert alg.volume_form(1).coeffs[0, 0] == pytest.approx(1j)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_kahler_power_is_factorial_volume(n):
    om = alg.flat_kahler(n)
    ratio = alg.top_ratio(om.power(n), alg.volume_form(n))
    assert ratio == pytest.approx(np.prod(range(1, n + 1)))


def test_lambda_contract_of_omega_is_n():
    for n in (1, 2, 3):
        assert alg.lambda_contract(alg.flat_kahler(n), alg.flat_kahler(n)) == pytest.approx(n)


def test_lambda_norm_against_gram_inverse():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = 3
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        g = A @ A.conj().T + np.eye(n)
        a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        eta = alg.one_zero_form(a)
        val = alg.lambda_contract(alg.wedge(eta, alg.conjugate(eta)) * 1j, alg.kahler_form(g))
        assert val == pytest.approx(np.conj(a) @ np.linalg.inv(g) @ a, rel=1e-12)


def test_top_ratio_zero_volume():
    with pytest.raises(ZeroVolumeForm):
        alg.top_ratio(alg.volume_form(2), alg.zeros(2, 2, 2))


def test_fibre_metric_validation():
    alg.FibreMetric(np.array([[2, 1j], [-1j, 1]]))
    with pytest.raises(DegenerateMetric):
        alg.FibreMetric(np.array([[1, 2], [2, 1]]))
    with pytest.raises(DegenerateMetric):
        alg.FibreMetric(np.array([[1, 1], [0, 1]]))


def test_bracket_hermitian_up_to_sign():
    rng = np.random.default_rng(1)
    eta = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    xi = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    h = alg.FibreMetric(np.array([[2, 0.5j], [-0.5j, 1]]))
    a = alg.sesquilinear_bracket(eta, xi, h)
    b = alg.sesquilinear_bracket(xi, eta, h)
    assert np.allclose(a.conjugate().coeffs, -b.coeffs)
    # so i{eta, eta} is a real form
    assert (alg.sesquilinear_bracket(eta, eta, h) * 1j).is_real(1e-12)
    with pytest.raises(RankMismatch):
        alg.sesquilinear_bracket(eta, xi[:1], h)


def test_positivity_examples():
    n = 2
    om = alg.flat_kahler(n)
    Omega = alg.i_dz_dzbar(n, 1, 1)
    eta = np.array([[1.0, 0.0]])
    assert alg.positivity_density(eta, None, om, Omega, 1) == pytest.approx(1.0)
    beta = alg.MatrixPQForm(n, 1, 0, np.array([1.0, 0.0]).reshape(2, 1, 1, 1))
    tq, ts = alg.beta_trace_densities(beta, om, Omega, 1)
    assert (tq, ts) == (pytest.approx(1.0), pytest.approx(-1.0))


def test_weak_positivity_sampling():
    assert isinstance(alg.weak_positivity_sample(alg.flat_kahler(3)), alg.PlausiblyPositive)
    neg = alg.i_dz_dzbar(2, 0, 0) - alg.i_dz_dzbar(2, 1, 1)
    verdict = alg.weak_positivity_sample(neg)
    assert isinstance(verdict, alg.CertifiedNegative)
    assert verdict.density < 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_positivity_density_nonnegative(seed):
    rng = np.random.default_rng(seed)
    n, m = 3, 2
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    om = alg.kahler_form(A @ A.conj().T + 0.1 * np.eye(n))
    from hetorus.geometry import block_diagonal_form
    Omega = block_diagonal_form(n, 1, rng.uniform(0, 1, 3))
    eta = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    B = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    h = alg.FibreMetric(B @ B.conj().T + 0.1 * np.eye(2))
    assert alg.positivity_density(eta, h, om, Omega, m) >= -1e-12

import numpy as np
import pytest

from hetorus import algebra as alg
from hetorus import bundles as bd
from hetorus import fields as fl
from hetorus import geometry as geo
from hetorus import stability as st
from hetorus.errors import AmbientNotHE, NotASubobject, ShapeMismatch, ZeroRank
from hetorus.scenarios import diag_class


def weight(grid, seed, amp=0.2):
    return fl.random_band_limited(grid, np.random.default_rng(seed), 1, amp)


def line(a, b, w=None):
    return bd.line_bundle(diag_class(2, [a, b]), w)


@pytest.fixture(scope="module")
def seq_ctx(grid):
    """Omega = i dz2 ^ dz2bar."""
    return geo.validate_structures(grid, alg.flat_kahler(2), geo.block_diagonal_form(2, 1, [0.0, 1.0]), 1)


@pytest.mark.parametrize("a,b", [(1.0, 2.0), (-0.5, 3.0), (0.0, 0.0)])
def test_degree_closed_form(ctx, a, b):
    rep = st.degree(line(a, b), ctx)
    assert abs(rep.degree - 4 * (a + b)) < 1e-10


def test_degree_examples(ctx, grid):
    assert st.degree(bd.trivial_bundle(2, 2), ctx).degree == 0
    s = bd.direct_sum(line(1, 2), line(0.5, 0.5))
    assert st.degree(s, ctx).degree == pytest.approx(16.0, abs=1e-10)
    for spec in (line(1, 2, weight(grid, 0)), bd.trivial_bundle(2, 2, weights=(weight(grid, 1), None))):
        rep = st.degree(spec, ctx)
        integral = float(np.real(fl.integrate_top(ctx.dV * rep.density.values)))
        assert abs(integral - rep.degree) <= 1e-10 * max(1.0, abs(rep.degree))


def test_gauge_invariance(ctx, pctx, grid):
    spec = line(1, 2, weight(grid, 3))
    assert st.gauge_invariance_check(spec, grid.constant(0.0).real, ctx) == 0
    f = geo.trig_field(grid, [(0.4, [0, 0, 1, 0], "cos")])
    assert st.gauge_invariance_check(spec, f, ctx) <= 1e-10
    for k in range(10):
        f = weight(grid, 50 + k, 2.0)
        assert st.gauge_invariance_check(spec, f, ctx) <= 1e-8
        assert st.gauge_invariance_check(spec, f, pctx) <= 1e-8


def test_slope(ctx):
    assert st.slope(line(1, 2), ctx) == pytest.approx(12.0, abs=1e-10)
    assert st.slope(bd.direct_sum(line(1, 2), line(0.5, 0.5)), ctx) == pytest.approx(8.0, abs=1e-10)
    s1, s2 = st.slope(line(1, 2), ctx), st.slope(line(-1, 0), ctx)
    mu = st.slope(bd.direct_sum(line(1, 2), line(-1, 0)), ctx)
    assert min(s1, s2) <= mu <= max(s1, s2)
    empty = bd.trivial_bundle(2, 1)
    object.__setattr__(empty, "classes", ())
    with pytest.raises(ZeroRank):
        st.slope(empty, ctx)


def unit_beta(qs=(1, 1)):
    c = np.zeros((2, 1) + qs)
    c[0, 0] = 1.0
    return alg.MatrixPQForm(2, 1, 0, c)


def test_exact_sequence_unit(seq_ctx):
    sc = st.exact_sequence_check("synthetic", {"lambda_E": 0.0, "s": 1, "q": 1, "beta": unit_beta()}, seq_ctx)
    for d, target in zip(sc.densities, (-1.0, 0.0, 1.0)):
        assert np.max(np.abs(d.values - target)) <= 1e-10
    assert sc.mu_S < sc.mu_E < sc.mu_Q and sc.equality_case == "Strict" and sc.pointwise_chain_ok


def test_exact_sequence_split(seq_ctx):
    zero = alg.MatrixPQForm(2, 1, 0, np.zeros((2, 1, 1, 2)))
    sc = st.exact_sequence_check("synthetic", {"lambda_E": 2.0, "s": 2, "q": 1, "beta": zero}, seq_ctx)
    assert sc.equality_case == "Split"
    assert all(np.allclose(d.values, 2.0) for d in sc.densities)


@pytest.mark.parametrize("seed", range(5))
def test_exact_sequence_random_chain(seq_ctx, grid, seed):
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.shape + (2, 1, 2, 1), dtype=complex)
    for idx in np.ndindex(2, 1, 2, 1):
        c[(Ellipsis,) + idx] = fl.random_band_limited(grid, rng, 1, 1.0, real=False).values
    sc = st.exact_sequence_check("synthetic", {"lambda_E": 2.0, "s": 1, "q": 2,
                                               "beta": alg.MatrixPQForm(2, 1, 0, c, grid)}, seq_ctx)
    assert sc.min_slack >= -1e-11 and sc.equality_case != "Split"
    # mu_E - mu_S is the integrated trace density
    _, ne, _ = sc.densities
    assert sc.mu_E - sc.mu_S >= 0 and sc.mu_Q - sc.mu_E >= 0
    assert sc.mu_E == pytest.approx(2.0 * seq_ctx.vol, rel=1e-12)


def test_exact_sequence_errors(seq_ctx):
    with pytest.raises(ShapeMismatch):
        st.exact_sequence_check("synthetic", {"lambda_E": 0.0, "s": 2, "q": 1, "beta": unit_beta()}, seq_ctx)
    c = np.zeros((1, 2, 1, 1))
    c[0, 0] = 0.5
    L = bd.line_bundle(n=2)
    with pytest.raises(AmbientNotHE):
        st.exact_sequence_check("metric", bd.extension(L, L, alg.MatrixPQForm(2, 0, 1, c)), seq_ctx)
    with pytest.raises(ValueError):
        st.exact_sequence_check("other", None, seq_ctx)


def test_semistability_examples(ctx):
    fam = [st.Subobject("factor", 0), st.Subobject("factor", 1)]
    v = st.semistability_verdict(bd.direct_sum(line(1, 2), line(2, 1)), fam, ctx)
    assert v == st.NoDestabilizerFound(2)
    v = st.semistability_verdict(bd.direct_sum(line(1, 2), line(1, 0)), fam[:1], ctx)
    assert isinstance(v, st.Destabilizer) and v.index == 0
    assert v.mu_sub == pytest.approx(12.0) and v.mu_E == pytest.approx(8.0)
    assert st.semistability_verdict(line(1, 2), [], ctx) == st.NoDestabilizerFound(0)


def test_constant_subspace(ctx):
    E = bd.trivial_bundle(2, 2, gram=np.array([[2.0, 0.5], [0.5, 1.0]]))
    assert st.subobject_slope(E, st.Subobject("constant_subspace", vectors=((1.0, 1.0),)), ctx) == 0
    with pytest.raises(NotASubobject):
        st.subobject_slope(E, st.Subobject("constant_subspace", vectors=((1.0, 0.0), (0.0, 1.0))), ctx)
    with pytest.raises(NotASubobject):
        st.subobject_slope(E, st.Subobject("factor", 0), ctx)
    with pytest.raises(NotASubobject):
        st.subobject_slope(E, st.Subobject("extension_sub"), ctx)
    with pytest.raises(NotASubobject):
        st.subobject_slope(E, st.Subobject("bogus"), ctx)


def test_kl_demo(ctx):
    k = st.kl_demo(ctx)
    assert k.passed
    assert k.equal_factors == pytest.approx((3.0, 3.0)) and k.unequal_factors == pytest.approx((3.0, 1.0))
    assert isinstance(k.unequal_verdict, st.Destabilizer)
    assert k.extension_deviation == pytest.approx(0.25) and k.extension_zero_mode == pytest.approx(0.5)

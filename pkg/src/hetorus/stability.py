"""Degrees, slopes, exact-sequence slope chains and semi-stability verdicts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import algebra as alg
from . import bundles as bd
from . import fields as fl
from . import he_analysis as he
from .algebra import MatrixPQForm
from .errors import (AmbientNotHE, NotASubobject, NotWeaklyHE, ShapeMismatch, ZeroRank)
from .fields import ScalarField
from .geometry import GeometryContext

CHAIN_SLACK = 1e-11
SPLIT_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class DegreeReport:
    degree: float
    density: ScalarField
    metric_tag: str


def _integrate_density(values, ctx: GeometryContext) -> float:
    return float(np.real(fl.integrate_top(ctx.dV * np.broadcast_to(values, ctx.grid.shape))))


def degree(spec: bd.BundleSpec, ctx: GeometryContext, metric_tag: str = "") -> DegreeReport:
    """Integral of ``Tr(i Theta) ^ omega^(m-1) ^ Omega``, computed through det."""
    curv = bd.chern_curvature(spec, ctx.n, ctx.grid)
    det = bd.transform_curvature(curv, "det")
    top = alg.wedge(det.trace(), ctx.kernel_form)
    if top.grid is None:
        top = fl.constant_field(ctx.grid, top)
    deg = float(np.real(fl.integrate_top(top)))
    dens = ScalarField(ctx.grid, np.broadcast_to(ctx.density(top).real, ctx.grid.shape))
    return DegreeReport(deg, dens, metric_tag or spec.name or spec.kind)


def gauge_invariance_check(spec: bd.BundleSpec, f: ScalarField, ctx: GeometryContext) -> float:
    """``|deg(h) - deg(h exp(-f))|``."""
    return abs(degree(spec, ctx).degree - degree(spec.rescaled(f), ctx).degree)


def slope(spec: bd.BundleSpec, ctx: GeometryContext) -> float:
    if spec.rank < 1:
        raise ZeroRank("slope of a rank-0 object")
    return degree(spec, ctx).degree / spec.rank


@dataclass(frozen=True, eq=False)
class SlopeComparison:
    mu_S: float
    mu_E: float
    mu_Q: float
    pointwise_chain_ok: bool
    equality_case: str
    beta_norm: float
    min_slack: float
    densities: tuple = field(default=(), repr=False)


def _classify(beta_norm, mu_s, mu_e, mu_q, tol):
    if beta_norm <= SPLIT_TOL:
        return "Split"
    if mu_e - mu_s > tol and mu_q - mu_e > tol:
        return "Strict"
    return "Mixed"


def _compare(d_s, d_e, d_q, s, q, beta_norm, ctx, slack):
    r = s + q
    ns, ne, nq = d_s / s, d_e / r, d_q / q
    min_slack = float(min(np.min(ne - ns), np.min(nq - ne)))
    mus = [_integrate_density(x, ctx) for x in (ns, ne, nq)]
    scale = max(1.0, *(abs(m) for m in mus))
    case = _classify(beta_norm, *mus, 1e-10 * scale)
    dens = tuple(ScalarField(ctx.grid, np.broadcast_to(x, ctx.grid.shape)) for x in (ns, ne, nq))
    return SlopeComparison(mus[0], mus[1], mus[2], min_slack >= -slack, case, beta_norm, min_slack, dens)


def exact_sequence_check(mode: str, data, ctx: GeometryContext, slack: float = CHAIN_SLACK) -> SlopeComparison:
    """Densities and slopes of S, E, Q for an exact sequence with HE ambient bundle.

    ``synthetic``: ``data`` has keys ``lambda_E``, ``s``, ``q`` and ``beta`` (a
    q×s matrix (1,0)-form in unitary frames); the ambient curvature is the
    prescribed ``lambda_E`` times the identity after pairing.
    ``metric``: ``data`` is an extension :class:`BundleSpec` whose metric must be HE.
    Returned densities are normalised by rank.
    """
    if mode == "synthetic":
        lam, s, q, beta = float(data["lambda_E"]), int(data["s"]), int(data["q"]), data["beta"]
        if beta.bidegree != (1, 0):
            raise ShapeMismatch(f"beta must be a (1,0)-form, got {beta.bidegree}")
        if beta.fibre_shape != (q, s):
            raise ShapeMismatch(f"beta must be {q}x{s}, got {beta.fibre_shape}")
        star = beta.adjoint()
        ts = he.matrix_density(alg.wedge(star, beta) * 1j, ctx)
        tq = he.matrix_density(alg.wedge(beta, star) * 1j, ctx)
        d_s = s * lam + np.trace(ts, axis1=-2, axis2=-1).real
        d_q = q * lam + np.trace(tq, axis1=-2, axis2=-1).real
        d_e = np.full(ctx.grid.shape, (s + q) * lam)
        return _compare(d_s, d_e, d_q, s, q, beta.sup_norm(), ctx, slack)
    if mode == "metric":
        spec: bd.BundleSpec = data
        if spec.kind != "extension":
            raise ShapeMismatch("metric mode needs an extension spec")
        analysis = he.einstein_matrix(spec, ctx)
        if not analysis.is_he:
            raise AmbientNotHE(f"ambient deviation {analysis.deviation:.3e}")
        s, q = spec.sub.rank, spec.quotient.rank
        curv = bd.chern_curvature(spec, ctx.n, ctx.grid)
        beta = bd.second_fundamental_form(spec, ctx.grid)
        H = spec.metric.matrix(ctx.grid)
        s_curv, q_curv = bd.subquotient_curvatures(curv, beta, H)
        tr = lambda c: np.trace(he.matrix_density(c, ctx), axis1=-2, axis2=-1).real  # noqa: E731
        return _compare(tr(s_curv), tr(curv), tr(q_curv), s, q, beta.sup_norm(), ctx, slack)
    raise ValueError(f"unknown mode {mode!r}")


# -- semi-stability -----------------------------------------------------------

@dataclass(frozen=True)
class Subobject:
    """Declared subobject: ``factor`` (index), ``extension_sub``, or ``constant_subspace`` (vectors)."""

    kind: str
    index: int = 0
    vectors: tuple = ()


@dataclass(frozen=True)
class NoDestabilizerFound:
    checked: int


@dataclass(frozen=True)
class Destabilizer:
    index: int
    mu_sub: float
    mu_E: float


def subobject_slope(E: bd.BundleSpec, sub: Subobject, ctx: GeometryContext) -> float:
    if sub.kind == "factor":
        if E.kind != "direct_sum" or not 0 <= sub.index < len(E.parts):
            raise NotASubobject(f"factor {sub.index} of a {E.kind} bundle")
        return slope(E.parts[sub.index], ctx)
    if sub.kind == "extension_sub":
        if E.kind != "extension":
            raise NotASubobject("extension_sub needs an extension")
        return slope(E.sub, ctx)
    if sub.kind == "constant_subspace":
        if not E.holomorphically_trivial:
            raise NotASubobject("constant subspaces are holomorphic only on trivial structures")
        V = np.asarray(sub.vectors, dtype=complex).T
        if V.ndim != 2 or V.shape[0] != E.rank or not 0 < V.shape[1] < E.rank:
            raise NotASubobject(f"need 0 < k < {E.rank} vectors of length {E.rank}")
        if np.linalg.matrix_rank(V) < V.shape[1]:
            raise NotASubobject("spanning vectors are linearly dependent")
        H = E.metric.matrix(ctx.grid)
        HV = np.conj(V.T) @ H @ V
        induced = bd.trivial_bundle(ctx.n, V.shape[1], gram=HV)
        return slope(induced, ctx)
    raise NotASubobject(f"unknown subobject kind {sub.kind!r}")


def semistability_verdict(E: bd.BundleSpec, family: Sequence[Subobject], ctx: GeometryContext,
                          tol: float = 1e-9):
    """Falsifier: the first declared subobject with slope above that of E."""
    mu_e = slope(E, ctx)
    for k, sub in enumerate(family):
        mu = subobject_slope(E, sub, ctx)
        if mu > mu_e + tol * max(1.0, abs(mu_e)):
            return Destabilizer(k, mu, mu_e)
    return NoDestabilizerFound(len(family))


# -- Kobayashi-Luebke demonstration -------------------------------------------

def _diag_class(n, weights):
    out = alg.zeros(n, 1, 1)
    for j, w in enumerate(weights):
        out = out + alg.i_dz_dzbar(n, j, j) * float(w)
    return out


def _he_line(ctx, weights, name):
    line = bd.line_bundle(_diag_class(ctx.n, weights), name=name)
    res = he.he_rescale(line, ctx)
    return bd.line_bundle(line.classes[0], res.f, name=name), res.c


@dataclass(frozen=True, eq=False)
class KLReport:
    equal_factors: tuple
    equal_verdict: object
    equal_is_he: bool
    unequal_factors: tuple
    unequal_verdict: object
    unequal_is_he: bool
    extension_not_weakly_he: bool
    extension_deviation: float
    extension_slopes: tuple
    extension_zero_mode: float

    @property
    def passed(self) -> bool:
        mu_s, mu_q = self.extension_slopes
        return (isinstance(self.equal_verdict, NoDestabilizerFound) and self.equal_is_he
                and isinstance(self.unequal_verdict, Destabilizer) and not self.unequal_is_he
                and self.extension_not_weakly_he and abs(mu_s - mu_q) <= 1e-9
                and self.extension_zero_mode > 0)


def kl_demo(ctx: GeometryContext, b: complex = 0.5) -> KLReport:
    """(a) equal Einstein factors, (b) unequal factors, (c) non-split constant extension."""
    n = ctx.n
    w1 = [1.0, 2.0] + [0.0] * (n - 2)
    w2 = [2.0, 1.0] + [0.0] * (n - 2)
    w3 = [1.0, 0.0] + [0.0] * (n - 2)
    l1, c1 = _he_line(ctx, w1, "L1")
    l2, c2 = _he_line(ctx, w2, "L2")
    l3, c3 = _he_line(ctx, w3, "L3")
    family = [Subobject("factor", 0), Subobject("factor", 1)]
    ea = bd.direct_sum(l1, l2, name="equal")
    va = semistability_verdict(ea, family, ctx)
    eb = bd.direct_sum(l1, l3, name="unequal")
    vb = semistability_verdict(eb, family[:1], ctx)

    trivial = bd.line_bundle(n=n)
    coeffs = np.zeros((1, n, 1, 1), dtype=complex)
    coeffs[0, 0, 0, 0] = b
    beta_star = MatrixPQForm(n, 0, 1, coeffs)
    ext = bd.extension(trivial, trivial, beta_star, name="extension")
    try:
        he.he_rescale(ext, ctx)
        flagged = False
    except NotWeaklyHE:
        flagged = True
    dev = he.einstein_matrix(ext, ctx).deviation
    zero_mode = float(np.max(np.abs(bd.extension_class_zero_mode(beta_star))))
    return KLReport((c1, c2), va, he.einstein_matrix(ea, ctx).is_he, (c1, c3), vb,
                    he.einstein_matrix(eb, ctx).is_he, flagged, dev,
                    (slope(ext.sub, ctx), slope(ext.quotient, ctx)), zero_mode)

"""Einstein matrices, weakly Hermite-Einstein detection and conformal rescaling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import algebra as alg
from . import bundles as bd
from . import fields as fl
from .algebra import MatrixPQForm
from .errors import NonHolomorphicSection, NotHermiteEinstein, NotWeaklyHE
from .fields import ScalarField
from .geometry import GeometryContext
from .operator import POperatorContext, apply_P, decompose

TOL_WE = 1e-9


def matrix_density(curv: MatrixPQForm, ctx: GeometryContext) -> np.ndarray:
    """``(curv ^ omega^(m-1) ^ Omega) / dV_omega`` entrywise, shape ``grid + (r, r)``."""
    top = alg.wedge(curv, ctx.kernel_form)
    dv = np.asarray(ctx.dV.coeffs[..., 0, 0])
    out = top.coeffs[..., 0, 0, :, :] / dv[..., None, None]
    return np.broadcast_to(out, ctx.grid.shape + out.shape[-2:])


@dataclass(frozen=True, eq=False)
class EinsteinAnalysis:
    matrix_field: np.ndarray
    lambda_field: ScalarField
    deviation: float
    einstein_factor: float | None
    tolerance: float

    @property
    def rank(self) -> int:
        return self.matrix_field.shape[-1]

    @property
    def weakly_he(self) -> bool:
        return self.deviation <= self.tolerance

    @property
    def is_he(self) -> bool:
        return self.einstein_factor is not None


def _unitary_conjugate(M: np.ndarray, H) -> np.ndarray:
    """``R M R^{-1}`` with ``H = R^H R``; Hermitian when ``H M`` is."""
    if H is None:
        return M
    L = np.linalg.cholesky(np.broadcast_to(H, M.shape))
    R = np.conj(np.swapaxes(L, -1, -2))
    return R @ M @ np.linalg.inv(R)


def einstein_from_curvature(curv: MatrixPQForm, ctx: GeometryContext, metric=None,
                            tol_we: float | None = None) -> EinsteinAnalysis:
    M = matrix_density(curv, ctx)
    r = M.shape[-1]
    trace = np.trace(M, axis1=-2, axis2=-1)
    lam = ScalarField(ctx.grid, trace.real / r)
    scale = max(1.0, float(np.max(np.abs(M))))
    tol = TOL_WE * scale if tol_we is None else tol_we
    if r == 1:
        deviation = 0.0
    else:
        dev = _unitary_conjugate(M - (trace / r)[..., None, None] * np.eye(r), metric)
        deviation = float(np.max(np.linalg.norm(dev, ord=2, axis=(-2, -1))))
    factor = None
    spread = float(np.max(lam.values.real) - np.min(lam.values.real))
    if deviation <= tol and spread <= tol:
        factor = float(np.mean(lam.values.real))
    return EinsteinAnalysis(np.array(M), lam, deviation, factor, tol)


def einstein_matrix(spec: bd.BundleSpec, ctx: GeometryContext, tol_we: float | None = None) -> EinsteinAnalysis:
    curv = bd.chern_curvature(spec, ctx.n, ctx.grid)
    return einstein_from_curvature(curv, ctx, spec.metric.matrix(ctx.grid), tol_we)


@dataclass(frozen=True, eq=False)
class RescaleResult:
    f: ScalarField
    c: float
    rescaled_metric: bd.BundleSpec
    post_residual: float
    analysis: EinsteinAnalysis


def he_rescale(spec: bd.BundleSpec, ctx: GeometryContext, op: POperatorContext | None = None,
               tol_we: float | None = None) -> RescaleResult:
    """Conformal factor f (mean zero) making the Einstein function constant.

    ``lambda = c + P f`` and ``lambda_{h exp(-f)} = lambda - P f = c``.
    """
    op = op or POperatorContext(ctx)
    analysis = einstein_matrix(spec, ctx, tol_we)
    if spec.rank > 1 and not analysis.weakly_he:
        raise NotWeaklyHE(f"deviation {analysis.deviation:.3e} exceeds {analysis.tolerance:.3e}")
    c, f = decompose(op, analysis.lambda_field)
    c = float(np.real(c))
    rescaled = spec.rescaled(f.real)
    after = einstein_matrix(rescaled, ctx, tol_we)
    post = float(np.max(np.abs(after.lambda_field.values - c)))
    return RescaleResult(f.real, c, rescaled, post, analysis)


class SlopeLink(NamedTuple):
    einstein_factor: float
    slope_over_vol: float
    residual: float


def slope_link_check(spec: bd.BundleSpec, ctx: GeometryContext, tol_we: float | None = None) -> SlopeLink:
    from .stability import slope

    analysis = einstein_matrix(spec, ctx, tol_we)
    if not analysis.is_he:
        raise NotHermiteEinstein(f"deviation {analysis.deviation:.3e}, Einstein function not constant")
    ratio = slope(spec, ctx) / ctx.vol
    lam = analysis.einstein_factor
    return SlopeLink(lam, ratio, abs(lam - ratio))


class VanishingCheck(NamedTuple):
    residual: float
    lhs: ScalarField
    rhs: ScalarField
    lambda_max: float
    inequality_slack: float

    @property
    def inequality_ok(self) -> bool:
        return self.inequality_slack >= -1e-10


def vanishing_identity_check(spec: bd.BundleSpec, s, ctx: GeometryContext,
                             op: POperatorContext | None = None) -> VanishingCheck:
    """Compare ``P|s|^2`` with ``s^H H M s - i{D's, D's}_h ^ K / dV_omega``.

    Only constant sections of holomorphically trivial bundles are accepted.
    """
    op = op or POperatorContext(ctx)
    grid = ctx.grid
    r = spec.rank
    if not spec.holomorphically_trivial:
        raise NonHolomorphicSection("sections are only available on trivial dbar-structures")
    s = np.asarray(s, dtype=complex)
    if s.shape == grid.shape + (r,):
        if np.max(np.abs(s - s.reshape(-1, r)[0])) > 0:
            raise NonHolomorphicSection("non-constant section of a trivial structure")
        s = s.reshape(-1, r)[0]
    if s.shape != (r,):
        raise NonHolomorphicSection(f"section must have {r} components")
    H = np.broadcast_to(spec.metric.matrix(grid), grid.shape + (r, r))
    norm2 = ScalarField(grid, np.einsum("b,...ba,a->...", np.conj(s), H, s).real)
    lhs = apply_P(op, norm2)

    analysis = einstein_matrix(spec, ctx)
    curv_term = np.einsum("b,...ba,...ac,c->...", np.conj(s), H, analysis.matrix_field, s)
    a10 = bd.connection_10(spec, ctx.n, grid)
    eta = np.einsum("...jab,b->...aj", a10.coeffs[..., :, 0, :, :], s)
    bracket = alg.sesquilinear_bracket(eta, eta, _BatchMetric(H))
    bracket = alg.PQForm(ctx.n, 1, 1, bracket.coeffs, grid) * 1j
    second = ctx.density(alg.wedge(bracket, ctx.kernel_form))
    rhs = ScalarField(grid, (curv_term - second).real)
    residual = float(np.max(np.abs(lhs.values - rhs.values)))
    # top eigenvalue of the h-selfadjoint M; equals sup lambda when h is weakly HE
    herm = _unitary_conjugate(analysis.matrix_field, H)
    herm = 0.5 * (herm + np.conj(np.swapaxes(herm, -1, -2)))
    lam_max = float(np.max(np.linalg.eigvalsh(herm)[..., -1]))
    slack = float(np.min(lam_max * norm2.values.real - lhs.values.real))
    return VanishingCheck(residual, lhs, rhs, lam_max, slack)


class _BatchMetric:
    """Light metric holder for grid-valued H (validated by construction)."""

    def __init__(self, h):
        self.h = h


class FactorRecord(NamedTuple):
    operation: str
    predicted: float
    observed: float | None
    residual: float


def bundle_factor_check(specs: Sequence[bd.BundleSpec], ctx: GeometryContext,
                        tol_we: float | None = None) -> list[FactorRecord]:
    """Einstein factors of dual, tensor, End, exterior powers and det of HE inputs."""
    curvs, lams = [], []
    for spec in specs:
        a = einstein_matrix(spec, ctx, tol_we)
        if not a.is_he:
            raise NotHermiteEinstein(f"input {spec.name or '?'} is not Hermite-Einstein")
        curvs.append(bd.chern_curvature(spec, ctx.n, ctx.grid))
        lams.append(a.einstein_factor)

    def observe(op_name, curv, predicted):
        a = einstein_from_curvature(curv, ctx, None, tol_we)
        obs = a.einstein_factor
        res = float("inf") if obs is None else abs(obs - predicted)
        return FactorRecord(op_name, predicted, obs, res)

    out = []
    for k, (curv, lam) in enumerate(zip(curvs, lams)):
        r = curv.rank
        out.append(observe(f"dual[{k}]", bd.transform_curvature(curv, "dual"), -lam))
        out.append(observe(f"end[{k}]", bd.transform_curvature(curv, "end"), 0.0))
        for p in range(1, r + 1):
            out.append(observe(f"wedge{p}[{k}]", bd.transform_curvature(curv, "wedge_power", p=p), p * lam))
        out.append(observe(f"det[{k}]", bd.transform_curvature(curv, "det"), r * lam))
        for j in range(k, len(curvs)):
            out.append(observe(f"tensor[{k},{j}]",
                               bd.transform_curvature(curv, "tensor", curvs[j]), lam + lams[j]))
    return out


def classical_trace(curv: MatrixPQForm, ctx: GeometryContext) -> np.ndarray:
    """``Lambda_omega`` applied entrywise to a matrix (1,1)-form (classical HE trace)."""
    n = ctx.n
    om = ctx.omega
    top = alg.wedge(curv, om.power(n - 1))
    full = om.power(n).coeffs[..., 0, 0]
    out = n * top.coeffs[..., 0, 0, :, :] / np.asarray(full)[..., None, None]
    return np.broadcast_to(out, ctx.grid.shape + out.shape[-2:])

"""The second-order operator P(phi) = -(i ddbar phi ^ omega^(m-1) ^ Omega) / dV_omega.

P has no zeroth-order term, its kernel is the constants, and its range is the
L2-orthogonal complement of the constants.  ``solve_P`` inverts it on mean-zero
functions: exactly by Fourier division when the coefficients are constant,
otherwise by GMRES preconditioned with the constant-coefficient symbol built
from the grid mean of the coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import algebra as alg
from . import fields as fl
from .errors import GridMismatch, IncompatibleRightHandSide, SolverDiverged
from .fields import ScalarField
from .geometry import GeometryContext

DEFAULT_RESIDUAL_TARGET = 1e-9
DEFAULT_COMPAT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class POperatorContext:
    geometry: GeometryContext
    max_iterations: int = 400
    residual_target: float = DEFAULT_RESIDUAL_TARGET
    compat_tol: float = DEFAULT_COMPAT_TOL

    def __post_init__(self):
        if self.residual_target <= 0:
            raise ValueError("residual target must be positive")

    @property
    def grid(self):
        return self.geometry.grid

    @cached_property
    def coefficients(self) -> np.ndarray:
        """a_jk(x) with P phi = -sum_jk a_jk d_j dbar_k phi, shape grid + (n, n)."""
        g = self.geometry
        n = g.n
        out = np.empty(self.grid.shape + (n, n), dtype=complex)
        for j in range(n):
            for k in range(n):
                top = alg.wedge(alg.i_dz_dzbar(n, j, k), g.kernel_form)
                out[..., j, k] = np.broadcast_to(g.density(top), self.grid.shape)
        return out

    @cached_property
    def constant_coefficients(self) -> bool:
        a = self.coefficients
        return bool(np.max(np.abs(a - a.reshape((-1,) + a.shape[-2:])[0])) == 0.0)

    @cached_property
    def symbol(self) -> np.ndarray:
        """Fourier symbol of the constant-coefficient operator with the mean coefficients."""
        grid = self.grid
        n = grid.n
        mean = self.coefficients.reshape((-1, n, n)).mean(axis=0)
        sym = np.zeros(grid.shape, dtype=complex)
        for j in range(n):
            for k in range(n):
                sym = sym - mean[j, k] * grid.dz_symbol(j) * grid.dzbar_symbol(k)
        return sym

    def _apply_array(self, values: np.ndarray) -> np.ndarray:
        grid = self.grid
        spec = grid.fft(values)
        n = grid.n
        a = self.coefficients
        out = np.zeros(grid.shape, dtype=complex)
        for j in range(n):
            for k in range(n):
                if np.any(a[..., j, k]):
                    out -= a[..., j, k] * grid.ifft(spec * grid.dz_symbol(j) * grid.dzbar_symbol(k))
        return out


def _check_grid(ctx: POperatorContext, phi: ScalarField):
    if phi.grid != ctx.grid:
        raise GridMismatch("field and operator live on different grids")


def apply_P(ctx: POperatorContext, phi: ScalarField) -> ScalarField:
    _check_grid(ctx, phi)
    out = ctx._apply_array(phi.values)
    if not np.any(phi.values.imag):
        out = out.real
    return ScalarField(ctx.grid, out)


def apply_P_wedge(ctx: POperatorContext, phi: ScalarField) -> ScalarField:
    """P evaluated literally: wedge i ddbar phi with the kernel form and divide by dV_omega."""
    _check_grid(ctx, phi)
    top = alg.wedge(fl.i_ddbar(phi), ctx.geometry.kernel_form)
    return ScalarField(ctx.grid, -np.broadcast_to(ctx.geometry.density(top), ctx.grid.shape))


def l2_norm(ctx: POperatorContext, phi: ScalarField) -> float:
    return float(np.sqrt(abs(fl.l2_inner(phi, phi, ctx.geometry.dV))))


class AdjointDefect(NamedTuple):
    defect: complex
    predicted: complex
    residual: float


def adjoint_defect(ctx: POperatorContext, phi: ScalarField, psi: ScalarField) -> AdjointDefect:
    """Compare <<phi, P psi>> - <<P phi, psi>> with the first-order correction integral.

    The correction is ``int conj(psi) i (dbar phi ^ dOmega - d phi ^ dbar Omega) ^ omega^(m-1)``.
    ``residual`` is ``|defect - predicted| / (||phi|| ||psi||)``.
    """
    _check_grid(ctx, phi)
    _check_grid(ctx, psi)
    g = ctx.geometry
    dV = g.dV
    defect = fl.l2_inner(phi, apply_P(ctx, psi), dV) - fl.l2_inner(apply_P(ctx, phi), psi, dV)
    om = g.omega_test
    if om.grid is None:
        predicted = 0j
    else:
        first = alg.wedge(fl.dbar(phi), fl.d(om)) - alg.wedge(fl.d(phi), fl.dbar(om))
        integrand = alg.wedge(first * 1j, g.omega.power(g.m - 1)) * psi.conj()
        predicted = fl.integrate_top(integrand)
    scale = l2_norm(ctx, phi) * l2_norm(ctx, psi)
    residual = abs(defect - predicted) / scale if scale > 0 else abs(defect - predicted)
    return AdjointDefect(complex(defect), complex(predicted), float(residual))


def solve_P(ctx: POperatorContext, g: ScalarField) -> ScalarField:
    """Mean-zero solution f of P f = g; g must be L2-orthogonal to the constants."""
    _check_grid(ctx, g)
    grid = ctx.grid
    geom = ctx.geometry
    norm = l2_norm(ctx, g)
    mean_integral = fl.integrate_top(geom.dV * g.values)
    if abs(mean_integral) > ctx.compat_tol * max(norm, 1e-300) * np.sqrt(geom.vol) and norm > 0:
        raise IncompatibleRightHandSide(
            f"|int g dV| = {abs(mean_integral):.3e} is not small against ||g|| = {norm:.3e}")
    return _solve_projected(ctx, g)


def _solve_projected(ctx: POperatorContext, g: ScalarField) -> ScalarField:
    """solve_P without the compatibility test; the constant mode of g is discarded."""
    grid = ctx.grid
    if not np.any(g.values):
        return grid.constant(0.0).real

    null = grid.null_modes
    rhs_spec = grid.fft(g.values)
    rhs_spec[null] = 0.0
    rhs = grid.ifft(rhs_spec)
    sym = np.where(null, 1.0, ctx.symbol)

    def precondition(v):
        return grid.ifft(grid.fft(v.reshape(grid.shape)) / sym).ravel()

    if ctx.constant_coefficients:
        f = grid.ifft(rhs_spec / sym)
        iterations = 0
    else:
        def matvec(v):
            v = v.reshape(grid.shape)
            spec = grid.fft(v)
            return (ctx._apply_array(v) + grid.ifft(np.where(null, spec, 0.0))).ravel()

        size = grid.size
        A = LinearOperator((size, size), matvec=matvec, dtype=complex)
        M = LinearOperator((size, size), matvec=precondition, dtype=complex)
        f = np.zeros(size, dtype=complex)
        iterations = 0
        target = ctx.residual_target * max(1.0, g.sup())
        for _ in range(4):
            r = rhs.ravel() - A.matvec(f)
            if np.max(np.abs(r)) <= 0.1 * target:
                break
            counter = {"k": 0}

            def cb(_rk, counter=counter):
                counter["k"] += 1

            delta, info = gmres(A, r, M=M, rtol=1e-14, atol=0.0, restart=60,
                                maxiter=ctx.max_iterations, callback=cb,
                                callback_type="pr_norm")
            iterations += counter["k"]
            f = f + delta
        f = f.reshape(grid.shape)
    f_spec = grid.fft(f)
    f_spec[null] = 0.0
    f = grid.ifft(f_spec)
    if not np.any(g.values.imag):
        f = f.real
    sol = ScalarField(grid, f)
    residual = float(np.max(np.abs(apply_P(ctx, sol).values - rhs)))
    if residual > ctx.residual_target * max(1.0, g.sup()):
        raise SolverDiverged(iterations, residual)
    return sol


def decompose(ctx: POperatorContext, lam: ScalarField):
    """Split ``lam = c + P f`` with c constant and f of mean zero."""
    geom = ctx.geometry
    c = fl.integrate_top(geom.dV * lam.values) / geom.vol
    if not np.any(lam.values.imag):
        c = c.real
    # lam - c is compatible by construction; round-off in its mean is projected out
    _check_grid(ctx, lam)
    f = _solve_projected(ctx, lam - c)
    return c, f

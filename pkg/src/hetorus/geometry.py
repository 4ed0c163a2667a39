"""The pair (omega, Omega): a Kähler form and a weakly positive ddbar-closed test form."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial

import numpy as np

from . import algebra as alg
from . import fields as fl
from .algebra import PQForm
from .errors import (BidegreeMismatch, InvalidAuxiliaryPotential, NotDdbarClosed,
                     NotPositiveDefinite, NotWeaklyPositive, PositivityLostAtEpsilon)
from .fields import ScalarField, TorusGrid

DEFAULT_TOL_CLOSED = 1e-10
DEFAULT_DELTA = 1e-10
DEFAULT_STRIDE = 8
DEFAULT_DIRECTIONS = 32


@dataclass(frozen=True, eq=False)
class GeometryContext:
    grid: TorusGrid
    m: int
    omega: PQForm
    omega_test: PQForm
    dV: PQForm
    vol: float
    validation: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.n

    @cached_property
    def kernel_form(self) -> PQForm:
        """omega^(m-1) ^ Omega, the (n-1,n-1)-form every density is paired with."""
        return alg.wedge(self.omega.power(self.m - 1), self.omega_test)

    @cached_property
    def dV_density(self):
        """dV_omega / dV_n (a number, or an array for variable omega)."""
        return alg.top_ratio(self.dV, alg.volume_form(self.n)).real

    def density(self, top: PQForm):
        """Ratio of an (n,n)-form to dV_omega."""
        return alg.top_ratio(top, self.dV)

    @cached_property
    def d_omega_test_sup(self) -> float:
        """sup|dOmega| (holomorphic part); nonzero for non-closed test forms."""
        if self.omega_test.grid is None:
            return 0.0
        return fl.d(self.omega_test).sup_norm()


def _min_eigen(omega: PQForm):
    g = alg.gram_matrix(omega)
    herm = float(np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2)))))
    eig = np.linalg.eigvalsh(0.5 * (g + np.conj(np.swapaxes(g, -1, -2))))
    low = eig[..., 0]
    k = int(np.argmin(low))
    return float(low.flat[k]), k, herm


def validate_structures(grid: TorusGrid, omega: PQForm, omega_test: PQForm, m: int,
                        tol_closed: float = DEFAULT_TOL_CLOSED, delta: float = DEFAULT_DELTA,
                        stride: int = DEFAULT_STRIDE, directions: int = DEFAULT_DIRECTIONS,
                        seed: int = 0) -> GeometryContext:
    """Check the standing hypotheses and return an immutable context.

    omega must be a real positive (1,1)-form at every grid point; Omega a real
    (n-m, n-m)-form with sup|ddbar Omega| <= tol_closed * sup|Omega| that passes
    randomized weak-positivity sampling at every ``stride``-th point.
    """
    n = grid.n
    if not 1 <= m <= n:
        raise BidegreeMismatch(f"level m={m} outside 1..{n}")
    if omega.bidegree != (1, 1) or omega.n != n:
        raise BidegreeMismatch(f"omega must be a (1,1)-form on C^{n}, got {omega.bidegree}")
    if omega_test.bidegree != (n - m, n - m) or omega_test.n != n:
        raise BidegreeMismatch(f"Omega must have bidegree {(n - m, n - m)}, got {omega_test.bidegree}")
    record = {}

    low, k, herm = _min_eigen(omega)
    record["omega_min_eigenvalue"] = low
    record["omega_real_residual"] = herm
    if herm > 1e-12 * max(1.0, omega.sup_norm()) or low <= 0:
        point = np.unravel_index(k, omega.batch_shape) if omega.batch_shape else ()
        raise NotPositiveDefinite(tuple(int(i) for i in point), low)

    scale = max(1.0, omega_test.sup_norm())
    real_res = omega_test.real_residual()
    record["omega_test_real_residual"] = real_res
    if real_res > 1e-12 * scale:
        raise NotWeaklyPositive(None, None)

    if omega_test.grid is None:
        ddbar_res = 0.0
    else:
        ddbar_res = fl.d(fl.dbar(omega_test)).sup_norm()
    record["ddbar_residual"] = ddbar_res
    record["ddbar_tolerance"] = tol_closed * scale
    if ddbar_res > tol_closed * scale:
        raise NotDdbarClosed(ddbar_res, tol_closed * scale)

    # positivity sampling on a subsample of points
    if omega_test.batch_shape:
        flat = omega_test.coeffs.reshape((-1,) + omega_test.coeffs.shape[-2:])[::stride]
        probe = PQForm(n, n - m, n - m, flat)
    else:
        probe = omega_test
    verdict = alg.weak_positivity_sample(probe, trials=directions, delta=delta, rng_seed=seed)
    if isinstance(verdict, alg.CertifiedNegative):
        raise NotWeaklyPositive(verdict.witness, verdict.density)
    record["positivity_min_density"] = verdict.min_density
    record["positivity_points"] = int(probe.coeffs.size // probe.coeffs.shape[-1] // probe.coeffs.shape[-2])

    dV = omega.power(n) * (1.0 / factorial(n))
    vol = fl.integrate_top(dV).real
    ctx = GeometryContext(grid, m, omega, omega_test, dV, float(vol), record)
    kf = ctx.kernel_form
    record["kernel_ddbar_residual"] = (fl.d(fl.dbar(kf)).sup_norm()
                                       if kf.grid is not None else 0.0)
    record["d_omega_test_sup"] = ctx.d_omega_test_sup
    return ctx


def block_diagonal_form(n: int, k: int, weights) -> PQForm:
    """``sum_K w_K prod_{j in K} i dz_j ^ dzbar_j`` over increasing k-tuples K."""
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (comb(n, k),))
    out = alg.zeros(n, k, k)
    for w, K in zip(weights, alg.multi_indices(n, k)):
        term = alg.one(n)
        for j in K:
            term = alg.wedge(term, alg.i_dz_dzbar(n, j, j))
        out = out + term * w
    return out


def generate_test_form(grid: TorusGrid, m: int, mode: str = "constant", omega0: PQForm | None = None,
                       **params) -> PQForm:
    """Build a ddbar-closed, weakly positive test form Omega of bidegree (n-m, n-m).

    Modes:

    ``constant``
        ``params['form']`` (a constant PQForm) or ``params['weights']`` for a
        block-diagonal form; defaults to ``omega0^(n-m)``.
    ``kahler_power``
        ``Omega = (omega0 + i ddbar rho)^(n-m)`` for the potential
        ``params['rho']`` (a real ScalarField).  Closed, hence ddbar-closed.
    ``ddbar_closed_perturbation``
        ``Omega = Omega0 + eps (du + dbar(conj u))`` for an (n-m-1, n-m)-form
        field ``params['u']``; ddbar-closed but generally not closed.
    """
    n = grid.n
    k = n - m
    omega0 = alg.flat_kahler(n) if omega0 is None else omega0
    check = dict(tol_closed=params.pop("tol_closed", DEFAULT_TOL_CLOSED),
                 delta=params.pop("delta", DEFAULT_DELTA),
                 seed=params.pop("seed", 0))
    if mode == "constant":
        if "form" in params:
            out = params["form"]
        elif "weights" in params:
            out = block_diagonal_form(n, k, params["weights"])
        else:
            out = omega0.power(k)
        validate_structures(grid, omega0, out, m, **check)
        return out
    if mode == "kahler_power":
        rho: ScalarField = params["rho"]
        if np.max(np.abs(rho.values.imag)) > 1e-14 * max(1.0, rho.sup()):
            raise InvalidAuxiliaryPotential("potential must be real")
        aux = fl.constant_field(grid, omega0) + fl.i_ddbar(rho.real)
        low, _, _ = _min_eigen(aux)
        if low <= 0:
            raise InvalidAuxiliaryPotential(f"omega0 + i ddbar rho not positive (min eigenvalue {low:.3e})")
        out = aux.power(k)
        if out.grid is None:
            out = fl.constant_field(grid, out)
        validate_structures(grid, omega0, out, m, **check)
        return out
    if mode == "ddbar_closed_perturbation":
        if k < 1:
            raise BidegreeMismatch("perturbation mode needs n - m >= 1")
        u: PQForm = params["u"]
        eps = float(params.get("eps", 1.0))
        if u.bidegree != (k - 1, k):
            raise BidegreeMismatch(f"u must have bidegree {(k - 1, k)}, got {u.bidegree}")
        base = params.get("base", omega0.power(k))
        correction = fl.d(u) + fl.dbar(u.conjugate())
        out = fl.constant_field(grid, base) + correction * eps if base.grid is None else base + correction * eps
        try:
            validate_structures(grid, omega0, out, m, **check)
        except NotWeaklyPositive as exc:
            raise PositivityLostAtEpsilon(f"eps={eps} destroys weak positivity") from exc
        return out
    raise ValueError(f"unknown test-form mode {mode!r}")


def make_context(n: int = 2, m: int = 1, points_per_axis: int = 16, mode: str = "constant",
                 omega: PQForm | None = None, **params) -> GeometryContext:
    """Convenience constructor: grid + generated Omega + validated context."""
    grid = TorusGrid(n, points_per_axis)
    omega = alg.flat_kahler(n) if omega is None else omega
    check = {key: params[key] for key in ("tol_closed", "delta", "seed") if key in params}
    omega_test = generate_test_form(grid, m, mode, omega, **params)
    return validate_structures(grid, omega, omega_test, m, **check)


def trig_field(grid: TorusGrid, terms) -> ScalarField:
    """Sum of ``amplitude * cos|sin(2 pi k . (x, y))`` terms.

    Each term is ``(amplitude, wave, kind)`` where ``wave`` lists integer
    wavenumbers for the axes ``(x_1, y_1, ..., x_n, y_n)``.
    """
    xs, ys = grid.coords()
    axes = [c for pair in zip(xs, ys) for c in pair]

    def fn(_x, _y):
        total = 0.0
        for amplitude, wave, kind in terms:
            arg = sum(2 * np.pi * kk * a for kk, a in zip(wave, axes))
            total = total + amplitude * (np.cos(arg) if kind == "cos" else np.sin(arg))
        return total

    return grid.evaluate(fn)

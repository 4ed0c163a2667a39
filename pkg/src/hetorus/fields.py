"""Grid-sampled fields on the flat torus C^n / (Z + iZ)^n.

Real coordinates are ``z_j = x_j + i y_j`` with ``x_j, y_j`` in [0, 1).  Grid
arrays have ``2n`` leading axes ordered ``(x_1, y_1, ..., x_n, y_n)``, each of
length ``N``.  Form fields are :class:`~hetorus.algebra.PQForm` /
:class:`~hetorus.algebra.MatrixPQForm` instances whose coefficient arrays carry
the grid axes in front and whose ``grid`` attribute is set.

Derivatives are Fourier multipliers with the Nyquist mode of each first
derivative set to zero, so composite operators (such as ``i d dbar``) have the
exact symbol used by the preconditioner in :mod:`hetorus.operator`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import algebra as alg
from .algebra import MatrixPQForm, PQForm
from .errors import BidegreeMismatch, GridMismatch, NonFiniteInput

DEFAULT_POINT_BUDGET = 1 << 22


@dataclass(frozen=True)
class TorusGrid:
    n: int
    points_per_axis: int
    point_budget: int = DEFAULT_POINT_BUDGET

    def __post_init__(self):
        N = self.points_per_axis
        if not 1 <= self.n <= alg.MAX_DIM:
            raise ValueError(f"n={self.n} outside 1..{alg.MAX_DIM}")
        if N < 4 or N % 2:
            raise ValueError(f"points_per_axis must be even and >= 4, got {N}")
        if N ** (2 * self.n) > self.point_budget:
            raise ValueError(f"grid with {N}^{2 * self.n} points exceeds budget {self.point_budget}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * (2 * self.n)

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def size(self) -> int:
        return self.points_per_axis ** (2 * self.n)

    @property
    def volume_dVn(self) -> float:
        """Integral of dV_n over the unit torus: each i dz^dzbar is 2 dx^dy."""
        return float(2 ** self.n)

    def coords(self):
        """Sparse coordinate arrays ``(xs, ys)``, each a list of n broadcastable arrays."""
        N = self.points_per_axis
        t = np.arange(N) / N
        xs, ys = [], []
        for a in range(self.ndim):
            shape = [1] * self.ndim
            shape[a] = N
            (xs if a % 2 == 0 else ys).append(t.reshape(shape))
        return xs, ys

    def evaluate(self, fn) -> "ScalarField":
        xs, ys = self.coords()
        return ScalarField(self, np.broadcast_to(fn(xs, ys), self.shape).astype(complex))

    def constant(self, value) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, value, dtype=complex))

    @cached_property
    def _axis_multipliers(self):
        """2*pi*i*k per axis with the Nyquist entry zeroed, shaped for broadcasting."""
        N = self.points_per_axis
        k = np.fft.fftfreq(N, 1.0 / N)
        mult = 2j * np.pi * k
        mult[N // 2] = 0.0
        out = []
        for a in range(self.ndim):
            shape = [1] * self.ndim
            shape[a] = N
            out.append(mult.reshape(shape))
        return out

    def dz_symbol(self, j: int) -> np.ndarray:
        """Fourier symbol of d/dz_j = (d/dx_j - i d/dy_j) / 2."""
        m = self._axis_multipliers
        return 0.5 * (m[2 * j] - 1j * m[2 * j + 1])

    def dzbar_symbol(self, j: int) -> np.ndarray:
        m = self._axis_multipliers
        return 0.5 * (m[2 * j] + 1j * m[2 * j + 1])

    @cached_property
    def null_modes(self) -> np.ndarray:
        """Boolean mask of Fourier modes annihilated by every first derivative."""
        mask = np.ones(self.shape, dtype=bool)
        for m in self._axis_multipliers:
            mask = mask & (m == 0)
        return mask

    def fft(self, arr):
        return np.fft.fftn(arr, axes=tuple(range(self.ndim)))

    def ifft(self, arr):
        return np.fft.ifftn(arr, axes=tuple(range(self.ndim)))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise GridMismatch(f"values shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatch("scalar fields on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        if isinstance(other, (PQForm, MatrixPQForm)):
            return other * self
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def conj(self) -> "ScalarField":
        return ScalarField(self.grid, np.conj(self.values))

    @property
    def real(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.real)

    def exp(self) -> "ScalarField":
        return ScalarField(self.grid, np.exp(self.values))

    def mean(self) -> complex:
        return complex(np.mean(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def as_form(self) -> PQForm:
        return PQForm(self.grid.n, 0, 0, self.values[..., None, None], self.grid)

    def is_constant(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.values - self.values.flat[0]))) <= tol * max(1.0, self.sup())


def as_field(form: PQForm) -> ScalarField:
    """View a (0,0)-form field as a scalar field."""
    if form.bidegree != (0, 0) or form.grid is None:
        raise BidegreeMismatch("expected a (0,0)-form field")
    return ScalarField(form.grid, form.coeffs[..., 0, 0])


def constant_field(grid: TorusGrid, form):
    """Broadcast a constant (matrix-)form to every grid point."""
    c = np.broadcast_to(form.coeffs, grid.shape + form.coeffs.shape).copy()
    return type(form)(form.n, form.p, form.q, c, grid)


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, bandwidth: int = 1,
                        amplitude: float = 1.0, real: bool = True, normalize: str = "sup") -> ScalarField:
    """Random trigonometric polynomial with |k| <= bandwidth on every axis.

    The mean is removed.  ``normalize="sup"`` scales to the requested sup norm
    on the grid; ``"l1"`` divides by the l1 norm of the Fourier coefficients,
    which makes the function independent of the grid size (and bounds the sup
    norm by ``amplitude``).
    """
    N = grid.points_per_axis
    if 2 * bandwidth >= N:
        raise ValueError("bandwidth must stay below the Nyquist mode")
    spec = np.zeros(grid.shape, dtype=complex)
    box = tuple(np.r_[0:bandwidth + 1, N - bandwidth:N] for _ in range(grid.ndim))
    sub = np.ix_(*box)
    spec[sub] = rng.standard_normal(spec[sub].shape) + 1j * rng.standard_normal(spec[sub].shape)
    spec[(0,) * grid.ndim] = 0.0
    v = grid.ifft(spec) * grid.size
    if real:
        v = v.real
    if normalize == "l1":
        v = v / np.sum(np.abs(spec)) * amplitude
    else:
        v = v / np.max(np.abs(v)) * amplitude
    return ScalarField(grid, v)


# -- differentiation ----------------------------------------------------------

def _coefficient_derivatives(coeffs, grid: TorusGrid, bar: bool):
    if not np.all(np.isfinite(coeffs)):
        raise NonFiniteInput("field contains NaN or inf")
    spec = grid.fft(coeffs)
    extra = (1,) * (coeffs.ndim - grid.ndim)
    out = []
    for j in range(grid.n):
        sym = grid.dzbar_symbol(j) if bar else grid.dz_symbol(j)
        out.append(grid.ifft(spec * sym.reshape(sym.shape + extra)))
    return out


def _as_form_field(f):
    if isinstance(f, ScalarField):
        return f.as_form()
    if f.grid is None:
        raise GridMismatch("form is not attached to a grid")
    return f


def d(f):
    """Holomorphic exterior derivative: sum_j dz_j ^ d/dz_j (coefficients)."""
    form = _as_form_field(f)
    return _apply(form, bar=False)


def dbar(f):
    form = _as_form_field(f)
    return _apply(form, bar=True)


def i_ddbar(f):
    return d(dbar(f)) * 1j


def _apply(form, bar: bool):
    grid, n = form.grid, form.n
    parts = _coefficient_derivatives(form.coeffs, grid, bar)
    out = None
    for j, c in enumerate(parts):
        piece = type(form)(n, form.p, form.q, c, grid)
        term = alg.wedge(alg.dzbar(n, j) if bar else alg.dz(n, j), piece)
        out = term if out is None else out + term
    return out


def spectral_derivatives(f, which: str):
    """Apply ``d``, ``d_bar`` or ``i_ddbar`` to a scalar or form field."""
    ops = {"d": d, "d_bar": dbar, "i_ddbar": i_ddbar}
    try:
        return ops[which](f)
    except KeyError:
        raise ValueError(f"unknown derivative {which!r}; choose from {sorted(ops)}") from None


def derivative_matrix(phi: ScalarField) -> np.ndarray:
    """Complex Hessian ``d/dz_j d/dzbar_k phi`` as an array ``grid.shape + (n, n)``."""
    grid = phi.grid
    spec = grid.fft(phi.values)
    n = grid.n
    out = np.empty(grid.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            out[..., j, k] = grid.ifft(spec * grid.dz_symbol(j) * grid.dzbar_symbol(k))
    return out


# -- integration --------------------------------------------------------------

def integrate_top(t: PQForm) -> complex:
    """Integral of an (n,n)-form over the unit torus (trapezoidal rule)."""
    n = t.n
    if t.bidegree != (n, n):
        raise BidegreeMismatch(f"integrate_top needs an ({n},{n})-form, got {t.bidegree}")
    dens = alg.top_ratio(t, alg.volume_form(n))
    return complex(np.mean(dens)) * 2.0 ** n


def l2_inner(phi: ScalarField, psi: ScalarField, dV: PQForm) -> complex:
    """``<<phi, psi>> = int phi * conj(psi) dV``."""
    if phi.grid != psi.grid or (dV.grid is not None and dV.grid != phi.grid):
        raise GridMismatch("l2_inner arguments on different grids")
    return integrate_top(dV * (phi.values * np.conj(psi.values)))

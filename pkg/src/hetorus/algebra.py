"""Exterior algebra of complex (p,q)-covectors on C^n.

A form of bidegree (p,q) is stored densely: ``coeffs[..., I, J]`` is the
coefficient of ``dz_I ^ dzbar_J`` where ``I`` runs over increasing p-tuples and
``J`` over increasing q-tuples, both in lexicographic order (the order of
``itertools.combinations``).  All holomorphic differentials are written before
the antiholomorphic ones.

Leading axes of ``coeffs`` are batch axes, so the same class represents a
single covector or a whole grid of them (a form field).  Matrix-valued forms
(``MatrixPQForm``) carry two trailing fibre axes after the multi-index axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb, factorial
from typing import Any, Sequence

import numpy as np

from .errors import (BidegreeMismatch, DegenerateMetric, DegreeOverflow,
                     RankMismatch, ShapeMismatch, ZeroVolumeForm, GridMismatch)

MAX_DIM = 4


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def _slot(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {I: a for a, I in enumerate(multi_indices(n, k))}


def _merge(first: tuple[int, ...], second: tuple[int, ...]):
    """Sign and sorted union of ``first + second``, or ``(0, None)`` on overlap."""
    if set(first) & set(second):
        return 0, None
    seq = first + second
    inversions = sum(1 for a in range(len(seq)) for b in range(a + 1, len(seq))
                     if seq[a] > seq[b])
    return (-1) ** inversions, tuple(sorted(seq))


@lru_cache(maxsize=None)
def wedge_table(n: int, pa: int, qa: int, pb: int, qb: int):
    """Structure constants of the wedge product between two bidegrees.

    Returns tuples ``(ia, ja, ib, jb, i, j, sign)`` meaning that
    ``(dz_Ia ^ dzbar_Ja) ^ (dz_Ib ^ dzbar_Jb) = sign * dz_I ^ dzbar_J``.
    """
    out_slot_p = _slot(n, pa + pb)
    out_slot_q = _slot(n, qa + qb)
    entries = []
    for ia, I in enumerate(multi_indices(n, pa)):
        for ib, K in enumerate(multi_indices(n, pb)):
            s1, IK = _merge(I, K)
            if not s1:
                continue
            for ja, J in enumerate(multi_indices(n, qa)):
                # moving dz_K across dzbar_J
                cross = (-1) ** (len(J) * len(K))
                for jb, L in enumerate(multi_indices(n, qb)):
                    s2, JL = _merge(J, L)
                    if not s2:
                        continue
                    entries.append((ia, ja, ib, jb, out_slot_p[IK], out_slot_q[JL],
                                    s1 * s2 * cross))
    return tuple(entries)


def _join_grid(a, b):
    if a is None:
        return b
    if b is None or b is a:
        return a
    if a != b:
        raise GridMismatch(f"forms live on different grids: {a} vs {b}")
    return a


class _FormMixin:
    """Arithmetic shared by scalar- and matrix-valued forms."""

    fibre_ndim = 0

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:self.coeffs.ndim - 2 - self.fibre_ndim]

    @property
    def bidegree(self) -> tuple[int, int]:
        return (self.p, self.q)

    def _like(self, coeffs, p=None, q=None, grid=None):
        return type(self)(self.n, self.p if p is None else p, self.q if q is None else q,
                          coeffs, grid if grid is not None else self.grid)

    def _check_same(self, other):
        if type(other) is not type(self) or (self.n, self.p, self.q) != (other.n, other.p, other.q):
            raise BidegreeMismatch(
                f"cannot combine {type(self).__name__}{(self.n, self.p, self.q)} with "
                f"{type(other).__name__}{(getattr(other, 'n', None), getattr(other, 'p', None), getattr(other, 'q', None))}")
        return _join_grid(self.grid, other.grid)

    def __add__(self, other):
        grid = self._check_same(other)
        return self._like(self.coeffs + other.coeffs, grid=grid)

    def __sub__(self, other):
        grid = self._check_same(other)
        return self._like(self.coeffs - other.coeffs, grid=grid)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, scalar):
        """Multiply by a number or by a batch of numbers (shape ``batch_shape``)."""
        s = np.asarray(getattr(scalar, "values", scalar))
        grid = _join_grid(self.grid, getattr(scalar, "grid", None))
        if s.ndim:
            s = s.reshape(s.shape + (1,) * (2 + self.fibre_ndim))
        return self._like(self.coeffs * s, grid=grid)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / np.asarray(getattr(scalar, "values", scalar)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def wedge(self, other):
        return wedge(self, other)

    def power(self, k: int):
        """k-fold wedge power (k = 0 gives the constant 1)."""
        if k < 0:
            raise ValueError("negative power")
        if self.fibre_ndim:
            raise TypeError("powers are defined for scalar forms only")
        out = one(self.n)
        for _ in range(k):
            out = wedge(out, self)
        return out


@dataclass(frozen=True, eq=False)
class PQForm(_FormMixin):
    """Complex (p,q)-form (or a batch of them) on C^n."""

    n: int
    p: int
    q: int
    coeffs: np.ndarray
    grid: Any = None

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension n={self.n} outside 1..{MAX_DIM}")
        if not (0 <= self.p <= self.n and 0 <= self.q <= self.n):
            raise DegreeOverflow(f"bidegree ({self.p},{self.q}) not representable for n={self.n}")
        c = np.asarray(self.coeffs, dtype=complex)
        want = (comb(self.n, self.p), comb(self.n, self.q))
        if c.ndim < 2 or c.shape[-2:] != want:
            raise ShapeMismatch(f"coefficient block {c.shape[-2:]} != {want}")
        object.__setattr__(self, "coeffs", c)

    def conjugate(self) -> "PQForm":
        sign = (-1) ** (self.p * self.q)
        return PQForm(self.n, self.q, self.p, sign * np.conj(np.swapaxes(self.coeffs, -1, -2)), self.grid)

    def real_residual(self) -> float:
        """sup-norm of ``conjugate(a) - a``; zero for real (p,p)-forms."""
        if self.p != self.q:
            return float("inf")
        return (self.conjugate() - self).sup_norm()

    def is_real(self, tol: float = 1e-13) -> bool:
        return self.real_residual() <= tol * max(1.0, self.sup_norm())

    def __repr__(self):
        return f"PQForm(n={self.n}, ({self.p},{self.q}), batch={self.batch_shape})"


@dataclass(frozen=True, eq=False)
class MatrixPQForm(_FormMixin):
    """(p,q)-form with values in a×b complex matrices (Hom- or End-valued)."""

    n: int
    p: int
    q: int
    coeffs: np.ndarray
    grid: Any = None

    fibre_ndim = 2

    def __post_init__(self):
        if not (0 <= self.p <= self.n and 0 <= self.q <= self.n):
            raise DegreeOverflow(f"bidegree ({self.p},{self.q}) not representable for n={self.n}")
        c = np.asarray(self.coeffs, dtype=complex)
        want = (comb(self.n, self.p), comb(self.n, self.q))
        if c.ndim < 4 or c.shape[-4:-2] != want:
            raise ShapeMismatch(f"coefficient block {c.shape[-4:-2]} != {want}")
        object.__setattr__(self, "coeffs", c)

    @property
    def fibre_shape(self) -> tuple[int, int]:
        return self.coeffs.shape[-2:]

    @property
    def rank(self) -> int:
        a, b = self.fibre_shape
        if a != b:
            raise RankMismatch(f"non-square fibre {self.fibre_shape}")
        return a

    def conjugate(self) -> "MatrixPQForm":
        """Entrywise conjugate (no transpose)."""
        sign = (-1) ** (self.p * self.q)
        c = sign * np.conj(np.swapaxes(self.coeffs, -3, -4))
        return MatrixPQForm(self.n, self.q, self.p, c, self.grid)

    def adjoint(self) -> "MatrixPQForm":
        """Conjugate transpose, e.g. beta* = transpose(conj(beta)) in unitary frames."""
        c = self.conjugate().coeffs
        return MatrixPQForm(self.n, self.q, self.p, np.swapaxes(c, -1, -2), self.grid)

    def trace(self) -> PQForm:
        return PQForm(self.n, self.p, self.q, np.trace(self.coeffs, axis1=-2, axis2=-1), self.grid)

    def block(self, rows: slice, cols: slice) -> "MatrixPQForm":
        return self._like(self.coeffs[..., rows, cols])

    def lmul(self, mat) -> "MatrixPQForm":
        """Left-multiply every coefficient by a (batched) matrix function."""
        m = np.asarray(mat)
        m = m.reshape(m.shape[:-2] + (1, 1) + m.shape[-2:])
        return self._like(m @ self.coeffs)

    def rmul(self, mat) -> "MatrixPQForm":
        m = np.asarray(mat)
        m = m.reshape(m.shape[:-2] + (1, 1) + m.shape[-2:])
        return self._like(self.coeffs @ m)

    def hermitian_residual(self, metric=None) -> float:
        """How far ``metric @ self`` is from being self-adjoint as a form.

        For a real (p,p)-form with values in End(E) (such as iTheta) the
        lowered form ``h @ F`` satisfies ``adjoint(h F) = h F``.
        """
        lowered = self if metric is None else self.lmul(metric)
        return (lowered.adjoint() - lowered).sup_norm()

    def __repr__(self):
        return (f"MatrixPQForm(n={self.n}, ({self.p},{self.q}), fibre={self.fibre_shape}, "
                f"batch={self.batch_shape})")


def wedge(a, b):
    """Wedge product; matrix-valued factors are multiplied as matrices."""
    if a.n != b.n:
        raise BidegreeMismatch(f"dimension mismatch {a.n} vs {b.n}")
    n = a.n
    p, q = a.p + b.p, a.q + b.q
    if p > n or q > n:
        raise DegreeOverflow(f"({a.p},{a.q}) ^ ({b.p},{b.q}) exceeds ({n},{n})")
    grid = _join_grid(a.grid, b.grid)
    ma, mb = a.fibre_ndim == 2, b.fibre_ndim == 2
    ca, cb = a.coeffs, b.coeffs
    if ma and mb:
        prod = lambda x, y: x @ y  # noqa: E731
    elif ma:
        prod = lambda x, y: x * y[..., None, None]  # noqa: E731
    elif mb:
        prod = lambda x, y: x[..., None, None] * y  # noqa: E731
    else:
        prod = lambda x, y: x * y  # noqa: E731
    if ma:
        ca = np.moveaxis(ca, (-4, -3), (0, 1))
    else:
        ca = np.moveaxis(ca, (-2, -1), (0, 1))
    if mb:
        cb = np.moveaxis(cb, (-4, -3), (0, 1))
    else:
        cb = np.moveaxis(cb, (-2, -1), (0, 1))
    out = None
    for ia, ja, ib, jb, i, j, sign in wedge_table(n, a.p, a.q, b.p, b.q):
        term = prod(ca[ia, ja], cb[ib, jb])
        if out is None:
            out = np.zeros((comb(n, p), comb(n, q)) + term.shape, dtype=complex)
        if sign > 0:
            out[i, j] += term
        else:
            out[i, j] -= term
    if out is None:
        # no admissible index combination: the product vanishes identically
        term = prod(ca[0, 0], cb[0, 0])
        out = np.zeros((comb(n, p), comb(n, q)) + term.shape, dtype=complex)
    if ma or mb:
        out = np.moveaxis(out, (0, 1), (-4, -3))
        return MatrixPQForm(n, p, q, out, grid)
    return PQForm(n, p, q, np.moveaxis(out, (0, 1), (-2, -1)), grid)


def conjugate(a):
    return a.conjugate()


# -- constructors -------------------------------------------------------------

def zeros(n: int, p: int, q: int, batch: tuple[int, ...] = ()) -> PQForm:
    return PQForm(n, p, q, np.zeros(batch + (comb(n, p), comb(n, q)), dtype=complex))


def one(n: int) -> PQForm:
    return PQForm(n, 0, 0, np.ones((1, 1), dtype=complex))


def scalar_form(n: int, values) -> PQForm:
    """(0,0)-form from a number or an array of numbers."""
    v = np.asarray(values, dtype=complex)
    return PQForm(n, 0, 0, v[..., None, None])


def basis_form(n: int, I: Sequence[int], J: Sequence[int], coeff: complex = 1.0) -> PQForm:
    """``coeff * dz_I ^ dzbar_J`` with zero-based indices (any order, sign applied)."""
    I, J = tuple(I), tuple(J)
    if len(set(I)) < len(I) or len(set(J)) < len(J):
        return zeros(n, len(I), len(J))
    sI, sortI = _merge(I, ())
    sJ, sortJ = _merge(J, ())
    c = np.zeros((comb(n, len(I)), comb(n, len(J))), dtype=complex)
    c[_slot(n, len(I))[sortI], _slot(n, len(J))[sortJ]] = sI * sJ * coeff
    return PQForm(n, len(I), len(J), c)


def dz(n: int, j: int) -> PQForm:
    return basis_form(n, (j,), ())


def dzbar(n: int, j: int) -> PQForm:
    return basis_form(n, (), (j,))


def i_dz_dzbar(n: int, j: int, k: int) -> PQForm:
    """``i dz_j ^ dzbar_k``."""
    return basis_form(n, (j,), (k,), 1j)


def one_zero_form(coeffs) -> PQForm:
    """(1,0)-form(s) ``sum_j c_j dz_j`` from an array ``(..., n)``."""
    c = np.asarray(coeffs, dtype=complex)
    return PQForm(c.shape[-1], 1, 0, c[..., :, None])


def kahler_form(gram) -> PQForm:
    """Real (1,1)-form ``i sum g_jk dz_j ^ dzbar_k`` from a Hermitian matrix (batch allowed)."""
    g = np.asarray(gram, dtype=complex)
    return PQForm(g.shape[-1], 1, 1, 1j * g)


def gram_matrix(omega: PQForm) -> np.ndarray:
    """Inverse of :func:`kahler_form`: the Hermitian matrix g with omega = i g_jk dz_j^dzbar_k."""
    if omega.bidegree != (1, 1):
        raise BidegreeMismatch(f"expected a (1,1)-form, got {omega.bidegree}")
    return -1j * omega.coeffs


def flat_kahler(n: int) -> PQForm:
    return kahler_form(np.eye(n))


def volume_form(n: int) -> PQForm:
    """dV_n = i dz_1^dzbar_1 ^ ... ^ i dz_n^dzbar_n."""
    out = one(n)
    for j in range(n):
        out = wedge(out, i_dz_dzbar(n, j, j))
    return out


# -- pointwise operations -----------------------------------------------------

def top_ratio(t: PQForm, dV: PQForm):
    """The function c with ``t = c * dV`` for top-degree forms."""
    n = t.n
    if t.bidegree != (n, n) or dV.bidegree != (n, n):
        raise BidegreeMismatch(f"top_ratio needs ({n},{n})-forms, got {t.bidegree}, {dV.bidegree}")
    denom = dV.coeffs[..., 0, 0]
    if np.any(np.abs(denom) == 0):
        raise ZeroVolumeForm("volume form vanishes")
    return t.coeffs[..., 0, 0] / denom


def _check_positive(omega: PQForm) -> np.ndarray:
    g = gram_matrix(omega)
    if np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2)))) > 1e-12 * max(1.0, np.max(np.abs(g))):
        raise DegenerateMetric("omega is not a real (1,1)-form")
    if np.min(np.linalg.eigvalsh(g)) <= 0:
        raise DegenerateMetric("omega is not positive definite")
    return g


def lambda_contract(gamma: PQForm, omega: PQForm):
    """Trace of a (1,1)-form against omega: ``gamma ^ omega^(n-1) = (L/n) omega^n``."""
    if gamma.bidegree != (1, 1):
        raise BidegreeMismatch(f"expected a (1,1)-form, got {gamma.bidegree}")
    _check_positive(omega)
    n = omega.n
    return n * top_ratio(wedge(gamma, omega.power(n - 1)), omega.power(n))


@dataclass(frozen=True, eq=False)
class FibreMetric:
    """Hermitian positive-definite fibre metric, ``h(u, v) = v^H @ h @ u``."""

    h: np.ndarray

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        if h.shape[-1] != h.shape[-2]:
            raise ShapeMismatch(f"metric must be square, got {h.shape}")
        if np.max(np.abs(h - np.conj(np.swapaxes(h, -1, -2)))) > 1e-12 * max(1.0, np.max(np.abs(h))):
            raise DegenerateMetric("fibre metric is not Hermitian")
        try:
            np.linalg.cholesky(h)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMetric("fibre metric is not positive definite") from exc
        object.__setattr__(self, "h", h)

    @property
    def rank(self) -> int:
        return self.h.shape[-1]

    @classmethod
    def identity(cls, r: int) -> "FibreMetric":
        return cls(np.eye(r))


def _as_vector_forms(eta, n=None) -> np.ndarray:
    """Coefficient array ``(..., r, n)`` for a vector of (1,0)-forms."""
    if isinstance(eta, (list, tuple)) and eta and isinstance(eta[0], PQForm):
        for e in eta:
            if e.bidegree != (1, 0):
                raise BidegreeMismatch(f"expected (1,0)-forms, got {e.bidegree}")
        return np.stack([e.coeffs[..., :, 0] for e in eta], axis=-2)
    return np.asarray(eta, dtype=complex)


def sesquilinear_bracket(eta, xi, h: FibreMetric | None = None) -> PQForm:
    """``{eta, xi}_h = sum_{a,b} eta_a ^ conj(xi_b) h(e_a, e_b)``.

    ``eta`` and ``xi`` are vectors of (1,0)-forms given either as lists of
    :class:`PQForm` or as coefficient arrays of shape ``(..., r, n)``.
    """
    e = _as_vector_forms(eta)
    x = _as_vector_forms(xi)
    if e.shape[-2] != x.shape[-2]:
        raise RankMismatch(f"vector lengths {e.shape[-2]} and {x.shape[-2]} differ")
    r = e.shape[-2]
    hm = np.eye(r) if h is None else h.h
    if hm.shape[-1] != r:
        raise RankMismatch(f"metric rank {hm.shape[-1]} != {r}")
    # h(e_a, e_b) = hm[b, a];  coefficient of dz_j ^ dzbar_k
    c = np.einsum("...aj,...bk,...ba->...jk", e, np.conj(x), hm)
    return PQForm(e.shape[-1], 1, 1, c)


# -- positivity ---------------------------------------------------------------

@dataclass(frozen=True)
class PlausiblyPositive:
    min_density: float
    trials: int


@dataclass(frozen=True)
class CertifiedNegative:
    witness: np.ndarray
    density: float
    point: int | None = None


def _strongly_positive_products(alphas: np.ndarray) -> PQForm:
    """``prod_k i alpha_k ^ conj(alpha_k)`` for alphas of shape ``(..., m, n)``."""
    n = alphas.shape[-1]
    m = alphas.shape[-2]
    out = one(n)
    for k in range(m):
        a = alphas[..., k, :]
        out = wedge(out, PQForm(n, 1, 1, 1j * a[..., :, None] * np.conj(a[..., None, :])))
    return out


def weak_positivity_sample(omega_test: PQForm, trials: int = 32, delta: float = 1e-10,
                           rng_seed: int = 0):
    """Randomized weak-positivity test for a real (n-m, n-m)-form.

    Pairs the form with ``trials`` random simple strongly positive (m,m)-forms
    built from unit (1,0)-forms and compares each density against ``dV_n``
    with ``delta``.  A leading batch axis in ``omega_test`` is treated as a set
    of points that are all tested with the same random directions.
    """
    n = omega_test.n
    if omega_test.p != omega_test.q:
        raise BidegreeMismatch(f"expected a (p,p)-form, got {omega_test.bidegree}")
    m = n - omega_test.p
    if m < 1:
        raise BidegreeMismatch(f"({omega_test.p},{omega_test.q}) is not an (n-m,n-m)-form with m >= 1")
    rng = np.random.default_rng(rng_seed)
    alphas = rng.standard_normal((trials, m, n)) + 1j * rng.standard_normal((trials, m, n))
    alphas /= np.linalg.norm(alphas, axis=-1, keepdims=True)
    probe = _strongly_positive_products(alphas)
    batch = omega_test.batch_shape
    flat = PQForm(n, omega_test.p, omega_test.q,
                  omega_test.coeffs.reshape((-1,) + omega_test.coeffs.shape[-2:])[:, None])
    dens = top_ratio(wedge(flat, probe), volume_form(n)).real  # (points, trials)
    k = int(np.argmin(dens))
    point, trial = divmod(k, trials)
    worst = float(dens.flat[k])
    if worst < delta:
        return CertifiedNegative(alphas[trial], worst, point if batch else None)
    return PlausiblyPositive(worst, trials)


def positivity_density(eta, h: FibreMetric | None, omega: PQForm, omega_test: PQForm, m: int):
    """Density of ``i{eta,eta}_h ^ omega^(m-1) ^ Omega`` against ``dV_n``.

    Uses the bare power ``omega^(m-1)`` (no 1/(m-1)! normalisation).
    """
    n = omega.n
    if omega_test.bidegree != (n - m, n - m):
        raise BidegreeMismatch(f"Omega has bidegree {omega_test.bidegree}, expected {(n - m, n - m)}")
    form = sesquilinear_bracket(eta, eta, h) * 1j
    form = wedge(wedge(form, omega.power(m - 1)), omega_test)
    return top_ratio(form, volume_form(n)).real


def beta_trace_densities(beta: MatrixPQForm, omega: PQForm, omega_test: PQForm, m: int):
    """Traces of ``i beta^beta*`` (on Q) and ``i beta*^beta`` (on S) against Omega.

    ``beta`` is a (1,0)-form with values in q×s matrices (Hom(S, Q) in unitary
    frames).  Returns ``(trace_Q, trace_S)`` densities against ``dV_n``.
    """
    n = omega.n
    if beta.bidegree != (1, 0):
        raise BidegreeMismatch(f"beta must be a (1,0)-form, got {beta.bidegree}")
    if omega_test.bidegree != (n - m, n - m):
        raise BidegreeMismatch(f"Omega has bidegree {omega_test.bidegree}, expected {(n - m, n - m)}")
    star = beta.adjoint()
    weight = wedge(omega.power(m - 1), omega_test)
    dv = volume_form(n)
    tq = top_ratio(wedge(wedge(beta, star).trace() * 1j, weight), dv).real
    ts = top_ratio(wedge(wedge(star, beta).trace() * 1j, weight), dv).real
    return tq, ts


def factorial_weight(m: int) -> int:
    """The positive factor (m-1)! separating bare and normalised powers of omega."""
    return factorial(m - 1)

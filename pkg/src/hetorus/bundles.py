"""Curvature calculus for line bundles, direct sums and two-step extensions.

Line bundles are described by curvature data: a constant real (1,1)-form C
representing the first Chern class and a weight phi, so that the metric is
``h = exp(-phi)`` relative to a reference metric of curvature C and
``i Theta = C + i ddbar phi``.

Higher-rank bundles are built on a C^infinity frame in which the metric is
``H = D G D`` with ``D = diag(exp(-phi_a / 2))`` and ``G`` a Hermitian
positive matrix (constant or a field), and the holomorphic structure is
``dbar + B`` for an End-valued (0,1)-form ``B``.  The Chern connection then
has ``A^{0,1} = B`` and ``A^{1,0} = H^{-1} dH - H^{-1} B^H H`` and
``Theta = dbar A^{1,0} + d B + A^{1,0} ^ B + B ^ A^{1,0}`` (plus the class
forms on the diagonal).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb
from typing import Sequence

import numpy as np

from . import algebra as alg
from . import fields as fl
from .algebra import MatrixPQForm, PQForm
from .errors import (BidegreeMismatch, GridMismatch, InvalidPower, InvalidSpec,
                     NotDdbarClosedBetaStar, RankMismatch, ShapeMismatch)
from .fields import ScalarField

BETA_STAR_TOL = 1e-11


def _grid_of(*items):
    grid = None
    for it in items:
        g = getattr(it, "grid", None)
        if g is None:
            continue
        if grid is not None and g != grid:
            raise GridMismatch("bundle data on different grids")
        grid = g
    return grid


def _check_class(form: PQForm):
    if form.bidegree != (1, 1) or form.batch_shape:
        raise InvalidSpec("class form must be a constant (1,1)-form")
    if not form.is_real(1e-13):
        raise InvalidSpec("class form must be real")


def is_integral_class(form: PQForm, tol: float = 1e-9) -> bool:
    """Whether C / 2pi has integral periods on the coordinate 2-tori of (Z + iZ)^n.

    ``i dz_j ^ dzbar_k`` is expanded in the real basis ``dx, dy`` and every
    coefficient of ``du ^ dv`` (u, v real coordinates) must be in 2 pi Z.
    """
    n = form.n
    c = form.coeffs
    real2 = np.zeros((2 * n, 2 * n))
    # dz_j = dx_j + i dy_j, dzbar_k = dx_k - i dy_k
    dz_vec = np.zeros((n, 2 * n), dtype=complex)
    dzb_vec = np.zeros((n, 2 * n), dtype=complex)
    for j in range(n):
        dz_vec[j, 2 * j], dz_vec[j, 2 * j + 1] = 1, 1j
        dzb_vec[j, 2 * j], dzb_vec[j, 2 * j + 1] = 1, -1j
    full = np.zeros((2 * n, 2 * n), dtype=complex)
    for j in range(n):
        for k in range(n):
            full += c[j, k] * (np.outer(dz_vec[j], dzb_vec[k]) - np.outer(dzb_vec[k], dz_vec[j]))
    real2 = full.real
    if np.max(np.abs(full.imag)) > tol:
        return False
    vals = real2[np.triu_indices(2 * n, 1)] / (2 * np.pi)
    return bool(np.all(np.abs(vals - np.round(vals)) <= tol))


@dataclass(frozen=True, eq=False)
class LineBundleData:
    class_form: PQForm
    weight: ScalarField | None = None

    def __post_init__(self):
        _check_class(self.class_form)
        if self.weight is not None and np.max(np.abs(self.weight.values.imag)) > 0:
            raise InvalidSpec("weights must be real")

    def rescaled(self, f: ScalarField) -> "LineBundleData":
        return LineBundleData(self.class_form, f if self.weight is None else self.weight + f)


@dataclass(frozen=True, eq=False)
class HermitianMetricField:
    """``H = D G D`` with ``D = diag(exp(-weights / 2))``."""

    weights: tuple
    gram: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return len(self.weights)

    @property
    def grid(self):
        return _grid_of(*[w for w in self.weights if w is not None])

    def gram_array(self) -> np.ndarray:
        if self.gram is None:
            return np.eye(self.rank, dtype=complex)
        return np.asarray(self.gram, dtype=complex)

    def weight_array(self, grid) -> np.ndarray:
        """Weights stacked as an array ``grid.shape + (r,)`` (or ``(r,)`` without a grid)."""
        if grid is None:
            return np.zeros(self.rank)
        return np.stack([np.zeros(grid.shape) if w is None else w.values.real
                         for w in self.weights], axis=-1)

    def matrix(self, grid=None) -> np.ndarray:
        dvec = np.exp(-0.5 * self.weight_array(grid))
        g = self.gram_array()
        return dvec[..., :, None] * g * dvec[..., None, :]

    def rescaled(self, f: ScalarField) -> "HermitianMetricField":
        """Metric ``H exp(-f)``."""
        return replace(self, weights=tuple(f if w is None else w + f for w in self.weights))


@dataclass(frozen=True, eq=False)
class BundleSpec:
    kind: str
    classes: tuple
    metric: HermitianMetricField
    dbar_part: MatrixPQForm | None = None
    parts: tuple = ()
    beta_star: MatrixPQForm | None = None
    name: str = ""

    @property
    def rank(self) -> int:
        return len(self.classes)

    @property
    def grid(self):
        items = [self.metric.grid] if self.metric.grid is not None else []
        for x in (self.dbar_part, self.beta_star):
            if x is not None and x.grid is not None:
                items.append(x)
        g = None
        for it in items:
            gg = it if isinstance(it, fl.TorusGrid) else it.grid
            if g is not None and gg != g:
                raise GridMismatch("bundle data on different grids")
            g = gg
        return g

    @property
    def holomorphically_trivial(self) -> bool:
        """Trivial dbar-structure: no twisting and all class forms zero."""
        no_b = self.dbar_part is None or self.dbar_part.sup_norm() == 0
        return no_b and all(c.sup_norm() == 0 for c in self.classes)

    @property
    def sub(self) -> "BundleSpec":
        if self.kind != "extension":
            raise InvalidSpec("only extensions have a subbundle")
        return self.parts[0]

    @property
    def quotient(self) -> "BundleSpec":
        if self.kind != "extension":
            raise InvalidSpec("only extensions have a quotient")
        return self.parts[1]

    def rescaled(self, f: ScalarField) -> "BundleSpec":
        """The same holomorphic bundle with metric ``h exp(-f)``."""
        parts = tuple(p.rescaled(f) for p in self.parts)
        return replace(self, metric=self.metric.rescaled(f), parts=parts)


def line_bundle(class_form: PQForm | None = None, weight: ScalarField | None = None,
                n: int | None = None, name: str = "") -> BundleSpec:
    if class_form is None:
        if n is None:
            raise InvalidSpec("need n for the trivial class")
        class_form = alg.zeros(n, 1, 1)
    data = LineBundleData(class_form, weight)
    return BundleSpec("line", (data.class_form,), HermitianMetricField((weight,)), parts=(data,), name=name)


def trivial_bundle(n: int, r: int, gram=None, weights: Sequence | None = None, name: str = "") -> BundleSpec:
    """Holomorphically trivial rank-r bundle with metric ``D G D``."""
    weights = tuple(weights) if weights is not None else (None,) * r
    if len(weights) != r:
        raise RankMismatch("one weight per frame vector")
    if gram is not None:
        alg.FibreMetric(np.asarray(gram)[(0,) * (np.ndim(gram) - 2)] if np.ndim(gram) > 2 else gram)
    cls = tuple(alg.zeros(n, 1, 1) for _ in range(r))
    return BundleSpec("trivial", cls, HermitianMetricField(weights, gram), name=name)


def direct_sum(*summands, name: str = "") -> BundleSpec:
    """h-orthogonal direct sum of line bundles (or of specs without twisting)."""
    specs = [s if isinstance(s, BundleSpec) else line_bundle(s.class_form, s.weight) for s in summands]
    for s in specs:
        if s.dbar_part is not None or s.metric.gram is not None:
            raise InvalidSpec("direct sums are formed from line bundles or untwisted diagonal pieces")
    classes = tuple(c for s in specs for c in s.classes)
    weights = tuple(w for s in specs for w in s.metric.weights)
    return BundleSpec("direct_sum", classes, HermitianMetricField(weights), parts=tuple(specs), name=name)


def _block_matrix_form(blocks, sizes, n, p, q):
    """Assemble a block matrix of MatrixPQForm / None entries (None = zero)."""
    rows = []
    grid = None
    batch = ()
    for row in blocks:
        for b in row:
            if b is not None:
                grid = b.grid or grid
                if b.batch_shape:
                    batch = b.batch_shape
    heights = widths = sizes
    base = batch + (comb(n, p), comb(n, q))
    for i, row in enumerate(blocks):
        cols = []
        for j, b in enumerate(row):
            if b is None:
                cols.append(np.zeros(base + (heights[i], widths[j]), dtype=complex))
            else:
                cols.append(np.broadcast_to(b.coeffs, base + b.fibre_shape))
        rows.append(np.concatenate(cols, axis=-1))
    return MatrixPQForm(n, p, q, np.concatenate(rows, axis=-2), grid)


def extension(sub: BundleSpec, quotient: BundleSpec, beta_star: MatrixPQForm,
              tol: float = BETA_STAR_TOL, name: str = "") -> BundleSpec:
    """Extension 0 -> S -> E -> Q -> 0 with extension form beta* (s×q, bidegree (0,1)).

    The metric is the C^infinity-split one ``h_S (+) h_Q``; the holomorphic
    structure is ``dbar + [[B_S, beta*], [0, B_Q]]``.
    """
    n = sub.classes[0].n
    s, q = sub.rank, quotient.rank
    if beta_star.bidegree != (0, 1):
        raise BidegreeMismatch(f"beta* must be a (0,1)-form, got {beta_star.bidegree}")
    if beta_star.fibre_shape != (s, q):
        raise ShapeMismatch(f"beta* must be {s}x{q}, got {beta_star.fibre_shape}")
    if sub.metric.gram is not None or quotient.metric.gram is not None:
        raise InvalidSpec("extension pieces must carry diagonal metrics")
    if beta_star.sup_norm() > 0:
        ref = sub.classes[0].coeffs
        if any(np.max(np.abs(c.coeffs - ref)) > 1e-13 for c in sub.classes + quotient.classes):
            raise InvalidSpec("a non-split extension needs a common class form on S and Q")
    if beta_star.grid is not None:
        res = fl.dbar(beta_star).sup_norm()
        if res > tol * max(1.0, beta_star.sup_norm()):
            raise NotDdbarClosedBetaStar(f"sup|dbar beta*| = {res:.3e}")
    blocks = [[sub.dbar_part, beta_star], [None, quotient.dbar_part]]
    B = _block_matrix_form(blocks, (s, q), n, 0, 1)
    metric = HermitianMetricField(sub.metric.weights + quotient.metric.weights)
    return BundleSpec("extension", sub.classes + quotient.classes, metric, dbar_part=B,
                      parts=(sub, quotient), beta_star=beta_star, name=name)


def constant_matrix_form(n: int, p: int, q: int, coeffs) -> MatrixPQForm:
    return MatrixPQForm(n, p, q, np.asarray(coeffs, dtype=complex))


def extension_class_zero_mode(beta_star: MatrixPQForm) -> np.ndarray:
    """Grid mean of beta*; a dbar-exact (0,1)-form on the torus has zero mean."""
    c = beta_star.coeffs
    axes = tuple(range(len(beta_star.batch_shape)))
    return c.mean(axis=axes) if axes else c


# -- curvature ----------------------------------------------------------------

def _ddiag(grid, metric: HermitianMetricField, n: int):
    """Diagonal (1,0)-matrix form with entries d(phi_a)."""
    r = metric.rank
    c = np.zeros(grid.shape + (n, 1, r, r), dtype=complex)
    for a, w in enumerate(metric.weights):
        if w is not None:
            c[..., :, :, a, a] = fl.d(w).coeffs
    return MatrixPQForm(n, 1, 0, c, grid)


def _zero_matrix(n, p, q, r, grid=None):
    shape = (grid.shape if grid is not None else ()) + (comb(n, p), comb(n, q), r, r)
    return MatrixPQForm(n, p, q, np.zeros(shape, dtype=complex), grid)


def _twist(spec: BundleSpec, grid):
    B = spec.dbar_part
    if B is not None and grid is not None and B.grid is None:
        B = fl.constant_field(grid, B)
    return B


def connection_10(spec: BundleSpec, n: int, grid=None) -> MatrixPQForm:
    """(1,0)-part of the Chern connection form in the spec's frame."""
    grid = grid or spec.grid
    r = spec.rank
    metric = spec.metric
    if grid is None:
        log_der = _zero_matrix(n, 1, 0, r)
        dvec = np.ones(r)
    else:
        dvec = np.exp(-0.5 * metric.weight_array(grid))
        phi_d = _ddiag(grid, metric, n)
        if metric.gram is None:
            log_der = phi_d * -1.0
        else:
            G = np.broadcast_to(metric.gram_array(), grid.shape + (r, r))
            Ginv = np.linalg.inv(G)
            dG = fl.d(MatrixPQForm(n, 0, 0, G[..., None, None, :, :], grid))
            inner = dG.lmul(Ginv) - phi_d.rmul(G).lmul(Ginv) * 0.5
            inner = inner.lmul(np.eye(r) / dvec[..., :, None]).rmul(dvec[..., :, None] * np.eye(r))
            log_der = inner - phi_d * 0.5
    B = _twist(spec, grid)
    if B is None:
        return log_der
    H = metric.matrix(grid)
    Hinv = np.linalg.inv(H)
    twist = B.adjoint().rmul(H).lmul(Hinv)
    return log_der - twist


def chern_curvature(spec: BundleSpec, n: int | None = None, grid=None) -> MatrixPQForm:
    """``i Theta_h(E)`` as an End(E)-valued real (1,1)-form (field or constant)."""
    n = n or spec.classes[0].n
    grid = grid or spec.grid
    r = spec.rank
    a10 = connection_10(spec, n, grid)
    if grid is not None:
        theta = fl.dbar(a10) if a10.grid is not None else _zero_matrix(n, 1, 1, r, grid)
    else:
        theta = _zero_matrix(n, 1, 1, r)
    B = _twist(spec, grid)
    if B is not None:
        if B.grid is not None:
            theta = theta + fl.d(B)
        theta = theta + alg.wedge(a10, B) + alg.wedge(B, a10)
    cls = np.zeros((comb(n, 1), comb(n, 1), r, r), dtype=complex)
    for a, c in enumerate(spec.classes):
        cls[:, :, a, a] = c.coeffs
    i_theta = theta * 1j
    return MatrixPQForm(n, 1, 1, i_theta.coeffs + cls, i_theta.grid)


def second_fundamental_form(spec: BundleSpec, grid=None) -> MatrixPQForm:
    """beta in Hom(S, Q) (q×s, bidegree (1,0)) for an extension spec.

    It is the h-adjoint of beta*: ``beta = H_Q^{-1} (beta*)^H H_S``.
    """
    if spec.kind != "extension":
        raise InvalidSpec("second fundamental form needs an extension")
    grid = grid or spec.grid
    s = spec.sub.rank
    H = spec.metric.matrix(grid)
    HS, HQ = H[..., :s, :s], H[..., s:, s:]
    return spec.beta_star.adjoint().rmul(HS).lmul(np.linalg.inv(HQ))


def subquotient_curvatures(e_curv: MatrixPQForm, beta: MatrixPQForm, metric=None):
    """Curvatures of S and Q from that of E and the second fundamental form beta.

    ``i Theta_S = i Theta_E|_S + i beta* ^ beta`` and
    ``i Theta_Q = i Theta_E|_Q + i beta ^ beta*`` with beta* the adjoint of beta
    (conjugate transpose, or the H-adjoint when ``metric`` is the full matrix H).
    """
    if beta.bidegree != (1, 0):
        raise BidegreeMismatch("beta must be a (1,0)-form")
    q, s = beta.fibre_shape
    if e_curv.fibre_shape != (s + q, s + q):
        raise ShapeMismatch(f"E curvature {e_curv.fibre_shape} incompatible with beta {beta.fibre_shape}")
    if metric is None:
        star = beta.adjoint()
    else:
        H = np.asarray(metric)
        HS, HQ = H[..., :s, :s], H[..., s:, s:]
        star = beta.adjoint().rmul(HQ).lmul(np.linalg.inv(HS))
    s_curv = e_curv.block(slice(0, s), slice(0, s)) + alg.wedge(star, beta) * 1j
    q_curv = e_curv.block(slice(s, s + q), slice(s, s + q)) + alg.wedge(beta, star) * 1j
    return s_curv, q_curv


# -- bundle operations --------------------------------------------------------

def _kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    sh = out.shape
    return out.reshape(sh[:-4] + (sh[-4] * sh[-3], sh[-2] * sh[-1]))


def exterior_power_matrix(mat: np.ndarray, p: int) -> np.ndarray:
    """Matrix of the derivation induced by ``mat`` on the p-th exterior power."""
    r = mat.shape[-1]
    basis = alg.multi_indices(r, p)
    slot = {I: k for k, I in enumerate(basis)}
    out = np.zeros(mat.shape[:-2] + (len(basis), len(basis)), dtype=complex)
    for col, I in enumerate(basis):
        for t, it in enumerate(I):
            for a in range(r):
                rest = I[:t] + (a,) + I[t + 1:]
                if len(set(rest)) < p:
                    continue
                sign, sorted_rest = alg._merge(rest, ())
                out[..., slot[sorted_rest], col] += sign * mat[..., a, it]
    return out


def transform_curvature(curv: MatrixPQForm, op: str, other: MatrixPQForm | None = None,
                        p: int | None = None) -> MatrixPQForm:
    """Curvature of dual, tensor, End, exterior power and determinant bundles."""
    c = curv.coeffs
    r = curv.rank
    if op == "dual":
        new = -np.swapaxes(c, -1, -2)
    elif op == "tensor":
        if other is None:
            raise RankMismatch("tensor needs a second curvature")
        r2 = other.rank
        o = other.coeffs
        new = _kron(c, np.eye(r2)) + _kron(np.eye(r), o)
    elif op == "end":
        new = _kron(c, np.eye(r)) - _kron(np.eye(r), np.swapaxes(c, -1, -2))
    elif op == "wedge_power":
        if p is None or not 1 <= p <= r:
            raise InvalidPower(f"exterior power p={p} invalid for rank {r}")
        new = exterior_power_matrix(c, p)
    elif op == "det":
        new = np.trace(c, axis1=-2, axis2=-1)[..., None, None]
    else:
        raise ValueError(f"unknown bundle operation {op!r}")
    grid = curv.grid if other is None else (curv.grid or other.grid)
    return MatrixPQForm(curv.n, curv.p, curv.q, new, grid)

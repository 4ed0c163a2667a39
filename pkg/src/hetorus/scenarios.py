"""Registered verification scenarios.

Every scenario takes a :class:`Setup` and its parameter dict and returns a list
of :class:`~hetorus.report.CheckRecord` plus sweep rows.  Randomness is drawn
from generators seeded by ``(config seed, scenario tag)`` so scenarios are
independent of execution order.
"""
from __future__ import annotations

import time
import zlib
from functools import cached_property
from math import comb, factorial

import numpy as np

from . import algebra as alg
from . import bundles as bd
from . import fields as fl
from . import geometry as geo
from . import he_analysis as he
from . import stability as st
from .errors import AmbientNotHE, ConfigError, HetorusError, NotWeaklyHE
from .operator import POperatorContext, adjoint_defect, apply_P, decompose, l2_norm
from .report import CheckRecord, RunConfig, SweepRow

ANCHORS = {
    "adjoint": "adjoint lemma: defect is a first-order operator",
    "kernel": "kernel corollary: constants and orthogonal decomposition",
    "rescale": "rescaling propositions: metric h exp(-f)",
    "slope_link": "Einstein factor equals slope over volume",
    "vanishing": "vanishing theorem identity for P|s|^2",
    "factors": "bundle operations lemma: Einstein factors",
    "degree": "degree definition and metric independence",
    "exact_sequence": "exact sequence slope chain",
    "classical": "classical reduction m = n",
    "kl": "main theorem: HE implies semi-stable",
    "pointwise": "pointwise positivity lemmas",
    "curvature": "Chern curvature of extensions",
    "convergence": "spectral convergence sweep",
}


def random_form_field(grid, p, q, rng, amplitude=0.02, bandwidth=1) -> alg.PQForm:
    n = grid.n
    c = np.zeros(grid.shape + (comb(n, p), comb(n, q)), dtype=complex)
    for i in range(c.shape[-2]):
        for j in range(c.shape[-1]):
            c[..., i, j] = fl.random_band_limited(grid, rng, bandwidth, amplitude, real=False,
                                                  normalize="l1").values
    return alg.PQForm(n, p, q, c, grid)


def diag_class(n, weights) -> alg.PQForm:
    out = alg.zeros(n, 1, 1)
    for j, w in enumerate(weights):
        out = out + alg.i_dz_dzbar(n, j, j) * float(w)
    return out


class Setup:
    """Lazily built contexts shared by the scenarios of one run."""

    def __init__(self, cfg: RunConfig, tol_scale: float = 1.0, points_per_axis: int | None = None):
        self.cfg = cfg
        self.tol_scale = tol_scale
        self.N = points_per_axis or cfg.points_per_axis
        self.n, self.m = cfg.n, cfg.m
        self.grid = fl.TorusGrid(self.n, self.N)
        self._ops = {}

    def rng(self, tag: str) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, zlib.crc32(tag.encode())])

    def tol(self, x: float) -> float:
        return x * self.tol_scale

    @cached_property
    def omega(self) -> alg.PQForm:
        if self.cfg.omega is None:
            return alg.flat_kahler(self.n)
        try:
            g = np.asarray(self.cfg.omega, dtype=complex)
            return alg.kahler_form(g)
        except (HetorusError, ValueError) as exc:
            raise ConfigError("$.omega", str(exc)) from exc

    def _checks(self):
        t = self.cfg.tolerances
        return dict(tol_closed=t["tol_closed"], delta=t["delta"], seed=self.cfg.seed)

    def context(self, m: int, mode: str = "constant", **params):
        omega_test = geo.generate_test_form(self.grid, m, mode, self.omega, **params, **self._checks())
        return geo.validate_structures(self.grid, self.omega, omega_test, m, **self._checks())

    @cached_property
    def ctx(self):
        """Context described by the config's omega_test block."""
        spec = dict(self.cfg.omega_test)
        mode = spec.pop("mode")
        try:
            if mode == "constant":
                return self.context(self.m, "constant", **spec)
            if mode == "kahler_power":
                rho = fl.random_band_limited(self.grid, self.rng("rho"), int(spec.get("bandwidth", 1)),
                                             float(spec.get("amplitude", 0.02)), normalize="l1")
                return self.context(self.m, mode, rho=rho)
            u = random_form_field(self.grid, self.n - self.m - 1, self.n - self.m, self.rng("u"),
                                  float(spec.get("amplitude", 0.02)), int(spec.get("bandwidth", 1)))
            return self.context(self.m, mode, u=u, eps=float(spec.get("eps", 1.0)))
        except HetorusError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("$.omega_test", f"{type(exc).__name__}: {exc}") from exc

    @cached_property
    def closed_ctx(self):
        return self.context(self.m, "constant")

    @cached_property
    def perturbed_ctx(self):
        """ddbar-closed but non-closed test form; None when n - m = 0."""
        k = self.n - self.m
        if k < 1:
            return None
        u = random_form_field(self.grid, k - 1, k, self.rng("perturbation"), 0.02)
        return self.context(self.m, "ddbar_closed_perturbation", u=u, eps=1.0)

    def op(self, ctx) -> POperatorContext:
        key = id(ctx)
        if key not in self._ops:
            self._ops[key] = POperatorContext(ctx, residual_target=self.cfg.tolerances["solver_residual"])
        return self._ops[key]

    def field(self, tag, amplitude=1.0, bandwidth=1) -> fl.ScalarField:
        return fl.random_band_limited(self.grid, self.rng(tag), bandwidth, amplitude)

    @cached_property
    def bundles(self) -> dict:
        built = {}

        def build(name):
            if name in built:
                return built[name]
            b = self.cfg.bundles[name]
            path = f"$.bundles.{name}"
            kind = b["kind"]
            try:
                if kind == "line":
                    cls = (np.asarray(b["class"], dtype=complex) if "class" in b
                           else np.diag(np.asarray(b.get("class_diag", [0] * self.n), dtype=complex)))
                    C = alg.kahler_form(cls) if cls.ndim == 2 else diag_class(self.n, cls)
                    if self.cfg.integral_classes and not bd.is_integral_class(C):
                        raise ConfigError(path, "class is not integral")
                    w = b.get("weight")
                    weight = None
                    if w:
                        weight = self.field(f"bundle:{name}", float(w.get("amplitude", 0.1)),
                                            int(w.get("bandwidth", 1)))
                    spec = bd.line_bundle(C, weight, name=name)
                elif kind == "trivial":
                    spec = bd.trivial_bundle(self.n, int(b.get("rank", 1)), name=name)
                elif kind == "direct_sum":
                    spec = bd.direct_sum(*[build(s) for s in b["summands"]], name=name)
                else:
                    sub, quo = build(b["sub"]), build(b["quotient"])
                    coeffs = np.zeros((1, self.n, sub.rank, quo.rank), dtype=complex)
                    bs = np.asarray(b.get("beta_star", [0.0] * self.n), dtype=complex)
                    coeffs[0, :, :, :] = bs.reshape(self.n, 1, 1) if bs.ndim == 1 else bs
                    spec = bd.extension(sub, quo, alg.MatrixPQForm(self.n, 0, 1, coeffs), name=name)
            except ConfigError:
                raise
            except (HetorusError, KeyError, ValueError, TypeError) as exc:
                raise ConfigError(path, f"{type(exc).__name__}: {exc}") from exc
            built[name] = spec
            return spec

        for name in self.cfg.bundles:
            build(name)
        return built


class Recorder:
    def __init__(self, setup: Setup, scenario: str, params: dict):
        self.setup = setup
        self.scenario = scenario
        self.params = params
        self.records = []
        self.rows = []

    def check(self, name, anchor, residual, tolerance, note="", **inputs):
        s = self.setup
        payload = {"scenario": self.scenario, "check": name, "n": s.n, "m": s.m, "N": s.N,
                   "seed": s.cfg.seed, "params": self.params, **inputs}
        rec = CheckRecord.make(f"{self.scenario}.{name}", ANCHORS[anchor], residual,
                               s.tol(tolerance), payload, note)
        self.records.append(rec)
        return rec

    def flag(self, name, anchor, ok: bool, note=""):
        """Boolean verdict recorded as residual 0 (expected) or 1 (unexpected)."""
        return self.check(name, anchor, 0.0 if ok else 1.0, 0.0, note)


# -- scenarios ---------------------------------------------------------------

def adjoint_defect_suite(s: Setup, rec: Recorder, pairs: int = 20, bandwidth: int = 1):
    rng = s.rng("adjoint")

    def pair():
        return (fl.random_band_limited(s.grid, rng, bandwidth, 1.0),
                fl.random_band_limited(s.grid, rng, bandwidth, 1.0))

    if s.perturbed_ctx is not None:
        op = s.op(s.perturbed_ctx)
        worst = max(adjoint_defect(op, *pair()).residual for _ in range(pairs))
        rec.check("perturbed", "adjoint", worst, 1e-8, pairs=pairs)
    op = s.op(s.closed_ctx)
    worst = 0.0
    for _ in range(pairs):
        phi, psi = pair()
        r = adjoint_defect(op, phi, psi)
        worst = max(worst, abs(r.defect) / (l2_norm(op, phi) * l2_norm(op, psi)))
    rec.check("closed", "adjoint", worst, 1e-10, pairs=pairs)


def kernel_and_decompose(s: Setup, rec: Recorder):
    ctxs = [("main", s.ctx)]
    if s.perturbed_ctx is not None:
        ctxs.append(("perturbed", s.perturbed_ctx))
    for tag, ctx in ctxs:
        op = s.op(ctx)
        const = s.grid.constant(1.7).real
        rec.check(f"{tag}.kernel", "kernel", apply_P(op, const).sup(), 1e-13)
        lam = s.field(f"decompose:{tag}", 1.0) + 0.7
        c, f = decompose(op, lam)
        recon = apply_P(op, f) + c
        rec.check(f"{tag}.reconstruct", "kernel", float(np.max(np.abs(recon.values - lam.values))), 1e-8)
        pf = apply_P(op, f)
        orth = abs(fl.l2_inner(pf, s.grid.constant(1.0), ctx.dV))
        rec.check(f"{tag}.orthogonal", "kernel", orth, 1e-10)


def he_rescale_line(s: Setup, rec: Recorder, amplitude: float = 0.3):
    ctx = s.ctx
    phi = geo.trig_field(s.grid, [(amplitude, [1] + [0] * (2 * s.n - 1), "cos")])
    res = he.he_rescale(bd.line_bundle(n=s.n, weight=phi), ctx, s.op(ctx))
    rec.check("weight.post_residual", "rescale", res.post_residual, 1e-8)
    rec.check("weight.c", "rescale", abs(res.c), 1e-9)
    again = he.he_rescale(res.rescaled_metric, ctx, s.op(ctx))
    rec.check("weight.idempotent", "rescale", again.f.sup(), 1e-8)
    C = diag_class(s.n, [1.0, 2.0][: s.n])
    res = he.he_rescale(bd.line_bundle(C), s.closed_ctx, s.op(s.closed_ctx))
    expected = factorial(s.n - 1) * float(np.real(alg.lambda_contract(C, s.omega)))
    rec.check("class.c", "rescale", abs(res.c - expected), 1e-9, note=f"expected c = {expected!r}")
    rec.check("class.f", "rescale", res.f.sup(), 1e-9)


def _he_line(s, ctx, weights, name):
    line = bd.line_bundle(diag_class(s.n, weights), name=name)
    res = he.he_rescale(line, ctx, s.op(ctx))
    return bd.line_bundle(line.classes[0], res.f, name=name)


def slope_link(s: Setup, rec: Recorder, bundles=()):
    ctx = s.ctx
    l12 = _he_line(s, ctx, [1.0, 2.0][: s.n], "L12")
    lneg = _he_line(s, ctx, [-1.0, 0.5][: s.n], "Lneg")
    specs = [l12, bd.line_bundle(n=s.n, name="O"), lneg, bd.direct_sum(l12, l12, name="L12+L12"),
             bd.trivial_bundle(s.n, 2, name="O2")]
    for name in bundles:
        b = s.bundles[name]
        specs.append(he.he_rescale(b, ctx, s.op(ctx)).rescaled_metric if b.rank == 1 else b)
    worst = 0.0
    for spec in specs:
        lam, ratio, res = he.slope_link_check(spec, ctx)
        worst = max(worst, res / max(1.0, abs(lam)))
    rec.check("specs", "slope_link", worst, 1e-8, specs=[sp.name for sp in specs])
    if s.n == 2 and s.cfg.omega is None:
        cctx = s.closed_ctx
        line = bd.line_bundle(diag_class(2, [1.0, 2.0]))
        lam, ratio, res = he.slope_link_check(line, cctx)
        mu = st.slope(line, cctx)
        closed = max(abs(lam - 3.0), abs(mu - 12.0), abs(cctx.vol - 4.0), res)
        rec.check("closed_form", "slope_link", closed, 1e-10)


def vanishing_identity(s: Setup, rec: Recorder, weights: int = 10, amplitude: float = 0.2):
    ctx = s.ctx
    op = s.op(ctx)
    worst, slack = 0.0, np.inf
    for k in range(weights):
        w = s.field(f"vanishing:{k}", amplitude)
        if k % 2 == 0:
            spec, sec = bd.line_bundle(n=s.n, weight=w), [1.0]
        else:
            w2 = s.field(f"vanishing2:{k}", amplitude)
            spec, sec = bd.trivial_bundle(s.n, 2, weights=(w, w2)), [1.0, 0.5 - 0.25j]
        v = he.vanishing_identity_check(spec, sec, ctx, op)
        worst = max(worst, v.residual)
        slack = min(slack, v.inequality_slack)
    rec.check("random_weights", "vanishing", worst, 1e-8, weights=weights)
    rec.check("inequality", "vanishing", max(0.0, -slack), 1e-10)
    v = he.vanishing_identity_check(bd.trivial_bundle(s.n, 2), [1.0, 0.0], ctx, op)
    flat = max(v.lhs.sup(), v.rhs.sup())
    conn = bd.connection_10(bd.trivial_bundle(s.n, 2), s.n, s.grid).sup_norm()
    rec.check("flat", "vanishing", max(flat, conn), 1e-13)


def bundle_factor_suite(s: Setup, rec: Recorder, bundles=()):
    ctx = s.ctx
    l12 = _he_line(s, ctx, [1.0, 2.0][: s.n], "L12")
    lm = _he_line(s, ctx, [-1.0 / 3, -2.0 / 3][: s.n], "Lm")
    specs = [l12, lm, bd.direct_sum(l12, l12, name="L12+L12")]
    for name in bundles:
        b = s.bundles[name]
        specs.append(he.he_rescale(b, ctx, s.op(ctx)).rescaled_metric if b.rank == 1 else b)
    records = he.bundle_factor_check(specs, ctx)
    worst = max(r.residual for r in records)
    rec.check("operations", "factors", worst, 1e-9, operations=[r.operation for r in records])


def degree_gauge_invariance(s: Setup, rec: Recorder, draws: int = 10):
    rng = s.rng("degree")
    worst = 0.0
    for _ in range(5):
        w = rng.uniform(-3, 3, s.n)
        C = diag_class(s.n, w)
        ctx = s.closed_ctx
        expected = factorial(s.n - 1) * float(np.real(alg.lambda_contract(C, s.omega))) * ctx.vol
        if s.n == 2 and s.cfg.omega is None:
            expected = 4.0 * (w[0] + w[1])
        deg = st.degree(bd.line_bundle(C), ctx).degree
        worst = max(worst, abs(deg - expected) / max(1.0, abs(expected)))
    rec.check("closed_form", "degree", worst, 1e-10)
    spec = bd.line_bundle(diag_class(s.n, [1.0, 2.0][: s.n]), s.field("degree:weight", 0.3))
    ctxs = [("closed", s.closed_ctx)]
    if s.perturbed_ctx is not None:
        ctxs.append(("perturbed", s.perturbed_ctx))
    for tag, ctx in ctxs:
        base = st.degree(spec, ctx).degree
        worst = 0.0
        for k in range(draws):
            f = s.field(f"gauge:{tag}:{k}", 2.0 * (k + 1) / draws)
            worst = max(worst, st.gauge_invariance_check(spec, f, ctx))
        rec.check(f"gauge.{tag}", "degree", worst / max(1.0, abs(base)), 1e-8, draws=draws)


def exact_sequence_suite(s: Setup, rec: Recorder):
    grid = fl.TorusGrid(2, s.N)
    ctx = geo.validate_structures(grid, alg.flat_kahler(2), geo.block_diagonal_form(2, 1, [0.0, 1.0]), 1)
    unit = alg.MatrixPQForm(2, 1, 0, np.array([1.0, 0.0]).reshape(2, 1, 1, 1))
    sc = st.exact_sequence_check("synthetic", {"lambda_E": 0.0, "s": 1, "q": 1, "beta": unit}, ctx)
    err = max(float(np.max(np.abs(d.values - t))) for d, t in zip(sc.densities, (-1.0, 0.0, 1.0)))
    rec.check("unit_densities", "exact_sequence", err, 1e-10)
    ok = sc.equality_case == "Strict" and sc.mu_S < sc.mu_E < sc.mu_Q
    rec.flag("unit_strict", "exact_sequence", ok, note=sc.equality_case)

    rng = np.random.default_rng([s.cfg.seed, 7])
    slack, misclass = np.inf, 0
    for k in range(6):
        sdim, qdim = 1 + k % 2, 1 + (k // 2) % 2
        coeffs = np.zeros(grid.shape + (2, 1, qdim, sdim), dtype=complex)
        if k > 0:
            for idx in np.ndindex(2, 1, qdim, sdim):
                coeffs[(Ellipsis,) + idx] = fl.random_band_limited(grid, rng, 1, 1.0, real=False).values
        beta = alg.MatrixPQForm(2, 1, 0, coeffs, grid)
        sc = st.exact_sequence_check("synthetic", {"lambda_E": 2.0, "s": sdim, "q": qdim, "beta": beta}, ctx)
        slack = min(slack, sc.min_slack)
        misclass += (sc.equality_case == "Split") != (k == 0)
    rec.check("chain_slack", "exact_sequence", max(0.0, -slack), 1e-11)
    rec.check("split_classification", "exact_sequence", float(misclass), 0.0)

    line = bd.line_bundle(n=2)
    bs = alg.MatrixPQForm(2, 0, 1, np.array([0.6, 0.0]).reshape(1, 2, 1, 1))
    ext = bd.extension(line, line, bs)
    try:
        st.exact_sequence_check("metric", ext, ctx)
        raised = False
    except AmbientNotHE:
        raised = True
    rec.flag("metric_requires_he", "exact_sequence", raised)

    curv = bd.chern_curvature(ext, 2, grid)
    target = np.zeros((2, 2), dtype=complex)
    target[0, 0], target[1, 1] = 0.36, -0.36
    expect = np.zeros(curv.coeffs.shape, dtype=complex)
    expect[..., 0, 0, :, :] = 1j * target
    rec.check("extension_curvature", "curvature", float(np.max(np.abs(curv.coeffs - expect))), 1e-10)
    S, Q = bd.subquotient_curvatures(curv, bd.second_fundamental_form(ext, grid))
    rec.check("subquotient_zero", "curvature", max(S.sup_norm(), Q.sup_norm()), 1e-10)
    w = fl.random_band_limited(grid, rng, 1, 0.2)
    ext_w = bd.extension(bd.line_bundle(n=2, weight=w), bd.line_bundle(n=2, weight=-w), bs)
    d_e = st.degree(ext_w, ctx).degree
    d_s = st.degree(ext_w.sub, ctx).degree
    d_q = st.degree(ext_w.quotient, ctx).degree
    rec.check("degree_additivity", "exact_sequence", abs(d_e - d_s - d_q), 1e-10)


def classical_reduction(s: Setup, rec: Recorder):
    n = s.n
    ctx = s.context(n, "constant")
    op = s.op(ctx)
    phi = s.field("classical", 1.0)
    lhs = apply_P(op, phi).values
    lam = np.real(alg.lambda_contract(fl.i_ddbar(phi), s.omega))
    rhs = -factorial(n - 1) * lam
    rec.check("operator", "classical", float(np.max(np.abs(lhs - rhs))), 1e-10)

    w = s.field("classical:w", 0.2)
    line = bd.line_bundle(n=n)
    bs = alg.MatrixPQForm(n, 0, 1, np.concatenate([[0.5], np.zeros(n - 1)]).reshape(1, n, 1, 1))
    specs = [
        bd.line_bundle(diag_class(n, np.arange(1, n + 1))),
        bd.line_bundle(n=n, weight=w),
        bd.extension(line, line, bs),
        bd.trivial_bundle(n, 2, weights=(w, -w)),
        bd.direct_sum(bd.line_bundle(diag_class(n, np.arange(1, n + 1))),
                      bd.line_bundle(diag_class(n, np.arange(n, 0, -1)))),
        bd.trivial_bundle(n, 2),
    ]
    mismatches, worst = 0, 0.0
    for spec in specs:
        curv = bd.chern_curvature(spec, n, s.grid)
        a = he.einstein_from_curvature(curv, ctx)
        T = he.classical_trace(curv, ctx) * factorial(n - 1)
        worst = max(worst, float(np.max(np.abs(a.matrix_field - T))))
        r = T.shape[-1]
        lam_c = np.trace(T, axis1=-2, axis2=-1).real / r
        dev = np.max(np.abs(T - lam_c[..., None, None] * np.eye(r)))
        classical_he = dev <= a.tolerance and np.ptp(lam_c) <= a.tolerance
        mismatches += classical_he != a.is_he
    rec.check("einstein_vs_trace", "classical", worst, 1e-10)
    rec.check("he_verdicts_agree", "classical", float(mismatches), 0.0, specs=len(specs))


def kl_demo(s: Setup, rec: Recorder):
    k = st.kl_demo(s.ctx)
    rec.flag("equal_factors", "kl", isinstance(k.equal_verdict, st.NoDestabilizerFound) and k.equal_is_he,
             note=repr(k.equal_verdict))
    rec.flag("unequal_factors", "kl", isinstance(k.unequal_verdict, st.Destabilizer) and not k.unequal_is_he,
             note=repr(k.unequal_verdict))
    rec.flag("extension_not_weakly_he", "kl", k.extension_not_weakly_he,
             note=f"deviation {k.extension_deviation!r}")
    rec.check("extension_equal_slopes", "kl", abs(k.extension_slopes[0] - k.extension_slopes[1]), 1e-9)
    rec.flag("extension_class_nonexact", "kl", k.extension_zero_mode > 0,
             note=f"zero mode {k.extension_zero_mode!r}")


def _random_positive_gram(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T + 0.1 * np.eye(n)


def pointwise_lemma_suite(s: Setup, rec: Recorder, draws: int = 1000):
    n, m = s.n, s.m
    rng = s.rng("pointwise")
    k = n - m
    # batch draws along a leading axis
    om_g = np.stack([_random_positive_gram(rng, n) for _ in range(draws)])
    omega = alg.PQForm(n, 1, 1, 1j * om_g)
    weights = rng.uniform(0.05, 2.0, (draws, comb(n, k)))
    Omega = alg.PQForm(n, k, k, sum(weights[:, i, None, None] * geo.block_diagonal_form(
        n, k, np.eye(comb(n, k))[i]).coeffs for i in range(comb(n, k))))
    r = 2
    eta = rng.standard_normal((draws, r, n)) + 1j * rng.standard_normal((draws, r, n))
    zero_mask = rng.random(draws) < 0.2
    eta[zero_mask] = 0.0
    hs = np.stack([_random_positive_gram(rng, r) for _ in range(draws)])
    dens = alg.positivity_density(eta, alg.FibreMetric(hs), omega, Omega, m)
    rec.check("eta_positivity", "pointwise", max(0.0, -float(np.min(dens))), 1e-12, draws=draws)
    detected_zero = np.abs(dens) <= 1e-13
    rec.check("equality_iff_zero", "pointwise", float(np.sum(detected_zero != zero_mask)), 0.0)

    s_dim, q_dim = 2, 1
    beta = alg.MatrixPQForm(n, 1, 0, (rng.standard_normal((draws, n, 1, q_dim, s_dim))
                                      + 1j * rng.standard_normal((draws, n, 1, q_dim, s_dim))))
    tq, ts = alg.beta_trace_densities(beta, omega, Omega, m)
    sign = max(0.0, -float(np.min(tq)), float(np.max(ts)))
    rec.check("beta_trace_sign", "pointwise", sign, 1e-12)
    rec.check("beta_trace_antisymmetry", "pointwise",
              float(np.max(np.abs(tq + ts) / np.maximum(1.0, np.abs(tq)))), 1e-12)

    a = eta[:, 0, :]
    single = alg.PQForm(n, 1, 0, a[:, :, None])
    lam = alg.lambda_contract(alg.wedge(single, alg.conjugate(single)) * 1j, omega)
    ginv = np.linalg.inv(om_g)
    oracle = np.einsum("dj,djk,dk->d", np.conj(a), ginv, a).real
    rec.check("lambda_norm", "pointwise",
              float(np.max(np.abs(lam - oracle) / np.maximum(1.0, oracle))), 1e-12)


def convergence_sweep(s: Setup, rec: Recorder, sizes=(4, 8, 16), bandwidth: int = 2):
    """Residuals against exact answers for band-limited inputs on growing grids."""
    n, m = s.n, s.m
    tracked = {"operator_symbol": [], "adjoint_defect": []}
    times = {key: [] for key in tracked}
    waves = np.zeros(2 * n, dtype=int)
    waves[0], waves[-1] = bandwidth, 1
    for N in sizes:
        grid = fl.TorusGrid(n, N)
        w = [0.0] * comb(n, n - m)
        w[0], w[-1] = 1.0, 2.0 if len(w) > 1 else 1.0
        ctx = geo.validate_structures(grid, alg.flat_kahler(n),
                                      geo.generate_test_form(grid, m, "constant", weights=w), m)
        op = POperatorContext(ctx)
        t0 = time.perf_counter()
        phi = geo.trig_field(grid, [(1.0, waves, "cos")])
        # exact: P e^{2 pi i k.x} = sum a_jk (pi (kx_j - i ky_j))(pi (kx_k + i ky_k)) e^{...}
        kx, ky = waves[0::2], waves[1::2]
        a = op.coefficients.reshape((-1, n, n))[0]
        sym = sum(a[j, k] * (np.pi * (kx[j] - 1j * ky[j])) * (np.pi * (kx[k] + 1j * ky[k]))
                  for j in range(n) for k in range(n))
        exact = np.real(sym) * phi.values.real
        err = np.max(np.abs(apply_P(op, phi).values - exact)) / max(1.0, np.max(np.abs(exact)))
        tracked["operator_symbol"].append(float(err))
        times["operator_symbol"].append((time.perf_counter() - t0) * 1e3)

        t0 = time.perf_counter()
        if n - m >= 1:
            u = random_form_field(grid, n - m - 1, n - m, np.random.default_rng([s.cfg.seed, 11]), 0.02)
            pctx = geo.validate_structures(
                grid, alg.flat_kahler(n),
                geo.generate_test_form(grid, m, "ddbar_closed_perturbation", u=u, eps=1.0), m)
            pop = POperatorContext(pctx)
        else:
            pop = op
        r1 = np.random.default_rng([s.cfg.seed, 12])
        phi = fl.random_band_limited(grid, r1, 1, 1.0, normalize="l1")
        psi = fl.random_band_limited(grid, r1, 1, 1.0, normalize="l1")
        tracked["adjoint_defect"].append(adjoint_defect(pop, phi, psi).residual)
        times["adjoint_defect"].append((time.perf_counter() - t0) * 1e3)

    for key, values in tracked.items():
        for N, v, t in zip(sizes, values, times[key]):
            rec.rows.append(SweepRow(f"convergence_sweep.{key}", N, v, t))
        floor = 1e-12
        rise = max([0.0] + [b - max(a, floor) for a, b in zip(values, values[1:])])
        rec.check(f"{key}.monotone", "convergence", rise, 0.0, values=values)
        resolved = [v for N, v in zip(sizes, values) if N > 2 * bandwidth]
        rec.check(f"{key}.roundoff", "convergence", max(resolved), 1e-12,
                  values=values)


REGISTRY = {
    "adjoint_defect_suite": adjoint_defect_suite,
    "kernel_and_decompose": kernel_and_decompose,
    "he_rescale_line": he_rescale_line,
    "slope_link": slope_link,
    "vanishing_identity": vanishing_identity,
    "bundle_factor_suite": bundle_factor_suite,
    "degree_gauge_invariance": degree_gauge_invariance,
    "exact_sequence_suite": exact_sequence_suite,
    "classical_reduction": classical_reduction,
    "kl_demo": kl_demo,
    "pointwise_lemma_suite": pointwise_lemma_suite,
    "convergence_sweep": convergence_sweep,
}


ANCHOR_OF = {
    "adjoint_defect_suite": "adjoint", "kernel_and_decompose": "kernel", "he_rescale_line": "rescale",
    "slope_link": "slope_link", "vanishing_identity": "vanishing", "bundle_factor_suite": "factors",
    "degree_gauge_invariance": "degree", "exact_sequence_suite": "exact_sequence",
    "classical_reduction": "classical", "kl_demo": "kl", "pointwise_lemma_suite": "pointwise",
    "convergence_sweep": "convergence",
}


def run_one(setup: Setup, entry: dict, record_timings: bool = False):
    """Run one scenario; errors become failed records instead of propagating."""
    name = entry["name"]
    params = {k: v for k, v in entry.items() if k != "name"}
    rec = Recorder(setup, name, params)
    t0 = time.perf_counter()
    try:
        REGISTRY[name](setup, rec, **params)
    except ConfigError:
        raise
    except Exception as exc:  # recorded, not thrown
        rec.records.append(CheckRecord.make(f"{name}.error", ANCHORS[ANCHOR_OF[name]], float("inf"), 0.0,
                                            {"scenario": name, "params": params},
                                            note=f"{type(exc).__name__}: {exc}"))
    if record_timings:
        elapsed = round((time.perf_counter() - t0) * 1e3, 3)
        for r in rec.records:
            r.runtime_ms = elapsed
        for row in rec.rows:
            row.runtime_ms = round(row.runtime_ms, 3)
    else:
        for row in rec.rows:
            row.runtime_ms = None
    return rec.records, rec.rows


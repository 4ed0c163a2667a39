import numpy as np
import pytest

from hetorus import algebra as alg
from hetorus import fields as fl
from hetorus import geometry as geo
from hetorus.errors import (BidegreeMismatch, InvalidAuxiliaryPotential, NotDdbarClosed,
                            NotPositiveDefinite, NotWeaklyPositive, PositivityLostAtEpsilon)
from hetorus.scenarios import random_form_field


def test_default_context(ctx):
    assert ctx.vol == pytest.approx(4.0)
    assert ctx.validation["ddbar_residual"] == 0.0
    assert ctx.d_omega_test_sup == 0.0


def test_kahler_power_mode(grid):
    rho = fl.random_band_limited(grid, np.random.default_rng(0), 1, 0.01)
    om = geo.generate_test_form(grid, 1, "kahler_power", rho=rho)
    c = geo.validate_structures(grid, alg.flat_kahler(2), om, 1)
    assert c.validation["ddbar_residual"] < 1e-12
    with pytest.raises(InvalidAuxiliaryPotential):
        geo.generate_test_form(grid, 1, "kahler_power", rho=fl.random_band_limited(
            grid, np.random.default_rng(0), 1, 5.0))


def test_perturbation_not_closed_but_ddbar_closed(pctx):
    assert pctx.validation["ddbar_residual"] < 1e-12
    assert pctx.d_omega_test_sup > 1e-3


def test_perturbation_too_large(grid):
    u = random_form_field(grid, 0, 1, np.random.default_rng(1), 1.0)
    with pytest.raises(PositivityLostAtEpsilon):
        geo.generate_test_form(grid, 1, "ddbar_closed_perturbation", u=u, eps=5.0)


def test_not_ddbar_closed(grid):
    f = geo.trig_field(grid, [(0.5, [1, 0, 0, 0], "sin")]) + 1.0
    om = alg.i_dz_dzbar(2, 1, 1) * f
    with pytest.raises(NotDdbarClosed) as exc:
        geo.validate_structures(grid, alg.flat_kahler(2), om, 1)
    assert exc.value.residual > exc.value.tolerance


def test_rejections(grid):
    with pytest.raises(NotPositiveDefinite):
        geo.validate_structures(grid, alg.i_dz_dzbar(2, 0, 0), alg.flat_kahler(2), 1)
    with pytest.raises(NotWeaklyPositive):
        geo.validate_structures(grid, alg.flat_kahler(2),
                                alg.i_dz_dzbar(2, 0, 0) - alg.i_dz_dzbar(2, 1, 1), 1)
    with pytest.raises(BidegreeMismatch):
        geo.validate_structures(grid, alg.flat_kahler(2), alg.flat_kahler(2), 2)


def test_block_diagonal_form():
    f = geo.block_diagonal_form(3, 2, [1.0, 2.0, 3.0])
    assert f.bidegree == (2, 2) and f.is_real()
    assert isinstance(alg.weak_positivity_sample(f), alg.PlausiblyPositive)

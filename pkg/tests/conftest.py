import numpy as np
import pytest

from hetorus import algebra as alg
from hetorus import fields as fl
from hetorus import geometry as geo
from hetorus.operator import POperatorContext
from hetorus.scenarios import random_form_field


@pytest.fixture(scope="session")
def grid():
    return fl.TorusGrid(2, 16)


@pytest.fixture(scope="session")
def ctx():
    """n=2, m=1, flat omega, Omega = omega."""
    return geo.make_context(2, 1, 16)


@pytest.fixture(scope="session")
def pctx(grid):
    """ddbar-closed, non-closed Omega."""
    u = random_form_field(grid, 0, 1, np.random.default_rng(5), 0.02)
    om = geo.generate_test_form(grid, 1, "ddbar_closed_perturbation", u=u, eps=1.0)
    return geo.validate_structures(grid, alg.flat_kahler(2), om, 1)


@pytest.fixture(scope="session")
def op(ctx):
    return POperatorContext(ctx)


@pytest.fixture(scope="session")
def pop(pctx):
    return POperatorContext(pctx)

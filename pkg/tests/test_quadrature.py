import numpy as np
import pytest

from irrevhmm.potentials import double_well, rbs3, tilted_double_well
from irrevhmm.quadrature import GridSpec, MassContainmentError, gibbs_average, gibbs_report


def test_double_well_closed_form():
    assert gibbs_average(double_well(), 0.1, "x_plus_y2") == pytest.approx(0.05, abs=1e-10)


def test_rbs3_reference_value():
    assert gibbs_average(rbs3(), 0.2, "shifted_square") == pytest.approx(2.1986, abs=5e-4)


@pytest.mark.parametrize("factory", [double_well, tilted_double_well, rbs3])
def test_normalisation(factory):
    assert gibbs_average(factory(), 0.3, "one") == pytest.approx(1.0, abs=1e-12)


def test_odd_observable_vanishes_on_symmetric_well():
    assert abs(gibbs_average(double_well(), 0.1, "x")) < 1e-10


def test_refinement_converges():
    rep = gibbs_report(rbs3(), 0.2, "shifted_square")
    assert rep.converged and rep.rel_change < 1e-6
    assert rep.boundary_ratio < 1e-12


def test_independent_oracle_for_y_moment():
    # U separates as u(x) + y^2, so <y^2> = beta/2 exactly
    f = lambda z: z[..., 1] ** 2
    assert gibbs_average(tilted_double_well(), 0.07, f) == pytest.approx(0.035, rel=1e-8)


def test_mass_containment_error():
    with pytest.raises(MassContainmentError):
        gibbs_average(double_well(), 0.1, "one", GridSpec(-1.2, 1.2, -1.2, 1.2))
    with pytest.raises(MassContainmentError):
        gibbs_average(rbs3(), 0.2, "one", GridSpec())


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(1.0, -1.0)
    with pytest.raises(ValueError):
        GridSpec(nx=2)
    with pytest.raises(ValueError):
        gibbs_average(double_well(), -0.1, "one")

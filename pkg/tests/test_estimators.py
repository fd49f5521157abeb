import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from irrevhmm.estimators import GraphLimitDiffusion, LangevinSampler, ReebProjector
from irrevhmm.validation import check_nonnegative_int, check_positive, check_scheme, check_states


def _small_sampler(**kw):
    base = dict(T_total=5.0, T_burn=0.5, n_replicates=4, true_average=0.05)
    base.update(kw)
    return LangevinSampler(**base)


def test_get_params_and_clone():
    est = _small_sampler(eps=1e-3, tau=5e-5)
    params = est.get_params()
    assert params["eps"] == 1e-3 and params["scheme"] == "hmm"
    twin = clone(est)
    assert twin.get_params() == params


def test_sampler_fit_attributes():
    est = _small_sampler().fit()
    assert est.err_.shape == (4,)
    assert est.avar_.shape == (4,)
    assert not est.diverged_.any()
    row = est.summary_row()
    assert row["n_replicates"] == 4


def test_sampler_per_replicate_starts_match_shared_start():
    a = _small_sampler().fit(np.zeros((4, 2)))
    b = _small_sampler().fit()
    np.testing.assert_array_equal(a.time_averages_, b.time_averages_)


def test_sampler_quadrature_truth():
    est = _small_sampler(true_average=None, n_replicates=1).fit()
    assert est.true_average_ == pytest.approx(0.05, abs=1e-8)


def test_sampler_rejects_bad_input():
    with pytest.raises(ValueError):
        _small_sampler(scheme="rk4").fit()
    with pytest.raises(ValueError):
        _small_sampler().fit(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        _small_sampler(potential="nope").fit()


def test_summary_before_fit():
    with pytest.raises(NotFittedError):
        _small_sampler().summary_row()


def test_reeb_projector_transform():
    proj = ReebProjector("double_well")
    with pytest.raises(NotFittedError):
        proj.transform([[0.0, 0.0]])
    out = proj.fit().transform([[-1.0, 0.3], [0.0, 0.0]])
    np.testing.assert_allclose(out[:, 0], [0.09, 0.25])
    assert out[1, 1] == -1
    assert proj.n_edges_ == 3
    with pytest.raises(ValueError):
        proj.transform([[0.0, 0.0, 0.0]])


def test_graph_limit_estimator():
    est = GraphLimitDiffusion("quadratic_bowl", beta=0.1, n_energies=9).fit()
    x, e = est.sample(0.1, 0, T=0.01, n_samples=5)
    assert x.shape == (5,) and np.all(e == 0)
    assert est.gluing_ == {}


def test_validation_helpers():
    assert check_positive(2, "a") == 2.0
    for bad in (0, -1, np.inf, "x"):
        with pytest.raises(ValueError):
            check_positive(bad, "a")
    with pytest.raises(ValueError):
        check_nonnegative_int(True, "n")
    assert check_scheme("em") == "em"
    with pytest.raises(ValueError):
        check_states([[np.nan, 0.0]])

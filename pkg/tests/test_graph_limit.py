import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad
from scipy.special import erfc

from irrevhmm.graph.coefficients import EdgeCoefficients
from irrevhmm.graph_limit import (
    GraphDiffusionState,
    GraphLimitModel,
    build_graph_limit,
    compare_projected_law,
    simulate_y,
    y_step,
)
from irrevhmm.potentials import quadratic_bowl

BETA = 0.1


@pytest.fixture(scope="module")
def bowl_model(graphs):
    return build_graph_limit(quadratic_bowl(), BETA, graph=graphs["quadratic_bowl"], n_energies=17)


def _constant_model(graph, drift, diffusion):
    e = graph.edges[0]
    coeffs = {0: EdgeCoefficients.constant(0, e.lo, 10.0, drift, diffusion)}
    return GraphLimitModel(graph, BETA, coeffs, {}, zeta_res=1e-3)


def test_constant_drift_is_exact(graphs):
    model = _constant_model(graphs["quadratic_bowl"], 1.0, 0.0)
    state = simulate_y(model, 1.0, 0, T=0.5, n_samples=3, seed=0)
    np.testing.assert_allclose(state.x, 1.5, rtol=1e-12)


def test_exterior_vertex_reflects(graphs):
    model = _constant_model(graphs["quadratic_bowl"], -1.0, 0.0)
    state = GraphDiffusionState([0.01], [0])
    y_step(state, 0.05, model, np.zeros(1), np.zeros(1))
    # 0.01 - 0.05 reflected about lo + zeta = 0.001
    assert state.x[0] == pytest.approx(2 * 0.001 - (0.01 - 0.05))
    assert state.edge[0] == 0


def test_bowl_stationary_law_is_exponential(bowl_model):
    state = simulate_y(bowl_model, 0.1, 0, T=4.0, n_samples=2000, seed=3)
    ks = stats.kstest(state.x, stats.expon(scale=BETA).cdf).statistic
    assert ks < 0.04


def test_symmetric_branching(dw_model):
    g = dw_model.graph
    left, right = g.lower_edges_by_x(2)
    outer = g.vertices[2].edges_above[0]
    state = simulate_y(dw_model, 0.3, outer, T=0.5, n_samples=4000, seed=11)
    n_left, n_right = np.sum(state.edge == left), np.sum(state.edge == right)
    n = n_left + n_right
    assert n > 500
    assert abs(n_left / n - 0.5) < 3 * np.sqrt(0.25 / n)


def test_outer_edge_mass_relaxes_to_gibbs(dw_model):
    """Occupation of the edge above the saddle matches the Gibbs probability of U > 1/4."""
    g = dw_model.graph
    outer = g.vertices[2].edges_above[0]
    # U = V(x) + y^2, so P(U > c | x) = erfc(sqrt((c - V)/beta)) and the oracle is a 1D integral
    V = lambda x: 0.25 * (x * x - 1) ** 2  # noqa: E731
    w = lambda x: np.exp(-V(x) / BETA)  # noqa: E731
    above = quad(lambda x: w(x) * erfc(np.sqrt(max(0.25 - V(x), 0.0) / BETA)), -3, 3,
                 points=[-np.sqrt(2), 0, np.sqrt(2)], limit=200)[0]
    target = above / quad(w, -3, 3)[0]
    left = g.lower_edges_by_x(2)[0]
    x0 = stats.expon(scale=BETA).rvs(2000, random_state=5)
    x0 = np.minimum(x0, 0.2)
    state = simulate_y(dw_model, x0, np.full(2000, left), T=3.0, seed=5)
    frac = np.mean(state.edge == outer)
    se = np.sqrt(target * (1 - target) / 2000)
    assert abs(frac - target) < 3 * se


@settings(max_examples=15)
@given(st.floats(0.0, 0.6), st.integers(0, 2), st.integers(0, 2**31))
def test_states_stay_on_their_edges(dw_model, x0, edge0, seed):
    lo, hi = dw_model.lo[edge0], dw_model.hi[edge0]
    x0 = float(np.clip(x0, lo + 0.01, min(hi, 1.0) - 0.01))
    state, snaps = simulate_y(dw_model, x0, edge0, T=0.05, n_samples=20, seed=seed, record_every=10)
    for _, x, e in snaps:
        assert np.all(e >= 0)
        assert np.all(x >= dw_model.lo[e]) and np.all(x <= dw_model.hi[e])


def test_batching_does_not_change_samples(dw_model):
    full = simulate_y(dw_model, 0.1, 0, T=0.05, n_samples=6, seed=2)
    part = simulate_y(dw_model, 0.1, 0, T=0.05, n_samples=3, seed=2, replicate_ids=np.arange(3, 6))
    np.testing.assert_array_equal(full.x[3:], part.x)


def test_identical_ensembles_have_zero_distance(rng):
    x = rng.random(500)
    e = rng.integers(0, 3, 500)
    rep = compare_projected_law(x, e, x.copy(), e.copy())
    assert rep.ks == 0.0 and rep.tv == 0.0
    assert len(list(rep.lines())) >= 3


def test_distance_detects_shift(rng):
    x = rng.random(2000)
    e = np.zeros(2000, dtype=int)
    rep = compare_projected_law(x, e, x + 0.2, np.ones(2000, dtype=int))
    assert rep.ks > 0.15
    assert rep.tv == 1.0


def test_model_requires_all_coefficients(graphs):
    with pytest.raises(ValueError):
        GraphLimitModel(graphs["double_well"], BETA, {}, {})

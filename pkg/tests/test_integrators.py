import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irrevhmm.integrators import (
    IntegratorParams,
    em_step,
    hmm_macro_step,
    n_macro_steps,
    noise_width,
    phi_step,
    replicate_rng,
    simulate,
)
from irrevhmm.potentials import double_well, j_drift, quadratic_bowl, tangential_sigma

DW = double_well()
C = j_drift(DW)


def params(**kw):
    base = dict(eps=1e-2, tau=5e-4, delta=5e-3, beta=0.1)
    base.update(kw)
    return IntegratorParams(**base)


@pytest.mark.parametrize(
    "kw",
    [dict(eps=0.0), dict(tau=-1.0), dict(delta=np.inf), dict(beta=0.0), dict(kappa=-0.1),
     dict(n_micro=0), dict(n_micro=20), dict(seed=-1)],
)
def test_params_validation(kw):
    with pytest.raises(ValueError):
        params(**kw)


def test_regime_warnings():
    assert params().regime_warnings() == []
    bad = params(tau=1e-6)  # tau/eps = 1e-4 < delta
    assert len(bad.regime_warnings()) == 1
    with pytest.warns(RuntimeWarning):
        bad.check_regime()
    r = params().convergence_ratios()
    assert r["tau/eps"] == pytest.approx(0.05)
    assert r["delta*eps/tau"] == pytest.approx(0.1)


def test_phi_step_matches_formula():
    z = np.array([0.3, -0.2])
    xi = np.array([0.5, -1.0])
    h, alpha, beta = 1e-3, 50.0, 0.1
    out = phi_step(z, h, alpha, DW, C, beta, xi=xi)
    expect = z + h * (alpha * C(z) - DW.grad(z)) + np.sqrt(2 * beta * h) * xi
    np.testing.assert_allclose(out.z, expect, rtol=1e-15)
    assert out.status == "ok"
    slow = phi_step(z, h, 0.0, DW, C, beta, xi=xi)
    np.testing.assert_allclose(slow.z, z - h * DW.grad(z) + np.sqrt(2 * beta * h) * xi)


def test_phi_step_regulariser_term():
    s = tangential_sigma(DW, kappa=0.2)
    z = np.array([0.3, -0.2])
    xi, xs = np.array([0.1, 0.2]), np.array([-0.3, 0.7])
    h, alpha = 1e-3, 10.0
    out = phi_step(z, h, alpha, DW, C, 0.1, sigma=s, xi=xi, xi_sigma=xs)
    expect = (z + h * (alpha * C.corrected(z, s) - DW.grad(z)) + np.sqrt(0.2 * h) * xi
              + np.sqrt(0.2 * alpha * h) * s(z) @ xs)
    np.testing.assert_allclose(out.z, expect, rtol=1e-14)


def test_hmm_is_micro_then_macro():
    p = params()
    z = np.array([0.8, 0.1])
    noise = np.array([0.2, -0.4, 1.1, 0.3])
    out = hmm_macro_step(z, p, DW, C, noise=noise)
    a = phi_step(z, p.tau, p.alpha, DW, C, p.beta, xi=noise[:2]).z
    b = phi_step(a, p.delta - p.tau, 0.0, DW, C, p.beta, xi=noise[2:]).z
    np.testing.assert_allclose(out.z, b, rtol=1e-15)


def test_em_step_formula():
    p = params(eps=0.5)
    z = np.array([0.8, 0.1])
    xi = np.array([0.2, -0.4])
    out = em_step(z, p, DW, C, noise=xi)
    expect = z + p.delta * (C(z) / p.eps - DW.grad(z)) + np.sqrt(2 * p.beta * p.delta) * xi
    np.testing.assert_allclose(out.z, expect)


def test_noise_width():
    p = params(n_micro=3, kappa=0.1)
    s = tangential_sigma(DW, 0.1)
    assert noise_width("em", p, 2) == 2
    assert noise_width("hmm", p, 2) == 3 * 2 + 2
    assert noise_width("hmm", p, 2, s) == 3 * 4 + 2
    with pytest.raises(ValueError):
        noise_width("rk4", p, 2)


def test_kappa_mismatch_rejected():
    with pytest.raises(ValueError, match="disagrees"):
        hmm_macro_step(np.zeros(2), params(), DW, C, rng=replicate_rng(0, 0),
                       sigma=tangential_sigma(DW, 0.3))


def test_observer_and_time_grid():
    seen = []
    res = simulate(np.zeros(2), "hmm", params(), DW, C, T=0.1, observer=lambda t, z: seen.append(t))
    assert res.n_steps == n_macro_steps(0.1, 5e-3) == 20
    assert len(seen) == 21
    np.testing.assert_allclose(seen, np.arange(21) * 5e-3)
    assert res.status == "ok"


def test_determinism_and_batch_independence():
    p = params(seed=7)
    z0 = np.zeros((5, 2))
    a = simulate(z0, "hmm", p, DW, C, T=1.0).z
    b = simulate(z0, "hmm", p, DW, C, T=1.0).z
    np.testing.assert_array_equal(a, b)
    # replicate 3 alone reproduces row 3 of the batch
    c = simulate(np.zeros(2), "hmm", p, DW, C, T=1.0, replicate_ids=[3]).z
    np.testing.assert_array_equal(c, a[3])
    # and row order follows replicate ids, not positions
    d = simulate(z0[:2], "hmm", p, DW, C, T=1.0, replicate_ids=[4, 1]).z
    np.testing.assert_array_equal(d, a[[4, 1]])
    e = simulate(z0, "hmm", params(seed=8), DW, C, T=1.0).z
    assert not np.array_equal(a, e)


def test_block_size_does_not_change_the_path():
    p = params(seed=3)
    a = simulate(np.zeros((3, 2)), "em", p, DW, C, T=0.5, block=7).z
    b = simulate(np.zeros((3, 2)), "em", p, DW, C, T=0.5, block=1024).z
    np.testing.assert_array_equal(a, b)


def test_simulate_matches_stepwise_draws():
    p = params(seed=11)
    rng = replicate_rng(11, 0)
    z = np.array([0.2, 0.2])
    for _ in range(30):
        z = hmm_macro_step(z, p, DW, C, rng=rng).z
    res = simulate(np.array([0.2, 0.2]), "hmm", p, DW, C, T=30 * p.delta)
    np.testing.assert_array_equal(res.z, z)


def test_divergence_is_flagged_and_frozen():
    p = params(eps=5e-2, seed=1)
    res = simulate(np.zeros((4, 2)), "em", p, DW, C, T=50.0)
    assert res.diverged.all()
    assert np.isnan(res.z).all()
    assert np.all(res.diverged_step > 0)
    assert np.all(np.isfinite(res.divergence_time(p.delta)))
    assert res.n_steps < n_macro_steps(50.0, p.delta)  # stopped early


def test_shape_errors():
    with pytest.raises(ValueError):
        simulate(np.zeros(3), "hmm", params(), DW, C, T=1.0)
    with pytest.raises(ValueError):
        simulate(np.zeros(2), "leapfrog", params(), DW, C, T=1.0)
    with pytest.raises(ValueError):
        simulate(np.zeros((2, 2)), "em", params(), DW, C, T=1.0, replicate_ids=[0])


def test_slow_step_moments_on_bowl():
    # U = |z|^2/2, alpha = 0: z' = (1-h) z + sqrt(2 beta h) xi
    bowl = quadratic_bowl()
    rng = np.random.default_rng(0)
    n, h, beta = 200_000, 0.01, 0.3
    z = np.tile([1.0, -2.0], (n, 1))
    out = phi_step(z, h, 0.0, bowl, None, beta, rng=rng).z
    mean_se = np.sqrt(2 * beta * h / n)
    np.testing.assert_allclose(out.mean(axis=0), [1 - h, -2 * (1 - h)], atol=4 * mean_se)
    var = out.var(axis=0, ddof=1)
    np.testing.assert_allclose(var, 2 * beta * h, rtol=4 * np.sqrt(2 / n))


@given(st.floats(1e-3, 1.0), st.floats(-2, 2), st.floats(-2, 2))
def test_noise_free_hmm_does_not_increase_energy_much(eps, x, y):
    # with zero noise the stiff rotation changes U only at second order in tau/eps
    p = params(eps=eps, tau=0.05 * eps, delta=max(5e-3, 0.05 * eps))
    z = np.array([x, y])
    out = hmm_macro_step(z, p, DW, C, noise=np.zeros(4))
    g = DW.grad(z)
    bound = DW(z) + (p.tau / p.eps) ** 2 * (g @ g) * (1 + np.abs(DW.hess(z)).max())
    assert DW(out.z) <= bound + 1e-12

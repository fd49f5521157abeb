import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irrevhmm.potentials import (
    POTENTIALS,
    double_well,
    get_potential,
    j_drift,
    quadratic_bowl,
    rbs3,
    tangential_sigma,
    tilted_double_well,
)

BUILTINS = ["double_well", "tilted_double_well", "rbs3", "quadratic_bowl"]
coord = st.floats(-3.0, 3.0, allow_nan=False)


def fd_gradient(f, z, h=1e-6):
    out = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        out[k] = (f(z + e) - f(z - e)) / (2 * h)
    return out


def fd_laplacian(f, z, h=1e-4):
    total = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        total += (f(z + e) - 2 * f(z) + f(z - e)) / h**2
    return total


def fd_divergence(field, z, h=1e-6):
    total = 0.0
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        total += (field(z + e)[k] - field(z - e)[k]) / (2 * h)
    return total


def test_double_well_values():
    p = double_well()
    assert p(np.array([0.0, 0.0])) == pytest.approx(0.25)
    np.testing.assert_allclose(p.grad(np.array([1.0, 0.0])), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(p.grad(np.array([2.0, 1.0])), [6.0, 2.0])


def test_tilted_critical_points():
    p = tilted_double_well()
    xs = [c[0] for c in p.critical_points]
    np.testing.assert_allclose(xs, [-0.9304, -0.12705, 1.0575], atol=1e-4)
    for c in p.critical_points:
        assert np.linalg.norm(p.grad(np.array(c))) < 1e-10


@given(coord, coord)
def test_tilt_preserves_y_symmetry(x, y):
    p = tilted_double_well()
    assert p(np.array([x, y])) == pytest.approx(p(np.array([x, -y])), abs=1e-12)


def test_rbs3_values():
    p = rbs3()
    assert p(np.array([0.0, 0.0])) == pytest.approx(2.25)
    z = np.array([0.3, -0.7])
    np.testing.assert_allclose(p.grad(z), fd_gradient(p, z), rtol=1e-5)


@given(coord, coord)
def test_rbs3_even_in_x(x, y):
    p = rbs3()
    assert p(np.array([x, y])) == pytest.approx(p(np.array([-x, y])), rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("name", BUILTINS)
def test_derivatives_against_finite_differences(name):
    p = get_potential(name)
    cloud = np.random.default_rng(1).uniform(-3, 3, size=(1000, 2))
    g = p.grad(cloud)
    lap = p.lap(cloud)
    hess = p.hess(cloud)
    for z, gz, lz, hz in zip(cloud[:200], g, lap, hess):
        fd = fd_gradient(p, z)
        assert np.linalg.norm(fd - gz) <= 1e-5 * max(np.linalg.norm(gz), 1.0)
        assert abs(fd_laplacian(p, z) - lz) <= 1e-4 * max(abs(lz), 1.0)
        assert np.trace(hz) == pytest.approx(lz, rel=1e-12, abs=1e-12)
        fd_h = np.array([fd_gradient(lambda w, k=k: p.grad(w)[k], z) for k in range(2)])
        np.testing.assert_allclose(fd_h, hz, rtol=1e-5, atol=1e-5)


def test_vectorised_shapes():
    p = rbs3()
    z = np.zeros((4, 3, 2))
    assert p(z).shape == (4, 3)
    assert p.grad(z).shape == (4, 3, 2)
    assert p.lap(z).shape == (4, 3)
    assert p.hess(z).shape == (4, 3, 2, 2)


def test_double_well_critical_classification():
    p = double_well()
    for c, kind in zip(p.critical_points, ["min", "min", "saddle"]):
        eig = np.linalg.eigvalsh(p.hess(np.array(c)))
        assert (np.all(eig > 0)) == (kind == "min")
        assert (eig[0] < 0 < eig[1]) == (kind == "saddle")


def test_unknown_potential():
    with pytest.raises(ValueError, match="unknown potential"):
        get_potential("banana")
    assert set(BUILTINS) <= set(POTENTIALS)


def test_j_drift_rotation():
    p = double_well()
    c = j_drift(p)
    np.testing.assert_allclose(c(np.array([2.0, 1.0])), [2.0, -6.0])


@pytest.mark.parametrize("name", BUILTINS)
def test_j_drift_orthogonal_and_norm_preserving(name):
    p = get_potential(name)
    c = j_drift(p)
    z = np.random.default_rng(2).uniform(-3, 3, size=(1000, 2))
    cz, gz = c(z), p.grad(z)
    dots = np.abs(np.sum(cz * gz, axis=-1))
    assert np.all(dots <= 1e-12 * np.linalg.norm(cz, axis=-1) * np.linalg.norm(gz, axis=-1) + 1e-300)
    np.testing.assert_allclose(np.linalg.norm(cz, axis=-1), np.linalg.norm(gz, axis=-1), rtol=1e-14)


@given(coord, coord)
def test_j_drift_divergence_free(x, y):
    p = rbs3()
    c = j_drift(p)
    z = np.array([x, y])
    scale = 1.0 + np.abs(p.hess(z)).max()
    assert abs(fd_divergence(c, z)) < 1e-5 * scale


def test_j_drift_vanishes_linearly_at_critical_points():
    p = double_well()
    c = j_drift(p)
    for zk in p.critical_points:
        zk = np.array(zk)
        h = np.array([1e-3, -2e-3])
        d_k = np.linalg.norm(p.hess(zk), 2) * 1.01
        assert np.linalg.norm(c(zk + h)) <= d_k * np.linalg.norm(h)


def test_j_drift_rejects_bad_matrices():
    with pytest.raises(ValueError):
        j_drift(quadratic_bowl(3))
    with pytest.raises(ValueError, match="antisymmetric"):
        j_drift(double_well(), J=np.eye(2))
    with pytest.raises(ValueError, match="even"):
        j_drift(quadratic_bowl(3), J=np.zeros((3, 3)))
    J4 = np.zeros((4, 4))
    J4[0, 1], J4[1, 0], J4[2, 3], J4[3, 2] = 1, -1, 2, -2
    c = j_drift(quadratic_bowl(4), J=J4)
    z = np.array([1.0, 2.0, 3.0, 4.0])
    assert c(z) @ z == pytest.approx(0.0)


@given(coord, coord)
def test_tangential_sigma_invariants(x, y):
    p = rbs3()
    s = tangential_sigma(p, kappa=0.1)
    z = np.array([x, y])
    assert s.check(p, z)


def test_tangential_sigma_divergence_matches_fd():
    p = double_well()
    s = tangential_sigma(p, kappa=0.5)
    z = np.array([0.4, -0.3])
    h = 1e-6
    fd = np.zeros(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd += (s.diffusion(z + e)[j] - s.diffusion(z - e)[j]) / (2 * h)
    np.testing.assert_allclose(s.divergence(z), fd, rtol=1e-6, atol=1e-8)
    c = j_drift(p)
    np.testing.assert_allclose(c.corrected(z, s), c(z) + 0.25 * s.divergence(z))
    np.testing.assert_allclose(c.corrected(z, None), c(z))


def test_sigma_kappa_validation_and_bound():
    p = double_well()
    with pytest.raises(ValueError):
        tangential_sigma(p, kappa=-1.0)
    s = tangential_sigma(p, kappa=0.1)
    assert s.kappa_bound(p, p.critical_points, K=1.0) == pytest.approx(0.5)

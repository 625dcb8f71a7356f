"""Grid assembly against closed-form Neumann spectra and Robin updates."""

import numpy as np
import pytest

from deltaspec import (
    CoefficientField,
    Grid,
    Perturbation,
    PositivityError,
    ValidationError,
    assemble_neumann,
    assemble_robin,
    boundary_measure,
    inverse_power,
)


def _grid1d(n, length=1.0):
    return Grid(np.array([[0.0, length]]), (n,))


def _stencil_eigs(n, h, t, a=1.0):
    k = np.arange(n)
    return t + a * (2.0 / h**2) * (1.0 - np.cos(k * np.pi / n))


def test_neumann_1d_closed_form_spectrum():
    n, t = 64, 0.7
    g = _grid1d(n)
    a = assemble_neumann(g, CoefficientField.isotropic(1.0, 1, t=t))
    expected = np.sort(_stencil_eigs(n, g.spacing[0], t))
    got = np.sort(a.eigenvalues)
    scale = expected[-1]
    assert np.max(np.abs(got - expected)) / scale < 1e-13


def test_neumann_1d_constant_coefficient_scales():
    n, t, c = 48, 0.3, 2.5
    g = _grid1d(n)
    a = assemble_neumann(g, CoefficientField.isotropic(c, 1, t=t))
    expected = np.sort(_stencil_eigs(n, g.spacing[0], t, a=c))
    got = np.sort(a.eigenvalues)
    assert np.max(np.abs(got - expected)) / expected[-1] < 1e-13


def test_neumann_1d_cosine_eigenvectors():
    n, t = 32, 1.0
    g = _grid1d(n)
    a = assemble_neumann(g, CoefficientField.isotropic(1.0, 1, t=t))
    h = g.spacing[0]
    lam = _stencil_eigs(n, h, t)
    i = np.arange(n)
    for k in (1, 3, 7):
        v = np.cos(k * np.pi * (i + 0.5) / n)
        r = a.matrix @ v - lam[k] * v
        assert np.linalg.norm(r) / (lam[k] * np.linalg.norm(v)) < 1e-12


def test_neumann_constant_mode():
    g = _grid1d(64)
    t = 0.9
    a = assemble_neumann(g, CoefficientField.isotropic(1.0, 1, t=t))
    ones = np.ones(g.size)
    err = np.max(np.abs(a.matrix @ ones - t * ones))
    assert err < 1e-11 * (2.0 / g.spacing[0] ** 2)


def test_neumann_2d_tensor_sum_spectrum():
    t = 0.5
    g = Grid(np.array([[0.0, 1.0], [0.0, 2.0]]), (6, 5))
    a = assemble_neumann(g, CoefficientField.isotropic(1.0, 2, t=t))
    ex = _stencil_eigs(6, g.spacing[0], 0.0)
    ey = _stencil_eigs(5, g.spacing[1], 0.0)
    expected = np.sort((t + ex[:, None] + ey[None, :]).ravel())
    got = np.sort(a.eigenvalues)
    assert np.max(np.abs(got - expected)) / expected[-1] < 1e-13


def test_neumann_2d_anisotropic_diagonal():
    t = 0.2
    g = Grid(np.array([[0.0, 1.0], [0.0, 1.0]]), (7, 7))
    coeffs = CoefficientField(np.diag([2.0, 0.5]), t=t)
    a = assemble_neumann(g, coeffs)
    ex = _stencil_eigs(7, g.spacing[0], 0.0, a=2.0)
    ey = _stencil_eigs(7, g.spacing[1], 0.0, a=0.5)
    expected = np.sort((t + ex[:, None] + ey[None, :]).ravel())
    got = np.sort(a.eigenvalues)
    assert np.max(np.abs(got - expected)) / expected[-1] < 1e-13


def test_neumann_cross_terms_symmetric_elliptic():
    g = Grid(np.array([[0.0, 1.0], [0.0, 1.0]]), (9, 9))
    tensor = np.array([[1.0, 0.3], [0.3, 1.0]])
    coeffs = CoefficientField(np.broadcast_to(tensor, (2, 2)).copy(), t=1.0)
    a = assemble_neumann(g, coeffs)
    assert np.max(np.abs(a.matrix - a.matrix.T)) < 1e-14 * np.abs(a.matrix).max()
    assert a.eigenvalues.min() > 0


def test_continuum_convergence_is_second_order():
    # first nonconstant mode of -u'' on (0,1) with Neumann ends: pi^2
    t = 1.0
    errs = []
    for n in (64, 128, 256):
        g = _grid1d(n)
        a = assemble_neumann(g, CoefficientField.isotropic(1.0, 1, t=t))
        lam1 = np.sort(a.eigenvalues)[1]
        errs.append(abs(lam1 - (t + np.pi**2)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_robin_zero_density_is_neumann():
    g = Grid(np.array([[0.0, 1.0], [0.0, 1.0]]), (8, 8))
    coeffs = CoefficientField.isotropic(1.0, 2, t=1.0)
    b = boundary_measure(g)
    a_n = assemble_neumann(g, coeffs)
    a_r = assemble_robin(g, coeffs, Perturbation.constant(b, 0.0))
    assert np.array_equal(a_r.matrix, a_n.matrix)


def test_robin_update_is_boundary_diagonal():
    g = Grid(np.array([[0.0, 1.0], [0.0, 1.5]]), (8, 6))
    coeffs = CoefficientField.isotropic(1.0, 2, t=1.0)
    bnd = boundary_measure(g)
    beta = 2.25
    a_n = assemble_neumann(g, coeffs)
    a_r = assemble_robin(g, coeffs, Perturbation.constant(bnd, beta))
    diff = a_r.matrix - a_n.matrix
    off = diff - np.diag(np.diag(diff))
    assert np.max(np.abs(off)) == 0.0
    # diagonal bump per boundary node is (atom weight * beta) / cell volume
    expected = np.zeros(g.size)
    nodes = g.nodes()
    for atom, w in zip(bnd.atoms, bnd.weights):
        idx = int(np.argmin(np.sum((nodes - atom) ** 2, axis=1)))
        expected[idx] += w * beta / g.cell_volume
    assert np.allclose(np.diag(diff), expected, rtol=1e-12, atol=1e-12)


def test_robin_negative_density_can_fail_positivity():
    g = _grid1d(16)
    coeffs = CoefficientField.isotropic(1.0, 1, t=1.0)
    bnd = boundary_measure(g)
    with pytest.raises(PositivityError):
        assemble_robin(g, coeffs, Perturbation.constant(bnd, -1e6))


def test_inverse_power_consistency():
    g = _grid1d(40)
    a = assemble_neumann(g, CoefficientField.isotropic(1.0, 1, t=2.0))
    inv = inverse_power(a, 1.0)
    direct = a.solve(np.eye(g.size))
    assert np.max(np.abs(inv - direct)) / np.abs(direct).max() < 1e-12
    half = inverse_power(a, 0.5)
    assert np.max(np.abs(half @ half - inv)) / np.abs(inv).max() < 1e-11
    with pytest.raises(ValidationError):
        inverse_power(a, -0.5)


def test_grid_geometry():
    g = Grid(np.array([[0.0, 2.0], [1.0, 2.0]]), (4, 5))
    assert g.size == 20
    assert np.allclose(g.spacing, [0.5, 0.2])
    assert g.cell_volume == pytest.approx(0.1)
    x = g.axis_nodes(0)
    assert np.allclose(x, [0.25, 0.75, 1.25, 1.75])
    assert g.nodes().shape == (20, 2)
    hull = g.nodes()
    assert hull[:, 0].min() == pytest.approx(0.25)
    assert hull[:, 1].max() == pytest.approx(1.9)


def test_grid_node_cap():
    with pytest.raises(ValidationError):
        Grid(np.array([[0.0, 1.0], [0.0, 1.0]]), (90, 90), node_cap=5000)


def test_solve_matches_dense_solver():
    g = _grid1d(25)
    a = assemble_neumann(g, CoefficientField.isotropic(1.0, 1, t=1.5))
    rng = np.random.Generator(np.random.Philox(11))
    rhs = rng.standard_normal((25, 3))
    x = a.solve(rhs)
    x_ref = np.linalg.solve(a.matrix, rhs)
    assert np.max(np.abs(x - x_ref)) < 1e-10 * np.abs(x_ref).max()

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from amgstokes.errors import DimensionMismatch, InvalidSize
from amgstokes.schur import split_system
from amgstokes.stokes import P_SHIFT, PI, analytic_solution, assemble, error_norms, forcing, pressure, velocity


def direct_solve(prob):
    return spla.spsolve(prob.A.to_scipy().tocsc(), prob.rhs)


def test_centre_of_the_cube():
    u, p = analytic_solution(0.5, 0.5, 0.5)
    np.testing.assert_allclose(u, 0.0, atol=1e-15)
    assert p == pytest.approx(1 - 8 / PI**3, rel=1e-15)
    np.testing.assert_allclose(forcing(0.5, 0.5, 0.5)[0], 0.0, atol=1e-14)


def test_boundary_velocity_is_nontrivial():
    z = np.linspace(0, 1, 11)
    u = velocity(0.5, 0.0, z)
    np.testing.assert_allclose(u[0], PI * np.sin(PI * 0.5) * (1 - np.cos(PI * z)), atol=1e-14)
    assert np.abs(u).max() > 1


def fd_oracle(x, y, z, h=1e-4):
    """Central differences of the analytic field: ``(-Lap u + grad p, div u)``."""
    lap = -6 * velocity(x, y, z)
    grad, div = np.zeros(3), 0.0
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        up, um = velocity(x + e[0], y + e[1], z + e[2]), velocity(x - e[0], y - e[1], z - e[2])
        lap += up + um
        grad[axis] = (pressure(x + e[0], y + e[1], z + e[2]) - pressure(x - e[0], y - e[1], z - e[2])) / (2 * h)
        div += (up[axis] - um[axis]) / (2 * h)
    return -lap / h**2 + grad, div


def test_forcing_and_divergence_against_finite_differences():
    pts = np.random.default_rng(0).uniform(0.05, 0.95, (100, 3))
    for x, y, z in pts:
        f, div = fd_oracle(x, y, z)
        assert np.linalg.norm(forcing(x, y, z) - f) < 1e-5 * max(1.0, np.linalg.norm(f))
        assert abs(div) < 1e-6


def test_forcing_scales_with_viscosity():
    x, y, z = 0.3, 0.6, 0.2
    gp = forcing(x, y, z, 0.0)
    np.testing.assert_allclose(forcing(x, y, z, 2.0) - gp, 2 * (forcing(x, y, z, 1.0) - gp), rtol=1e-14)


def test_pressure_has_zero_mean():
    t = (np.arange(200) + 0.5) / 200
    s = np.sin(PI * t).mean()
    assert s**3 - P_SHIFT == pytest.approx(0.0, abs=1e-4)


def test_smallest_system():
    prob = assemble(2)
    assert prob.A.shape == (32, 32) and prob.rhs.shape == (32,)
    assert prob.pmask.sum() == 8 and prob.pmask[24:].all()
    s = split_system(prob.A, prob.pmask)
    assert all(M.nnz > 0 for M in (s.A_c, s.B_c, s.Bt, s.C))


def test_operator_structure():
    n = 8
    prob = assemble(n)
    s = split_system(prob.A, prob.pmask)
    A, B, Bt, C = (M.todense() for M in (s.A_c, s.B_c, s.Bt, s.C))
    assert np.abs(A - A.T).max() <= 1e-13 * np.abs(A).max()
    assert np.abs(C - C.T).max() <= 1e-13 * np.abs(C).max()
    # pressures out of reach of the one-sided wall stencils, which span three nodes
    k, j, i = np.meshgrid(*[np.arange(n)] * 3, indexing="ij")
    deep = np.all([(c >= 3) & (c <= n - 4) for c in (i, j, k)], axis=0).ravel()
    rows = np.flatnonzero(deep)
    np.testing.assert_allclose(B[rows], -Bt.T[rows], atol=1e-12)


def test_velocity_block_is_three_aligned():
    prob = assemble(3)
    s = split_system(prob.A, prob.pmask)
    r = s.A_c.row_index()
    # the velocity Laplacian couples only equal components
    assert np.all(r % 3 == s.A_c.col % 3)


def test_assembly_is_reproducible():
    a, b = assemble(4), assemble(4)
    np.testing.assert_array_equal(a.A.val, b.A.val)
    np.testing.assert_array_equal(a.rhs, b.rhs)


def test_invalid_size():
    with pytest.raises(InvalidSize):
        assemble(1)
    with pytest.raises(ValueError):
        assemble(4, mu=0)


def test_direct_solution_at_n4():
    prob = assemble(4)
    ev, ep = error_norms(prob, direct_solve(prob))
    assert ev < 0.2 and np.isfinite(ep)


def test_consistency_error_decreases():
    trunc, ev = [], []
    for n in (4, 8):
        prob = assemble(n)
        xe = prob.exact()
        res = prob.A.matvec(xe) - prob.rhs
        u = ~prob.pmask
        trunc.append(np.linalg.norm(res[u]) / np.linalg.norm(prob.rhs[u]))
        ev.append(error_norms(prob, direct_solve(prob))[0])
    assert trunc[1] < trunc[0]
    assert ev[1] < ev[0] < 0.2


def test_error_norms_edge_cases():
    prob = assemble(3)
    assert error_norms(prob, np.zeros(prob.A.nrows))[0] == pytest.approx(1.0)
    shifted = prob.exact()
    shifted[prob.pmask] += 5.0
    assert error_norms(prob, shifted) == pytest.approx((0.0, 0.0), abs=1e-14)
    with pytest.raises(DimensionMismatch):
        error_norms(prob, np.zeros(3))


def test_velocity_refinement_order(cube_problems, direct_solutions):
    ev = [error_norms(cube_problems(n), direct_solutions(n))[0] for n in (8, 16)]
    assert ev[0] / ev[1] >= 2.8

import numpy as np
import pytest
import scipy.sparse as sp

from amgstokes.sparse import SparseMatrix
from amgstokes.stokes import assemble

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record(num, ok, detail=""):
    ACCEPTANCE[num] = (bool(ok), detail)
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def poisson1d(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], (n, n)).tocsr()


def poisson(n, dim):
    L = poisson1d(n)
    M = L
    for _ in range(dim - 1):
        M = sp.kron(M, sp.identity(n)) + sp.kron(sp.identity(M.shape[0]), L)
    return SparseMatrix.from_scipy(M.tocsr())


def random_sparse(rng, n, m=None, density=0.3, diag=0.0):
    m = n if m is None else m
    D = rng.uniform(-1, 1, (n, m)) * (rng.random((n, m)) < density)
    if diag:
        D[np.arange(min(n, m)), np.arange(min(n, m))] += diag
    return D


def random_spd(rng, n):
    X = rng.standard_normal((n, n))
    return X @ X.T + n * np.eye(n)


@pytest.fixture(scope="session")
def cube_problems():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = assemble(n)
        return cache[n]

    return get


@pytest.fixture(scope="session")
def ladder_runs(cube_problems):
    """Solve results keyed by (solver_id, n); each configuration runs once per session."""
    from amgstokes.config import make_solver, preset

    cache = {}

    def get(sid, n):
        key = (sid, n)
        if key not in cache:
            prob = cube_problems(n)
            solver = make_solver(prob.A, preset(sid), prob.pmask)
            x, rep = solver.solve(prob.rhs)
            cache[key] = (solver, x, rep)
        return cache[key]

    return get


# 6x6 matrix with a 2x2 block structure, in scalar CSR form
EXAMPLE_PTR = [0, 4, 8, 10, 12, 14, 16]
EXAMPLE_COL = [0, 1, 2, 3, 0, 1, 2, 3, 2, 3, 2, 3, 4, 5, 4, 5]
EXAMPLE_VAL = [0.71, 0.65, 0.26, 0.79, 0.54, 0.37, 0.17, 0.62,
               0.89, 0.05, 0.27, 0.15, 0.52, 0.34, 0.45, 0.64]
EXAMPLE_BLOCKS = [[[0.71, 0.65], [0.54, 0.37]], [[0.26, 0.79], [0.17, 0.62]],
                  [[0.89, 0.05], [0.27, 0.15]], [[0.52, 0.34], [0.45, 0.64]]]


def example_triplets():
    rows = np.repeat(np.arange(6), np.diff(EXAMPLE_PTR))
    return list(zip(rows.tolist(), EXAMPLE_COL, EXAMPLE_VAL))


@pytest.fixture(scope="session")
def direct_solutions(cube_problems):
    """Sparse direct solution of the cube system, cached per grid size."""
    import scipy.sparse.linalg as spla

    cache = {}

    def get(n):
        if n not in cache:
            prob = cube_problems(n)
            cache[n] = spla.spsolve(prob.A.to_scipy().tocsc(), prob.rhs)
        return cache[n]

    return get

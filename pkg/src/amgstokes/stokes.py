"""Finite-difference Stokes problem on the unit cube with a known solution.

Velocities and pressures are collocated on the ``n^3`` interior nodes of a
uniform grid with spacing ``h = 1/(n+1)``.  Momentum rows use the 7-point
Laplacian and a central pressure gradient (second-order one-sided next to
the wall).  Continuity rows use the central divergence and a pressure
stabilization ``-eps_stab h^2 Lap(p)`` with natural boundary conditions.
Dirichlet velocities from the analytic field are moved to the right-hand
side, and one pressure node is pinned to its analytic value.

Unknown layout: velocity node-major with three contiguous components, then
one pressure per node.  Nodes are numbered lexicographically with ``x``
fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvalidSize
from .sparse import SparseMatrix, build_csr

PI = np.pi
P_SHIFT = 8.0 / PI**3


class FieldSample(NamedTuple):
    u: np.ndarray
    p: float


def velocity(x, y, z):
    """Analytic velocity, shape ``(3,) + broadcast(x, y, z).shape``."""
    sx, sy, sz = np.sin(PI * x), np.sin(PI * y), np.sin(PI * z)
    cx, cy, cz = np.cos(PI * x), np.cos(PI * y), np.cos(PI * z)
    return PI * np.array([sx * (cy - cz), sy * (cz - cx), sz * (cx - cy)])


def pressure(x, y, z):
    return np.sin(PI * x) * np.sin(PI * y) * np.sin(PI * z) - P_SHIFT


def analytic_solution(x, y, z) -> FieldSample:
    return FieldSample(velocity(x, y, z), pressure(x, y, z))


def forcing(x, y, z, mu=1.0):
    """``f = -mu Lap(u) + grad(p)``; each velocity component satisfies ``Lap(u) = -2 pi^2 u``."""
    sx, sy, sz = np.sin(PI * x), np.sin(PI * y), np.sin(PI * z)
    cx, cy, cz = np.cos(PI * x), np.cos(PI * y), np.cos(PI * z)
    gp = PI * np.array([cx * sy * sz, sx * cy * sz, sx * sy * cz])
    return 2 * mu * PI**2 * velocity(x, y, z) + gp


@dataclass
class StokesProblem:
    n: int
    mu: float
    eps_stab: float
    A: SparseMatrix
    rhs: np.ndarray
    pmask: np.ndarray

    @property
    def h(self):
        return 1.0 / (self.n + 1)

    @property
    def nodes(self):
        return self.n**3

    def coordinates(self):
        """Node coordinates, each of shape ``(n^3,)``, lexicographic with x fastest."""
        t = np.arange(1, self.n + 1) * self.h
        z, y, x = np.meshgrid(t, t, t, indexing="ij")
        return x.ravel(), y.ravel(), z.ravel()

    def exact(self):
        """Analytic nodal values in the unknown layout."""
        x, y, z = self.coordinates()
        return np.concatenate((velocity(x, y, z).T.ravel(), pressure(x, y, z)))


def assemble(n: int, mu: float = 1.0, eps_stab: float = 0.1) -> StokesProblem:
    if n < 2:
        raise InvalidSize(f"need at least 2 interior nodes per axis, got {n}")
    if mu <= 0 or eps_stab < 0:
        raise ValueError("mu must be positive and eps_stab non-negative")
    h = 1.0 / (n + 1)
    N = n**3
    nu = 3 * N
    idx = np.arange(N).reshape(n, n, n)  # [k, j, i]
    t = np.arange(1, n + 1) * h
    Z, Y, X = np.meshgrid(t, t, t, indexing="ij")
    rhs = np.zeros(4 * N)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c = np.broadcast_arrays(np.ravel(r), np.ravel(c))
        rows.append(r)
        cols.append(c)
        vals.append(np.broadcast_to(np.ravel(v) if np.ndim(v) else v, r.shape))

    f = forcing(X, Y, Z, mu)
    node = idx.ravel()
    for c in range(3):
        rhs[3 * node + c] = f[c].ravel()
    # momentum: -mu * 7-point Laplacian, component-wise
    cl = mu / h**2
    for c in range(3):
        add(3 * node + c, 3 * node + c, 6 * cl)
    for axis in range(3):
        for step in (-1, 1):
            nb = np.roll(idx, -step, axis=2 - axis)
            inside = _inside(n, axis, step)
            src = idx[inside]
            for c in range(3):
                add(3 * src + c, 3 * nb[inside] + c, -cl)
            # wall neighbour: Dirichlet value goes to the right-hand side
            wall = ~inside
            wx, wy, wz = (G[wall] for G in (X, Y, Z))
            off = np.zeros(3)
            off[axis] = step * h
            ub = velocity(wx + off[0], wy + off[1], wz + off[2])
            for c in range(3):
                np.add.at(rhs, 3 * idx[wall] + c, cl * ub[c])
    # pressure gradient in momentum rows, divergence in continuity rows
    for axis in range(3):
        for (src, nbs, w) in _gradient_stencil(n, idx, axis, h):
            add(3 * src + axis, nu + nbs, w)
        for step in (-1, 1):
            inside = _inside(n, axis, step)
            nb = np.roll(idx, -step, axis=2 - axis)
            add(nu + idx[inside], 3 * nb[inside] + axis, step / (2 * h))
            wall = ~inside
            wx, wy, wz = (G[wall] for G in (X, Y, Z))
            off = np.zeros(3)
            off[axis] = step * h
            ub = velocity(wx + off[0], wy + off[1], wz + off[2])[axis]
            np.add.at(rhs, nu + idx[wall], -step / (2 * h) * ub)
    # stabilization: eps_stab * (Neumann 7-point graph Laplacian)
    for axis in range(3):
        for step in (-1, 1):
            inside = _inside(n, axis, step)
            nb = np.roll(idx, -step, axis=2 - axis)
            add(nu + idx[inside], nu + idx[inside], eps_stab)
            add(nu + idx[inside], nu + nb[inside], -eps_stab)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals).astype(np.float64)

    # pin the first pressure node; its column moves to the right-hand side so C stays symmetric
    pin = nu
    p_ref = float(pressure(X.ravel()[0], Y.ravel()[0], Z.ravel()[0]))
    hit_col = (cols == pin) & (rows != pin)
    np.add.at(rhs, rows[hit_col], -vals[hit_col] * p_ref)
    drop = ((rows == pin) | (cols == pin))
    rows, cols, vals = rows[~drop], cols[~drop], vals[~drop]
    rows = np.append(rows, pin)
    cols = np.append(cols, pin)
    vals = np.append(vals, 1.0)
    rhs[pin] = p_ref

    A = build_csr(4 * N, 4 * N, (rows, cols, vals))
    pmask = np.zeros(4 * N, dtype=bool)
    pmask[nu:] = True
    return StokesProblem(n, mu, eps_stab, A, rhs, pmask)


def _inside(n, axis, step):
    """Mask over ``idx[k, j, i]`` of nodes whose neighbour along ``axis`` in direction ``step`` is interior."""
    coord = np.arange(n)
    ok = (coord + step >= 0) & (coord + step < n)
    shape = [1, 1, 1]
    shape[2 - axis] = n
    return np.broadcast_to(ok.reshape(shape), (n, n, n))


def _gradient_stencil(n, idx, axis, h):
    """Yield ``(rows, cols, weight)`` triples of d/dx_axis on the interior node grid."""
    ax = 2 - axis

    def take(offset, sel):
        return np.take(idx, np.arange(n)[sel] + offset, axis=ax)

    def sl(sel):
        return np.take(idx, np.arange(n)[sel], axis=ax)

    if n == 2:
        # first-order differences on a 2-node line
        lo, hi = sl(slice(0, 1)), sl(slice(1, 2))
        for rr in (lo, hi):
            yield rr, hi, 1 / h
            yield rr, lo, -1 / h
        return
    mid = slice(1, n - 1)
    yield sl(mid), take(1, mid), 1 / (2 * h)
    yield sl(mid), take(-1, mid), -1 / (2 * h)
    first, last = slice(0, 1), slice(n - 1, n)
    yield sl(first), take(0, first), -3 / (2 * h)
    yield sl(first), take(1, first), 4 / (2 * h)
    yield sl(first), take(2, first), -1 / (2 * h)
    yield sl(last), take(0, last), 3 / (2 * h)
    yield sl(last), take(-1, last), -4 / (2 * h)
    yield sl(last), take(-2, last), 1 / (2 * h)


def error_norms(problem: StokesProblem, x):
    """Relative discrete L2 errors ``(velocity, pressure)`` against the analytic nodal values.

    The pressure error is taken after removing the mean of the difference.
    """
    return relative_errors(x, problem.exact(), problem.pmask)


def relative_errors(x, exact, pmask):
    """``(velocity, pressure)`` relative L2 errors of ``x`` split by ``pmask``."""
    x = np.asarray(x, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    pmask = np.asarray(pmask, dtype=bool)
    if x.shape != exact.shape or pmask.shape != x.shape:
        raise DimensionMismatch(f"solution has length {x.size}, expected {exact.size}")
    ue, pe = exact[~pmask], exact[pmask]
    ev = np.linalg.norm(x[~pmask] - ue) / np.linalg.norm(ue)
    d = x[pmask] - pe
    d -= d.mean()
    ep = np.linalg.norm(d) / np.linalg.norm(pe)
    return float(ev), float(ep)

"""Outer iterative solvers: IDR(s), restarted GMRES and preonly.

All solvers use right preconditioning, so the residual they monitor is the
true residual of the original system.  The operator may be a
:class:`~amgstokes.sparse.SparseMatrix` of any value kind or a callable;
the preconditioner is anything with an ``apply(r)`` method, a callable, or
``None`` for the identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, axpby, inner_product, norm2, residual

log = logging.getLogger(__name__)


@dataclass
class IterParams:
    tol: float = 1e-6
    maxiter: int = 1000
    s: int = 5
    M: int = 50
    seed: int = 1234
    # IDR omega "maintaining the convergence" angle
    kappa: float = 0.7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.s < 1 or self.M < 1 or self.maxiter < 0:
            raise ValueError("s, M must be >= 1 and maxiter >= 0")


@dataclass
class SolveReport:
    iters: int
    relres: float
    converged: bool
    breakdown: bool = False
    stagnation: bool = False


class _Operator:
    def __init__(self, A):
        self.A = A
        if isinstance(A, SparseMatrix):
            self.n = A.nrows * A.block_size
            self.dtype = A.dtype
            self.matvec = A.matvec
        elif callable(A):
            self.n = None
            self.dtype = np.dtype(np.float64)
            self.matvec = A
        else:
            raise TypeError(f"cannot use {type(A).__name__} as an operator")

    def residual(self, f, x):
        if isinstance(self.A, SparseMatrix):
            return residual(f, self.A, x)
        return f - self.matvec(x)


def _as_precond(M):
    if M is None:
        return lambda r: np.array(r, copy=True)
    if hasattr(M, "apply"):
        return M.apply
    if callable(M):
        return M
    raise TypeError(f"cannot use {type(M).__name__} as a preconditioner")


def _start(op, f, x0):
    f = np.asarray(f)
    dt = op.dtype
    if f.dtype != dt:
        f = f.astype(dt)
    x = np.zeros_like(f) if x0 is None else np.array(x0, dtype=dt)
    return f, x


def _finish(op, f, x, iters, fnorm, tol, **flags):
    relres = norm2(op.residual(f, x)) / fnorm
    return x, SolveReport(iters, relres, relres <= tol, **flags)


def preonly(M, f):
    """Apply the preconditioner exactly once."""
    return _as_precond(M)(np.asarray(f))


def preonly_solve(A, M, f, x0=None, params=None):
    """Preonly in solver form: ``x = M(f)``, one iteration, no convergence test."""
    op = _Operator(A)
    f, _ = _start(op, f, None)
    x = np.asarray(preonly(M, f), dtype=f.dtype)
    fnorm = norm2(f)
    relres = norm2(op.residual(f, x)) / fnorm if fnorm > 0 else 0.0
    tol = params.tol if params is not None else np.inf
    return x, SolveReport(1, relres, relres <= tol)


def _shadow_space(n, s, seed, dtype):
    """``s`` orthonormal random vectors (modified Gram-Schmidt), as rows."""
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((s, n))
    for k in range(s):
        for j in range(k):
            P[k] -= np.dot(P[j], P[k]) * P[j]
        P[k] /= np.linalg.norm(P[k])
    return P.astype(dtype)


def idrs(A, f, M=None, x0=None, params: IterParams | None = None):
    """Right-preconditioned IDR(s) with biorthogonal basis updates.

    Iterations count operator applications.  On breakdown the shadow space is
    redrawn once with ``seed + 1``; a second breakdown ends the solve with
    ``report.breakdown`` set.
    """
    p = params or IterParams()
    op = _Operator(A)
    prec = _as_precond(M)
    f, x = _start(op, f, x0)
    fnorm = norm2(f)
    if fnorm == 0:
        return np.zeros_like(f), SolveReport(0, 0.0, True)
    n, s, dt = f.size, p.s, f.dtype
    eps = p.tol * fnorm

    iters = 0
    restarts = 0
    seed = p.seed
    while True:
        P = _shadow_space(n, s, seed, dt)
        r = op.residual(f, x)
        rnorm = norm2(r)
        G = np.zeros((s, n), dtype=dt)
        U = np.zeros((s, n), dtype=dt)
        Mm = np.eye(s, dtype=np.float64)
        om = 1.0
        broke = False
        while rnorm > eps and iters < p.maxiter:
            fs = P @ r
            for k in range(s):
                c = np.linalg.solve(Mm[k:, k:], fs[k:])
                v = r - c @ G[k:]
                v = np.asarray(prec(v), dtype=dt)
                U[k] = om * v + c @ U[k:]
                G[k] = op.matvec(U[k])
                for i in range(k):
                    alpha = inner_product(P[i], G[k]) / Mm[i, i]
                    axpby(-alpha, G[i], 1.0, G[k])
                    axpby(-alpha, U[i], 1.0, U[k])
                Mm[k:, k] = P[k:] @ G[k]
                iters += 1
                if Mm[k, k] == 0 or not np.isfinite(Mm[k, k]):
                    broke = True
                    break
                beta = fs[k] / Mm[k, k]
                axpby(-beta, G[k], 1.0, r)
                axpby(beta, U[k], 1.0, x)
                rnorm = norm2(r)
                if rnorm <= eps or iters >= p.maxiter:
                    break
                if k + 1 < s:
                    fs[k + 1:] -= beta * Mm[k + 1:, k]
            if broke or rnorm <= eps or iters >= p.maxiter:
                break
            v = np.asarray(prec(r), dtype=dt)
            t = op.matvec(v)
            iters += 1
            om = _omega(t, r, p.kappa)
            if om == 0 or not np.isfinite(om):
                broke = True
                break
            axpby(-om, t, 1.0, r)
            axpby(om, v, 1.0, x)
            rnorm = norm2(r)
        if broke:
            if restarts == 0:
                log.debug("IDR(%d) breakdown after %d iterations; redrawing shadow space", s, iters)
                restarts += 1
                seed += 1
                continue
            return _finish(op, f, x, iters, fnorm, p.tol, breakdown=True)
        # the recurrence residual may drift from the true one; confirm before exiting
        true_r = norm2(op.residual(f, x))
        if true_r <= eps or iters >= p.maxiter:
            return _finish(op, f, x, iters, fnorm, p.tol)
        log.debug("IDR(%d): recurrence residual drifted, restarting from true residual", s)


def _omega(t, r, kappa):
    nt = norm2(t)
    nr = norm2(r)
    if nt == 0:
        return 0.0
    ts = inner_product(t, r)
    rho = abs(ts / (nt * nr)) if nr > 0 else 0.0
    om = ts / (nt * nt)
    if rho < kappa and rho > 0:
        om *= kappa / rho
    return om


def gmres(A, f, M=None, x0=None, params: IterParams | None = None):
    """Restarted right-preconditioned GMRES(M) with Givens rotations.

    Iterations count Arnoldi steps.  ``report.stagnation`` is set when a full
    restart cycle fails to reduce the residual by a relative 1e-14.
    """
    p = params or IterParams()
    op = _Operator(A)
    prec = _as_precond(M)
    f, x = _start(op, f, x0)
    fnorm = norm2(f)
    if fnorm == 0:
        return np.zeros_like(f), SolveReport(0, 0.0, True)
    n, m, dt = f.size, p.M, f.dtype
    eps = p.tol * fnorm
    iters = 0
    stagnation = False
    r = op.residual(f, x)
    beta = norm2(r)
    while beta > eps and iters < p.maxiter:
        V = np.zeros((m + 1, n), dtype=dt)
        Z = np.zeros((m, n), dtype=dt)
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j = 0
        cycle_start = beta
        while j < m and iters < p.maxiter:
            Z[j] = np.asarray(prec(V[j]), dtype=dt)
            w = op.matvec(Z[j])
            for i in range(j + 1):
                H[i, j] = inner_product(w, V[i])
                axpby(-H[i, j], V[i], 1.0, w)
            H[j + 1, j] = norm2(w)
            lucky = H[j + 1, j] == 0
            if not lucky:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                h0, h1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * h0 + sn[i] * h1
                H[i + 1, j] = -sn[i] * h0 + cs[i] * h1
            den = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if den == 0 else (H[j, j] / den, H[j + 1, j] / den)
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            j += 1
            if abs(g[j]) <= eps or lucky:
                break
        y = _back_substitute(H[:j, :j], g[:j])
        x += (y @ Z[:j]).astype(dt)
        r = op.residual(f, x)
        beta = norm2(r)
        if beta > eps and cycle_start - beta < 1e-14 * cycle_start:
            stagnation = True
            break
    return _finish(op, f, x, iters, fnorm, p.tol, stagnation=stagnation)


def _back_substitute(R, g):
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        if R[i, i] == 0:
            continue
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


SOLVERS = {"idrs": idrs, "gmres": gmres, "preonly": preonly_solve}

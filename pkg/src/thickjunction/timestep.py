"""Implicit Euler time stepping with Newton linearization.

One driver serves both the periodic-junction solver and the homogenized
multi-sheeted solver: the problem is described by a mass matrix, a
stiffness matrix, a list of nodal nonlinear terms (residual w*f(u),
Jacobian diag w*f'(u)) and a load callable.  Linearized solves go through a
pluggable backend; the default is a sparse direct factorization whose LU is
reused across iterations and steps until convergence degrades, which keeps
refactorization count low without changing results (the Newton tolerance
decides acceptance, not the Jacobian freshness).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import LinearSolveFailure, NewtonDiverged
from .model import Nonlinearity


@dataclass
class NodalTerm:
    weights: np.ndarray
    fam: Nonlinearity


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 25
    slow_factor: float = 0.25     # reduction per iteration worse than this -> refactor
    max_damping: int = 8


@dataclass
class ParabolicProblem:
    """Discrete d/dt (M u) + S u + sum_k w_k f_k(u) = load(t)."""
    M: sparse.csr_matrix
    S: sparse.csr_matrix
    terms: list[NodalTerm]
    load: object                  # callable t -> (n,)
    norm_w: np.ndarray            # lumped mass for the weighted residual norm

    @property
    def n(self) -> int:
        return self.norm_w.shape[0]

    @property
    def all_affine(self) -> bool:
        return all(t.fam.is_affine for t in self.terms)

    def spatial_apply(self, u: np.ndarray) -> np.ndarray:
        r = self.S @ u
        for t in self.terms:
            r = r + t.weights * t.fam(u)
        return r

    def jac_diag(self, u: np.ndarray) -> np.ndarray:
        d = np.zeros(self.n)
        for t in self.terms:
            d = d + t.weights * t.fam.deriv(u)
        return d

    def weighted_norm(self, r: np.ndarray) -> float:
        return float(np.sqrt(np.sum(r * r / self.norm_w)))


class SparseDirectSolver:
    """Linearized-system backend: splu of A0 + diag(d), A0 = M/dt + S.

    The symbolic pattern of A0 is fixed per dt; only the diagonal moves
    between Newton iterations, so refreshing means one numeric
    refactorization.
    """

    def __init__(self, pb: ParabolicProblem):
        self.pb = pb
        self._dt = None
        self._A0 = None
        self._diag_pos = None
        self._lu = None
        self._lu_diag = None
        self.refactor_count = 0

    def prepare(self, dt: float | None):
        if dt == self._dt and self._A0 is not None:
            return
        A = self.pb.S.copy().tocsc()
        if dt is not None:
            A = (self.pb.M.multiply(1.0 / dt) + self.pb.S).tocsc()
        A.sort_indices()
        # make sure every diagonal entry is present in the pattern
        d = A.diagonal()
        if np.any(d == 0):
            A = (A + sparse.eye(self.pb.n, format="csc") * 0.0).tocsc()
            A.sort_indices()
        cols = np.repeat(np.arange(self.pb.n), np.diff(A.indptr))
        self._diag_pos = np.flatnonzero(A.indices == cols)
        if self._diag_pos.size != self.pb.n:
            raise LinearSolveFailure("matrix pattern misses diagonal entries")
        self._A0 = A
        self._dt = dt
        self._lu = None
        self._lu_diag = None

    def refresh(self, diag: np.ndarray):
        A = self._A0.copy()
        A.data[self._diag_pos] += diag
        try:
            self._lu = splu(A)
        except RuntimeError as exc:
            raise LinearSolveFailure(str(exc)) from exc
        self._lu_diag = diag.copy()
        self.refactor_count += 1

    @property
    def has_lu(self) -> bool:
        return self._lu is not None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            raise LinearSolveFailure("no factorization available")
        return self._lu.solve(rhs)


@dataclass
class StepInfo:
    iterations: int = 0
    refactorizations: int = 0
    residuals: list = field(default_factory=list)
    damped: int = 0


def newton_step(pb: ParabolicProblem, lin, u_prev: np.ndarray, dt: float | None,
                t_next: float, opts: NewtonOptions | None = None,
                u_guess: np.ndarray | None = None) -> tuple[np.ndarray, StepInfo]:
    """Advance one implicit Euler step (or solve the stationary problem when
    dt is None).  Returns the new state and iteration diagnostics."""
    opts = opts or NewtonOptions()
    lin.prepare(dt)
    load = pb.load(t_next)
    u = u_prev.copy() if u_guess is None else u_guess.copy()
    info = StepInfo()

    def residual(v):
        r = pb.spatial_apply(v) - load
        if dt is not None:
            r = r + pb.M @ (v - u_prev) / dt
        return r

    r = residual(u)
    rho = pb.weighted_norm(r)
    info.residuals.append(rho)
    fresh = False
    if not lin.has_lu:
        lin.refresh(pb.jac_diag(u))
        info.refactorizations += 1
        fresh = True

    while rho > opts.tol:
        if info.iterations >= opts.max_iter:
            raise NewtonDiverged("Newton iteration budget exhausted",
                                 iterations=info.iterations, residual=rho)
        delta = lin.solve(-r)
        step = 1.0
        for attempt in range(opts.max_damping + 1):
            u_new = u + step * delta
            r_new = residual(u_new)
            rho_new = pb.weighted_norm(r_new)
            if rho_new < rho or rho_new <= opts.tol:
                break
            step *= 0.5
            info.damped += 1
        else:
            if fresh:
                raise NewtonDiverged("residual would not decrease with a "
                                     "fresh Jacobian", iterations=info.iterations,
                                     residual=rho)
            lin.refresh(pb.jac_diag(u))
            info.refactorizations += 1
            fresh = True
            continue

        slow = rho_new > opts.slow_factor * rho and rho_new > opts.tol
        u, r, prev_rho, rho = u_new, r_new, rho, rho_new
        info.iterations += 1
        info.residuals.append(rho)
        if slow and not fresh and not pb.all_affine:
            lin.refresh(pb.jac_diag(u))
            info.refactorizations += 1
            fresh = True
        elif slow and fresh and step < 1.0:
            # fresh Jacobian but damped: keep iterating, monotone problems
            # recover once inside the contraction region
            fresh = False
        else:
            fresh = False
    return u, info


def solve_stationary(pb: ParabolicProblem, lin, t: float,
                     opts: NewtonOptions | None = None,
                     u_guess: np.ndarray | None = None):
    """Solve S u + sum w f(u) = load(t) by the same Newton driver."""
    u0 = np.zeros(pb.n) if u_guess is None else u_guess
    return newton_step(pb, lin, u0, None, t, opts=opts, u_guess=u0)

"""Fractional-step theta time integration with monolithic Newton solves.

One step of length dt chains three implicit substeps over [t, t+theta*dt],
[t+theta*dt, t+(1-theta)*dt], [t+(1-theta)*dt, t+dt].  Substeps 1 and 3
weight the implicit side with alpha, the middle substep with 1-alpha.  For
the classical constants theta = 1 - 1/sqrt(2), alpha = 2 - sqrt(2) the
scheme is second order and strongly A-stable, and all three substeps share
the same implicit coefficient alpha*theta*dt = (1-alpha)*(1-2*theta)*dt.

Each substep solves the monolithic 4-field residual

    G(w) = M (w - w_prev) - tau (c_i F(w) + c_e F(w_prev)) = 0

by Newton, rebuilding the Jacobian every iteration.  The linear solves use
GMRES preconditioned with the constant field-diagonal part of the Jacobian
(mass + stiffness + on-diagonal exchange blocks, factorized once per step
size); systems whose reaction Jacobian is state-independent are solved
with a cached direct factorization instead.  Either path is checked
against the relative-residual contract and falls back to a sparse direct
solve before giving up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import MonolithicSystem


class SolverError(RuntimeError):
    """Base class for time-integration failures."""


class LinearSolveError(SolverError):
    """The linear solver could not meet its residual contract."""


class NewtonError(SolverError):
    """Newton failed to reach the residual tolerance within the cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SchemeConfig:
    """Step size, substep weights, and solver tolerances.

    ``theta`` must lie in (0, 1/2) and ``alpha`` in (1/2, 1]; the defaults
    are the second-order, strongly A-stable pair theta = 1 - 1/sqrt(2),
    alpha = 2 - sqrt(2).
    """

    dt: float = 1e-4
    theta: float = 1.0 - 1.0 / math.sqrt(2.0)
    alpha: float = 2.0 - math.sqrt(2.0)
    newton_tol: float = 1e-8
    newton_max: int = 12
    linear_tol: float = 1e-10

    def __post_init__(self) -> None:
        if not (self.dt > 0.0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not (0.0 < self.theta < 0.5):
            raise ValueError(f"theta must be in (0, 1/2), got {self.theta}")
        if not (0.5 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (1/2, 1], got {self.alpha}")
        for name in ("newton_tol", "newton_max", "linear_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class SystemState:
    """Discrete fields at one time level."""

    t: float
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    s: np.ndarray

    def copy(self) -> "SystemState":
        return SystemState(self.t, self.u.copy(), self.v.copy(),
                           self.r.copy(), self.s.copy())

    def check(self, n_bulk: int, n_surf: int) -> None:
        for name, vec, size in (("u", self.u, n_bulk), ("v", self.v, n_bulk),
                                ("r", self.r, n_surf), ("s", self.s, n_surf)):
            if vec.shape != (size,):
                raise ValueError(f"field {name} has shape {vec.shape}, "
                                 f"expected ({size},)")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"field {name} contains non-finite entries")


def solve_linear(system, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Direct sparse solve with an explicit residual contract.

    Factorizes the operator (any scipy sparse matrix) and verifies that the
    relative residual of the returned vector is at most ``tol``; raises
    ``LinearSolveError`` on breakdown, non-finite output, or a violated
    contract (e.g. a singular system).
    """
    a = sp.csc_matrix(system)
    if a.shape[0] != a.shape[1]:
        raise LinearSolveError(f"system must be square, got {a.shape}")
    if a.shape[0] != rhs.shape[0]:
        raise LinearSolveError(
            f"size mismatch: system {a.shape[0]}, rhs {rhs.shape[0]}")
    try:
        x = spla.splu(a).solve(rhs)
    except RuntimeError as exc:
        raise LinearSolveError(f"factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("solution contains non-finite entries "
                               "(singular or near-singular system)")
    scale = np.linalg.norm(rhs)
    residual = np.linalg.norm(a @ x - rhs)
    if residual > tol * max(1.0, scale):
        raise LinearSolveError(
            f"residual contract violated: {residual:.3e} > {tol:.1e} * {scale:.3e}")
    return x


class _SubstepSolver:
    """Linear algebra for one implicit coefficient a = tau * c_i.

    Holds the constant part M - a*(C - K), its field-diagonal block
    factorizations (the GMRES preconditioner), and, for systems with a
    state-independent reaction Jacobian, a cached direct factorization of
    the full Newton matrix.
    """

    def __init__(self, system: MonolithicSystem, a: float, linear_tol: float):
        self.system = system
        self.a = a
        self.linear_tol = linear_tol
        self.constant = (system.mass - a * system.linear_part).tocsr()
        nb, ns = system.n_bulk, system.n_surf
        self.slices = [slice(0, nb), slice(nb, 2 * nb),
                       slice(2 * nb, 2 * nb + ns), slice(2 * nb + ns, 2 * nb + 2 * ns)]
        self._block_lu = [spla.splu(self.constant[s, s].tocsc()) for s in self.slices]
        self._direct_lu = None
        if system.constant_jacobian:
            jac = (system.mass - a * system.rhs_jacobian(
                np.zeros(system.n_dofs))).tocsc()
            self._direct_lu = spla.splu(jac)

    def _precondition(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for lu, s in zip(self._block_lu, self.slices):
            out[s] = lu.solve(x[s])
        return out

    def solve(self, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (M - a F'(w)) x = rhs to the residual contract."""
        system = self.system
        if self._direct_lu is not None:
            x = self._direct_lu.solve(rhs)
            if self._residual_ok(w, x, rhs):
                return x
            raise LinearSolveError("cached factorization violated the "
                                   "residual contract")

        matvec = self._jacobian_matvec(w)
        op = spla.LinearOperator((system.n_dofs, system.n_dofs), matvec=matvec)
        prec = spla.LinearOperator((system.n_dofs, system.n_dofs),
                                   matvec=self._precondition)
        x, info = spla.gmres(op, rhs, M=prec, rtol=self.linear_tol,
                             atol=0.0, restart=40, maxiter=200)
        if info == 0 and self._residual_ok(w, x, rhs):
            return x
        # Robust fallback: assemble and factorize the Newton matrix.
        jac = (system.mass - self.a * system.rhs_jacobian(w)).tocsc()
        x = solve_linear(jac, rhs, tol=self.linear_tol)
        return x

    def _jacobian_matvec(self, w: np.ndarray):
        system = self.system
        a = self.a
        if system.bulk_reaction is None:
            return lambda x: self.constant @ x
        u, v, r, s = system.unpack(w)
        kin = system.params.kinetics
        bu, bv, cu, cv = system.bulk_reaction.derivs(u, v)
        sr, ss_, tr, ts = system.surf_reaction.derivs(r, s)
        mb = system._m_bulk_op
        ms = system._m_surf_op
        agb = a * kin.gamma_bulk
        ags = a * kin.gamma_surf

        def matvec(x):
            xu, xv, xr, xs = system.unpack(x)
            y = self.constant @ x
            y[self.slices[0]] -= agb * (mb @ (bu * xu + bv * xv))
            y[self.slices[1]] -= agb * (mb @ (cu * xu + cv * xv))
            y[self.slices[2]] -= ags * (ms @ (sr * xr + ss_ * xs))
            y[self.slices[3]] -= ags * (ms @ (tr * xr + ts * xs))
            return y

        return matvec

    def _residual_ok(self, w: np.ndarray, x: np.ndarray, rhs: np.ndarray) -> bool:
        residual = self._jacobian_matvec(w)(x) - rhs
        return (np.linalg.norm(residual)
                <= self.linear_tol * max(1.0, np.linalg.norm(rhs)))


class ThetaStepper:
    """Advance a monolithic semi-discrete system in time.

    ``last_newton_history`` holds, for the most recent step, one list of
    Newton residuals per substep (the residual before each iteration and
    the final accepted one).
    """

    def __init__(self, system: MonolithicSystem, scheme: SchemeConfig):
        self.system = system
        self.scheme = scheme
        self.last_newton_history: list[list[float]] = []
        self._solvers: dict[float, _SubstepSolver] = {}
        th, al = scheme.theta, scheme.alpha
        self._substeps = (
            (th * scheme.dt, al, 1.0 - al),
            ((1.0 - 2.0 * th) * scheme.dt, 1.0 - al, al),
            (th * scheme.dt, al, 1.0 - al),
        )

    def _solver_for(self, a: float) -> _SubstepSolver:
        solver = self._solvers.get(a)
        if solver is None:
            solver = _SubstepSolver(self.system, a, self.scheme.linear_tol)
            self._solvers[a] = solver
        return solver

    def _scaled_residual(self, g: np.ndarray) -> float:
        return float(np.max(np.abs(g / self.system.mass_lumped)))

    def step(self, state: SystemState) -> SystemState:
        """One full fractional-step advance from state.t to state.t + dt.

        Raises ``NewtonError`` when a substep does not converge within
        ``newton_max`` iterations; the caller may halve dt and retry.
        """
        system = self.system
        state.check(system.n_bulk, system.n_surf)
        w = system.pack(state.u, state.v, state.r, state.s)
        mass = system.mass
        tol = self.scheme.newton_tol
        self.last_newton_history = []

        for tau, ci, ce in self._substeps:
            solver = self._solver_for(tau * ci)
            f_prev = system.rhs(w)
            base = mass @ w + (tau * ce) * f_prev
            w_new = w.copy()
            history = []
            converged = False
            for iteration in range(self.scheme.newton_max + 1):
                g = mass @ w_new - (tau * ci) * system.rhs(w_new) - base
                res = self._scaled_residual(g)
                history.append(res)
                if not math.isfinite(res):
                    raise NewtonError(
                        f"non-finite Newton residual at t={state.t:.6g}", res)
                if res <= tol:
                    converged = True
                    break
                if iteration == self.scheme.newton_max:
                    break
                w_new += solver.solve(w_new, -g)
            self.last_newton_history.append(history)
            if not converged:
                raise NewtonError(
                    f"Newton stalled at residual {history[-1]:.3e} "
                    f"(tol {tol:.1e}) at t={state.t:.6g}", history[-1])
            w = w_new

        u, v, r, s = system.unpack(w)
        return SystemState(t=state.t + self.scheme.dt, u=u, v=v, r=r, s=s)

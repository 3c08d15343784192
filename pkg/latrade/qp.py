"""Primal active-set solver for small convex quadratic programs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from latrade.base import LatBase
from latrade.exceptions import ArrayShapeError, ParameterRangeError
from latrade.typing.numpy_types import NDArrayFloat

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QPResult(LatBase):
    """Solution of :meth:`ActiveSetSolver.solve`.

    Attributes
    ----------
    x : np.ndarray
        Minimizer.
    multipliers : np.ndarray
        Inequality multipliers, zero for inactive constraints.
    eq_multipliers : np.ndarray
        Equality multipliers.
    active : list of int
        Inequalities in the final working set.
    iterations : int
        Number of active-set iterations.
    objective : float
        ``1/2 x'Gx + c'x``.
    kkt_residual : float
        Largest of the stationarity, primal feasibility, dual feasibility and
        complementarity residuals.
    """

    x: np.ndarray
    multipliers: np.ndarray
    eq_multipliers: np.ndarray
    active: list = field(default_factory=list)
    iterations: int = 0
    objective: float = 0.0
    kkt_residual: float = 0.0


class ActiveSetSolver:
    """Solve ``min 1/2 x'Gx + c'x`` s.t. ``A_eq x = b_eq`` and ``A_ub x <= b_ub``.

    `G` must be positive semidefinite. Iterates stay feasible from a caller-supplied
    feasible start. Each equality-constrained subproblem is solved through its KKT
    system in the minimum-norm least-squares sense, so a singular `G` is fine as
    long as the objective is bounded on the feasible set.

    Parameters
    ----------
    max_iter : int
        Maximum number of working-set changes.
    feas_tol : float
        Tolerance on constraint violation.
    step_tol : float
        Steps shorter than this (relative to ``max(1, |x|)``) count as zero.
    """

    def __init__(
        self, max_iter: int = 500, feas_tol: float = 1e-10, step_tol: float = 1e-12
    ):
        self.max_iter = max_iter
        self.feas_tol = feas_tol
        self.step_tol = step_tol

    def solve(
        self,
        G: np.ndarray,
        c: np.ndarray,
        A_ub: np.ndarray,
        b_ub: np.ndarray,
        x0: np.ndarray,
        A_eq: Optional[np.ndarray] = None,
        b_eq: Optional[np.ndarray] = None,
    ) -> QPResult:
        G = np.asarray(G, dtype=float)
        c = np.asarray(c, dtype=float)
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        b_ub = np.asarray(b_ub, dtype=float)
        x = np.asarray(x0, dtype=float).copy()
        n = x.shape[0]

        if A_eq is None:
            A_eq = np.zeros((0, n))
            b_eq = np.zeros(0)
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float)).reshape(-1, n)
        b_eq = np.asarray(b_eq, dtype=float).reshape(-1)

        if G.shape != (n, n):
            raise ArrayShapeError(
                array_name="G", array_shape=G.shape, expected_shape=(n, n)
            )
        if A_ub.shape[1] != n or b_ub.shape != (A_ub.shape[0],):
            raise ArrayShapeError(
                array_name="A_ub", array_shape=A_ub.shape, expected_shape=f"(p, {n})"
            )

        violation = self._violation(x, A_ub, b_ub, A_eq, b_eq)
        if violation > self.feas_tol:
            raise ParameterRangeError(
                "x0", f"violation {violation:.3e}", "the feasible set"
            )

        working = self._initial_working_set(x, A_ub, b_ub, A_eq)
        n_eq = A_eq.shape[0]
        scale = max(1.0, float(np.linalg.norm(x)))

        for iteration in range(1, self.max_iter + 1):
            A_w = np.vstack([A_eq, A_ub[working]]) if working else A_eq
            p, lam = self._solve_eqp(G, G @ x + c, A_w)

            if np.linalg.norm(p) <= self.step_tol * scale:
                lam_ineq = lam[n_eq:]
                if lam_ineq.size == 0 or lam_ineq.min() >= -self.feas_tol:
                    logger.debug("Active set converged after %d iterations", iteration)
                    break
                # Drop the constraint with the most negative multiplier
                dropped = working.pop(int(np.argmin(lam_ineq)))
                logger.debug("Iteration %d: drop constraint %d", iteration, dropped)
                continue

            # Ratio test over the inactive constraints the step moves toward
            step = 1.0
            blocking = None
            slope = A_ub @ p
            # Round-off slopes of constraints parallel to the step are not blocking
            flat = 1e-12 * np.linalg.norm(A_ub, axis=1) * np.linalg.norm(p)
            for i in range(A_ub.shape[0]):
                if i in working or slope[i] <= flat[i]:
                    continue
                ratio = max(0.0, (b_ub[i] - A_ub[i] @ x) / slope[i])
                if ratio < step:
                    step, blocking = ratio, i

            x = x + step * p
            scale = max(1.0, float(np.linalg.norm(x)))
            if blocking is not None:
                working.append(blocking)
                logger.debug("Iteration %d: add constraint %d", iteration, blocking)
        else:
            logger.warning("Active-set solver hit max_iter=%d", self.max_iter)

        multipliers, eq_multipliers = self._multipliers(G, c, x, A_ub, A_eq, working)
        return QPResult(
            x=x,
            multipliers=multipliers,
            eq_multipliers=eq_multipliers,
            active=sorted(working),
            iterations=iteration,
            objective=float(0.5 * x @ G @ x + c @ x),
            kkt_residual=kkt_residual(
                G, c, x, A_ub, b_ub, multipliers, A_eq, b_eq, eq_multipliers
            ),
        )

    @staticmethod
    def _violation(x, A_ub, b_ub, A_eq, b_eq) -> float:
        ineq = float(np.max(A_ub @ x - b_ub, initial=0.0))
        eq = float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0))
        return max(ineq, eq)

    def _initial_working_set(self, x, A_ub, b_ub, A_eq) -> list[int]:
        """Active inequalities at `x` whose normals are independent of those kept."""
        working: list[int] = []
        rows = A_eq.copy()
        rank = np.linalg.matrix_rank(rows) if rows.size else 0
        for i in np.flatnonzero(np.abs(A_ub @ x - b_ub) <= self.feas_tol):
            candidate = np.vstack([rows, A_ub[i]])
            candidate_rank = np.linalg.matrix_rank(candidate)
            if candidate_rank > rank:
                working.append(int(i))
                rows, rank = candidate, candidate_rank
        return working

    @staticmethod
    def _solve_eqp(
        G: np.ndarray, g: np.ndarray, A_w: np.ndarray
    ) -> tuple[NDArrayFloat, NDArrayFloat]:
        """Minimum-norm solution of the KKT system for ``min 1/2 p'Gp + g'p``
        s.t. ``A_w p = 0``. Returns the step and the working-set multipliers."""
        n = G.shape[0]
        k = A_w.shape[0]
        kkt = np.block([[G, A_w.T], [A_w, np.zeros((k, k))]])
        rhs = np.concatenate([-g, np.zeros(k)])
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        return sol[:n], sol[n:]

    @staticmethod
    def _multipliers(G, c, x, A_ub, A_eq, working) -> tuple[NDArrayFloat, NDArrayFloat]:
        """Least-squares multipliers of the working set at `x`."""
        n_eq = A_eq.shape[0]
        multipliers = np.zeros(A_ub.shape[0])
        A_w = np.vstack([A_eq, A_ub[working]]) if working else A_eq
        if A_w.shape[0] == 0:
            return multipliers, np.zeros(0)
        lam, *_ = np.linalg.lstsq(A_w.T, -(G @ x + c), rcond=None)
        multipliers[working] = lam[n_eq:]
        return multipliers, lam[:n_eq]


def kkt_residual(
    G: np.ndarray,
    c: np.ndarray,
    x: np.ndarray,
    A_ub: np.ndarray,
    b_ub: np.ndarray,
    multipliers: np.ndarray,
    A_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    eq_multipliers: Optional[np.ndarray] = None,
) -> float:
    """Largest KKT violation of a candidate primal-dual pair."""
    gradient = G @ x + c + A_ub.T @ multipliers
    primal = float(np.max(A_ub @ x - b_ub, initial=0.0))
    if A_eq is not None and A_eq.shape[0]:
        gradient = gradient + A_eq.T @ eq_multipliers
        primal = max(primal, float(np.max(np.abs(A_eq @ x - b_eq))))

    stationarity = float(np.max(np.abs(gradient), initial=0.0))
    dual = float(np.max(-multipliers, initial=0.0))
    slack = A_ub @ x - b_ub
    complementarity = float(np.max(np.abs(multipliers * slack), initial=0.0))
    return max(stationarity, primal, dual, complementarity)

"""
Estimation of lattice market parameters from historical returns.

Pipeline: geometric-mean movement factors, zero-diagonal Pearson correlation,
binarization onto the lattice, then per-asset Markov coefficients by least squares
constrained to the region where every conditional probability stays in [0, 1].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from latrade.base import LatBase, frozen_array
from latrade.exceptions import (
    ArrayShapeError,
    EstimationError,
    ModelInfeasibleError,
    ParameterRangeError,
)
from latrade.lattice import (
    LatticeMarketSpec,
    ProbabilitySchedule,
    marginal_probability_schedule,
)
from latrade.qp import ActiveSetSolver, kkt_residual
from latrade.typing.numpy_types import ArrayLike, NDArrayFloat

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-12
RANK_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class ReturnSample(LatBase):
    """Historical per-period returns of ``n`` assets.

    Parameters
    ----------
    returns : np.ndarray
        (l, n) real-valued returns in chronological order (row 0 is the oldest).
    labels : list of str, optional
        Asset labels. Defaults to ``asset_1 .. asset_n``.
    """

    returns: np.ndarray
    labels: Optional[list] = None

    def __post_init__(self):
        returns = frozen_array(self.returns, ndmin=2)
        if returns.ndim != 2:
            raise ArrayShapeError(
                array_name="returns", array_shape=returns.shape, expected_shape="(l, n)"
            )
        if np.any(returns <= -1.0) or not np.all(np.isfinite(returns)):
            t, i = np.argwhere((returns <= -1.0) | ~np.isfinite(returns))[0]
            raise ParameterRangeError(f"returns[{t}, {i}]", returns[t, i], "(-1, inf)")

        labels = self.labels
        if labels is None:
            labels = [f"asset_{i + 1}" for i in range(returns.shape[1])]
        if len(labels) != returns.shape[1]:
            raise ArrayShapeError(
                array_name="labels",
                array_shape=(len(labels),),
                expected_shape=(returns.shape[1],),
            )

        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "labels", list(labels))

    @property
    def length(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


def estimate_movement_factors(series: ArrayLike) -> tuple[float, float]:
    """Geometric-mean up and down factors of one return series.

    Zero returns count toward the up partition.

    Examples
    --------
    >>> u, d = estimate_movement_factors([0.21, 0.1, -0.1])
    >>> round(u, 6), round(d, 6)
    (0.153687, -0.1)
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    up = x[x >= 0.0]
    down = x[x < 0.0]
    if up.size == 0 or not np.any(up > 0.0):
        raise EstimationError(
            "no strictly positive return to estimate the up factor; "
            "supply the movement factors manually"
        )
    if down.size == 0:
        raise EstimationError(
            "no negative return to estimate the down factor; "
            "supply the movement factors manually"
        )

    u = float(np.expm1(np.mean(np.log1p(up))))
    d = float(np.expm1(np.mean(np.log1p(down))))
    if not 0.0 < u < 1.0:
        raise EstimationError(f"estimated up factor {u} is outside (0, 1)")
    if not -1.0 < d < 0.0:
        raise EstimationError(f"estimated down factor {d} is outside (-1, 0)")
    return u, d


def estimate_asset_correlation(sample: ReturnSample) -> NDArrayFloat:
    """Pearson correlation of the real-valued returns with the diagonal set to 0.

    Uses the sample (``l - 1``) normalization.
    """
    if sample.length < 2:
        raise EstimationError(f"need at least 2 observations, got {sample.length}")

    std = sample.returns.std(axis=0, ddof=1)
    if np.any(std == 0.0):
        i = int(np.flatnonzero(std == 0.0)[0])
        raise EstimationError(
            f"series '{sample.labels[i]}' has zero variance; correlation is undefined"
        )

    corr = np.atleast_2d(np.corrcoef(sample.returns, rowvar=False))
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 0.0)
    return corr


def binarize_returns(series: ArrayLike, u: ArrayLike, d: ArrayLike) -> NDArrayFloat:
    """Map returns onto the lattice: ``u`` where ``x >= 0`` and ``d`` otherwise.

    For a (l, n) panel, `u` and `d` are per-asset vectors.

    >>> binarize_returns([0.05, -0.01, 0.0], 0.1, -0.2).tolist()
    [0.1, -0.2, 0.1]
    """
    x = np.asarray(series, dtype=float)
    return np.where(x >= 0.0, u, d).astype(float)


@dataclass(frozen=True, eq=False)
class PolyhedronConstraint(LatBase):
    """Linear system ``A z <= b`` equivalent to ``p_i`` lying in [0, 1] everywhere.

    The variable is ``z = (Phi_0, ..., Phi_m, t_1, ..., t_m, s)`` where the ``t_j``
    bound ``|Phi_j|`` and ``s`` bounds the absolute value of the centered intercept
    term. The correlation row of the asset enters through two constants:
    ``offset_mid = sum_l (u_l + d_l) / 2 Gamma_il`` and
    ``offset_abs = sum_l (u_l - d_l) / 2 |Gamma_il|``.
    """

    asset: int
    m: int
    A: np.ndarray
    b: np.ndarray
    center: float
    half_spread: float
    offset_mid: float
    offset_abs: float

    @property
    def n_vars(self) -> int:
        return 2 * self.m + 2

    def lhs(self, phi: ArrayLike) -> float:
        """Left side of the probability-bound condition for coefficient row `phi`."""
        phi = np.asarray(phi, dtype=float)
        lags = phi[1:]
        return float(
            abs(phi[0] - 0.5 + self.center * lags.sum() + self.offset_mid)
            + self.half_spread * np.abs(lags).sum()
            + self.offset_abs
        )

    def contains(self, phi: ArrayLike, tol: float = FEASIBILITY_TOLERANCE) -> bool:
        return self.lhs(phi) <= 0.5 + tol

    def lift(self, phi: ArrayLike) -> NDArrayFloat:
        """Tightest ``z`` for `phi`; ``A @ lift(phi) <= b`` iff `phi` is feasible."""
        phi = np.asarray(phi, dtype=float)
        lags = phi[1:]
        s = abs(phi[0] - 0.5 + self.center * lags.sum() + self.offset_mid)
        return np.concatenate([phi, np.abs(lags), [s]])

    def feasible_point(self) -> NDArrayFloat:
        """A point of the polyhedron: constant probability one half, no memory."""
        z = np.zeros(self.n_vars)
        z[0] = 0.5 - self.offset_mid
        return z


def _gamma_offsets(
    u: np.ndarray, d: np.ndarray, gamma_row: np.ndarray
) -> tuple[float, float]:
    offset_mid = float(((u + d) / 2.0) @ gamma_row)
    offset_abs = float(((u - d) / 2.0) @ np.abs(gamma_row))
    return offset_mid, offset_abs


def build_constraints(
    u: ArrayLike, d: ArrayLike, gamma: ArrayLike, asset: int, m: int
) -> PolyhedronConstraint:
    """Linear constraints on asset `asset`'s Markov coefficients.

    Raises
    ------
    ModelInfeasibleError
        If the correlation terms alone already exceed one half.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1)
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    n = u.shape[0]

    if d.shape != (n,):
        raise ArrayShapeError(array_name="d", array_shape=d.shape, expected_shape=(n,))
    if gamma.shape != (n, n):
        raise ArrayShapeError(
            array_name="gamma", array_shape=gamma.shape, expected_shape=(n, n)
        )
    if np.any(np.diag(gamma) != 0.0):
        raise ParameterRangeError("gamma diagonal", np.diag(gamma).tolist(), "{0}")
    if not 0 <= asset < n:
        raise ParameterRangeError("asset", asset, f"[0, {n})")
    if m < 1:
        raise ParameterRangeError("m", m, "[1, inf)")

    center = (u[asset] + d[asset]) / 2.0
    half_spread = (u[asset] - d[asset]) / 2.0
    offset_mid, offset_abs = _gamma_offsets(u, d, gamma[asset])
    if 0.5 - offset_abs < 0.0:
        raise ModelInfeasibleError(
            asset=asset,
            detail=(
                f"correlation terms sum to {offset_abs:.6g} > 1/2, "
                "no Markov coefficients can keep probabilities in [0, 1]"
            ),
        )

    n_vars = 2 * m + 2
    rows = []
    rhs = []
    for j in range(1, m + 1):
        # t_j >= |Phi_j|
        for sign in (1.0, -1.0):
            row = np.zeros(n_vars)
            row[j] = sign
            row[m + j] = -1.0
            rows.append(row)
            rhs.append(0.0)

    # s >= |Phi_0 - 1/2 + center sum(Phi_j) + offset_mid|
    affine = np.zeros(n_vars)
    affine[0] = 1.0
    affine[1 : m + 1] = center
    for sign in (1.0, -1.0):
        row = sign * affine
        row[-1] = -1.0
        rows.append(row)
        rhs.append(sign * (0.5 - offset_mid))

    # s + half_spread sum(t_j) <= 1/2 - offset_abs
    row = np.zeros(n_vars)
    row[m + 1 : 2 * m + 1] = half_spread
    row[-1] = 1.0
    rows.append(row)
    rhs.append(0.5 - offset_abs)

    return PolyhedronConstraint(
        asset=asset,
        m=m,
        A=np.array(rows),
        b=np.array(rhs),
        center=float(center),
        half_spread=float(half_spread),
        offset_mid=offset_mid,
        offset_abs=offset_abs,
    )


@dataclass(frozen=True, eq=False)
class FeasibilityReport(LatBase):
    """Per-asset slack ``1/2 - LHS`` of the probability-bound condition."""

    feasible: bool
    slack: np.ndarray


def feasibility_check(spec: LatticeMarketSpec) -> FeasibilityReport:
    """Evaluate the probability-bound condition for every asset of `spec`.

    >>> spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 1.2]], [[0.0]], [[0.5]])
    >>> report = feasibility_check(spec)
    >>> report.feasible, round(float(report.slack[0]), 12)
    (False, -0.1)
    """
    u, d = spec.up_factors, spec.down_factors
    slack = np.empty(spec.n)
    for i in range(spec.n):
        offset_mid, offset_abs = _gamma_offsets(u, d, spec.asset_correlation[i])
        phi = spec.markov_coeffs[i]
        lags = phi[1:]
        lhs = (
            abs(phi[0] - 0.5 + (u[i] + d[i]) / 2.0 * lags.sum() + offset_mid)
            + (u[i] - d[i]) / 2.0 * np.abs(lags).sum()
            + offset_abs
        )
        slack[i] = 0.5 - lhs

    return FeasibilityReport(
        feasible=bool(np.all(slack >= -FEASIBILITY_TOLERANCE)), slack=slack
    )


@dataclass(frozen=True, eq=False)
class MarkovFit(LatBase):
    """Result of :func:`fit_markov_coefficients` for one asset.

    Attributes
    ----------
    coefficients : np.ndarray
        (m + 1,) fitted ``Phi_i``.
    rss : float
        Residual sum of squares at the fit.
    slack : float
        ``1/2 - LHS`` of the probability-bound condition.
    kkt_residual : float
        KKT residual of the least-squares program in residual-sum-of-squares
        units, and of the minimum-norm program when the design is rank deficient.
    multipliers : np.ndarray
        Constraint multipliers of the least-squares program, in the same units.
    active : list of int
        Active constraint rows.
    rank : int
        Rank of the regression design.
    n_obs : int
        Number of regression rows.
    iterations : int
        Active-set iterations.
    """

    asset: int
    coefficients: np.ndarray
    rss: float
    slack: float
    kkt_residual: float
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active: list = field(default_factory=list)
    rank: int = 0
    n_obs: int = 0
    iterations: int = 0


def regression_design(
    lattice_returns: np.ndarray,
    gamma: np.ndarray,
    u: float,
    d: float,
    asset: int,
    m: int,
) -> tuple[NDArrayFloat, NDArrayFloat]:
    """Design matrix and target of the Markov regression for `asset`.

    The oldest `m` observations seed the lags. Row ``t`` regresses
    ``(x_i(t) - d) / (u - d) - sum_l Gamma_il x_l(t - 1)`` on
    ``(1, x_i(t - 1), ..., x_i(t - m))``.
    """
    length = lattice_returns.shape[0]
    x = lattice_returns[:, asset]
    target = (x[m:] - d) / (u - d) - lattice_returns[m - 1 : length - 1] @ gamma[asset]
    lags = np.column_stack([x[m - j : length - j] for j in range(1, m + 1)])
    design = np.column_stack([np.ones(length - m), lags])
    return design, target


def fit_markov_coefficients(
    sample: ReturnSample,
    u: ArrayLike,
    d: ArrayLike,
    gamma: ArrayLike,
    m: int,
    asset: int = 0,
    *,
    solver: Optional[ActiveSetSolver] = None,
) -> MarkovFit:
    """Least-squares Markov coefficients for one asset, constrained so that every
    conditional up-probability lies in [0, 1].

    The residual sum of squares is scaled by the number of regression rows. When
    the design is rank deficient, the minimum Euclidean norm minimizer is returned.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    d = np.asarray(d, dtype=float).reshape(-1)
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if u.shape != (sample.n_assets,) or d.shape != (sample.n_assets,):
        raise ArrayShapeError(
            array_name="u/d", array_shape=u.shape, expected_shape=(sample.n_assets,)
        )
    if sample.length <= m:
        raise EstimationError(
            f"need more than m={m} observations, got {sample.length}"
        )

    solver = solver or ActiveSetSolver()
    constraint = build_constraints(u, d, gamma, asset, m)
    lattice = binarize_returns(sample.returns, u, d)
    design, target = regression_design(lattice, gamma, u[asset], d[asset], asset, m)
    n_obs = design.shape[0]
    n_coef = m + 1
    n_vars = constraint.n_vars

    hessian = np.zeros((n_vars, n_vars))
    hessian[:n_coef, :n_coef] = design.T @ design / n_obs
    linear = np.zeros(n_vars)
    linear[:n_coef] = -design.T @ target / n_obs

    logger.info(
        "Fitting Markov coefficients for asset %d (m=%d, %d observations)",
        asset,
        m,
        n_obs,
    )
    result = solver.solve(
        hessian, linear, constraint.A, constraint.b, constraint.feasible_point()
    )
    # The solver minimizes rss / (2 n_obs); report the residual of rss itself
    multipliers = 2.0 * n_obs * result.multipliers
    kkt = kkt_residual(
        2.0 * n_obs * hessian,
        2.0 * n_obs * linear,
        result.x,
        constraint.A,
        constraint.b,
        multipliers,
    )
    iterations = result.iterations
    z = result.x

    _, singular_values, vt = np.linalg.svd(design, full_matrices=False)
    rank = int(np.sum(singular_values > RANK_TOLERANCE * singular_values[0]))
    if rank < n_coef:
        logger.warning(
            "Design for asset %d has rank %d < %d; choosing minimum-norm optimum",
            asset,
            rank,
            n_coef,
        )
        # All minimizers share the fitted values, i.e. the row-space component
        row_space = np.zeros((rank, n_vars))
        row_space[:, :n_coef] = vt[:rank]
        norm_hessian = np.zeros((n_vars, n_vars))
        norm_hessian[:n_coef, :n_coef] = np.eye(n_coef)
        second = solver.solve(
            norm_hessian,
            np.zeros(n_vars),
            constraint.A,
            constraint.b,
            z,
            A_eq=row_space,
            b_eq=row_space @ z,
        )
        z = second.x
        kkt = max(kkt, second.kkt_residual)
        iterations += second.iterations

    coefficients = z[:n_coef]
    residual = target - design @ coefficients
    fit = MarkovFit(
        asset=asset,
        coefficients=coefficients,
        rss=float(residual @ residual),
        slack=0.5 - constraint.lhs(coefficients),
        kkt_residual=kkt,
        multipliers=multipliers,
        active=result.active,
        rank=rank,
        n_obs=n_obs,
        iterations=iterations,
    )
    logger.info(
        "Asset %d: rss=%.6g slack=%.3g kkt=%.3g", asset, fit.rss, fit.slack, kkt
    )
    return fit


@dataclass(frozen=True, eq=False)
class FitReport(LatBase):
    """Everything :func:`estimate_spec` learned about a sample."""

    labels: list
    m: int
    up_factors: np.ndarray
    down_factors: np.ndarray
    asset_correlation: np.ndarray
    fits: list
    feasibility: FeasibilityReport


def estimate_spec(
    sample: ReturnSample,
    m: int,
    *,
    solver: Optional[ActiveSetSolver] = None,
) -> tuple[LatticeMarketSpec, FitReport]:
    """Fit a complete :class:`LatticeMarketSpec` to a return sample.

    The initial history of the fitted spec is the last `m` binarized returns,
    most recent first.
    """
    if m < 1:
        raise ParameterRangeError("m", m, "[1, inf)")
    if sample.length <= m:
        raise EstimationError(f"need more than m={m} observations, got {sample.length}")

    factors = []
    for i, label in enumerate(sample.labels):
        try:
            factors.append(estimate_movement_factors(sample.returns[:, i]))
        except EstimationError as err:
            raise EstimationError(f"asset '{label}': {err}") from err
    u = np.array([f[0] for f in factors])
    d = np.array([f[1] for f in factors])
    gamma = estimate_asset_correlation(sample)

    fits = [
        fit_markov_coefficients(sample, u, d, gamma, m, i, solver=solver)
        for i in range(sample.n_assets)
    ]

    lattice = binarize_returns(sample.returns, u, d)
    spec = LatticeMarketSpec(
        up_factors=u,
        down_factors=d,
        markov_coeffs=np.vstack([fit.coefficients for fit in fits]),
        asset_correlation=gamma,
        initial_history=lattice[::-1][:m].T,
    )
    report = FitReport(
        labels=sample.labels,
        m=m,
        up_factors=u,
        down_factors=d,
        asset_correlation=gamma,
        fits=fits,
        feasibility=feasibility_check(spec),
    )
    return spec, report


def estimated_probability_schedule(
    spec: LatticeMarketSpec, horizon: int, report: Optional[FitReport] = None
) -> ProbabilitySchedule:
    """Marginal up-probabilities of a fitted market over `horizon` stages.

    The market must satisfy the probability-bound condition first. The slack is
    taken from `report` when given, and recomputed from `spec` otherwise. The
    asset with the most negative slack is named in the raised
    :class:`ModelInfeasibleError`.
    """
    feasibility = report.feasibility if report is not None else feasibility_check(spec)
    slack = feasibility.slack
    if slack.shape != (spec.n,):
        raise ArrayShapeError(
            array_name="feasibility slack",
            array_shape=slack.shape,
            expected_shape=(spec.n,),
        )
    if not feasibility.feasible:
        worst = int(np.argmin(slack))
        label = f" ({report.labels[worst]})" if report is not None else ""
        raise ModelInfeasibleError(
            worst, f"probability-bound slack {slack[worst]:.3g} < 0{label}"
        )
    return marginal_probability_schedule(spec, horizon)


"""
Multi-double linear policies: account dynamics, closed-form products, gain-loss and
drawdown.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from dacite import Config, from_dict

from latrade.base import LatBase, frozen_array
from latrade.exceptions import ArrayShapeError, ParameterRangeError
from latrade.lattice import ReturnPath
from latrade.typing.numpy_types import ArrayLike, NDArrayFloat

logger = logging.getLogger(__name__)

ALLOCATION_TOLERANCE = 1e-12

_DACITE_CONFIG = Config(
    type_hooks={
        np.ndarray: lambda v: np.asarray(v, dtype=float),
        float: float,
    }
)


@dataclass(frozen=True, eq=False)
class PolicyTriple(LatBase):
    """A multi-double linear policy.

    Each asset ``i`` receives ``v_i V0`` of capital, split into a long sub-account
    (fraction `alpha`) investing ``w_i V_{i,L}`` and a short sub-account investing
    ``-w_i V_{i,S}``.

    Parameters
    ----------
    alpha : float
        Long fraction in [0, 1].
    weights : np.ndarray
        (n,) linear feedback weights, each in [0, 1].
    allocation : np.ndarray
        (n,) capital allocation, each in [0, 1], summing to one.
    initial_capital : float
        Initial account value ``V0 > 0``.
    risk_free_rate : float
        Per-period rate earned by idle long-side cash, ``>= 0``.
    cost_rate : float
        Transaction cost per unit of traded notional, ``>= 0``.
    """

    alpha: float
    weights: np.ndarray
    allocation: np.ndarray
    initial_capital: float = 1.0
    risk_free_rate: float = 0.0
    cost_rate: float = 0.0

    def __post_init__(self):
        weights = frozen_array(self.weights)
        allocation = frozen_array(self.allocation)

        if weights.ndim != 1 or weights.shape[0] < 1:
            raise ArrayShapeError(
                array_name="weights", array_shape=weights.shape, expected_shape="(n,)"
            )
        if allocation.shape != weights.shape:
            raise ArrayShapeError(
                array_name="allocation",
                array_shape=allocation.shape,
                expected_shape=weights.shape,
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterRangeError("alpha", self.alpha, "[0, 1]")
        for name, values in (("weights", weights), ("allocation", allocation)):
            bad = np.flatnonzero((values < 0.0) | (values > 1.0))
            if bad.size:
                raise ParameterRangeError(f"{name}[{bad[0]}]", values[bad[0]], "[0, 1]")
        if abs(allocation.sum() - 1.0) > ALLOCATION_TOLERANCE:
            raise ParameterRangeError(
                "allocation", allocation.tolist(), "the simplex (sum must be 1)"
            )
        if not self.initial_capital > 0.0:
            raise ParameterRangeError(
                "initial_capital", self.initial_capital, "(0, inf)"
            )
        if not self.risk_free_rate >= 0.0:
            raise ParameterRangeError("risk_free_rate", self.risk_free_rate, "[0, inf)")
        if not self.cost_rate >= 0.0:
            raise ParameterRangeError("cost_rate", self.cost_rate, "[0, inf)")

        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "allocation", allocation)

    @property
    def n_assets(self) -> int:
        return self.weights.shape[0]

    def with_weights(self, weights: ArrayLike) -> PolicyTriple:
        """Copy with new weights. A scalar is broadcast to every asset."""
        return dataclasses.replace(
            self, weights=np.broadcast_to(weights, (self.n_assets,)).astype(float)
        )

    def with_alpha(self, alpha: float) -> PolicyTriple:
        return dataclasses.replace(self, alpha=alpha)

    def with_allocation(self, allocation: ArrayLike) -> PolicyTriple:
        return dataclasses.replace(
            self, allocation=np.asarray(allocation, dtype=float)
        )

    def with_rates(
        self,
        risk_free_rate: Optional[float] = None,
        cost_rate: Optional[float] = None,
    ) -> PolicyTriple:
        changes = {}
        if risk_free_rate is not None:
            changes["risk_free_rate"] = risk_free_rate
        if cost_rate is not None:
            changes["cost_rate"] = cost_rate
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> PolicyTriple:
        return from_dict(data_class=cls, data=data, config=_DACITE_CONFIG)


@dataclass(frozen=True, eq=False)
class AccountTrajectory(LatBase):
    """Account values of a policy over stages ``0..k``.

    Attributes
    ----------
    long_values, short_values : np.ndarray
        (k + 1, n) long and short sub-account values, net of costs.
    total_values : np.ndarray
        (k + 1,) total account value ``V(j)``.
    cumulative_costs : np.ndarray
        (k + 1,) transaction costs paid through stage ``j``.
    initial_capital : float
        ``V0``.
    """

    long_values: np.ndarray
    short_values: np.ndarray
    total_values: np.ndarray
    cumulative_costs: np.ndarray
    initial_capital: float

    @property
    def horizon(self) -> int:
        return self.total_values.shape[0] - 1

    @property
    def gain_loss(self) -> NDArrayFloat:
        return gain_loss_series(self)

    def to_frame(self, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """Tabulate as columns ``stage, V_<a>L..., V_<a>S..., V, G, cum_cost``."""
        n = self.long_values.shape[1]
        labels = list(labels) if labels is not None else [str(i + 1) for i in range(n)]
        if len(labels) != n:
            raise ArrayShapeError(
                array_name="labels", array_shape=(len(labels),), expected_shape=(n,)
            )

        columns = {"stage": np.arange(self.horizon + 1)}
        columns.update(
            {f"V_{label}L": self.long_values[:, i] for i, label in enumerate(labels)}
        )
        columns.update(
            {f"V_{label}S": self.short_values[:, i] for i, label in enumerate(labels)}
        )
        columns["V"] = self.total_values
        columns["G"] = self.gain_loss
        columns["cum_cost"] = self.cumulative_costs
        return pd.DataFrame(columns)

    def to_csv(
        self, path: Union[str, Path], labels: Optional[Sequence[str]] = None
    ) -> None:
        self.to_frame(labels).to_csv(path, index=False, float_format="%.17g")


def _policy_step(
    long: np.ndarray,
    short: np.ndarray,
    x: np.ndarray,
    weights: np.ndarray,
    risk_free_rate: float,
    cost_rate: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Advance sub-accounts of shape (..., n) by one stage with returns `x`.

    Returns the new long and short values and the cost paid per leading index.
    """
    pi_long = weights * long
    pi_short = -weights * short

    long = long + pi_long * x + (long - pi_long) * risk_free_rate
    short = short + pi_short * x

    if cost_rate:
        cost_long = cost_rate * np.abs(pi_long)
        cost_short = cost_rate * np.abs(pi_short)
        long = long - cost_long
        short = short - cost_short
        cost = (cost_long + cost_short).sum(axis=-1)
    else:
        cost = np.zeros(long.shape[:-1])

    return long, short, cost


def _initial_accounts(triple: PolicyTriple) -> tuple[np.ndarray, np.ndarray]:
    capital = triple.allocation * triple.initial_capital
    return triple.alpha * capital, (1.0 - triple.alpha) * capital


def _check_dimension(triple: PolicyTriple, n_assets: int, shape) -> None:
    if n_assets != triple.n_assets:
        raise ArrayShapeError(
            array_name="returns",
            array_shape=shape,
            expected_shape=f"(k, {triple.n_assets})",
            extra=" (asset count must match the policy)",
        )


def run_policy(triple: PolicyTriple, path: ReturnPath) -> AccountTrajectory:
    """Run the long-short account dynamics of `triple` along `path`.

    Per stage and asset, with ``pi_L = w V_L`` and ``pi_S = -w V_S``::

        V_L <- V_L + pi_L X + (V_L - pi_L) r_f
        V_S <- V_S + pi_S X

    followed, when ``cost_rate > 0``, by deducting ``c |pi_L|`` and ``c |pi_S|``
    from the respective sub-accounts.
    """
    _check_dimension(triple, path.n_assets, path.returns.shape)
    k, n = path.returns.shape

    long_values = np.empty((k + 1, n))
    short_values = np.empty((k + 1, n))
    costs = np.zeros(k + 1)
    long_values[0], short_values[0] = _initial_accounts(triple)

    for stage in range(k):
        long, short, cost = _policy_step(
            long_values[stage],
            short_values[stage],
            path.returns[stage],
            triple.weights,
            triple.risk_free_rate,
            triple.cost_rate,
        )
        long_values[stage + 1] = long
        short_values[stage + 1] = short
        costs[stage + 1] = cost

    total_values = (long_values + short_values).sum(axis=1)
    # Stage 0 is V0 by construction
    total_values[0] = triple.initial_capital

    return AccountTrajectory(
        long_values=long_values,
        short_values=short_values,
        total_values=total_values,
        cumulative_costs=np.cumsum(costs),
        initial_capital=triple.initial_capital,
    )


def run_policy_batch(
    triple: PolicyTriple, returns: np.ndarray
) -> tuple[NDArrayFloat, NDArrayFloat]:
    """Vectorized :func:`run_policy` over a (P, k, n) stack of return paths.

    Returns
    -------
    total_values : np.ndarray
        (P, k + 1) total account values.
    final_asset_values : np.ndarray
        (P, n) long plus short value of each asset at stage k.
    """
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 3:
        raise ArrayShapeError(
            array_name="returns", array_shape=returns.shape, expected_shape="(P, k, n)"
        )
    n_paths, k, n = returns.shape
    _check_dimension(triple, n, returns.shape)

    long0, short0 = _initial_accounts(triple)
    long = np.broadcast_to(long0, (n_paths, n)).copy()
    short = np.broadcast_to(short0, (n_paths, n)).copy()

    total_values = np.empty((n_paths, k + 1))
    total_values[:, 0] = triple.initial_capital
    for stage in range(k):
        long, short, _ = _policy_step(
            long,
            short,
            returns[:, stage, :],
            triple.weights,
            triple.risk_free_rate,
            triple.cost_rate,
        )
        total_values[:, stage + 1] = (long + short).sum(axis=1)

    return total_values, long + short


def closed_form_account(triple: PolicyTriple, path: ReturnPath) -> NDArrayFloat:
    """Total value ``V(0..k)`` from the product form of the cost-free dynamics.

    ``V(k) = sum_i v_i V0 (alpha R_i+(k) + (1 - alpha) R_i-(k))`` with
    ``R_i+ = prod((1 + r_f) + w_i (X_i - r_f))`` and ``R_i- = prod(1 - w_i X_i)``.

    >>> triple = PolicyTriple(0.5, [0.5], [1.0])
    >>> closed_form_account(triple, ReturnPath([[0.1]])).round(12).tolist()
    [1.0, 1.0]
    """
    if triple.cost_rate != 0.0:
        raise ParameterRangeError(
            "cost_rate",
            triple.cost_rate,
            "{0}",
            extra=" (the closed form is cost-free)",
        )
    _check_dimension(triple, path.n_assets, path.returns.shape)

    rf = triple.risk_free_rate
    w = triple.weights
    growth_long = np.cumprod((1.0 + rf) + w * (path.returns - rf), axis=0)
    growth_short = np.cumprod(1.0 - w * path.returns, axis=0)

    capital = triple.allocation * triple.initial_capital
    values = (
        capital * (triple.alpha * growth_long + (1.0 - triple.alpha) * growth_short)
    ).sum(axis=1)
    return np.concatenate([[triple.initial_capital], values])


def gain_loss_series(traj: AccountTrajectory) -> NDArrayFloat:
    """Cumulative gain-loss ``G(j) = V(j) - V0``."""
    return traj.total_values - traj.initial_capital


def buy_and_hold_value(
    returns: np.ndarray, allocation: ArrayLike, initial_capital: float = 1.0
) -> NDArrayFloat:
    """Value of a static basket holding ``v_i V0`` in each asset.

    >>> buy_and_hold_value(np.array([[0.1], [-0.1]]), [1.0]).round(12).tolist()
    [1.0, 1.1, 0.99]
    """
    returns = np.asarray(returns, dtype=float)
    allocation = np.asarray(allocation, dtype=float)
    growth = np.cumprod(1.0 + returns, axis=0)
    values = initial_capital * (growth * allocation).sum(axis=1)
    return np.concatenate([[initial_capital], values])


def max_drawdown(series: ArrayLike) -> float:
    """Largest peak-to-trough decline of an equity curve, as a fraction of the peak.

    >>> max_drawdown([1.0, 2.0, 1.0, 4.0])
    0.5
    """
    values = np.asarray(series, dtype=float).reshape(-1)
    if values.size == 0:
        raise ArrayShapeError(
            array_name="series", array_shape=values.shape, expected_shape="(k,), k >= 1"
        )
    if np.any(values <= 0.0):
        j = int(np.flatnonzero(values <= 0.0)[0])
        raise ParameterRangeError(f"series[{j}]", values[j], "(0, inf)")

    peaks = np.maximum.accumulate(values)
    return float(np.max((peaks - values) / peaks))

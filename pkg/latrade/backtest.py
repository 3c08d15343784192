"""
Price ingestion and out-of-sample execution of a fixed policy triple.

Backtests feed realized (real-valued) returns through the same account dynamics as
the lattice model; binarization only happens during estimation.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from latrade.base import LatBase, LatEnum
from latrade.exceptions import (
    ArrayShapeError,
    DuplicateDateError,
    NonPositivePriceError,
    ParameterRangeError,
    PriceDataError,
    RaggedRowError,
    UnorderedDatesError,
    UnparseableCellError,
)
from latrade.lattice import ReturnPath
from latrade.policy import (
    AccountTrajectory,
    PolicyTriple,
    buy_and_hold_value,
    max_drawdown,
    run_policy,
)
from latrade.typing.numpy_types import ArrayLike, NDArrayFloat
from latrade.utils.dict_utils import dump_json, load_json

logger = logging.getLogger(__name__)

DATE_COLUMN = "date"
TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True, eq=False)
class PricePanel(LatBase):
    """Adjusted closing prices of ``n`` assets on ``T`` strictly increasing dates.

    Parameters
    ----------
    dates : tuple of str
        ISO-8601 date labels, oldest first.
    labels : tuple of str
        Asset labels.
    prices : np.ndarray
        (T, n) strictly positive prices.
    """

    dates: tuple
    labels: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.array(self.prices, dtype=float, ndmin=2)
        dates = tuple(str(date) for date in self.dates)
        labels = tuple(str(label) for label in self.labels)

        if prices.shape != (len(dates), len(labels)) or not labels:
            raise ArrayShapeError(
                array_name="prices",
                array_shape=prices.shape,
                expected_shape=(len(dates), len(labels)),
            )
        if not np.all(np.isfinite(prices)):
            t, i = np.argwhere(~np.isfinite(prices))[0]
            raise UnparseableCellError(str(prices[t, i]), row=t + 1, column=labels[i])
        if np.any(prices <= 0.0):
            t, i = np.argwhere(prices <= 0.0)[0]
            raise NonPositivePriceError(str(prices[t, i]), row=t + 1, column=labels[i])
        _check_dates(dates)

        prices.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "prices", prices)

    @property
    def n_dates(self) -> int:
        return self.prices.shape[0]

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.prices, columns=list(self.labels))
        frame.insert(0, DATE_COLUMN, list(self.dates))
        return frame

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def _check_dates(dates: Sequence[str]) -> None:
    """Reject duplicate and out-of-order dates, naming the first offending row."""
    seen: dict = {}
    previous = None
    for row, label in enumerate(dates, start=1):
        try:
            stamp = pd.Timestamp(label)
        except ValueError as exc:
            raise UnparseableCellError(label, row=row, column=DATE_COLUMN) from exc
        if stamp is pd.NaT:
            raise UnparseableCellError(label, row=row, column=DATE_COLUMN)
        if stamp in seen:
            raise DuplicateDateError(label, row=row, column=DATE_COLUMN)
        if previous is not None and stamp < previous:
            raise UnorderedDatesError(label, row=row, column=DATE_COLUMN)
        seen[stamp] = row
        previous = stamp


def load_price_csv(path: Union[str, Path]) -> PricePanel:
    """Read a wide price file: a ``date`` column followed by one column per ticker.

    Raises
    ------
    RaggedRowError
        A row has more or fewer fields than the header.
    UnparseableCellError
        A date or price cell cannot be parsed, or is empty.
    DuplicateDateError, UnorderedDatesError
        Dates are not strictly increasing.
    NonPositivePriceError
        A price is zero or negative.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise PriceDataError("file is empty") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) - 1 if match else None
        raise RaggedRowError(str(exc).strip(), row=row) from exc

    columns = [str(column).strip() for column in frame.columns]
    if not columns or columns[0].lower() != DATE_COLUMN:
        raise PriceDataError(
            f"first column must be '{DATE_COLUMN}'",
            row=0,
            column=columns[0] if columns else None,
        )
    if len(columns) < 2:
        raise PriceDataError("no ticker columns", row=0, column=columns[0])
    frame.columns = columns

    for column in columns:
        missing = np.flatnonzero(frame[column].isna().to_numpy())
        if missing.size:
            raise RaggedRowError(
                f"missing field for column '{column}'",
                row=int(missing[0]) + 1,
                column=column,
            )

    tickers = columns[1:]
    prices = np.empty((len(frame), len(tickers)))
    for i, ticker in enumerate(tickers):
        cells = frame[ticker].str.strip()
        values = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise UnparseableCellError(cells.iloc[row], row=row + 1, column=ticker)
        prices[:, i] = values

    dates = tuple(frame[DATE_COLUMN].str.strip())
    panel = PricePanel(dates=dates, labels=tuple(tickers), prices=prices)
    logger.info(
        "Loaded %d dates x %d assets from %s", panel.n_dates, panel.n_assets, path
    )
    return panel


def compute_returns(panel: PricePanel) -> NDArrayFloat:
    """Simple returns ``S(t + 1) / S(t) - 1`` as a (T - 1, n) matrix.

    >>> panel = PricePanel(("2020-01-01", "2020-01-02", "2020-01-03"), ("A",),
    ...                    [[100.0], [110.0], [99.0]])
    >>> compute_returns(panel).round(12).tolist()
    [[0.1], [-0.1]]
    """
    if panel.n_dates < 2:
        raise ArrayShapeError(
            array_name="prices",
            array_shape=panel.prices.shape,
            expected_shape="(T, n), T >= 2",
        )
    return panel.prices[1:] / panel.prices[:-1] - 1.0


def split_panel(panel: PricePanel, train_end: str) -> tuple[PricePanel, PricePanel]:
    """Split at `train_end` into training and out-of-sample panels.

    The training panel holds every date up to and including `train_end`. The
    out-of-sample panel starts at the last training date so that its returns cover
    every out-of-sample period.
    """
    stamps = pd.DatetimeIndex([pd.Timestamp(date) for date in panel.dates])
    cut = int(np.searchsorted(stamps, pd.Timestamp(train_end), side="right"))
    if cut < 2 or cut >= panel.n_dates:
        raise ParameterRangeError(
            "train_end",
            train_end,
            f"[{panel.dates[1]}, {panel.dates[-2]}]",
            extra=" (both panels need at least two dates)",
        )

    train = PricePanel(panel.dates[:cut], panel.labels, panel.prices[:cut])
    test = PricePanel(panel.dates[cut - 1 :], panel.labels, panel.prices[cut - 1 :])
    return train, test


class RateConvention(LatEnum):
    SIMPLE = "simple"
    COMPOUND = "compound"


@dataclass(frozen=True)
class BacktestConfig(LatBase):
    """Market frictions of a backtest.

    Parameters
    ----------
    rf_annual : float
        Annual risk-free rate as a fraction (0.0388 for 3.88%).
    convention : RateConvention
        ``simple`` divides by `periods_per_year`; ``compound`` uses
        ``(1 + r) ** (1 / periods_per_year) - 1``.
    periods_per_year : int
    cost_bps : float
        Transaction cost in basis points of traded notional.
    """

    rf_annual: float = 0.0
    convention: RateConvention = RateConvention.SIMPLE
    periods_per_year: int = TRADING_DAYS_PER_YEAR
    cost_bps: float = 0.0

    def __post_init__(self):
        convention = RateConvention(
            self.convention.value
            if isinstance(self.convention, RateConvention)
            else self.convention
        )
        if not self.rf_annual >= 0.0:
            raise ParameterRangeError("rf_annual", self.rf_annual, "[0, inf)")
        if not self.periods_per_year >= 1:
            raise ParameterRangeError(
                "periods_per_year", self.periods_per_year, "[1, inf)"
            )
        if not self.cost_bps >= 0.0:
            raise ParameterRangeError("cost_bps", self.cost_bps, "[0, inf)")
        object.__setattr__(self, "convention", convention)

    @property
    def per_period_rate(self) -> float:
        """
        >>> round(BacktestConfig(rf_annual=0.0252).per_period_rate, 12)
        0.0001
        """
        if self.convention is RateConvention.COMPOUND:
            return float(np.expm1(np.log1p(self.rf_annual) / self.periods_per_year))
        return self.rf_annual / self.periods_per_year

    @property
    def cost_rate(self) -> float:
        return self.cost_bps / 10_000

    def apply(self, triple: PolicyTriple) -> PolicyTriple:
        """Copy of `triple` carrying this config's per-period rate and cost rate."""
        return triple.with_rates(
            risk_free_rate=self.per_period_rate, cost_rate=self.cost_rate
        )


@dataclass(frozen=True, eq=False)
class BacktestReport(LatBase):
    """Performance of a policy on a realized return matrix.

    Attributes
    ----------
    gain_loss : np.ndarray
        (k + 1,) cumulative gain-loss ``G(j)``.
    final_gain_loss : float
    increment_std : float
        Sample std of the per-stage increments ``G(j + 1) - G(j)``.
    level_std : float
        Sample std of the gain-loss levels ``G(0..k)``.
    max_drawdown : float
        Of the account value ``V``.
    total_costs : float
    benchmark_gain_loss : np.ndarray
        (k + 1,) gain-loss of buying and holding the same allocation.
    benchmark_final : float
    """

    gain_loss: np.ndarray
    final_gain_loss: float
    increment_std: float
    level_std: float
    max_drawdown: float
    total_costs: float
    benchmark_gain_loss: np.ndarray
    benchmark_final: float
    labels: Optional[list] = None
    _trajectory: Optional[AccountTrajectory] = field(
        default=None, repr=False, compare=False
    )

    @property
    def trajectory(self) -> Optional[AccountTrajectory]:
        return self._trajectory

    def to_frame(self) -> pd.DataFrame:
        """Per-stage account table plus the benchmark gain-loss column."""
        if self._trajectory is None:
            frame = pd.DataFrame(
                {"stage": np.arange(self.gain_loss.shape[0]), "G": self.gain_loss}
            )
        else:
            frame = self._trajectory.to_frame(self.labels)
        frame["G_benchmark"] = self.benchmark_gain_loss
        return frame

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    def to_json(self, path: Union[str, Path], **extra) -> None:
        dump_json({**self.to_dict(), **extra}, path)


def _sample_std(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.shape[0] > 1 else 0.0


def run_backtest(
    triple: PolicyTriple,
    returns: ArrayLike,
    config: Optional[BacktestConfig] = None,
    labels: Optional[Sequence[str]] = None,
) -> BacktestReport:
    """Run `triple` on a realized (k, n) return matrix.

    When `config` is given its per-period risk-free rate and cost rate replace those
    of `triple`. Any return ``<= -1`` is rejected.
    """
    if config is not None:
        triple = config.apply(triple)
    path = ReturnPath(returns)
    trajectory = run_policy(triple, path)
    gain_loss = trajectory.gain_loss

    benchmark = (
        buy_and_hold_value(path.returns, triple.allocation, triple.initial_capital)
        - triple.initial_capital
    )

    report = BacktestReport(
        gain_loss=gain_loss,
        final_gain_loss=float(gain_loss[-1]),
        increment_std=_sample_std(np.diff(gain_loss)),
        level_std=_sample_std(gain_loss),
        max_drawdown=max_drawdown(trajectory.total_values),
        total_costs=float(trajectory.cumulative_costs[-1]),
        benchmark_gain_loss=benchmark,
        benchmark_final=float(benchmark[-1]),
        labels=list(labels) if labels is not None else None,
        _trajectory=trajectory,
    )
    logger.info(
        "Backtest over %d periods: G(k)=%.6g, max drawdown=%.4g, costs=%.6g",
        path.horizon,
        report.final_gain_loss,
        report.max_drawdown,
        report.total_costs,
    )
    return report


def equal_weight_allocation(n: int) -> NDArrayFloat:
    """
    >>> equal_weight_allocation(4).tolist()
    [0.25, 0.25, 0.25, 0.25]
    """
    if n < 1:
        raise ParameterRangeError("n", n, "[1, inf)")
    return np.full(n, 1.0 / n)


def training_gain_loss(panel: PricePanel) -> NDArrayFloat:
    """Absolute return of every asset over the panel, ``|S_i(T) / S_i(0) - 1|``."""
    return np.abs(panel.prices[-1] / panel.prices[0] - 1.0)


def gain_loss_allocation(panel: PricePanel) -> NDArrayFloat:
    """Allocation proportional to each asset's absolute training-period return.

    ``v_i = |S_i(T) / S_i(0) - 1| / sum_j |S_j(T) / S_j(0) - 1|``

    >>> panel = PricePanel(("2020-01-01", "2020-06-01"), ("A", "B"),
    ...                    [[100.0, 50.0], [130.0, 40.0]])
    >>> gain_loss_allocation(panel).round(12).tolist()
    [0.6, 0.4]
    """
    moves = training_gain_loss(panel)
    total = moves.sum()
    if not total > 0.0:
        raise ParameterRangeError(
            "training returns", moves.tolist(), "a nonzero vector"
        )
    return moves / total


def capital_weight_allocation(
    path: Union[str, Path], labels: Optional[Sequence[str]] = None
) -> NDArrayFloat:
    """Allocation from a JSON object mapping tickers to (unnormalized) weights.

    Without `labels`, assets take the order of the file.
    """
    weights = load_json(path)
    if not isinstance(weights, dict):
        raise ParameterRangeError(
            "cap weights", type(weights).__name__, "a JSON object"
        )
    if labels is None:
        labels = list(weights)
    missing = [label for label in labels if label not in weights]
    if missing:
        raise ParameterRangeError(
            "cap weights", missing, "the file's tickers", extra=" (tickers missing)"
        )
    values = np.array([float(weights[label]) for label in labels])
    if np.any(values < 0.0) or not values.sum() > 0.0:
        raise ParameterRangeError(
            "cap weights", values.tolist(), "[0, inf) with a positive sum"
        )
    return values / values.sum()

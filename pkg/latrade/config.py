"""Run configuration shared by the command-line workflows."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
from dacite import Config, from_dict

from latrade.backtest import (
    BacktestConfig,
    PricePanel,
    RateConvention,
    capital_weight_allocation,
    equal_weight_allocation,
    gain_loss_allocation,
    load_price_csv,
)
from latrade.base import LatBase, LatEnum
from latrade.exceptions import ArrayShapeError, ParameterRangeError
from latrade.policy import PolicyTriple

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

Command = Literal["estimate", "simulate", "bounds", "frontier", "backtest"]


class AllocationScheme(LatEnum):
    """Capital allocation vocabulary.

    ``ew`` splits capital equally, ``cw`` reads weights from a JSON file and ``gl``
    allocates in proportion to each asset's absolute training-period return.
    """

    EW = "ew"
    CW = "cw"
    GL = "gl"


@dataclass(frozen=True)
class TripleConfig(LatBase):
    """Policy parameters before they are resolved against a market.

    Parameters
    ----------
    alpha : float
        Long fraction.
    weights : list of float
        One weight (applied to every asset) or one per asset.
    allocation : AllocationScheme
    v0 : float
        Initial capital.
    cap_weights : str, optional
        JSON file of ticker weights, required by ``cw``.
    train_prices : str, optional
        Training price CSV, required by ``gl``.
    """

    alpha: float = 0.5
    weights: list = field(default_factory=lambda: [0.5])
    allocation: AllocationScheme = AllocationScheme.EW
    v0: float = 1.0
    cap_weights: Optional[str] = None
    train_prices: Optional[str] = None

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterRangeError("alpha", self.alpha, "[0, 1]")
        if not self.weights:
            raise ArrayShapeError(
                array_name="weights", array_shape=(0,), expected_shape="(1,) or (n,)"
            )
        for i, weight in enumerate(self.weights):
            if not 0.0 <= weight <= 1.0:
                raise ParameterRangeError(f"weights[{i}]", weight, "[0, 1]")
        if not self.v0 > 0.0:
            raise ParameterRangeError("v0", self.v0, "(0, inf)")
        if self.allocation is AllocationScheme.CW and self.cap_weights is None:
            raise ParameterRangeError(
                "allocation",
                "cw",
                "schemes with inputs",
                extra=" (--cap-weights missing)",
            )

    def resolve_weights(self, n: int) -> np.ndarray:
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape == (1,):
            return np.full(n, weights[0])
        if weights.shape != (n,):
            raise ArrayShapeError(
                array_name="weights", array_shape=weights.shape, expected_shape=(n,)
            )
        return weights

    def resolve_allocation(
        self,
        n: int,
        labels: Optional[Sequence[str]] = None,
        train_panel: Optional[PricePanel] = None,
    ) -> np.ndarray:
        """Allocation vector for `n` assets.

        `labels` names the assets for ``cw`` and ``gl``. Without labels, ``cw`` uses
        the order of the weight file and ``gl`` the columns of the training prices.
        """
        if self.allocation is AllocationScheme.EW:
            return equal_weight_allocation(n)
        if self.allocation is AllocationScheme.CW:
            allocation = capital_weight_allocation(self.cap_weights, labels)
        else:
            if train_panel is None:
                train_panel = load_price_csv(self.train_prices)
            if labels is not None and list(train_panel.labels) != list(labels):
                raise ArrayShapeError(
                    array_name="train_prices columns",
                    array_shape=str(list(train_panel.labels)),
                    expected_shape=str(list(labels)),
                )
            allocation = gain_loss_allocation(train_panel)

        if allocation.shape != (n,):
            raise ArrayShapeError(
                array_name="allocation",
                array_shape=allocation.shape,
                expected_shape=(n,),
            )
        return allocation

    def build(
        self,
        n: int,
        rates: Optional[BacktestConfig] = None,
        labels: Optional[Sequence[str]] = None,
        train_panel: Optional[PricePanel] = None,
    ) -> PolicyTriple:
        """Resolve into a :class:`PolicyTriple` with per-period rates from `rates`."""
        triple = PolicyTriple(
            alpha=self.alpha,
            weights=self.resolve_weights(n),
            allocation=self.resolve_allocation(n, labels, train_panel),
            initial_capital=self.v0,
        )
        return rates.apply(triple) if rates is not None else triple


@dataclass(frozen=True)
class SimulationConfig(LatBase):
    """Monte Carlo and frontier settings.

    Parameters
    ----------
    k : int
        Horizon in periods.
    n_paths : int
    seed : int
        Master seed; every path seed is derived from it.
    workers : int
    grid : list of float, optional
        Frontier weight grid.
    alphas : list of float, optional
        Long fractions swept by ``frontier``.
    rf_list : list of float, optional
        Annual risk-free rates swept by ``frontier``.
    target_std : float, optional
        Target std for weight tracing.
    per_asset : bool
        Trace one weight per asset.
    top_n : int, optional
        Keep only the best `top_n` assets when tracing per asset, ranked by
        absolute training return when the triple names training prices and by
        traced mean otherwise.
    """

    k: int = 252
    n_paths: int = 10_000
    seed: int = 0
    workers: int = 1
    grid: Optional[list] = None
    alphas: Optional[list] = None
    rf_list: Optional[list] = None
    target_std: Optional[float] = None
    per_asset: bool = False
    top_n: Optional[int] = None

    def validate(self) -> None:
        if self.k < 1:
            raise ParameterRangeError("k", self.k, "[1, inf)")
        if self.n_paths < 2:
            raise ParameterRangeError("paths", self.n_paths, "[2, inf)")
        if self.seed < 0:
            raise ParameterRangeError("seed", self.seed, "[0, inf)")
        if self.workers < 1:
            raise ParameterRangeError("workers", self.workers, "[1, inf)")
        if self.grid is not None:
            grid = np.asarray(self.grid, dtype=float)
            if grid.size == 0 or np.any(np.diff(grid) < 0.0):
                raise ParameterRangeError(
                    "grid", self.grid, "a nonempty ascending list"
                )
            if grid[0] < 0.0 or grid[-1] > 1.0:
                raise ParameterRangeError("grid", self.grid, "[0, 1]")
        for alpha in self.alphas or []:
            if not 0.0 <= alpha <= 1.0:
                raise ParameterRangeError("alphas", alpha, "[0, 1]")
        for rate in self.rf_list or []:
            if not rate >= 0.0:
                raise ParameterRangeError("rf_list", rate, "[0, inf)")
        if self.target_std is not None and not self.target_std > 0.0:
            raise ParameterRangeError("target_std", self.target_std, "(0, inf)")
        if self.per_asset and self.target_std is None:
            raise ParameterRangeError(
                "target_std", None, "(0, inf)", extra=" (required by --per-asset)"
            )
        if self.top_n is not None and self.top_n < 1:
            raise ParameterRangeError("top_n", self.top_n, "[1, inf)")


@dataclass(frozen=True)
class RunConfig(LatBase):
    """Fully resolved configuration of one command invocation.

    Echoed under ``"config"`` in every JSON output, so a run can be repeated from
    its own output.
    """

    command: Command
    input_path: str
    output_path: Optional[str] = None
    report_path: Optional[str] = None
    json_path: Optional[str] = None
    csv_path: Optional[str] = None
    prices_out: Optional[str] = None
    initial_prices: Optional[list] = None
    m: Optional[int] = None
    train_end: Optional[str] = None
    triple: Optional[TripleConfig] = None
    rates: Optional[BacktestConfig] = None
    simulation: Optional[SimulationConfig] = None

    def validate(self) -> None:
        """Check every setting; raises before any computation starts."""
        if not Path(self.input_path).is_file():
            raise FileNotFoundError(f"No such file: '{self.input_path}'")
        if self.command == "estimate" and (self.m is None or self.m < 1):
            raise ParameterRangeError("m", self.m, "[1, inf)")
        if self.prices_out is not None and self.initial_prices is None:
            raise ParameterRangeError(
                "initial_prices", None, "a list", extra=" (required by --prices-out)"
            )
        for i, price in enumerate(self.initial_prices or []):
            if not price > 0.0:
                raise ParameterRangeError(f"initial_prices[{i}]", price, "(0, inf)")
        if self.triple is not None:
            self.triple.validate()
            # A backtest split at train_end supplies its own training prices
            if (
                self.triple.allocation is AllocationScheme.GL
                and self.triple.train_prices is None
                and not (self.command == "backtest" and self.train_end is not None)
            ):
                raise ParameterRangeError(
                    "allocation",
                    "gl",
                    "schemes with inputs",
                    extra=" (--train-prices missing)",
                )
        if self.simulation is not None:
            self.simulation.validate()

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        return from_dict(
            data_class=cls,
            data=data,
            config=Config(cast=[AllocationScheme, RateConvention]),
        )


def configure_logging(verbosity: int = 0) -> None:
    """Route library logs to stderr: WARNING by default, INFO for ``-v``, DEBUG for
    ``-vv``."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)

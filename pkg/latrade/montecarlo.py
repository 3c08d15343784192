"""
Monte Carlo engine for gain-loss statistics, weight frontiers and price fans.

Every path ``j`` is sampled from its own generator seeded with
``derive_seed(master_seed, j)``, so results do not depend on the number of workers
and every policy evaluated in one call sees the same paths (common random numbers).
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from latrade.base import LatBase
from latrade.exceptions import ArrayShapeError, ParameterRangeError
from latrade.lattice import LatticeMarketSpec, sample_return_path
from latrade.policy import PolicyTriple, run_policy_batch
from latrade.typing.numpy_types import ArrayLike, NDArrayFloat
from latrade.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 500
PREDICTION_LEVELS = (0.025, 0.975)
MEAN_THRESHOLD = 1e-4
"""Assets whose traced mean gain-loss is below this magnitude receive weight 0."""


@dataclass(frozen=True, eq=False)
class GainLossSummary(LatBase):
    """Per-stage statistics of the gain-loss ``G(j)``, ``j = 0..k``.

    Attributes
    ----------
    mean, std : np.ndarray
        (k + 1,) sample mean and standard deviation (``ddof=1``).
    lower, upper : np.ndarray
        (k + 1,) empirical 2.5% and 97.5% quantiles.
    n_paths : int
    master_seed : int
    """

    mean: np.ndarray
    std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_paths: int
    master_seed: int

    @property
    def horizon(self) -> int:
        return self.mean.shape[0] - 1

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "stage": np.arange(self.horizon + 1),
                "mean": self.mean,
                "std": self.std,
                "lower": self.lower,
                "upper": self.upper,
            }
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class FrontierPoint(LatBase):
    """Mean and standard deviation of ``G(k)`` at a common weight ``omega``."""

    weight: float
    mean: float
    std: float


@dataclass(frozen=True)
class WeightTrace(LatBase):
    """Weight selected on a frontier for a target standard deviation.

    Attributes
    ----------
    weight : float
        Selected weight.
    mean : float
        Mean gain-loss at `weight` (interpolated).
    flagged : bool
        True when the target is below every achievable standard deviation, in which
        case `weight` is 0.
    prefix_length : int
        Number of leading frontier points with nondecreasing std that were used.
    """

    weight: float
    mean: float
    flagged: bool = False
    prefix_length: int = 0


@dataclass(frozen=True, eq=False)
class PerAssetWeights(LatBase):
    """Per-asset optimal weights and the traces behind them."""

    weights: np.ndarray
    traces: list = field(default_factory=list)
    selected: Optional[list] = None


@dataclass(frozen=True, eq=False)
class PriceFan(LatBase):
    """Quantiles and mean of simulated prices per stage and asset.

    Attributes
    ----------
    quantiles : list of float
    values : np.ndarray
        (q, k + 1, n) price quantiles.
    mean : np.ndarray
        (k + 1, n) mean price.
    """

    quantiles: list
    values: np.ndarray
    mean: np.ndarray

    def to_frame(self, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """Long table with columns ``stage, asset, mean, q<level>...``."""
        n_stages, n = self.mean.shape
        labels = list(labels) if labels is not None else [str(i + 1) for i in range(n)]
        frame = pd.DataFrame(
            {
                "stage": np.repeat(np.arange(n_stages), n),
                "asset": np.tile(labels, n_stages),
                "mean": self.mean.reshape(-1),
            }
        )
        for level, values in zip(self.quantiles, self.values):
            frame[f"q{level:g}"] = values.reshape(-1)
        return frame


def sample_paths(
    spec: LatticeMarketSpec, horizon: int, start: int, stop: int, master_seed: int
) -> NDArrayFloat:
    """Lattice returns of paths ``start..stop-1`` as a (P, horizon, n) array."""
    returns = np.empty((stop - start, horizon, spec.n))
    for row, index in enumerate(range(start, stop)):
        seed = derive_seed(master_seed, index)
        returns[row] = sample_return_path(spec, horizon, seed).returns
    return returns


def _evaluate_chunk(
    spec: LatticeMarketSpec,
    triples: Sequence[PolicyTriple],
    horizon: int,
    master_seed: int,
    keep_stages: bool,
    bounds: tuple[int, int],
) -> list[tuple[NDArrayFloat, NDArrayFloat]]:
    """Per triple: gain-loss (all stages or the last) and final per-asset gain-loss."""
    returns = sample_paths(spec, horizon, bounds[0], bounds[1], master_seed)
    results = []
    for triple in triples:
        total_values, asset_values = run_policy_batch(triple, returns)
        gain_loss = total_values - triple.initial_capital
        if not keep_stages:
            gain_loss = gain_loss[:, -1:]
        asset_gain_loss = asset_values - triple.allocation * triple.initial_capital
        results.append((gain_loss, asset_gain_loss))
    return results


def _map_chunks(
    func: Callable[[tuple[int, int]], list],
    n_paths: int,
    workers: int,
    chunk_size: int,
) -> list:
    """Apply `func` to consecutive path ranges; results come back in path order."""
    bounds = [
        (start, min(start + chunk_size, n_paths))
        for start in range(0, n_paths, chunk_size)
    ]
    if workers <= 1 or len(bounds) == 1:
        return [func(b) for b in bounds]

    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, bounds))


def _evaluate(
    spec: LatticeMarketSpec,
    triples: Sequence[PolicyTriple],
    horizon: int,
    n_paths: int,
    master_seed: int,
    *,
    keep_stages: bool,
    workers: int,
    chunk_size: int,
) -> list[tuple[NDArrayFloat, NDArrayFloat]]:
    """Evaluate every triple on the same `n_paths` paths."""
    if n_paths < 2:
        raise ParameterRangeError("n_paths", n_paths, "[2, inf)")
    if horizon < 1:
        raise ParameterRangeError("k", horizon, "[1, inf)")
    for triple in triples:
        if triple.n_assets != spec.n:
            raise ArrayShapeError(
                array_name="weights",
                array_shape=triple.weights.shape,
                expected_shape=(spec.n,),
            )

    logger.info(
        "Simulating %d paths of %d stages for %d policies (seed=%d, workers=%d)",
        n_paths,
        horizon,
        len(triples),
        master_seed,
        workers,
    )
    func = partial(
        _evaluate_chunk, spec, list(triples), horizon, master_seed, keep_stages
    )
    chunks = _map_chunks(func, n_paths, workers, chunk_size)
    return [
        (
            np.concatenate([chunk[i][0] for chunk in chunks]),
            np.concatenate([chunk[i][1] for chunk in chunks]),
        )
        for i in range(len(triples))
    ]


def streaming_moments(samples: np.ndarray) -> tuple[NDArrayFloat, NDArrayFloat]:
    """Mean and sample standard deviation along axis 0, accumulated row by row.

    >>> mean, std = streaming_moments(np.array([[1.0], [2.0], [3.0]]))
    >>> mean.tolist(), std.tolist()
    ([2.0], [1.0])
    """
    samples = np.asarray(samples, dtype=float)
    mean = np.zeros(samples.shape[1:])
    m2 = np.zeros(samples.shape[1:])
    for count, row in enumerate(samples, start=1):
        delta = row - mean
        mean = mean + delta / count
        m2 = m2 + delta * (row - mean)
    n_samples = samples.shape[0]
    std = np.sqrt(m2 / (n_samples - 1)) if n_samples > 1 else np.zeros_like(mean)
    return mean, std


def summarize_gain_loss(gain_loss: np.ndarray, master_seed: int) -> GainLossSummary:
    """Summary statistics of a (P, k + 1) gain-loss matrix."""
    mean, std = streaming_moments(gain_loss)
    lower, upper = np.quantile(gain_loss, PREDICTION_LEVELS, axis=0)
    return GainLossSummary(
        mean=mean,
        std=std,
        lower=lower,
        upper=upper,
        n_paths=gain_loss.shape[0],
        master_seed=master_seed,
    )


def simulate_gain_loss(
    triple: PolicyTriple,
    spec: LatticeMarketSpec,
    k: int,
    n_paths: int,
    master_seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> NDArrayFloat:
    """(n_paths, k + 1) matrix of simulated gain-loss paths."""
    ((gain_loss, _),) = _evaluate(
        spec,
        [triple],
        k,
        n_paths,
        master_seed,
        keep_stages=True,
        workers=workers,
        chunk_size=chunk_size,
    )
    return gain_loss


def mc_gain_loss(
    triple: PolicyTriple,
    spec: LatticeMarketSpec,
    k: int,
    n_paths: int,
    master_seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> GainLossSummary:
    """Monte Carlo mean, standard deviation and 95% prediction interval of ``G``."""
    gain_loss = simulate_gain_loss(
        triple, spec, k, n_paths, master_seed, workers=workers, chunk_size=chunk_size
    )
    return summarize_gain_loss(gain_loss, master_seed)


def _check_grid(weight_grid: ArrayLike) -> NDArrayFloat:
    grid = np.asarray(weight_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ArrayShapeError(
            array_name="weight_grid",
            array_shape=grid.shape,
            expected_shape="(g,), g >= 1",
        )
    if np.any(np.diff(grid) < 0.0):
        raise ParameterRangeError("weight_grid", grid.tolist(), "ascending order")
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise ParameterRangeError("weight_grid", grid.tolist(), "[0, 1]")
    return grid


def _warn_if_not_monotone(points: Sequence[FrontierPoint], label: str = "") -> None:
    stds = np.array([point.std for point in points])
    if np.any(np.diff(stds) < 0.0):
        logger.warning(
            "Frontier%s std is not nondecreasing in the weight",
            f" '{label}'" if label else "",
        )


def sweep_frontiers(
    spec: LatticeMarketSpec,
    triples: Mapping[str, PolicyTriple],
    weight_grid: ArrayLike,
    k: int,
    n_paths: int,
    seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> dict[str, list[FrontierPoint]]:
    """One frontier per labelled base triple, all on the same simulated paths."""
    grid = _check_grid(weight_grid)
    labels = list(triples)
    candidates = [
        triples[label].with_weights(omega) for label in labels for omega in grid
    ]
    results = _evaluate(
        spec,
        candidates,
        k,
        n_paths,
        seed,
        keep_stages=False,
        workers=workers,
        chunk_size=chunk_size,
    )

    frontiers: dict[str, list[FrontierPoint]] = {}
    for row, label in enumerate(labels):
        points = []
        for col, omega in enumerate(grid):
            final = results[row * grid.size + col][0][:, 0]
            mean, std = streaming_moments(final)
            points.append(
                FrontierPoint(weight=float(omega), mean=float(mean), std=float(std))
            )
        _warn_if_not_monotone(points, label)
        frontiers[label] = points
    return frontiers


def weight_frontier(
    spec: LatticeMarketSpec,
    base_triple: PolicyTriple,
    weight_grid: ArrayLike,
    k: int,
    n_paths: int,
    seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> list[FrontierPoint]:
    """Mean and std of ``G(k)`` with every weight set to each ``omega`` of the grid."""
    return sweep_frontiers(
        spec,
        {"base": base_triple},
        weight_grid,
        k,
        n_paths,
        seed,
        workers=workers,
        chunk_size=chunk_size,
    )["base"]


def frontier_frame(frontiers: Mapping[str, Sequence[FrontierPoint]]) -> pd.DataFrame:
    """Long table with columns ``label, omega, mean, std``."""
    rows = [
        {"label": label, "omega": point.weight, "mean": point.mean, "std": point.std}
        for label, points in frontiers.items()
        for point in points
    ]
    return pd.DataFrame(rows, columns=["label", "omega", "mean", "std"])


def trace_optimal_weight(
    frontier: Sequence[FrontierPoint], target_std: float
) -> WeightTrace:
    """Largest weight whose gain-loss std does not exceed `target_std`.

    Only the longest leading run of points with nondecreasing std is used. Between
    bracketing grid points, weight and mean are interpolated linearly in the std.

    Examples
    --------
    >>> points = [FrontierPoint(0.0, 0.0, 0.0), FrontierPoint(1.0, 2.0, 1.0)]
    >>> trace = trace_optimal_weight(points, 0.5)
    >>> trace.weight, trace.mean, trace.flagged
    (0.5, 1.0, False)
    """
    if not target_std > 0.0:
        raise ParameterRangeError("target_std", target_std, "(0, inf)")
    if len(frontier) == 0:
        raise ArrayShapeError(
            array_name="frontier", array_shape=(0,), expected_shape="(g,), g >= 1"
        )

    stds = np.array([point.std for point in frontier])
    decreasing = np.flatnonzero(np.diff(stds) < 0.0)
    prefix = int(decreasing[0]) + 1 if decreasing.size else len(frontier)
    if prefix < len(frontier):
        logger.warning(
            "Frontier std decreases after point %d; tracing on the first %d points",
            prefix - 1,
            prefix,
        )
    points = list(frontier[:prefix])
    stds = stds[:prefix]

    if target_std < stds[0]:
        return WeightTrace(
            weight=0.0, mean=points[0].mean, flagged=True, prefix_length=prefix
        )

    j = int(np.flatnonzero(stds <= target_std)[-1])
    if j == prefix - 1 or stds[j] == target_std:
        # Among points sharing this std, prefer the larger mean
        ties = [i for i in range(prefix) if stds[i] == stds[j]]
        best = max(ties, key=lambda i: (points[i].mean, points[i].weight))
        return WeightTrace(
            weight=points[best].weight, mean=points[best].mean, prefix_length=prefix
        )

    lo, hi = points[j], points[j + 1]
    fraction = (target_std - lo.std) / (hi.std - lo.std)
    return WeightTrace(
        weight=lo.weight + fraction * (hi.weight - lo.weight),
        mean=lo.mean + fraction * (hi.mean - lo.mean),
        prefix_length=prefix,
    )


def per_asset_optimal_weights(
    spec: LatticeMarketSpec,
    base_triple: PolicyTriple,
    k: int,
    n_paths: int,
    target_std: ArrayLike,
    seed: int,
    top_n: Optional[int] = None,
    *,
    weight_grid: ArrayLike = np.linspace(0.0, 1.0, 21),
    constant_weight: Optional[float] = None,
    training_gain_loss: Optional[ArrayLike] = None,
    threshold: float = MEAN_THRESHOLD,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> PerAssetWeights:
    """Trace a separate optimal weight for every asset.

    Asset ``i``'s frontier is the mean and std of its own sub-account gain-loss
    ``G_i(k) = V_{i,L}(k) + V_{i,S}(k) - v_i V0`` as ``w_i`` sweeps the grid. Assets
    are independent given their weights, so one run with all weights equal to
    ``omega`` yields every asset's frontier point at ``omega``.

    Assets whose traced mean is below `threshold` in magnitude get weight 0. With
    `top_n`, only the `top_n` highest-ranked assets keep a nonzero weight: their
    traced weight, or `constant_weight` when given. Assets rank by
    `training_gain_loss` (one score per asset, e.g.
    :func:`latrade.backtest.training_gain_loss`) when given, and by traced mean
    otherwise. Ties go to the lower index.
    """
    grid = _check_grid(weight_grid)
    targets = np.broadcast_to(np.asarray(target_std, dtype=float), (spec.n,))
    if top_n is not None and not 1 <= top_n <= spec.n:
        raise ParameterRangeError("top_n", top_n, f"[1, {spec.n}]")
    scores = None
    if training_gain_loss is not None:
        scores = np.asarray(training_gain_loss, dtype=float)
        if scores.shape != (spec.n,):
            raise ArrayShapeError(
                array_name="training_gain_loss",
                array_shape=scores.shape,
                expected_shape=(spec.n,),
            )

    results = _evaluate(
        spec,
        [base_triple.with_weights(omega) for omega in grid],
        k,
        n_paths,
        seed,
        keep_stages=False,
        workers=workers,
        chunk_size=chunk_size,
    )

    traces = []
    for i in range(spec.n):
        points = []
        for col, omega in enumerate(grid):
            mean, std = streaming_moments(results[col][1][:, i])
            points.append(
                FrontierPoint(weight=float(omega), mean=float(mean), std=float(std))
            )
        traces.append(trace_optimal_weight(points, float(targets[i])))

    weights = np.array([trace.weight for trace in traces])
    means = np.array([trace.mean for trace in traces])
    weights[np.abs(means) < threshold] = 0.0

    selected = None
    if top_n is not None:
        ranking = means if scores is None else scores
        ranked = sorted(range(spec.n), key=lambda i: (-ranking[i], i))
        selected = sorted(ranked[:top_n])
        chosen = np.zeros(spec.n, dtype=bool)
        chosen[selected] = True
        weights[~chosen] = 0.0
        if constant_weight is not None:
            weights[chosen & (weights > 0.0)] = constant_weight

    logger.info("Per-asset weights: %s", np.array2string(weights, precision=4))
    return PerAssetWeights(weights=weights, traces=traces, selected=selected)


def alpha_sweep(base: PolicyTriple, alphas: Sequence[float]) -> dict[str, PolicyTriple]:
    """Labelled copies of `base` over a list of long fractions."""
    return {f"alpha={alpha:g}": base.with_alpha(alpha) for alpha in alphas}


def _price_chunk(
    spec: LatticeMarketSpec,
    initial_prices: np.ndarray,
    horizon: int,
    master_seed: int,
    bounds: tuple[int, int],
) -> NDArrayFloat:
    returns = sample_paths(spec, horizon, bounds[0], bounds[1], master_seed)
    growth = np.cumprod(1.0 + returns, axis=1)
    start = np.broadcast_to(initial_prices, (returns.shape[0], 1, spec.n))
    return np.concatenate([start, initial_prices * growth], axis=1)


def mc_price_fan(
    spec: LatticeMarketSpec,
    initial_prices: ArrayLike,
    k: int,
    n_paths: int,
    master_seed: int,
    quantiles: Sequence[float] = (0.025, 0.5, 0.975),
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> PriceFan:
    """Quantiles of simulated prices ``S(j + 1) = S(j) (1 + X(j))`` per stage."""
    s0 = np.asarray(initial_prices, dtype=float).reshape(-1)
    if s0.shape != (spec.n,):
        raise ArrayShapeError(
            array_name="initial_prices", array_shape=s0.shape, expected_shape=(spec.n,)
        )
    if np.any(s0 <= 0.0):
        raise ParameterRangeError("initial_prices", s0.tolist(), "(0, inf)")
    if n_paths < 1:
        raise ParameterRangeError("n_paths", n_paths, "[1, inf)")

    func = partial(_price_chunk, spec, s0, k, master_seed)
    prices = np.concatenate(_map_chunks(func, n_paths, workers, chunk_size))
    return PriceFan(
        quantiles=list(quantiles),
        values=np.quantile(prices, list(quantiles), axis=0),
        mean=prices.mean(axis=0),
    )

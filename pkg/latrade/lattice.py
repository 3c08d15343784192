"""
Generalized lattice market: parameterization, up-probabilities, path sampling and
exact path enumeration.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from dacite import Config, from_dict

from latrade.base import LatBase, frozen_array
from latrade.exceptions import (
    ArrayShapeError,
    EnumerationSizeError,
    ModelInfeasibleError,
    ParameterRangeError,
)
from latrade.typing.numpy_types import ArrayLike, NDArrayBool, NDArrayFloat
from latrade.utils.dict_utils import dump_json, load_json
from latrade.utils.seeding import MASK64

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
"""Probabilities within this distance of [0, 1] are clamped, larger excursions raise.
"""

DEFAULT_ENUMERATION_CAP = 2**20

_DACITE_CONFIG = Config(type_hooks={np.ndarray: lambda v: np.asarray(v, dtype=float)})


@dataclass(frozen=True, eq=False)
class LatticeMarketSpec(LatBase):
    """Full parameterization of a generalized lattice market.

    Asset ``i`` returns ``u_i`` with probability

        ``Phi[i, 0] + sum_j Phi[i, j] x_i(k - j) + sum_l Gamma[i, l] x_l(k - 1)``

    and ``d_i`` otherwise.

    Parameters
    ----------
    up_factors : np.ndarray
        (n,) upward movement factors, each in (0, 1).
    down_factors : np.ndarray
        (n,) downward movement factors, each in (-1, 0).
    markov_coeffs : np.ndarray
        (n, m + 1) Markov coefficients. Column 0 is the intercept, column ``j`` the
        coefficient on the asset's own return ``j`` periods back.
    asset_correlation : np.ndarray
        (n, n) cross-asset coefficients on the previous period returns. Zero diagonal.
    initial_history : np.ndarray
        (n, m) returns preceding stage 0. Column ``j - 1`` holds ``x_i(-j)``, so
        column 0 is the most recent period.

    Attributes
    ----------
    n : int
        Number of assets.
    m : int
        Memory length.

    Notes
    -----
    Feasibility of the Markov coefficients (all probabilities in [0, 1]) is not
    checked on construction. Use :func:`latrade.estimation.feasibility_check`.
    """

    up_factors: np.ndarray
    down_factors: np.ndarray
    markov_coeffs: np.ndarray
    asset_correlation: np.ndarray
    initial_history: np.ndarray

    def __post_init__(self):
        for name, ndmin in (
            ("up_factors", 1),
            ("down_factors", 1),
            ("markov_coeffs", 2),
            ("asset_correlation", 2),
            ("initial_history", 2),
        ):
            value = frozen_array(getattr(self, name), ndmin=ndmin)
            object.__setattr__(self, name, value)

        u, d = self.up_factors, self.down_factors
        if u.ndim != 1 or u.shape[0] < 1:
            raise ArrayShapeError(
                array_name="up_factors", array_shape=u.shape, expected_shape="(n,)"
            )
        n = u.shape[0]
        if d.shape != (n,):
            raise ArrayShapeError(
                array_name="down_factors", array_shape=d.shape, expected_shape=(n,)
            )
        if self.markov_coeffs.ndim != 2 or self.markov_coeffs.shape[0] != n:
            raise ArrayShapeError(
                array_name="markov_coeffs",
                array_shape=self.markov_coeffs.shape,
                expected_shape=f"({n}, m + 1)",
            )
        m = self.markov_coeffs.shape[1] - 1
        if m < 1:
            raise ArrayShapeError(
                array_name="markov_coeffs",
                array_shape=self.markov_coeffs.shape,
                expected_shape=f"({n}, m + 1)",
                extra=" (memory length m must be at least 1)",
            )
        if self.asset_correlation.shape != (n, n):
            raise ArrayShapeError(
                array_name="asset_correlation",
                array_shape=self.asset_correlation.shape,
                expected_shape=(n, n),
            )
        if self.initial_history.shape != (n, m):
            raise ArrayShapeError(
                array_name="initial_history",
                array_shape=self.initial_history.shape,
                expected_shape=(n, m),
            )

        for i in range(n):
            if not 0.0 < u[i] < 1.0:
                raise ParameterRangeError(f"up_factors[{i}]", u[i], "(0, 1)")
            if not -1.0 < d[i] < 0.0:
                raise ParameterRangeError(f"down_factors[{i}]", d[i], "(-1, 0)")

        diagonal = np.diag(self.asset_correlation)
        if np.any(diagonal != 0.0):
            i = int(np.flatnonzero(diagonal != 0.0)[0])
            raise ParameterRangeError(
                f"asset_correlation[{i}, {i}]", diagonal[i], "{0}"
            )

        off_lattice = ~self.lattice_mask(self.initial_history.T).T
        if np.any(off_lattice):
            i, j = np.argwhere(off_lattice)[0]
            raise ParameterRangeError(
                f"initial_history[{i}, {j}]",
                self.initial_history[i, j],
                f"{{{u[i]}, {d[i]}}}",
            )

    @property
    def n(self) -> int:
        return self.up_factors.shape[0]

    @property
    def m(self) -> int:
        return self.markov_coeffs.shape[1] - 1

    def lattice_mask(self, returns: np.ndarray) -> NDArrayBool:
        """Elementwise test that a (..., n) array only holds ``u_i`` or ``d_i``."""
        return (returns == self.up_factors) | (returns == self.down_factors)

    def validate_path(self, path: ReturnPath) -> None:
        """Raise unless `path` is a path of this lattice."""
        if path.n_assets != self.n:
            raise ArrayShapeError(
                array_name="returns",
                array_shape=path.returns.shape,
                expected_shape=(path.horizon, self.n),
            )
        off_lattice = ~self.lattice_mask(path.returns)
        if np.any(off_lattice):
            j, i = np.argwhere(off_lattice)[0]
            raise ParameterRangeError(
                f"returns[{j}, {i}]",
                path.returns[j, i],
                f"{{{self.up_factors[i]}, {self.down_factors[i]}}}",
            )

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, **super().to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> LatticeMarketSpec:
        """Build a spec from its JSON document. ``n`` and ``m`` are optional and,
        when present, must agree with the array shapes."""
        _data = dict(data)
        n = _data.pop("n", None)
        m = _data.pop("m", None)

        spec = from_dict(data_class=cls, data=_data, config=_DACITE_CONFIG)

        if n is not None and n != spec.n:
            raise ArrayShapeError(
                array_name="up_factors",
                array_shape=spec.up_factors.shape,
                expected_shape=(n,),
                extra=" (declared by 'n')",
            )
        if m is not None and m != spec.m:
            raise ArrayShapeError(
                array_name="markov_coeffs",
                array_shape=spec.markov_coeffs.shape,
                expected_shape=(spec.n, m + 1),
                extra=" (declared by 'm')",
            )
        return spec

    def to_json(self, path: Union[str, Path]) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> LatticeMarketSpec:
        return cls.from_dict(load_json(path))


@dataclass(frozen=True, eq=False)
class ReturnPath(LatBase):
    """A realized (k, n) matrix of per-period returns.

    Row ``j`` holds the returns of stage ``j``. Lattice paths only hold movement
    factors (see :meth:`LatticeMarketSpec.validate_path`); backtests feed realized
    market returns through the same type, so only ``returns > -1`` is enforced here.
    """

    returns: np.ndarray

    def __post_init__(self):
        returns = frozen_array(self.returns, ndmin=2)
        if returns.ndim != 2:
            raise ArrayShapeError(
                array_name="returns", array_shape=returns.shape, expected_shape="(k, n)"
            )
        if np.any(returns <= -1.0) or not np.all(np.isfinite(returns)):
            j, i = np.argwhere((returns <= -1.0) | ~np.isfinite(returns))[0]
            raise ParameterRangeError(f"returns[{j}, {i}]", returns[j, i], "(-1, inf)")
        object.__setattr__(self, "returns", returns)

    @classmethod
    def empty(cls, n: int) -> ReturnPath:
        return cls(np.zeros((0, n)))

    @property
    def horizon(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True, eq=False)
class ProbabilitySchedule(LatBase):
    """Marginal up-probabilities ``p_i(j)``, one row per stage ``j = 0..k-1``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = frozen_array(self.probs, ndmin=2)
        if probs.ndim != 2:
            raise ArrayShapeError(
                array_name="probs", array_shape=probs.shape, expected_shape="(k, n)"
            )
        if np.any((probs < 0.0) | (probs > 1.0)):
            j, i = np.argwhere((probs < 0.0) | (probs > 1.0))[0]
            raise ParameterRangeError(f"probs[{j}, {i}]", probs[j, i], "[0, 1]")
        object.__setattr__(self, "probs", probs)

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]


def _check_probabilities(p: np.ndarray) -> NDArrayFloat:
    """Clamp probabilities within tolerance of [0, 1]; raise for larger excursions.

    `p` has the asset on its last axis.
    """
    bad = (p < -PROBABILITY_TOLERANCE) | (p > 1.0 + PROBABILITY_TOLERANCE)
    if np.any(bad):
        index = np.argwhere(bad)[0]
        asset = int(index[-1])
        raise ModelInfeasibleError(
            asset=asset,
            detail=f"up-probability {p[tuple(index)]:.12g} outside [0, 1]",
        )
    return np.clip(p, 0.0, 1.0)


def _affine_probabilities(spec: LatticeMarketSpec, history: np.ndarray) -> np.ndarray:
    """Evaluate the affine up-probability model on a (..., n, m) stack of histories."""
    phi = spec.markov_coeffs
    own = np.einsum("ij,...ij->...i", phi[:, 1:], history)
    cross = history[..., 0] @ spec.asset_correlation.T
    return phi[:, 0] + own + cross


def conditional_up_probabilities(
    spec: LatticeMarketSpec, history: ArrayLike
) -> NDArrayFloat:
    """Conditional probability of an up-move for every asset given a history.

    Parameters
    ----------
    spec : LatticeMarketSpec
        Market parameters.
    history : array_like
        (n, m) realized lattice returns, column ``j - 1`` holding ``x_i(k - j)``.

    Returns
    -------
    np.ndarray
        (n,) probabilities in [0, 1].

    Raises
    ------
    ModelInfeasibleError
        If any probability falls outside [0, 1] by more than 1e-12.

    Examples
    --------
    >>> spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 0.4]], [[0.0]], [[0.5]])
    >>> conditional_up_probabilities(spec, [[0.5]]).round(12).tolist()
    [0.7]
    """
    history = np.asarray(history, dtype=float)
    if history.shape != (spec.n, spec.m):
        raise ArrayShapeError(
            array_name="history",
            array_shape=history.shape,
            expected_shape=(spec.n, spec.m),
        )
    if not np.all(spec.lattice_mask(history.T)):
        i, j = np.argwhere(~spec.lattice_mask(history.T).T)[0]
        raise ParameterRangeError(
            f"history[{i}, {j}]",
            history[i, j],
            f"{{{spec.up_factors[i]}, {spec.down_factors[i]}}}",
        )
    return _check_probabilities(_affine_probabilities(spec, history))


def marginal_probability_schedule(
    spec: LatticeMarketSpec, horizon: int
) -> ProbabilitySchedule:
    """Unconditional up-probabilities ``p_i(j)`` for ``j = 0..horizon-1``.

    The model is affine in past returns, so marginals follow by replacing each
    past return with its expectation ``(u - d) p + d``. Stages before 0 start from
    the indicator ``(x(-j) - d) / (u - d)`` of the initial history.

    Examples
    --------
    >>> spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 0.2]], [[0.0]], [[0.5]])
    >>> marginal_probability_schedule(spec, 2).probs.round(12).ravel().tolist()
    [0.6, 0.52]
    """
    if horizon < 1:
        raise ParameterRangeError("horizon", horizon, "[1, inf)")

    u, d = spec.up_factors, spec.down_factors
    spread = (u - d)[:, None]
    lagged = (spec.initial_history - d[:, None]) / spread
    probs = np.empty((horizon, spec.n))

    for stage in range(horizon):
        expected_history = spread * lagged + d[:, None]
        p = _check_probabilities(_affine_probabilities(spec, expected_history))
        probs[stage] = p
        lagged = np.column_stack([p, lagged[:, :-1]])

    return ProbabilitySchedule(probs)


def sample_return_path(spec: LatticeMarketSpec, horizon: int, seed: int) -> ReturnPath:
    """Sample one lattice path by sequential conditional draws.

    Draw order is stage-major, then asset index: stage ``j`` consumes
    ``rng.random(n)`` and asset ``i`` moves up when its uniform is below its
    conditional probability. The rolling history starts from ``initial_history``.
    """
    if horizon < 0:
        raise ParameterRangeError("horizon", horizon, "[0, inf)")

    rng = np.random.default_rng(seed & MASK64)
    return ReturnPath(_sample_returns(spec, horizon, rng))


def _sample_returns(
    spec: LatticeMarketSpec, horizon: int, rng: np.random.Generator
) -> NDArrayFloat:
    u, d = spec.up_factors, spec.down_factors
    history = spec.initial_history.copy()
    returns = np.empty((horizon, spec.n))

    for stage in range(horizon):
        p = _check_probabilities(_affine_probabilities(spec, history))
        x = np.where(rng.random(spec.n) < p, u, d)
        returns[stage] = x
        history = np.column_stack([x, history[:, :-1]])

    return returns


def enumerate_path_array(
    spec: LatticeMarketSpec, horizon: int, *, cap: int = DEFAULT_ENUMERATION_CAP
) -> tuple[NDArrayFloat, NDArrayFloat]:
    """Enumerate every lattice path up to `horizon` with its exact probability.

    Within a stage, assets move independently given the shared history.

    Returns
    -------
    returns : np.ndarray
        (P, horizon, n) returns with ``P = 2 ** (n * horizon)``.
    probs : np.ndarray
        (P,) path probabilities.

    Raises
    ------
    EnumerationSizeError
        If ``P`` exceeds `cap`.
    """
    if horizon < 0:
        raise ParameterRangeError("horizon", horizon, "[0, inf)")
    n_paths = 2 ** (spec.n * horizon)
    if n_paths > cap:
        raise EnumerationSizeError(n_paths=n_paths, cap=cap)

    u, d = spec.up_factors, spec.down_factors
    # (O, n) table of one-stage outcomes, True meaning an up-move
    outcomes = np.array(list(itertools.product((True, False), repeat=spec.n)))
    stage_returns = np.where(outcomes, u, d)

    returns = np.zeros((1, 0, spec.n))
    histories = spec.initial_history[None].copy()
    probs = np.ones(1)

    for _ in range(horizon):
        p = _check_probabilities(_affine_probabilities(spec, histories))
        branch = np.where(outcomes[None], p[:, None, :], 1.0 - p[:, None, :]).prod(
            axis=2
        )
        n_prev, n_out = p.shape[0], outcomes.shape[0]

        probs = (probs[:, None] * branch).reshape(-1)
        returns = np.concatenate(
            [
                np.repeat(returns, n_out, axis=0),
                np.tile(stage_returns, (n_prev, 1))[:, None, :],
            ],
            axis=1,
        )
        new_x = np.tile(stage_returns, (n_prev, 1))
        histories = np.concatenate(
            [new_x[:, :, None], np.repeat(histories, n_out, axis=0)[:, :, :-1]],
            axis=2,
        )

    logger.debug("Enumerated %d paths over %d stages", probs.shape[0], horizon)
    return returns, probs


def enumerate_paths(
    spec: LatticeMarketSpec, horizon: int, *, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[tuple[ReturnPath, float]]:
    """Every lattice path up to `horizon` paired with its exact probability.

    Examples
    --------
    >>> spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 0.2]], [[0.0]], [[0.5]])
    >>> paths = enumerate_paths(spec, 1)
    >>> [(p.returns.ravel().tolist(), round(q, 12)) for p, q in paths]
    [([0.5], 0.6), ([-0.5], 0.4)]
    """
    returns, probs = enumerate_path_array(spec, horizon, cap=cap)
    return [(ReturnPath(r), float(q)) for r, q in zip(returns, probs)]


def simulate_prices(path: ReturnPath, initial_prices: ArrayLike) -> NDArrayFloat:
    """Price matrix ``S(j + 1) = S(j) * (1 + X(j))``, row 0 holding `initial_prices`.

    >>> simulate_prices(ReturnPath([[0.1], [-0.1]]), [100.0]).round(10).ravel().tolist()
    [100.0, 110.0, 99.0]
    """
    s0 = np.asarray(initial_prices, dtype=float).reshape(-1)
    if s0.shape != (path.n_assets,):
        raise ArrayShapeError(
            array_name="initial_prices",
            array_shape=s0.shape,
            expected_shape=(path.n_assets,),
        )
    if np.any(s0 <= 0.0):
        i = int(np.flatnonzero(s0 <= 0.0)[0])
        raise ParameterRangeError(f"initial_prices[{i}]", s0[i], "(0, inf)")

    return np.vstack([s0, s0 * np.cumprod(1.0 + path.returns, axis=0)])

from pprint import pformat

import numpy as np
from deepdiff import DeepDiff

from latrade.lattice import LatticeMarketSpec
from latrade.policy import PolicyTriple


def assert_equal_dict(dict1: dict, dict2: dict, **kwargs):
    diff = DeepDiff(
        dict1,
        dict2,
        ignore_order=True,
        **kwargs,
    )
    assert diff == {}, f"Diff is not None: {pformat(diff)}"


def constant_spec(u: float, d: float, p: float) -> LatticeMarketSpec:
    """Single asset, memory one, constant up-probability `p`."""
    return LatticeMarketSpec([u], [d], [[p, 0.0]], [[0.0]], [[u]])


def random_feasible_spec(
    rng: np.random.Generator, n: int, m: int
) -> LatticeMarketSpec:
    """A spec whose every conditional probability lies strictly inside [0, 1]."""
    u = rng.uniform(0.05, 0.5, n)
    d = rng.uniform(-0.5, -0.05, n)

    gamma = rng.uniform(-0.2, 0.2, (n, n))
    np.fill_diagonal(gamma, 0.0)

    phi = np.empty((n, m + 1))
    for i in range(n):
        offset_mid = float(((u + d) / 2.0) @ gamma[i])
        offset_abs = float(((u - d) / 2.0) @ np.abs(gamma[i]))
        room = 0.5 - offset_abs
        half_spread = (u[i] - d[i]) / 2.0
        center = (u[i] + d[i]) / 2.0

        lags = rng.uniform(-1.0, 1.0, m)
        scale = 0.6 * room / (half_spread * np.abs(lags).sum())
        lags = lags * min(1.0, scale)
        shift = rng.uniform(-0.3, 0.3) * room
        phi[i, 0] = 0.5 - center * lags.sum() - offset_mid + shift
        phi[i, 1:] = lags

    history = np.where(rng.random((n, m)) < 0.5, u[:, None], d[:, None])
    return LatticeMarketSpec(u, d, phi, gamma, history)


def random_open_triple(rng: np.random.Generator, n: int, **kwargs) -> PolicyTriple:
    """A triple with alpha and every weight in (0, 1) and a random allocation."""
    allocation = rng.dirichlet(np.ones(n))
    return PolicyTriple(
        alpha=rng.uniform(0.05, 0.95),
        weights=rng.uniform(0.05, 0.95, n),
        allocation=allocation / allocation.sum(),
        **kwargs,
    )

import itertools

import numpy as np
import pytest

from latrade.exceptions import ArrayShapeError, ParameterRangeError
from latrade.lattice import ReturnPath
from latrade.policy import (
    PolicyTriple,
    buy_and_hold_value,
    closed_form_account,
    gain_loss_series,
    max_drawdown,
    run_policy,
    run_policy_batch,
)
from tests.helpers import assert_equal_dict


def random_path(rng: np.random.Generator, k: int, n: int) -> ReturnPath:
    return ReturnPath(rng.uniform(-0.5, 0.5, (k, n)))


def random_triple(rng: np.random.Generator, n: int, **kwargs) -> PolicyTriple:
    allocation = rng.dirichlet(np.ones(n))
    return PolicyTriple(
        alpha=rng.uniform(0.0, 1.0),
        weights=rng.uniform(0.0, 1.0, n),
        allocation=allocation / allocation.sum(),
        initial_capital=rng.uniform(0.5, 2.0),
        **kwargs,
    )


class TestPolicyTriple:
    def test_equality_compares_arrays(self):
        triple = PolicyTriple(0.5, [0.4, 0.6], [0.5, 0.5])
        assert triple == PolicyTriple(0.5, [0.4, 0.6], [0.5, 0.5])
        assert triple.with_weights(0.4) != triple
        assert triple.with_weights([0.4, 0.6]) == triple
        with pytest.raises(TypeError):
            hash(triple)

    @pytest.mark.parametrize(
        "kwargs,error",
        [
            ({"alpha": 1.5}, ParameterRangeError),
            ({"weights": [0.5, 1.2]}, ParameterRangeError),
            ({"weights": [0.5]}, ArrayShapeError),
            ({"allocation": [0.5, 0.6]}, ParameterRangeError),
            ({"allocation": [1.5, -0.5]}, ParameterRangeError),
            ({"initial_capital": 0.0}, ParameterRangeError),
            ({"risk_free_rate": -0.01}, ParameterRangeError),
            ({"cost_rate": -0.01}, ParameterRangeError),
        ],
    )
    def test_invalid(self, kwargs, error):
        data = {"alpha": 0.5, "weights": [0.5, 0.5], "allocation": [0.5, 0.5]}
        with pytest.raises(error):
            PolicyTriple(**{**data, **kwargs})

    def test_with_weights_broadcasts(self):
        triple = PolicyTriple(0.5, [0.1, 0.2, 0.3], [0.2, 0.3, 0.5])
        assert triple.with_weights(0.7).weights.tolist() == [0.7, 0.7, 0.7]
        assert triple.weights.tolist() == [0.1, 0.2, 0.3]

    def test_with_rates(self):
        triple = PolicyTriple(0.5, [0.5], [1.0]).with_rates(risk_free_rate=0.01)
        assert triple.risk_free_rate == 0.01
        assert triple.cost_rate == 0.0

    def test_dict_roundtrip(self):
        triple = PolicyTriple(0.25, [0.1, 0.9], [0.4, 0.6], 2.0, 0.001, 0.0005)
        data = triple.to_dict()
        assert_equal_dict(
            data,
            {
                "alpha": 0.25,
                "weights": [0.1, 0.9],
                "allocation": [0.4, 0.6],
                "initial_capital": 2.0,
                "risk_free_rate": 0.001,
                "cost_rate": 0.0005,
            },
        )
        assert_equal_dict(PolicyTriple.from_dict(data).to_dict(), data)

    def test_from_dict_integers(self):
        triple = PolicyTriple.from_dict({"alpha": 1, "weights": [1], "allocation": [1]})
        assert triple.alpha == 1.0


class TestRunPolicy:
    def test_single_stage(self):
        triple = PolicyTriple(0.5, [0.5], [1.0])
        traj = run_policy(triple, ReturnPath([[0.1]]))
        # long 0.5 + 0.25 * 0.1, short 0.5 - 0.25 * 0.1
        np.testing.assert_allclose(traj.long_values[:, 0], [0.5, 0.525])
        np.testing.assert_allclose(traj.short_values[:, 0], [0.5, 0.475])
        np.testing.assert_allclose(traj.total_values, [1.0, 1.0])

    def test_empty_horizon(self):
        triple = PolicyTriple(0.3, [0.5, 0.5], [0.5, 0.5], initial_capital=3.0)
        traj = run_policy(triple, ReturnPath.empty(2))
        assert traj.total_values.tolist() == [3.0]
        assert gain_loss_series(traj).tolist() == [0.0]

    def test_dimension_mismatch(self):
        triple = PolicyTriple(0.5, [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ArrayShapeError):
            run_policy(triple, ReturnPath([[0.1]]))

    @pytest.mark.parametrize("seed", range(100))
    def test_zero_weight_is_identity(self, seed):
        rng = np.random.default_rng(seed)
        n, k = int(rng.integers(1, 5)), int(rng.integers(1, 30))
        triple = random_triple(rng, n).with_weights(0.0)
        traj = run_policy(triple, random_path(rng, k, n))
        np.testing.assert_allclose(gain_loss_series(traj), 0.0, atol=1e-12)
        np.testing.assert_array_equal(traj.long_values[-1], traj.long_values[0])

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_closed_form(self, seed):
        rng = np.random.default_rng(seed)
        n, k = int(rng.integers(1, 5)), int(rng.integers(1, 40))
        triple = random_triple(rng, n, risk_free_rate=rng.uniform(0.0, 0.001))
        path = random_path(rng, k, n)

        simulated = run_policy(triple, path).total_values
        np.testing.assert_allclose(
            closed_form_account(triple, path), simulated, rtol=1e-10
        )

    def test_closed_form_is_cost_free(self):
        triple = PolicyTriple(0.5, [0.5], [1.0], cost_rate=0.001)
        with pytest.raises(ParameterRangeError):
            closed_form_account(triple, ReturnPath([[0.1]]))

    @pytest.mark.parametrize("seed", range(10))
    def test_sub_accounts_survive(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.05, 0.99, 2)
        d = rng.uniform(-0.99, -0.05, 2)
        paths = [
            ReturnPath(np.where(np.array(ups).reshape(4, 2), u, d))
            for ups in itertools.product((True, False), repeat=8)
        ]
        for _ in range(5):
            triple = random_triple(rng, 2)
            for path in paths:
                traj = run_policy(triple, path)
                assert np.all(traj.long_values >= 0.0)
                assert np.all(traj.short_values >= 0.0)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(7)
        triple = random_triple(rng, 3, risk_free_rate=0.0002, cost_rate=0.001)
        returns = rng.uniform(-0.3, 0.3, (20, 12, 3))
        totals, finals = run_policy_batch(triple, returns)
        for p in range(20):
            traj = run_policy(triple, ReturnPath(returns[p]))
            np.testing.assert_allclose(totals[p], traj.total_values, rtol=1e-14)
            np.testing.assert_allclose(
                finals[p],
                traj.long_values[-1] + traj.short_values[-1],
                rtol=1e-14,
            )

    def test_risk_free_only_on_long_side(self):
        triple = PolicyTriple(1.0, [0.0], [1.0], risk_free_rate=0.01)
        traj = run_policy(triple, ReturnPath(np.zeros((3, 1))))
        assert traj.total_values[-1] == pytest.approx(1.01**3, rel=1e-14)

        triple = PolicyTriple(0.0, [0.0], [1.0], risk_free_rate=0.01)
        traj = run_policy(triple, ReturnPath(np.zeros((3, 1))))
        assert traj.total_values[-1] == 1.0


class TestCosts:
    path = ReturnPath([[0.1, -0.05], [-0.2, 0.3], [0.05, 0.02]])

    def test_costs_reduce_value(self):
        free = PolicyTriple(0.6, [0.5, 0.8], [0.3, 0.7])
        costly = free.with_rates(cost_rate=0.001)
        v_free = run_policy(free, self.path).total_values
        v_costly = run_policy(costly, self.path).total_values
        assert np.all(v_costly[1:] < v_free[1:])

    @pytest.mark.parametrize("low,high", [(0.0, 0.0005), (0.0005, 0.002)])
    def test_monotone_in_cost(self, low, high):
        base = PolicyTriple(0.6, [0.5, 0.8], [0.3, 0.7])
        low_traj = run_policy(base.with_rates(cost_rate=low), self.path)
        high_traj = run_policy(base.with_rates(cost_rate=high), self.path)
        assert high_traj.total_values[-1] < low_traj.total_values[-1]
        assert high_traj.cumulative_costs[-1] > low_traj.cumulative_costs[-1]

    def test_single_stage_cost(self):
        triple = PolicyTriple(0.5, [0.5], [1.0], cost_rate=0.01)
        traj = run_policy(triple, ReturnPath([[0.1]]))
        # exposure 0.25 on each side
        assert traj.cumulative_costs.tolist() == pytest.approx([0.0, 0.005])
        assert traj.total_values[-1] == pytest.approx(0.995)


class TestTrajectoryOutput:
    def test_frame(self, tmp_path):
        triple = PolicyTriple(0.5, [0.5, 0.5], [0.5, 0.5])
        traj = run_policy(triple, ReturnPath([[0.1, -0.1], [0.2, 0.0]]))
        frame = traj.to_frame(["AAA", "BBB"])
        assert len(frame) == 3
        assert {"V", "G"} <= set(frame.columns)
        np.testing.assert_allclose(frame["G"], gain_loss_series(traj))

        path = tmp_path / "traj.csv"
        traj.to_csv(path, ["AAA", "BBB"])
        assert path.read_text().splitlines()[0].startswith("stage")


class TestBenchmarksAndDrawdown:
    def test_buy_and_hold(self):
        returns = np.array([[0.1, -0.5], [0.0, 1.0]])
        values = buy_and_hold_value(returns, [0.5, 0.5], 2.0)
        np.testing.assert_allclose(values, [2.0, 1.6, 2.1])

    def test_buy_and_hold_matches_full_long_policy(self):
        rng = np.random.default_rng(1)
        path = random_path(rng, 15, 3)
        triple = PolicyTriple(1.0, [1.0, 1.0, 1.0], [0.2, 0.3, 0.5])
        np.testing.assert_allclose(
            run_policy(triple, path).total_values,
            buy_and_hold_value(path.returns, triple.allocation),
            rtol=1e-12,
        )

    @pytest.mark.parametrize(
        "series,expected",
        [
            ([1.0, 1.1, 1.2, 1.3], 0.0),
            ([1.0, 2.0, 1.0, 4.0], 0.5),
            ([2.0, 1.5, 1.0, 1.8, 0.5], 0.75),
            ([1.0], 0.0),
        ],
    )
    def test_max_drawdown(self, series, expected):
        assert max_drawdown(series) == pytest.approx(expected)

    @pytest.mark.parametrize("series", [[], [1.0, 0.0]])
    def test_max_drawdown_invalid(self, series):
        with pytest.raises((ArrayShapeError, ParameterRangeError)):
            max_drawdown(series)

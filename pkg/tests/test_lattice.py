import numpy as np
import pytest
from dacite import MissingValueError

from latrade.exceptions import (
    ArrayShapeError,
    EnumerationSizeError,
    ModelInfeasibleError,
    ParameterRangeError,
)
from latrade.lattice import (
    LatticeMarketSpec,
    ReturnPath,
    conditional_up_probabilities,
    enumerate_path_array,
    enumerate_paths,
    marginal_probability_schedule,
    sample_return_path,
    simulate_prices,
)
from tests.helpers import assert_equal_dict, constant_spec, random_feasible_spec


@pytest.fixture(scope="class")
def two_asset_spec(request):
    request.cls.spec = LatticeMarketSpec(
        up_factors=[0.02, 0.03],
        down_factors=[-0.015, -0.01],
        markov_coeffs=[[0.55, 1.0, -0.5], [0.5, 0.0, 2.0]],
        asset_correlation=[[0.0, 0.5], [-0.5, 0.0]],
        initial_history=[[0.02, -0.015], [-0.01, 0.03]],
    )


@pytest.mark.usefixtures("two_asset_spec")
class TestLatticeMarketSpec:
    def test_dimensions(self):
        assert self.spec.n == 2
        assert self.spec.m == 2

    def test_arrays_are_read_only(self):
        with pytest.raises(ValueError):
            self.spec.up_factors[0] = 0.5

    def test_dict_roundtrip(self):
        data = self.spec.to_dict()
        assert data["n"] == 2 and data["m"] == 2
        assert_equal_dict(LatticeMarketSpec.from_dict(data).to_dict(), data)

    def test_json_roundtrip(self, tmp_path):
        path = tmp_path / "spec.json"
        self.spec.to_json(path)
        assert_equal_dict(
            LatticeMarketSpec.from_json(path).to_dict(), self.spec.to_dict()
        )

    def test_equality_compares_arrays(self):
        assert self.spec == self.spec
        assert LatticeMarketSpec.from_dict(self.spec.to_dict()) == self.spec
        shifted = self.spec.to_dict()
        shifted["up_factors"] = [0.06, 0.04]
        assert LatticeMarketSpec.from_dict(shifted) != self.spec
        assert self.spec != self.spec.to_dict()

    def test_not_hashable(self):
        with pytest.raises(TypeError, match="unhashable"):
            hash(self.spec)

    def test_declared_dimensions_must_match(self):
        data = self.spec.to_dict()
        with pytest.raises(ArrayShapeError):
            LatticeMarketSpec.from_dict({**data, "n": 3})
        with pytest.raises(ArrayShapeError):
            LatticeMarketSpec.from_dict({**data, "m": 1})

    def test_missing_field(self):
        data = self.spec.to_dict()
        del data["markov_coeffs"]
        with pytest.raises(MissingValueError):
            LatticeMarketSpec.from_dict(data)

    @pytest.mark.parametrize(
        "changes,error",
        [
            ({"up_factors": [0.02]}, ArrayShapeError),
            ({"markov_coeffs": [[0.5], [0.5]]}, ArrayShapeError),
            ({"asset_correlation": [[0.0]]}, ArrayShapeError),
            ({"initial_history": [[0.02], [0.03]]}, ArrayShapeError),
            ({"up_factors": [1.2, 0.03]}, ParameterRangeError),
            ({"down_factors": [0.01, -0.01]}, ParameterRangeError),
            ({"asset_correlation": [[0.1, 0.5], [-0.5, 0.0]]}, ParameterRangeError),
            (
                {"initial_history": [[0.02, 0.01], [-0.01, 0.03]]},
                ParameterRangeError,
            ),
        ],
    )
    def test_invalid(self, changes, error):
        data = {
            "up_factors": self.spec.up_factors,
            "down_factors": self.spec.down_factors,
            "markov_coeffs": self.spec.markov_coeffs,
            "asset_correlation": self.spec.asset_correlation,
            "initial_history": self.spec.initial_history,
            **changes,
        }
        with pytest.raises(error):
            LatticeMarketSpec(**data)

    def test_validate_path(self):
        self.spec.validate_path(ReturnPath([[0.02, -0.01], [-0.015, 0.03]]))
        with pytest.raises(ParameterRangeError):
            self.spec.validate_path(ReturnPath([[0.02, 0.0]]))
        with pytest.raises(ArrayShapeError):
            self.spec.validate_path(ReturnPath([[0.02]]))


class TestConditionalProbabilities:
    def test_affine_model(self):
        spec = LatticeMarketSpec(
            [0.5, 0.5],
            [-0.5, -0.5],
            [[0.5, 0.2], [0.4, 0.0]],
            [[0.0, 0.1], [0.2, 0.0]],
            [[0.5], [-0.5]],
        )
        # 0.5 + 0.2 * 0.5 + 0.1 * (-0.5) and 0.4 + 0.2 * 0.5
        probs = conditional_up_probabilities(spec, [[0.5], [-0.5]])
        np.testing.assert_allclose(probs, [0.55, 0.5], atol=1e-15)

    def test_infeasible_probability(self):
        spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 1.2]], [[0.0]], [[0.5]])
        with pytest.raises(ModelInfeasibleError) as excinfo:
            conditional_up_probabilities(spec, [[0.5]])
        assert excinfo.value.asset == 0

    def test_rounding_is_clamped(self):
        spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 1.0]], [[0.0]], [[0.5]])
        assert conditional_up_probabilities(spec, [[0.5]]).tolist() == [1.0]

    def test_history_off_lattice(self):
        spec = constant_spec(0.5, -0.5, 0.5)
        with pytest.raises(ParameterRangeError):
            conditional_up_probabilities(spec, [[0.1]])
        with pytest.raises(ArrayShapeError):
            conditional_up_probabilities(spec, [[0.5, 0.5]])


class TestMarginalSchedule:
    def test_constant(self):
        schedule = marginal_probability_schedule(constant_spec(0.1, -0.1, 0.7), 5)
        assert schedule.horizon == 5
        np.testing.assert_allclose(schedule.probs, 0.7)

    def test_horizon(self):
        with pytest.raises(ParameterRangeError):
            marginal_probability_schedule(constant_spec(0.1, -0.1, 0.7), 0)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        k = 6 if n == 1 else 4
        spec = random_feasible_spec(rng, n, m)

        returns, probs = enumerate_path_array(spec, k)
        enumerated = np.einsum(
            "p,pjn->jn", probs, (returns == spec.up_factors).astype(float)
        )

        schedule = marginal_probability_schedule(spec, k)
        np.testing.assert_allclose(schedule.probs, enumerated, atol=1e-12)


class TestSampling:
    spec = LatticeMarketSpec(
        [0.05, 0.3],
        [-0.02, -0.25],
        [[0.6, 1.0], [0.45, 0.0]],
        [[0.0, 0.2], [0.0, 0.0]],
        [[0.05], [-0.25]],
    )

    def test_deterministic(self):
        a = sample_return_path(self.spec, 30, seed=11)
        b = sample_return_path(self.spec, 30, seed=11)
        np.testing.assert_array_equal(a.returns, b.returns)

    def test_seeds_differ(self):
        a = sample_return_path(self.spec, 30, seed=11)
        b = sample_return_path(self.spec, 30, seed=12)
        assert not np.array_equal(a.returns, b.returns)

    def test_on_lattice(self):
        path = sample_return_path(self.spec, 50, seed=3)
        assert path.returns.shape == (50, 2)
        self.spec.validate_path(path)

    def test_empty_horizon(self):
        assert sample_return_path(self.spec, 0, seed=3).returns.shape == (0, 2)

    def test_certain_moves(self):
        spec = constant_spec(0.1, -0.1, 1.0)
        path = sample_return_path(spec, 10, seed=5)
        np.testing.assert_array_equal(path.returns, 0.1)


class TestEnumeration:
    def test_probabilities_sum_to_one(self):
        spec = LatticeMarketSpec(
            [0.05, 0.3],
            [-0.02, -0.25],
            [[0.6, 1.0], [0.45, 0.0]],
            [[0.0, 0.2], [0.0, 0.0]],
            [[0.05], [-0.25]],
        )
        returns, probs = enumerate_path_array(spec, 3)
        assert returns.shape == (64, 3, 2)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.unique(returns.reshape(64, -1), axis=0).shape[0] == 64

    def test_path_probability(self):
        spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 0.2]], [[0.0]], [[0.5]])
        paths = {
            tuple(path.returns.ravel()): prob for path, prob in enumerate_paths(spec, 2)
        }
        # up first at 0.6, then up again at 0.6
        assert paths[(0.5, 0.5)] == pytest.approx(0.36)
        # down first at 0.4, then up at 0.4
        assert paths[(-0.5, 0.5)] == pytest.approx(0.16)

    def test_cap(self):
        spec = constant_spec(0.1, -0.1, 0.5)
        with pytest.raises(EnumerationSizeError):
            enumerate_path_array(spec, 11, cap=1024)


class TestReturnPath:
    @pytest.mark.parametrize("value", [-1.0, -1.5, np.inf, np.nan])
    def test_invalid(self, value):
        with pytest.raises(ParameterRangeError):
            ReturnPath([[0.1], [value]])

    def test_prices(self):
        path = ReturnPath([[0.1, -0.5], [-0.1, 1.0]])
        prices = simulate_prices(path, [100.0, 10.0])
        np.testing.assert_allclose(prices, [[100.0, 10.0], [110.0, 5.0], [99.0, 10.0]])

    def test_prices_invalid(self):
        path = ReturnPath([[0.1]])
        with pytest.raises(ParameterRangeError):
            simulate_prices(path, [0.0])
        with pytest.raises(ArrayShapeError):
            simulate_prices(path, [1.0, 2.0])

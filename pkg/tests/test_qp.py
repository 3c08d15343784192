import numpy as np
import pytest

from latrade.exceptions import ParameterRangeError
from latrade.qp import ActiveSetSolver, kkt_residual


@pytest.fixture(scope="class")
def solver(request):
    request.cls.solver = ActiveSetSolver()


@pytest.mark.usefixtures("solver")
class TestActiveSetSolver:
    def test_active_bound(self):
        # min (x - 2)^2 s.t. x <= 1
        result = self.solver.solve([[2.0]], [-4.0], [[1.0]], [1.0], [0.0])
        assert result.x == pytest.approx([1.0])
        assert result.multipliers == pytest.approx([2.0])
        assert result.active == [0]
        assert result.kkt_residual <= 1e-10

    def test_inactive_bound(self):
        result = self.solver.solve([[2.0]], [-4.0], [[1.0]], [5.0], [0.0])
        assert result.x == pytest.approx([2.0])
        assert result.multipliers == pytest.approx([0.0])
        assert result.active == []

    def test_box(self):
        # min |x - (2, -3)|^2 over the unit box
        A = np.vstack([np.eye(2), -np.eye(2)])
        b = np.ones(4)
        result = self.solver.solve(2.0 * np.eye(2), [-4.0, 6.0], A, b, [0.0, 0.0])
        assert result.x == pytest.approx([1.0, -1.0])
        assert sorted(result.active) == [0, 3]
        assert result.objective == pytest.approx(1.0 + 4.0 - 13.0)

    def test_equality(self):
        # min x1^2 + x2^2 s.t. x1 + x2 = 1, x1 <= 0.2
        result = self.solver.solve(
            2.0 * np.eye(2),
            [0.0, 0.0],
            [[1.0, 0.0]],
            [0.2],
            [0.0, 1.0],
            A_eq=[[1.0, 1.0]],
            b_eq=[1.0],
        )
        assert result.x == pytest.approx([0.2, 0.8])
        assert result.kkt_residual <= 1e-10

    def test_singular_hessian(self):
        # min (x1 + x2 - 1)^2 s.t. x1 <= 0.25; the level set is a line
        G = 2.0 * np.ones((2, 2))
        result = self.solver.solve(G, [-2.0, -2.0], [[1.0, 0.0]], [0.25], [0.0, 0.0])
        assert result.x.sum() == pytest.approx(1.0)
        assert result.x[0] <= 0.25 + 1e-12
        assert result.kkt_residual <= 1e-9

    def test_infeasible_start(self):
        with pytest.raises(ParameterRangeError):
            self.solver.solve([[2.0]], [-4.0], [[1.0]], [1.0], [3.0])

    @pytest.mark.parametrize("seed", range(20))
    def test_random_programs(self, seed):
        rng = np.random.default_rng(seed)
        n, p = 4, 8
        M = rng.normal(size=(n, n))
        G = M @ M.T + 0.1 * np.eye(n)
        c = rng.normal(size=n)
        A = rng.normal(size=(p, n))
        b = rng.uniform(0.1, 1.0, p)

        result = self.solver.solve(G, c, A, b, np.zeros(n))
        assert np.all(A @ result.x <= b + 1e-10)
        assert result.kkt_residual <= 1e-8

        # no feasible perturbation improves the objective
        for _ in range(200):
            candidate = result.x + 0.1 * rng.normal(size=n)
            if np.all(A @ candidate <= b):
                value = 0.5 * candidate @ G @ candidate + c @ candidate
                assert value >= result.objective - 1e-10


def test_kkt_residual_of_wrong_point():
    residual = kkt_residual(
        np.array([[2.0]]),
        np.array([-4.0]),
        np.array([0.5]),
        np.array([[1.0]]),
        np.array([1.0]),
        np.array([0.0]),
    )
    assert residual == pytest.approx(3.0)

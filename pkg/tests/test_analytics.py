import numpy as np
import pytest

from latrade.analytics import (
    CertificateStatus,
    bound_report,
    epsilon_star,
    exact_gain_loss_moments,
    expected_account_value,
    expected_positive_count,
    gain_loss_positivity_bound,
    phi_aux,
    phi_inverse,
    positivity_probability_bound,
    special_case_positivity,
    symmetric_lower_bound,
    symmetric_rpe_certificate,
    theta_aux,
    theta_aux_inverse,
    trend_rpe_certificate,
    worst_case_gain_loss_bound,
)
from latrade.exceptions import ParameterRangeError
from latrade.lattice import LatticeMarketSpec, marginal_probability_schedule
from latrade.montecarlo import simulate_gain_loss
from latrade.policy import PolicyTriple
from tests.helpers import constant_spec, random_feasible_spec, random_open_triple

HALF = PolicyTriple(0.5, [0.5], [1.0])


class TestExpectedPositiveCount:
    def test_sum_of_marginals(self):
        spec = LatticeMarketSpec([0.5], [-0.5], [[0.5, 0.2]], [[0.0]], [[0.5]])
        schedule = marginal_probability_schedule(spec, 3)
        # 0.6, 0.52, 0.504
        assert expected_positive_count(schedule, 0, 3) == pytest.approx(1.624)
        assert expected_positive_count(schedule, 0, 0) == 0.0

    def test_horizon_beyond_schedule(self):
        schedule = marginal_probability_schedule(constant_spec(0.1, -0.1, 0.5), 2)
        with pytest.raises(ParameterRangeError):
            expected_positive_count(schedule, 0, 3)


class TestWorstCaseBound:
    def test_symmetric_example(self):
        report = worst_case_gain_loss_bound(HALF, constant_spec(0.02, -0.02, 0.5), 2)
        assert report.expected_positive.tolist() == pytest.approx([1.0])
        assert report.bound == pytest.approx(-1e-4, rel=1e-9)

    def test_always_up(self):
        spec = constant_spec(0.1, -0.1, 1.0)
        report = worst_case_gain_loss_bound(HALF, spec, 2)
        # 0.5 (1.05^2 - 1) + 0.5 (0.95^2 - 1)
        assert report.bound == pytest.approx(0.0025)
        assert report.beta[0] == pytest.approx(1.05**2)
        assert report.gamma[0] == pytest.approx(0.95**2)

    @pytest.mark.parametrize(
        "triple,k",
        [
            (PolicyTriple(0.0, [0.5], [1.0]), 5),
            (PolicyTriple(1.0, [0.5], [1.0]), 5),
            (PolicyTriple(0.5, [0.0], [1.0]), 5),
            (PolicyTriple(0.5, [1.0], [1.0]), 5),
            (HALF, 1),
        ],
    )
    def test_domain(self, triple, k):
        with pytest.raises(ParameterRangeError):
            worst_case_gain_loss_bound(triple, constant_spec(0.1, -0.1, 0.6), k)

    @pytest.mark.parametrize("seed", range(50))
    def test_bounds_exact_expectation(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        k = 6 if n == 1 else 4
        spec = random_feasible_spec(rng, n, m)
        triple = random_open_triple(rng, n)

        bound = worst_case_gain_loss_bound(triple, spec, k).bound
        mean, _ = exact_gain_loss_moments(spec, triple, k)
        assert bound <= mean + 1e-12


class TestExactMoments:
    def test_single_stage(self):
        spec = constant_spec(0.1, -0.1, 0.7)
        triple = PolicyTriple(1.0, [1.0], [1.0])
        mean, var = exact_gain_loss_moments(spec, triple, 1)
        assert mean == pytest.approx(0.7 * 0.1 - 0.3 * 0.1)
        assert var == pytest.approx(0.7 * 0.3 * 0.2**2)

    def test_account_value(self):
        spec = constant_spec(0.1, -0.1, 0.7)
        triple = PolicyTriple(1.0, [1.0], [1.0], initial_capital=2.0)
        mean_v, var_v = expected_account_value(spec, triple, 2)
        assert mean_v == pytest.approx(2.0 * 1.04**2)
        assert var_v > 0.0


class TestPositivityBound:
    @pytest.mark.parametrize(
        "mean,var,theta,expected",
        [
            (1.0, 1.0, 0.0, 0.5),
            (2.0, 0.0, 0.5, 1.0),
            (2.0, 1.0, 0.5, 0.5),
            (1.0, 3.0, 0.0, 0.25),
        ],
    )
    def test_values(self, mean, var, theta, expected):
        assert positivity_probability_bound(mean, var, theta) == pytest.approx(expected)

    def test_theta_one(self):
        assert positivity_probability_bound(1.0, 1.0, 1.0) == 0.0

    @pytest.mark.parametrize(
        "mean,var,theta", [(0.0, 1.0, 0.5), (1.0, -1.0, 0.5), (1.0, 1.0, 1.5)]
    )
    def test_invalid(self, mean, var, theta):
        with pytest.raises(ParameterRangeError):
            positivity_probability_bound(mean, var, theta)

    def test_gain_loss_form(self):
        level, probability = gain_loss_positivity_bound(1.0, 1.0, 1.0, 0.5)
        assert level == pytest.approx(0.0)
        assert probability == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(5))
    def test_empirical_frequency(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_feasible_spec(rng, 1, 1)
        triple = random_open_triple(rng, 1)
        k = 10
        mean_v, var_v = expected_account_value(spec, triple, k)

        n_paths = 4_000
        final = simulate_gain_loss(triple, spec, k, n_paths, seed)[:, -1] + 1.0
        for theta in (0.0, 0.5, 0.9):
            bound = positivity_probability_bound(mean_v, var_v, theta)
            frequency = np.mean(final > theta * mean_v)
            se = np.sqrt(max(frequency * (1.0 - frequency), 1e-4) / n_paths)
            assert frequency >= bound - 3.0 * se


class TestSpecialCase:
    def test_margin(self):
        spec = constant_spec(0.1, -0.1, 1.0)
        verdict = special_case_positivity(spec, HALF, 2)
        assert verdict.status is CertificateStatus.HOLDS
        assert verdict.margins[0] == pytest.approx(0.005)

    def test_interior_trend(self):
        verdict = special_case_positivity(constant_spec(0.1, -0.05, 0.9), HALF, 10)
        assert verdict.holds
        assert verdict.note is None

    def test_balanced_market_fails(self):
        verdict = special_case_positivity(constant_spec(0.1, -0.1, 0.5), HALF, 10)
        assert verdict.status is CertificateStatus.FAILS
        assert verdict.margins[0] < 0.0

    def test_requires_half(self):
        with pytest.raises(ParameterRangeError):
            special_case_positivity(
                constant_spec(0.1, -0.1, 0.5), PolicyTriple(0.4, [0.5], [1.0]), 10
            )

    @pytest.mark.parametrize(
        "triple,k", [(PolicyTriple(0.5, [1.0], [1.0]), 10), (HALF, 1)]
    )
    def test_not_applicable(self, triple, k):
        verdict = special_case_positivity(constant_spec(0.1, -0.1, 0.5), triple, k)
        assert verdict.status is CertificateStatus.NOT_APPLICABLE
        assert verdict.note


class TestAuxiliaryFunctions:
    def test_epsilon_star_closed_form(self):
        la, lb = np.log(1.05), np.log(0.5)
        expected = np.log(-lb / la) / (la - lb)
        assert epsilon_star(1.05, 0.5) == pytest.approx(expected, abs=1e-9)
        assert epsilon_star(1.05, 0.5) == pytest.approx(3.577, abs=1e-3)

    def test_epsilon_star_clamped(self):
        assert epsilon_star(2.0, 0.5) == 0.0
        assert epsilon_star(3.0, 0.5) == 0.0

    @pytest.mark.parametrize("a,b", [(1.1, 0.5), (1.02, 0.9), (1.5, 0.2), (0.8, 1.01)])
    def test_epsilon_star_is_stationary(self, a, b):
        eps = epsilon_star(a, b)
        if eps > 0.0:
            derivative = a**eps * np.log(a) + b**eps * np.log(b)
            assert abs(derivative) <= 1e-10

    @pytest.mark.parametrize("a,b", [(1.0, 0.5), (1.1, 1.2), (-1.0, 0.5)])
    def test_theta_domain(self, a, b):
        with pytest.raises(ParameterRangeError):
            epsilon_star(a, b)

    @pytest.mark.parametrize("target", [2.5, 5.0, 40.0, 1e6])
    def test_theta_inverse(self, target):
        a, b = 1.05, 0.9
        eps = theta_aux_inverse(target, a, b)
        assert eps >= epsilon_star(a, b)
        assert theta_aux(eps, a, b) == pytest.approx(target, rel=1e-10)

    def test_theta_inverse_below_minimum(self):
        with pytest.raises(ParameterRangeError):
            theta_aux_inverse(1.0, 1.05, 0.9)

    @pytest.mark.parametrize("z", [0.5, 0.9, 1.1, 3.0])
    @pytest.mark.parametrize("t", [2.0, 2.001, 2.5, 10.0, 1e4])
    def test_phi_inverse(self, z, t):
        eps = phi_inverse(z, t)
        assert eps >= 0.0
        assert phi_aux(eps, z) == pytest.approx(t, abs=1e-12 * max(1.0, t))

    def test_phi_inverse_example(self):
        assert phi_inverse(2.0, 2.5) == pytest.approx(1.0)

    @pytest.mark.parametrize("z,t", [(1.0, 3.0), (0.0, 3.0), (2.0, 1.5)])
    def test_phi_inverse_domain(self, z, t):
        with pytest.raises(ParameterRangeError):
            phi_inverse(z, t)

    def test_phi_is_increasing(self):
        values = [phi_aux(eps, 1.3) for eps in np.linspace(0.0, 5.0, 50)]
        assert np.all(np.diff(values) > 0.0)


class TestTrendCertificate:
    def test_strong_trend_holds(self):
        spec = constant_spec(0.03, -0.01, 0.95)
        verdict = trend_rpe_certificate(spec, HALF, 252)
        assert verdict.status is CertificateStatus.HOLDS
        assert verdict.note == "upward trend"
        assert np.all(verdict.thresholds > verdict.epsilon_stars)
        assert verdict.cross_check > 0.0

    def test_weak_trend_fails(self):
        spec = constant_spec(0.03, -0.01, 0.6)
        verdict = trend_rpe_certificate(spec, HALF, 252)
        assert verdict.status is CertificateStatus.FAILS
        assert verdict.margins[0] < 0.0

    def test_downward_trend(self):
        spec = constant_spec(0.01, -0.03, 0.05)
        verdict = trend_rpe_certificate(spec, HALF, 252)
        assert verdict.note == "downward trend"
        assert verdict.holds

    @pytest.mark.parametrize(
        "spec,triple",
        [
            (constant_spec(0.02, -0.02, 0.9), HALF),
            (constant_spec(0.03, -0.01, 0.9), PolicyTriple(0.4, [0.5], [1.0])),
            (
                LatticeMarketSpec(
                    [0.03, 0.01],
                    [-0.01, -0.03],
                    [[0.9, 0.0], [0.1, 0.0]],
                    np.zeros((2, 2)),
                    [[0.03], [0.01]],
                ),
                PolicyTriple(0.5, [0.5, 0.5], [0.5, 0.5]),
            ),
        ],
    )
    def test_not_applicable(self, spec, triple):
        verdict = trend_rpe_certificate(spec, triple, 252)
        assert verdict.status is CertificateStatus.NOT_APPLICABLE

    def test_sound_against_enumeration(self):
        spec = constant_spec(0.5, -0.3, 0.95)
        verdict = trend_rpe_certificate(spec, HALF, 8)
        assert verdict.holds
        mean, _ = exact_gain_loss_moments(spec, HALF, 8)
        assert mean > 0.0


class TestSymmetricCertificate:
    def test_holds_inside_window(self):
        spec = constant_spec(0.5, -0.5, 0.8)
        verdict = symmetric_rpe_certificate(spec, HALF, 6)
        assert verdict.status is CertificateStatus.HOLDS
        assert verdict.thresholds[0] < verdict.epsilons[0] < verdict.upper
        assert symmetric_lower_bound(spec, HALF, 6) > 0.0
        mean, _ = exact_gain_loss_moments(spec, HALF, 6)
        assert mean > 0.0

    def test_no_trend_fails(self):
        verdict = symmetric_rpe_certificate(constant_spec(0.5, -0.5, 0.5), HALF, 6)
        assert verdict.status is CertificateStatus.FAILS

    def test_window_edge(self):
        spec = constant_spec(0.02, -0.02, 0.5)
        verdict = symmetric_rpe_certificate(spec, HALF, 252)
        assert verdict.thresholds[0] == pytest.approx(7.954, abs=1e-2)
        assert verdict.upper == 126.0

    def test_lower_bound_without_trend(self):
        spec = constant_spec(0.02, -0.02, 0.5)
        assert symmetric_lower_bound(spec, HALF, 2) == pytest.approx(-1e-4, rel=1e-9)
        bound = worst_case_gain_loss_bound(HALF, spec, 2).bound
        assert symmetric_lower_bound(spec, HALF, 2) == pytest.approx(bound, rel=1e-9)

    @pytest.mark.parametrize(
        "spec,triple",
        [
            (constant_spec(0.03, -0.02, 0.8), HALF),
            (constant_spec(0.5, -0.5, 0.8), PolicyTriple(0.6, [0.5], [1.0])),
            (constant_spec(0.5, -0.5, 0.8), HALF.with_rates(risk_free_rate=0.001)),
        ],
    )
    def test_hypotheses(self, spec, triple):
        verdict = symmetric_rpe_certificate(spec, triple, 6)
        assert verdict.status is CertificateStatus.NOT_APPLICABLE
        with pytest.raises(ParameterRangeError):
            symmetric_lower_bound(spec, triple, 6)


class TestCertificateSoundness:
    @pytest.mark.parametrize("seed", range(40))
    def test_certificates_imply_positive_expectation(self, seed):
        rng = np.random.default_rng(seed)
        k = 6
        if seed % 2:
            u = rng.uniform(0.05, 0.5)
            p = rng.uniform(0.0, 0.2) if rng.random() < 0.5 else rng.uniform(0.8, 1.0)
            spec = constant_spec(u, -u, p)
        else:
            u, d = rng.uniform(0.05, 0.5), rng.uniform(-0.5, -0.05)
            spec = constant_spec(u, d, rng.uniform(0.0, 1.0))
        triple = PolicyTriple(0.5, [rng.uniform(0.05, 0.95)], [1.0])

        report = bound_report(spec, triple, k)
        if any(verdict.holds for verdict in report.certificates):
            mean, _ = exact_gain_loss_moments(spec, triple, k)
            assert mean > 0.0
            assert report.bound > 0.0


class TestBoundReport:
    def test_collects_certificates(self):
        report = bound_report(constant_spec(0.5, -0.5, 0.8), HALF, 6)
        names = [verdict.name for verdict in report.certificates]
        assert names == ["special_case", "trend_rpe", "symmetric_rpe"]
        assert report.symmetric_bound == pytest.approx(
            symmetric_lower_bound(constant_spec(0.5, -0.5, 0.8), HALF, 6)
        )

    def test_to_dict(self):
        report = bound_report(constant_spec(0.03, -0.01, 0.95), HALF, 20)
        data = report.to_dict()
        statuses = {cert["name"]: cert["status"] for cert in data["certificates"]}
        assert statuses["symmetric_rpe"] == "not_applicable"
        assert statuses["trend_rpe"] in {"holds", "fails"}
        assert "symmetric_bound" not in data

    def test_alpha_not_half(self):
        triple = PolicyTriple(0.7, [0.5], [1.0])
        report = bound_report(constant_spec(0.03, -0.01, 0.95), triple, 20)
        assert all(
            verdict.status is CertificateStatus.NOT_APPLICABLE
            for verdict in report.certificates
        )

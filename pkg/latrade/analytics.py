"""
Closed-form robustness analytics for multi-double linear policies.

All large powers are evaluated as ``exp(e * log(x))``. Certificates are sufficient
conditions only: a certificate whose hypotheses are not met reports
``NOT_APPLICABLE`` rather than ``FAILS``.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from latrade.base import LatBase, LatEnum
from latrade.exceptions import ArrayShapeError, ParameterRangeError
from latrade.lattice import (
    DEFAULT_ENUMERATION_CAP,
    LatticeMarketSpec,
    ProbabilitySchedule,
    enumerate_path_array,
    marginal_probability_schedule,
)
from latrade.policy import PolicyTriple, run_policy_batch
from latrade.typing.numpy_types import NDArrayFloat
from latrade.utils.rootfind import expand_bracket, newton_bisection

logger = logging.getLogger(__name__)

HALF_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12
ROOT_TOLERANCE = 1e-12


class CertificateStatus(LatEnum):
    """Outcome of a sufficient-condition certificate."""

    HOLDS = "holds"
    FAILS = "fails"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True, eq=False)
class CertificateVerdict(LatBase):
    """Verdict of one certificate.

    Attributes
    ----------
    name : str
        Certificate name.
    status : CertificateStatus
        Whether the certificate holds, fails, or does not apply.
    margins : np.ndarray, optional
        Per-asset margin; the certificate holds iff every margin is positive.
    epsilons : np.ndarray, optional
        Per-asset trend strength ``|E[H_i(k)] - k/2|`` where relevant.
    thresholds : np.ndarray, optional
        Per-asset lower threshold the trend strength must exceed.
    note : str, optional
        Why the certificate does not apply, or extra context.
    """

    name: str
    status: CertificateStatus
    margins: Optional[np.ndarray] = None
    epsilons: Optional[np.ndarray] = None
    thresholds: Optional[np.ndarray] = None
    epsilon_stars: Optional[np.ndarray] = None
    upper: Optional[float] = None
    cross_check: Optional[float] = None
    note: Optional[str] = None

    @property
    def holds(self) -> bool:
        return self.status is CertificateStatus.HOLDS

    @classmethod
    def not_applicable(cls, name: str, note: str) -> CertificateVerdict:
        return cls(name=name, status=CertificateStatus.NOT_APPLICABLE, note=note)


@dataclass(frozen=True, eq=False)
class BoundReport(LatBase):
    """Worst-case expected gain-loss bound and the certificates evaluated with it.

    Attributes
    ----------
    horizon : int
        ``k``.
    expected_positive : np.ndarray
        (n,) ``E[H_i(k)]``.
    log_beta, log_gamma : np.ndarray
        (n,) logarithms of the long and short growth factors.
    beta, gamma : np.ndarray
        (n,) growth factors.
    bound : float
        Lower bound on the expected gain-loss ``E[G(k)]``.
    certificates : list of CertificateVerdict
    symmetric_bound : float, optional
        Closed-form lower bound in a symmetric market, when applicable.
    """

    horizon: int
    expected_positive: np.ndarray
    log_beta: np.ndarray
    log_gamma: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    bound: float
    certificates: list = field(default_factory=list)
    symmetric_bound: Optional[float] = None


def expected_positive_count(
    schedule: ProbabilitySchedule, asset: int, k: int
) -> float:
    """Expected number of up-moves of `asset` over stages ``0..k-1``.

    >>> schedule = ProbabilitySchedule([[0.6], [0.52]])
    >>> round(expected_positive_count(schedule, 0, 2), 12)
    1.12
    """
    if not 0 <= k <= schedule.horizon:
        raise ParameterRangeError("k", k, f"[0, {schedule.horizon}]")
    return float(np.sum(schedule.probs[:k, asset]))


def _expected_positive_counts(spec: LatticeMarketSpec, k: int) -> NDArrayFloat:
    schedule = marginal_probability_schedule(spec, k)
    return np.array([expected_positive_count(schedule, i, k) for i in range(spec.n)])


def _check_triple(spec: LatticeMarketSpec, triple: PolicyTriple) -> None:
    if triple.n_assets != spec.n:
        raise ArrayShapeError(
            array_name="weights",
            array_shape=triple.weights.shape,
            expected_shape=(spec.n,),
            extra=" (policy and market asset counts differ)",
        )


def _weights_open(triple: PolicyTriple) -> bool:
    return bool(np.all((triple.weights > 0.0) & (triple.weights < 1.0)))


def _is_half(alpha: float) -> bool:
    return abs(alpha - 0.5) <= HALF_TOLERANCE


def worst_case_gain_loss_bound(
    triple: PolicyTriple, spec: LatticeMarketSpec, k: int
) -> BoundReport:
    """Lower bound on the expected gain-loss ``E[G(k)]`` of `triple`.

    ``sum_i v_i V0 (alpha (beta_i - 1) + (1 - alpha) (gamma_i - 1))`` with

        ``beta_i = ((1 + r_f) + w_i (u_i - r_f)) ** E[H_i]
        * ((1 + r_f) + w_i (d_i - r_f)) ** (k - E[H_i])``

        ``gamma_i = (1 - w_i u_i) ** E[H_i] * (1 - w_i d_i) ** (k - E[H_i])``

    Raises
    ------
    ParameterRangeError
        Unless ``alpha`` and every ``w_i`` lie in (0, 1) and ``k > 1``.
    """
    _check_triple(spec, triple)
    if not 0.0 < triple.alpha < 1.0:
        raise ParameterRangeError("alpha", triple.alpha, "(0, 1)")
    if not _weights_open(triple):
        raise ParameterRangeError("weights", triple.weights.tolist(), "(0, 1)")
    if k <= 1:
        raise ParameterRangeError("k", k, "(1, inf)")

    u, d = spec.up_factors, spec.down_factors
    w, rf = triple.weights, triple.risk_free_rate
    expected_up = _expected_positive_counts(spec, k)

    log_beta = expected_up * np.log((1.0 + rf) + w * (u - rf)) + (
        k - expected_up
    ) * np.log((1.0 + rf) + w * (d - rf))
    log_gamma = expected_up * np.log1p(-w * u) + (k - expected_up) * np.log1p(-w * d)

    capital = triple.allocation * triple.initial_capital
    bound = float(
        np.sum(
            capital
            * (
                triple.alpha * np.expm1(log_beta)
                + (1.0 - triple.alpha) * np.expm1(log_gamma)
            )
        )
    )

    with np.errstate(over="ignore"):
        beta, gamma = np.exp(log_beta), np.exp(log_gamma)

    return BoundReport(
        horizon=k,
        expected_positive=expected_up,
        log_beta=log_beta,
        log_gamma=log_gamma,
        beta=beta,
        gamma=gamma,
        bound=bound,
    )


def exact_gain_loss_moments(
    spec: LatticeMarketSpec,
    triple: PolicyTriple,
    k: int,
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[float, float]:
    """Exact mean and variance of ``G(k)`` by enumerating every lattice path."""
    _check_triple(spec, triple)
    returns, probs = enumerate_path_array(spec, k, cap=cap)
    total_values, _ = run_policy_batch(triple, returns)
    gain_loss = total_values[:, -1] - triple.initial_capital
    mean = float(probs @ gain_loss)
    var = float(probs @ (gain_loss - mean) ** 2)
    return mean, var


def expected_account_value(
    spec: LatticeMarketSpec,
    triple: PolicyTriple,
    k: int,
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[float, float]:
    """Exact ``E[V(k)]`` and ``var(V(k))``."""
    mean_G, var_G = exact_gain_loss_moments(spec, triple, k, cap=cap)
    return mean_G + triple.initial_capital, var_G


def positivity_probability_bound(
    mean_V: float, var_V: float, theta_threshold: float
) -> float:
    """Lower bound on ``P(V > theta E[V])`` from the first two moments of ``V``.

    Examples
    --------
    >>> positivity_probability_bound(1.0, 1.0, 0.0)
    0.5
    >>> positivity_probability_bound(1.0, 0.0, 0.5)
    1.0
    """
    if not mean_V > 0.0:
        raise ParameterRangeError("mean_V", mean_V, "(0, inf)")
    if not var_V >= 0.0:
        raise ParameterRangeError("var_V", var_V, "[0, inf)")
    if not 0.0 <= theta_threshold <= 1.0:
        raise ParameterRangeError("theta_threshold", theta_threshold, "[0, 1]")

    numerator = (1.0 - theta_threshold) ** 2 * mean_V**2
    if numerator == 0.0:
        return 0.0
    return numerator / (var_V + numerator)


def gain_loss_positivity_bound(
    mean_G: float, var_G: float, initial_capital: float, theta_threshold: float
) -> tuple[float, float]:
    """Gain-loss form of :func:`positivity_probability_bound`.

    Returns ``(level, probability)`` such that
    ``P(G > level) >= probability`` with ``level = theta E[G] - (1 - theta) V0``.
    """
    level = theta_threshold * mean_G - (1.0 - theta_threshold) * initial_capital
    probability = positivity_probability_bound(
        mean_G + initial_capital, var_G, theta_threshold
    )
    return level, probability


def _rf_free_log_growth(
    spec: LatticeMarketSpec, triple: PolicyTriple, expected_up: np.ndarray, k: int
) -> tuple[NDArrayFloat, NDArrayFloat]:
    u, d, w = spec.up_factors, spec.down_factors, triple.weights
    log_long = expected_up * np.log1p(w * u) + (k - expected_up) * np.log1p(w * d)
    log_short = expected_up * np.log1p(-w * u) + (k - expected_up) * np.log1p(-w * d)
    return log_long, log_short


def special_case_positivity(
    spec: LatticeMarketSpec, triple: PolicyTriple, k: int
) -> CertificateVerdict:
    """Positivity of the worst-case bound for ``alpha = 1/2``.

    Holds when every ``E[H_i(k)]`` is 0 or ``k``, or when for every asset, with
    ``h = E[H_i(k)]``,

        ``(1 + w u)^h (1 + w d)^(k - h) + (1 - w u)^h (1 - w d)^(k - h) > 2``.

    Margins are the left side minus 2, evaluated without the risk-free rate (which
    only raises the long factor).
    """
    name = "special_case"
    _check_triple(spec, triple)
    if not _is_half(triple.alpha):
        raise ParameterRangeError("alpha", triple.alpha, "{1/2}")
    if not _weights_open(triple):
        return CertificateVerdict.not_applicable(name, "weights must lie in (0, 1)")
    if k <= 1:
        return CertificateVerdict.not_applicable(name, "horizon must exceed 1")

    expected_up = _expected_positive_counts(spec, k)
    log_long, log_short = _rf_free_log_growth(spec, triple, expected_up, k)
    margins = np.expm1(log_long) + np.expm1(log_short)

    tol = 1e-9 * k
    extreme = (np.abs(expected_up) <= tol) | (np.abs(expected_up - k) <= tol)
    if np.all(extreme):
        status, note = CertificateStatus.HOLDS, "every E[H_i] is 0 or k"
    elif np.all(margins > 0.0):
        status, note = CertificateStatus.HOLDS, None
    else:
        status, note = CertificateStatus.FAILS, None

    return CertificateVerdict(
        name=name,
        status=status,
        margins=margins,
        epsilons=np.abs(expected_up - k / 2.0),
        note=note,
    )


def theta_aux(eps: float, a: float, b: float) -> float:
    """``a ** eps + b ** eps``, strictly convex in `eps` for ``a, b != 1``."""
    return float(np.exp(eps * np.log(a)) + np.exp(eps * np.log(b)))


def _theta_aux_derivatives(eps: float, la: float, lb: float) -> tuple[float, float]:
    """First and second derivatives of :func:`theta_aux` from ``log a, log b``."""
    pa, pb = np.exp(eps * la), np.exp(eps * lb)
    return float(pa * la + pb * lb), float(pa * la * la + pb * lb * lb)


def _check_theta_domain(a: float, b: float) -> None:
    if not (a > 0.0 and b > 0.0 and (a - 1.0) * (b - 1.0) < 0.0):
        raise ParameterRangeError(
            "(a, b)", (a, b), "a > 1 > b > 0 or b > 1 > a > 0"
        )


def epsilon_star(a: float, b: float) -> float:
    """Minimizer over ``eps >= 0`` of :func:`theta_aux`.

    Solves ``a**eps log a + b**eps log b = 0`` by safeguarded Newton-bisection and
    clamps at 0 when the derivative is already nonnegative there.

    >>> epsilon_star(2.0, 0.5)
    0.0
    """
    _check_theta_domain(a, b)
    la, lb = float(np.log(a)), float(np.log(b))
    if la + lb >= 0.0:
        return 0.0

    def derivative(eps: float) -> tuple[float, float]:
        return _theta_aux_derivatives(eps, la, lb)

    lo, hi = expand_bracket(derivative, 0.0, 1.0)
    return newton_bisection(derivative, lo, hi, tol=ROOT_TOLERANCE)


def theta_aux_inverse(target: float, a: float, b: float) -> float:
    """The ``eps >= epsilon_star(a, b)`` with ``theta_aux(eps, a, b) = target``."""
    _check_theta_domain(a, b)
    la, lb = float(np.log(a)), float(np.log(b))
    eps_min = epsilon_star(a, b)
    floor = theta_aux(eps_min, a, b)
    if target < floor:
        raise ParameterRangeError(
            "target", target, f"[{floor}, inf) (the minimum of theta_aux)"
        )
    if target == floor:
        return eps_min

    def excess(eps: float) -> tuple[float, float]:
        value = np.exp(eps * la) + np.exp(eps * lb) - target
        slope, _ = _theta_aux_derivatives(eps, la, lb)
        return float(value), slope

    lo, hi = expand_bracket(excess, eps_min, eps_min + 1.0)
    return newton_bisection(excess, lo, hi, tol=ROOT_TOLERANCE)


def phi_aux(eps: float, z: float) -> float:
    """``z ** eps + z ** -eps``, strictly increasing in ``eps > 0``.

    >>> round(phi_aux(1.0, 2.0), 12)
    2.5
    """
    return float(2.0 * np.cosh(eps * np.log(z)))


def phi_inverse(z: float, t: float) -> float:
    """The ``eps >= 0`` with ``phi_aux(eps, z) = t``, in closed form.

    ``y + 1/y = t`` gives ``y = (t + sqrt(t**2 - 4)) / 2`` and
    ``eps = log(y) / |log(z)|``.

    >>> phi_inverse(2.0, 2.5)
    1.0
    """
    if not (z > 0.0 and z != 1.0):
        raise ParameterRangeError("z", z, "(0, 1) or (1, inf)")
    if not t >= 2.0:
        raise ParameterRangeError("t", t, "[2, inf)")
    y = 0.5 * (t + np.sqrt(t * t - 4.0))
    return float(np.log(y) / abs(np.log(z)))


def trend_rpe_certificate(
    spec: LatticeMarketSpec, triple: PolicyTriple, k: int
) -> CertificateVerdict:
    """Robust positive expectation in a market where every asset trends the same way.

    Upward trend (``u_i > -d_i`` for all ``i``): with ``E[H_i] = k/2 + eps_i``,
    ``a_i = (1 + w u) / (1 + w d)``, ``b_i = (1 - w u) / (1 - w d)`` and the
    conservative base ``B_i = (1 - w u)(1 - w d)``, the bound is positive when
    ``eps_i > theta_aux_inverse(2 / B_i ** (k/2), a_i, b_i)`` for every asset.

    Downward trend (``u_i < -d_i`` for all ``i``) mirrors this with
    ``E[H_i] = k/2 - eps_i``, ``a_i = (1 + w d) / (1 + w u)``,
    ``b_i = (1 - w d) / (1 - w u)`` and ``B_i = (1 + w u)(1 + w d)``.
    """
    name = "trend_rpe"
    _check_triple(spec, triple)
    if not _is_half(triple.alpha):
        return CertificateVerdict.not_applicable(name, "alpha must be 1/2")
    if not _weights_open(triple):
        return CertificateVerdict.not_applicable(name, "weights must lie in (0, 1)")
    if k <= 1:
        return CertificateVerdict.not_applicable(name, "horizon must exceed 1")

    u, d, w = spec.up_factors, spec.down_factors, triple.weights
    drift = u + d
    if np.all(drift > 0.0):
        upward = True
    elif np.all(drift < 0.0):
        upward = False
    else:
        return CertificateVerdict.not_applicable(
            name, "assets do not share a strict trend direction"
        )

    expected_up = _expected_positive_counts(spec, k)
    if upward:
        epsilons = expected_up - k / 2.0
        a = (1.0 + w * u) / (1.0 + w * d)
        b = (1.0 - w * u) / (1.0 - w * d)
        log_base = np.log1p(-w * u) + np.log1p(-w * d)
    else:
        epsilons = k / 2.0 - expected_up
        a = (1.0 + w * d) / (1.0 + w * u)
        b = (1.0 - w * d) / (1.0 - w * u)
        log_base = np.log1p(w * u) + np.log1p(w * d)

    targets = 2.0 * np.exp(-0.5 * k * log_base)
    thresholds = np.array(
        [theta_aux_inverse(t, ai, bi) for t, ai, bi in zip(targets, a, b)]
    )
    stars = np.array([epsilon_star(ai, bi) for ai, bi in zip(a, b)])
    margins = epsilons - thresholds
    holds = bool(np.all(margins > 0.0))
    status = CertificateStatus.HOLDS if holds else CertificateStatus.FAILS

    cross_check = worst_case_gain_loss_bound(
        triple.with_rates(risk_free_rate=0.0), spec, k
    ).bound
    if status is CertificateStatus.HOLDS and cross_check <= 0.0:
        logger.warning(
            "Trend certificate holds but the worst-case bound is %.3e", cross_check
        )

    return CertificateVerdict(
        name=name,
        status=status,
        margins=margins,
        epsilons=epsilons,
        thresholds=thresholds,
        epsilon_stars=stars,
        cross_check=cross_check,
        note="upward trend" if upward else "downward trend",
    )


def _symmetric_hypotheses(
    spec: LatticeMarketSpec, triple: PolicyTriple
) -> Optional[str]:
    """Reason the symmetric-market results do not apply, or None."""
    if not _is_half(triple.alpha):
        return "alpha must be 1/2"
    if triple.risk_free_rate != 0.0:
        return "risk-free rate must be 0"
    if not np.allclose(
        spec.up_factors, -spec.down_factors, rtol=SYMMETRY_TOLERANCE, atol=0.0
    ):
        return "market is not symmetric (u_i = -d_i)"
    return None


def symmetric_rpe_certificate(
    spec: LatticeMarketSpec, triple: PolicyTriple, k: int
) -> CertificateVerdict:
    """Robust positive expectation in a symmetric market.

    Holds when every ``eps_i = |E[H_i] - k/2|`` lies in the open window
    ``(phi_inverse(z_i, 2 / (1 - w^2 d^2) ** (k/2)), k/2)`` with
    ``z_i = (1 - w d) / (1 + w d)``.
    """
    name = "symmetric_rpe"
    _check_triple(spec, triple)
    reason = _symmetric_hypotheses(spec, triple)
    if reason is None and not _weights_open(triple):
        reason = "weights must lie in (0, 1)"
    if reason is None and k <= 1:
        reason = "horizon must exceed 1"
    if reason is not None:
        return CertificateVerdict.not_applicable(name, reason)

    d, w = spec.down_factors, triple.weights
    expected_up = _expected_positive_counts(spec, k)
    epsilons = np.abs(expected_up - k / 2.0)
    z = (1.0 - w * d) / (1.0 + w * d)
    targets = 2.0 * np.exp(-0.5 * k * np.log1p(-((w * d) ** 2)))
    lower = np.array([phi_inverse(zi, t) for zi, t in zip(z, targets)])

    upper = k / 2.0
    margins = np.minimum(epsilons - lower, upper - epsilons)
    holds = bool(np.all(margins > 0.0))
    status = CertificateStatus.HOLDS if holds else CertificateStatus.FAILS
    return CertificateVerdict(
        name=name,
        status=status,
        margins=margins,
        epsilons=epsilons,
        thresholds=lower,
        upper=upper,
    )


def symmetric_lower_bound(
    spec: LatticeMarketSpec, triple: PolicyTriple, k: int
) -> float:
    """Closed-form worst-case expected gain-loss in a symmetric market.

    ``sum_i V_i0 / 2 ((1 - w^2 d^2) ** (k/2) phi_aux(eps_i, z_i) - 2)``, which at
    ``eps_i = 0`` is ``V_i0 ((1 - w^2 d^2) ** (k/2) - 1)``.

    Raises
    ------
    ParameterRangeError
        If ``alpha != 1/2``, ``r_f != 0`` or the market is not symmetric.
    """
    _check_triple(spec, triple)
    reason = _symmetric_hypotheses(spec, triple)
    if reason is not None:
        raise ParameterRangeError(
            "spec/triple",
            "symmetric-market hypotheses",
            "their domain",
            extra=f": {reason}",
        )

    d, w = spec.down_factors, triple.weights
    expected_up = _expected_positive_counts(spec, k)
    epsilons = np.abs(expected_up - k / 2.0)
    log_base = 0.5 * k * np.log1p(-((w * d) ** 2))
    log_z = np.abs(np.log1p(-w * d) - np.log1p(w * d))
    # B^{k/2} phi(eps) - 2 without cancellation
    excess = np.expm1(log_base + epsilons * log_z) + np.expm1(
        log_base - epsilons * log_z
    )
    capital = triple.allocation * triple.initial_capital
    return float(np.sum(0.5 * capital * excess))


def bound_report(spec: LatticeMarketSpec, triple: PolicyTriple, k: int) -> BoundReport:
    """Worst-case bound together with every certificate that can be evaluated."""
    report = worst_case_gain_loss_bound(triple, spec, k)

    if _is_half(triple.alpha):
        special = special_case_positivity(spec, triple, k)
    else:
        special = CertificateVerdict.not_applicable("special_case", "alpha must be 1/2")

    certificates = [
        special,
        trend_rpe_certificate(spec, triple, k),
        symmetric_rpe_certificate(spec, triple, k),
    ]
    symmetric_bound = (
        symmetric_lower_bound(spec, triple, k)
        if _symmetric_hypotheses(spec, triple) is None
        else None
    )
    for verdict in certificates:
        logger.info("Certificate %s: %s", verdict.name, verdict.status.get_value())

    return dataclasses.replace(
        report, certificates=certificates, symmetric_bound=symmetric_bound
    )

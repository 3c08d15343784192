"""Safeguarded Newton-Raphson with bisection fallback for scalar roots."""
import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

FuncWithDerivative = Callable[[float], tuple[float, float]]


def expand_bracket(
    func: FuncWithDerivative,
    lo: float,
    hi: float,
    *,
    max_doublings: int = 200,
) -> tuple[float, float]:
    """Grow ``[lo, hi]`` to the right by doubling its width until `func` changes
    sign on it.

    `func` must be increasing on the region searched (the auxiliary functions this
    is used for are convex to the right of their minimum).

    Raises
    ------
    ValueError
        If no sign change is found after `max_doublings` doublings.
    """
    f_lo, _ = func(lo)
    if f_lo > 0.0:
        raise ValueError(f"Function is already positive at lower end {lo}.")

    width = max(hi - lo, 1.0)
    for _ in range(max_doublings):
        f_hi, _ = func(hi)
        if f_hi >= 0.0:
            return lo, hi
        lo = hi
        width *= 2.0
        hi = lo + width

    raise ValueError("Could not bracket a root by doubling.")


def newton_bisection(
    func: FuncWithDerivative,
    x1: float,
    x2: float,
    *,
    tol: float = 1e-12,
    maxit: int = 200,
) -> float:
    """Find the root of `func` bracketed between `x1` and `x2`.

    Newton steps are taken while they stay inside the bracket and shrink it fast
    enough; otherwise the bracket is bisected. Iteration stops when the step, the
    bracket, or ``|f|`` drops below `tol`.

    Parameters
    ----------
    func : callable
        Returns ``(f, df)`` at a point.
    x1, x2 : float
        Bracket endpoints. ``f(x1)`` and ``f(x2)`` must not share a sign.
    tol : float
        Absolute tolerance on the root and on ``|f|``.
    maxit : int
        Maximum number of iterations.

    Returns
    -------
    float
        The root.

    Examples
    --------
    >>> round(newton_bisection(lambda x: (x * x - 2.0, 2.0 * x), 0.0, 2.0), 12)
    1.414213562373
    """
    f1, _ = func(x1)
    f2, _ = func(x2)
    if f1 == 0.0:
        return x1
    if f2 == 0.0:
        return x2
    if f1 * f2 > 0.0:
        raise ValueError(f"Root is not bracketed by [{x1}, {x2}].")

    # Orient the bracket so f(xlo) < 0 < f(xhi)
    if f1 < 0.0:
        xlo, xhi = x1, x2
    else:
        xlo, xhi = x2, x1

    x = 0.5 * (x1 + x2)
    dxold = abs(x2 - x1)
    dx = dxold
    f, df = func(x)

    for _ in range(maxit):
        if abs(f) <= tol:
            break
        # Bisect if Newton would leave the bracket or is not converging fast enough
        if ((x - xhi) * df - f) * ((x - xlo) * df - f) > 0.0 or abs(
            2.0 * f
        ) > abs(dxold * df):
            dxold = dx
            dx = 0.5 * (xhi - xlo)
            x = xlo + dx
            if xlo == x:
                break
        else:
            dxold = dx
            dx = f / df
            temp = x
            x = x - dx
            if temp == x:
                break

        if abs(dx) < tol:
            break

        f, df = func(x)
        if f < 0.0:
            xlo = x
        else:
            xhi = x
    else:
        logger.warning(
            "newton_bisection reached maxit=%d with |f|=%.3e", maxit, abs(f)
        )

    return float(x) if np.isfinite(x) else float("nan")

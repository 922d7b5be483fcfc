"""Scalar quadrature and root finding used to build the stretch profile."""
import logging
from collections.abc import Callable

from .exceptions import DomainError, NumericError

logger = logging.getLogger('nonsqueeze')


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-13,
    max_depth: int = 50,
) -> tuple[float, float]:
    """
    Adaptive Simpson's rule with Richardson correction.

    Returns (integral, error_estimate). ``tol`` is absolute and is halved on
    every subdivision.
    """
    if a == b:
        return 0.0, 0.0
    if a > b:
        value, error = adaptive_simpson(f, b, a, tol, max_depth)
        return -value, error

    def _simpson(fa, fm, fb, h):
        return h / 3.0 * (fa + 4.0 * fm + fb)

    def _adaptive(a, b, fa, fm, fb, s_whole, depth, tol):
        m = (a + b) / 2.0
        h = (b - a) / 2.0
        flm = f((a + m) / 2.0)
        frm = f((m + b) / 2.0)

        s_left = _simpson(fa, flm, fm, h / 2.0)
        s_right = _simpson(fm, frm, fb, h / 2.0)
        s_combined = s_left + s_right
        error_estimate = (s_combined - s_whole) / 15.0

        if depth >= max_depth or abs(error_estimate) < tol:
            return s_combined + error_estimate, abs(error_estimate)

        left, left_error = _adaptive(a, m, fa, flm, fm, s_left, depth + 1, tol / 2.0)
        right, right_error = _adaptive(m, b, fm, frm, fb, s_right, depth + 1, tol / 2.0)
        return left + right, left_error + right_error

    fa, fb = f(a), f(b)
    fm = f((a + b) / 2.0)
    s_whole = _simpson(fa, fm, fb, (b - a) / 2.0)
    return _adaptive(a, b, fa, fm, fb, s_whole, 0, tol)


def bisect_increasing(
    func: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    rel_tol: float = 1e-12,
    max_steps: int = 200,
) -> float:
    """
    Solve func(x) = target for a strictly increasing func on (lo, hi).

    Stops on a relative residual below ``rel_tol`` or once the bracket has
    shrunk to floating-point resolution, whichever comes first.
    """
    if not lo < hi:
        raise DomainError(f"Empty bracket [{lo}, {hi}].")
    scale = max(abs(target), 1.0)
    for step in range(max_steps):
        mid = 0.5 * (lo + hi)
        residual = func(mid) - target
        logger.debug(f"bisection step {step}: x={mid!r} residual={residual:.3e}")
        if abs(residual) <= rel_tol * scale:
            return mid
        if residual < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4.0 * abs(mid) * 2.0 ** -52:
            return 0.5 * (lo + hi)
    raise NumericError(f"Bisection did not reach relative residual {rel_tol} in {max_steps} steps.")

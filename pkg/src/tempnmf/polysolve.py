"""Real-root finding for low-degree polynomials, safeguarded Newton, digamma.

Coefficients are always given highest degree first: ``(a_d, ..., a_1, a_0)``.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

_EPS = np.finfo(float).eps
RESIDUAL_RTOL = 1e-8


class DegeneratePolynomialError(ValueError):
    pass


class BracketError(ValueError):
    pass


def _trim(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        raise DegeneratePolynomialError("zero polynomial has no well-defined roots")
    return c[nz[0]:]


def polyval(coeffs, x):
    out = np.zeros_like(np.asarray(x, dtype=float))
    for a in coeffs:
        out = out * x + a
    return out


def _polish(c: np.ndarray, x: float, steps: int = 3) -> float:
    dc = np.polyder(c)
    r = abs(polyval(c, x))
    for _ in range(steps):
        d = polyval(dc, x)
        if d == 0 or r == 0:
            break
        y = x - polyval(c, x) / d
        ry = abs(polyval(c, y))
        if not ry < r:
            break
        x, r = y, ry
    return float(x)


def _quadratic(a: float, b: float, c: float) -> list[float]:
    disc = b * b - 4 * a * c
    tol = 8 * _EPS * max(b * b, abs(4 * a * c))
    if disc < -tol:
        return []
    if disc <= tol:
        r = -b / (2 * a)
        return [r, r]
    s = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(s, b))
    r1 = q / a
    r2 = c / q if q != 0 else -r1
    return sorted([r1, r2])


def real_roots(coeffs) -> list[float]:
    """All real roots, ascending, repeated according to multiplicity.

    Zero leading coefficients are dropped first, so a cubic whose top
    coefficient vanishes is solved as a quadratic.
    """
    c = _trim(coeffs)
    deg = c.size - 1
    if deg == 0:
        return []
    c = c / np.max(np.abs(c))
    if deg == 1:
        return [-c[1] / c[0]]
    if deg == 2:
        return [_polish(c, r) for r in _quadratic(*c)]
    out = []
    for z in np.roots(c):
        # near-multiple roots come back as conjugate pairs with a tiny imaginary part
        if abs(z.imag) <= 1e-6 * (1 + abs(z)):
            x = _polish(c, z.real)
            scale = np.max(np.abs(c) * np.maximum(1.0, abs(x)) ** np.arange(deg, -1, -1))
            if abs(polyval(c, x)) <= RESIDUAL_RTOL * scale:
                out.append(x)
    return sorted(out)


def roots_in_interval(coeffs, lo: float = 0.0, hi: float = math.inf) -> list[float]:
    """Real roots lying in the closed interval ``[lo, hi]``."""
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    try:
        roots = real_roots(coeffs)
    except DegeneratePolynomialError:
        return []
    tol = 1e-12 * max(1.0, abs(lo), abs(hi) if math.isfinite(hi) else 0.0)
    return [min(max(r, lo), hi) for r in roots if lo - tol <= r <= hi + tol]


def real_roots_batch(coeffs: np.ndarray) -> np.ndarray:
    """Vectorized roots for a stack of polynomials of one degree.

    ``coeffs`` has shape ``(M, d + 1)`` with non-zero leading column. Returns
    an ``(M, d)`` array of real roots with ``nan`` in place of complex ones.
    """
    c = np.asarray(coeffs, dtype=float)
    m, d1 = c.shape
    d = d1 - 1
    c = c / c[:, :1]
    if d == 1:
        return -c[:, 1:2]
    if d == 2:
        b, cc = c[:, 1], c[:, 2]
        disc = b * b - 4 * cc
        tol = 8 * _EPS * np.maximum(b * b, np.abs(4 * cc))
        disc = np.where(np.abs(disc) <= tol, 0.0, disc)
        s = np.sqrt(np.where(disc >= 0, disc, np.nan))
        q = -0.5 * (b + np.copysign(s, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(q != 0, cc / q, -q)
        roots = np.stack([q, r2], axis=1)
    elif d == 3:
        roots = _cubic_batch(c[:, 1], c[:, 2], c[:, 3])
    else:
        comp = np.zeros((m, d, d))
        comp[:, 0, :] = -c[:, 1:]
        comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
        z = np.linalg.eigvals(comp)
        real = np.abs(z.imag) <= 1e-6 * (1 + np.abs(z))
        roots = np.where(real, z.real, np.nan)
    # two Newton polish steps, each kept only where it lowers the residual
    dc = c[:, :-1] * np.arange(d, 0, -1)
    for _ in range(2):
        p = _polyval_rows(c, roots)
        dp = _polyval_rows(dc, roots)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = roots - p / dp
        better = np.abs(_polyval_rows(c, step)) < np.abs(p)
        roots = np.where(better & np.isfinite(step), step, roots)
    return roots


def _cubic_batch(a, b, c):
    """Real roots of monic cubics x^3 + a x^2 + b x + c (nan for complex ones).

    Trigonometric form when all three roots are real, Cardano otherwise;
    the caller polishes with Newton steps.
    """
    p = b - a * a / 3
    q = 2 * a**3 / 27 - a * b / 3 + c
    shift = -a / 3
    D = q * q / 4 + p**3 / 27
    scale = np.maximum(q * q / 4, np.abs(p) ** 3 / 27)
    three = (D <= 8 * _EPS * scale) & (p < 0)
    out = np.full((a.shape[0], 3), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        # three real roots
        r = 2 * np.sqrt(np.where(three, -p / 3, 0.0))
        arg = np.where(three, 3 * q / (2 * np.where(three, p, -1.0)) * np.sqrt(np.where(three, -3 / np.where(three, p, -1.0), 0.0)), 0.0)
        phi = np.arccos(np.clip(arg, -1.0, 1.0)) / 3
        for j in range(3):
            out[:, j] = np.where(three, r * np.cos(phi - 2 * np.pi * j / 3) + shift, np.nan)
        # one real root: u^3 = -q/2 - sign(q) sqrt(D) avoids cancellation
        sq = np.sqrt(np.where(three, 0.0, np.maximum(D, 0.0)))
        u = np.cbrt(-q / 2 - np.copysign(sq, q))
        t = np.where(u != 0, u - p / (3 * np.where(u != 0, u, 1.0)), np.cbrt(-q))
        out[:, 0] = np.where(three, out[:, 0], t + shift)
    return out


def _polyval_rows(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    for j in range(c.shape[1]):
        out = out * x + c[:, j:j + 1]
    return out


def newton_bracketed(f: Callable[[float], float], df: Callable[[float], float],
                     lo: float, hi: float, x0: float | None = None,
                     tol: float = 1e-12, max_iter: int = 200) -> float:
    """Newton's method that falls back to bisection when a step leaves the bracket.

    ``f(lo)`` and ``f(hi)`` must have opposite signs (or one of them be 0).
    Stops when ``|f(x)| <= tol`` or the bracket collapses to machine precision.
    """
    flo, fhi = f(lo), f(hi)
    if abs(flo) <= tol:
        return lo
    if abs(fhi) <= tol:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    if flo > 0:
        lo, hi = hi, lo  # keep f(lo) < 0
    x = 0.5 * (lo + hi) if x0 is None or not min(lo, hi) <= x0 <= max(lo, hi) else x0
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= tol:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        d = df(x)
        step_ok = d != 0 and math.isfinite(d)
        if step_ok:
            xn = x - fx / d
            step_ok = min(lo, hi) < xn < max(lo, hi)
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if xn == x or abs(hi - lo) <= 4 * _EPS * max(abs(lo), abs(hi)):
            return xn
        x = xn
    return x


# digamma / trigamma: upward recurrence to x >= 10, then asymptotic series
_PSI_SERIES = (1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132, -691 / 32760, 1 / 12)
_PSI1_SERIES = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)
_ASYMPTOTIC = 10.0

# positive zero of digamma split into three parts, and the Taylor
# coefficients psi^(k)(x0) / k! used within _ROOT_WINDOW of it
_ROOT = (1569415565 / 1073741824, 381566830 / 1073741824**2, 9.016312093258695918614428e-20)
_ROOT_TAYLOR = (0.9676722454476212, -0.4427631689835921, 0.258499760955651,
                -0.16394270544240652, 0.10782405069126237, -0.07219956125645471,
                0.04880428816414311, -0.03316112647484736, 0.022597648232218104)
_ROOT_WINDOW = 0.01


def digamma(x):
    """Digamma function for x > 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("digamma is only implemented for x > 0")
    acc = np.zeros_like(x)
    x0, x = x, x.copy()
    while True:
        small = x < _ASYMPTOTIC
        if not small.any():
            break
        acc -= np.where(small, 1.0 / np.where(small, x, 1.0), 0.0)
        x = np.where(small, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for coef in reversed(_PSI_SERIES):
        series = (series + coef) * inv2
    out = acc + np.log(x) - 0.5 / x - series
    # the recurrence cancels near the zero, so expand around it instead
    dx = (x0 - _ROOT[0]) - _ROOT[1] - _ROOT[2]
    near = np.abs(dx) < _ROOT_WINDOW
    if near.any():
        t = np.zeros_like(dx)
        for coef in reversed(_ROOT_TAYLOR):
            t = (t + coef) * dx
        out = np.where(near, t, out)
    return float(out) if out.ndim == 0 else out


def trigamma(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("trigamma is only implemented for x > 0")
    acc = np.zeros_like(x)
    x = x.copy()
    while True:
        small = x < _ASYMPTOTIC
        if not small.any():
            break
        xs = np.where(small, x, 1.0)
        acc += np.where(small, 1.0 / (xs * xs), 0.0)
        x = np.where(small, x + 1.0, x)
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for coef in reversed(_PSI1_SERIES):
        series = (series + coef) * inv2
    out = acc + 1.0 / x + 0.5 * inv2 + series / x
    return float(out) if out.ndim == 0 else out


def psi_pair(x):
    """Digamma and trigamma together, sharing the recurrence (arrays, x > 0)."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("digamma is only implemented for x > 0")
    acc0 = np.zeros_like(x)
    acc1 = np.zeros_like(x)
    x = x.copy()
    for _ in range(int(_ASYMPTOTIC)):
        small = x < _ASYMPTOTIC
        if not small.any():
            break
        inv = np.where(small, 1.0 / x, 0.0)
        acc0 -= inv
        acc1 += inv * inv
        x = x + small
    inv2 = 1.0 / (x * x)
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    for c0, c1 in zip(reversed(_PSI_SERIES), reversed(_PSI1_SERIES)):
        s0 = (s0 + c0) * inv2
        s1 = (s1 + c1) * inv2
    return acc0 + np.log(x) - 0.5 / x - s0, acc1 + 1.0 / x + 0.5 * inv2 + s1 / x


def solve_increasing(fdf: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
                     x0: np.ndarray, rtol: float = 4 * _EPS, max_iter: int = 200,
                     lower: float = 0.0) -> np.ndarray:
    """Vectorized root of sign-changing functions on (0, inf), elementwise.

    ``fdf(x)`` returns the function values and derivatives. Each component
    must be negative left of its unique root and positive right of it;
    monotonicity is only needed near the root. Newton steps are kept inside
    the current bracket; until both ends are known the bracket grows
    geometrically from ``x0``, otherwise it is bisected. With ``lower > 0``
    the search is restricted to [lower, inf) and components whose root lies
    below ``lower`` return ``lower``.
    """
    x = np.array(x0, dtype=float)
    if np.any(~(x > 0)):
        raise BracketError("starting points must be positive")
    lo = np.zeros_like(x)
    hi = np.full_like(x, np.inf)
    done = np.zeros(x.shape, bool)
    if lower > 0:
        g, _ = fdf(np.full_like(x, lower))
        done = g >= 0
        lo = np.full_like(x, lower)
        x = np.where(done, lower, np.maximum(x, lower))
    for _ in range(max_iter):
        g, dg = fdf(x)
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - g / dg
        inside = (xn > lo) & (xn < hi)
        # bisect in log space while the bracket spans decades
        with np.errstate(invalid="ignore"):
            mid = np.where(hi > 4 * lo, np.sqrt(lo * hi), 0.5 * (lo + hi))
        fallback = np.where(np.isinf(hi), 4.0 * np.maximum(lo, x),
                            np.where(lo == 0, 0.25 * hi, mid))
        xn = np.where(inside, xn, fallback)
        xn = np.where((g == 0) | done, x, xn)
        done |= (np.abs(xn - x) <= rtol * np.abs(x)) | (np.isfinite(hi) & (hi - lo <= rtol * hi))
        x = xn
        if done.all():
            return x
    bad = np.flatnonzero(~done.ravel())
    raise BracketError(f"root not bracketed/converged at flat index {int(bad[0])} "
                       f"(bracket [{lo.ravel()[bad[0]]}, {hi.ravel()[bad[0]]}])")

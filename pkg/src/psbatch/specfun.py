"""Special functions used by the generating-function machinery.

Three families live here:

* the implicit branch theta(nu; w) of ``1 - theta + w theta^nu = 0`` through
  theta(0) = 1, together with its logarithmic derivative Sigma and the power
  series radius exp(-psi(nu));
* the rational kernels Psi_0, Psi_1 applied to theta values;
* Gauss 2F1 and Appell F1 hypergeometric functions, each with two
  independent evaluation routes (series vs Euler integral) so that one can
  cross-check the other, plus log-scale Euler variants for parameter regimes
  where the values themselves overflow double precision.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError, DomainError, PoleError, RadiusError
from .quadrature import integrate_log

_BISECT_ITERS = 80
_NEWTON_ITERS = 2


def branch_psi(nu: float) -> float:
    """psi(nu) = (1-nu) log(nu-1) + nu log(nu) for nu > 1 (our working range)."""
    if nu <= 1.0:
        raise DomainError(f"branch_psi implemented for nu > 1, got {nu}")
    return (1.0 - nu) * math.log(nu - 1.0) + nu * math.log(nu)


class ThetaContext:
    """Exponent nu and convergence radius for the theta branch.

    The radius exp(-psi(nu)) bounds the positive w for which the branch
    through theta(0) = 1 survives: at w = radius the two real roots on
    [1, nu/(nu-1)] merge and beyond it they leave the real axis.  For w <= 0
    the branch continues analytically to all magnitudes (the defining
    function is strictly decreasing in theta there), so no radius check
    applies on the negative axis.
    """

    def __init__(self, nu: float):
        if nu <= 1.0:
            raise DomainError(f"theta branch requires nu > 1, got {nu}")
        self.nu = float(nu)
        self.radius = math.exp(-branch_psi(self.nu))

    def __repr__(self) -> str:
        return f"ThetaContext(nu={self.nu!r}, radius={self.radius!r})"


def theta(ctx: ThetaContext, w):
    """Solve 1 - theta + w theta^nu = 0 on the branch through theta(0) = 1.

    Vectorized in w (any shape).  The root is bracketed in [0, 1] for w <= 0
    and in [1, nu/(nu-1)] for 0 < w < radius; on both brackets the defining
    function decreases in theta, so plain bisection is safe, and two Newton
    steps polish the result to machine accuracy.

    Raises RadiusError for w >= radius, where the real branch ceases to exist.
    """
    w_arr = np.asarray(w, dtype=float)
    scalar = w_arr.ndim == 0
    w_arr = np.atleast_1d(w_arr)
    if np.any(w_arr >= ctx.radius):
        raise RadiusError(
            f"theta branch does not extend to w >= {ctx.radius:.6g} "
            f"(got max w = {float(np.max(w_arr)):.6g})"
        )
    nu = ctx.nu
    hi = np.where(w_arr <= 0.0, 1.0, nu / (nu - 1.0))
    lo = np.where(w_arr <= 0.0, 0.0, 1.0)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        f = 1.0 - mid + w_arr * mid**nu
        gt = f > 0.0
        lo = np.where(gt, mid, lo)
        hi = np.where(gt, hi, mid)
    th = 0.5 * (lo + hi)
    for _ in range(_NEWTON_ITERS):
        f = 1.0 - th + w_arr * th**nu
        fp = -1.0 + nu * w_arr * th ** (nu - 1.0)
        step = np.where(fp != 0.0, f / np.where(fp != 0.0, fp, 1.0), 0.0)
        cand = th - step
        th = np.where((cand >= lo) & (cand <= hi), cand, th)
    if scalar:
        return float(th[0])
    return th.reshape(np.shape(w))


def sigma(ctx: ThetaContext, w):
    """Sigma(nu; w) = (theta - 1)/((1 - nu) theta + nu) = w d(log theta)/dw."""
    th = np.asarray(theta(ctx, w))
    out = (th - 1.0) / ((1.0 - ctx.nu) * th + ctx.nu)
    if out.ndim == 0:
        return float(out)
    return out


def sigma_series(ctx: ThetaContext, w: float, n_terms: int = 40) -> float:
    """Power series of Sigma: sum_l Gamma(l nu) / (Gamma(l) Gamma(1 + (nu-1) l)) w^l.

    Valid for |w| < radius; used as an independent check of the implicit solve.
    """
    if abs(w) >= ctx.radius:
        raise RadiusError("sigma_series requires |w| < radius")
    nu = ctx.nu
    total = 0.0
    for l in range(1, n_terms + 1):
        coef = math.exp(
            math.lgamma(l * nu) - math.lgamma(l) - math.lgamma(1.0 + (nu - 1.0) * l)
        )
        total += coef * w**l
    return total


def psi0(c_plus: float, t):
    """Psi_0(t) = t (1 - t) / (c_plus t + 1 - c_plus)^3, vectorized in t."""
    t_arr = np.asarray(t, dtype=float)
    den = c_plus * t_arr + 1.0 - c_plus
    if np.any(np.abs(den) < 1e-12):
        raise PoleError(f"Psi_0 pole at t = {(c_plus - 1.0) / c_plus!r}")
    out = t_arr * (1.0 - t_arr) / den**3
    if out.ndim == 0:
        return float(out)
    return out


def psi1(c_plus: float, t):
    """Psi_1(t) = t (1 - t) (1 - 2t - c_plus (1 - t^2)) / (c_plus t + 1 - c_plus)^5."""
    t_arr = np.asarray(t, dtype=float)
    den = c_plus * t_arr + 1.0 - c_plus
    if np.any(np.abs(den) < 1e-12):
        raise PoleError(f"Psi_1 pole at t = {(c_plus - 1.0) / c_plus!r}")
    out = t_arr * (1.0 - t_arr) * (1.0 - 2.0 * t_arr - c_plus * (1.0 - t_arr**2)) / den**5
    if out.ndim == 0:
        return float(out)
    return out


def _gauss_2f1_terminating(n: int, b: float, c: float, z: float) -> float:
    """2F1(-n, b; c; z) as the finite sum of n+1 terms."""
    total = 1.0
    term = 1.0
    for k in range(n):
        den = c + k
        if den == 0.0:
            raise PoleError(f"2F1 lower-parameter pole hit at term {k + 1}")
        term *= (-n + k) * (b + k) / (den * (k + 1)) * z
        total += term
    return total


def _gauss_2f1_series(a: float, b: float, c: float, z: float) -> float:
    if c <= 0.0 and c == round(c):
        raise PoleError(f"2F1 undefined for non-positive integer c = {c}")
    total = 1.0
    term = 1.0
    for k in range(5000):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * z
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return total
    raise ConvergenceError(f"2F1 series did not converge at z = {z}")


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric 2F1(a, b; c; z) for real arguments.

    Dispatch: terminating sum when a or b is a non-positive integer (this is
    the only case where c may be a non-positive integer, provided the series
    terminates before the pole); direct series for |z| <= 0.6; Pfaff
    transformation for z < -0.6; Euler integral for 0.6 < z < 1 when
    c > b > 0.  Other combinations raise DomainError.
    """
    for p, other in ((a, b), (b, a)):
        if p <= 0.0 and p == round(p):
            return _gauss_2f1_terminating(int(-p), other, c, z)
    if abs(z) <= 0.6:
        return _gauss_2f1_series(a, b, c, z)
    if z < 0.0:
        # Pfaff: (1-z)^(-a) 2F1(a, c-b; c; z/(z-1)) with mapped argument in (0, 0.62)
        return (1.0 - z) ** (-a) * _gauss_2f1_series(a, c - b, c, z / (z - 1.0))
    if z < 1.0 and c > b > 0.0:
        return math.exp(log_gauss_2f1_euler(a, b, c, z))
    raise DomainError(f"gauss_2f1 arguments out of supported range: z = {z}")


def log_gauss_2f1_euler(a: float, b: float, c: float, z: float) -> float:
    """log 2F1(a, b; c; z) through the Euler integral, for c > b > 0 and z < 1.

    The integrand is strictly positive, so the value has a well-defined log;
    evaluating in log space keeps huge parameter regimes (a, b, c of order
    1/rho) representable.
    """
    if not (c > b > 0.0):
        raise DomainError("Euler route requires c > b > 0")
    if z >= 1.0:
        raise DomainError("Euler route requires z < 1")

    def log_f(t: np.ndarray) -> np.ndarray:
        return (b - 1.0) * np.log(t) + (c - b - 1.0) * np.log1p(-t) - a * np.log1p(-z * t)

    log_pref = math.lgamma(c) - math.lgamma(b) - math.lgamma(c - b)
    return log_pref + integrate_log(log_f, 0.0, 1.0)


def appell_f1(a: float, b1: float, b2: float, c: float, x: float, y: float) -> float:
    """Appell F1(a; b1, b2; c; x, y) via its one-dimensional Euler integral.

    Requires c > a > 0 and x, y < 1 so the integral representation holds.
    """
    return math.exp(log_appell_f1(a, b1, b2, c, x, y))


def log_appell_f1(a: float, b1: float, b2: float, c: float, x: float, y: float) -> float:
    """log F1; Euler integrand evaluated in log space (see log_gauss_2f1_euler)."""
    if not (c > a > 0.0):
        raise DomainError("Appell F1 Euler route requires c > a > 0")
    if x >= 1.0 or y >= 1.0:
        raise DomainError("Appell F1 Euler route requires x, y < 1")

    def log_f(t: np.ndarray) -> np.ndarray:
        return (
            (a - 1.0) * np.log(t)
            + (c - a - 1.0) * np.log1p(-t)
            - b1 * np.log1p(-x * t)
            - b2 * np.log1p(-y * t)
        )

    log_pref = math.lgamma(c) - math.lgamma(a) - math.lgamma(c - a)
    return log_pref + integrate_log(log_f, 0.0, 1.0)


def appell_f1_series(
    a: float, b1: float, b2: float, c: float, x: float, y: float, tol: float = 1e-16
) -> float:
    """Appell F1 by its double power series; independent check of the Euler route.

    Converges for |x|, |y| < 1; rows in m are started from lgamma-based heads
    and advanced by term ratios in n.
    """
    if abs(x) >= 1.0 or abs(y) >= 1.0:
        raise DomainError("series route requires |x| < 1 and |y| < 1")
    total = 0.0
    for m in range(2000):
        # head = (a)_m (b1)_m / ((c)_m m!) x^m
        head = math.exp(
            math.lgamma(a + m)
            - math.lgamma(a)
            + math.lgamma(b1 + m)
            - math.lgamma(b1)
            - math.lgamma(c + m)
            + math.lgamma(c)
            - math.lgamma(m + 1.0)
        ) * x**m
        row = 0.0
        term = head
        for n in range(10000):
            row += term
            term *= (a + m + n) * (b2 + n) / ((c + m + n) * (n + 1)) * y
            if abs(term) <= tol * max(abs(row), 1e-300):
                break
        else:
            raise ConvergenceError("Appell F1 inner series stalled")
        total += row
        if abs(row) <= tol * max(abs(total), 1e-300) and m > 3:
            return total
    raise ConvergenceError("Appell F1 outer series stalled")

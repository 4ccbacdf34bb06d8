"""Boundary-coefficient systems for the conditional transforms at u = q.

Analyticity of the bivariate generating function forces one linear
constraint per batch size b on the boundary coefficients E_l(q)
(respectively their s-derivatives at 0 for the mean path), giving a lower
triangular system solved by forward substitution.  The matrix entries
Q_{b,l} come in two independent routes, a direct quadrature and a
terminating-hypergeometric closed form, which is the package's main
fault-detection pair.

The forward solve itself runs in arbitrary precision: the alternating
binomial sums lose roughly 0.4 decimal digits per order, so float64
substitution is hopeless long before b = 60 (see the condition estimate on
the returned table).  Inputs are computed to matching precision and only
the final coefficients are rounded to float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from .errors import ConvergenceError, DomainError, SingularDiagonal
from .model import ModelParams, SpectralData, kernel_R
from .quadrature import IntegralSpec, integrate

_DEFAULT_B_MAX = 60
_TAIL_SAFETY = 0.1


def required_b_max(q: float, tol: float = 1e-8) -> int:
    """Smallest truncation order whose geometric tail bound is below 0.1 tol.

    Downstream sums weight the coefficients by v^b with |v| <= q, so the
    truncation error of a sum cut at b_max is at most q^(b_max+1)/(1-q)^2.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must be in (0, 1), got {q}")
    target = _TAIL_SAFETY * tol * (1.0 - q) ** 2
    b = math.ceil(math.log(target) / math.log(q)) - 1
    return max(b, 1)


def default_b_max(q: float, tol: float = 1e-8) -> int:
    """Default order 60, raised automatically when the tail bound needs more."""
    return max(_DEFAULT_B_MAX, required_b_max(q, tol))


@dataclass(frozen=True)
class CoefficientTable:
    """Solved boundary coefficients E_l(q) (kind 'lst') or their s-slopes (kind 'mean1').

    values[l] holds the l-th coefficient for l = 1..b_max; values[0] is NaN.
    condition_log10 is the worst log10 amplification seen during forward
    substitution; max_residual the worst relative equation residual,
    recomputed after the solve.
    """

    kind: str
    sp: SpectralData
    b_max: int
    values: np.ndarray
    condition_log10: float
    max_residual: float

    def coefficient(self, l: int) -> float:
        if not 1 <= l <= self.b_max:
            raise DomainError(f"coefficient index must be in [1, {self.b_max}], got {l}")
        return float(self.values[l])


# ---------------------------------------------------------------------------
# matrix entries: two routes
# ---------------------------------------------------------------------------


def q_coefficient(sp: SpectralData, b: int, l: int, rel_tol: float = 1e-11) -> float:
    """Q_{b,l} = int_0^{u_minus} ((l-b+1) z - l (1+rho+s)) R(z)^b z^(l-1) dz.

    Strictly negative: on (0, u_minus) the linear factor is below
    (l-b+1) z - l z <= 0 since z < 1 < 1+rho+s.
    """
    _check_bl(b, l)
    um = sp.u_minus
    rate = 1.0 + sp.rho + sp.s

    def f(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return ((l - b + 1) * z - l * rate) * kernel_R(sp, z) ** b * z ** (l - 1)

    res = integrate(IntegralSpec(f, 0.0, um, rel_tol=rel_tol, abs_tol=1e-300))
    return res.value


def q_coefficient_closed(sp: SpectralData, b: int, l: int) -> float:
    """Terminating-hypergeometric closed form of Q_{b,l}.

    Q_{b,l} = -(u_minus)^(l+1) * (G(b) G(1-b c_plus)/G(b-b c_plus))
              * x^(1-b)/(1-x) * 2F1(l-b, -b c_plus; -b; x),
    the 2F1 truncating after b-l+1 terms, all of the same sign, so the sum
    is cancellation-free.  The gamma prefactor is assembled in log space.
    """
    _check_bl(b, l)
    cp, x, um = sp.c_plus, sp.x, sp.u_minus
    log_pref = (
        math.lgamma(b)
        + math.lgamma(1.0 - b * cp)
        - math.lgamma(b - b * cp)
        + (l + 1) * math.log(um)
        + (1.0 - b) * math.log(x)
        - math.log1p(-x)
    )
    total = 1.0
    term = 1.0
    for k in range(b - l):
        term *= (l - b + k) * (-b * cp + k) / ((-b + k) * (k + 1)) * x
        total += term
    return -math.exp(log_pref) * total


def _check_bl(b: int, l: int) -> None:
    if b < 1 or not 1 <= l <= b:
        raise DomainError(f"need 1 <= l <= b, got b={b}, l={l}")


def rhs_lst(sp: SpectralData, b: int) -> float:
    """Right-hand side b * int_0^{u_minus} R(xi)^b / (1 - xi) dxi of the LST system."""
    if b < 1:
        raise DomainError(f"b must be >= 1, got {b}")

    def f(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return kernel_R(sp, z) ** b / (1.0 - z)

    res = integrate(IntegralSpec(f, 0.0, sp.u_minus, rel_tol=1e-11, abs_tol=1e-300))
    return b * res.value


def rhs_mean(params: ModelParams, b: int) -> float:
    """Reduced right-hand side of the mean system at s = 0.

    b * int_0^{rho+q} (q - z)((1-z)^b - 1) / ((rho+q-z)(1-z)^2) * R(z)^b dz,
    with R evaluated on the s = 0 spectral data.  The (rho+q-z)^(-1) factor
    is absorbed by R^b's endpoint zero (net exponent b(c_minus-1) - 1 > -1).
    """
    from .model import spectral

    if b < 1:
        raise DomainError(f"b must be >= 1, got {b}")
    sp0 = spectral(params, 0.0)
    q, um = params.q, sp0.u_minus

    def f(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        onem = 1.0 - z
        return (q - z) * (onem**b - 1.0) / ((um - z) * onem**2) * kernel_R(sp0, z) ** b

    res = integrate(IntegralSpec(f, 0.0, um, rel_tol=1e-11, abs_tol=1e-300))
    return b * res.value


# ---------------------------------------------------------------------------
# arbitrary-precision internals for the forward solves
# ---------------------------------------------------------------------------


def _solve_dps(b_max: int) -> int:
    # roughly 0.4 digits lost per order plus headroom for the quadratures
    return 45 + b_max // 2


def _mp_spectral(rho, q, s):
    sigma = s + 1 + rho + q
    prod = s * q + rho + q
    disc = sigma * sigma - 4 * prod
    up = (sigma + mp.sqrt(disc)) / 2
    um = prod / up
    cp = -(um - q) / (up - um)
    return um, up, cp, 1 - um / up


def _mp_kernel(z, um, up, cp):
    return (1 - z / um) ** (-cp) * (1 - z / up) ** (cp - 1)


def _mp_q_closed(b, l, um, cp, x):
    total = mp.mpf(1)
    term = mp.mpf(1)
    for k in range(b - l):
        term *= mp.mpf((l - b + k) * (-b * cp + k)) / ((-b + k) * (k + 1)) * x
        total += term
    pref = (
        -mp.gamma(b)
        * mp.gamma(1 - b * cp)
        / mp.gamma(b - b * cp)
        * um ** (l + 1)
        * x ** (1 - b)
        / (1 - x)
    )
    return pref * total


def _forward_substitute(kind, sp, b_max, rhs_vals, um, up, cp, x):
    """Shared mp forward solve; rhs_vals[b] is the b-th right-hand side (mpf)."""
    coeffs = [mp.mpf(0)] * (b_max + 1)
    worst_cond = 0.0
    for b in range(1, b_max + 1):
        acc = rhs_vals[b]
        spill = mp.mpf(0)
        for l in range(1, b):
            term = (-1) ** l * mp.binomial(b, l) * _mp_q_closed(b, l, um, cp, x) * coeffs[l]
            acc -= term
            spill += abs(term)
        diag = (-1) ** b * _mp_q_closed(b, b, um, cp, x)
        if diag == 0 or not mp.isfinite(diag):
            raise SingularDiagonal(f"diagonal entry vanished at b={b}")
        coeffs[b] = acc / diag
        denom = abs(diag * coeffs[b])
        if denom > 0:
            worst_cond = max(worst_cond, float(mp.log10((abs(rhs_vals[b]) + spill) / denom)))
    values = np.full(b_max + 1, np.nan)
    for l in range(1, b_max + 1):
        values[l] = float(coeffs[l])
    # float64-level residual of each equation, Kahan-compensated in
    # descending l (largest binomial terms first)
    max_res = 0.0
    for b in range(1, b_max + 1):
        terms = [
            (-1) ** l
            * float(mp.binomial(b, l))
            * float(_mp_q_closed(b, l, um, cp, x))
            * values[l]
            for l in range(b, 0, -1)
        ]
        total = _kahan(terms)
        scale = max(max(abs(t) for t in terms), abs(float(rhs_vals[b])))
        max_res = max(max_res, abs(total - float(rhs_vals[b])) / scale)
    return values, worst_cond, max_res


def _kahan(terms):
    total = 0.0
    comp = 0.0
    for t in terms:
        y = t - comp
        tmp = total + y
        comp = (tmp - total) - y
        total = tmp
    return total


def solve_boundary_lst(sp: SpectralData, b_max: int | None = None) -> CoefficientTable:
    """Boundary coefficients E_l(q), l = 1..b_max, from the LST system.

    Validates the table invariants: all coefficients in (0, 1/(1-q)] up to
    a 1e-7 slack, and exactly 1/(1-q) at s = 0 (checked to the same slack).
    """
    if b_max is None:
        b_max = default_b_max(sp.q)
    if b_max < 1:
        raise DomainError(f"b_max must be >= 1, got {b_max}")
    with mp.workdps(_solve_dps(b_max)):
        rho, q, s = mp.mpf(sp.rho), mp.mpf(sp.q), mp.mpf(sp.s)
        um, up, cp, x = _mp_spectral(rho, q, s)
        rhs_vals = [mp.mpf(0)] * (b_max + 1)
        for b in range(1, b_max + 1):
            rhs_vals[b] = b * mp.quad(
                lambda z, b=b: _mp_kernel(z, um, up, cp) ** b / (1 - z), [0, q, um]
            )
        values, cond, res = _forward_substitute("lst", sp, b_max, rhs_vals, um, up, cp, x)
    cap = 1.0 / (1.0 - sp.q) + 1e-7
    body = values[1:]
    if np.any(body <= 0.0) or np.any(body > cap):
        raise ConvergenceError(
            "solved LST boundary coefficients violate 0 < E_l(q) <= 1/(1-q); "
            "quadrature or precision failure upstream"
        )
    return CoefficientTable("lst", sp, b_max, values, cond, res)


def solve_boundary_mean(sp0: SpectralData, b_max: int | None = None) -> CoefficientTable:
    """s-derivative coefficients at 0 (all negative), from the reduced mean system."""
    if sp0.s != 0.0:
        raise DomainError("solve_boundary_mean needs spectral data at s = 0")
    if b_max is None:
        b_max = default_b_max(sp0.q)
    if b_max < 1:
        raise DomainError(f"b_max must be >= 1, got {b_max}")
    with mp.workdps(_solve_dps(b_max)):
        rho, q = mp.mpf(sp0.rho), mp.mpf(sp0.q)
        um, up, cp, x = _mp_spectral(rho, q, mp.mpf(0))
        rhs_vals = [mp.mpf(0)] * (b_max + 1)
        for b in range(1, b_max + 1):

            def f(z, b=b):
                onem = 1 - z
                return (
                    (q - z)
                    * (onem**b - 1)
                    / ((um - z) * onem**2)
                    * _mp_kernel(z, um, up, cp) ** b
                )

            rhs_vals[b] = -b * mp.quad(f, [0, q, um])
        values, cond, res = _forward_substitute("mean1", sp0, b_max, rhs_vals, um, up, cp, x)
    if np.any(values[1:] >= 0.0):
        raise ConvergenceError(
            "solved mean-path coefficients must all be negative; "
            "quadrature or precision failure upstream"
        )
    return CoefficientTable("mean1", sp0, b_max, values, cond, res)


# ---------------------------------------------------------------------------
# per-coefficient validators
# ---------------------------------------------------------------------------


def _analyticity_integrand(sp: SpectralData, b: int, e_b_q: float, lower_Eb):
    rate = 1.0 + sp.rho + sp.s

    def f(z):
        z = np.asarray(z, dtype=float)
        if b == 1:
            base = 1.0 / (1.0 - z)
        else:
            base = b * lower_Eb(z)
        return (base - (b * rate - z) * e_b_q) * kernel_R(sp, z) ** b * z ** (b - 1)

    return f


def coefficient_Fb(sp: SpectralData, b: int, u: float, table: CoefficientTable, lower_Eb) -> float:
    """Conditional generating coefficient F_b(u) for batch size b.

    F_b(u) = int_u^{u_minus} [1_{b=1}/(1-z) + b E_{b-1}(z) 1_{b>=2}
             - (b(1+rho+s) - z) E_b(q)] R(z)^b z^(b-1) dz / (u^b P(u) R(u)^b).

    lower_Eb(z) must supply E_{b-1}(z) along the path (oracle column or a
    recursive evaluation); it is ignored for b = 1.  At u = u_minus both the
    integral and the prefactor vanish; the limit value
    g(u_minus) / ((b(c_minus-1)+1) u_minus^b (u_plus-u_minus)) is returned.
    """
    if table.b_max < b:
        raise DomainError(f"table solved to order {table.b_max} < b={b}")
    if not 0.0 < u <= sp.u_minus:
        raise DomainError(f"coefficient_Fb needs 0 < u <= u_minus, got u={u}")
    e_b_q = table.coefficient(b)
    f = _analyticity_integrand(sp, b, e_b_q, lower_Eb)
    um = sp.u_minus
    if abs(u - um) < 1e-13:
        rate = 1.0 + sp.rho + sp.s
        if b == 1:
            base = 1.0 / (1.0 - um)
        else:
            base = b * float(lower_Eb(um))
        g_um = (base - (b * rate - um) * e_b_q) * um ** (b - 1)
        return g_um / ((b * (sp.c_minus - 1.0) + 1.0) * um**b * (sp.u_plus - um))
    res = integrate(IntegralSpec(f, u, um, rel_tol=1e-11, abs_tol=1e-300))
    return res.value / (u**b * sp.poly(u) * kernel_R(sp, u) ** b)


def condanalytic_residual(sp: SpectralData, b: int, e_b_q: float, lower_Eb) -> float:
    """Residual of the analyticity condition for order b.

    int_0^{u_minus} [1_{b=1}/(1-z) + b E_{b-1}(z) 1_{b>=2}
                     - (b(1+rho+s) - z) E_b(q)] R(z)^b z^(b-1) dz,
    which must vanish when E_b(q) solves the triangular system exactly.
    """
    f = _analyticity_integrand(sp, b, e_b_q, lower_Eb)
    res = integrate(IntegralSpec(f, 0.0, sp.u_minus, rel_tol=1e-12, abs_tol=1e-14))
    return res.value

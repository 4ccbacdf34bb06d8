"""Analytic pipeline: generating functions, transform, mean, and tail.

The chain goes

    spectral data -> inner kernel integrals I0/I1 -> E(q, v) -> F(u, v)
    -> batch transform E[exp(-s Omega)] -> CCDF by Gaver-Stehfest,

with a parallel first-order-in-s chain (E1, Omega_1, Omega_2, F1) feeding
the closed-form mean.  All outer integrals run on the tanh-sinh module; the
inner kernel integrals are batched over their v-arguments so that the theta
solves vectorize across both quadrature levels and evaluation points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, InversionUnstable
from .model import ModelParams, SpectralData, kernel_R, spectral
from .quadrature import IntegralSpec, integrate
from .specfun import ThetaContext, log_appell_f1, log_gauss_2f1_euler, psi0, psi1, theta

_INNER_REL_TOL = 1e-12
_INNER_ABS_TOL = 1e-14
_INNER_MAX_LEVELS = 12
_NEAR_DIAGONAL = 1e-6
_CCDF_SLACK = 1e-3


@dataclass(frozen=True)
class TransformValue:
    """One point of the batch sojourn-time Laplace transform."""

    s: float
    value: float


@dataclass(frozen=True)
class CcdfCurve:
    """Numerically inverted tail P(Omega > t) on a time grid."""

    t: np.ndarray
    values: np.ndarray
    order: int
    max_order_disagreement: float


class AuxPolynomials:
    """Polynomial ingredients Q0, Q1 and the map X built on one SpectralData."""

    def __init__(self, sp: SpectralData):
        self.sp = sp

    def q0(self, v):
        sp = self.sp
        return sp.u_plus * sp.u_minus - sp.q * v

    def q1(self, v):
        sp = self.sp
        up, um, q = sp.u_plus, sp.u_minus, sp.q
        return (
            (q * q - up * um) * v * v
            + 2.0 * up * um * (up + um - 2.0 * q) * v
            - up * um * ((up + um - q) ** 2 - up * um)
        )

    def X(self, v):
        """X(v) = -u_plus v / (P(v) R(v)), the kernel-side form."""
        sp = self.sp
        v_arr = np.asarray(v, dtype=float)
        out = -sp.u_plus * v_arr / (sp.poly(v_arr) * kernel_R(sp, v_arr))
        if out.ndim == 0:
            return float(out)
        return out

    def X_direct(self, v):
        """X(v) = v/(v - u_minus) ((1 - v/u_minus)/(1 - v/u_plus))^c_plus.

        Same function as :meth:`X` by the definition of R; kept as the
        second route for the consistency check in the tests.
        """
        sp = self.sp
        v_arr = np.asarray(v, dtype=float)
        ratio = (1.0 - v_arr / sp.u_minus) / (1.0 - v_arr / sp.u_plus)
        out = v_arr / (v_arr - sp.u_minus) * ratio**sp.c_plus
        if out.ndim == 0:
            return float(out)
        return out


def _theta_context(sp: SpectralData) -> ThetaContext:
    return ThetaContext(1.0 - sp.c_plus)


def _i01_batch(sp: SpectralData, v_arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inner integrals I0(v), I1(v) for a whole vector of arguments at once.

    I_j(v) = int_0^{u_minus} Psi_j(Theta(x R(xi) X(v))) dxi / (1 - xi).
    One tanh-sinh refinement serves every v: each level evaluates theta on
    the (n_v, n_new_nodes) grid of arguments, so the bisection solve runs
    vectorized over both axes.  Convergence is the sup over v of the
    level-to-level change.
    """
    from .quadrature import _CENTER_W, _level_nodes

    v_arr = np.asarray(v_arr, dtype=float)
    aux = AuxPolynomials(sp)
    ctx = _theta_context(sp)
    Xv = np.asarray(aux.X(v_arr), dtype=float)
    um = sp.u_minus
    mid = half = 0.5 * um

    i0 = np.zeros_like(v_arr)
    i1 = np.zeros_like(v_arr)
    prev0 = np.full_like(v_arr, np.inf)
    prev1 = np.full_like(v_arr, np.inf)
    for level in range(_INNER_MAX_LEVELS + 1):
        dist, w_nodes = _level_nodes(level)
        xi_left = half * dist
        xi_right = um - half * dist
        keep_r = xi_right < um
        xi = np.concatenate((xi_left, xi_right[keep_r]))
        w_all = np.concatenate((w_nodes, w_nodes[keep_r]))
        if level == 0:
            xi = np.append(xi, mid)
            w_all = np.append(w_all, _CENTER_W)
        fac = w_all / (1.0 - xi)
        w_theta = sp.x * Xv[:, None] * kernel_R(sp, xi)[None, :]
        th = theta(ctx, w_theta)
        c0 = psi0(sp.c_plus, th) @ fac
        c1 = psi1(sp.c_plus, th) @ fac
        h = 2.0**-level
        i0 = h * c0 if level == 0 else 0.5 * i0 + h * c0
        i1 = h * c1 if level == 0 else 0.5 * i1 + h * c1
        if level >= 2:
            err = max(float(np.max(np.abs(i0 - prev0))), float(np.max(np.abs(i1 - prev1))))
            scale = max(float(np.max(np.abs(i0))), float(np.max(np.abs(i1))))
            if err <= max(_INNER_ABS_TOL / half, _INNER_REL_TOL * scale):
                break
        prev0, prev1 = i0, i1
    return half * i0, half * i1


def E_qv(sp: SpectralData, v: float) -> float:
    """Generating function E(s; q, v) of the conditional transforms at u = q.

    E(q, v) = Q0(v) / ((u_plus - u_minus) P(v)) * I0(v); E(q, 0) = 0.
    Requires v < u_minus (P and R poles start there).
    """
    if v == 0.0:
        return 0.0
    if not v < sp.u_minus:
        raise DomainError(f"E(q, v) requires v < u_minus = {sp.u_minus:.6g}, got v={v}")
    i0, _ = _i01_batch(sp, np.array([v]))
    aux = AuxPolynomials(sp)
    return aux.q0(v) / ((sp.u_plus - sp.u_minus) * sp.poly(v)) * float(i0[0])


def _f_integrand_factory(sp: SpectralData, u: float, v: float):
    """Vectorized tau-integrand of the characteristic representation of F."""
    up, um, cp, cm = sp.u_plus, sp.u_minus, sp.c_plus, sp.c_minus
    aux = AuxPolynomials(sp)
    w = v / u

    def g(tau: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        y = um + (u - um) * tau
        ratio = tau ** (cm - 1.0) * ((up - y) / (up - u)) ** (cp - 1.0)
        Z = w * ratio / ((1.0 - w) + w * ratio)
        vin = y * Z
        i0, i1 = _i01_batch(sp, vin)
        q0 = aux.q0(vin)
        q1 = aux.q1(vin)
        p_vin = sp.poly(vin)
        L1 = (y * q0 / p_vin + vin * q1 / p_vin**2) * i0 / (up - um)
        L2 = (up + um - sp.q - vin) * q0**2 / ((up - um) * p_vin**2) * i1
        return (1.0 - Z) * (Z / (1.0 - y) + (L1 + L2) / y)

    return g


def F_uv(sp: SpectralData, u: float, v: float) -> float:
    """Difference-quotient generating function F(s; u, v) = (E(u,v) - E(q,v))/(u - q).

    Evaluated through the characteristic-curve integral, parametrized by
    tau in (0, 1) with y = u_minus + (u - u_minus) tau.  The parametrization
    is exact on both sides of u_minus and degenerates gracefully at
    u = u_minus, which the transform evaluation crosses as s varies.

    Supported domain: 0 < u < 1 and 0 <= v < u.  For v >= u the integrand
    develops a pole on the path and no stable representation is implemented;
    such calls raise DomainError.  Near the removable point u = v the value
    is Richardson-extrapolated from u' = v + 1e-4 and v + 2e-4.
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"F(u, v) implemented for 0 < u < 1, got u={u}")
    if v < 0.0:
        raise DomainError(f"F(u, v) implemented for v >= 0, got v={v}")
    if v == 0.0:
        # E(u, 0) = E(q, 0) = 0, so the quotient vanishes identically
        return 0.0
    if v >= u and abs(u - v) >= _NEAR_DIAGONAL:
        raise DomainError(
            f"F(u, v) not implemented for v >= u (got u={u}, v={v}); "
            "the characteristic path crosses a pole of the integrand there"
        )
    if abs(u - v) < _NEAR_DIAGONAL:
        # removable u = v point: linear extrapolation from two safe abscissae
        d = 1e-4
        f1 = _f_finite(sp, v + d, v)
        f2 = _f_finite(sp, v + 2.0 * d, v)
        return f1 + (f1 - f2) * (v + d - u) / d
    return _f_finite(sp, u, v)


def _f_finite(sp: SpectralData, u: float, v: float) -> float:
    g = _f_integrand_factory(sp, u, v)
    res = integrate(IntegralSpec(g, 0.0, 1.0, rel_tol=1e-11, abs_tol=1e-13))
    return u / ((u - v) * (sp.u_plus - u)) * res.value


def F_at_zero(sp: SpectralData, v: float) -> float:
    """Limit F(s; 0, v) = (v + (v - s - rho - 1) E(q, v)) / (q v - rho - q - s q)."""
    rho, q, s = sp.rho, sp.q, sp.s
    e = E_qv(sp, v)
    return (v + (v - s - rho - 1.0) * e) / (q * v - rho - q - s * q)


def E_uv(sp: SpectralData, u: float, v: float) -> float:
    """E(s; u, v) reconstructed from F via E = (u - q) F(u, v) + E(q, v)."""
    return (u - sp.q) * F_uv(sp, u, v) + E_qv(sp, v)


def batch_lst_analytic(params: ModelParams, s: float) -> float:
    """Full integral-pipeline evaluation of E[exp(-s Omega)], any s >= 0.

    This is the assembly
        c [rho^2 F(s; rho+q, q) + (q^3 + rho (q s + rho + 2 q (1-q)) E(s; q, q))
           / (q + rho + q s - q^2)],
    c = (1 - rho - q)/(q (rho + q)), with no short-circuit at s = 0 (the
    s = 0 value serves as an end-to-end consistency check of the pipeline).
    """
    rho, q = params.rho, params.q
    sp = spectral(params, s)
    F = F_uv(sp, rho + q, q)
    E = E_qv(sp, q)
    c = (1.0 - rho - q) / (q * (rho + q))
    num = q**3 + rho * (q * s + rho + 2.0 * q * (1.0 - q)) * E
    return c * (rho**2 * F + num / (q + rho + q * s - q * q))


@lru_cache(maxsize=4096)
def _batch_lst_cached(params: ModelParams, s: float) -> float:
    return batch_lst_analytic(params, s)


def batch_lst(params: ModelParams, s: float) -> TransformValue:
    """Laplace transform E[exp(-s Omega)] of the batch sojourn time.

    s = 0 short-circuits to exactly 1 (it is a Laplace transform of a
    probability law); use batch_lst_analytic to exercise the full pipeline
    at s = 0.
    """
    if s < 0:
        raise DomainError(f"batch_lst requires s >= 0, got {s}")
    if s == 0.0:
        return TransformValue(0.0, 1.0)
    return TransformValue(s, _batch_lst_cached(params, s))


# ---------------------------------------------------------------------------
# first order in s: the mean pipeline
# ---------------------------------------------------------------------------


def E1_qv(params: ModelParams, v: float) -> float:
    """d/ds E(s; q, v) at s = 0 (negative: all series coefficients are -M_{n,b}).

    Integral form with the kernel substituted by sigma = (1 - xi/u_minus)^(c_minus - 1),
    under which R(xi) = sigma (1 - xi/u_plus)^(c_plus - 1) exactly and the
    (rho + q - xi)^(c_minus - 2) endpoint factor becomes analytic; the
    quadrature then stays uniformly accurate down to rho near 0.
    """
    if v == 0.0:
        return 0.0
    sp = spectral(params, 0.0)
    if not v < sp.u_minus:
        raise DomainError(f"E1(q, v) requires v < rho + q = {sp.u_minus:.6g}, got v={v}")
    rho, q = params.rho, params.q
    um, up, cp, cm = sp.u_minus, sp.u_plus, sp.c_plus, sp.c_minus
    aux = AuxPolynomials(sp)
    Xv = float(aux.X(v))
    ctx = _theta_context(sp)
    inv_pow = 1.0 / (cm - 1.0)

    def g(sig: np.ndarray) -> np.ndarray:
        sig = np.asarray(sig, dtype=float)
        s1p = sig**inv_pow  # = 1 - xi/u_minus
        xi = um * (1.0 - s1p)
        R = sig * (1.0 - xi / up) ** (cp - 1.0)
        w_full = sp.x * R * Xv
        w_scaled = (1.0 - xi) * w_full
        bracket = psi0(cp, theta(ctx, w_full)) - psi0(cp, theta(ctx, w_scaled))
        return bracket * (q - xi) / ((1.0 - xi) ** 2 * (cm - 1.0) * sig)

    res = integrate(IntegralSpec(g, 0.0, 1.0, rel_tol=1e-12, abs_tol=1e-14))
    return aux.q0(v) / ((up - um) * sp.poly(v)) * res.value


def _omega1_prefactored(params: ModelParams, v: float) -> float:
    """pref(v) * Omega_1(v) assembled in log space.

    pref(v) = (v/(1-q-rho)^2) (1 - v/(q+rho))^((1-q-2rho)/rho) and Omega_1
    combines an Appell F1 (Euler integral; c - a = 1 by construction, checked
    here) and a Gauss 2F1 (Euler integral; c - b = 2 by construction).  The
    two factors of each term can separately overflow double precision for
    small rho while their products stay of order one, hence the log-space
    assembly.
    """
    rho, q = params.rho, params.q
    a = (1.0 - q + rho) / rho
    b1 = (1.0 - q - rho) / rho
    c = a + 1.0
    # both parameters descend from the same exponent family: a - b1 = 2
    if abs((a - b1) - 2.0) > 1e-9 * a:
        raise DomainError("Appell argument layout broken: a - b1 must equal 2")
    x_arg = v / (q + rho)
    log_pref = math.log(v) - 2.0 * math.log1p(-(q + rho)) + (
        (1.0 - q - 2.0 * rho) / rho
    ) * math.log1p(-x_arg)

    log_f1 = log_appell_f1(a, b1, 2.0, c, x_arg, v)
    log_term1 = log_pref + math.log(v / (1.0 - q + rho)) + log_f1

    z = v * (1.0 - q - rho) / ((1.0 - v) * (q + rho))
    a2 = (1.0 - q) / rho
    b2 = (1.0 - q - rho) / rho
    c2 = (1.0 - q + rho) / rho
    if abs(c2 - b2 - 2.0) > 1e-12 * c2:
        raise DomainError("Gauss argument layout broken: c - b must equal 2")
    # integrate over the a2 slot (symmetry in the first two arguments):
    # c2 - a2 = 1 exactly, so the endpoint factors are t^(a2-1) and 1,
    # smooth on [0, 1] under stability (a2 > 1)
    log_f2 = log_gauss_2f1_euler(b2, a2, c2, z)
    log_term2 = (
        log_pref
        + ((q - 1.0) / rho) * math.log1p(-v)
        - math.log((1.0 - q) * (q + rho))
        + log_f2
    )
    # pref*Omega_1 = exp(log_term1) - exp(log_term2), dominant term first
    m = max(log_term1, log_term2)
    return math.exp(m) * (math.exp(log_term1 - m) - math.exp(log_term2 - m))


def _omega2(params: ModelParams, v: float) -> float:
    """Omega_2(v): the E1-weighted characteristic integral of the mean pipeline.

    The prefactor powers v^((rho+q-1)/rho) (rho+q-v)^(-(2rho+q-1)/rho) are
    folded into the integrand's logarithm (grouped as G(xi) below), which is
    maximal at xi = v with G(v) = -log v - 2 log(rho+q-v); nothing larger
    than exp(G(v)) is ever exponentiated.
    """
    rho, q = params.rho, params.q
    um = rho + q
    a1 = (1.0 - 2.0 * rho - q) / rho
    a2 = (1.0 - q) / rho

    def f(xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        flat = xi.ravel()
        e1 = np.array([E1_qv(params, t) if t > 0.0 else 0.0 for t in flat])
        G = (
            a1 * np.log(flat)
            - a2 * np.log(um - flat)
            - (a1 + 1.0) * math.log(v)
            + (a2 - 2.0) * math.log(um - v)
        )
        out = (1.0 - flat) * np.exp(G) * e1
        return out.reshape(xi.shape)

    res = integrate(IntegralSpec(f, 0.0, v, rel_tol=1e-11, abs_tol=1e-13))
    return (1.0 - q) * um / rho**2 * res.value


def F1_at_rho_plus_q(params: ModelParams, v: float) -> float:
    """d/ds F(s; rho + q, v) at s = 0 (negative, like E1).

    F1 = pref(v) Omega_1(v) + Omega_2(v) - (1 - v + rho)/(rho (q - v + rho)) E1(q, v).
    """
    rho, q = params.rho, params.q
    if not 0.0 < v < rho + q:
        raise DomainError(f"F1 requires 0 < v < rho + q, got v={v}")
    return (
        _omega1_prefactored(params, v)
        + _omega2(params, v)
        - (1.0 - v + rho) / (rho * (q - v + rho)) * E1_qv(params, v)
    )


def mean_batch_sojourn(params: ModelParams) -> float:
    """E[Omega]: closed-form mean of the batch sojourn time.

    Assembled from the s-derivatives of the transform ingredients:
        mean = -c (rho^2 F1(rho+q, q) - q^3/((1-q) D0)
                   + rho (rho + 2 q (1-q))/D0 * E1(q, q)),
    with c = (1-rho-q)/(q (rho+q)) and D0 = q + rho - q^2.
    """
    rho, q = params.rho, params.q
    c = (1.0 - rho - q) / (q * (q + rho))
    d0 = q + rho - q * q
    e1 = E1_qv(params, q)
    f1 = F1_at_rho_plus_q(params, q)
    return -c * (
        rho**2 * f1 - q**3 / ((1.0 - q) * d0) + rho * (rho + 2.0 * q * (1.0 - q)) / d0 * e1
    )


# ---------------------------------------------------------------------------
# PDE residual (validation instrument)
# ---------------------------------------------------------------------------


def pde_residual(
    params: ModelParams, s: float, u: float, v: float, h: float = 1e-4
) -> tuple[float, float]:
    """Residual of the transport PDE satisfied by F, with central-difference slopes.

    Returns (residual, scale) where scale = max absolute size of the four
    PDE terms; an implementation-consistent F should give residual well
    below scale.  Needs v < u - 2h so all stencil points stay in the wedge.
    """
    rho, q = params.rho, params.q
    sp = spectral(params, s)
    if not v < u - 2.0 * h:
        raise DomainError("pde_residual needs v < u - 2h")
    F = F_uv(sp, u, v)
    dFdu = (F_uv(sp, u + h, v) - F_uv(sp, u - h, v)) / (2.0 * h)
    dFdv = (F_uv(sp, u, v + h) - F_uv(sp, u, v - h)) / (2.0 * h)
    E_q = E_qv(sp, v)
    dEdv = (E_qv(sp, v + h) - E_qv(sp, v - h)) / (2.0 * h)

    term1 = u * sp.poly(u) * dFdu
    term2 = v * (rho * (1.0 - q) - (s + 1.0 + rho - v) * (u - q)) * dFdv
    term3 = (u * (u - s - 1.0 - rho) + (u - q) * (u + v)) * F
    L = v / (1.0 - u) + (u + v) * E_q - v * (s + 1.0 + rho - v) * dEdv
    residual = term1 + term2 + term3 + L
    scale = max(abs(term1), abs(term2), abs(term3), abs(L))
    return residual, scale


# ---------------------------------------------------------------------------
# Gaver-Stehfest inversion
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def stehfest_weights(order: int) -> tuple[float, ...]:
    """Gaver-Stehfest weights V_k, k = 1..order, for even order.

    Computed exactly in rational arithmetic and converted to float once;
    the alternating sum is hugely cancellative, so forming the integer
    numerators exactly matters already at order 12.
    """
    if order % 2 != 0 or order <= 0:
        raise DomainError(f"Stehfest order must be a positive even integer, got {order}")
    m2 = order // 2
    weights = []
    for k in range(1, order + 1):
        acc = Fraction(0)
        for j in range((k + 1) // 2, min(k, m2) + 1):
            num = Fraction(j) ** m2 * Fraction(math.factorial(2 * j))
            den = (
                math.factorial(m2 - j)
                * math.factorial(j)
                * math.factorial(j - 1)
                * math.factorial(k - j)
                * math.factorial(2 * j - k)
            )
            acc += num / den
        weights.append(float((-1) ** (m2 + k) * acc))
    return tuple(weights)


def _ccdf_single(params: ModelParams, t: float, order: int) -> tuple[float, float]:
    """CCDF estimate at one time plus the (order, order-2) disagreement."""
    ln2_t = math.log(2.0) / t
    # G_hat(s) = (1 - lst(s))/s has the tail as its inverse transform
    g_vals = [
        (1.0 - batch_lst(params, k * ln2_t).value) / (k * ln2_t) for k in range(1, order + 1)
    ]
    w_hi = stehfest_weights(order)
    w_lo = stehfest_weights(order - 2)
    est_hi = ln2_t * sum(w * g for w, g in zip(w_hi, g_vals))
    est_lo = ln2_t * sum(w * g for w, g in zip(w_lo, g_vals[: order - 2]))
    return est_hi, abs(est_hi - est_lo)


def ccdf(
    params: ModelParams,
    t_grid,
    order: int = 12,
    slack: float = _CCDF_SLACK,
) -> CcdfCurve:
    """P(Omega > t) on a grid by Gaver-Stehfest inversion of (1 - lst(s))/s.

    Every point is computed at `order` and `order - 2`; if the two estimates
    disagree by more than `slack` the inversion is declared unstable and
    InversionUnstable is raised (the transform side would need tightening).
    Estimates are clipped to [0, 1]; raw values may overshoot by up to the
    documented inversion slack.
    """
    if order < 4:
        raise DomainError(f"inversion order must be an even integer >= 4, got {order}")
    t_arr = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_arr <= 0.0):
        raise DomainError("ccdf times must be positive")
    vals = np.empty_like(t_arr)
    worst = 0.0
    for i, t in enumerate(t_arr):
        est, dis = _ccdf_single(params, float(t), order)
        worst = max(worst, dis)
        if dis > slack:
            raise InversionUnstable(
                f"orders {order} and {order - 2} disagree by {dis:.3e} at t={t:.6g} "
                f"(slack {slack:.1e})"
            )
        if est < -slack or est > 1.0 + slack:
            raise InversionUnstable(
                f"inverted value {est:.6g} at t={t:.6g} outside [{-slack}, {1 + slack}]"
            )
        vals[i] = min(max(est, 0.0), 1.0)
    return CcdfCurve(t=t_arr, values=vals, order=order, max_order_disagreement=worst)

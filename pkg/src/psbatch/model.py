"""Model primitives for the M^[X]/M/1 processor-sharing queue with geometric batches.

Batches arrive in a Poisson stream of rate ``rho``, batch sizes are geometric
on {1, 2, ...} with ratio ``q`` (``P(B = b) = (1 - q) q^(b-1)``), and the
server works at unit total rate shared equally among all jobs present.  The
offered load is therefore ``rho/(1-q)``, and stability is exactly
``1 - rho - q > 0``.  Everything downstream (generating functions, kernels,
characteristic curves) is built from the two parameters and the Laplace
variable ``s`` through the quadratic ``P`` and its roots, collected here in
:class:`SpectralData`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StabilityViolation


@dataclass(frozen=True)
class ModelParams:
    """Validated pair (rho, q); construction enforces the stability region."""

    rho: float
    q: float

    def __post_init__(self) -> None:
        rho, q = self.rho, self.q
        if not (math.isfinite(rho) and math.isfinite(q)):
            raise DomainError(f"parameters must be finite, got rho={rho}, q={q}")
        if rho <= 0.0:
            raise DomainError(f"batch arrival rate rho must be positive, got {rho}")
        if not 0.0 < q < 1.0:
            raise DomainError(f"geometric ratio q must lie in (0, 1), got {q}")
        if 1.0 - rho - q <= 0.0:
            raise StabilityViolation(
                f"stability requires 1 - rho - q > 0, got {1.0 - rho - q:.6g} "
                f"(rho={rho}, q={q})"
            )

    @property
    def mean_batch_size(self) -> float:
        return 1.0 / (1.0 - self.q)

    @property
    def batch_arrival_rate(self) -> float:
        return self.rho

    @property
    def offered_load(self) -> float:
        # jobs arrive at rate rho/(1-q) against unit total service rate
        return self.rho / (1.0 - self.q)


def validate_params(rho: float, q: float) -> ModelParams:
    """Validate (rho, q) and return an immutable parameter object.

    Raises
    ------
    DomainError
        If rho <= 0 or q is outside (0, 1).
    StabilityViolation
        If 1 - rho - q <= 0.  Values are never clamped.
    """
    return ModelParams(float(rho), float(q))


def batch_pmf(params: ModelParams, b_max: int) -> np.ndarray:
    """P(B = b) for b = 1..b_max as an array of length b_max."""
    b = np.arange(1, b_max + 1)
    return (1.0 - params.q) * params.q ** (b - 1)


@dataclass(frozen=True)
class SpectralData:
    """Roots and derived constants of P(s; u) = u^2 - (s+1+rho+q) u + (s q + rho + q).

    For s > 0 the roots straddle the unit circle, q < u_minus < 1 < u_plus;
    at s = 0 they degenerate to u_minus = rho + q and u_plus = 1.  The split
    constants satisfy c_plus < 0 < 1 < c_minus and c_plus + c_minus = 1, and
    x = 1 - u_minus/u_plus lies in (0, 1).
    """

    rho: float
    q: float
    s: float
    u_minus: float
    u_plus: float
    c_plus: float
    c_minus: float
    x: float

    def poly(self, u):
        """P(s; u), vectorized in u."""
        return (u - self.u_minus) * (u - self.u_plus)


def spectral(params: ModelParams, s: float) -> SpectralData:
    """Solve the quadratic for (u_minus, u_plus) and package the constants.

    The larger root is computed from the quadratic formula and the smaller
    one through Vieta's product, which avoids cancellation for small s.
    """
    s = float(s)
    if not math.isfinite(s) or s < 0.0:
        raise DomainError(f"Laplace variable s must be >= 0, got {s}")
    rho, q = params.rho, params.q
    sigma = s + 1.0 + rho + q
    prod = s * q + rho + q
    disc = sigma * sigma - 4.0 * prod
    if disc <= 0.0 and s > 0.0:
        raise DomainError(f"discriminant not positive at s={s}; out of supported range")
    u_plus = 0.5 * (sigma + math.sqrt(max(disc, 0.0)))
    u_minus = prod / u_plus
    c_plus = -(u_minus - q) / (u_plus - u_minus)
    c_minus = 1.0 - c_plus
    x = 1.0 - u_minus / u_plus
    return SpectralData(rho, q, s, u_minus, u_plus, c_plus, c_minus, x)


def kernel_R(sp: SpectralData, t):
    """Characteristic kernel R(t) = (1 - t/u_minus)^(c_minus - 1) (1 - t/u_plus)^(c_plus - 1).

    Accepts scalars or arrays with t <= u_minus; R(u_minus) = 0 exactly.
    Evaluated through logs since the exponents are fractional.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr > sp.u_minus * (1.0 + 1e-15)):
        raise DomainError("kernel_R requires t <= u_minus")
    a = np.clip(1.0 - t_arr / sp.u_minus, 0.0, None)
    b = 1.0 - t_arr / sp.u_plus
    with np.errstate(divide="ignore"):
        out = np.exp((sp.c_minus - 1.0) * np.log(a) + (sp.c_plus - 1.0) * np.log(b))
    out = np.where(a == 0.0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def characteristic_Z(sp: SpectralData, u: float, w: float, t):
    """Characteristic curve Z(u, w; t) = w r / (1 - w + w r) with r = R(t)/R(u).

    This is the value at abscissa t of the characteristic of the transformed
    transport equation passing through (u, w).  Z is a probability-like
    quantity: it stays in [0, 1] for w in [0, 1] and t in [0, u_minus].
    """
    r = kernel_R(sp, t) / kernel_R(sp, u)
    return w * r / ((1.0 - w) + w * r)


class StationaryLaw:
    """Stationary distribution of the number N of jobs seen by a batch.

    pmf(0) = 1 - rho/(1-q) and pmf(n) = (1 - rho/(1-q)) rho (rho+q)^(n-1)
    for n >= 1; the tail and mean have closed geometric forms.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self._p0 = 1.0 - params.rho / (1.0 - params.q)
        self._ratio = params.rho + params.q

    def pmf(self, n):
        n_arr = np.asarray(n)
        if np.any(n_arr < 0):
            raise DomainError("pmf defined for n >= 0")
        vals = np.where(
            n_arr == 0,
            self._p0,
            self._p0 * self.params.rho * self._ratio ** (np.maximum(n_arr, 1) - 1),
        )
        if vals.ndim == 0:
            return float(vals)
        return vals

    def tail(self, n: int) -> float:
        """P(N > n) for n >= 0."""
        if n < 0:
            raise DomainError("tail defined for n >= 0")
        # sum_{k>n} p0 rho T^(k-1) = p0 rho T^n / (1-T)
        return self._p0 * self.params.rho * self._ratio**n / (1.0 - self._ratio)

    def mean(self) -> float:
        return self.params.rho / ((1.0 - self.params.q) * (1.0 - self.params.rho - self.params.q))

"""Independent oracle: truncated solves of the conditional recurrences.

Everything in this module works directly on the jump-chain recurrence for
the conditional transforms e*_{n,b}(s) and conditional means M_{n,b}, with
the state space truncated at n_max and closed beyond it.  No generating
functions, kernels, or hypergeometrics are involved, which makes these
solvers an independent check of the analytic machinery in solver.py.

Truncation closures:
  * transforms: constant tail, e*_{n,b} = e*_{n_max,b} for n > n_max
    (transforms decrease in n, so this upper-bounds the truncated mass);
  * means: linear tail, M_{n,b} = M_{n_max,b} + (n - n_max) * slope_b with
    slope_b fitted to the last 10 rows (means grow asymptotically linearly
    in n).

Each solve reports the sensitivity of the result to halving n_max and warns
with TruncationWarning when that estimate exceeds 1e-6.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError, TruncationWarning
from .model import ModelParams, StationaryLaw, batch_pmf

_SENSITIVITY_WARN = 1e-6
_SLOPE_ROWS = 10


@dataclass
class ConditionalTable:
    """Converged truncation of a conditional recurrence.

    entries[n, b] holds e*_{n,b}(s) (kind="lst") or M_{n,b} (kind="mean")
    for 0 <= n <= n_max, 0 <= b <= b_max; column 0 is the boundary
    (ones for transforms, zeros for means).
    """

    kind: str
    s: float
    n_max: int
    b_max: int
    entries: np.ndarray
    params: ModelParams | None
    pmf: np.ndarray
    iterations: int
    truncation_sensitivity: float


class Bracket(NamedTuple):
    """Midpoint estimate with a rigorous half-width from tail bounds."""

    value: float
    half_width: float


def _geometric_tail_sum_lst(e: np.ndarray, q: float) -> np.ndarray:
    """S[n, b] = sum_m (1-q) q^(m-1) e[n+m, b] under the constant-tail closure.

    Backward recursion S[n] = (1-q) e[n+1] + q S[n+1]; at the boundary the
    closure e[n] = e[n_max] for n > n_max gives S[n_max] = e[n_max] exactly.
    """
    n_rows = e.shape[0]
    S = np.empty_like(e)
    S[n_rows - 1] = e[n_rows - 1]
    for n in range(n_rows - 2, -1, -1):
        S[n] = (1.0 - q) * e[n + 1] + q * S[n + 1]
    return S


def _geometric_tail_sum_mean(m: np.ndarray, q: float, slope: np.ndarray) -> np.ndarray:
    """Same weighted tail sum under the linear closure M[n] = M[n_max] + (n - n_max) slope."""
    n_rows = m.shape[0]
    S = np.empty_like(m)
    S[n_rows - 1] = m[n_rows - 1] + slope / (1.0 - q)
    for n in range(n_rows - 2, -1, -1):
        S[n] = (1.0 - q) * m[n + 1] + q * S[n + 1]
    return S


def _general_tail_sum(e: np.ndarray, pmf: np.ndarray, closure: np.ndarray) -> np.ndarray:
    """S[n, b] = sum_m pmf[m-1] e[n+m, b] for an arbitrary finite batch pmf.

    `closure` supplies rows n_max+1 .. n_max+m_max (shape (m_max, b_cols)).
    """
    n_rows = e.shape[0]
    ext = np.vstack([e, closure])
    S = np.zeros_like(e)
    for m in range(1, len(pmf) + 1):
        S += pmf[m - 1] * ext[m : m + n_rows]
    return S


def _iterate(
    kind: str,
    params: ModelParams,
    s: float,
    n_max: int,
    b_max: int,
    tol: float,
    max_iters: int,
    pmf: np.ndarray | None,
) -> tuple[np.ndarray, int]:
    rho, q = params.rho, params.q
    denom = s + 1.0 + rho
    n = np.arange(n_max + 1, dtype=float)[:, None]
    b = np.arange(1, b_max + 1, dtype=float)[None, :]
    w_self = b / (n + b)
    w_down = n / (n + b)

    e = np.ones((n_max + 1, b_max + 1)) if kind == "lst" else np.zeros((n_max + 1, b_max + 1))
    e[:, 0] = 1.0 if kind == "lst" else 0.0

    for it in range(1, max_iters + 1):
        body = e[:, 1:]
        if pmf is None:
            if kind == "lst":
                S = _geometric_tail_sum_lst(body, q)
            else:
                slope = (body[-1] - body[-1 - _SLOPE_ROWS]) / _SLOPE_ROWS
                S = _geometric_tail_sum_mean(body, q, slope)
        else:
            if kind == "lst":
                closure = np.repeat(body[-1:], len(pmf), axis=0)
            else:
                slope = (body[-1] - body[-1 - _SLOPE_ROWS]) / _SLOPE_ROWS
                steps = np.arange(1, len(pmf) + 1, dtype=float)[:, None]
                closure = body[-1:] + steps * slope[None, :]
            S = _general_tail_sum(body, pmf, closure)

        shifted_down = np.vstack([np.zeros((1, b_max)), body[:-1]])
        prev_col = e[:, :-1]
        new_body = (w_self * prev_col + w_down * shifted_down + rho * S) / denom
        if kind == "mean":
            new_body = new_body + 1.0 / denom

        delta = float(np.max(np.abs(new_body - body)))
        e[:, 1:] = new_body
        if delta < tol:
            return e, it
    raise ConvergenceError(
        f"conditional {kind} iteration did not reach tol={tol} in {max_iters} sweeps "
        f"(last sup-change {delta:.3e})"
    )


def _solve(
    kind: str,
    params: ModelParams,
    s: float,
    n_max: int,
    b_max: int,
    tol: float,
    max_iters: int,
    pmf: np.ndarray | None,
    check_truncation: bool,
) -> ConditionalTable:
    if n_max < 4 * _SLOPE_ROWS:
        raise DomainError(f"n_max must be at least {4 * _SLOPE_ROWS}")
    if b_max < 1:
        raise DomainError("b_max must be at least 1")
    entries, iters = _iterate(kind, params, s, n_max, b_max, tol, max_iters, pmf)
    sensitivity = float("nan")
    if check_truncation:
        half, _ = _iterate(kind, params, s, n_max // 2, b_max, tol, max_iters, pmf)
        window = n_max // 4
        sensitivity = float(np.max(np.abs(half[: window + 1] - entries[: window + 1])))
        if sensitivity > _SENSITIVITY_WARN:
            warnings.warn(
                f"halving n_max={n_max} moves {kind} oracle values by {sensitivity:.3e}; "
                "increase n_max",
                TruncationWarning,
                stacklevel=3,
            )
    used_pmf = batch_pmf(params, b_max) if pmf is None else np.asarray(pmf, dtype=float)
    return ConditionalTable(
        kind=kind,
        s=s,
        n_max=n_max,
        b_max=b_max,
        entries=entries,
        params=params,
        pmf=used_pmf,
        iterations=iters,
        truncation_sensitivity=sensitivity,
    )


def solve_conditional_lst(
    params: ModelParams,
    s: float,
    n_max: int = 400,
    b_max: int = 60,
    tol: float = 1e-12,
    max_iters: int = 100_000,
    pmf: np.ndarray | None = None,
    check_truncation: bool = True,
) -> ConditionalTable:
    """Fixed point of the conditional-transform recurrence, from an all-ones start.

    The sweep map is a sup-norm contraction with ratio (1+rho)/(s+1+rho), so
    for s > 0 convergence is geometric.  Pass `pmf` (P(B=m) for m=1..m_max)
    to override the geometric batch law; the geometric case uses an exact
    backward recursion for the arrival sum, the general case a padded dot.
    """
    if s < 0:
        raise DomainError("s must be >= 0")
    return _solve("lst", params, s, n_max, b_max, tol, max_iters, pmf, check_truncation)


def solve_conditional_means(
    params: ModelParams,
    n_max: int = 400,
    b_max: int = 60,
    tol: float = 1e-11,
    max_iters: int = 200_000,
    pmf: np.ndarray | None = None,
    check_truncation: bool = True,
) -> ConditionalTable:
    """Value iteration for the conditional means M_{n,b}, monotone from zero."""
    return _solve("mean", params, 0.0, n_max, b_max, tol, max_iters, pmf, check_truncation)


def column_generating(table: ConditionalTable, b: int, z) -> np.ndarray:
    """E_b(z) = sum_n entries[n, b] z^n evaluated by Horner's rule; vectorized in z."""
    if not 0 <= b <= table.b_max:
        raise DomainError(f"column {b} outside table (b_max={table.b_max})")
    col = table.entries[:, b]
    z_arr = np.asarray(z, dtype=float)
    acc = np.zeros_like(z_arr)
    for coef in col[::-1]:
        acc = acc * z_arr + coef
    return acc


def generating_value(table: ConditionalTable, u: float, v: float) -> float:
    """sum_{n,b>=1} entries[n, b] u^n v^b over the stored window (no tail)."""
    n_pow = u ** np.arange(table.n_max + 1)
    b_pow = v ** np.arange(1, table.b_max + 1)
    return float(n_pow @ table.entries[:, 1:] @ b_pow)


def aggregate_lst(table: ConditionalTable, params: ModelParams) -> Bracket:
    """E[exp(-s Omega)] = sum_{n,b} P(N=n) P(B=b) e*_{n,b} with bracketed tails.

    Transforms decrease in n and in b, so replacing the tail by the boundary
    row/column upper-bounds it and zero lower-bounds it.
    """
    if table.kind != "lst":
        raise DomainError("aggregate_lst needs a transform table")
    law = StationaryLaw(params)
    pN = law.pmf(np.arange(table.n_max + 1))
    pB = batch_pmf(params, table.b_max)
    body = table.entries[:, 1:]
    window = float(pN @ body @ pB)
    tail_n = law.tail(table.n_max)
    tail_b = params.q**table.b_max
    upper = (
        tail_n * float(pB @ body[-1])
        + tail_b * float(pN @ body[:, -1])
        + tail_n * tail_b * float(body[-1, -1])
    )
    return Bracket(window + 0.5 * upper, 0.5 * upper)


def aggregate_mean(table: ConditionalTable, params: ModelParams) -> Bracket:
    """E[Omega] = sum_{n,b} P(N=n) P(B=b) M_{n,b} with bracketed tails.

    Lower bound freezes the tail at the boundary values (means increase in n
    and b); upper bound extends them linearly at the boundary slopes, which
    dominates because the increments of M are decreasing toward their
    asymptotic slope (checked empirically in the test suite).
    """
    if table.kind != "mean":
        raise DomainError("aggregate_mean needs a means table")
    law = StationaryLaw(params)
    q = params.q
    pN = law.pmf(np.arange(table.n_max + 1))
    pB = batch_pmf(params, table.b_max)
    body = table.entries[:, 1:]
    window = float(pN @ body @ pB)

    slope_n = (body[-1] - body[-1 - _SLOPE_ROWS]) / _SLOPE_ROWS  # per column b
    slope_b = (body[:, -1] - body[:, -1 - _SLOPE_ROWS]) / _SLOPE_ROWS  # per row n

    T = params.rho + q
    p0 = 1.0 - params.rho / (1.0 - q)
    # sum_{n>n_max} P(N=n) and sum_{n>n_max} (n-n_max) P(N=n)
    A1 = p0 * params.rho * T**table.n_max / (1.0 - T)
    A2 = p0 * params.rho * T**table.n_max / (1.0 - T) ** 2
    # sum_{b>b_max} P(B=b) and sum_{b>b_max} (b-b_max) P(B=b)
    B1 = q**table.b_max
    B2 = q**table.b_max / (1.0 - q)

    lower = window + A1 * float(pB @ body[-1]) + B1 * float(pN @ body[:, -1])
    lower += A1 * B1 * float(body[-1, -1])
    upper = window + A1 * float(pB @ body[-1]) + A2 * float(pB @ slope_n)
    upper += B1 * float(pN @ body[:, -1]) + B2 * float(pN @ slope_b)
    upper += A1 * B1 * float(body[-1, -1]) + A2 * B1 * float(slope_n[-1]) + A1 * B2 * float(
        slope_b[-1]
    )
    return Bracket(0.5 * (lower + upper), 0.5 * (upper - lower) + 1e-300)

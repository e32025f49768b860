"""Scalar special functions and Beta-weighted quadrature.

The interval density and its likelihood reduce to confluent hypergeometric
evaluations plus expectations under a Beta weight whose integrands can be
steep or endpoint-singular.  This module owns those numerics: log-gamma,
digamma, log-beta, a 1F1 evaluator with regime switching, and a fixed-order
Gauss-Legendre rule with endpoint-flattening substitutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = [
    "PrecisionLossError",
    "IntegrationError",
    "QuadratureConfig",
    "DEFAULT_QUADRATURE",
    "log_gamma",
    "digamma",
    "log_beta",
    "kummer_1f1",
    "beta_expectation",
]


class PrecisionLossError(ArithmeticError):
    """No evaluation regime reached the requested accuracy."""


class IntegrationError(ArithmeticError):
    """Quadrature failed, typically on a non-finite integrand value."""


@dataclass(frozen=True)
class QuadratureConfig:
    """Policy knobs for the Beta-weighted fixed-order quadrature.

    node_count: Gauss-Legendre order used on each transformed subdomain.
    substitution_exponent_threshold: shapes below this always get the exact
        power substitution (x = u**(1/shape)); above it an integer-flattening
        variant is used, see _flatten_exponent.
    relative_tolerance: accuracy target used when truncating series tails
        and exponential cutoffs derived from this config.
    """

    node_count: int = 200
    substitution_exponent_threshold: float = 1.0
    relative_tolerance: float = 1e-10

    def __post_init__(self) -> None:
        if self.node_count < 16:
            raise ValueError("node_count must be at least 16")
        if not (self.substitution_exponent_threshold > 0):
            raise ValueError("substitution_exponent_threshold must be positive")
        if not (0 < self.relative_tolerance < 1):
            raise ValueError("relative_tolerance must be in (0, 1)")


DEFAULT_QUADRATURE = QuadratureConfig()


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def log_gamma(z: float) -> float:
    """Natural log of the Gamma function for z > 0."""
    z = _require_finite("z", z)
    if z <= 0.0:
        raise ValueError(f"log_gamma requires z > 0, got {z}")
    return math.lgamma(z)


def digamma(z: float) -> float:
    """Logarithmic derivative of Gamma for z > 0.

    Uses the downward recurrence psi(z) = psi(z + 1) - 1/z to push the
    argument above 10, then the asymptotic series in Bernoulli numbers.
    Absolute error is comfortably below 1e-12 on (0, 1e6].
    """
    z = _require_finite("z", z)
    if z <= 0.0:
        raise ValueError(f"digamma requires z > 0, got {z}")
    acc = 0.0
    while z < 10.0:
        acc -= 1.0 / z
        z += 1.0
    inv2 = 1.0 / (z * z)
    # B_{2n}/(2n) coefficients: 1/12, -1/120, 1/252, -1/240, 1/132, -691/32760
    tail = inv2 * (
        1.0 / 12.0
        - inv2
        * (
            1.0 / 120.0
            - inv2
            * (
                1.0 / 252.0
                - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0)))
            )
        )
    )
    return acc + math.log(z) - 0.5 / z - tail


def log_beta(a: float, b: float) -> float:
    """log B(a, b) = log_gamma(a) + log_gamma(b) - log_gamma(a + b)."""
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


# 1F1 evaluation.  Only z <= 0 appears in the density and likelihood; the
# direct alternating series loses roughly e^{|z|} * eps of precision, which
# is fatal already near |z| = 12, so for negative arguments we always work
# through the Kummer transform 1F1(a,b;z) = e^z 1F1(b-a,b;-z) whose series
# has positive terms, and switch to the asymptotic expansion for large |z|.
_ASYM_SWITCH = 300.0
_MAX_SERIES_TERMS = 1800
_SERIES_STOP = 1e-17


def _series_pos(a: float, b: float, z: float) -> float:
    """Taylor series of 1F1(a, b; z) for z >= 0 with a, b > 0 (positive terms)."""
    term = 1.0
    total = 1.0
    for k in range(_MAX_SERIES_TERMS):
        term *= z * (a + k) / ((b + k) * (k + 1.0))
        total += term
        if term <= _SERIES_STOP * total:
            return total
    raise PrecisionLossError(
        f"1F1 series did not converge for a={a}, b={b}, z={z}"
    )


def _log_transformed_series(a: float, b: float, w: np.ndarray) -> np.ndarray:
    """log 1F1(a, b; -w) via exp(-w) * 1F1(b-a, b; w), elementwise, 0 <= w < ~300.

    The series needs roughly w + O(sqrt(w)) terms, so rows are grouped
    into bands of similar w and each band iterates only as long as it
    must.  With millisecond-quantized data most rows sit in the small-w
    bands, which makes this the difference between a fast and a slow
    likelihood evaluation.
    """
    out = np.empty_like(w)
    order = np.argsort(w, kind="stable")
    ws = w[order]
    edges = np.searchsorted(ws, [1.0, 4.0, 16.0, 64.0], side="right")
    bounds = [0, *edges.tolist(), ws.size]
    ap = b - a
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == hi:
            continue
        wb = ws[lo:hi]
        term = np.ones_like(wb)
        total = np.ones_like(wb)
        for k in range(_MAX_SERIES_TERMS):
            term = term * wb * ((ap + k) / ((b + k) * (k + 1.0)))
            total += term
            if term[-1] <= _SERIES_STOP * total[-1] and np.all(
                term <= _SERIES_STOP * total
            ):
                break
        else:
            raise PrecisionLossError("transformed 1F1 series did not converge")
        out[order[lo:hi]] = np.log(total) - wb
    return out


def _asym_1f1_neg(a: float, b: float, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Asymptotic form of 1F1(a, b; -w) for large w.

    Returns (log value, S) where 1F1(a,b;-w) = Gamma(b)/Gamma(b-a) * w^-a * S
    and S = sum_s (a)_s (a-b+1)_s / (s! w^s), truncated at the smallest term
    (optimal truncation).  Raises PrecisionLossError if the smallest term is
    still too large relative to the sum.
    """
    term = np.ones_like(w)
    total = np.ones_like(w)
    active = np.ones(w.shape, dtype=bool)
    for s in range(80):
        nxt = term * ((a + s) * (a - b + 1.0 + s) / ((s + 1.0) * w))
        grew = np.abs(nxt) >= np.abs(term)
        active &= ~grew
        total = np.where(active, total + nxt, total)
        term = np.where(active, nxt, term)
        if not np.any(active & (np.abs(term) > _SERIES_STOP * np.abs(total))):
            break
    resid = np.abs(term) / np.abs(total)
    if np.any(resid > 1e-9) or np.any(total <= 0.0):
        raise PrecisionLossError(
            f"asymptotic 1F1 failed for a={a}, b={b}, min w={w.min():g}"
        )
    log_val = (
        np.log(total) + log_gamma(b) - log_gamma(b - a) - a * np.log(w)
    )
    return log_val, total


def _log_hyp1f1_neg(a: float, b: float, w: np.ndarray) -> np.ndarray:
    """log 1F1(a, b; -w) elementwise for w >= 0, b > a > 0."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    small = w < _ASYM_SWITCH
    if small.any():
        out[small] = _log_transformed_series(a, b, w[small])
    big = ~small
    if big.any():
        out[big] = _asym_1f1_neg(a, b, w[big])[0]
    return out


def kummer_1f1(a: float, b: float, z: float) -> float:
    """Confluent hypergeometric 1F1(a, b; z) for b > a > 0.

    Relative error is ~1e-13 for z <= 0 (the regime the interval density
    uses) and for moderate positive z.  Raises PrecisionLossError when no
    regime can meet tolerance (very large positive z).
    """
    a = _require_finite("a", a)
    b = _require_finite("b", b)
    z = _require_finite("z", z)
    if not (b > a > 0.0):
        raise ValueError(f"kummer_1f1 requires b > a > 0, got a={a}, b={b}")
    if z == 0.0:
        return 1.0
    if z > 0.0:
        if z > 700.0:
            raise PrecisionLossError(
                f"1F1 overflows in double precision for z={z}"
            )
        return _series_pos(a, b, z)
    return float(np.exp(_log_hyp1f1_neg(a, b, np.array([-z])))[0])


# Beta-weighted quadrature.


@lru_cache(maxsize=8)
def _gl_nodes01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _flatten_exponent(shape: float, threshold: float) -> int:
    """Integer l such that x = u**(l/shape) turns x^{shape-1} dx into u^{l-1} du.

    Below the threshold this is the exact endpoint substitution (l = 1).
    Above it we still substitute, with l chosen so the residual branch
    exponent l/shape stays >= 1.5; a bare non-integer power x^{shape-1}
    otherwise caps fixed-order Gauss-Legendre near 1e-7.
    """
    if shape < threshold:
        return 1
    return max(1, math.ceil(1.5 * shape - 1e-9))


def _beta_nodes_full(
    a: float, b: float, cfg: QuadratureConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes x, their complements 1-x, and weights for int f(x) Beta(x;a,b) dx.

    The domain is split at 1/2; each half gets the power substitution that
    absorbs its endpoint weight exactly, so sum(w_i) = 1 to quadrature
    accuracy and f is only ever evaluated at interior points.  The 1-x array
    is computed analytically per piece so callers can take log(1-x) without
    cancellation.
    """
    u, gw = _gl_nodes01(cfg.node_count)
    thr = cfg.substitution_exponent_threshold
    ln_b = log_beta(a, b)

    xs = []
    omxs = []
    wts = []

    # Left half, endpoint weight x^{a-1}.
    la = _flatten_exponent(a, thr)
    qa = la / a
    ua = 0.5 ** (1.0 / qa)
    un = u * ua
    x = un ** qa * 1.0
    omx = 1.0 - x
    logw = (
        np.log(gw)
        + math.log(qa)
        + la * math.log(ua)
        + (la - 1.0) * np.log(u)
        + (b - 1.0) * np.log(omx)
        - ln_b
    )
    xs.append(x)
    omxs.append(omx)
    wts.append(np.exp(logw))

    # Right half, endpoint weight (1-x)^{b-1}.
    lb = _flatten_exponent(b, thr)
    qb = lb / b
    ub = 0.5 ** (1.0 / qb)
    vn = u * ub
    omx = vn ** qb * 1.0
    x = 1.0 - omx
    logw = (
        np.log(gw)
        + math.log(qb)
        + lb * math.log(ub)
        + (lb - 1.0) * np.log(u)
        + (a - 1.0) * np.log(x)
        - ln_b
    )
    xs.append(x)
    omxs.append(omx)
    wts.append(np.exp(logw))

    return np.concatenate(xs), np.concatenate(omxs), np.concatenate(wts)


def beta_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> float:
    """Expectation of f under Beta(a, b) by fixed-order transformed quadrature.

    f is called with an array of interior nodes and should return values of
    the same shape (a scalar-only callable is looped over).  Non-finite
    integrand values raise IntegrationError.
    """
    a = _require_finite("a", a)
    b = _require_finite("b", b)
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"beta_expectation requires a, b > 0, got a={a}, b={b}")
    x, _, w = _beta_nodes_full(a, b, cfg)
    vals = f(x)
    arr = np.asarray(vals, dtype=float)
    if arr.shape != x.shape:
        arr = np.array([float(f(xi)) for xi in x])
    if not np.all(np.isfinite(arr)):
        raise IntegrationError("integrand returned non-finite values at nodes")
    return float(np.dot(w, arr))

"""Penalized log-likelihood of an interval set and its exact gradient.

For intervals tau_i the likelihood of one interval is the marginal density
rho r(tau) <x E(x)> with E(x) = exp(-rho x R(tau)), so

    L = N c + sum_i log r(tau_i) + sum_i log <x E_i(x)>,

where <.> averages over the Beta(a, b) priority.  The Beta-exponential
moments reduce to Kummer functions: <x E> = [a/(a+b)] 1F1(a+1, a+b+1; -w)
with w = rho R(tau), and <x^2 E>/<x E> = [(a+1)/(a+b+1)] F1''/F1'.  The
shape gradients additionally need <E log x> and <E log(1-x)> under
Beta(a+1, b); those have no closed form and are integrated numerically.
<E log x> is taken by direct quadrature (every term shares the sign of
log x, so nothing cancels); for <E log(1-x)> the flat part of E is split
off analytically (digamma) so the quadrature integrand vanishes at the
log(1-x) endpoint.

Everything hypergeometric is carried in log space, so month-long gaps
(w ~ 1e7 and beyond) lose no precision to underflow.  Interval values are
aggregated by multiplicity first; millisecond-quantized recordings make
this a large constant-factor win and it keeps the summation order fixed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, RefractoryKernel, VARIANTS, _variant_spec
from .special import (
    DEFAULT_QUADRATURE,
    QuadratureConfig,
    _beta_nodes_full,
    _flatten_exponent,
    _gl_nodes01,
    _log_hyp1f1_neg,
    digamma,
)

__all__ = [
    "ItiSet",
    "ObjectiveValue",
    "InfeasibleParamsError",
    "log_likelihood",
    "objective",
    "gradient",
    "effective_reg_weight",
]

# Rows are processed in blocks so the (intervals x nodes) work arrays stay
# cache-friendly and bounded in memory.
_CHUNK = 8192

# Above this w = rho R(tau), <E f(x)> integrals switch from Beta-weighted
# quadrature on (0,1) to a rescaled integral truncated at _LAPLACE_TRUNC,
# where exp(-t) has decayed below 1e-26.  The switch keeps t/w <= 0.6 so
# the (1 - t/w)^(b-1) factor stays smooth.
_LAPLACE_SWITCH = 100.0
_LAPLACE_TRUNC = 60.0


class InfeasibleParamsError(ValueError):
    """The kernel drives the event rate nonpositive at an observed interval."""


@dataclass(frozen=True)
class ObjectiveValue:
    """Penalized objective split into its two parts."""

    log_likelihood: float
    penalty: float
    objective: float


@dataclass(frozen=True, eq=False)
class ItiSet:
    """A set of positive inter-event intervals in seconds.

    Carries lazily built caches (unique values with multiplicities, and
    per-kernel-grid basis matrices) shared by repeated likelihood calls on
    the same data.
    """

    intervals: np.ndarray

    def __post_init__(self) -> None:
        iv = np.asarray(self.intervals, dtype=float).ravel().copy()
        if iv.size < 1:
            raise ValueError("need at least one interval")
        if not np.all(np.isfinite(iv)) or iv.min() <= 0.0:
            raise ValueError("intervals must be positive and finite")
        iv.setflags(write=False)
        object.__setattr__(self, "intervals", iv)
        object.__setattr__(self, "_cache", {})

    @property
    def n(self) -> int:
        return int(self.intervals.size)

    @property
    def digest(self) -> str:
        """Short content hash, used to tie fit artifacts to their data."""
        got = self._cache.get("digest")
        if got is None:
            got = hashlib.sha256(
                np.ascontiguousarray(self.intervals).tobytes()
            ).hexdigest()[:16]
            self._cache["digest"] = got
        return got

    def _unique(self) -> tuple[np.ndarray, np.ndarray]:
        cache = self._cache
        got = cache.get("unique")
        if got is None:
            tau, cnt = np.unique(self.intervals, return_counts=True)
            got = (tau, cnt.astype(float))
            cache["unique"] = got
        return got

    def _basis(self, alpha: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
        """exp(-alpha_k tau_i) and (1 - exp(-alpha_k tau_i))/alpha_k."""
        cache = self._cache
        got = cache.get(alpha)
        if got is None:
            tau, _ = self._unique()
            al = np.asarray(alpha)
            decay = np.exp(-tau[:, None] * al)
            got = (decay, (1.0 - decay) / al)
            cache[alpha] = got
        return got


def effective_reg_weight(variant: str, reg_weight: float | None = None) -> float:
    """Resolve the penalty weight: variant default, overridable, but always
    zero for kernel-free variants."""
    spec = VARIANTS.get(variant)
    weight = spec.reg_weight if spec is not None else 0.0
    if reg_weight is not None:
        weight = float(reg_weight)
    if spec is not None and spec.n_kernel_terms == 0:
        weight = 0.0
    if not (math.isfinite(weight) and weight >= 0.0):
        raise ValueError(f"reg_weight must be nonnegative, got {weight}")
    return weight


def _grad_shape_ratios(
    a: float,
    b: float,
    w: np.ndarray,
    log_f1: np.ndarray,
    need_k: bool,
    cfg: QuadratureConfig,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """<E log x> / <E>, <E log(1-x)> / <E>, and <E x> / <E> under Beta(a+1, b).

    The last ratio equals <x^2 E>/<x E> under Beta(a, b), which the rate
    and kernel gradients need; sharing the nodes here is much cheaper
    than a second hypergeometric evaluation.
    """
    out_j = np.empty_like(w)
    out_k = np.empty_like(w) if need_k else None
    out_m = np.empty_like(w)

    small = np.nonzero(w <= _LAPLACE_SWITCH)[0]
    if small.size:
        x, omx, wts = _beta_nodes_full(a + 1.0, b, cfg)
        w_logx = wts * np.log(x)
        # for b small enough the endpoint substitution underflows 1 - x
        # to zero at its innermost nodes; their true contribution to the
        # (E - E(1)) log(1-x) integral vanishes, so drop them instead of
        # letting log(0) poison the matmul
        with np.errstate(divide="ignore"):
            w_logomx = wts * np.log(omx)
        w_logomx[~np.isfinite(w_logomx)] = 0.0
        w_x = wts * x
        gap_k = digamma(b) - digamma(a + 1.0 + b)
        for lo in range(0, small.size, _CHUNK):
            rows = small[lo : lo + _CHUNK]
            f1 = np.exp(log_f1[rows])
            ew = np.exp(-w[rows, None] * x[None, :])
            # direct quadrature: every term has the sign of log x, so no
            # cancellation at any w (the log endpoint is tamed by the
            # node substitution since the shape a+1 exceeds 1)
            out_j[rows] = (ew @ w_logx) / f1
            out_m[rows] = (ew @ w_x) / f1
            if need_k:
                # split: quadrature sees E - E(1), which vanishes at the
                # log(1-x) endpoint; the remainder is exact in digammas
                e_at_1 = np.exp(-w[rows])
                kval = (ew - e_at_1[:, None]) @ w_logomx + e_at_1 * gap_k
                out_k[rows] = kval / f1

    big = np.nonzero(w > _LAPLACE_SWITCH)[0]
    if big.size:
        # rescaled t = w x, truncated; shared powers of w cancel in ratios
        flat = max(2, _flatten_exponent(a + 1.0, 0.0))
        q = flat / (a + 1.0)
        u, gu = _gl_nodes01(cfg.node_count)
        t = _LAPLACE_TRUNC * u**q
        base = gu * u ** (flat - 1)
        log_t = np.log(t)
        for lo in range(0, big.size, _CHUNK):
            rows = big[lo : lo + _CHUNK]
            tw = t[None, :] / w[rows, None]
            fac = np.exp(-t)[None, :] * (1.0 - tw) ** (b - 1.0)
            g_f = fac @ base
            g_j = (fac * log_t[None, :]) @ base
            out_j[rows] = g_j / g_f - np.log(w[rows])
            out_m[rows] = ((fac * tw) @ base) / g_f
            if need_k:
                out_k[rows] = ((fac * np.log1p(-tw)) @ base) / g_f
    return out_j, out_k, out_m


def _evaluate(
    a: float,
    b: float,
    c: float,
    gamma: np.ndarray,
    alpha: tuple[float, ...],
    data: ItiSet,
    reg_weight: float,
    want_grad: bool,
    free_b: bool,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> tuple[ObjectiveValue, np.ndarray | None]:
    """Objective (and gradient in packing order a, [b], c, gammas)."""
    tau, cnt = data._unique()
    n_data = float(data.n)
    if gamma.size:
        decay, decay_int = data._basis(alpha)
        r = 1.0 + decay @ gamma
        if r.min() <= 0.0:
            raise InfeasibleParamsError(
                "rate modulation r(tau) <= 0 at an observed interval"
            )
        big_r = tau + decay_int @ gamma
        log_r_sum = float(cnt @ np.log(r))
    else:
        r = None
        big_r = tau
        log_r_sum = 0.0

    rho = math.exp(c)
    w = rho * big_r
    if w.min() <= 0.0:
        raise InfeasibleParamsError("integrated rate R(tau) <= 0 at an interval")

    log_f1 = _log_hyp1f1_neg(a + 1.0, a + b + 1.0, w)
    loglik = (
        n_data * c
        + log_r_sum
        + n_data * (math.log(a) - math.log(a + b))
        + float(cnt @ log_f1)
    )
    penalty = reg_weight * float(gamma @ gamma)
    value = ObjectiveValue(loglik, penalty, loglik - penalty)
    if not want_grad:
        return value, None

    ratio_j, ratio_k, ratio2 = _grad_shape_ratios(a, b, w, log_f1, free_b, cfg)

    grad = [float(cnt @ ratio_j) - n_data * (digamma(a) - digamma(a + b))]
    if free_b:
        grad.append(float(cnt @ ratio_k) - n_data * (digamma(b) - digamma(a + b)))
    grad.append(n_data - rho * float(cnt @ (big_r * ratio2)))
    if gamma.size:
        weighted = cnt * ratio2
        d_gamma = (cnt / r) @ decay - rho * (weighted @ decay_int)
        d_gamma -= 2.0 * reg_weight * gamma
        grad.extend(d_gamma)
    return value, np.asarray(grad)


def _params_pieces(params: ModelParams):
    gamma = np.asarray(params.kernel.gamma, dtype=float)
    return params.a, params.b, params.c, gamma, params.kernel.alpha


def log_likelihood(params: ModelParams, data: ItiSet) -> float:
    """Exact log-likelihood of the interval set under params."""
    a, b, c, gamma, alpha = _params_pieces(params)
    value, _ = _evaluate(a, b, c, gamma, alpha, data, 0.0, False, False)
    return value.log_likelihood


def objective(
    params: ModelParams, data: ItiSet, reg_weight: float | None = None
) -> ObjectiveValue:
    """Penalized objective: log-likelihood minus reg_weight * sum gamma^2.

    The weight defaults to the variant rule (0.01 with a kernel, 0
    without) and is forced to zero for kernel-free variants even when
    passed explicitly.
    """
    a, b, c, gamma, alpha = _params_pieces(params)
    weight = effective_reg_weight(params.variant, reg_weight)
    value, _ = _evaluate(a, b, c, gamma, alpha, data, weight, False, False)
    return value


def gradient(
    params: ModelParams, data: ItiSet, reg_weight: float | None = None
) -> np.ndarray:
    """Analytic gradient of the penalized objective over the variant's free
    coordinates, ordered a, [b], c, gamma_1..gamma_n."""
    spec = _variant_spec(params.variant)
    a, b, c, gamma, alpha = _params_pieces(params)
    weight = effective_reg_weight(params.variant, reg_weight)
    _, grad = _evaluate(
        a, b, c, gamma, alpha, data, weight, True, spec.free_b
    )
    return grad


_VARIANT_ALPHA: dict[str, tuple[float, ...]] = {}


def _variant_alpha(variant: str) -> tuple[float, ...]:
    alpha = _VARIANT_ALPHA.get(variant)
    if alpha is None:
        n = VARIANTS[variant].n_kernel_terms
        kernel = RefractoryKernel.log_spaced([0.0] * n) if n else RefractoryKernel.none()
        alpha = kernel.alpha
        _VARIANT_ALPHA[variant] = alpha
    return alpha


def _vector_objective(
    vec: np.ndarray,
    variant: str,
    data: ItiSet,
    reg_weight: float,
    want_grad: bool,
) -> tuple[ObjectiveValue | None, np.ndarray | None]:
    """Objective on a packed vector; None signals out-of-domain/infeasible.

    This is the fitter's entry point: it must be able to probe points
    where ModelParams construction would fail (a <= 0, negative kernel)
    and see them rejected rather than raised.
    """
    spec = _variant_spec(variant)
    a = float(vec[0])
    idx = 1
    if spec.free_b:
        b = float(vec[idx])
        idx += 1
    else:
        b = 1.0
    c = float(vec[idx])
    idx += 1
    gamma = np.asarray(vec[idx:], dtype=float)
    if not (a > 0.0 and b > 0.0 and math.isfinite(a + b + c)):
        return None, None
    try:
        return _evaluate(
            a, b, c, gamma, _variant_alpha(variant), data,
            reg_weight, want_grad, spec.free_b,
        )
    except InfeasibleParamsError:
        return None, None

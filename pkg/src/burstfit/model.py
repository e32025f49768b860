"""Parameter types and closed-form quantities of the bursty renewal model.

An event train is modeled as a renewal process whose hazard a waiting time
tau after the last event is rho * x * r(tau): rho = e^c is the base rate in
Hz, x in (0, 1] is a latent priority drawn once per interval from a
Beta(a, b) distribution, and r is a refractory kernel modulating short
waits.  Marginalizing over x turns the exponential mixture into a density
with a power-law tail of exponent -(a + 1).

All times are seconds and all rates Hz.  The log rate c = log(rho) is the
coordinate used by the fitter, so ModelParams stores c rather than rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special import _log_hyp1f1_neg, log_beta, log_gamma

__all__ = [
    "RefractoryKernel",
    "ModelParams",
    "PriorityTransform",
    "VariantSpec",
    "VARIANTS",
    "refractory_eval",
    "refractory_integral",
    "iti_density",
    "iti_density_conditional",
    "iti_tail_asymptote",
    "apply_priority_transform",
    "free_param_names",
    "params_to_vector",
    "vector_to_params",
]

# Slowest decay timescale (seconds) implied by the number of kernel terms.
_SLOWEST_TIMESCALE = {8: 1.0, 12: 1.5}

# Negative kernel values closer to zero than this are treated as exact zeros.
_KERNEL_DUST = 1e-12


@dataclass(frozen=True)
class RefractoryKernel:
    """Short-range rate modulation r(tau) = 1 + sum_k gamma_k exp(-alpha_k tau).

    ``alpha`` is strictly decreasing, so ``gamma[0]`` belongs to the fastest
    decaying component.  An empty kernel (n = 0) leaves the rate flat.
    """

    gamma: tuple[float, ...] = ()
    alpha: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        gamma = tuple(float(g) for g in self.gamma)
        alpha = tuple(float(al) for al in self.alpha)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "alpha", alpha)
        if len(gamma) != len(alpha):
            raise ValueError("gamma and alpha must have equal length")
        if not all(math.isfinite(g) for g in gamma):
            raise ValueError("kernel amplitudes must be finite")
        if not all(al > 0.0 and math.isfinite(al) for al in alpha):
            raise ValueError("kernel decay rates must be positive and finite")
        if any(hi <= lo for hi, lo in zip(alpha, alpha[1:])):
            raise ValueError("kernel decay rates must be strictly decreasing")

    @property
    def n(self) -> int:
        return len(self.gamma)

    @property
    def spacing_ratio(self) -> float:
        """Ratio between consecutive decay timescales (1.0 when n < 2)."""
        if self.n < 2:
            return 1.0
        return (self.alpha[0] / self.alpha[-1]) ** (1.0 / (self.n - 1))

    @classmethod
    def none(cls) -> "RefractoryKernel":
        """The empty kernel, r(tau) identically 1."""
        return cls((), ())

    @classmethod
    def log_spaced(
        cls,
        gamma,
        fastest_timescale: float = 0.050,
        slowest_timescale: float | None = None,
    ) -> "RefractoryKernel":
        """Kernel with decay timescales geometrically spaced between two limits.

        With 8 amplitudes the timescales run from 50 ms to 1 s, with 12 from
        50 ms to 1.5 s.  Any other size needs ``slowest_timescale`` spelled
        out (a single amplitude sits at the fastest timescale).
        """
        gamma = tuple(float(g) for g in gamma)
        n = len(gamma)
        if n == 0:
            return cls.none()
        if n == 1:
            return cls(gamma, (1.0 / fastest_timescale,))
        if slowest_timescale is None:
            slowest_timescale = _SLOWEST_TIMESCALE.get(n)
            if slowest_timescale is None:
                raise ValueError(
                    f"no default timescale span for {n} kernel terms; "
                    "pass slowest_timescale explicitly"
                )
        if not 0.0 < fastest_timescale < slowest_timescale:
            raise ValueError("need 0 < fastest_timescale < slowest_timescale")
        a_first = 1.0 / fastest_timescale
        a_last = 1.0 / slowest_timescale
        step = (a_first / a_last) ** (1.0 / (n - 1))
        alpha = tuple(a_first * step ** (-k) for k in range(n))
        return cls(gamma, alpha)


@dataclass(frozen=True)
class VariantSpec:
    """Shape of one model variant: which coordinates are free."""

    name: str
    n_kernel_terms: int
    free_b: bool
    n_params: int
    reg_weight: float


VARIANTS = {
    "M1": VariantSpec("M1", 0, False, 2, 0.0),
    "M2": VariantSpec("M2", 0, True, 3, 0.0),
    "M3": VariantSpec("M3", 8, False, 10, 0.01),
    "M4": VariantSpec("M4", 8, True, 11, 0.01),
    "M5": VariantSpec("M5", 12, True, 15, 0.01),
}


def _infer_variant(n_kernel_terms: int, b: float) -> str:
    if n_kernel_terms == 0:
        return "M1" if b == 1.0 else "M2"
    if n_kernel_terms == 8:
        return "M3" if b == 1.0 else "M4"
    if n_kernel_terms == 12:
        return "M5"
    # Kernel sizes outside the variant table are allowed for simulation and
    # density evaluation but cannot be packed or fitted.
    return "custom"


@dataclass(frozen=True)
class ModelParams:
    """One point in parameter space: priority shapes, log rate, kernel.

    ``variant`` may be left None, in which case the smallest variant
    consistent with the kernel size and b is picked.
    """

    a: float
    b: float
    c: float
    kernel: RefractoryKernel = RefractoryKernel.none()
    variant: str | None = None

    def __post_init__(self) -> None:
        a = float(self.a)
        b = float(self.b)
        c = float(self.c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if not (math.isfinite(a) and a > 0.0):
            raise ValueError(f"a must be positive and finite, got {a}")
        if not (math.isfinite(b) and b > 0.0):
            raise ValueError(f"b must be positive and finite, got {b}")
        if not math.isfinite(c):
            raise ValueError(f"c must be finite, got {c}")
        variant = self.variant or _infer_variant(self.kernel.n, b)
        spec = VARIANTS.get(variant)
        if spec is None:
            if variant != "custom":
                raise ValueError(f"unknown variant {variant!r}")
        else:
            if spec.n_kernel_terms != self.kernel.n:
                raise ValueError(
                    f"variant {variant} needs {spec.n_kernel_terms} kernel "
                    f"terms, kernel has {self.kernel.n}"
                )
            if not spec.free_b and b != 1.0:
                raise ValueError(f"variant {variant} fixes b = 1, got b={b}")
        object.__setattr__(self, "variant", variant)

    @property
    def rho(self) -> float:
        """Base event rate in Hz."""
        return math.exp(self.c)


@dataclass(frozen=True)
class PriorityTransform:
    """Strictly increasing power map x -> x**exponent on [0, 1]."""

    exponent: float

    def __post_init__(self) -> None:
        k = float(self.exponent)
        if not (math.isfinite(k) and k > 0.0):
            raise ValueError(f"exponent must be positive and finite, got {k}")
        object.__setattr__(self, "exponent", k)

    def __call__(self, x):
        return np.power(x, self.exponent)


def apply_priority_transform(
    transform: PriorityTransform, a: float, a_other: float
) -> tuple[float, float]:
    """Map a pair of power-density shapes under the transform.

    For priorities with densities proportional to x**(a-1) and
    y**(a_other-1), substituting x -> x**k gives an equivalent model with
    shapes (k*a, k*a_other); interval statistics depend only on the ratio
    a / a_other, which this map preserves.
    """
    k = transform.exponent
    return (k * a, k * a_other)


def _as_times(tau, minimum: float):
    """Flatten tau to a validated float vector, remembering the input shape."""
    shape = np.shape(tau)
    t = np.asarray(tau, dtype=float).ravel()
    if not np.all(np.isfinite(t)):
        raise ValueError("tau must be finite")
    if t.size and t.min() < minimum:
        raise ValueError(f"tau must be >= {minimum}")
    return t, shape


def _restore(values: np.ndarray, shape) -> float | np.ndarray:
    if shape == ():
        return float(values[0])
    return values.reshape(shape)


def refractory_eval(kernel: RefractoryKernel, tau):
    """r(tau) = 1 + sum_k gamma_k exp(-alpha_k tau), elementwise.

    Values within -1e-12 of zero are clamped to exactly 0; anything more
    negative is returned untouched so constraint handling can see the
    violation instead of a silently repaired kernel.
    """
    t, shape = _as_times(tau, minimum=0.0)
    out = np.ones_like(t)
    if kernel.n:
        g = np.asarray(kernel.gamma)
        al = np.asarray(kernel.alpha)
        out = out + np.exp(-t[:, None] * al) @ g
        out[(out < 0.0) & (out >= -_KERNEL_DUST)] = 0.0
    return _restore(out, shape)


def refractory_integral(kernel: RefractoryKernel, tau):
    """R(tau) = tau + sum_k (gamma_k/alpha_k)(1 - exp(-alpha_k tau))."""
    t, shape = _as_times(tau, minimum=0.0)
    out = t.copy()
    if kernel.n:
        g = np.asarray(kernel.gamma)
        al = np.asarray(kernel.alpha)
        out = out + (1.0 - np.exp(-t[:, None] * al)) @ (g / al)
    return _restore(out, shape)


def iti_density_conditional(params: ModelParams, x: float, tau):
    """Interval density at fixed priority x: rho x r(tau) exp(-rho x R(tau))."""
    x = float(x)
    if not 0.0 < x <= 1.0:
        raise ValueError(f"priority x must lie in (0, 1], got {x}")
    t, shape = _as_times(tau, minimum=0.0)
    rate = params.rho * x
    r = refractory_eval(params.kernel, t)
    big_r = refractory_integral(params.kernel, t)
    return _restore(rate * r * np.exp(-rate * big_r), shape)


def iti_density(params: ModelParams, tau):
    """Marginal interval density p(tau) in 1/s, elementwise.

    Closed form: p(tau) = rho r(tau) [a/(a+b)] 1F1(a+1, a+b+1; -rho R(tau)).
    At tau = 0 the hypergeometric factor is 1 and the formula equals the
    right limit rho r(0) a/(a+b), so zero needs no special casing.
    """
    t, shape = _as_times(tau, minimum=0.0)
    r = refractory_eval(params.kernel, t)
    if t.size and r.min() < 0.0:
        raise ValueError("kernel is negative in range; params infeasible")
    a, b = params.a, params.b
    w = params.rho * refractory_integral(params.kernel, t)
    log_f1 = _log_hyp1f1_neg(a + 1.0, a + b + 1.0, w)
    dens = params.rho * r * (a / (a + b)) * np.exp(log_f1)
    return _restore(dens, shape)


def iti_tail_asymptote(params: ModelParams, tau):
    """Power-law approximation of the interval density at large tau.

    Returns [Gamma(a+1) / (B(a, b) rho^a)] tau^-(a+1); the log-log slope is
    exactly -(a + 1).
    """
    t, shape = _as_times(tau, minimum=0.0)
    if t.size and t.min() <= 0.0:
        raise ValueError("tail asymptote needs tau > 0")
    a, b = params.a, params.b
    log_amp = log_gamma(a + 1.0) - log_beta(a, b) - a * params.c
    return _restore(np.exp(log_amp - (a + 1.0) * np.log(t)), shape)


def _variant_spec(variant: str) -> VariantSpec:
    spec = VARIANTS.get(variant)
    if spec is None:
        raise ValueError(
            f"variant {variant!r} has no parameter packing; use one of "
            f"{sorted(VARIANTS)}"
        )
    return spec


def free_param_names(variant: str) -> tuple[str, ...]:
    """Names of the fitted coordinates in packing order: a, [b], c, gammas."""
    spec = _variant_spec(variant)
    names = ["a"]
    if spec.free_b:
        names.append("b")
    names.append("c")
    names.extend(f"gamma{k + 1}" for k in range(spec.n_kernel_terms))
    return tuple(names)


def params_to_vector(params: ModelParams) -> np.ndarray:
    """Pack the free coordinates of params into a flat vector."""
    spec = _variant_spec(params.variant)
    vec = [params.a]
    if spec.free_b:
        vec.append(params.b)
    vec.append(params.c)
    vec.extend(params.kernel.gamma)
    return np.array(vec, dtype=float)


def vector_to_params(vec, variant: str) -> ModelParams:
    """Inverse of params_to_vector; validates length and domain."""
    spec = _variant_spec(variant)
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (spec.n_params,):
        raise ValueError(
            f"variant {variant} packs {spec.n_params} parameters, "
            f"got shape {vec.shape}"
        )
    i = 0
    a = float(vec[i])
    i += 1
    if spec.free_b:
        b = float(vec[i])
        i += 1
    else:
        b = 1.0
    c = float(vec[i])
    i += 1
    if spec.n_kernel_terms:
        kernel = RefractoryKernel.log_spaced(vec[i:])
    else:
        kernel = RefractoryKernel.none()
    return ModelParams(a=a, b=b, c=c, kernel=kernel, variant=variant)

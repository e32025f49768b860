"""Projected gradient ascent for the penalized interval likelihood.

The kernel coefficients are constrained by nonnegativity of the event
rate on a finite grid of times: 1 + sum_k gamma_k exp(-alpha_k t_i) >= 0
for every grid point t_i.  Each constraint is a halfspace in the packed
parameter vector, so a violated iterate is repaired by orthogonal
projection onto the most violated hyperplane (repeated if needed).

Step-size control is a plain backtracking scheme on the objective: halve
on decrease, grow 1.1x on acceptance, clamped to [1e-8, 1e-1].  The raw
gradient is scaled by 1/N so the step size means the same thing across
data sizes.  A projected step is allowed to lower the objective (it
restores feasibility); the stall detector ends the run if no progress
accumulates.

The kernel basis terms overlap heavily, which leaves the likelihood
surface with curvatures spread over eight orders of magnitude; a bare
gradient step would need millions of iterations to cross the resulting
valley.  The gradient is therefore mapped through the inverse of the
local curvature (finite differences of the gradient, eigenvalue
floored, refreshed on a geometric schedule), which is what makes large
fits converge in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .likelihood import ItiSet, ObjectiveValue, _vector_objective, _variant_alpha, effective_reg_weight
from .model import ModelParams, params_to_vector, vector_to_params, _variant_spec
from .selection import bic

__all__ = [
    "FitConfig",
    "FitResult",
    "default_constraint_grid",
    "feasible",
    "project",
    "fit",
]

_ETA_MIN = 1e-8
_ETA_MAX = 1e-1
_ETA_GROW = 1.1
_STALL_WINDOW = 50
_STALL_REL = 1e-9
# slack below which a grid constraint counts as active when deciding
# which gradient directions are blocked
_ACTIVE_SLACK = 1e-9
# eigenvalues of the negated curvature are floored at this fraction of
# the stiffest one, so near-flat directions cannot blow a step up
# arbitrarily
_CURV_FLOOR = 1e-8
# largest per-coordinate magnitude a search direction may carry; beyond
# this a curvature solve is extrapolating far outside its own region
_DIR_CAP = 10.0

_CONFIG_KEYS = (
    "step_size",
    "max_iters",
    "grad_tol",
    "grid_min_ms",
    "grid_max_ms",
    "grid_points",
    "seed",
)


def default_constraint_grid(
    n_points: int = 100, t_min: float = 1e-3, t_max: float = 5.0
) -> np.ndarray:
    """Log-spaced rate-nonnegativity checkpoints, 1 ms to 5 s."""
    if n_points < 10:
        raise ValueError("constraint grid needs at least 10 points")
    if not 0.0 < t_min < t_max:
        raise ValueError("grid range must be positive and increasing")
    return np.geomspace(t_min, t_max, n_points)


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the ascent loop.

    seed, when set, applies a small deterministic jitter to the starting
    point; it exists so multistart studies can be scripted without any
    hidden randomness.  init_params overrides the starting point
    entirely (it is projected to feasibility first if needed).
    """

    step_size: float = 1e-3
    max_iters: int = 5000
    grad_tolerance: float = 1e-6
    constraint_grid: np.ndarray = field(default_factory=default_constraint_grid)
    reg_weight: float | None = None
    seed: int | None = None
    init_params: ModelParams | None = None

    def __post_init__(self) -> None:
        grid = np.asarray(self.constraint_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 10:
            raise ValueError("constraint grid needs at least 10 points")
        if grid[0] <= 0.0 or np.any(np.diff(grid) <= 0.0):
            raise ValueError("constraint grid must be positive increasing")
        grid = grid.copy()
        grid.setflags(write=False)
        object.__setattr__(self, "constraint_grid", grid)
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tolerance <= 0.0:
            raise ValueError("grad_tolerance must be positive")

    @classmethod
    def from_file(cls, path) -> "FitConfig":
        """Parse a key=value config file ('#' comments, blank lines ok)."""
        raw: dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line.strip()!r}")
                key, _, value = text.partition("=")
                key = key.strip()
                if key not in _CONFIG_KEYS:
                    raise ValueError(
                        f"{path}:{lineno}: unknown key {key!r}; known keys: "
                        + ", ".join(_CONFIG_KEYS)
                    )
                raw[key] = value.strip()
        kwargs: dict = {}
        try:
            if "step_size" in raw:
                kwargs["step_size"] = float(raw["step_size"])
            if "max_iters" in raw:
                kwargs["max_iters"] = int(raw["max_iters"])
            if "grad_tol" in raw:
                kwargs["grad_tolerance"] = float(raw["grad_tol"])
            if "seed" in raw:
                kwargs["seed"] = int(raw["seed"])
            t_min = float(raw.get("grid_min_ms", 1.0)) / 1000.0
            t_max = float(raw.get("grid_max_ms", 5000.0)) / 1000.0
            n_grid = int(raw.get("grid_points", 100))
        except ValueError as exc:
            raise ValueError(f"{path}: bad numeric value ({exc})") from None
        if {"grid_min_ms", "grid_max_ms", "grid_points"} & raw.keys():
            kwargs["constraint_grid"] = default_constraint_grid(n_grid, t_min, t_max)
        return cls(**kwargs)


@dataclass(frozen=True)
class FitResult:
    """Outcome of one fit: the point found, how, and on what data."""

    params_star: ModelParams
    objective_trace: tuple[ObjectiveValue, ...]
    converged: bool
    reason: str
    n_projections: int
    bic: float
    n_data: int
    data_digest: str

    @property
    def variant(self) -> str:
        return self.params_star.variant

    @property
    def objective(self) -> float:
        return self.objective_trace[-1].objective

    @property
    def log_likelihood(self) -> float:
        return self.objective_trace[-1].log_likelihood


def _grid_basis(variant: str, grid: np.ndarray) -> np.ndarray:
    """exp(-alpha_k t_i) for the variant's kernel, shape (1 + grid, n).

    Row 0 is the lag-zero constraint (all ones): without it the rate
    below the first grid time is unbounded below, and iterates can pin
    the integrated rate at the shortest observed interval against zero,
    where every further step leaves the likelihood domain.
    """
    alpha = _variant_alpha(variant)
    if not alpha:
        return np.zeros((grid.size + 1, 0))
    al = np.asarray(alpha)
    return np.exp(-np.concatenate(([0.0], grid))[:, None] * al)


def feasible(kernel, grid: np.ndarray) -> tuple[bool, int | None]:
    """Is the rate nonnegative at every grid time?

    Returns (True, None) or (False, index of the most violated point).
    """
    grid = np.asarray(grid, dtype=float)
    if kernel.n == 0:
        return True, None
    rate = 1.0 + np.exp(-grid[:, None] * np.asarray(kernel.alpha)) @ np.asarray(kernel.gamma)
    worst = int(np.argmin(rate))
    if rate[worst] >= 0.0:
        return True, None
    return False, worst


def _gamma_offset(variant: str) -> int:
    return 3 if _variant_spec(variant).free_b else 2


def _project_row(theta: np.ndarray, w: np.ndarray, off: int) -> np.ndarray:
    """Project the kernel block onto the halfspace 1 + w . gamma >= 0."""
    gamma = theta[off:]
    excess = 1.0 + float(w @ gamma)
    if excess >= 0.0:
        return theta
    out = theta.copy()
    out[off:] = gamma - (excess / float(w @ w)) * w
    return out


def project(theta_prime: np.ndarray, violated_index: int, variant: str, grid: np.ndarray) -> np.ndarray:
    """Project a packed vector onto one rate-nonnegativity hyperplane.

    The hyperplane normal carries exp(-alpha_k t_i) in the kernel slots
    and zeros elsewhere, so only the kernel coefficients move.  A vector
    already satisfying the constraint is returned unchanged.
    """
    theta_prime = np.asarray(theta_prime, dtype=float)
    spec = _variant_spec(variant)
    if spec.n_kernel_terms == 0:
        return theta_prime
    off = _gamma_offset(variant)
    w = np.exp(-float(grid[violated_index]) * np.asarray(_variant_alpha(variant)))
    return _project_row(theta_prime, w, off)


def _repair(theta: np.ndarray, basis: np.ndarray, off: int) -> tuple[np.ndarray, int]:
    """Project onto most-violated hyperplanes until all are satisfied.

    Alternating halfspace projections converge here because gamma = 0 is
    strictly interior; the cap is a safety net, not an expected path.
    """
    used = 0
    for _ in range(1000):
        ok, worst = _vector_feasible(theta, basis, off)
        if ok:
            return theta, used
        theta = _project_row(theta, basis[worst], off)
        used += 1
    raise ArithmeticError("constraint repair did not terminate")


def _initial_vector(variant: str, data: ItiSet, cfg: FitConfig) -> np.ndarray:
    spec = _variant_spec(variant)
    if cfg.init_params is not None:
        if cfg.init_params.variant != variant:
            raise ValueError(
                f"init_params is for variant {cfg.init_params.variant!r}, fitting {variant!r}"
            )
        return params_to_vector(cfg.init_params)
    span = float(np.sum(data.intervals))
    vec = [0.8]
    if spec.free_b:
        vec.append(1.2)
    vec.append(math.log(data.n / span))
    vec.extend([0.0] * spec.n_kernel_terms)
    out = np.array(vec, dtype=float)
    if cfg.seed is not None:
        rng = np.random.default_rng(cfg.seed)
        jitter = rng.uniform(-0.1, 0.1, size=2 + (1 if spec.free_b else 0))
        out[: jitter.size] += jitter
    return out


def _free_gradient(grad: np.ndarray, theta: np.ndarray, basis: np.ndarray, off: int) -> np.ndarray:
    """Gradient with outward components of active constraints removed.

    At a boundary optimum the raw gradient keeps pushing into the wall;
    convergence is judged on what is left after removing the blocked
    directions.
    """
    if basis.shape[1] == 0:
        return grad
    rate = 1.0 + basis @ theta[off:]
    active = np.flatnonzero(rate <= _ACTIVE_SLACK)
    if active.size == 0:
        return grad
    out = grad.copy()
    for i in active:
        w = basis[i]
        push = float(w @ out[off:])
        if push < 0.0:
            out[off:] -= (push / float(w @ w)) * w
    return out


def _curvature_matrix(
    theta: np.ndarray,
    variant: str,
    data: ItiSet,
    reg: float,
    n: int,
    previous: np.ndarray | None,
) -> np.ndarray:
    """Second differences of the per-datum objective, one column per probe.

    A column costs the same pair of gradient evaluations a diagonal
    probe would, so the full curvature comes at no extra price; it is
    symmetrized to absorb finite-difference noise.  Probes that leave
    the model domain reuse the previous column (unit diagonal at the
    first refresh).
    """
    dim = theta.size
    cols = np.empty((dim, dim))
    for i in range(dim):
        h = 1e-4 * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        _, gp = _vector_objective(up, variant, data, reg, True)
        _, gm = _vector_objective(dn, variant, data, reg, True)
        if gp is None or gm is None or not np.all(np.isfinite(gp) & np.isfinite(gm)):
            if previous is not None:
                cols[:, i] = previous[:, i] * n
            else:
                cols[:, i] = 0.0
                cols[i, i] = -float(n)
        else:
            cols[:, i] = (gp - gm) / (2.0 * h)
    return (cols + cols.T) / (2.0 * n)


def _ascent_map(curvature: np.ndarray) -> np.ndarray:
    """Positive definite inverse of the negated curvature.

    Eigenvalues are floored (relative to the stiffest) before
    inversion, which bounds the step along flat or locally convex
    directions; the backtracking search takes care of the rest.
    """
    lam, q = np.linalg.eigh(-curvature)
    top = float(lam.max()) if lam.size else 0.0
    if not np.isfinite(top) or top <= 0.0:
        return np.eye(curvature.shape[0])
    lam = np.maximum(lam, _CURV_FLOOR * top)
    return (q / lam) @ q.T


def _secant_update(ascent: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rank-two update of the inverse-curvature map from one accepted step.

    s is the displacement, y the drop in the scaled gradient across it.
    Positive definiteness is preserved exactly when s . y > 0; anything
    else leaves the map untouched.
    """
    sy = float(s @ y)
    if not np.isfinite(sy) or sy <= 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
        return ascent
    rho = 1.0 / sy
    hy = ascent @ y
    return (
        ascent
        + ((sy + float(y @ hy)) * rho * rho) * np.outer(s, s)
        - rho * (np.outer(hy, s) + np.outer(s, hy))
    )


def fit(variant: str, data: ItiSet, cfg: FitConfig | None = None) -> FitResult:
    """Maximize the penalized objective for one variant on one data set.

    Never raises for a fit that merely fails to converge; the result
    carries a converged flag and a reason string ("gradient tolerance",
    "objective stall", or "max iterations").
    """
    if cfg is None:
        cfg = FitConfig()
    spec = _variant_spec(variant)
    grid = cfg.constraint_grid
    basis = _grid_basis(variant, grid)
    off = _gamma_offset(variant)
    reg = effective_reg_weight(variant, cfg.reg_weight)
    n = data.n

    theta = _initial_vector(variant, data, cfg)
    theta, n_proj = _repair(theta, basis, off)
    value, grad = _vector_objective(theta, variant, data, reg, True)
    if value is None:
        raise ValueError("initial parameters are outside the model domain")

    trace = [value]
    eta = float(np.clip(cfg.step_size, _ETA_MIN, _ETA_MAX))
    converged = False
    reason = "max iterations"
    max_proj = spec.n_kernel_terms + 1
    curv: np.ndarray | None = None
    ascent = np.eye(theta.size)
    refresh_at = 0

    for it in range(cfg.max_iters):
        free = _free_gradient(grad / n, theta, basis, off)
        if np.max(np.abs(free)) < cfg.grad_tolerance:
            converged = True
            reason = "gradient tolerance"
            break
        if len(trace) > _STALL_WINDOW:
            then = trace[-1 - _STALL_WINDOW].objective
            if trace[-1].objective - then < _STALL_REL * max(1.0, abs(then)):
                converged = True
                reason = "objective stall"
                break

        fresh = False
        if it >= refresh_at:
            curv = _curvature_matrix(theta, variant, data, reg, n, curv)
            ascent = _ascent_map(curv)
            refresh_at = max(10, it * 2)
            fresh = True

        accepted = False
        while True:
            # The solve breaks tangency to active walls, so remove
            # outward components again; with the iterate on a wall a
            # step that pushes through it projects onto a fixed,
            # possibly descending line.
            direction = _free_gradient(ascent @ free, theta, basis, off)
            peak = float(np.max(np.abs(direction), initial=0.0))
            if peak > _DIR_CAP:
                direction *= _DIR_CAP / peak
            prev_theta, prev_scaled = theta, grad / n
            accepted, theta, value, new_grad, eta, used = _backtrack(
                theta, value, direction, eta, variant, data, reg, basis, off, max_proj
            )
            if accepted:
                grad = new_grad
                n_proj += used
                # Secant update keeps the map tracking the local
                # curvature between the much more expensive probe
                # rebuilds; steps that fail its positivity condition
                # (projected, or crossing a convex patch) are skipped.
                ascent = _secant_update(ascent, theta - prev_theta, prev_scaled - grad / n)
                break
            if fresh:
                break
            # The map in hand may describe a region the iterate left
            # several steps ago; rebuild it once before giving up.
            curv = _curvature_matrix(theta, variant, data, reg, n, curv)
            ascent = _ascent_map(curv)
            refresh_at = max(10, it * 2)
            fresh = True
            eta = float(np.clip(cfg.step_size, _ETA_MIN, _ETA_MAX))
        if not accepted:
            converged = True
            reason = "objective stall"
            break
        trace.append(value)

    params_star = vector_to_params(theta, variant)
    return FitResult(
        params_star=params_star,
        objective_trace=tuple(trace),
        converged=converged,
        reason=reason,
        n_projections=n_proj,
        bic=bic(value.objective, spec.n_params, n),
        n_data=n,
        data_digest=data.digest,
    )


def _backtrack(
    theta: np.ndarray,
    value: ObjectiveValue,
    direction: np.ndarray,
    eta: float,
    variant: str,
    data: ItiSet,
    reg: float,
    basis: np.ndarray,
    off: int,
    max_proj: int,
):
    """Halve the step until a feasible candidate improves the objective.

    Returns (accepted, theta, value, grad, eta, n_projections); a
    rejected search hands back the incoming point with grad None.
    """
    while True:
        cand = theta + eta * direction
        used = 0
        ok, worst = _vector_feasible(cand, basis, off)
        while not ok and used < max_proj:
            cand = _project_row(cand, basis[worst], off)
            used += 1
            ok, worst = _vector_feasible(cand, basis, off)
        if ok:
            cand_value, cand_grad = _vector_objective(cand, variant, data, reg, True)
            if (
                cand_value is not None
                and np.isfinite(cand_value.objective)
                and np.all(np.isfinite(cand_grad))
                and cand_value.objective >= value.objective
            ):
                return True, cand, cand_value, cand_grad, min(eta * _ETA_GROW, _ETA_MAX), used
        if eta <= _ETA_MIN:
            return False, theta, value, None, eta, 0
        eta = max(eta / 2.0, _ETA_MIN)


def _vector_feasible(theta: np.ndarray, basis: np.ndarray, off: int) -> tuple[bool, int | None]:
    if basis.shape[1] == 0:
        return True, None
    rate = 1.0 + basis @ theta[off:]
    worst = int(np.argmin(rate))
    if rate[worst] >= 0.0:
        return True, None
    return False, worst

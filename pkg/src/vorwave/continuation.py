"""Newton solver, bifurcation detection and branch continuation.

Unknowns live in the even cosine subspace: ``mu`` pairs with the mean of the
residual and the coefficient ``a_j`` of ``w`` pairs with the ``cos(jx)``
coefficient of the residual, ``j = 1..N-1`` (the Nyquist mode is held at
zero).  The amplitude of a branch is the coefficient ``a_n`` of its
bifurcation mode.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .residual import (
    PhysicalParams,
    WaveState,
    bifurcating_flux,
    dispersion_lambdas,
    jacobian,
    residual_model,
    stagnation_criterion,
    transversality_scalar,
)
from .spectral import PeriodicFunction, differentiate

log = logging.getLogger(__name__)

__all__ = [
    "BifurcationPoint",
    "Branch",
    "DivergenceError",
    "NewtonResult",
    "SingularJacobianError",
    "SolverConfig",
    "SweepResult",
    "find_bifurcation_points",
    "newton_solve",
    "solve_at_amplitude",
    "sweep_surface",
    "thread_limit",
    "trace_branch",
]


class DivergenceError(RuntimeError):
    def __init__(self, message: str, residual_history: list[float]):
        super().__init__(message)
        self.residual_history = residual_history


class SingularJacobianError(RuntimeError):
    def __init__(self, message: str, smallest_singular_value: float):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-11
    max_newton_iters: int = 25
    ds: float = 1e-3
    ds_min: float = 1e-5
    ds_max: float = 5e-2
    n_modes: int = 128
    adaptive: bool = True

    def __post_init__(self):
        for name in ("newton_tol", "max_newton_iters", "ds", "ds_min", "ds_max", "n_modes"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.newton_tol >= 1e-6:
            raise ValueError(f"newton_tol must be < 1e-6, got {self.newton_tol}")
        if not self.ds_min <= self.ds <= self.ds_max:
            raise ValueError(
                f"need ds_min <= ds <= ds_max, got {self.ds_min}, {self.ds}, {self.ds_max}"
            )

    def to_record(self) -> dict:
        return {
            "newton_tol": self.newton_tol,
            "max_newton_iters": self.max_newton_iters,
            "ds": self.ds,
            "ds_min": self.ds_min,
            "ds_max": self.ds_max,
            "n_modes": self.n_modes,
            "adaptive": self.adaptive,
        }


# -- state <-> unknown vector ----------------------------------------------


def _pack(state: WaveState) -> np.ndarray:
    """``[lambda, mu, a_1, ..., a_{N-1}]``."""
    return np.concatenate([[state.lam, state.mu], state.w.a[:-1]])


def _unpack(params: PhysicalParams, x: np.ndarray) -> WaveState:
    w = PeriodicFunction.from_coefficients(0.0, x[2:], n_modes=x.size - 1)
    return WaveState(params, float(x[0]), float(x[1]), w)


def _amplitude_index(mode: int) -> int:
    return 1 + mode


def _residual_and_matrix(state: WaveState):
    model = residual_model(state.params, state.n_modes)
    values = model.residual(state.lam, state.mu, state.w.values)
    full = jacobian(state).matrix(with_lambda=True)
    return model.project(values), float(np.max(np.abs(values))), full


@dataclass
class NewtonResult:
    state: WaveState
    iterations: int
    residual_history: list[float]
    condition: float


def _newton_loop(params, x, system, config: SolverConfig, label: str) -> NewtonResult:
    """``system(x) -> (matrix, rhs, norm, free)``; ``free`` indexes the solved unknowns."""
    history: list[float] = []
    for it in range(config.max_newton_iters + 1):
        matrix, rhs, norm, free = system(x)
        history.append(norm)
        if not np.isfinite(norm):
            raise DivergenceError(f"{label}: non-finite residual at iteration {it}", history)
        if norm <= config.newton_tol:
            sv = np.linalg.svd(matrix, compute_uv=False)
            cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
            return NewtonResult(_unpack(params, x), it, history, cond)
        if it == config.max_newton_iters:
            break
        try:
            if matrix.shape[0] == matrix.shape[1]:
                step = np.linalg.solve(matrix, -rhs)
            else:
                # consistent overdetermined system: Gauss-Newton step
                step = np.linalg.lstsq(matrix, -rhs, rcond=None)[0]
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)):
            smin = float(np.linalg.svd(matrix, compute_uv=False)[-1])
            raise SingularJacobianError(f"{label}: singular Jacobian (sigma_min={smin:.3e})", smin)
        x = x.copy()
        x[free] += step
    raise DivergenceError(
        f"{label}: no convergence after {config.max_newton_iters} iterations "
        f"(residual {history[-1]:.3e})",
        history,
    )


def newton_solve(
    initial: WaveState,
    fixed: str = "lambda",
    config: SolverConfig = SolverConfig(),
    mode: int = 1,
) -> NewtonResult:
    """Solve the discretized surface equation by Newton's method.

    ``fixed="lambda"`` holds the laminar surface speed and solves for
    ``(mu, w)``; ``fixed="amplitude"`` holds the coefficient ``a_mode`` of ``w``
    and solves for ``lambda`` in its place.  Sine and mean components of the
    initial ``w`` are discarded so iterates stay even.

    A zero amplitude pins the state to the trivial branch, along which
    ``lambda`` is not determined; ``lambda`` is then held as well and the
    one-row-overdetermined system is solved by Gauss-Newton steps.
    """
    n = initial.n_modes
    if fixed == "lambda":
        free = np.arange(1, n + 1)
    elif fixed == "amplitude":
        if not 1 <= mode < n:
            raise ValueError(f"mode {mode} outside 1..{n - 1}")
        held = [_amplitude_index(mode)]
        if initial.amplitude(mode) == 0.0:
            held.append(0)
        free = np.delete(np.arange(n + 1), held)
    else:
        raise ValueError(f"fixed must be 'lambda' or 'amplitude', got {fixed!r}")
    params = initial.params

    def system(x):
        rhs, norm, full = _residual_and_matrix(_unpack(params, x))
        return full[:, free], rhs, norm, free

    return _newton_loop(params, _pack(initial), system, config, f"newton[{fixed}]")


def solve_at_amplitude(
    params: PhysicalParams,
    lam_guess: float,
    s: float,
    config: SolverConfig = SolverConfig(),
    mode: int = 1,
    guess: WaveState | None = None,
) -> NewtonResult:
    """Nontrivial state with ``a_mode = s``, started from ``guess`` or ``s cos(mode x)``."""
    if guess is None:
        a = np.zeros(config.n_modes)
        a[mode - 1] = s
        w = PeriodicFunction.from_coefficients(0.0, a, n_modes=config.n_modes)
        guess = WaveState(params, lam_guess, 0.0, w)
    else:
        a = guess.w.a.copy()
        a[mode - 1] = s
        guess = guess.with_values(w=PeriodicFunction.from_coefficients(0.0, a, guess.w.b))
    return newton_solve(guess, "amplitude", config, mode)


# -- bifurcation points ------------------------------------------------------


@dataclass(frozen=True)
class BifurcationPoint:
    n: int
    lambda_star: float
    side: str
    smallest_singular_value: float
    second_singular_value: float
    largest_singular_value: float
    null_overlap: float
    transversality: float


def find_bifurcation_points(
    p: PhysicalParams, n_max: int, n_modes: int = 128
) -> list[BifurcationPoint]:
    """Both dispersion roots for each mode ``1..n_max``, with SVD diagnostics.

    The linearization at the trivial state is assembled on the cosine basis;
    the right singular vector of the smallest singular value should be the
    unit vector of ``cos(nx)``.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if n_max >= n_modes:
        raise ValueError(f"n_max={n_max} not resolved with {n_modes} modes")
    out = []
    for n in range(1, n_max + 1):
        for side, lam in zip(("plus", "minus"), dispersion_lambdas(n, p)):
            matrix = jacobian(WaveState.trivial(p, lam, n_modes)).matrix()
            _, sv, vt = np.linalg.svd(matrix)
            overlap = float(abs(vt[-1, n]))
            out.append(
                BifurcationPoint(
                    n=n,
                    lambda_star=lam,
                    side=side,
                    smallest_singular_value=float(sv[-1]),
                    second_singular_value=float(sv[-2]),
                    largest_singular_value=float(sv[0]),
                    null_overlap=overlap,
                    transversality=transversality_scalar(lam, n, p),
                )
            )
    return out


# -- branches ---------------------------------------------------------------


@dataclass
class Branch:
    params: PhysicalParams
    mode_n: int
    lambda_star: float
    side: str
    points: list[WaveState] = field(default_factory=list)
    arclength: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    residual_norms: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    validity: list[dict] = field(default_factory=list)
    folds: list[int] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    truncated: bool = False

    def amplitudes(self) -> np.ndarray:
        return np.array([pt.amplitude(self.mode_n) for pt in self.points])

    def lambdas(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    def remainders(self) -> np.ndarray:
        """``max|w(s) - s cos(nx)|`` for every point."""
        out = []
        for pt in self.points:
            s = pt.amplitude(self.mode_n)
            lead = s * np.cos(self.mode_n * pt.w.x)
            out.append(float(np.max(np.abs(pt.w.values - lead))))
        return np.array(out)

    def asymptotics(self, s_max: float = 0.05) -> dict:
        """Fit ``remainder ~ C s^p`` over the nontrivial points with ``|s| <= s_max``."""
        s = np.abs(self.amplitudes())
        r = self.remainders()
        mask = (s > 0) & (s <= s_max) & (r > 0)
        if mask.sum() < 2:
            return {"constant": math.nan, "order": math.nan, "count": int(mask.sum())}
        order, log_c = np.polyfit(np.log(s[mask]), np.log(r[mask]), 1)
        return {
            "constant": float(np.max(r[mask] / s[mask] ** 2)),
            "order": float(order),
            "count": int(mask.sum()),
        }


def _validity(state: WaveState, mode: int) -> dict:
    from .reconstruction import surface_validity

    flags = surface_validity(state)
    s = state.amplitude(mode)
    if s != 0.0:
        x = np.linspace(0.0, np.pi / mode, 202)[1:-1]
        dw = differentiate(state.w)(x)
        flags["monotone"] = bool(np.all(s * dw < 0))
    else:
        flags["monotone"] = True
    return flags


def trace_branch(
    p: PhysicalParams,
    start: BifurcationPoint | tuple,
    n_points: int,
    config: SolverConfig = SolverConfig(),
    s_max: float | None = None,
) -> Branch:
    """Follow the branch bifurcating at ``start`` by pseudo-arclength continuation.

    ``start`` is a :class:`BifurcationPoint` or a tuple ``(n, lambda_star, side)``.
    The first point is the trivial state at ``lambda_star``; the second is
    solved with ``a_n = ds`` held fixed; later points use a secant predictor
    and an arclength constraint, with ``lambda`` free so folds are passed.
    Stops after ``n_points`` points or once ``|a_n| >= s_max``.  Newton
    failure after the step size bottoms out truncates the branch.
    """
    if isinstance(start, BifurcationPoint):
        n, lam_star, side = start.n, start.lambda_star, start.side
    else:
        n, lam_star, side = start
    n_modes = config.n_modes
    branch = Branch(p, n, float(lam_star), side)

    def accept(result: NewtonResult, arc: float, step: float):
        st = result.state
        branch.points.append(st)
        branch.arclength.append(arc)
        branch.iterations.append(result.iterations)
        branch.residual_norms.append(result.residual_history[-1])
        branch.steps.append(step)
        flags = _validity(st, n)
        branch.validity.append(flags)
        if not (flags["os"] and flags["gra"] and flags["injective"]):
            branch.diagnostics.append(f"point {len(branch.points) - 1}: validity flags {flags}")

    trivial = WaveState.trivial(p, lam_star, n_modes)
    accept(NewtonResult(trivial, 0, [0.0], math.nan), 0.0, 0.0)
    if n_points <= 1:
        return branch

    ds = config.ds
    while True:
        try:
            first = solve_at_amplitude(p, lam_star, ds, config, mode=n)
            break
        except (DivergenceError, SingularJacobianError) as exc:
            ds /= 2.0
            if ds < config.ds_min:
                branch.truncated = True
                branch.diagnostics.append(f"first step failed: {exc}")
                return branch
    x_prev = _pack(trivial)
    x_curr = _pack(first.state)
    accept(first, float(np.linalg.norm(x_curr - x_prev)), ds)

    def done():
        if len(branch.points) >= n_points:
            return True
        return s_max is not None and abs(branch.points[-1].amplitude(n)) >= s_max

    prev_tangent = None
    while not done():
        tangent = (x_curr - x_prev) / np.linalg.norm(x_curr - x_prev)
        if prev_tangent is not None and np.sign(tangent[0]) != np.sign(prev_tangent[0]):
            branch.folds.append(len(branch.points) - 1)
            log.info("fold in lambda near point %d", len(branch.points) - 1)
        while True:
            x_pred = x_curr + ds * tangent
            anchor = x_curr.copy()

            def system(x, anchor=anchor, tangent=tangent, ds=ds):
                rhs, norm, full = _residual_and_matrix(_unpack(p, x))
                arc = float(tangent @ (x - anchor) - ds)
                matrix = np.vstack([full, tangent[None, :]])
                return matrix, np.append(rhs, arc), max(norm, abs(arc)), slice(None)

            try:
                result = _newton_loop(p, x_pred, system, config, "arclength")
                break
            except (DivergenceError, SingularJacobianError) as exc:
                ds /= 2.0
                if ds < config.ds_min:
                    branch.truncated = True
                    branch.diagnostics.append(
                        f"truncated after point {len(branch.points) - 1}: {exc}"
                    )
                    return branch
        x_new = _pack(result.state)
        accept(result, branch.arclength[-1] + float(np.linalg.norm(x_new - x_curr)), ds)
        x_prev, x_curr = x_curr, x_new
        prev_tangent = tangent
        if config.adaptive:
            if result.iterations <= 3:
                ds = min(2.0 * ds, config.ds_max)
            elif result.iterations > 6:
                ds = max(ds / 2.0, config.ds_min)
    return branch


# -- parameter sweeps ----------------------------------------------------------


def thread_limit() -> int:
    """Worker count for sweeps, capped by ``VORWAVE_THREADS``."""
    cap = os.environ.get("VORWAVE_THREADS")
    default = os.cpu_count() or 1
    if cap is None:
        return default
    try:
        return max(1, min(int(cap), default))
    except ValueError:
        raise ValueError(f"VORWAVE_THREADS must be an integer, got {cap!r}") from None


@dataclass
class SweepResult:
    gamma: float
    g: float
    k: float
    h: np.ndarray
    m_plus: np.ndarray
    m_minus: np.ndarray
    stp_holds: np.ndarray
    h_flux_zero: float | None
    h_stagnation: float | None
    branches: dict = field(default_factory=dict)

    def relative_deviation(self) -> tuple[np.ndarray, np.ndarray]:
        """``|m - gamma h^2/2| / (|gamma| h^2/2)`` for both curves."""
        parabola = self.gamma * self.h**2 / 2.0
        scale = np.abs(parabola)
        return np.abs(self.m_plus - parabola) / scale, np.abs(self.m_minus - parabola) / scale

    def region(self) -> np.ndarray:
        """0 below ``h_stagnation``, 1 between the thresholds, 2 at or above ``h_flux_zero``."""
        out = np.zeros(self.h.size, dtype=int)
        if self.h_stagnation is not None:
            out[self.h >= self.h_stagnation] = 1
        if self.h_flux_zero is not None:
            out[self.h >= self.h_flux_zero] = 2
        return out


def _depth_root(func) -> float:
    from scipy.optimize import brentq

    lo, hi = 1e-3, 10.0
    for _ in range(200):
        if func(lo) * func(hi) <= 0:
            return brentq(func, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        lo, hi = lo / 2.0, hi * 2.0
    raise RuntimeError("failed to bracket depth threshold")


def flux_zero_depth(gamma: float, g: float, k: float) -> float | None:
    """Depth where ``m_-`` (``m_+`` for gamma < 0) changes sign.

    Root of ``tanh(kh)/(kh) = gamma^2 h/(4g + 2 gamma^2 h)``.
    """
    if gamma == 0.0:
        return None
    g2 = gamma * gamma
    return _depth_root(lambda h: math.tanh(k * h) / (k * h) - g2 * h / (4 * g + 2 * g2 * h))


def stagnation_depth(gamma: float, g: float, k: float) -> float | None:
    """Depth above which the bifurcating laminar flow has a stagnation line."""
    if gamma == 0.0:
        return None
    g2 = gamma * gamma
    return _depth_root(lambda h: math.tanh(k * h) / (k * h) - g2 * h / (g + g2 * h))


def sweep_surface(
    gamma: float,
    g: float,
    k: float,
    h_values,
    branch_points: int = 0,
    config: SolverConfig = SolverConfig(),
    s_max: float | None = None,
) -> SweepResult:
    """Bifurcating fluxes over a depth grid, optionally tracing both branches per depth.

    Branch tracing runs concurrently across depths (``VORWAVE_THREADS`` caps the
    pool); results are keyed ``(h, side)`` and independent of scheduling.
    """
    h_values = np.asarray(h_values, dtype=float)
    if h_values.ndim != 1 or h_values.size == 0 or np.any(h_values <= 0):
        raise ValueError("h_values must be a non-empty 1-D array of positive depths")
    mp, mm, stp = [], [], []
    for h in h_values:
        p = PhysicalParams(gamma, g, k, h)
        plus, minus = bifurcating_flux(p)
        mp.append(plus)
        mm.append(minus)
        stp.append(stagnation_criterion(p).holds if gamma != 0 else False)
    result = SweepResult(
        gamma,
        g,
        k,
        h_values,
        np.array(mp),
        np.array(mm),
        np.array(stp),
        flux_zero_depth(gamma, g, k),
        stagnation_depth(gamma, g, k),
    )
    if branch_points > 0:
        jobs = []
        for h in h_values:
            p = PhysicalParams(gamma, g, k, h)
            for side, lam in zip(("plus", "minus"), dispersion_lambdas(1, p)):
                jobs.append((float(h), side, p, lam))
        with ThreadPoolExecutor(max_workers=thread_limit()) as pool:
            traced = list(
                pool.map(
                    lambda job: trace_branch(
                        job[2], (1, job[3], job[1]), branch_points, config, s_max
                    ),
                    jobs,
                )
            )
        result.branches = {(job[0], job[1]): br for job, br in zip(jobs, traced)}
    return result

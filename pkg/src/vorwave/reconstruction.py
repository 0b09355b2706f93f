"""Rebuild the two-dimensional flow from a surface solution.

The strip ``-kh < y < 0`` is mapped conformally onto the fluid domain by
``U + iV``, where ``V`` is the harmonic function with ``V = 0`` on the bottom
and ``V = v`` on the top, and ``U = a + x/k + (conjugate of V - (y+kh)/k)``.
A second harmonic function ``zeta`` with ``zeta = 0`` on the bottom and
``zeta = m + gamma v^2/2`` on the top gives the stream function through
``psi(U, V) = zeta - m - gamma V^2/2``.

Grid arrays are indexed ``[row, column]`` with rows running from the bed
(``y = -kh``) to the surface (``y = 0``) and columns over ``x_j = j pi/N``.
``grid_ny`` counts vertical intervals, so a field has ``grid_ny + 1`` rows and
doubling ``grid_ny`` nests the coarse rows inside the fine grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .operators import (
    commutator_Q,
    dirichlet_neumann,
    hilbert_strip,
    hilbert_strip_inverse,
)
from .residual import PhysicalParams, WaveState
from .spectral import PeriodicFunction, differentiate, get_grid, multiply

log = logging.getLogger(__name__)

__all__ = [
    "HarmonicGrid",
    "RefinementStudy",
    "SingularMapError",
    "StagnationReport",
    "StripField",
    "StripHarmonic",
    "SurfaceCurve",
    "ValidityError",
    "bernoulli_residual",
    "cauchy_riemann_residual",
    "conformal_map",
    "find_stagnation",
    "harmonic_extension",
    "laplacian_residual",
    "periodicity_defect",
    "reconstruct",
    "refinement_study",
    "stream_function",
    "surface_geometry",
    "surface_validity",
]

DEFAULT_NY = 64


class ValidityError(ValueError):
    """A surface fails one of the geometric conditions; ``condition`` names it.

    ``pos``: v > 0, ``m2``: curve injective, ``m3``: u'^2 + v'^2 != 0,
    ``sm``: Q - 2gv > 0.
    """

    def __init__(self, condition: str, message: str):
        super().__init__(f"[{condition}] {message}")
        self.condition = condition


class SingularMapError(ArithmeticError):
    pass


def _profiles(n: np.ndarray, y: np.ndarray, d: float):
    """``sinh(n(y+d))/sinh(nd)`` and ``cosh(n(y+d))/sinh(nd)`` without overflow."""
    ny = np.multiply.outer(y, n)
    decay = np.exp(-2.0 * np.multiply.outer(y + d, n))
    denom = -np.expm1(-2.0 * n * d)
    base = np.exp(ny) / denom
    return base * (1.0 - decay), base * (1.0 + decay)


class StripHarmonic:
    """Harmonic ``W`` in the strip of depth ``d`` with ``W(x,-d)=0``, ``W(x,0)=w(x)``.

    ``Z`` is the conjugate with ``Z + iW`` holomorphic, normalized so that
    ``Z(x,0) = ([w]/d) x + C_d(w - [w])``.
    """

    def __init__(self, boundary: PeriodicFunction, d: float):
        self.boundary = boundary
        self.d = float(d)
        self.mean = boundary.mean
        self.a = np.array(boundary.a)
        self.b = np.array(boundary.b)
        self.n = np.arange(1, boundary.n_modes + 1, dtype=float)

    # -- on the collocation grid ----------------------------------------------
    def on_grid(self, y: np.ndarray) -> dict:
        """W, Z and first/second derivatives at every ``(y_i, x_j)``."""
        grid = get_grid(self.boundary.n_modes)
        x = grid.x
        s, c = _profiles(self.n, y, self.d)
        a, b, n = self.a, self.b, self.n
        lin = self.mean / self.d
        yy = (y + self.d)[:, None]
        vals = grid.values_from_coefficients
        zeros = np.zeros(y.size)
        out = {
            "W": lin * yy + vals(zeros, a * s, b * s),
            "Z": lin * x[None, :] + vals(zeros, -b * c, a * c),
            "W_x": vals(zeros, n * b * s, -n * a * s),
            "W_y": lin + vals(zeros, n * a * c, n * b * c),
            "W_xx": vals(zeros, -n * n * a * s, -n * n * b * s),
        }
        out["Z_x"] = out["W_y"]
        out["Z_y"] = -out["W_x"]
        return out

    # -- at arbitrary points ----------------------------------------------------
    def at(self, x, y) -> dict:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        s, c = _profiles(self.n, y, self.d)
        cos = np.cos(np.multiply.outer(x, self.n))
        sin = np.sin(np.multiply.outer(x, self.n))
        a, b, n = self.a, self.b, self.n
        lin = self.mean / self.d
        W = lin * (y + self.d) + np.sum((a * cos + b * sin) * s, axis=-1)
        Z = lin * x + np.sum((a * sin - b * cos) * c, axis=-1)
        W_x = np.sum(n * (-a * sin + b * cos) * s, axis=-1)
        W_y = lin + np.sum(n * (a * cos + b * sin) * c, axis=-1)
        return {"W": W, "Z": Z, "W_x": W_x, "W_y": W_y, "Z_x": W_y, "Z_y": -W_x}


@dataclass(frozen=True, eq=False)
class HarmonicGrid:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray


def _rows(d: float, grid_ny: int) -> np.ndarray:
    if int(grid_ny) != grid_ny or grid_ny < 2:
        raise ValueError(f"grid_ny must be an integer >= 2, got {grid_ny}")
    return np.linspace(-d, 0.0, int(grid_ny) + 1)


def harmonic_extension(boundary: PeriodicFunction, d: float, grid_ny: int = DEFAULT_NY) -> HarmonicGrid:
    """Closed-form harmonic extension sampled on ``grid_ny`` uniform rows."""
    y = _rows(d, grid_ny)
    fields = StripHarmonic(boundary, d).on_grid(y)
    values = fields["W"]
    # boundary rows hold the data exactly
    values[0] = 0.0
    values[-1] = boundary.values
    return HarmonicGrid(get_grid(boundary.n_modes).x, y, values)


# -- surface geometry ----------------------------------------------------------


def _segments_intersect(p: np.ndarray, q: np.ndarray, shift: float) -> tuple[bool, float | None]:
    """Test one period of a closed-by-translation polyline for self-intersection."""
    starts = p
    ends = np.vstack([p[1:], p[:1] + [shift, 0.0]])
    m = len(starts)
    all_s = np.vstack([starts + [k * shift, 0.0] for k in (-1, 0, 1)])
    all_e = np.vstack([ends + [k * shift, 0.0] for k in (-1, 0, 1)])

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
            c[..., 0] - a[..., 0]
        )

    A, B = starts[:, None, :], ends[:, None, :]
    C, D = all_s[None, :, :], all_e[None, :, :]
    o1, o2 = orient(A, B, C), orient(A, B, D)
    o3, o4 = orient(C, D, A), orient(C, D, B)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    i = np.arange(m)[:, None]
    j = np.arange(3 * m)[None, :]
    own = j - m
    adjacent = (np.abs(own - i) <= 1) | (np.abs(own - i) == m - 1)
    hit &= ~adjacent
    if np.any(hit):
        loc = np.argwhere(hit)[0][0]
        return False, float(starts[loc, 0])
    return True, None


@dataclass(frozen=True, eq=False)
class SurfaceCurve:
    x: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    u_prime: PeriodicFunction
    v_prime: PeriodicFunction
    speed: np.ndarray
    theta0: PeriodicFunction | None
    injective: bool
    checks: dict = field(default_factory=dict)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.X, self.Y])


def _surface_pieces(state: WaveState):
    p = state.params
    w = state.w
    wp = differentiate(w)
    u_prime = hilbert_strip(wp, p.depth) + 1.0 / p.k
    X = state.w.x / p.k + hilbert_strip(w, p.depth).values
    return X, wp, u_prime


def surface_validity(state: WaveState) -> dict:
    """Flags for ``w > -h`` (os), ``1/k + C(w') > 0`` (gra), injectivity and ``u'^2+v'^2 > 0``."""
    X, wp, u_prime = _surface_pieces(state)
    os_ok = bool(np.min(state.w.values) > -state.params.h)
    gra = bool(np.min(u_prime.values) > 0)
    if gra:
        injective = True
    else:
        pts = np.column_stack([X, state.v.values])
        injective, _ = _segments_intersect(pts, pts, state.params.wavelength)
    regular = bool(np.min(u_prime.values**2 + wp.values**2) > 0)
    return {"os": os_ok, "gra": gra, "injective": bool(injective), "regular": regular}


def check_validity(state: WaveState) -> None:
    flags = surface_validity(state)
    if not flags["os"]:
        raise ValidityError("pos", f"surface height min {np.min(state.v.values):.6g} <= 0")
    if not flags["regular"]:
        raise ValidityError("m3", "u'^2 + v'^2 vanishes on the surface")
    if not flags["injective"]:
        raise ValidityError("m2", "surface curve self-intersects")


def surface_geometry(state: WaveState, a_offset: float = 0.0) -> SurfaceCurve:
    """Physical surface ``(a + x/k + C_kh(v - h), v)`` with tangent angle and checks.

    ``checks`` records the largest deviations in
    ``u' = |z'| cos(theta0)``, ``v' = |z'| sin(theta0)`` (``compatibility``), the
    speed formula from the surface equation (``speed_formula``) and the
    commutator identity for ``G(v^2/2) - v G(v)`` (``commutator_identity``).
    """
    p = state.params
    check_validity(state)
    v = state.v
    bern = state.Q - 2.0 * p.g * v.values
    if np.min(bern) <= 0:
        i = int(np.argmin(bern))
        raise ValidityError("sm", f"Q - 2gv = {bern[i]:.6g} <= 0 at x = {v.x[i]:.6g}")
    X, wp, u_prime = _surface_pieces(state)
    X = X + a_offset
    speed = np.sqrt(u_prime.values**2 + wp.values**2)
    log_speed = PeriodicFunction.from_values(np.log(speed))
    theta0 = hilbert_strip_inverse(log_speed.centered(), p.depth)
    compat = max(
        float(np.max(np.abs(u_prime.values - speed * np.cos(theta0.values)))),
        float(np.max(np.abs(wp.values - speed * np.sin(theta0.values)))),
    )
    d = p.depth
    vv = multiply(v, v)
    g_form = dirichlet_neumann(vv * 0.5, d) - multiply(v, dirichlet_neumann(v, d))
    q_form = vv.mean / (2.0 * d) - v / p.k - commutator_Q(v, d)
    speed_formula = np.abs(state.m / d + p.gamma * g_form.values) / np.sqrt(bern)
    checks = {
        "compatibility": compat,
        "speed_formula": float(np.max(np.abs(speed_formula - speed))),
        "commutator_identity": float(np.max(np.abs(g_form.values - q_form.values))),
    }
    injective = bool(np.min(u_prime.values) > 0)
    if not injective:
        injective, where = _segments_intersect(np.column_stack([X, v.values]), None, p.wavelength)
        if not injective:
            raise ValidityError("m2", f"surface self-intersects near X = {where:.6g}")
    return SurfaceCurve(v.x, X, v.values.copy(), u_prime, wp, speed, theta0, injective, checks)


# -- conformal map and flow ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Flow:
    """Evaluators for ``U + iV`` and ``zeta`` at arbitrary strip points."""

    params: PhysicalParams
    m: float
    a_offset: float
    V: StripHarmonic
    zeta: StripHarmonic | None

    def velocity(self, x, y):
        vf = self.V.at(x, y)
        zf = self.zeta.at(x, y)
        jac = vf["W_x"] ** 2 + vf["W_y"] ** 2
        u = (vf["W_x"] * zf["W_x"] + vf["W_y"] * zf["W_y"]) / jac - self.params.gamma * vf["W"]
        w = (vf["W_x"] * zf["W_y"] - vf["W_y"] * zf["W_x"]) / jac
        return u, w

    def position(self, x, y):
        vf = self.V.at(x, y)
        return self.a_offset + vf["Z"], vf["W"]


@dataclass(frozen=True, eq=False)
class StripField:
    params: PhysicalParams
    x: np.ndarray
    y: np.ndarray
    U: np.ndarray
    V: np.ndarray
    a_offset: float
    derivatives: dict = field(repr=False)
    flow: _Flow = field(repr=False)
    zeta: np.ndarray | None = None
    psi: np.ndarray | None = None
    velocity: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape


def conformal_map(state: WaveState, a_offset: float = 0.0, grid_ny: int = DEFAULT_NY) -> StripField:
    check_validity(state)
    p = state.params
    d = p.depth
    y = _rows(d, grid_ny)
    harm = StripHarmonic(state.v, d)
    f = harm.on_grid(y)
    U = a_offset + f["Z"]
    V = f["W"]
    V[0] = 0.0
    V[-1] = state.v.values
    derivs = {"V_x": f["W_x"], "V_y": f["W_y"], "U_x": f["Z_x"], "U_y": f["Z_y"]}
    flow = _Flow(p, state.m, a_offset, harm, None)
    return StripField(p, get_grid(state.n_modes).x, y, U, V, a_offset, derivs, flow)


def stream_function(state: WaveState, field_: StripField) -> StripField:
    """Fill ``zeta``, ``psi`` and the physical velocity ``(psi_Y, -psi_X)``."""
    p = state.params
    d = p.depth
    top = multiply(state.v, state.v) * (0.5 * p.gamma) + state.m
    zh = StripHarmonic(top, d)
    zf = zh.on_grid(field_.y)
    zeta = zf["W"]
    zeta[0] = 0.0
    zeta[-1] = top.values
    V = field_.V
    psi = zeta - state.m - 0.5 * p.gamma * V**2
    Vx, Vy = field_.derivatives["V_x"], field_.derivatives["V_y"]
    jac = Vx**2 + Vy**2
    if np.min(jac) < 1e-12:
        i = np.unravel_index(np.argmin(jac), jac.shape)
        raise SingularMapError(f"conformal factor {jac[i]:.3e} at grid point {i}")
    u = (Vx * zf["W_x"] + Vy * zf["W_y"]) / jac - p.gamma * V
    w = (Vx * zf["W_y"] - Vy * zf["W_x"]) / jac
    derivs = dict(field_.derivatives, zeta_x=zf["W_x"], zeta_y=zf["W_y"])
    flow = replace(field_.flow, zeta=zh)
    return replace(field_, zeta=zeta, psi=psi, velocity=(u, w), derivatives=derivs, flow=flow)


def reconstruct(state: WaveState, a_offset: float = 0.0, grid_ny: int = DEFAULT_NY) -> StripField:
    return stream_function(state, conformal_map(state, a_offset, grid_ny))


# -- diagnostics ---------------------------------------------------------------


def _d2y(arr: np.ndarray, dy: float) -> np.ndarray:
    return (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / dy**2


def _dy(arr: np.ndarray, dy: float) -> np.ndarray:
    return (arr[2:] - arr[:-2]) / (2.0 * dy)


def _cauchy_riemann_rows(field_: StripField) -> np.ndarray:
    grid = get_grid(field_.x.size // 2)
    dy = field_.y[1] - field_.y[0]
    k = field_.params.k
    Ux = grid.derivative(field_.U - field_.a_offset - field_.x / k) + 1.0 / k
    Vx = grid.derivative(field_.V)
    r1 = np.abs(Ux[1:-1] - _dy(field_.V, dy))
    r2 = np.abs(_dy(field_.U, dy) + Vx[1:-1])
    return np.maximum(r1, r2).max(axis=1)


def _laplacian_rows(field_: StripField) -> np.ndarray:
    grid = get_grid(field_.x.size // 2)
    dy = field_.y[1] - field_.y[0]
    xi = field_.psi
    xi_xx = grid.derivative(grid.derivative(xi))[1:-1]
    xi_yy = _d2y(xi, dy)
    jac = (field_.derivatives["V_x"] ** 2 + field_.derivatives["V_y"] ** 2)[1:-1]
    return np.abs((xi_xx + xi_yy) / jac + field_.params.gamma).max(axis=1)


def cauchy_riemann_residual(field_: StripField) -> float:
    """Interior max of ``|U_x - V_y|`` and ``|U_y + V_x|``: x spectral, y central differences."""
    return float(np.max(_cauchy_riemann_rows(field_)))


def laplacian_residual(field_: StripField) -> float:
    """Interior max of ``|Delta psi + gamma|`` in physical coordinates.

    Uses ``Delta_XY psi = Delta_xy xi / (V_x^2 + V_y^2)`` with ``xi`` the grid
    values of ``psi``; x derivatives spectral, y derivatives central differences.
    """
    if field_.psi is None:
        raise ValueError("stream_function must be applied first")
    return float(np.max(_laplacian_rows(field_)))


@dataclass(frozen=True)
class RefinementStudy:
    """Residuals on nested grids, measured on the interior rows of the coarsest one."""

    ny: tuple[int, ...]
    laplacian: tuple[float, ...]
    cauchy_riemann: tuple[float, ...]

    @staticmethod
    def _orders(errors, ny, floor):
        out = []
        for (e0, n0), (e1, n1) in zip(zip(errors, ny), zip(errors[1:], ny[1:])):
            # a residual already at rounding level has nothing left to converge
            out.append(math.inf if e1 <= floor else math.log(e0 / e1) / math.log(n1 / n0))
        return tuple(out)

    def laplacian_orders(self, floor: float = 1e-10) -> tuple[float, ...]:
        return self._orders(self.laplacian, self.ny, floor)

    def cauchy_riemann_orders(self, floor: float = 1e-10) -> tuple[float, ...]:
        return self._orders(self.cauchy_riemann, self.ny, floor)


def refinement_study(state: WaveState, ny_values=(32, 64, 128), a_offset: float = 0.0) -> RefinementStudy:
    """Grid-refinement study of the Laplacian and Cauchy-Riemann residuals.

    Each ``ny`` must be a multiple of the first so the coarse rows are shared.
    """
    ny_values = tuple(int(n) for n in ny_values)
    base = ny_values[0]
    if any(n % base for n in ny_values):
        raise ValueError(f"grid sizes {ny_values} are not nested")
    lap, cr = [], []
    for ny in ny_values:
        f = reconstruct(state, a_offset, ny)
        step = ny // base
        shared = np.arange(1, base) * step - 1  # interior row i*step sits at index i*step-1
        lap.append(float(np.max(_laplacian_rows(f)[shared])))
        cr.append(float(np.max(_cauchy_riemann_rows(f)[shared])))
    return RefinementStudy(ny_values, tuple(lap), tuple(cr))


def periodicity_defect(field_: StripField) -> float:
    """Max over grid nodes of ``|U(x + 2pi, y) - U(x, y) - 2pi/k|``."""
    X, Y = np.meshgrid(field_.x, field_.y)
    shifted, _ = field_.flow.position(X.ravel() + 2.0 * math.pi, Y.ravel())
    base, _ = field_.flow.position(X.ravel(), Y.ravel())
    return float(np.max(np.abs(shifted - base - 2.0 * math.pi / field_.params.k)))


def bernoulli_residual(state: WaveState, field_: StripField) -> float:
    """Max over the surface row of ``|grad psi|^2 + 2gY - Q``."""
    u, w = field_.velocity
    top = u[-1] ** 2 + w[-1] ** 2 + 2.0 * state.params.g * field_.V[-1] - state.Q
    return float(np.max(np.abs(top)))


# -- stagnation points -----------------------------------------------------------


@dataclass(frozen=True)
class StagnationReport:
    points: list[dict]
    has_critical_layer: bool
    laminar_line_y: float | None
    velocity_scale: float

    def to_record(self) -> dict:
        return {
            "points": self.points,
            "has_critical_layer": self.has_critical_layer,
            "laminar_line_y": self.laminar_line_y,
            "velocity_scale": self.velocity_scale,
        }


def _velocity_jacobian(flow: _Flow, x: float, y: float, step: float = 1e-6) -> np.ndarray:
    ux1, vx1 = flow.velocity(x + step, y)
    ux0, vx0 = flow.velocity(x - step, y)
    uy1, vy1 = flow.velocity(x, y + step)
    uy0, vy0 = flow.velocity(x, y - step)
    return np.array(
        [
            [(ux1 - ux0)[0], (uy1 - uy0)[0]],
            [(vx1 - vx0)[0], (vy1 - vy0)[0]],
        ]
    ) / (2.0 * step)


def _refine(flow: _Flow, x: float, y: float, d: float, tol: float, iters: int = 40):
    for _ in range(iters):
        u, w = flow.velocity(x, y)
        res = np.array([u[0], w[0]])
        if np.max(np.abs(res)) <= tol:
            return x, y
        jac = _velocity_jacobian(flow, x, y)
        try:
            dx, dy = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            return None
        x, y = x + dx, min(max(y + dy, -d), 0.0)
    u, w = flow.velocity(x, y)
    return (x, y) if max(abs(u[0]), abs(w[0])) <= tol else None


def find_stagnation(field_: StripField, state: WaveState | None = None) -> StagnationReport:
    """Locate stagnation points of the reconstructed flow over one period.

    Seeds are grid cells on which both velocity components change sign; each is
    refined by a 2-D Newton iteration on the series representation and
    classified as a center (positive velocity-Jacobian determinant) or saddle.
    A flat surface gives a laminar flow whose stagnation set, if any, is a
    whole line; it is reported through ``laminar_line_y`` instead.
    """
    if field_.velocity is None:
        raise ValueError("stream_function must be applied before find_stagnation")
    p = field_.params
    d = p.depth
    u, w = field_.velocity
    scale = float(max(np.max(np.hypot(u, w)), 1e-300))
    tol = 1e-9 * scale
    col_min, col_max = u.min(axis=0), u.max(axis=0)
    critical = bool(np.any((col_min < 0) & (col_max > 0)))
    flow = field_.flow

    flat = bool(np.max(np.abs(field_.V[-1] - p.h)) == 0.0)
    if flat:
        line = None
        if critical:
            x0 = field_.x[0]
            line_y = brentq(lambda yy: flow.velocity(x0, yy)[0][0], -d, 0.0, xtol=1e-15)
            line = float(flow.position(x0, line_y)[1][0])
        return StagnationReport([], critical, line, scale)

    def cells(arr):
        a = np.stack([arr[:-1, :], arr[1:, :], np.roll(arr, -1, axis=1)[:-1, :], np.roll(arr, -1, axis=1)[1:, :]])
        return (a.min(axis=0) <= 0) & (a.max(axis=0) >= 0)

    seeds = np.argwhere(cells(u) & cells(w))
    dx = field_.x[1] - field_.x[0]
    dy = field_.y[1] - field_.y[0]
    found: list[tuple[float, float]] = []
    for i, j in seeds:
        x0 = field_.x[j] + 0.5 * dx
        y0 = field_.y[i] + 0.5 * dy
        hit = _refine(flow, x0, y0, d, tol)
        if hit is None:
            log.info("stagnation seed at cell (%d, %d) did not converge", i, j)
            continue
        xs, ys = hit
        xs = xs - 2.0 * math.pi * round(xs / (2.0 * math.pi))
        if ys <= -d or ys >= 0.0:
            continue
        dup = False
        for xf, yf in found:
            ddx = abs(xs - xf)
            ddx = min(ddx, 2.0 * math.pi - ddx)
            if ddx <= dx and abs(ys - yf) <= dy:
                dup = True
                break
        if not dup:
            found.append((xs, ys))
    found.sort()
    points = []
    for xs, ys in found:
        det = float(np.linalg.det(_velocity_jacobian(flow, xs, ys)))
        X, Y = flow.position(xs, ys)
        uu, ww = flow.velocity(xs, ys)
        points.append(
            {
                "X": float(X[0]),
                "Y": float(Y[0]),
                "x": float(xs),
                "y": float(ys),
                "type": "center" if det > 0 else "saddle",
                "speed": float(math.hypot(uu[0], ww[0])),
            }
        )
    return StagnationReport(points, critical, None, scale)

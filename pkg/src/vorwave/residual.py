"""Physical parameters, wave states and the surface residual.

The unknown is the zero-mean surface perturbation ``w`` (surface height in
conformal coordinates is ``v = h + w``) together with the Bernoulli offset
``mu``; ``lambda`` is the horizontal speed of the laminar flow at the free
surface.  With ``d = kh``, ``C = C_d`` and

    A = [w^2]/(2kh) - w/k + C(w w') - w C(w')
    B = w'^2 + (2/k) C(w') + C(w')^2

the residual is

    F = gamma^2 A^2 + (2 lambda gamma/k) A + (2gw - mu)(1/k^2 + B) - lambda^2 B,

which is the left side minus the right side of
``(lambda/k + gamma A)^2 = (lambda^2 + mu - 2gw)(w'^2 + (1/k + C(w'))^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .operators import coth_table
from .spectral import DomainError, PeriodicFunction, get_grid

__all__ = [
    "FluxConditionReport",
    "JacobianOperator",
    "LaminarFlow",
    "PhysicalParams",
    "ResidualModel",
    "StagnationCriterion",
    "WaveState",
    "bifurcating_flux",
    "convert_lambda_mu_to_mQ",
    "convert_mQ_to_lambda_mu",
    "dispersion_lambdas",
    "flux_condition_cs",
    "jacobian",
    "laminar_flow",
    "linearization_eigenvalue",
    "linearization_trivial",
    "residual",
    "residual_model",
    "stagnation_criterion",
    "transversality_scalar",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Vorticity ``gamma``, gravity ``g``, wavenumber ``k`` and conformal mean depth ``h``."""

    gamma: float = 0.0
    g: float = 1.0
    k: float = 1.0
    h: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "g", "k", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        for name in ("g", "k", "h"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.k

    @property
    def depth(self) -> float:
        """Depth ``kh`` of the conformal strip."""
        return self.k * self.h

    def to_record(self) -> dict:
        return {"gamma": self.gamma, "g": self.g, "k": self.k, "h": self.h}

    @classmethod
    def from_record(cls, record: dict) -> "PhysicalParams":
        return cls(**{key: float(record[key]) for key in ("gamma", "g", "k", "h")})


def convert_mQ_to_lambda_mu(m: float, Q: float, p: PhysicalParams) -> tuple[float, float]:
    lam = m / p.h - p.gamma * p.h / 2.0
    return lam, Q - 2.0 * p.g * p.h - lam * lam


def convert_lambda_mu_to_mQ(lam: float, mu: float, p: PhysicalParams) -> tuple[float, float]:
    m = lam * p.h + p.gamma * p.h * p.h / 2.0
    return m, mu + 2.0 * p.g * p.h + lam * lam


@dataclass(frozen=True, eq=False)
class WaveState:
    """A candidate solution ``(lambda, mu, w)``; ``w`` is even with zero mean."""

    params: PhysicalParams
    lam: float
    mu: float
    w: PeriodicFunction = field(repr=False)

    def __post_init__(self):
        scale = max(1.0, self.w.max_norm())
        if abs(self.w.mean) > 1e-12 * scale:
            raise DomainError(f"w must have zero mean, got {self.w.mean:.17g}")

    @classmethod
    def trivial(cls, params: PhysicalParams, lam: float, n_modes: int = 128) -> "WaveState":
        return cls(params, float(lam), 0.0, PeriodicFunction.zeros(n_modes))

    @property
    def n_modes(self) -> int:
        return self.w.n_modes

    @property
    def m(self) -> float:
        return convert_lambda_mu_to_mQ(self.lam, self.mu, self.params)[0]

    @property
    def Q(self) -> float:
        return convert_lambda_mu_to_mQ(self.lam, self.mu, self.params)[1]

    @property
    def v(self) -> PeriodicFunction:
        """Surface height in conformal coordinates, ``v = w + h``."""
        return self.w + self.params.h

    def amplitude(self, mode: int = 1) -> float:
        return float(self.w.a[mode - 1])

    def with_values(self, lam=None, mu=None, w=None) -> "WaveState":
        return replace(
            self,
            lam=self.lam if lam is None else float(lam),
            mu=self.mu if mu is None else float(mu),
            w=self.w if w is None else w,
        )


class ResidualModel:
    """Array kernels for the residual and its exact directional derivative.

    One instance per ``(params, n_modes)``; every method broadcasts over
    leading axes of the direction arrays.
    """

    def __init__(self, params: PhysicalParams, n_modes: int):
        self.params = params
        self.grid = get_grid(n_modes)
        self.n_modes = n_modes
        self.coth = coth_table(params.depth, n_modes)

    def _hilbert(self, values):
        return self.grid.apply_odd_multiplier(values, self.coth)

    def parts(self, w: np.ndarray) -> dict:
        p, grid = self.params, self.grid
        P = grid.product
        wp = grid.derivative(w)
        cwp = self._hilbert(wp)
        a_term = (
            np.mean(P(w, w), axis=-1, keepdims=True) / (2.0 * p.depth)
            - w / p.k
            + self._hilbert(P(w, wp))
            - P(w, cwp)
        )
        b_term = P(wp, wp) + (2.0 / p.k) * cwp + P(cwp, cwp)
        return {"wp": wp, "cwp": cwp, "A": a_term, "B": b_term}

    def residual(self, lam: float, mu: float, w: np.ndarray, parts: dict | None = None) -> np.ndarray:
        p = self.params
        P = self.grid.product
        parts = parts or self.parts(w)
        A, B = parts["A"], parts["B"]
        s = 2.0 * p.g * w - mu
        return (
            p.gamma**2 * P(A, A)
            + (2.0 * lam * p.gamma / p.k) * A
            + P(s, B)
            + s / p.k**2
            - lam**2 * B
        )

    def directional(self, lam, mu, w, parts, dlam, dmu, f) -> np.ndarray:
        """Derivative of the residual in direction ``(dlam, dmu, f)``.

        ``f`` may carry leading batch axes; ``dlam``/``dmu`` broadcast against them.
        """
        p = self.params
        P = self.grid.product
        D = self.grid.derivative
        wp, cwp, A, B = parts["wp"], parts["cwp"], parts["A"], parts["B"]
        dlam = np.asarray(dlam, dtype=float)[..., None]
        dmu = np.asarray(dmu, dtype=float)[..., None]
        fp = D(f)
        cfp = self._hilbert(fp)
        dA = (
            np.mean(P(w, f), axis=-1, keepdims=True) / p.depth
            - f / p.k
            + self._hilbert(P(w, fp) + P(f, wp))
            - P(f, cwp)
            - P(w, cfp)
        )
        dB = 2.0 * P(wp, fp) + (2.0 / p.k) * cfp + 2.0 * P(cwp, cfp)
        s = 2.0 * p.g * w - mu
        ds = 2.0 * p.g * f - dmu
        return (
            2.0 * p.gamma**2 * P(A, dA)
            + (2.0 * lam * p.gamma / p.k) * dA
            + P(ds, B)
            + ds / p.k**2
            + P(s, dB)
            - lam**2 * dB
            + dlam * ((2.0 * p.gamma / p.k) * A - 2.0 * lam * B)
        )

    def project(self, values: np.ndarray) -> np.ndarray:
        """Cosine coefficients ``[mean, a_1, ..., a_{N-1}]`` of 1-D values."""
        mean, a, _ = self.grid.coefficients(values)
        return np.concatenate([[mean], a[:-1]])

    def cosine_basis(self) -> np.ndarray:
        """Values of ``cos(jx)`` for j = 1..N-1, shape (N-1, 2N)."""
        j = np.arange(1, self.n_modes)
        return np.cos(np.multiply.outer(j, self.grid.x))


@lru_cache(maxsize=32)
def residual_model(params: PhysicalParams, n_modes: int) -> ResidualModel:
    return ResidualModel(params, n_modes)


def residual(state: WaveState) -> PeriodicFunction:
    model = residual_model(state.params, state.n_modes)
    return PeriodicFunction.from_values(model.residual(state.lam, state.mu, state.w.values))


class JacobianOperator:
    """Exact derivative of :func:`residual` at a fixed state."""

    def __init__(self, state: WaveState):
        self.state = state
        self.model = residual_model(state.params, state.n_modes)
        self._parts = self.model.parts(state.w.values)

    def apply(self, nu: float, f: PeriodicFunction, dlam: float = 0.0) -> PeriodicFunction:
        s = self.state
        out = self.model.directional(s.lam, s.mu, s.w.values, self._parts, dlam, nu, f.values)
        return PeriodicFunction.from_values(out)

    __call__ = apply

    def lambda_derivative(self) -> PeriodicFunction:
        return self.apply(0.0, PeriodicFunction.zeros(self.state.n_modes), dlam=1.0)

    def matrix(self, with_lambda: bool = False) -> np.ndarray:
        """Dense matrix on the even cosine basis.

        Rows are ``[mean, a_1..a_{N-1}]`` of the residual; columns are
        ``[mu, a_1..a_{N-1}]`` of the unknown, prefixed by ``lambda`` when
        ``with_lambda`` is set.
        """
        s, model = self.state, self.model
        basis = model.cosine_basis()
        cols_w = model.directional(s.lam, s.mu, s.w.values, self._parts, 0.0, 0.0, basis)
        zero = np.zeros_like(s.w.values)
        col_mu = model.directional(s.lam, s.mu, s.w.values, self._parts, 0.0, 1.0, zero)
        columns = [col_mu[None, :], cols_w]
        if with_lambda:
            col_lam = model.directional(s.lam, s.mu, s.w.values, self._parts, 1.0, 0.0, zero)
            columns.insert(0, col_lam[None, :])
        values = np.concatenate(columns, axis=0)
        mean, a, _ = model.grid.coefficients(values)
        return np.column_stack([mean, a[:, :-1]]).T


def jacobian(state: WaveState) -> JacobianOperator:
    return JacobianOperator(state)


def linearization_trivial(lam: float, p: PhysicalParams, direction) -> PeriodicFunction:
    """``(2/k^2)((g - lambda gamma) f - lambda^2 k C_kh(f')) - nu/k^2`` at ``w = 0, mu = 0``."""
    from .operators import hilbert_strip
    from .spectral import differentiate

    nu, f = direction
    if abs(f.mean) > 1e-12 * max(1.0, f.max_norm()):
        raise DomainError(f"direction must have zero mean, got {f.mean:.17g}")
    cfp = hilbert_strip(differentiate(f), p.depth)
    return (2.0 / p.k**2) * ((p.g - lam * p.gamma) * f - lam**2 * p.k * cfp) - nu / p.k**2


def linearization_eigenvalue(lam: float, n: int, p: PhysicalParams) -> float:
    """Eigenvalue of the trivial-state linearization on ``cos(nx)``."""
    coth = 1.0 / math.tanh(n * p.depth)
    return (2.0 / p.k**2) * (p.g - lam * p.gamma - lam**2 * n * p.k * coth)


def dispersion_lambdas(n: int, p: PhysicalParams) -> tuple[float, float]:
    """Roots ``(lambda_plus, lambda_minus)`` of ``lambda^2 nk coth(nkh) = g - lambda gamma``."""
    if n < 1:
        raise ValueError(f"mode number must be >= 1, got {n}")
    t = math.tanh(n * p.depth) / (n * p.k)
    disc = math.sqrt(p.gamma**2 * t * t / 4.0 + p.g * t)
    # larger-magnitude root directly, the other from the product -g t
    if p.gamma >= 0:
        minus = -p.gamma * t / 2.0 - disc
        plus = -p.g * t / minus
    else:
        plus = -p.gamma * t / 2.0 + disc
        minus = -p.g * t / plus
    return plus, minus


def transversality_scalar(lam_star: float, n: int, p: PhysicalParams) -> float:
    """``-gamma - 2 lambda* nk coth(nkh)``; nonzero at every bifurcation point."""
    return -p.gamma - 2.0 * lam_star * n * p.k / math.tanh(n * p.depth)


def bifurcating_flux(p: PhysicalParams) -> tuple[float, float]:
    plus, minus = dispersion_lambdas(1, p)
    shift = p.gamma * p.h * p.h / 2.0
    return plus * p.h + shift, minus * p.h + shift


@dataclass(frozen=True)
class LaminarFlow:
    """Parallel shear flow under a flat surface at height ``h``."""

    params: PhysicalParams
    lam: float
    m: float
    Q: float
    stagnation_y: float | None

    def horizontal_velocity(self, Y):
        p = self.params
        return self.lam + p.gamma * (p.h - np.asarray(Y, dtype=float))

    def stream_function(self, Y):
        p = self.params
        Y = np.asarray(Y, dtype=float)
        return -0.5 * p.gamma * Y**2 + (self.m / p.h + p.gamma * p.h / 2.0) * Y - self.m


def laminar_flow(lam: float, p: PhysicalParams) -> LaminarFlow:
    m, Q = convert_lambda_mu_to_mQ(lam, 0.0, p)
    y0 = None
    if p.gamma != 0.0:
        candidate = p.h + lam / p.gamma
        if 0.0 <= candidate <= p.h:
            y0 = candidate
    return LaminarFlow(p, float(lam), m, Q, y0)


def stagnation_depth_below_surface(p: PhysicalParams) -> float:
    """Distance ``h - Y0`` from the surface to the laminar stagnation line."""
    t = math.tanh(p.depth) / p.k
    return t / 2.0 + math.sqrt(t * t / 4.0 + p.g / p.gamma**2 * t)


@dataclass(frozen=True)
class StagnationCriterion:
    holds: bool
    lhs: float
    rhs: float
    critical_k: float | None
    critical_gamma: float | None


def _stp_sides(gamma: float, g: float, k: float, h: float) -> tuple[float, float]:
    kh = k * h
    return math.tanh(kh) / kh, gamma**2 * h / (g + gamma**2 * h)


def _bracket_root(func, lo: float, hi: float, grow: float = 2.0, tries: int = 200) -> float:
    flo, fhi = func(lo), func(hi)
    for _ in range(tries):
        if flo * fhi <= 0:
            break
        lo, hi = lo / grow, hi * grow
        flo, fhi = func(lo), func(hi)
    else:
        raise RuntimeError("failed to bracket root")
    return brentq(func, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def stagnation_criterion(p: PhysicalParams) -> StagnationCriterion:
    """Evaluate ``tanh(kh)/(kh) <= gamma^2 h/(g + gamma^2 h)`` and its thresholds.

    ``critical_k`` is the wavenumber at fixed ``(h, gamma)`` where equality holds,
    ``critical_gamma`` the positive vorticity at fixed ``(h, k)``.  Both are
    absent for irrotational flow.
    """
    lhs, rhs = _stp_sides(p.gamma, p.g, p.k, p.h)
    if p.gamma == 0.0:
        return StagnationCriterion(lhs <= rhs, lhs, rhs, None, None)
    k_star = _bracket_root(
        lambda k: _stp_sides(p.gamma, p.g, k, p.h)[0] - rhs, 0.5 * p.k, 2.0 * p.k
    )
    g_abs = abs(p.gamma)
    gamma_star = _bracket_root(
        lambda gam: lhs - _stp_sides(gam, p.g, p.k, p.h)[1], 0.5 * g_abs, 2.0 * g_abs
    )
    return StagnationCriterion(lhs <= rhs, lhs, rhs, k_star, gamma_star)


@dataclass(frozen=True)
class FluxConditionReport:
    condition_holds: bool
    lhs: float
    rhs: float
    lambda_root: float | None
    h_root: float | None

    @property
    def agrees(self) -> bool:
        return self.condition_holds == (self.lambda_root is not None)


def _cs_depth(lam: float, gamma: float, m: float) -> float:
    # -lam/gamma - sqrt(lam^2 + 2 gamma m)/gamma, rationalized
    return -2.0 * m / (-lam + math.sqrt(max(lam * lam + 2.0 * gamma * m, 0.0)))


def flux_condition_cs(m: float, p: PhysicalParams, samples: int = 400) -> FluxConditionReport:
    """Compare the positive-vorticity flux condition with a direct root search.

    For ``gamma > 0``, ``m < 0`` and ``k = 1`` the condition
    ``tanh(sqrt(-2m/gamma)) > -2 m gamma/(g + gamma sqrt(-2 m gamma))`` is
    evaluated, and independently ``tanh(h(lambda)) = lambda^2/(g - gamma lambda)``
    with ``h(lambda) = -lambda/gamma - sqrt(lambda^2 + 2 gamma m)/gamma`` is
    searched for a root ``lambda < -sqrt(-2 gamma m)`` by sampling for a sign
    change and refining by bracketing.
    """
    gamma, g = p.gamma, p.g
    if not (gamma > 0 and m < 0):
        raise DomainError(f"requires gamma > 0 and m < 0, got gamma={gamma}, m={m}")
    if p.k != 1.0:
        raise DomainError(f"flux condition is stated for k = 1, got k={p.k}")
    lhs = math.tanh(math.sqrt(-2.0 * m / gamma))
    rhs = -2.0 * m * gamma / (g + gamma * math.sqrt(-2.0 * m * gamma))
    holds = lhs > rhs

    edge = -math.sqrt(-2.0 * gamma * m)

    def f(lam):
        return math.tanh(_cs_depth(lam, gamma, m)) - lam * lam / (g - gamma * lam)

    first = 1e-12 * max(1.0, abs(edge))
    width = 10.0 * (1.0 + g / gamma)
    root = None
    for _ in range(60):
        lams = edge - np.geomspace(first, width, samples)
        vals = np.array([f(x) for x in lams])
        sign_change = np.nonzero(vals[:-1] * vals[1:] <= 0)[0]
        if sign_change.size:
            i = sign_change[0]
            root = brentq(f, lams[i + 1], lams[i], xtol=1e-15, rtol=4 * np.finfo(float).eps)
            break
        width *= 2.0
    h_root = _cs_depth(root, gamma, m) if root is not None else None
    return FluxConditionReport(holds, lhs, rhs, root, h_root)

"""Fourier-multiplier operators for periodic harmonic functions in a strip.

For a strip of depth ``d`` and ``w = [w] + sum a_n cos(nx) + b_n sin(nx)``:

* ``hilbert_strip``     C_d: cos(nx) -> coth(nd) sin(nx), sin(nx) -> -coth(nd) cos(nx)
* ``dirichlet_neumann`` G_d: cos/sin(nx) -> n coth(nd) cos/sin(nx), constant c -> c/d
* ``hilbert_infinite``  C:   the d -> infinity limit (coth replaced by 1)
* ``kernel_correction`` K_d = C_d - C, convolution with
  ``kappa_d(t) = sum 2 lambda_n sin(nt)``, ``lambda_n = 2/(exp(2nd) - 1)``
* ``commutator_Q``      Q_d(w) = w C_d(w') - C_d(w w')

``coth(nd)`` is always evaluated as ``1 + lambda_n`` so large ``nd`` never
overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .spectral import DomainError, PeriodicFunction, get_grid, multiply

__all__ = [
    "KernelTable",
    "MEAN_TOL",
    "coth_table",
    "commutator_Q",
    "commutator_Q_infinite",
    "dirichlet_neumann",
    "hilbert_infinite",
    "hilbert_strip",
    "hilbert_strip_inverse",
    "kernel_correction",
    "kernel_correction_quadrature",
    "kernel_lambdas",
    "kernel_table",
]

MEAN_TOL = 1e-12


def _check_depth(d: float) -> float:
    d = float(d)
    if not (np.isfinite(d) and d > 0):
        raise ValueError(f"strip depth must be positive and finite, got {d}")
    return d


def kernel_lambdas(d: float, n_modes: int) -> np.ndarray:
    """``lambda_n = 2/(e^{2nd} - 1)`` for n = 0..N (entry 0 is unused, set to 0)."""
    d = _check_depth(d)
    n = np.arange(n_modes + 1, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        lam = 2.0 / np.expm1(np.minimum(2.0 * n * d, 1400.0))
    lam[0] = 0.0
    return lam


@lru_cache(maxsize=64)
def _multipliers(d: float, n_modes: int):
    lam = kernel_lambdas(d, n_modes)
    coth = 1.0 + lam
    coth[0] = 0.0
    n = np.arange(n_modes + 1, dtype=float)
    inv = np.zeros_like(coth)
    inv[1:] = 1.0 / coth[1:]
    dn = n * coth
    dn[0] = 1.0 / d
    for arr in (lam, coth, inv, dn):
        arr.setflags(write=False)
    return lam, coth, inv, dn


def coth_table(d: float, n_modes: int) -> np.ndarray:
    """``coth(nd)`` for n = 0..N with entry 0 set to 0."""
    return _multipliers(_check_depth(d), n_modes)[1]


def _require_zero_mean(w: PeriodicFunction, what: str) -> None:
    scale = max(1.0, w.max_norm())
    if abs(w.mean) > MEAN_TOL * scale:
        raise DomainError(f"{what} is defined on zero-mean functions; got mean {w.mean:.17g}")


def hilbert_strip(w: PeriodicFunction, d: float) -> PeriodicFunction:
    _require_zero_mean(w, "C_d")
    coth = _multipliers(_check_depth(d), w.n_modes)[1]
    return PeriodicFunction.from_values(w.grid.apply_odd_multiplier(w.values, coth))


def hilbert_strip_inverse(w: PeriodicFunction, d: float) -> PeriodicFunction:
    """Inverse of :func:`hilbert_strip` on zero-mean functions: multiplier ``-tanh(nd)``."""
    _require_zero_mean(w, "C_d^{-1}")
    inv = _multipliers(_check_depth(d), w.n_modes)[2]
    return PeriodicFunction.from_values(w.grid.apply_odd_multiplier(w.values, -inv))


def dirichlet_neumann(w: PeriodicFunction, d: float) -> PeriodicFunction:
    dn = _multipliers(_check_depth(d), w.n_modes)[3]
    return PeriodicFunction.from_values(w.grid.apply_even_multiplier(w.values, dn))


def hilbert_infinite(w: PeriodicFunction) -> PeriodicFunction:
    _require_zero_mean(w, "C")
    ones = np.ones(w.n_modes + 1)
    return PeriodicFunction.from_values(w.grid.apply_odd_multiplier(w.values, ones))


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Multipliers ``lambda_n`` and the kernel ``kappa_d`` sampled on the grid."""

    d: float
    n_modes: int
    lambdas: np.ndarray = field(repr=False)
    kappa_values: np.ndarray = field(repr=False)

    def kappa(self, t) -> np.ndarray:
        """Evaluate ``kappa_d(t) = sum_{n=1}^N 2 lambda_n sin(nt)`` by direct summation."""
        t = np.asarray(t, dtype=float)
        n = np.arange(1, self.n_modes + 1)
        return np.sin(np.multiply.outer(t, n)) @ (2.0 * self.lambdas[1:])


@lru_cache(maxsize=64)
def _kernel_table(d: float, n_modes: int) -> KernelTable:
    lam = _multipliers(d, n_modes)[0]
    grid = get_grid(n_modes)
    table = KernelTable(d, n_modes, lam, np.empty(0))
    kappa = table.kappa(grid.x)
    kappa.setflags(write=False)
    return KernelTable(d, n_modes, lam, kappa)


def kernel_table(d: float, n_modes: int) -> KernelTable:
    return _kernel_table(_check_depth(d), int(n_modes))


def kernel_correction(w: PeriodicFunction, table: KernelTable) -> PeriodicFunction:
    """K_d(w) through its Fourier multiplier ``-i sgn(n) lambda_n``."""
    _require_zero_mean(w, "K_d")
    if table.n_modes != w.n_modes:
        raise ValueError(f"kernel table has {table.n_modes} modes, function has {w.n_modes}")
    return PeriodicFunction.from_values(w.grid.apply_odd_multiplier(w.values, table.lambdas))


def kernel_correction_quadrature(w: PeriodicFunction, table: KernelTable) -> PeriodicFunction:
    """K_d(w)(t_i) = (1/2pi) int kappa_d(t_i - s) w(s) ds by the trapezoidal rule.

    Exact whenever the bandwidth of ``w`` plus the effective bandwidth of
    ``kappa_d`` stays below ``2N``.
    """
    _require_zero_mean(w, "K_d")
    size = 2 * w.n_modes
    idx = np.arange(size)
    circ = table.kappa_values[(idx[:, None] - idx[None, :]) % size]
    return PeriodicFunction.from_values(circ @ w.values / size)


def _commutator(w: PeriodicFunction, transform) -> PeriodicFunction:
    dw = w.grid.derivative(w.values)
    ww = w.grid.product(w.values, dw)
    drift = float(np.mean(ww))
    scale = max(1.0, float(np.max(np.abs(ww))))
    # w w' = (w^2/2)' must have zero mean
    assert abs(drift) <= 1e-10 * scale, f"mean of w w' is {drift}"
    first = multiply(w, transform(PeriodicFunction.from_values(dw)))
    second = transform(PeriodicFunction.from_values(ww - drift))
    return first - second


def commutator_Q(w: PeriodicFunction, d: float) -> PeriodicFunction:
    return _commutator(w, lambda f: hilbert_strip(f, d))


def commutator_Q_infinite(w: PeriodicFunction) -> PeriodicFunction:
    """Q(w) = w C(w') - C(w w'), the infinite-depth commutator."""
    return _commutator(w, hilbert_infinite)

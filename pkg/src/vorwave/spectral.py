"""Uniform-grid Fourier representation of real 2π-periodic functions.

A function with highest resolved mode ``N`` is sampled at the ``2N`` points
``x_j = j*pi/N`` and expanded as

    w(x) = mean + sum_{n=1}^{N} a_n cos(nx) + sum_{n=1}^{N} b_n sin(nx).

``b_N`` is always zero: ``sin(Nx)`` vanishes on the grid.  Operators that
rotate cosines into sines (differentiation, Hilbert transforms) therefore drop
the Nyquist mode.

The module has two layers.  :class:`Grid` holds array kernels that act on the
last axis of value arrays, so the Newton solver can push whole batches of
directions through them.  :class:`PeriodicFunction` is the immutable value
type used by the public API.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "DEFAULT_MODES",
    "DomainError",
    "Grid",
    "InvalidGridError",
    "PeriodicFunction",
    "SymmetryClass",
    "differentiate",
    "get_grid",
    "mean",
    "multiply",
    "symmetry_class",
    "to_coefficients",
]

DEFAULT_MODES = 128


class InvalidGridError(ValueError):
    """Sample array cannot live on the uniform collocation grid."""


class DomainError(ValueError):
    """Operator applied outside its domain (e.g. nonzero mean)."""


class Grid:
    """Array kernels for the ``2N``-point grid; all act on the last axis."""

    def __init__(self, n_modes: int):
        if n_modes < 2:
            raise InvalidGridError(f"need n_modes >= 2, got {n_modes}")
        self.n_modes = int(n_modes)
        self.size = 2 * self.n_modes
        self.x = np.arange(self.size) * (np.pi / self.n_modes)
        self.wavenumbers = np.arange(self.n_modes + 1, dtype=float)

    # -- transforms ---------------------------------------------------------
    def spectrum(self, values: np.ndarray) -> np.ndarray:
        """Normalized half spectrum ``c_n``, ``w_j = sum c_n e^{i n x_j}`` (+ c.c.)."""
        return np.fft.rfft(values, axis=-1) / self.size

    def from_spectrum(self, spec: np.ndarray) -> np.ndarray:
        return np.fft.irfft(spec * self.size, n=self.size, axis=-1)

    def coefficients(self, values: np.ndarray):
        """Return ``(mean, a, b)`` with ``a``, ``b`` indexed by n = 1..N."""
        spec = self.spectrum(values)
        mean = spec[..., 0].real.copy()
        a = 2.0 * spec[..., 1:].real
        b = -2.0 * spec[..., 1:].imag
        a[..., -1] *= 0.5
        b[..., -1] = 0.0
        return mean, a, b

    def values_from_coefficients(self, mean, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mean = np.asarray(mean, dtype=float)
        spec = np.zeros(a.shape[:-1] + (self.n_modes + 1,), dtype=complex)
        spec[..., 0] = mean
        spec[..., 1:] = 0.5 * (a - 1j * b)
        spec[..., -1] = a[..., -1]
        return self.from_spectrum(spec)

    def cosine_values(self, mean, a) -> np.ndarray:
        """Values of an even function given its cosine coefficients."""
        a = np.asarray(a, dtype=float)
        return self.values_from_coefficients(mean, a, np.zeros_like(a))

    # -- spectral operations on values --------------------------------------
    def apply_odd_multiplier(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Apply ``e^{inx} -> -i sgn(n) mult_n e^{inx}``; the mean is discarded.

        ``mult`` has length N+1 (index 0 and the Nyquist entry are ignored).
        """
        spec = self.spectrum(values)
        out = -1j * spec * mult
        out[..., 0] = 0.0
        out[..., -1] = 0.0
        return self.from_spectrum(out)

    def apply_even_multiplier(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Apply a real multiplier ``mult_n`` to every mode (mean included)."""
        return self.from_spectrum(self.spectrum(values) * mult)

    def derivative(self, values: np.ndarray) -> np.ndarray:
        spec = self.spectrum(values)
        out = 1j * self.wavenumbers * spec
        out[..., -1] = 0.0
        return self.from_spectrum(out)

    def product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Dealiased product: exact on a 2x finer grid, truncated back to N modes."""
        fine = 2 * self.size
        su = self._pad(self.spectrum(u))
        sv = self._pad(self.spectrum(v))
        pu = np.fft.irfft(su * fine, n=fine, axis=-1)
        pv = np.fft.irfft(sv * fine, n=fine, axis=-1)
        sp = np.fft.rfft(pu * pv, axis=-1) / fine
        spec = sp[..., : self.n_modes + 1].copy()
        # fine-grid mode N holds half the cos(Nx) amplitude; sin(Nx) is lost
        spec[..., -1] = 2.0 * spec[..., -1].real
        return self.from_spectrum(spec)

    def _pad(self, spec: np.ndarray) -> np.ndarray:
        out = np.zeros(spec.shape[:-1] + (self.size + 1,), dtype=complex)
        out[..., : self.n_modes + 1] = spec
        out[..., self.n_modes] *= 0.5
        return out

    def mean(self, values: np.ndarray) -> np.ndarray:
        return np.mean(values, axis=-1)


@lru_cache(maxsize=None)
def get_grid(n_modes: int) -> Grid:
    return Grid(n_modes)


class SymmetryClass(enum.Enum):
    EVEN = "even"
    ODD = "odd"
    NONE = "none"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PeriodicFunction:
    """Real 2π-periodic trigonometric polynomial on the collocation grid.

    Construct with :meth:`from_values`, :meth:`from_coefficients` or
    :meth:`from_callable`; the remaining fields are filled consistently.
    """

    n_modes: int
    values: np.ndarray = field(repr=False)
    mean: float
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @property
    def grid(self) -> Grid:
        return get_grid(self.n_modes)

    @classmethod
    def from_values(cls, values) -> "PeriodicFunction":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 4 or values.size % 2:
            raise InvalidGridError(
                f"values must be a 1-D array of even length >= 4, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        grid = get_grid(values.size // 2)
        mean_, a, b = grid.coefficients(values)
        return cls(grid.n_modes, _freeze(values), float(mean_), _freeze(a), _freeze(b))

    @classmethod
    def from_coefficients(cls, mean, a, b=None, n_modes: int | None = None) -> "PeriodicFunction":
        """Build from coefficients; short ``a``/``b`` are zero-padded to ``n_modes``."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.zeros_like(a) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
        n = n_modes or max(a.size, b.size)
        if a.size > n or b.size > n:
            raise InvalidGridError(f"{max(a.size, b.size)} coefficients do not fit in {n} modes")
        aa = np.zeros(n)
        bb = np.zeros(n)
        aa[: a.size] = a
        bb[: b.size] = b
        bb[-1] = 0.0
        grid = get_grid(n)
        values = grid.values_from_coefficients(float(mean), aa, bb)
        return cls(n, _freeze(values), float(mean), _freeze(aa), _freeze(bb))

    @classmethod
    def from_callable(cls, func, n_modes: int = DEFAULT_MODES) -> "PeriodicFunction":
        grid = get_grid(n_modes)
        return cls.from_values(np.broadcast_to(func(grid.x), grid.x.shape))

    @classmethod
    def constant(cls, c: float, n_modes: int = DEFAULT_MODES) -> "PeriodicFunction":
        return cls.from_coefficients(c, np.zeros(n_modes), n_modes=n_modes)

    @classmethod
    def zeros(cls, n_modes: int = DEFAULT_MODES) -> "PeriodicFunction":
        return cls.constant(0.0, n_modes)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def coefficient_norm(self) -> float:
        """``([w]^2 + sum a_n^2 + b_n^2)^{1/2}``."""
        return float(np.sqrt(self.mean**2 + np.sum(self.a**2) + np.sum(self.b**2)))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def resample(self, n_modes: int) -> "PeriodicFunction":
        """Zero-pad or truncate the coefficients to ``n_modes``."""
        if n_modes == self.n_modes:
            return self
        m = min(n_modes, self.n_modes)
        return PeriodicFunction.from_coefficients(
            self.mean, self.a[:m], self.b[:m], n_modes=n_modes
        )

    def centered(self) -> "PeriodicFunction":
        return self - self.mean

    def __call__(self, x) -> np.ndarray:
        """Evaluate the trigonometric interpolant at arbitrary points."""
        x = np.asarray(x, dtype=float)
        n = np.arange(1, self.n_modes + 1)
        phase = np.multiply.outer(x, n)
        return self.mean + np.cos(phase) @ self.a + np.sin(phase) @ self.b

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "PeriodicFunction":
        if isinstance(other, PeriodicFunction):
            if other.n_modes != self.n_modes:
                raise InvalidGridError(
                    f"mode mismatch: {self.n_modes} vs {other.n_modes}; resample first"
                )
            return other
        return PeriodicFunction.constant(float(other), self.n_modes)

    def __add__(self, other):
        return PeriodicFunction.from_values(self.values + self._coerce(other).values)

    __radd__ = __add__

    def __sub__(self, other):
        return PeriodicFunction.from_values(self.values - self._coerce(other).values)

    def __rsub__(self, other):
        return PeriodicFunction.from_values(self._coerce(other).values - self.values)

    def __neg__(self):
        return PeriodicFunction.from_values(-self.values)

    def __mul__(self, other):
        if isinstance(other, PeriodicFunction):
            return multiply(self, other)
        return PeriodicFunction.from_values(float(other) * self.values)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return PeriodicFunction.from_values(self.values / float(scalar))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.values - self._coerce(other).values)) <= atol)

    # -- serialization ------------------------------------------------------
    def to_record(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "mean": self.mean,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "PeriodicFunction":
        return cls.from_coefficients(
            record["mean"], record["a"], record["b"], n_modes=int(record["n_modes"])
        )


def to_coefficients(values) -> PeriodicFunction:
    """Discrete Fourier coefficients of the interpolant through ``values``."""
    return PeriodicFunction.from_values(values)


def differentiate(w: PeriodicFunction) -> PeriodicFunction:
    """``(a_n, b_n) -> (n b_n, -n a_n)``; the Nyquist cosine has no resolved derivative."""
    return PeriodicFunction.from_values(w.grid.derivative(w.values))


def multiply(u: PeriodicFunction, v: PeriodicFunction) -> PeriodicFunction:
    """Dealiased pointwise product; the coarser operand is resampled first."""
    if u.n_modes != v.n_modes:
        n = max(u.n_modes, v.n_modes)
        u, v = u.resample(n), v.resample(n)
    return PeriodicFunction.from_values(u.grid.product(u.values, v.values))


def mean(w: PeriodicFunction) -> float:
    return w.mean


def symmetry_class(w: PeriodicFunction, rtol: float = 1e-12) -> SymmetryClass:
    scale = max(w.max_norm(), 1e-300)
    if np.max(np.abs(w.b), initial=0.0) <= rtol * scale:
        return SymmetryClass.EVEN
    if abs(w.mean) <= rtol * scale and np.max(np.abs(w.a), initial=0.0) <= rtol * scale:
        return SymmetryClass.ODD
    return SymmetryClass.NONE

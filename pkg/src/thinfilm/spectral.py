"""
Fourier representation of real fields on the unit torus T^2 = [0, 1]^2.

Fields are stored as normalized rfft2 coefficients: ``coeffs[i, j]`` is the
Fourier coefficient f^(k) at k = (k1[i], k2[j]) with

    f(x) = sum_k f^(k) exp(2 pi i k.x),     f^(k) = mean_x f(x) exp(-2 pi i k.x).

Axis 0 is x1 (all frequencies), axis 1 is x2 (non-negative frequencies only,
the rest being implied by Hermitian symmetry). Derivative multipliers use
wavenumber ``scale * k`` where scale is 2 pi (analytic Laplacian on [0,1]^2)
or 1 (the bare |k| symbol).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatch, InvalidExponent, NonFiniteField

TWO_PI = "two_pi"
UNIT = "unit"
_SCALES = {TWO_PI: 2.0 * np.pi, UNIT: 1.0}


@dataclass(frozen=True)
class Grid:
    n: int
    wavenumber_scale: str = TWO_PI

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {self.n!r}")
        if self.wavenumber_scale not in _SCALES:
            raise ValueError(f"unknown wavenumber_scale {self.wavenumber_scale!r}")

    @property
    def scale(self) -> float:
        return _SCALES[self.wavenumber_scale]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @cached_property
    def k1(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, 1.0 / self.n)[:, None]

    @cached_property
    def k2(self) -> np.ndarray:
        return np.fft.rfftfreq(self.n, 1.0 / self.n)[None, :]

    @cached_property
    def kmag2(self) -> np.ndarray:
        """|scale * k|^2 on the packed layout."""
        s = self.scale
        return (s * self.k1) ** 2 + (s * self.k2) ** 2

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each packed coefficient in the full spectrum."""
        w = np.full(self.shape, 2.0)
        w[:, 0] = 1.0
        w[:, -1] = 1.0
        return w

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True for coefficients that are not Nyquist modes in either axis."""
        m = np.ones(self.shape, dtype=bool)
        m[self.n // 2, :] = False
        m[:, -1] = False
        return m

    @cached_property
    def two_thirds_mask(self) -> np.ndarray:
        cut = self.n / 3.0
        return (np.abs(self.k1) <= cut) & (np.abs(self.k2) <= cut)

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) / self.n
        return np.meshgrid(x, x, indexing="ij")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real scalar field on the torus, held by its Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.shape:
            raise GridMismatch(f"coefficients have shape {c.shape}, grid expects {self.grid.shape}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "SpectralField":
        return transform(values, "forward", grid=grid)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable) -> "SpectralField":
        x1, x2 = grid.points
        return cls.from_physical(grid, func(x1, x2))

    def physical(self) -> np.ndarray:
        if "phys" not in self._cache:
            arr = transform(self, "backward")
            arr.setflags(write=False)
            self._cache["phys"] = arr
        return self._cache["phys"]

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise GridMismatch(f"{self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return self.with_coeffs(self.coeffs + other.coeffs)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return self.with_coeffs(self.coeffs - other.coeffs)
        return NotImplemented

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, a):
        if np.isscalar(a):
            return self.with_coeffs(self.coeffs * float(a))
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpectralField(n={self.grid.n}, scale={self.grid.wavenumber_scale}, L2={l2_norm(self):.6g})"


# ----------------------------------------------------------------------------
# transforms


def transform(obj, direction: str, grid: Grid | None = None):
    """Forward: real array -> SpectralField. Backward: SpectralField -> real array."""
    if direction == "forward":
        values = np.asarray(obj, dtype=np.float64)
        if grid is None:
            grid = Grid(values.shape[0])
        if values.shape != (grid.n, grid.n):
            raise GridMismatch(f"array of shape {values.shape} on grid n={grid.n}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteField("physical values contain NaN or inf")
        return SpectralField(grid, np.fft.rfft2(values) / grid.n**2)
    if direction == "backward":
        if not isinstance(obj, SpectralField):
            raise TypeError("backward transform expects a SpectralField")
        if grid is not None and grid != obj.grid:
            raise GridMismatch(f"{obj.grid} vs {grid}")
        if not np.all(np.isfinite(obj.coeffs)):
            raise NonFiniteField("coefficients contain NaN or inf")
        n = obj.grid.n
        return np.fft.irfft2(obj.coeffs * n**2, s=(n, n))
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def pad_coeffs(coeffs: np.ndarray, n: int, m: int) -> np.ndarray:
    """Zero-pad packed coefficients from an n-grid to an m-grid (m >= n).

    Nyquist coefficients are split evenly between +n/2 and -n/2 so the padded
    field is the real trigonometric interpolant of the original.
    """
    if m == n:
        return np.array(coeffs, dtype=np.complex128)
    h = n // 2
    out = np.zeros((m, m // 2 + 1), dtype=np.complex128)
    out[:h, :h] = coeffs[:h, :h]
    out[m - h + 1 :, :h] = coeffs[h + 1 :, :h]
    out[h, :h] = 0.5 * coeffs[h, :h]
    out[m - h, :h] = 0.5 * coeffs[h, :h]
    # Nyquist column: the implied conjugate at k2 = -n/2 supplies the other half
    col = coeffs[:, h]
    out[:h, h] = 0.5 * col[:h]
    out[m - h + 1 :, h] = 0.5 * col[h + 1 :]
    out[h, h] = 0.25 * col[h]
    out[m - h, h] = 0.25 * col[h]
    return out


def truncate_coeffs(coeffs: np.ndarray, m: int, n: int) -> np.ndarray:
    """Project packed m-grid coefficients onto the n-grid, dropping Nyquist modes."""
    if m == n:
        out = np.array(coeffs, dtype=np.complex128)
        out[n // 2, :] = 0.0
        out[:, -1] = 0.0
        return out
    h = n // 2
    out = np.zeros((n, h + 1), dtype=np.complex128)
    out[:h, :h] = coeffs[:h, :h]
    out[h + 1 :, :h] = coeffs[m - h + 1 :, :h]
    return out


def physical_on(field_: SpectralField, m: int) -> np.ndarray:
    """Physical values of the trigonometric interpolant on an m x m grid."""
    if m == field_.grid.n:
        return field_.physical()
    c = pad_coeffs(field_.coeffs, field_.grid.n, m)
    return np.fft.irfft2(c * m * m, s=(m, m))


def padded_size(n: int, factor: float) -> int:
    m = int(np.ceil(n * factor))
    return m + (m % 2)


# ----------------------------------------------------------------------------
# derivatives


@dataclass(frozen=True)
class Padded:
    factor: float = 2.0


def _odd_multiplier(grid: Grid, k: np.ndarray) -> np.ndarray:
    mult = 1j * grid.scale * k * np.ones(grid.shape)
    return np.where(grid.nyquist_mask, mult, 0.0)


def grad_multipliers(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """i*scale*k per axis; zero on Nyquist modes, where an odd multiplier is not real."""
    return _odd_multiplier(grid, grid.k1), _odd_multiplier(grid, grid.k2)


def lap_multiplier(grid: Grid) -> np.ndarray:
    return -grid.kmag2


def bilap_multiplier(grid: Grid) -> np.ndarray:
    lap = lap_multiplier(grid)
    return lap * lap


def frac_lap_multiplier(grid: Grid, s: float) -> np.ndarray:
    if not s > 0:
        raise InvalidExponent(f"fractional order must be positive, got {s}")
    kmag = np.sqrt(grid.kmag2)
    out = kmag**s
    out[0, 0] = 0.0
    return out


def derivative(f: SpectralField, op: str, s: float | None = None):
    """Apply a spectral differential operator.

    ``op`` is one of ``grad`` (returns a pair), ``lap``, ``bilap`` or
    ``frac_lap`` (needs ``s``; the k = 0 output is zero). ``div`` takes a pair
    of fields and returns their divergence.
    """
    if op == "div":
        fx, fy = f
        fx._check(fy)
        m1, m2 = grad_multipliers(fx.grid)
        return fx.with_coeffs(m1 * fx.coeffs + m2 * fy.coeffs)
    g = f.grid
    if op == "grad":
        m1, m2 = grad_multipliers(g)
        return f.with_coeffs(m1 * f.coeffs), f.with_coeffs(m2 * f.coeffs)
    if op == "lap":
        return f.with_coeffs(lap_multiplier(g) * f.coeffs)
    if op == "bilap":
        return f.with_coeffs(bilap_multiplier(g) * f.coeffs)
    if op == "frac_lap":
        if s is None:
            raise InvalidExponent("frac_lap needs an order s")
        return f.with_coeffs(frac_lap_multiplier(g, s) * f.coeffs)
    raise ValueError(f"unknown derivative {op!r}")


# ----------------------------------------------------------------------------
# dealiasing


def dealias(f: SpectralField, rule="two_thirds") -> SpectralField:
    """Projection used to control aliasing.

    ``two_thirds`` keeps max(|k1|, |k2|) <= n/3. A ``Padded`` rule keeps every
    non-Nyquist mode, which is the space on which padded products are exact.
    """
    if rule == "two_thirds":
        return f.with_coeffs(np.where(f.grid.two_thirds_mask, f.coeffs, 0.0))
    if isinstance(rule, Padded) or rule == "padded":
        return f.with_coeffs(np.where(f.grid.nyquist_mask, f.coeffs, 0.0))
    raise ValueError(f"unknown dealias rule {rule!r}")


def padded_product(a: SpectralField, b: SpectralField, factor: float = 2.0) -> SpectralField:
    """Pointwise product evaluated on an oversampled grid and projected back."""
    a._check(b)
    n = a.grid.n
    m = padded_size(n, factor)
    prod = physical_on(a, m) * physical_on(b, m)
    return a.with_coeffs(truncate_coeffs(np.fft.rfft2(prod) / m**2, m, n))


# ----------------------------------------------------------------------------
# norms


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.sum(f.grid.weights * np.abs(f.coeffs) ** 2)))


def inner(f: SpectralField, g: SpectralField) -> float:
    """L^2 inner product of two real fields."""
    f._check(g)
    return float(np.sum(f.grid.weights * (f.coeffs * np.conj(g.coeffs)).real))


def physical_l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.mean(f.physical() ** 2)))


def lp_norm(f: SpectralField, q: float, pad: int = 1) -> float:
    if q < 1:
        raise InvalidExponent(f"Lp norm needs q >= 1, got {q}")
    vals = np.abs(physical_on(f, f.grid.n * pad))
    if np.isinf(q):
        return float(vals.max())
    return float(np.mean(vals**q) ** (1.0 / q))


def linf_norm(f: SpectralField, pad: int = 1) -> float:
    return float(np.abs(physical_on(f, f.grid.n * pad)).max())


def hs_norm(f: SpectralField, s: float) -> float:
    w = (1.0 + f.grid.kmag2) ** s
    return float(np.sqrt(np.sum(f.grid.weights * w * np.abs(f.coeffs) ** 2)))


def dot_hs_norm(f: SpectralField, s: float) -> float:
    w = f.grid.kmag2**s
    w[0, 0] = 0.0
    return float(np.sqrt(np.sum(f.grid.weights * w * np.abs(f.coeffs) ** 2)))


def grad_magnitude(f: SpectralField, pad: int = 1) -> np.ndarray:
    gx, gy = derivative(f, "grad")
    m = f.grid.n * pad
    return np.hypot(physical_on(gx, m), physical_on(gy, m))


def w1inf_norm(f: SpectralField, pad: int = 1) -> float:
    return max(linf_norm(f, pad), float(grad_magnitude(f, pad).max()))


def grad_lp_power(f: SpectralField, p: float, pad: int = 1) -> float:
    """||grad f||_p^p by grid quadrature (trapezoid, spectrally accurate)."""
    return float(np.mean(grad_magnitude(f, pad) ** p))


def norm(f: SpectralField, which: str, q: float | None = None, s: float | None = None, pad: int = 1) -> float:
    """Dispatch to the named norm: L2, Lp (q), Hs (s), dotHs (s), Linf, W1inf."""
    if which == "L2":
        return l2_norm(f)
    if which == "Lp":
        if q is None:
            raise InvalidExponent("Lp norm needs q")
        return lp_norm(f, q, pad)
    if which == "Hs":
        return hs_norm(f, s)
    if which == "dotHs":
        return dot_hs_norm(f, s)
    if which == "Linf":
        return linf_norm(f, pad)
    if which == "W1inf":
        return w1inf_norm(f, pad)
    raise ValueError(f"unknown norm {which!r}")


# ----------------------------------------------------------------------------
# sample fields


def white_noise(grid: Grid, seed: int, mean_zero: bool = True, band: float | None = None) -> SpectralField:
    """Gaussian white noise normalized to unit L^2 norm.

    ``band`` optionally restricts the spectrum to max(|k1|, |k2|) <= band.
    """
    rng = np.random.default_rng(seed)
    f = SpectralField.from_physical(grid, rng.standard_normal((grid.n, grid.n)))
    c = np.array(f.coeffs)
    if mean_zero:
        c[0, 0] = 0.0
    if band is not None:
        c[(np.abs(grid.k1) > band) | (np.abs(grid.k2) > band)] = 0.0
    out = f.with_coeffs(c)
    return out * (1.0 / l2_norm(out))


def random_smooth(grid: Grid, seed: int, kmax: int = 4, decay: float = 2.0) -> SpectralField:
    """Random real field with modes |k_i| <= kmax and amplitudes ~ (1+|k|^2)^(-decay/2)."""
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.shape, dtype=np.complex128)
    sel = (np.abs(grid.k1) <= kmax) & (np.abs(grid.k2) <= kmax)
    amp = (1.0 + grid.k1**2 + grid.k2**2) ** (-decay / 2.0)
    z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c[sel] = (amp * z)[sel]
    c[0, 0] = 0.0
    # enforce Hermitian symmetry on the k2 = 0 column by a round trip
    f = SpectralField.from_physical(grid, np.fft.irfft2(c * grid.n**2, s=(grid.n, grid.n)))
    return f * (1.0 / l2_norm(f))


def stack_physical(fields: Sequence[SpectralField], m: int) -> np.ndarray:
    return np.stack([physical_on(f, m) for f in fields])

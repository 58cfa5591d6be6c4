"""
Divergence-free velocity fields and the linear advective hyper-diffusion
solution operator S_{s,t}: phi_t + v.grad phi + Delta^2 phi = 0.

Every implemented flow is piecewise constant in time and, on each piece, a
single sinusoidal shear. A shear along x1 couples Fourier modes only along k2
(and vice versa), so each piece has an exact propagator made of n small
matrix exponentials. These exact propagators are used for operator norms and
dissipation times; ``linear_propagate`` also offers the ETD stepper.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from ._workers import parallel_map
from .errors import BracketError
from .model import ModelParams, T1_terms
from .semigroup import apply_semigroup
from .spectral import Grid, SpectralField, l2_norm, lp_norm

ZERO = "zero"
SHEAR = "alternating_shear"
TABLE = "user_table"


@dataclass(frozen=True)
class Segment:
    """One constant-in-time piece: v = amp*sin(2 pi x2 + phase) e1 (axis 0) or amp*sin(2 pi x1 + phase) e2 (axis 1)."""

    start: float
    end: float
    axis: int
    amp: float
    phase: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class FlowSpec:
    """Time-dependent shear flow.

    ``alternating_shear`` uses a horizontal shear for the first half of each
    period and a vertical one for the second, with phases drawn per period
    from ``phase_seed``. ``user_table`` cycles through ``table`` rows of
    (axis, amplitude, phase, duration). ``A`` rescales as A v(x, A t).
    """

    family: str = ZERO
    base_amplitude: float = 1.0
    half_period: float = 0.05
    phase_seed: int = 0
    A: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.family not in (ZERO, SHEAR, TABLE):
            raise ValueError(f"unknown flow family {self.family!r}")
        if self.A < 0:
            raise ValueError(f"A must be >= 0, got {self.A}")
        if self.family == SHEAR and not self.half_period > 0:
            raise ValueError("half_period must be positive")
        if self.family == TABLE:
            if not self.table:
                raise ValueError("user_table flow needs at least one row")
            rows = tuple(tuple(float(x) for x in row) for row in self.table)
            for axis, _, _, dur in rows:
                if axis not in (0.0, 1.0) or not dur > 0:
                    raise ValueError(f"bad table row {(axis, dur)}")
            object.__setattr__(self, "table", rows)

    @property
    def is_zero(self) -> bool:
        return self.family == ZERO or self.A == 0 or (self.family == SHEAR and self.base_amplitude == 0)

    @property
    def period(self) -> float | None:
        """Physical-time period of the rescaled flow."""
        if self.is_zero:
            return None
        if self.family == SHEAR:
            return 2.0 * self.half_period / self.A
        return sum(r[3] for r in self.table) / self.A

    @property
    def linf(self) -> float:
        """sup over space and time of |v_A|."""
        if self.is_zero:
            return 0.0
        if self.family == SHEAR:
            return self.A * abs(self.base_amplitude)
        return self.A * max(abs(r[1]) for r in self.table)

    def phases(self, period_index: int) -> tuple[float, float]:
        rng = np.random.default_rng(np.random.SeedSequence([self.phase_seed, int(period_index)]))
        return tuple(rng.uniform(0.0, 2.0 * np.pi, 2))

    def _pieces(self, k: int) -> list[tuple[float, float, int, float, float]]:
        """Pieces of period k as (start, end, axis, amp, phase) in physical time."""
        P = self.period
        t0 = k * P
        if self.family == SHEAR:
            h = self.half_period / self.A
            a = self.A * self.base_amplitude
            ph1, ph2 = self.phases(k)
            return [(t0, t0 + h, 0, a, ph1), (t0 + h, t0 + P, 1, a, ph2)]
        out, s = [], t0
        for axis, amp, phase, dur in self.table:
            e = s + dur / self.A
            out.append((s, e, int(axis), self.A * amp, phase))
            s = e
        out[-1] = out[-1][:1] + (t0 + P,) + out[-1][2:]
        return out

    def segments(self, s: float, t: float) -> list[Segment]:
        """Constant pieces covering [s, t], clipped to the interval."""
        if t < s:
            raise ValueError("segments need t >= s")
        if self.is_zero or t == s:
            return [Segment(s, t, 0, 0.0, 0.0)] if t > s else []
        P = self.period
        k = int(np.floor(s / P))
        out = []
        while True:
            for a, b, axis, amp, ph in self._pieces(k):
                lo, hi = max(a, s), min(b, t)
                if hi > lo:
                    out.append(Segment(lo, hi, axis, amp, ph))
            if (k + 1) * P >= t:
                break
            k += 1
        return out

    def switch_times(self, s: float, t: float) -> list[float]:
        """Switching instants strictly inside (s, t)."""
        return [seg.end for seg in self.segments(s, t)[:-1]]

    def segment_at(self, t: float) -> Segment:
        if self.is_zero:
            return Segment(t, t, 0, 0.0, 0.0)
        P = self.period
        k = int(np.floor(t / P))
        for a, b, axis, amp, ph in self._pieces(k):
            if a <= t < b:
                return Segment(a, b, axis, amp, ph)
        a, b, axis, amp, ph = self._pieces(k)[-1]
        return Segment(a, b, axis, amp, ph)


def rescale_flow(spec: FlowSpec, A: float) -> FlowSpec:
    """v_A(x, t) = A v(x, A t), relative to the base flow of ``spec``."""
    if not A > 0:
        raise ValueError(f"rescale amplitude must be positive, got {A}")
    return replace(spec, A=spec.A * A)


def segment_velocity(seg: Segment, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = grid.points
    zero = np.zeros((grid.n, grid.n))
    if seg.amp == 0:
        return zero, zero
    if seg.axis == 0:
        return seg.amp * np.sin(2 * np.pi * x2 + seg.phase), zero
    return zero, seg.amp * np.sin(2 * np.pi * x1 + seg.phase)


def sample_velocity(spec: FlowSpec, t: float, grid: Grid) -> tuple[SpectralField, SpectralField]:
    if t < 0:
        raise ValueError("t must be >= 0")
    v1, v2 = segment_velocity(spec.segment_at(t), grid)
    return SpectralField.from_physical(grid, v1), SpectralField.from_physical(grid, v2)


def advection_term(u: SpectralField, seg: Segment, keep: np.ndarray) -> np.ndarray:
    """Packed coefficients of the projected v.grad u for one shear piece.

    The shear has a single Fourier mode, so the grid product is exact away
    from the Nyquist modes, which ``keep`` removes.
    """
    g = u.grid
    n = g.n
    if seg.amp == 0:
        return np.zeros(g.shape, dtype=np.complex128)
    x1, x2 = g.points
    if seg.axis == 0:
        d = 1j * g.scale * g.k1 * u.coeffs
        prof = seg.amp * np.sin(2 * np.pi * x2 + seg.phase)
    else:
        d = 1j * g.scale * g.k2 * u.coeffs
        prof = seg.amp * np.sin(2 * np.pi * x1 + seg.phase)
    d = np.where(g.nyquist_mask, d, 0.0)
    deriv = np.fft.irfft2(d * n * n, s=(n, n))
    out = np.fft.rfft2(prof * deriv) / (n * n)
    return np.where(keep, out, 0.0)


# ----------------------------------------------------------------------------
# exact piecewise propagators on the full (complex) spectrum


def _full(f: SpectralField) -> np.ndarray:
    return np.fft.fft2(f.physical()) / f.grid.n**2


def _from_full(grid: Grid, U: np.ndarray) -> SpectralField:
    n = grid.n
    return SpectralField.from_physical(grid, np.fft.ifft2(U * n * n).real)


@lru_cache(maxsize=64)
def _shear_blocks(n: int, wavenumber_scale: str, amp: float, duration: float) -> np.ndarray:
    """exp(duration * M_c) for every transverse index, phase zero.

    Block j acts on the coupled index in sorted order -n/2+1 .. n/2-1; the
    transverse wavenumber of block j is fftfreq(n)[j].
    """
    g = Grid(n, wavenumber_scale)
    s = g.scale
    freqs = np.fft.fftfreq(n, 1.0 / n)
    ks = np.arange(-n // 2 + 1, n // 2)
    m = len(ks)
    shift = np.eye(m, k=-1) - np.eye(m, k=1)  # (S+ - S-) with (S+ u)(j) = u(j-1)
    mats = np.empty((n, m, m))
    for j, kt in enumerate(freqs):
        c = 0.0 if abs(kt) == n // 2 else amp * s * kt / 2.0
        diag = -((s * kt) ** 2 + (s * ks) ** 2) ** 2
        mats[j] = np.diag(diag) - c * shift
    out = expm(duration * mats)
    out.setflags(write=False)
    return out


def _sorted_index(n: int) -> np.ndarray:
    return np.array([k % n for k in range(-n // 2 + 1, n // 2)])


def apply_segment(grid: Grid, seg: Segment, U: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Exact propagator of one constant piece on full-spectrum coefficients."""
    n = grid.n
    h = seg.duration
    if h == 0:
        return U
    decay = np.exp(-h * _full_bilap(grid))
    if seg.amp == 0:
        return U * decay
    # M(-c) = M(c)^T, so the adjoint reuses the forward blocks
    blocks = _shear_blocks(n, grid.wavenumber_scale, float(seg.amp), float(h))
    if adjoint:
        blocks = blocks.transpose(0, 2, 1)
    idx = _sorted_index(n)
    phase = np.exp(1j * seg.phase * np.arange(-n // 2 + 1, n // 2))
    out = U * decay  # Nyquist lines keep pure diffusion
    V = U if seg.axis == 0 else U.T
    W = out if seg.axis == 0 else out.T
    core = V[:, idx] / phase
    W[:, idx] = np.einsum("jab,jb->ja", blocks, core) * phase
    return out


@lru_cache(maxsize=16)
def _full_bilap_cached(n: int, wavenumber_scale: str) -> np.ndarray:
    s = Grid(n, wavenumber_scale).scale
    k = np.fft.fftfreq(n, 1.0 / n)
    arr = ((s * k[:, None]) ** 2 + (s * k[None, :]) ** 2) ** 2
    arr.setflags(write=False)
    return arr


def _full_bilap(grid: Grid) -> np.ndarray:
    return _full_bilap_cached(grid.n, grid.wavenumber_scale)


def _propagate_exact(spec: FlowSpec, s: float, t: float, U: np.ndarray, grid: Grid, adjoint=False) -> np.ndarray:
    segs = spec.segments(s, t)
    if adjoint:
        segs = segs[::-1]
    for seg in segs:
        U = apply_segment(grid, seg, U, adjoint=adjoint)
    return U


def linear_propagate(spec: FlowSpec, s: float, t: float, f: SpectralField, dt_control=None,
                     method: str = "etd", adjoint: bool = False) -> SpectralField:
    """S_{s,t} f (or its L^2 adjoint) for the linear advective hyper-diffusion equation.

    ``method='etd'`` runs the exponential time stepper with the nonlinearity
    off (``dt_control`` is a StepperConfig or None); ``method='exact'``
    multiplies the exact per-piece propagators.
    """
    if t < s:
        raise ValueError("linear_propagate needs t >= s")
    if method == "exact":
        return _from_full(f.grid, _propagate_exact(spec, s, t, _full(f), f.grid, adjoint))
    if method != "etd":
        raise ValueError(f"unknown method {method!r}")
    from .solvers.etd import StepperConfig, integrate

    cfg = dt_control or StepperConfig(scheme="ETDRK4")
    params = ModelParams(nonlinear=False)
    if adjoint:
        spec = _ReversedFlow(spec, s, t)
        s_run = 0.0
    else:
        s_run = s
    traj = integrate(f, params, spec, cfg, horizon=t - s, t0=s_run, output_times=[], keep_final=True)
    return traj.final


class _ReversedFlow:
    """-v(t - tau) for tau in [0, t - s], with the FlowSpec stepping interface."""

    def __init__(self, spec: FlowSpec, s: float, t: float):
        self.spec, self.s, self.t = spec, s, t
        self.is_zero = spec.is_zero
        self.linf = spec.linf

    def _flip(self, seg: Segment) -> Segment:
        return Segment(self.t - seg.end, self.t - seg.start, seg.axis, -seg.amp, seg.phase)

    def segments(self, a: float, b: float) -> list[Segment]:
        return [self._flip(g) for g in reversed(self.spec.segments(self.t - b, self.t - a))]

    def switch_times(self, a: float, b: float) -> list[float]:
        return [g.end for g in self.segments(a, b)[:-1]]

    def segment_at(self, tau: float) -> Segment:
        return self._flip(self.spec.segment_at(np.nextafter(self.t - tau, -np.inf)))


# ----------------------------------------------------------------------------
# operator norms and dissipation time


@dataclass
class OperatorNorm:
    value: float
    iterations: int
    certified: str


def operator_norm(spec: FlowSpec, s: float, t: float, grid: Grid, tol: float = 1e-6, max_iter: int = 200,
                  seed: int = 0, method: str = "exact", stop_above: float | None = None) -> OperatorNorm:
    """||S_{s,t}|| on mean-zero L^2 by power iteration on S* S.

    The estimate is a lower bound at every iterate; ``certified`` is
    ``converged`` once successive estimates agree to ``tol``. With
    ``stop_above`` the iteration ends as soon as the lower bound exceeds it.
    """
    if not 0 < tol <= 0.1:
        raise ValueError("tol must lie in (0, 0.1]")
    rng = np.random.default_rng(seed)
    x = SpectralField.from_physical(grid, rng.standard_normal((grid.n, grid.n)))
    if method == "exact":
        X = _full(x)
        X[0, 0] = 0.0
        nrm = lambda Z: float(np.sqrt(np.sum(np.abs(Z) ** 2)))
        prev = 0.0
        for it in range(1, max_iter + 1):
            X = X / nrm(X)
            Y = _propagate_exact(spec, s, t, X, grid)
            est = nrm(Y)
            X = _propagate_exact(spec, s, t, Y, grid, adjoint=True)
            X[0, 0] = 0.0
            if abs(est - prev) <= tol * est:
                return OperatorNorm(est, it, "converged")
            if stop_above is not None and est > stop_above:
                return OperatorNorm(est, it, "lower_bound")
            prev = est
        return OperatorNorm(prev, max_iter, "lower_bound")
    prev = 0.0
    for it in range(1, max_iter + 1):
        c = np.array(x.coeffs)
        c[0, 0] = 0.0
        x = x.with_coeffs(c / l2_norm(x.with_coeffs(c)))
        y = linear_propagate(spec, s, t, x, method=method)
        est = l2_norm(y)
        x = linear_propagate(spec, s, t, y, method=method, adjoint=True)
        if abs(est - prev) <= tol * est:
            return OperatorNorm(est, it, "converged")
        if stop_above is not None and est > stop_above:
            return OperatorNorm(est, it, "lower_bound")
        prev = est
    return OperatorNorm(prev, max_iter, "lower_bound")


@dataclass
class DissipationEstimate:
    tau_star: float
    method: str
    norm_at_tau: float
    iterations: int
    certified: str
    bracket: tuple[float, float] = (0.0, 0.0)
    starts: tuple = field(default=())


def zero_flow_tau(grid: Grid) -> float:
    """ln 2 / scale^4: the slowest mean-zero mode halves at this time."""
    return float(np.log(2.0) / grid.scale**4)


def dissipation_time(spec: FlowSpec, grid: Grid, tol: float = 1e-3, s_samples: int = 8,
                     norm_tol: float = 1e-6, max_iter: int = 200, method: str = "power_iteration") -> DissipationEstimate:
    """Smallest t with sup_s ||S_{s,s+t}||_{L^2_0} <= 1/2, by bisection in log t.

    For time-periodic flows the sup runs over ``s_samples`` equispaced starts
    in one period. Since ||S_{s,s+t}|| <= exp(-t scale^4) for every
    divergence-free v, the zero-flow value brackets from above.
    """
    if s_samples < 1:
        raise ValueError("s_samples must be >= 1")
    P = spec.period
    starts = (0.0,) if P is None else tuple(j * P / s_samples for j in range(s_samples))
    iters = [0]

    def sup_norm(t):
        if method == "random_sup":
            def probe(s):
                rng = np.random.default_rng(7)
                best = 0.0
                for _ in range(8):
                    f = SpectralField.from_physical(grid, rng.standard_normal((grid.n, grid.n)))
                    c = np.array(f.coeffs)
                    c[0, 0] = 0
                    f = f.with_coeffs(c)
                    best = max(best, l2_norm(linear_propagate(spec, s, s + t, f, method="exact")) / l2_norm(f))
                return OperatorNorm(best, 8, "lower_bound")
        else:
            def probe(s):
                return operator_norm(spec, s, s + t, grid, tol=norm_tol, max_iter=max_iter, stop_above=0.5)
        res = parallel_map(probe, starts)
        iters[0] += sum(r.iterations for r in res)
        return max(r.value for r in res)

    hi = zero_flow_tau(grid)
    g_hi = sup_norm(hi)
    expand = 0
    while g_hi > 0.5:
        expand += 1
        if expand > 8:
            raise BracketError("norm never fell below 1/2", (zero_flow_tau(grid), hi))
        hi *= 2.0
        g_hi = sup_norm(hi)
    lo = hi / 2.0
    shrink = 0
    while sup_norm(lo) <= 0.5:
        shrink += 1
        hi, lo = lo, lo / 2.0
        if shrink > 60:
            raise BracketError("norm stays below 1/2 down to tiny t", (lo, hi))
    g_hi = sup_norm(hi)
    while hi / lo - 1.0 > tol:
        mid = np.sqrt(lo * hi)
        gm = sup_norm(mid)
        if gm <= 0.5:
            hi, g_hi = mid, gm
        else:
            lo = mid
    certified = "upper_bound" if method == "power_iteration" else "lower_bound"
    return DissipationEstimate(hi, method, g_hi, iters[0], certified, (lo, hi), starts)


# ----------------------------------------------------------------------------
# flow condition and coupling gap


@dataclass
class FlowCondition:
    T1: float
    terms: tuple[float, float, float]
    lhs: float
    satisfied: bool
    A_p: float
    C_T1: float


def flow_condition(spec: FlowSpec, u0_l2: float, params: ModelParams, tau_star: float) -> FlowCondition:
    terms = T1_terms(u0_l2, params)
    lhs = spec.linf * tau_star**1.25 + tau_star**0.75
    T1v = min(terms)
    return FlowCondition(T1v, terms, lhs, lhs <= T1v, params.A_p, params.C_T1)


@dataclass
class CouplingGap:
    t: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray
    slope: float

    @property
    def constant(self) -> float:
        return float(self.normalized.max())


def linear_coupling_gap(spec: FlowSpec, f: SpectralField, t_grid: Sequence[float], method: str = "exact") -> CouplingGap:
    """||e^{-tL} f - S_{0,t} f||_2 / (t^{1/4} ||v||_inf ||f||_1) on a time grid."""
    if l2_norm(f) == 0:
        raise ValueError("f must be nonzero")
    t = np.asarray(sorted(t_grid), dtype=float)
    f1 = lp_norm(f, 1)
    raw, norm = [], []
    for ti in t:
        theta = apply_semigroup(ti, f)
        phi = linear_propagate(spec, 0.0, ti, f, method=method)
        gap = l2_norm(theta - phi)
        raw.append(gap)
        norm.append(gap / (ti**0.25 * spec.linf * f1) if spec.linf > 0 else 0.0)
    raw, norm = np.array(raw), np.array(norm)
    pos = norm > 0
    slope = float(np.polyfit(np.log(t[pos]), np.log(norm[pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    return CouplingGap(t, raw, norm, slope)

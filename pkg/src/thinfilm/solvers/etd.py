"""
Exponential time differencing for u_t = -Delta^2 u - N(u) - v.grad u.

The hyper-diffusion is integrated exactly by its Fourier multiplier; the
nonlinearity and advection are the explicit part. Steps land exactly on
output times and on flow switching times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import StiffnessFailure
from ..flows import FlowSpec, advection_term
from ..model import ModelParams, PAD_FACTOR, _padded_gradient, nonlinear_term
from ..spectral import Grid, SpectralField, grad_multipliers, l2_norm, padded_size


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "ETDRK4"
    dt_init: float = 1e-6
    dt_min: float = 1e-12
    dt_max: float = 1e-3
    cfl_safety: float = 400.0
    cfl_advect: float = 1.0
    blowup_threshold: float = 1e6
    rho: float | None = None
    adaptive: bool = True
    decay_floor: float | None = None

    def __post_init__(self):
        if self.scheme not in ("ETDRK2", "ETDRK4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")
        if not self.blowup_threshold > 1:
            raise ValueError("blowup_threshold must exceed 1")
        if not self.dt_init > 0 or not self.dt_max > 0:
            raise ValueError("time steps must be positive")


COLUMNS = ("t", "l2", "h2dot", "gradLp_p", "gradLinf", "energy", "mean")


@dataclass
class Trajectory:
    grid: Grid
    params: ModelParams
    rows: list[tuple[float, ...]] = field(default_factory=list)
    checkpoints: dict[float, SpectralField] = field(default_factory=dict)
    final: SpectralField | None = None
    detected: bool = False
    reason: str = "horizon"
    steps: int = 0

    def column(self, name: str) -> np.ndarray:
        i = COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def l2(self) -> np.ndarray:
        return self.column("l2")

    def __len__(self):
        return len(self.rows)


def diagnostics(t: float, u: SpectralField, params: ModelParams) -> tuple[float, ...]:
    """One trajectory row; gradient quantities use the padded quadrature of N(u)."""
    g = u.grid
    lap = l2_norm(u.with_coeffs(-g.kmag2 * u.coeffs))
    m = padded_size(g.n, PAD_FACTOR)
    g1, g2 = _padded_gradient(u, m)
    mag = np.hypot(g1, g2)
    lp = float(np.mean(mag**params.p))
    if params.rho > 0:
        rho, p = params.rho, params.p
        en = 0.5 * lap**2 - float(np.mean((mag * mag + rho) ** (p / 2) - rho ** (p / 2))) / p
    else:
        en = 0.5 * lap**2 - lp / params.p
    return (float(t), l2_norm(u), lap, lp, float(mag.max()), en, u.mean)


# ----------------------------------------------------------------------------
# phi functions


def phi_functions(z: np.ndarray, count: int = 3) -> list[np.ndarray]:
    """phi_1..phi_count of real z <= 0; Taylor series near 0 avoids cancellation."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    zb = np.where(small, 1.0, z)
    zs = z[small]
    ez = np.exp(z)
    out = []
    partial = np.ones_like(z)  # truncated exponential 1 + z + ... + z^{k-1}/(k-1)!
    for k in range(1, count + 1):
        res = (ez - partial) / zb**k
        series = np.zeros_like(zs)
        for j in range(20, -1, -1):
            series = series * zs + 1.0 / math.factorial(j + k)
        res[small] = series
        out.append(res)
        partial = partial + z**k / math.factorial(k)
    return out


@dataclass
class _Coefficients:
    dt: float
    E: np.ndarray
    E2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p1h: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def _coefficients(L: np.ndarray, dt: float) -> _Coefficients:
    z = dt * L
    p1, p2, p3 = phi_functions(z)
    (p1h,) = phi_functions(z / 2.0, 1)
    return _Coefficients(dt, np.exp(z), np.exp(z / 2.0), p1, p2, p1h,
                         p1 - 3 * p2 + 4 * p3, p2 - 2 * p3, -p2 + 4 * p3)


# ----------------------------------------------------------------------------
# stepping


class _Rhs:
    def __init__(self, grid: Grid, params: ModelParams, flow):
        self.grid = grid
        self.params = params
        self.flow = flow
        self.keep = grid.two_thirds_mask if params.nonlinear else grid.nyquist_mask
        self.evals = 0

    def __call__(self, c: np.ndarray, seg) -> np.ndarray:
        self.evals += 1
        u = SpectralField(self.grid, c)
        out = np.zeros(self.grid.shape, dtype=np.complex128)
        if self.params.nonlinear:
            out -= nonlinear_term(u, self.params).coeffs
        if seg is not None and seg.amp != 0:
            out -= advection_term(u, seg, self.keep)
        out[0, 0] = 0.0
        return out


def advective_wavenumber(grid: Grid, speed: float) -> float:
    """Largest wavenumber where advection outpaces hyper-diffusion (|k|^3 = speed), capped by the 2/3 band.

    Modes above it are damped exactly by the linear factor, so the explicit
    advection only has to be resolved below it.
    """
    return min(grid.scale * grid.n / 3.0, max(grid.scale, speed ** (1.0 / 3.0)))


def _grad_linf(c: np.ndarray, grid: Grid) -> float:
    m1, m2 = grad_multipliers(grid)
    n = grid.n
    g1 = np.fft.irfft2(m1 * c * n * n, s=(n, n))
    g2 = np.fft.irfft2(m2 * c * n * n, s=(n, n))
    return float(np.sqrt((g1 * g1 + g2 * g2).max()))


def _step(rhs: _Rhs, c: np.ndarray, co: _Coefficients, scheme: str, seg) -> np.ndarray:
    h = co.dt
    Nu = rhs(c, seg)
    if scheme == "ETDRK2":
        a = co.E * c + h * co.p1 * Nu
        Na = rhs(a, seg)
        return a + h * co.p2 * (Na - Nu)
    hh = h / 2.0
    a = co.E2 * c + hh * co.p1h * Nu
    Na = rhs(a, seg)
    b = co.E2 * c + hh * co.p1h * Na
    Nb = rhs(b, seg)
    cc = co.E2 * a + hh * co.p1h * (2.0 * Nb - Nu)
    Nc = rhs(cc, seg)
    return co.E * c + h * (co.f1 * Nu + 2.0 * co.f2 * (Na + Nb) + co.f3 * Nc)


def integrate(u0: SpectralField, params: ModelParams, flow: FlowSpec | None = None,
              cfg: StepperConfig | None = None, horizon: float = 1e-2, *, t0: float = 0.0,
              output_interval: float | None = None, output_times: Sequence[float] | None = None,
              checkpoint_stride: int | None = None, keep_final: bool = True,
              record_every_step: bool = False) -> Trajectory:
    """Integrate from t0 to t0 + horizon.

    Diagnostics are recorded at t0, at every output time (absolute times, or
    multiples of ``output_interval`` after t0), at the end, and after every
    step when ``record_every_step`` is set. Every
    ``checkpoint_stride``-th recorded row also stores the field. Crossing
    ``blowup_threshold * ||u0||_2`` stops the run with ``detected`` set.
    """
    cfg = cfg or StepperConfig()
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if cfg.rho is not None:
        params = replace(params, rho=cfg.rho)
    grid = u0.grid
    flow = flow if flow is not None and not flow.is_zero else None
    t_end = t0 + horizon

    if output_times is not None:
        outs = sorted(float(t) for t in output_times if t0 < t < t_end)
    elif output_interval is not None:
        k = int(np.floor(horizon / output_interval + 1e-9))
        outs = [t0 + i * output_interval for i in range(1, k + 1) if t0 + i * output_interval < t_end * (1 - 1e-14)]
    else:
        outs = []
    outs.append(t_end)
    breaks = sorted(set(outs) | set(flow.switch_times(t0, t_end) if flow else []))

    traj = Trajectory(grid, params)
    l2_0 = l2_norm(u0)
    limit = cfg.blowup_threshold * max(l2_0, np.finfo(float).tiny)
    floor = cfg.decay_floor * l2_0 if cfg.decay_floor else 0.0
    L = -(grid.kmag2**2)
    rhs = _Rhs(grid, params, flow)
    c = np.array(u0.coeffs)
    t = t0
    out_set = set(outs)
    recorded = 0

    def record(tt, cc):
        nonlocal recorded
        if traj.rows and traj.rows[-1][0] == tt:
            return
        u = SpectralField(grid, cc)
        traj.rows.append(diagnostics(tt, u, params))
        if checkpoint_stride and recorded % checkpoint_stride == 0:
            traj.checkpoints[float(tt)] = u
        recorded += 1

    record(t, c)
    co = None
    dt = cfg.dt_init
    bi = 0
    while bi < len(breaks):
        target = breaks[bi]
        if cfg.adaptive:
            gl = _grad_linf(c, grid) if params.nonlinear else 0.0
            dt = min(cfg.dt_max, cfg.cfl_safety / (1.0 + gl * grid.scale * grid.n))
            if flow is not None:
                dt = min(dt, cfg.cfl_advect / (flow.linf * advective_wavenumber(grid, flow.linf)))
        else:
            dt = cfg.dt_init
        if dt < cfg.dt_min:
            traj.reason = "dt_min"
            traj.final = SpectralField(grid, c)
            record(t, c)
            raise StiffnessFailure(f"time step {dt:.3g} below dt_min at t={t:.6g}", traj)
        h = target - t
        if h > dt * (1 + 1e-9):
            h = dt
            # avoid a sliver step before the break
            if target - (t + h) < 0.05 * dt:
                h = 0.5 * (target - t)
        if co is None or co.dt != h:
            co = _coefficients(L, h)
        seg = flow.segment_at(t + 0.5 * h) if flow else None
        c = _step(rhs, c, co, cfg.scheme, seg)
        traj.steps += 1
        t = target if abs(target - (t + h)) <= 1e-13 * abs(target) else t + h
        if not np.all(np.isfinite(c)):
            traj.reason = "nonfinite"
            traj.final = None
            raise StiffnessFailure(f"non-finite state at t={t:.6g}", traj)
        if t == target:
            bi += 1
            if target in out_set:
                record(t, c)
        if record_every_step:
            record(t, c)
        if params.nonlinear or floor:
            l2 = l2_norm(SpectralField(grid, c))
            if params.nonlinear and l2 > limit:
                record(t, c)
                traj.detected = True
                traj.reason = "threshold"
                break
            if l2 < floor:
                record(t, c)
                traj.reason = "decayed"
                break
    traj.final = SpectralField(grid, c) if keep_final else None
    if traj.final is not None and checkpoint_stride:
        traj.checkpoints.setdefault(float(traj.rows[-1][0]), traj.final)
    return traj

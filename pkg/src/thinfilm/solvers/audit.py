"""Post-processing of trajectories: energy identity, blow-up fits, small-data gradient bound."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import curve_fit

from ..errors import NoBlowupSignal, NoCheckpoint, SmallDataViolation, StiffnessFailure, UnderResolvedAudit
from ..model import ModelParams, blowup_bounds_from, blowup_rate_exponent
from ..spectral import SpectralField, l2_norm, norm
from .etd import StepperConfig, Trajectory, integrate


def sobolev_norm_of_time_slice(traj: Trajectory, t: float, which: str = "L2", **kw) -> float:
    """Norm of the checkpoint stored at a recorded time t."""
    for tc, u in traj.checkpoints.items():
        if tc == t or abs(tc - t) <= 1e-14 * max(abs(t), 1e-300):
            return norm(u, which, **kw)
    raise NoCheckpoint(f"no checkpoint at t={t!r}")


# ----------------------------------------------------------------------------
# energy identity


@dataclass
class EnergyAudit:
    t: np.ndarray
    residual: np.ndarray
    under_resolved: bool
    richardson_gap: float

    def at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.residual))


def energy_identity_residual(traj: Trajectory, params: ModelParams | None = None,
                             resolved_tol: float = 1e-3) -> EnergyAudit:
    """Relative residual of ||u||^2 + 2 int ||Delta u||^2 = ||u0||^2 + 2 int ||grad u||_p^p.

    Integrals are cumulative trapezoid sums over the recorded times. The
    audit is flagged under-resolved when halving the sampling changes the
    final residual by more than ``resolved_tol``.
    """
    params = params or traj.params
    if params.rho > 0:
        raise ValueError("the energy identity audit applies to rho = 0")
    t = traj.t
    l2 = traj.l2
    lap2 = traj.column("h2dot") ** 2
    lp = traj.column("gradLp_p") if params.nonlinear else np.zeros_like(t)
    scale = max(l2[0] ** 2, np.finfo(float).tiny)
    f = lap2 - lp
    res = (l2**2 + 2.0 * cumulative_trapezoid(f, t, initial=0.0) - l2[0] ** 2) / scale
    gap = 0.0
    if len(t) >= 5:
        idx = list(range(0, len(t), 2))
        if idx[-1] != len(t) - 1:
            idx.append(len(t) - 1)
        coarse = (l2[-1] ** 2 + 2.0 * trapezoid(f[idx], t[idx]) - l2[0] ** 2) / scale
        gap = abs(coarse - res[-1])
    under = gap > resolved_tol
    if under:
        warnings.warn(f"energy audit under-resolved (sampling gap {gap:.3g})", UnderResolvedAudit)
    return EnergyAudit(t, res, under, gap)


# ----------------------------------------------------------------------------
# blow-up


@dataclass
class BlowupReport:
    detected: bool
    t_stop: float
    fitted_T_max: float
    fitted_rate_gamma: float
    scaled_liminf_proxy: float
    fit_constant: float
    fit_window: tuple[float, float]
    T_max_upper: float | None
    lower_curve_min_ratio: float | None
    rate_exponent: float


def _power_law(t, logc, gamma, logdt, t_stop):
    return logc - gamma * np.log(t_stop + np.exp(logdt) - t)


def blowup_detect(traj: Trajectory, params: ModelParams | None = None, decades: float = 1.0) -> BlowupReport:
    """Fit ||u(t)||_2 ~ c (T_max - t)^{-gamma} on the last ``decades`` of growth."""
    params = params or traj.params
    t, l2 = traj.t, traj.l2
    if len(t) < 4 or not np.all(np.isfinite(l2)) or l2[-1] <= 10.0 * l2[0] or l2[-1] < l2.max() * 0.999:
        raise NoBlowupSignal("trajectory shows no terminal growth phase")
    t_stop = float(t[-1])
    lo = l2[-1] / 10.0**decades
    start = int(np.flatnonzero(l2 < lo)[-1]) + 1 if np.any(l2 < lo) else 0
    start = min(start, len(t) - 4)
    tw, yw = t[start:], np.log(l2[start:])

    # initial guess from d(log u)/dt ~ gamma / (T - t)
    rate = np.gradient(yw, tw)
    good = rate > 0
    if good.sum() >= 2:
        sl, ic = np.polyfit(tw[good], 1.0 / rate[good], 1)
        g0 = max(-1.0 / sl, 1e-3) if sl < 0 else 1.0
        T0 = ic * g0
    else:
        g0, T0 = 1.0, t_stop
    dt0 = max(T0 - t_stop, (tw[-1] - tw[0]) * 1e-3, 1e-300)
    c0 = yw[-1] + g0 * np.log(dt0)

    fun = lambda tt, logc, gamma, logdt: _power_law(tt, logc, gamma, logdt, t_stop)
    try:
        (logc, gamma, logdt), _ = curve_fit(fun, tw, yw, p0=(c0, g0, np.log(dt0)), maxfev=20000)
    except RuntimeError as exc:
        raise NoBlowupSignal(f"power-law fit failed: {exc}") from exc
    T_max = t_stop + float(np.exp(logdt))
    e = blowup_rate_exponent(params)
    proxy = float(np.min((T_max - tw) ** e * np.exp(yw)))

    E0 = float(traj.column("energy")[0])
    bounds = blowup_bounds_from(l2[0], E0, params.p)
    ratio = None
    if bounds.lower_curve is not None:
        lc = bounds.lower_curve(t)
        ok = np.isfinite(lc)
        ratio = float(np.min(l2[ok] / lc[ok])) if ok.any() else None
    return BlowupReport(traj.detected or traj.reason == "dt_min", t_stop, T_max, float(gamma), proxy,
                        float(np.exp(logc)), (float(tw[0]), float(tw[-1])), bounds.T_max_upper, ratio, e)


# ----------------------------------------------------------------------------
# small data


@dataclass(frozen=True)
class SmallDataConfig:
    delta_star: float = 1e-2
    varrho: float = 1e-3

    def __post_init__(self):
        if not self.delta_star > 0 or not self.varrho > 0:
            raise ValueError("delta_star and varrho must be positive")


@dataclass
class SmallDataTable:
    t: np.ndarray
    values: np.ndarray

    @property
    def constant(self) -> float:
        return float(self.values.max())


def small_data_gradient_check(u0: SpectralField, params: ModelParams, cfg: SmallDataConfig,
                              stepper: StepperConfig | None = None, points: int = 24,
                              t_min_fraction: float = 1e-4) -> SmallDataTable:
    """t^{1/2} ||grad u(t)||_inf / (delta* varrho^{-(3-p)/(2(p-2))}) on a log grid of (0, 2 varrho]."""
    e = blowup_rate_exponent(params)
    if cfg.varrho**e * l2_norm(u0) > cfg.delta_star:
        raise SmallDataViolation(
            f"varrho^{e:.3g} ||u0||_2 = {cfg.varrho**e * l2_norm(u0):.3g} exceeds delta* = {cfg.delta_star:.3g}")
    horizon = 2.0 * cfg.varrho
    times = np.geomspace(horizon * t_min_fraction, horizon, points)
    if l2_norm(u0) == 0:
        return SmallDataTable(times, np.zeros(points))
    stepper = stepper or StepperConfig()
    try:
        traj = integrate(u0, params, None, stepper, horizon, output_times=times[:-1])
    except StiffnessFailure as exc:
        traj = exc.trajectory
    t = traj.t[1:]
    g = traj.column("gradLinf")[1:]
    scale = cfg.delta_star * cfg.varrho ** (-e)
    return SmallDataTable(t, np.sqrt(t) * g / scale)

"""
Fixed-point iteration on the mild (Duhamel) formulation

    u(t) = e^{-tL} u0 - int_0^t e^{-(t-s)L} [N(u(s)) + v.grad u(s)] ds.

The unknown is w = u - e^{-tL} u0 at Chebyshev points of [0, T]; u(s) at any
quadrature node is e^{-sL} u0 (exact) plus the barycentric interpolant of w.
The integrals use composite Gauss-Legendre on panels graded geometrically
toward both s = t (kernel layer) and s = 0 (initial layer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import HorizonTooLong, NoContraction
from ..flows import FlowSpec, advection_term
from ..model import ModelParams, nonlinear_term
from ..spectral import SpectralField, grad_multipliers, l2_norm


@dataclass(frozen=True)
class PicardConfig:
    T: float = 1e-3
    nodes_per_panel: int = 8
    grading_exponent: float = 2.0
    tol: float = 1e-12
    max_sweeps: int = 40
    radius_R: float | None = None
    C0: float = 1.0
    chebyshev_nodes: int = 16

    def __post_init__(self):
        if not 0 < self.T <= 1:
            raise ValueError("T must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.grading_exponent <= 1:
            raise ValueError("grading_exponent must exceed 1")


def horizon_bound(u0_l2: float, p: float, v_l2_sup: float = 0.0, C0: float = 1.0,
                  R: float | None = None) -> float:
    """min{1, (4 C0 R^{p-2} + 1)^{-2/(3-p)}, (16 C0^2 ||v||^2 + 1)^{-1}}, R = 2 C0 ||u0||_2 by default."""
    R = 2.0 * C0 * u0_l2 if R is None else R
    return min(1.0, (4.0 * C0 * R ** (p - 2.0) + 1.0) ** (-2.0 / (3.0 - p)),
               1.0 / (16.0 * C0**2 * v_l2_sup**2 + 1.0))


def chebyshev_points(T: float, M: int) -> np.ndarray:
    j = np.arange(M + 1)
    return T * (1.0 - np.cos(np.pi * j / M)) / 2.0


def _bary_weights(M: int) -> np.ndarray:
    w = (-1.0) ** np.arange(M + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _bary_row(t: float, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Interpolation row r with f(t) = r . f(nodes)."""
    d = t - nodes
    hit = np.flatnonzero(d == 0)
    if hit.size:
        r = np.zeros_like(nodes)
        r[hit[0]] = 1.0
        return r
    q = weights / d
    return q / q.sum()


def graded_breaks(t: float, lam_max: float, ratio: float, extra=()) -> np.ndarray:
    """Panel boundaries on [0, t], geometric toward both ends down to width ~ 1/lam_max."""
    if t <= 0:
        return np.array([0.0])
    floor = min(0.5 / lam_max, t / 4.0)
    pts = {0.0, t}
    d = t / 2.0
    while d > floor:
        pts.add(d)
        pts.add(t - d)
        d /= ratio
    pts.add(floor)
    pts.add(t - floor)
    pts.update(x for x in extra if 0 < x < t)
    return np.array(sorted(pts))


@dataclass
class PicardResult:
    u0: SpectralField
    nodes: np.ndarray
    w: list
    sweeps: int
    final_defect: float
    defects: list
    R: float
    T_formula: float
    contraction_ratio: float
    mean: float = 0.0
    _table: np.ndarray | None = field(default=None, repr=False)

    def at(self, t: float) -> SpectralField:
        g = self.u0.grid
        base = np.exp(-t * g.kmag2**2) * self.u0.coeffs
        row = _bary_row(t, self.nodes, _bary_weights(len(self.nodes) - 1))
        c = base + sum(r * wj for r, wj in zip(row, self.w) if r != 0)
        c = np.array(c)
        c[0, 0] += self.mean
        return SpectralField(g, c)


def _s_tilde(c: np.ndarray, t: float, u: SpectralField) -> float:
    g = u.grid
    m1, m2 = grad_multipliers(g)
    f = u.with_coeffs(c)
    grad = np.sqrt(l2_norm(u.with_coeffs(m1 * c)) ** 2 + l2_norm(u.with_coeffs(m2 * c)) ** 2)
    return max(l2_norm(f), t**0.25 * grad)


def picard_solve(u0: SpectralField, params: ModelParams, flow: FlowSpec | None = None,
                 cfg: PicardConfig | None = None) -> PicardResult:
    cfg = cfg or PicardConfig()
    g = u0.grid
    mean = u0.mean
    c0 = np.array(u0.coeffs)
    c0[0, 0] = 0.0
    base = SpectralField(g, c0)
    l2 = l2_norm(base)
    flow = flow if flow is not None and not flow.is_zero else None
    v_l2 = flow.linf / np.sqrt(2.0) if flow else 0.0
    R = cfg.radius_R if cfg.radius_R is not None else 2.0 * cfg.C0 * l2
    T_formula = horizon_bound(l2, params.p, v_l2, cfg.C0, R)
    if cfg.T > T_formula * (1 + 1e-12):
        raise HorizonTooLong(f"T={cfg.T:g} exceeds the contraction horizon {T_formula:.4g}")

    lam = g.kmag2**2
    lam_max = float(lam.max())
    keep = g.two_thirds_mask if params.nonlinear else g.nyquist_mask
    M = cfg.chebyshev_nodes
    nodes = chebyshev_points(cfg.T, M)
    bw = _bary_weights(M)
    xg, wg = np.polynomial.legendre.leggauss(cfg.nodes_per_panel)
    switches = flow.switch_times(0.0, cfg.T) if flow else []

    # quadrature layout per target node: (s, weight) pairs, plus interpolation rows
    layout = []
    for tj in nodes:
        brk = graded_breaks(tj, lam_max, cfg.grading_exponent, switches)
        s_list, w_list = [], []
        for a, b in zip(brk[:-1], brk[1:]):
            s_list.append(0.5 * (b - a) * xg + 0.5 * (a + b))
            w_list.append(0.5 * (b - a) * wg)
        s_all = np.concatenate(s_list) if s_list else np.zeros(0)
        w_all = np.concatenate(w_list) if w_list else np.zeros(0)
        rows = np.array([_bary_row(s, nodes, bw) for s in s_all]).reshape(len(s_all), M + 1)
        layout.append((tj, s_all, w_all, rows))

    def forcing(c: np.ndarray, s: float) -> np.ndarray:
        u = SpectralField(g, c)
        out = np.zeros(g.shape, dtype=np.complex128)
        if params.nonlinear:
            out += nonlinear_term(u, params).coeffs
        if flow is not None:
            out += advection_term(u, flow.segment_at(s), keep)
        out[0, 0] = 0.0
        return out

    def sweep(w):
        W = np.stack(w)
        new = []
        for tj, s_all, w_all, rows in layout:
            acc = np.zeros(g.shape, dtype=np.complex128)
            if len(s_all) and (params.nonlinear or flow is not None):
                for s, ws, row in zip(s_all, w_all, rows):
                    cs = np.exp(-s * lam) * c0 + np.tensordot(row, W, axes=1)
                    acc += ws * np.exp(-(tj - s) * lam) * forcing(cs, s)
            new.append(-acc)
        return new

    w = [np.zeros(g.shape, dtype=np.complex128) for _ in nodes]
    defects = []
    for k in range(1, cfg.max_sweeps + 1):
        new = sweep(w)
        d = max(_s_tilde(a - b, t, base) for a, b, t in zip(new, w, nodes))
        w = new
        defects.append(float(d))
        if d <= cfg.tol * max(l2, np.finfo(float).tiny) or d == 0:
            break
        if len(defects) >= 3 and defects[-1] >= defects[-2] >= defects[-3]:
            raise NoContraction(f"defect stagnated at {d:.3g}", _ratio(defects))
    else:
        if defects[-1] > cfg.tol * max(l2, np.finfo(float).tiny):
            raise NoContraction(f"no convergence in {cfg.max_sweeps} sweeps (defect {defects[-1]:.3g})", _ratio(defects))
    return PicardResult(base, nodes, w, len(defects), defects[-1], defects, R, T_formula, _ratio(defects), mean)


def _ratio(defects: list) -> float:
    """Largest successive defect ratio over the contracting phase."""
    d = [x for x in defects if x > 0]
    if len(d) < 2:
        return 0.0
    r = [b / a for a, b in zip(d[:-1], d[1:])]
    tail = r[1:] if len(r) > 1 else r
    return float(max(tail))

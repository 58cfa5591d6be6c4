"""Acceptance criteria 1-9 at their stated tolerances; one verdict line each."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from thinfilm.experiments.config import load_config
from thinfilm.experiments.runners import run_experiment
from thinfilm.flows import SHEAR, FlowSpec, dissipation_time, linear_coupling_gap
from thinfilm.model import ModelParams
from thinfilm.semigroup import apply_semigroup, decay_exponent_fit
from thinfilm.solvers import PicardConfig, StepperConfig, integrate, picard_solve
from thinfilm.spectral import Grid, l2_norm, random_smooth, white_noise

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(name: str, out: Path, **update):
    cfg = load_config(CONFIGS / name).with_overrides(out=str(out))
    if update:
        cfg = cfg.model_copy(update={"experiment": cfg.experiment.model_copy(update=update)})
    return run_experiment(cfg)


def _csvs(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def _failed(rep) -> list[str]:
    return [m.name for m in rep.metrics if m.passed is False]


@pytest.fixture(scope="module")
def blowup_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("blowup_a")
    return out, _run("blowup.toml", out)


def test_semigroup_exactness(accept):
    g = Grid(64)
    f = white_noise(g, 11)
    times = np.linspace(1e-3, 1e-2, 10)
    traj = integrate(f, ModelParams(nonlinear=False), None, StepperConfig(), 1e-2,
                     output_times=times, checkpoint_stride=1)
    errs = []
    for t in times:
        ref = apply_semigroup(t, f)
        errs.append(l2_norm(traj.checkpoints[t] - ref) / l2_norm(ref))
    worst = max(errs)
    assert accept(1, worst <= 1e-10, f"semigroup max rel L2 error {worst:.3e} (<= 1e-10)")


def test_decay_slopes(accept):
    g = Grid(128)
    f = white_noise(g, 3)
    t = np.geomspace(1e-10, 1e-5, 24)
    cases = [("frac", dict(s=1.0), -0.25), ("frac", dict(s=2.0), -0.5),
             ("Linf_from_Lr", dict(r=1, j=0), -0.5), ("Linf_from_Lr", dict(r=2, j=1), -0.5)]
    start = time.perf_counter()
    slopes = [decay_exponent_fit(kind, f, t, **kw).slope for kind, kw, _ in cases]
    elapsed = time.perf_counter() - start
    ok = all(abs(s - want) <= 0.05 for s, (_, _, want) in zip(slopes, cases)) and elapsed < 60
    text = ", ".join(f"{s:.4f}" for s in slopes)
    assert accept(2, ok, f"slopes [{text}] vs [-0.25, -0.5, -0.5, -0.5] +- 0.05, {elapsed:.1f}s")


def test_energy_identity(accept, tmp_path):
    rep = _run("verify.toml", tmp_path, checks=["energy"])
    res = rep.metric("energy.residual").value
    ratio = rep.metric("energy.halving_ratio").value
    ok = rep.error is None and res <= 1e-6 and ratio >= 2
    assert accept(3, ok, f"energy residual {res:.3e} (<= 1e-6), halving ratio {ratio:.2f} (>= 2)")


def test_cross_solver(accept):
    g = Grid(32)
    u0 = random_smooth(g, 3) * 1e-2
    params = ModelParams()
    res = picard_solve(u0, params, cfg=PicardConfig(T=1e-3))
    cfg = StepperConfig(scheme="ETDRK2", dt_init=1e-6, dt_max=1e-6, adaptive=False)
    ref = integrate(u0, params, None, cfg, 1e-3).final
    diff = l2_norm(res.at(1e-3) - ref)
    ok = diff <= 1e-4 and res.contraction_ratio < 1
    assert accept(4, ok, f"Picard vs ETDRK2 L2 difference {diff:.3e} (<= 1e-4), "
                         f"contraction ratio {res.contraction_ratio:.3f} (< 1)")


def test_dissipation_closed_form(accept):
    two_pi = dissipation_time(FlowSpec(), Grid(32)).tau_star
    unit = dissipation_time(FlowSpec(), Grid(32, "unit")).tau_star
    want = math.log(2) / (16 * math.pi**4)
    e1, e2 = abs(two_pi / want - 1), abs(unit / math.log(2) - 1)
    ok = e1 <= 0.01 and e2 <= 0.01
    assert accept(5, ok, f"tau*(0) two_pi {two_pi:.5e} (rel {e1:.1e}), unit {unit:.5f} (rel {e2:.1e}), <= 1%")


def test_coupling_gap(accept):
    g = Grid(64)
    flow = FlowSpec(SHEAR, base_amplitude=1.0, half_period=0.05, phase_seed=3)
    gap = linear_coupling_gap(flow, white_noise(g, 3), np.geomspace(1e-4, 1e-1, 16))
    ok = bool(np.all(np.isfinite(gap.normalized))) and gap.slope <= 0.05
    assert accept(6, ok, f"coupling gap drift slope {gap.slope:.3f} (<= 0.05), "
                         f"max normalized {np.max(gap.normalized):.3e}")


@pytest.mark.slow
def test_blowup_reproduction(accept, blowup_run):
    _, rep = blowup_run
    failed = _failed(rep)
    ok = rep.error is None and not failed
    stop = rep.metric("stop_reason").value
    assert accept(7, ok, f"blow-up run {rep.status}, stop {stop}, failed metrics {failed or 'none'}")


@pytest.mark.slow
def test_suppression(accept, tmp_path):
    rep = _run("suppress.toml", tmp_path)
    failed = _failed(rep)
    ok = rep.error is None and not failed
    taus = [rep.metric(f"A{a}.tau_star").value for a in (0, 10, 50, 250)]
    text = ", ".join(f"{t:.3e}" for t in taus)
    assert accept(8, ok, f"suppression run {rep.status}, tau* [{text}], "
                         f"suppressed A = {rep.metric('suppressed_amplitudes').value}, failed {failed or 'none'}")


@pytest.mark.slow
def test_determinism(accept, blowup_run, tmp_path):
    first_dir, _ = blowup_run
    _run("blowup.toml", tmp_path / "b")
    same = {"blowup": _csvs(first_dir) == _csvs(tmp_path / "b")}
    _run("simulate_linear.toml", tmp_path / "s1")
    _run("simulate_linear.toml", tmp_path / "s2")
    same["simulate_linear"] = _csvs(tmp_path / "s1") == _csvs(tmp_path / "s2")
    nonempty = bool(_csvs(first_dir)) and bool(_csvs(tmp_path / "s1"))
    assert accept(9, all(same.values()) and nonempty, f"byte-identical CSVs on rerun: {same}")

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thinfilm.errors import InsufficientData, InvalidExponent, NegativeTime, SaturatedRegime, SingularAtZero
from thinfilm.semigroup import (
    PropagatorPlan,
    apply_frac_semigroup,
    apply_semigroup,
    decay_exponent_fit,
    frac_continuum_bound,
    frac_operator_norm,
    target_slope,
    usable_times,
)
from thinfilm.spectral import Grid, SpectralField, derivative, l2_norm, white_noise

T_GRID = np.geomspace(1e-10, 1e-5, 24)


def mode(grid, k1, k2=0):
    return SpectralField.from_function(grid, lambda x, y: np.cos(2 * np.pi * (k1 * x + k2 * y)))


def test_plan_table_invariants():
    plan = PropagatorPlan(Grid(32), 1e-4)
    assert plan.table[0, 0] == 1.0
    assert np.all(plan.table <= 1)
    # strictly positive wherever exp(-t K^4) is representable
    live = 1e-4 * plan.grid.kmag2**2 < 700
    assert np.all(plan.table[live] > 0)
    with pytest.raises(ValueError):
        plan.table[0, 0] = 2.0


def test_constant_unchanged():
    g = Grid(16)
    c = SpectralField.from_physical(g, np.full((16, 16), 2.0))
    assert np.array_equal(apply_semigroup(0.3, c).coeffs, c.coeffs)


def test_single_mode_decay():
    g = Grid(16)
    f = mode(g, 1)
    t = 1e-3
    np.testing.assert_allclose(apply_semigroup(t, f).coeffs, np.exp(-16 * np.pi**4 * t) * f.coeffs, atol=1e-16)


def test_unit_scale_single_mode():
    f = mode(Grid(16, "unit"), 1)
    np.testing.assert_allclose(apply_semigroup(0.7, f).coeffs, np.exp(-0.7) * f.coeffs, atol=1e-16)


def test_identity_at_zero():
    f = white_noise(Grid(16), 3)
    assert np.array_equal(apply_semigroup(0.0, f).coeffs, f.coeffs)


@given(st.floats(0, 1e-3), st.floats(0, 1e-3), st.integers(0, 2**31))
def test_semigroup_law(t1, t2, seed):
    f = white_noise(Grid(16), seed)
    a = apply_semigroup(t1, apply_semigroup(t2, f))
    b = apply_semigroup(t1 + t2, f)
    assert np.abs(a.coeffs - b.coeffs).max() <= 1e-12 * np.abs(f.coeffs).max()


def test_negative_time():
    f = white_noise(Grid(16), 0)
    with pytest.raises(NegativeTime):
        apply_semigroup(-1e-9, f)
    with pytest.raises(NegativeTime):
        apply_frac_semigroup(1.0, -1.0, f)


@given(st.floats(0, 1e-2), st.integers(0, 2**31))
def test_contractive_on_mean_zero(t, seed):
    f = white_noise(Grid(16), seed)
    assert l2_norm(apply_semigroup(t, f)) <= np.exp(-t * (2 * np.pi) ** 4) * l2_norm(f) * (1 + 1e-14)


def test_commutes_with_derivatives():
    f = white_noise(Grid(16), 8)
    for op in ("lap", "bilap"):
        a = apply_semigroup(1e-4, derivative(f, op))
        b = derivative(apply_semigroup(1e-4, f), op)
        np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-14, atol=1e-300)


def test_frac_s2_is_minus_laplacian():
    f = white_noise(Grid(32), 1)
    t = 2e-5
    a = apply_frac_semigroup(2.0, t, f)
    b = -derivative(apply_semigroup(t, f), "lap")
    np.testing.assert_allclose(a.coeffs, b.coeffs, rtol=1e-12, atol=1e-15)


def test_frac_errors():
    f = white_noise(Grid(16), 0)
    with pytest.raises(SingularAtZero):
        apply_frac_semigroup(1.0, 0.0, f)
    with pytest.raises(InvalidExponent):
        apply_frac_semigroup(0.0, 1.0, f)


def test_frac_continuum_bound():
    # maximize K^s exp(-t K^4) over real K: K^4 = s / (4 t)
    s, t = 1.0, 1e-3
    K = (s / (4 * t)) ** 0.25
    assert frac_continuum_bound(s, t) == pytest.approx(K**s * np.exp(-t * K**4), rel=1e-14)
    g = Grid(64)
    f = white_noise(g, 2)
    assert frac_operator_norm(f, s, t) <= frac_continuum_bound(s, t)


def test_frac_norm_decreasing_in_t():
    f = white_noise(Grid(64), 4)
    vals = [l2_norm(apply_frac_semigroup(1.0, t, f)) for t in np.geomspace(1e-8, 1e-3, 12)]
    assert np.all(np.isfinite(vals))
    assert np.all(np.diff(vals) < 0)


def test_target_slopes():
    assert target_slope("frac", s=1) == -0.25
    assert target_slope("Linf_from_Lr", r=1, j=0) == -0.5
    assert target_slope("Linf_from_Lr", r=2, j=1) == -0.5
    assert target_slope("L2_from_Lq", q=2 / 1.5) == pytest.approx(-0.125)
    with pytest.raises(ValueError):
        target_slope("heat")


class TestDecayFit:
    @pytest.fixture(scope="class")
    @staticmethod
    def noise():
        return white_noise(Grid(64), 5)

    @pytest.mark.parametrize("s,want", [(1.0, -0.25), (2.0, -0.5)])
    def test_frac_slopes(self, noise, s, want):
        fit = decay_exponent_fit("frac", noise, T_GRID, s=s)
        assert fit.slope == pytest.approx(want, abs=0.02)
        assert fit.saturated

    def test_linf_slope(self, noise):
        fit = decay_exponent_fit("Linf_from_Lr", noise, T_GRID, r=1, j=0)
        assert fit.slope == pytest.approx(-0.5, abs=0.05)

    def test_single_mode_flat(self):
        g = Grid(64)
        c = np.zeros(g.shape, complex)
        c[1, 0] = c[-1, 0] = 0.5  # exact cos(2 pi x1), no round-off in other modes
        fit = decay_exponent_fit("frac", SpectralField(g, c), T_GRID, s=1.0)
        assert fit.slope == pytest.approx(0.0, abs=0.02)

    def test_saturated(self, noise):
        with pytest.raises(SaturatedRegime):
            decay_exponent_fit("frac", noise, np.geomspace(1e-16, 1e-14, 10), s=1.0)

    def test_insufficient(self, noise):
        with pytest.raises(InsufficientData):
            decay_exponent_fit("frac", noise, np.geomspace(1e-8, 1e-6, 5), s=1.0)

    def test_window(self):
        ok = usable_times(Grid(64), [1e-12, 1e-8, 1e-3])
        assert list(ok) == [False, True, False]

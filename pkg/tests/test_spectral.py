"""Transforms, multipliers, dealiasing and norms on the torus."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from thinfilm.errors import GridMismatch, InvalidExponent, NonFiniteField
from thinfilm.spectral import (
    Grid,
    Padded,
    SpectralField,
    bilap_multiplier,
    dealias,
    derivative,
    inner,
    lap_multiplier,
    norm,
    padded_product,
    physical_l2_norm,
    random_smooth,
    transform,
    white_noise,
)

seeds = st.integers(0, 2**32 - 1)


def cos_mode(grid, k1=1, k2=0):
    return SpectralField.from_function(grid, lambda x, y: np.cos(2 * np.pi * (k1 * x + k2 * y)))


class TestGrid:
    @pytest.mark.parametrize("n", [6, 7, 9, 0])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            Grid(n)

    def test_rejects_unknown_scale(self):
        with pytest.raises(ValueError):
            Grid(16, "furlong")

    def test_frequency_set(self):
        g = Grid(8)
        assert sorted(g.k1.ravel()) == [-4, -3, -2, -1, 0, 1, 2, 3]
        assert list(g.k2.ravel()) == [0, 1, 2, 3, 4]


class TestTransform:
    def test_constant(self):
        g = Grid(16)
        f = SpectralField.from_physical(g, np.full((16, 16), 3.5))
        expect = np.zeros(g.shape, complex)
        expect[0, 0] = 3.5
        np.testing.assert_allclose(f.coeffs, expect, atol=1e-14)

    def test_cosine(self):
        g = Grid(16)
        f = cos_mode(g)
        c = np.array(f.coeffs)
        assert c[1, 0] == pytest.approx(0.5)
        assert c[-1, 0] == pytest.approx(0.5)
        c[1, 0] = c[-1, 0] = 0.0
        assert np.abs(c).max() < 1e-15

    @given(seeds)
    def test_round_trip(self, seed):
        g = Grid(16)
        x = np.random.default_rng(seed).standard_normal((16, 16))
        back = transform(transform(x, "forward", g), "backward")
        assert np.abs(back - x).max() <= 1e-12 * np.abs(x).max()

    @given(seeds)
    def test_parseval_against_direct_sum(self, seed):
        g = Grid(16)
        x = np.random.default_rng(seed).standard_normal((16, 16))
        f = SpectralField.from_physical(g, x)
        # full DFT by explicit summation, no FFT involved
        j = np.arange(16)
        E = np.exp(-2j * np.pi * np.outer(j, j) / 16)
        full = E @ x @ E.T / 256
        direct = np.sqrt(np.sum(np.abs(full) ** 2))
        assert abs(norm(f, "L2") - direct) <= 1e-12 * direct
        assert abs(norm(f, "L2") - physical_l2_norm(f)) <= 1e-10 * direct

    def test_non_finite(self):
        x = np.zeros((16, 16))
        x[3, 4] = np.nan
        with pytest.raises(NonFiniteField):
            transform(x, "forward", Grid(16))
        bad = SpectralField.zeros(Grid(16)).with_coeffs(np.full(Grid(16).shape, np.inf + 0j))
        with pytest.raises(NonFiniteField):
            transform(bad, "backward")

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            transform(np.zeros((8, 8)), "forward", Grid(16))
        with pytest.raises(GridMismatch):
            SpectralField.zeros(Grid(16)) + SpectralField.zeros(Grid(32))
        with pytest.raises(GridMismatch):
            transform(SpectralField.zeros(Grid(16)), "backward", Grid(16, "unit"))

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            transform(np.zeros((8, 8)), "sideways")


class TestDerivative:
    def test_laplacian_of_cosine(self):
        g = Grid(32)
        f = cos_mode(g)
        lap = derivative(f, "lap")
        np.testing.assert_allclose(lap.coeffs, -4 * np.pi**2 * f.coeffs, atol=1e-12)

    def test_bilap_single_mode(self):
        g = Grid(32)
        c = np.zeros(g.shape, complex)
        c[1, 1] = 0.5  # cos(2 pi (x1 + x2))
        f = SpectralField(g, c)
        np.testing.assert_allclose(derivative(f, "bilap").coeffs, (2 * np.pi) ** 4 * 4 * c, rtol=1e-14)

    def test_unit_scale(self):
        g = Grid(32, "unit")
        f = cos_mode(g, 2, 0)
        np.testing.assert_allclose(derivative(f, "lap").coeffs, -4 * f.coeffs, atol=1e-13)

    def test_lap_lap_is_bilap_bitwise(self):
        for g in (Grid(16), Grid(64, "unit")):
            lap = lap_multiplier(g)
            assert np.array_equal(lap * lap, bilap_multiplier(g))

    def test_gradient_against_finite_differences(self):
        g = Grid(256)
        f = random_smooth(g, seed=11, kmax=5)
        u = f.physical()
        h = 1.0 / g.n
        fd_x = (np.roll(u, -1, 0) - np.roll(u, 1, 0)) / (2 * h)
        fd_y = (np.roll(u, -1, 1) - np.roll(u, 1, 1)) / (2 * h)
        gx, gy = derivative(f, "grad")
        # second-order stencil error is ~ (k h)^2 / 6, about 2.5e-3 at k = 5
        for spec, fd in ((gx.physical(), fd_x), (gy.physical(), fd_y)):
            assert np.linalg.norm(spec - fd) <= 5e-3 * np.linalg.norm(spec)
        fd4 = (8 * (np.roll(u, -1, 0) - np.roll(u, 1, 0)) - (np.roll(u, -2, 0) - np.roll(u, 2, 0))) / (12 * h)
        assert np.linalg.norm(gx.physical() - fd4) <= 1e-4 * np.linalg.norm(fd4)

    def test_div_of_grad_is_lap(self):
        f = random_smooth(Grid(32), seed=2)
        d = derivative(derivative(f, "grad"), "div")
        np.testing.assert_allclose(d.coeffs, derivative(f, "lap").coeffs, atol=1e-9)

    def test_frac_lap(self):
        g = Grid(32)
        f = random_smooth(g, seed=4) + SpectralField.from_physical(g, np.ones((32, 32)))
        two = derivative(f, "frac_lap", s=2.0)
        np.testing.assert_allclose(two.coeffs, -derivative(f, "lap").coeffs, rtol=1e-12, atol=1e-12)
        assert two.coeffs[0, 0] == 0
        with pytest.raises(InvalidExponent):
            derivative(f, "frac_lap", s=0.0)
        with pytest.raises(InvalidExponent):
            derivative(f, "frac_lap", s=-1.0)
        with pytest.raises(InvalidExponent):
            derivative(f, "frac_lap")

    @given(seeds, st.sampled_from(["lap", "bilap", "grad", "frac_lap"]))
    def test_reality(self, seed, op):
        # a packed spectrum is consistent with a real field iff it survives a real round trip
        g = Grid(16)
        f = white_noise(g, seed)
        out = derivative(f, op, s=1.5)
        for part in out if op == "grad" else (out,):
            again = transform(part.physical(), "forward", g)
            scale = max(1.0, np.abs(part.coeffs).max())
            assert np.abs(again.coeffs - part.coeffs).max() <= 1e-10 * scale


class TestDealias:
    @given(seeds)
    def test_idempotent(self, seed):
        f = white_noise(Grid(24), seed)
        once = dealias(f)
        assert np.array_equal(dealias(once).coeffs, once.coeffs)
        pad = dealias(f, Padded(2.0))
        assert np.array_equal(dealias(pad, Padded(2.0)).coeffs, pad.coeffs)

    def test_in_band_unchanged(self):
        g = Grid(32)
        f = white_noise(g, 1)
        f = f.with_coeffs(np.where(g.two_thirds_mask, f.coeffs, 0.0))
        assert np.array_equal(dealias(f).coeffs, f.coeffs)

    def test_cuts_high_modes(self):
        g = Grid(32)
        f = dealias(white_noise(g, 0))
        out = (np.abs(g.k1) > 32 / 3) | (np.abs(g.k2) > 32 / 3)
        assert np.all(f.coeffs[np.broadcast_to(out, g.shape)] == 0)

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            dealias(SpectralField.zeros(Grid(8)), "half")

    def test_padded_product_is_exact_convolution(self):
        n = 16
        g = Grid(n)
        a = dealias(white_noise(g, 5), "padded")
        b = dealias(white_noise(g, 6), "padded")
        ab = padded_product(a, b)

        def full(f):
            # explicit Hermitian completion of the packed spectrum, Nyquist modes are zero
            F = np.zeros((n, n), complex)
            for i in range(n):
                for j in range(n // 2 + 1):
                    F[i, j] = f.coeffs[i, j]
                    F[(-i) % n, (-j) % n] = np.conj(f.coeffs[i, j])
            return F

        A, B = full(a), full(b)
        freqs = [k if k < n // 2 else k - n for k in range(n)]
        conv = {}
        for i, k1 in enumerate(freqs):
            for j, k2 in enumerate(freqs):
                if A[i, j] == 0:
                    continue
                for ii, l1 in enumerate(freqs):
                    for jj, l2 in enumerate(freqs):
                        key = (k1 + l1, k2 + l2)
                        conv[key] = conv.get(key, 0) + A[i, j] * B[ii, jj]
        for i, k1 in enumerate(freqs):
            for j in range(n // 2):
                want = 0 if k1 == -n // 2 else conv.get((k1, j), 0)
                assert abs(ab.coeffs[i, j] - want) < 1e-13


class TestNorms:
    def test_cosine_values(self):
        g = Grid(32)
        f = cos_mode(g)
        assert norm(f, "L2") == pytest.approx(1 / np.sqrt(2), rel=1e-14)
        assert norm(f, "dotHs", s=1) == pytest.approx(2 * np.pi / np.sqrt(2), rel=1e-14)
        assert norm(f, "Hs", s=1) == pytest.approx(np.sqrt(1 + 4 * np.pi**2) / np.sqrt(2), rel=1e-14)
        assert norm(f, "Linf") == pytest.approx(1.0, rel=1e-14)
        assert norm(f, "W1inf") == pytest.approx(2 * np.pi, rel=1e-3)
        assert norm(f, "Lp", q=np.inf) == pytest.approx(1.0)

    def test_sine_lp_against_quadrature(self):
        p = 2.5
        want, _ = quad(lambda x: abs(np.sin(2 * np.pi * x)) ** p, 0, 1, points=[0.5], epsabs=1e-14, epsrel=1e-14)
        f = SpectralField.from_function(Grid(256), lambda x, y: np.sin(2 * np.pi * x))
        assert abs(norm(f, "Lp", q=p, pad=2) ** p - want) <= 1e-8

    def test_unit_scale_dot_h1(self):
        f = cos_mode(Grid(32, "unit"), 3, 0)
        assert norm(f, "dotHs", s=1) == pytest.approx(3 / np.sqrt(2))

    def test_lp_rejects_small_q(self):
        f = cos_mode(Grid(16))
        with pytest.raises(InvalidExponent):
            norm(f, "Lp", q=0.5)
        with pytest.raises(InvalidExponent):
            norm(f, "Lp")
        with pytest.raises(ValueError):
            norm(f, "BMO")

    @given(seeds)
    def test_inner_matches_physical(self, seed):
        g = Grid(16)
        f, h = white_noise(g, seed), white_noise(g, seed + 1)
        assert inner(f, h) == pytest.approx(np.mean(f.physical() * h.physical()), abs=1e-12)

    def test_white_noise_normalized_and_deterministic(self):
        g = Grid(32)
        a, b = white_noise(g, 9), white_noise(g, 9)
        assert np.array_equal(a.coeffs, b.coeffs)
        assert norm(a, "L2") == pytest.approx(1.0)
        assert a.mean == 0.0

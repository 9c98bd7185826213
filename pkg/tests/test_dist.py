import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import norm

from jkdetect.dist import (GRID_N, NigParams, bessel_k1, convolve, from_gaussian,
                           gaussian_jk_variance, linear_combination_pdf, nig_pdf,
                           nig_sample, quantile, scale_pdf)
from jkdetect.estimator import subset_solution
from jkdetect.geometry import LinearSystem
from conftest import make_spp_system
from oracles import bessel_k1_oracle, bessel_k_quad, nig_cdf_oracle


def ones_system(y):
    y = np.asarray(y, dtype=float)
    return LinearSystem(y=y, G=np.ones((y.size, 1)), w=np.ones(y.size), x0=[0.0])


class TestFromGaussian:
    def test_density_at_zero(self):
        f = from_gaussian(1.0)
        assert f.pdf_at(0.0) == pytest.approx(0.3989, abs=1e-4)

    def test_upper_quantile(self):
        f = from_gaussian(1.0)
        assert quantile(f, 0.975) == pytest.approx(1.9600, abs=1e-3)

    def test_grid_symmetry_exact(self):
        f = from_gaussian(2.5)
        assert np.array_equal(f.density, f.density[::-1])

    def test_unit_integral(self):
        f = from_gaussian(0.7)
        total = np.trapezoid(f.density, dx=f.dx)
        assert abs(total - 1.0) < 1e-6

    def test_support_floor(self):
        with pytest.raises(ValueError):
            from_gaussian(1.0, half_width=5.0)
        with pytest.raises(ValueError):
            from_gaussian(-1.0)


class TestScalePdf:
    def test_identity(self):
        f = from_gaussian(1.0)
        g = scale_pdf(f, 1.0)
        np.testing.assert_array_equal(f.density, g.density)
        assert g.half_width == f.half_width

    def test_reflection_of_symmetric(self):
        f = from_gaussian(1.0)
        g = scale_pdf(f, -1.0)
        np.testing.assert_allclose(g.density, f.density, atol=1e-15)

    def test_variance_scales_quadratically(self):
        f = from_gaussian(1.0)
        g = scale_pdf(f, 2.0)
        assert g.variance() == pytest.approx(4.0, abs=1e-4)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            scale_pdf(from_gaussian(1.0), 0.0)


class TestConvolve:
    def test_gaussian_sum_closed_form(self):
        f = from_gaussian(1.0)
        g = convolve(f, f)
        xs = np.linspace(-8.0, 8.0, 4001)
        err = np.abs(g.cdf_at(xs) - ndtr(xs / np.sqrt(2.0)))
        assert err.max() < 1e-6

    def test_near_delta_identity(self):
        f = from_gaussian(1.0)
        narrow = from_gaussian(1e-4 * f.half_width)
        g = convolve(f, narrow)
        xs = np.linspace(-6.0, 6.0, 2001)
        err = np.abs(g.cdf_at(xs) - f.cdf_at(xs))
        assert err.max() < 1e-4

    def test_commutativity(self):
        f = from_gaussian(1.0)
        g = from_gaussian(2.0)
        a = convolve(f, g)
        b = convolve(g, f)
        assert a.half_width == b.half_width
        np.testing.assert_allclose(a.density, b.density, atol=1e-12)

    def test_direct_path_matches_fft_path(self):
        # below the transform-domain cutoff the direct path runs; accuracy
        # degrades only with the coarser grid, not the method
        f = from_gaussian(1.0, n=2**9)
        g = from_gaussian(1.5, n=2**9)
        out = convolve(f, g, n=2**9)
        xs = np.linspace(-6.0, 6.0, 801)
        expected = ndtr(xs / np.sqrt(1.0 + 1.5**2))
        assert np.max(np.abs(out.cdf_at(xs) - expected)) < 1e-3

    def test_tail_truncation_accounting(self):
        f = from_gaussian(1.0)
        capped = convolve(f, f, max_half_width=4.0)
        uncapped = convolve(f, f)
        outside = 1.0 - (uncapped.cdf_at(4.0) - uncapped.cdf_at(-4.0))
        assert capped.tail_warning
        assert capped.tail_mass == pytest.approx(outside, abs=1e-4)
        total = np.trapezoid(capped.density, dx=capped.dx)
        assert abs(total - 1.0) < 1e-6

    def test_truncated_mass_conservation(self):
        # accounting identity: clipped mass plus kept grid integral equals
        # the input mass to machine precision
        from jkdetect.dist import _standardize, symmetric_grid
        x = symmetric_grid(8.0, 4001)
        dx = x[1] - x[0]
        y = np.exp(-0.5 * (x / 1.7) ** 2)
        y /= np.trapezoid(y, dx=dx)
        cap = float(x[3500])  # grid-aligned cap
        out = _standardize(x, y, dx, max_half_width=cap, n=2001,
                           carried_tail=0.0)
        kept = np.trapezoid(y[np.abs(x) <= cap + 1e-9], dx=dx)
        total = np.trapezoid(y, dx=dx)
        assert out.tail_mass + kept == pytest.approx(total, abs=1e-12)

    def test_no_truncation_no_warning(self):
        out = convolve(from_gaussian(1.0), from_gaussian(1.0))
        assert out.tail_mass == 0.0 and not out.tail_warning


class TestLinearCombination:
    def test_single_term_passthrough(self):
        f = from_gaussian(1.0)
        out = linear_combination_pdf([1.0, 0.0, 0.0], [f, f, f])
        np.testing.assert_allclose(out.density, f.density, atol=1e-12)

    def test_gaussian_variance_formula(self):
        rng = np.random.default_rng(0)
        sigmas = rng.uniform(0.5, 2.0, 5)
        coeffs = rng.uniform(-1.0, 1.0, 5)
        comps = [from_gaussian(s) for s in sigmas]
        out = linear_combination_pdf(coeffs, comps)
        expected = float(np.sum(coeffs**2 * sigmas**2))
        assert out.variance() == pytest.approx(expected, rel=1e-3)

    def test_jackknife_coefficients_unit_gaussians(self):
        out = linear_combination_pdf([-0.5, -0.5, 1.0], [from_gaussian(1.0)] * 3)
        assert out.variance() == pytest.approx(1.5, rel=1e-3)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            linear_combination_pdf([0.0, 0.0], [from_gaussian(1.0)] * 2)

    def test_matches_pairwise_convolution(self):
        f = from_gaussian(1.0)
        g = from_gaussian(1.5)
        combo = linear_combination_pdf([1.0, 1.0], [f, g])
        pair = convolve(f, g)
        xs = np.linspace(-10.0, 10.0, 2001)
        assert np.max(np.abs(combo.cdf_at(xs) - pair.cdf_at(xs))) < 1e-7

    def test_normalization_closure(self):
        rng = np.random.default_rng(1)
        comps = [from_gaussian(s) for s in rng.uniform(0.3, 3.0, 4)]
        out = linear_combination_pdf(rng.uniform(-1, 1, 4), comps)
        assert abs(np.trapezoid(out.density, dx=out.dx) - 1.0) < 1e-6
        assert np.all(out.density >= 0.0)


class TestQuantile:
    def test_median_of_symmetric(self):
        f = from_gaussian(1.0)
        assert abs(quantile(f, 0.5)) <= f.dx

    def test_known_gaussian_quantile(self):
        f = from_gaussian(1.0)
        assert quantile(f, 0.995) == pytest.approx(2.5758, abs=1e-3)

    def test_monotonicity(self):
        f = linear_combination_pdf([0.7, -0.3], [from_gaussian(1.0),
                                                 from_gaussian(2.0)])
        ps = np.linspace(0.01, 0.99, 197)
        qs = [quantile(f, p) for p in ps]
        assert np.all(np.diff(qs) >= 0.0)

    def test_domain_validation(self):
        f = from_gaussian(1.0)
        for p in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                quantile(f, p)

    def test_cdf_roundtrip(self):
        f = from_gaussian(1.0)
        for p in (0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999):
            assert f.cdf_at(quantile(f, p)) == pytest.approx(p, abs=1e-6)


class TestGaussianJkVariance:
    def test_hand_example(self):
        sys = ones_system([1.0, 2.0, 3.0])
        sub = subset_solution(sys, 2)
        assert gaussian_jk_variance(sys, sub, 2, 1.0) == pytest.approx(1.5)

    def test_square_subset_oracle(self):
        rng = np.random.default_rng(2)
        sys = make_spp_system(rng, n=5, weights=np.ones(5))
        k = 1
        sub = subset_solution(sys, k)
        keep = np.arange(5) != k
        g_sub = sys.G[keep]
        cov = np.linalg.inv(g_sub) @ np.diag(1.0 / sys.w[keep]) @ np.linalg.inv(g_sub).T
        expected = float(sys.G[k] @ cov @ sys.G[k]) + 1.0 / sys.w[k]
        got = gaussian_jk_variance(sys, sub, k, np.sqrt(1.0 / sys.w[k]))
        assert got == pytest.approx(expected, rel=1e-9)

    def test_homogeneity(self):
        rng = np.random.default_rng(3)
        sys = make_spp_system(rng, n=7, weights=np.ones(7))
        sub = subset_solution(sys, 0)
        base = gaussian_jk_variance(sys, sub, 0, 1.0)
        c = 2.5
        scaled_sys = LinearSystem(sys.y, sys.G, sys.w / c**2, sys.x0)
        scaled = gaussian_jk_variance(scaled_sys, subset_solution(scaled_sys, 0),
                                      0, c)
        assert scaled == pytest.approx(c**2 * base, rel=1e-9)

    def test_matches_convolved_variance(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            sigmas = rng.uniform(0.5, 2.0, 7)
            sys = make_spp_system(rng, n=7, weights=1.0 / sigmas**2)
            k = int(rng.integers(7))
            sub = subset_solution(sys, k)
            jk_coeff = -(sys.G[k] @ sub.S)
            jk_coeff[k] += 1.0
            combo = linear_combination_pdf(jk_coeff, [from_gaussian(s) for s in sigmas])
            closed = gaussian_jk_variance(sys, sub, k, sigmas[k])
            assert combo.variance() == pytest.approx(closed, rel=1e-3)


class TestBesselK1:
    def test_known_value(self):
        assert bessel_k1(1.0) == pytest.approx(0.6019072302, abs=1e-9)

    def test_small_argument_limit(self):
        x = 1e-6
        assert x * bessel_k1(x) == pytest.approx(1.0, abs=1e-6)

    def test_recurrence_with_quadrature_oracle(self):
        for x in (0.05, 0.5, 1.0, 3.0, 10.0, 30.0):
            k0 = bessel_k_quad(0, x)
            k2 = bessel_k_quad(2, x)
            assert k2 == pytest.approx(k0 + 2.0 / x * bessel_k1(x), rel=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            bessel_k1(0.0)
        with pytest.raises(ValueError):
            bessel_k1(-2.0)

    def test_oracle_agreement_spot(self):
        for x in (1e-3, 0.03, 0.8, 2.0, 7.7, 50.0):
            assert bessel_k1(x) == pytest.approx(bessel_k1_oracle(x), rel=1e-10)


class TestNig:
    def test_pdf_symmetry(self):
        params = NigParams(0.65)
        xs = np.linspace(0.0, 20.0, 101)
        np.testing.assert_allclose(nig_pdf(xs, params), nig_pdf(-xs, params),
                                   rtol=1e-14)

    def test_pdf_integral(self):
        from scipy.integrate import quad
        params = NigParams(0.65)
        total, _ = quad(lambda x: nig_pdf(x, params), -60.0, 60.0, limit=300)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_density_at_zero_vs_series_oracle(self):
        d0 = 0.65
        expected = d0 * np.exp(d0 * d0) * bessel_k1_oracle(d0 * d0) / np.pi
        assert nig_pdf(0.0, NigParams(d0)) == pytest.approx(expected, rel=1e-10)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            NigParams(0.0)

    def test_sampler_determinism(self):
        a = nig_sample(NigParams(0.65), 1000, 7)
        b = nig_sample(NigParams(0.65), 1000, 7)
        np.testing.assert_array_equal(a, b)

    def test_sampler_zero_mean(self):
        s = nig_sample(NigParams(0.65), 1_000_000, 11)
        stderr = s.std() / np.sqrt(s.size)
        assert abs(s.mean()) < 4.0 * stderr

    def test_sampler_ks_small(self):
        s = np.sort(nig_sample(NigParams(0.65), 100_000, 13))
        cdf = nig_cdf_oracle(0.65)(s)
        n = s.size
        ranks = np.arange(1, n + 1)
        ks = max(np.max(ranks / n - cdf), np.max(cdf - (ranks - 1) / n))
        assert ks < 0.006

    def test_count_validation(self):
        with pytest.raises(ValueError):
            nig_sample(NigParams(0.65), 0, 1)


def test_default_grid_size():
    assert from_gaussian(1.0).n == GRID_N == 2**14

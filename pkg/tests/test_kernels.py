import mpmath
import numpy as np
import pytest

from dopplermap.errors import DomainError, KernelCollarSignal
from dopplermap.kernels import Kernel2D, evanescent_kernel, hankel0_h1, q2d
from dopplermap.quadrature import adaptive_quadrature
from dopplermap.verification import oracle_h0, oracle_k0


class TestOracleSelfConsistency:
    """The series/asymptotic oracle must agree with itself and with an
    unrelated arbitrary-precision implementation before it judges anything."""

    def test_series_asymptotic_overlap(self):
        from dopplermap.verification import (
            _asymptotic_h0,
            _hankel_symbols,
            _mp,
            _series_j0_y0,
        )

        mp = _mp()
        symbols = _hankel_symbols(mp, 40)
        for x in np.linspace(25.0, 35.0, 11):
            j0, y0 = _series_j0_y0(mp, float(x))
            series = complex(mp.mpc(j0, y0))
            asym = complex(_asymptotic_h0(mp, float(x), symbols))
            assert abs(series - asym) / abs(series) < 1e-12

    def test_oracle_against_mpmath_builtins(self):
        mpmath.mp.dps = 40
        for x in (1e-4, 0.5, 3.0, 29.0, 31.0, 200.0, 5000.0):
            ref = complex(mpmath.hankel1(0, x))
            assert abs(oracle_h0(x) - ref) / abs(ref) < 1e-13
            ref_k = mpmath.besselk(0, mpmath.mpf(x))
            assert abs(oracle_k0(x) - ref_k) / ref_k < mpmath.mpf(1e-13)


class TestHankel:
    def test_reference_point(self):
        # frozen from the series oracle at x = 1
        val = hankel0_h1(1.0)
        assert val.real == pytest.approx(0.7651976865579666, abs=1e-12)
        assert val.imag == pytest.approx(0.08825696421567697, abs=1e-12)

    def test_against_oracle_on_log_grid(self):
        xs = np.logspace(-6, 4, 200)
        for x in xs:
            ref = oracle_h0(float(x))
            assert abs(hankel0_h1(float(x)) - ref) <= 1e-10 * abs(ref)

    def test_asymptotic_amplitude(self):
        x = 1e3
        assert abs(hankel0_h1(x)) * np.sqrt(np.pi * x / 2) == pytest.approx(1.0, abs=1e-6)

    def test_bessel_zero(self):
        assert abs(hankel0_h1(2.404825557695773).real) < 1e-9

    def test_domain(self):
        with pytest.raises(DomainError):
            hankel0_h1(0.0)
        with pytest.raises(DomainError):
            hankel0_h1(-1.0)

    def test_wronskian_via_derivatives(self):
        # J0 Y0' - J0' Y0 = 2 / (pi x), derivatives from a 5-point stencil
        for x in (0.5, 1.7, 6.0, 20.0, 45.0):
            h = 1e-3
            stencil = np.array([-2, -1, 1, 2]) * h
            weights = np.array([1, -8, 8, -1]) / (12 * h)
            vals = np.array([hankel0_h1(x + s) for s in stencil])
            deriv = np.sum(weights * vals)
            val = hankel0_h1(x)
            wronskian = val.real * deriv.imag - deriv.real * val.imag
            assert wronskian == pytest.approx(2 / (np.pi * x), abs=1e-9)


class TestEvanescent:
    def test_k0_reference(self):
        # -(2i/pi) K0(1); K0(1) frozen from the series oracle
        k0_1 = 0.42102443824070834
        val = evanescent_kernel(1.0, 1.0)
        assert val == pytest.approx(-2j / np.pi * k0_1, abs=1e-12)

    def test_scipy_k0_matches_oracle(self):
        from scipy import special

        for x in np.logspace(-6, 2.5, 60):
            ref = float(oracle_k0(float(x)))
            assert special.k0(x) == pytest.approx(ref, rel=1e-10)

    def test_superexponential_smallness(self):
        val = evanescent_kernel(20.0, 1.0)
        assert abs(val) < np.exp(-20.0)

    def test_monotone_decay(self):
        kappas = np.linspace(0.5, 30.0, 100)
        mags = np.abs(evanescent_kernel(kappas, 1.0))
        assert np.all(np.diff(mags) < 0)

    def test_domain(self):
        with pytest.raises(DomainError):
            evanescent_kernel(-1.0, 1.0)


class TestQ2D:
    kernel = Kernel2D("free_field")

    def test_free_field_value(self):
        k2 = 2 * np.pi * 1000.0 / 343.0
        val = q2d(self.kernel, (0.0, 2.0), (4.0, 2.0), k2**2)
        ref = 0.25j * oracle_h0(4.0 * k2)
        assert abs(val - ref) <= 1e-10 * abs(ref)

    def test_two_branches_differ_by_constant_near_zero(self):
        # both branches grow logarithmically; a two-sided scan shows their
        # difference converging to the constant i/4
        r2 = 1.0
        deltas = np.logspace(-4, -8, 5)
        diffs = [
            q2d(self.kernel, (0.0, 0.0), (r2, 0.0), d)
            - q2d(self.kernel, (0.0, 0.0), (r2, 0.0), -d)
            for d in deltas
        ]
        assert abs(diffs[-1] - 0.25j) < 1e-6
        errors = [abs(d - 0.25j) for d in diffs]
        assert errors[-1] < errors[0]

    def test_half_plane_source_on_plane_doubles(self):
        mirror = Kernel2D("half_plane", z_plane=0.0)
        k2sq = (2 * np.pi * 500.0 / 343.0) ** 2
        val = q2d(mirror, (0.0, 0.0), (3.0, 1.0), k2sq)
        free = q2d(self.kernel, (0.0, 0.0), (3.0, 1.0), k2sq)
        assert val == pytest.approx(2.0 * free, rel=1e-12)

    def test_half_plane_reciprocity(self):
        mirror = Kernel2D("half_plane", z_plane=-1.0)
        k2sq = 3.7
        a = q2d(mirror, (0.0, 2.0), (4.0, 0.5), k2sq)
        b = q2d(mirror, (4.0, 0.5), (0.0, 2.0), k2sq)
        assert a == pytest.approx(b, rel=1e-12)

    def test_evanescent_dominance(self):
        r2 = 1.0
        small = abs(q2d(self.kernel, (0.0, 0.0), (r2, 0.0), -(40.0 / r2) ** 2))
        ref = abs(q2d(self.kernel, (0.0, 0.0), (r2, 0.0), (1.0 / r2) ** 2))
        assert small < 1e-17 * ref

    def test_collar_signal(self):
        with pytest.raises(KernelCollarSignal):
            q2d(self.kernel, (0.0, 0.0), (1.0, 0.0), 1e-30, collar_eps_sq=1e-20)
        with pytest.raises(KernelCollarSignal):
            q2d(self.kernel, (0.0, 0.0), (1.0, 0.0), 0.0)

    def test_coincident_points_rejected(self):
        with pytest.raises(DomainError):
            q2d(self.kernel, (1.0, 2.0), (1.0, 2.0), 4.0)

    def test_vectorized(self):
        k2sq = np.array([4.0, -4.0, 1.0])
        vals = q2d(self.kernel, (0.0, 0.0), (2.0, 0.0), k2sq)
        assert vals.shape == (3,)
        assert vals[1].real == pytest.approx(abs(vals[1]), rel=1e-12)  # decaying term


class TestGreensIdentity:
    def test_wavenumber_integral_reproduces_point_source(self):
        # cross-spectral slices recombine to exp(i k r3) / (4 pi r3)
        k = 6.0
        r2, dx = 4.0, 3.0
        r3 = 5.0
        kernel = Kernel2D("free_field")

        def integrand(kx):
            return q2d(kernel, (0.0, 0.0), (0.0, r2), k**2 - kx**2) * np.exp(1j * kx * dx)

        kx_max = np.sqrt(k**2 + (41.0 / r2) ** 2)
        value, _ = adaptive_quadrature(
            integrand, [-kx_max, -k, k, kx_max], rel_tol=1e-8, initial_width=0.2
        )
        value /= 2.0 * np.pi
        exact = np.exp(1j * k * r3) / (4 * np.pi * r3)
        assert abs(value - exact) / abs(exact) < 1e-2

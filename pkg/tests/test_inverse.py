import numpy as np
import pytest
from sklearn.base import clone

from dopplermap.errors import ConfigurationError, LCurveError
from dopplermap.inverse import (
    TikhonovInverse,
    default_lambda_grid,
    lcurve_corner,
    load_result,
    save_result,
    solve_pipeline,
    tikhonov_solve,
)
from dopplermap.kernels import Kernel2D, q2d
from dopplermap.scenario import (
    Medium,
    MicArray,
    MotionSpec,
    Scenario,
    make_source_grid,
)
from dopplermap.simulate import SignalSpec, add_stabilization_noise, record_array
from dopplermap.spectral import Window, select_bins
from dopplermap.transfer import assemble


def normal_equation_solve(h, p, lam):
    """Independent oracle: solve (H*H + lam I) a = H* p directly."""
    cols = h.shape[1]
    return np.linalg.solve(h.conj().T @ h + lam * np.eye(cols), h.conj().T @ p)


def random_system(rng, rows, cols):
    h = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    p = rng.standard_normal(rows) + 1j * rng.standard_normal(rows)
    return h, p


class TestTikhonovSolve:
    def test_identity_system(self, rng):
        p = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        res = tikhonov_solve(np.eye(6), p, 0.5)
        assert np.allclose(res.a, p / 1.5, rtol=1e-14)

    def test_matches_normal_equations(self, rng):
        for _ in range(20):
            rows = int(rng.integers(4, 40))
            cols = int(rng.integers(rows, 120))
            h, p = random_system(rng, rows, cols)
            sigma_max_sq = np.linalg.norm(h, 2) ** 2
            lam = float(10.0 ** rng.uniform(-2, 0)) * sigma_max_sq
            a = tikhonov_solve(h, p, lam).a
            ref = normal_equation_solve(h, p, lam)
            assert np.linalg.norm(a - ref) <= 1e-9 * np.linalg.norm(ref)

    def test_reference_small_system(self, rng):
        h, p = random_system(rng, 8, 20)
        a = tikhonov_solve(h, p, 1e-3).a
        ref = normal_equation_solve(h, p, 1e-3)
        assert np.linalg.norm(a - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_solution_norm_vanishes_with_heavy_regularization(self, rng):
        h, p = random_system(rng, 8, 20)
        norms = [tikhonov_solve(h, p, lam).solution_norm for lam in (1.0, 1e2, 1e4, 1e6)]
        assert norms == sorted(norms, reverse=True)
        assert norms[-1] < 1e-4 * norms[0]

    def test_lambda_zero_is_pseudo_inverse(self, rng):
        h, p = random_system(rng, 6, 15)
        a = tikhonov_solve(h, p, 0.0).a
        assert np.allclose(a, np.linalg.pinv(h) @ p, rtol=1e-10, atol=1e-12)

    def test_stored_residual_matches_recomputation(self, rng):
        h, p = random_system(rng, 10, 30)
        res = tikhonov_solve(h, p, 0.37)
        recomputed = np.linalg.norm(h @ res.a - p)
        assert abs(recomputed - res.residual_norm) <= 1e-10 * res.residual_norm

    def test_negative_lambda_rejected(self, rng):
        h, p = random_system(rng, 4, 8)
        with pytest.raises(ConfigurationError):
            tikhonov_solve(h, p, -1.0)

    def test_dimension_mismatch_rejected(self, rng):
        h, p = random_system(rng, 4, 8)
        with pytest.raises(ConfigurationError):
            tikhonov_solve(h, p[:-1], 0.1)


class TestLCurve:
    def _sharp_system(self, seed=0):
        rng = np.random.default_rng(seed)
        n = 20
        sigma = np.logspace(0, -8, n)
        h = np.diag(sigma)
        noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        noise *= 0.1 / np.linalg.norm(noise)
        p = h @ np.ones(n) + noise
        grid = np.logspace(np.log10(sigma[-1] ** 2), np.log10(sigma[0] ** 2), 20)
        return h, p, grid

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_corner_matches_discrepancy_principle(self, seed):
        h, p, grid = self._sharp_system(seed)
        lam_star, trace = lcurve_corner(h, p, lambda_grid=grid)
        residuals = np.array([t[1] for t in trace])
        i_dp = int(np.argmin(np.abs(residuals - 0.1)))
        i_star = int(np.argmin(np.abs(grid - lam_star)))
        assert abs(i_star - i_dp) <= 1

    def test_trace_monotonicity(self, rng):
        h, p = random_system(rng, 12, 40)
        _, trace = lcurve_corner(h, p, lambda_grid=default_lambda_grid(np.linalg.svd(h, compute_uv=False)))
        residuals = [t[1] for t in trace]
        norms = [t[2] for t in trace]
        assert all(r2 >= r1 * (1 - 1e-12) for r1, r2 in zip(residuals, residuals[1:]))
        assert all(n2 <= n1 * (1 + 1e-12) for n1, n2 in zip(norms, norms[1:]))

    def test_consistent_square_system_selects_smallest_lambda(self):
        h = np.diag([2.0, 1.0, 0.5])
        a_true = np.array([1.0, -2.0, 0.3])
        p = h @ a_true
        grid = np.logspace(-12, 1, 25)
        lam, _ = lcurve_corner(h, p, lambda_grid=grid)
        assert lam == grid[0]

    def test_degenerate_underdetermined_falls_back_to_minimum(self, rng):
        # well-conditioned wide system fits exactly; no corner exists
        h, p = random_system(rng, 6, 40)
        lam, _ = lcurve_corner(h, p, lambda_grid=np.logspace(-10, 2, 30))
        assert lam == pytest.approx(1e-10)

    def test_cornerless_inconsistent_system_raises(self, rng):
        # tall well-conditioned system with an unreachable component: the
        # residual is stuck and the curve never bends
        h = np.vstack([np.eye(3), np.zeros((3, 3))]).astype(complex)
        p = np.concatenate([np.zeros(3), np.ones(3)]).astype(complex)
        with pytest.raises(LCurveError):
            lcurve_corner(h, p, lambda_grid=np.logspace(-8, 2, 25))

    def test_lambda_floor(self):
        h, p, grid = self._sharp_system()
        lam_free, _ = lcurve_corner(h, p, lambda_grid=grid)
        floor = lam_free * 50.0
        lam_floored, _ = lcurve_corner(h, p, lambda_grid=grid, lambda_floor=floor)
        assert lam_floored >= floor
        with pytest.raises(ConfigurationError):
            lcurve_corner(h, p, lambda_grid=grid, lambda_floor=grid[-1] * 10)

    def test_grid_validation(self, rng):
        h, p = random_system(rng, 6, 12)
        with pytest.raises(ConfigurationError):
            lcurve_corner(h, p, lambda_grid=np.logspace(-3, 0, 5))
        with pytest.raises(ConfigurationError):
            lcurve_corner(h, p, lambda_grid=np.linspace(-1.0, 1.0, 30))


class TestStructuredSystems:
    """Systems built from the infinite-window transfer structure."""

    def test_phase_column_system_spreads_evenly(self, rng):
        # columns differing only by unit-modulus phases: the minimum-norm
        # solution cannot prefer any source position
        n_mics, n_src = 12, 50
        h_col = rng.standard_normal(n_mics) + 1j * rng.standard_normal(n_mics)
        phases = np.exp(-1j * 2.0 * np.pi * rng.uniform(0, 1) * np.arange(n_src))
        h = np.outer(h_col, phases)
        p = h[:, n_src // 2].copy()
        mags = np.abs(tikhonov_solve(h, p, 0.0).a)
        assert (mags.max() - mags.min()) <= 1e-8 * mags.max()

    def test_regular_bin_solution_is_periodic(self):
        # commensurate bin spacing / grid spacing / speed makes amplitudes
        # indistinguishable across a fixed index shift
        c, v = 343.0, 50.0
        f0 = 1000.0
        w0 = 2 * np.pi * f0
        dx = 0.2
        delta_f = 50.0  # 2 pi * 50 * 0.2 / 50 = 2 pi / 5 -> shift of 5
        j = 5
        n_src = 40
        xs = np.arange(n_src) * dx
        rng = np.random.default_rng(3)
        mic_x = rng.uniform(0, 4, 10)
        mic_z = rng.uniform(1.5, 2.5, 10)
        kernel = Kernel2D("free_field")
        rows = []
        for m in (-2, -1, 0, 1, 2):
            om = w0 + 2 * np.pi * delta_f * m
            k2sq = om**2 / c**2 - (om - w0) ** 2 / v**2
            for xr, zr in zip(mic_x, mic_z):
                q = q2d(kernel, (0.0, 2.0), (4.0, zr), k2sq)
                rows.append(q * np.exp(1j * (om - w0) * (xr - xs) / v) / (2 * np.pi * v))
        h = np.array(rows)
        p = h[:, 20].copy()
        a = tikhonov_solve(h, p, 1e-6 * np.linalg.norm(h, 2) ** 2).a
        mags = np.abs(a)
        shifted = np.abs(mags[j:] - mags[:-j])
        assert np.max(shifted) <= 1e-6 * mags.max()


class TestSolvePipeline:
    def _setup(self, noise_seed=None):
        grid = make_source_grid((0, 0, 0), 4.0, 4.0, 0.5, 0.0, cell_centered=False)
        mics = MicArray(
            np.column_stack([
                np.linspace(1.4, 2.6, 6),
                np.full(6, 4.0),
                np.linspace(1.5, 2.5, 6),
            ])
        )
        sc = Scenario(Medium(343.0), grid, mics, MotionSpec(50.0, 2.0))
        window = Window("hanning", 0.25, 10000.0)
        sel = select_bins("random", (920.0, 1120.0), window, 3, 6, seed=4)
        matrix = assemble(sc, window, Kernel2D("free_field"), sel, 1000.0)
        rec = record_array(sc, SignalSpec(1000.0), 10000.0, (-0.6, 0.6))
        rec.metadata["mic_positions"] = mics.positions.tolist()
        if noise_seed is not None:
            rec = add_stabilization_noise(rec, 80.0, seed=noise_seed)
        return sc, window, sel, matrix, rec

    def test_noise_free_reconstruction_consistency(self):
        sc, window, sel, matrix, rec = self._setup()
        result = solve_pipeline(matrix, rec, window, sel)
        from dopplermap.spectral import extract_observations

        p = extract_observations(rec, window, sel)
        residual = np.linalg.norm(matrix.entries @ result.a - p) / np.linalg.norm(p)
        assert residual < 1e-2

    def test_zero_observations_give_zero_solution(self):
        sc, window, sel, matrix, rec = self._setup()
        silent = rec.with_channels(np.zeros_like(rec.channels))
        result = solve_pipeline(matrix, silent, window, sel)
        assert np.all(result.a == 0)
        assert result.residual_norm == 0.0

    def test_deterministic(self):
        sc, window, sel, matrix, rec = self._setup(noise_seed=0)
        a = solve_pipeline(matrix, rec, window, sel)
        b = solve_pipeline(matrix, rec, window, sel)
        assert np.array_equal(a.a, b.a)
        assert a.lam == b.lam

    def test_hash_mismatch_rejected(self):
        sc, window, sel, matrix, rec = self._setup()
        other_sel = select_bins("random", (920.0, 1120.0), window, 3, 6, seed=5)
        with pytest.raises(ConfigurationError):
            solve_pipeline(matrix, rec, window, other_sel)
        other_window = Window("hanning", 0.5, 10000.0)
        other = select_bins("random", (920.0, 1120.0), other_window, 3, 6, seed=4)
        with pytest.raises(ConfigurationError):
            solve_pipeline(matrix, rec, other_window, other)

    def test_result_round_trip(self, tmp_path):
        sc, window, sel, matrix, rec = self._setup(noise_seed=1)
        result = solve_pipeline(matrix, rec, window, sel)
        save_result(tmp_path, result)
        loaded = load_result(tmp_path)
        assert np.array_equal(loaded.a, result.a)
        assert loaded.lam == result.lam
        assert loaded.lcurve_trace == result.lcurve_trace


class TestEstimatorAPI:
    def test_fit_predict_on_linear_system(self, rng):
        h, p = random_system(rng, 10, 25)
        est = TikhonovInverse(lam=1e-2)
        est.fit(h, p)
        assert est.coef_.shape == (25,)
        assert est.lambda_ == 1e-2
        pred = est.predict(h)
        assert np.allclose(pred, h @ est.coef_)

    def test_auto_lambda_populates_trace(self, rng):
        h = np.diag(np.logspace(0, -8, 20)).astype(complex)
        noise = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        p = h @ np.ones(20) + 0.05 * noise / np.linalg.norm(noise)
        est = TikhonovInverse().fit(h, p)
        assert est.lambda_ > 0
        assert len(est.lcurve_trace_) == est.n_grid

    def test_sklearn_params_protocol(self):
        est = TikhonovInverse(lam=0.5, n_grid=30)
        params = est.get_params()
        assert params["lam"] == 0.5 and params["n_grid"] == 30
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_unfitted_predict_rejected(self, rng):
        h, _ = random_system(rng, 4, 8)
        with pytest.raises(ConfigurationError):
            TikhonovInverse().predict(h)

    def test_shape_validation(self, rng):
        h, p = random_system(rng, 4, 8)
        with pytest.raises(ConfigurationError):
            TikhonovInverse().fit(h, p[:-1])

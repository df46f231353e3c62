import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dopplermap.errors import ConfigurationError, DomainError
from dopplermap.mapping import (
    _beamwidth_details,
    beamwidth,
    beamwidth_report,
    find_peak,
    map_plot_data,
    map_to_csv,
    sidelobe_period,
    to_source_map,
)
from dopplermap.scenario import make_source_grid


def gaussian_vector(grid, x0, z0, sigma):
    pts = grid.points
    r_sq = (pts[:, 0] - x0) ** 2 + (pts[:, 2] - z0) ** 2
    return np.exp(-r_sq / (2.0 * sigma**2)).astype(complex)


def refined_extent_oracle(x0, z0, sigma, threshold_db, refine_spacing=0.005):
    """Dense brute-force extent of the -threshold region of a Gaussian blob."""
    xs = np.arange(0.0, 4.0 + refine_spacing, refine_spacing)
    level = 10.0 ** (-threshold_db / 20.0)
    profile = np.exp(-((xs - x0) ** 2) / (2.0 * sigma**2))
    inside = xs[profile >= level]
    return inside[-1] - inside[0]


class TestSourceMap:
    grid = make_source_grid((0, 0, 0), 4.0, 4.0, 0.1, 0.0)

    def test_delta_vector(self):
        a = np.zeros(self.grid.n_points, complex)
        a[self.grid.index_of(13, 7)] = 2.0 - 1.0j
        m = to_source_map(a, self.grid)
        assert m.db[7, 13] == 0.0
        assert np.sum(m.db == 0.0) == 1
        others = np.delete(m.db.ravel(), 7 * self.grid.nx + 13)
        assert np.all(others == m.dynamic_floor_db)

    def test_two_equal_peaks(self):
        a = np.zeros(self.grid.n_points, complex)
        a[5] = 1.0
        a[700] = -1.0j
        m = to_source_map(a, self.grid)
        assert np.sum(m.db == 0.0) == 2

    @given(st.complex_numbers(min_magnitude=1e-6, max_magnitude=1e6,
                              allow_nan=False, allow_infinity=False))
    def test_scale_invariance(self, c):
        grid = make_source_grid((0, 0, 0), 1.0, 1.0, 0.5, 0.0)
        rng = np.random.default_rng(0)
        a = rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points)
        base = to_source_map(a, grid)
        scaled = to_source_map(c * a, grid)
        assert np.allclose(base.db, scaled.db, atol=1e-9)

    def test_zero_vector_rejected(self):
        with pytest.raises(ConfigurationError):
            to_source_map(np.zeros(self.grid.n_points, complex), self.grid)

    def test_wrong_length_rejected(self):
        with pytest.raises(ConfigurationError):
            to_source_map(np.ones(7, complex), self.grid)


class TestFindPeak:
    grid = make_source_grid((0, 0, 0), 4.0, 4.0, 0.1, 0.0)

    def test_delta_location(self):
        a = np.zeros(self.grid.n_points, complex)
        a[self.grid.index_of(20, 31)] = 1.0
        m = to_source_map(a, self.grid)
        x, z = find_peak(m)
        assert x == pytest.approx(self.grid.x_values[20])
        assert z == pytest.approx(self.grid.z_values[31])

    def test_tie_breaks_to_smallest_index(self):
        a = np.zeros(self.grid.n_points, complex)
        a[10] = 1.0
        a[500] = 1.0
        m = to_source_map(a, self.grid)
        ix, iz = self.grid.coords_of(10)
        assert find_peak(m) == (self.grid.x_values[ix], self.grid.z_values[iz])


class TestBeamwidth:
    grid = make_source_grid((0, 0, 0), 4.0, 4.0, 0.05, 0.0)

    def test_gaussian_against_refined_oracle(self):
        sigma = 0.2
        m = to_source_map(gaussian_vector(self.grid, 2.0, 2.0, sigma), self.grid)
        h_bw, v_bw = beamwidth(m, (2.0, 2.0), 3.0)
        oracle = refined_extent_oracle(2.0, 2.0, sigma, 3.0)
        assert abs(h_bw - oracle) <= self.grid.spacing
        assert abs(v_bw - oracle) <= self.grid.spacing
        assert abs(h_bw - v_bw) <= 1e-9  # isotropic blob

    def test_delta_is_subcell(self):
        a = np.zeros(self.grid.n_points, complex)
        a[self.grid.index_of(40, 40)] = 1.0
        m = to_source_map(a, self.grid)
        h_bw, v_bw = beamwidth(m)
        assert 0 < h_bw <= self.grid.spacing
        assert 0 < v_bw <= self.grid.spacing

    def test_center_below_level_rejected(self):
        m = to_source_map(gaussian_vector(self.grid, 2.0, 2.0, 0.2), self.grid)
        with pytest.raises(DomainError):
            beamwidth(m, (0.2, 0.2), 3.0)

    @given(st.tuples(st.floats(1.0, 6.0), st.floats(1.0, 6.0)))
    def test_monotone_in_threshold(self, thresholds):
        lo, hi = sorted(thresholds)
        m = to_source_map(gaussian_vector(self.grid, 2.0, 2.0, 0.3), self.grid)
        bw_lo = beamwidth(m, (2.0, 2.0), lo)
        bw_hi = beamwidth(m, (2.0, 2.0), hi)
        assert bw_hi[0] >= bw_lo[0] - 1e-12
        assert bw_hi[1] >= bw_lo[1] - 1e-12

    def test_component_selection_ignores_distant_lobe(self):
        a = gaussian_vector(self.grid, 1.0, 1.0, 0.15)
        a += 0.95 * gaussian_vector(self.grid, 3.2, 3.2, 0.15)
        m = to_source_map(a, self.grid)
        h_bw, _ = beamwidth(m, (1.0, 1.0), 3.0)
        oracle = refined_extent_oracle(1.0, 1.0, 0.15, 3.0)
        assert abs(h_bw - oracle) <= self.grid.spacing

    def test_boundary_touch_flag_and_clipping(self):
        m = to_source_map(gaussian_vector(self.grid, 0.1, 2.0, 0.4), self.grid)
        h_bw, v_bw, touched = _beamwidth_details(m, (0.1, 2.0), 3.0)
        assert touched
        report = beamwidth_report(m, (0.1, 2.0))
        assert report.boundary_touch
        assert h_bw <= 4.0

    def test_report_fields(self):
        m = to_source_map(gaussian_vector(self.grid, 2.0, 2.0, 0.2), self.grid)
        report = beamwidth_report(m, (2.05, 2.0))
        assert report.displacement == pytest.approx(
            np.hypot(report.peak_xy[0] - 2.05, report.peak_xy[1] - 2.0)
        )
        assert report.threshold_db == 3.0
        d = report.describe()
        assert set(d) == {
            "peak_xy", "true_xy", "displacement", "horizontal_bw",
            "vertical_bw", "threshold_db", "boundary_touch",
        }


class TestSidelobePeriod:
    grid = make_source_grid((0, 0, 0), 8.0, 4.0, 0.2, 0.0)

    def _lobed_map(self, period, decay=0.15):
        xs = self.grid.points[:, 0]
        zs = self.grid.points[:, 2]
        envelope = np.exp(-decay * np.abs(xs - 2.0)) * np.exp(-((zs - 2.0) ** 2) / 0.5)
        lobes = np.cos(np.pi * (xs - 2.0) / period) ** 8
        return to_source_map((envelope * lobes).astype(complex), self.grid)

    def test_detects_metric_period(self):
        m = self._lobed_map(1.0)
        period = sidelobe_period(m, "x")
        assert period == pytest.approx(1.0, abs=0.1)

    def test_detects_fractional_cell_period(self):
        m = self._lobed_map(1.25)
        period = sidelobe_period(m, "x")
        assert period == pytest.approx(1.25, abs=0.15)

    def test_single_lobe_returns_none(self):
        m = to_source_map(gaussian_vector(self.grid, 2.0, 2.0, 0.3), self.grid)
        assert sidelobe_period(m, "x") is None

    def test_weak_sidelobes_below_floor_return_none(self):
        xs = self.grid.points[:, 0]
        zs = self.grid.points[:, 2]
        main = np.exp(-((xs - 2.0) ** 2) / 0.02) * np.exp(-((zs - 2.0) ** 2) / 0.5)
        ripples = 0.05 * np.cos(np.pi * xs) ** 2 * np.exp(-((zs - 2.0) ** 2) / 0.5)
        m = to_source_map((main + ripples).astype(complex), self.grid)
        assert sidelobe_period(m, "x") is None

    def test_axis_validation(self):
        m = self._lobed_map(1.0)
        with pytest.raises(ConfigurationError):
            sidelobe_period(m, "y")


class TestExports:
    grid = make_source_grid((0, 0, 0), 1.0, 1.0, 0.5, 0.0)

    def test_csv_round_trip(self, tmp_path):
        a = np.arange(1, self.grid.n_points + 1).astype(complex)
        m = to_source_map(a, self.grid)
        path = tmp_path / "map.csv"
        map_to_csv(path, m)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "x,z,amplitude,db"
        assert len(rows) == 1 + self.grid.n_points
        x, z, amp, db = (float(v) for v in rows[1].split(","))
        assert (x, z) == (0.25, 0.25)
        assert amp == 1.0

    def test_plot_data_matrix(self, tmp_path):
        a = np.ones(self.grid.n_points, complex)
        m = to_source_map(a, self.grid)
        path = tmp_path / "map.plotdata"
        map_plot_data(path, m)
        lines = path.read_text().strip().splitlines()
        header = lines[0].split()
        assert int(header[0]) == self.grid.nx
        assert len(lines) == 1 + self.grid.nz
        assert len(lines[1].split()) == 1 + self.grid.nx

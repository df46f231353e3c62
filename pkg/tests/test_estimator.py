import numpy as np
import pytest
from sklearn.base import clone

from dopplermap.errors import ConfigurationError
from dopplermap.estimator import MovingSourceLocalizer
from dopplermap.kernels import Kernel2D
from dopplermap.scenario import (
    Medium,
    MicArray,
    MotionSpec,
    Scenario,
    make_source_grid,
)
from dopplermap.simulate import SignalSpec, add_stabilization_noise, record_array
from dopplermap.spectral import Window, extract_observations, select_bins


@pytest.fixture(scope="module")
def problem():
    from dopplermap.scenario import make_spiral_array

    # grid cells must stay well below the wavelength (0.34 m at 1 kHz), or
    # the off-grid true source cannot be represented by any column
    grid = make_source_grid((0, 0, 0), 4.0, 4.0, 0.2, 0.0)
    mics = make_spiral_array(16, 1.0, 4, seed=0).translated((2.0, 4.0, 2.0))
    scenario = Scenario(Medium(343.0), grid, mics, MotionSpec(50.0, 2.0))
    window = Window("hanning", 0.5, 10000.0)
    selection = select_bins("random", (920.0, 1120.0), window, 5, 16, seed=2)
    rec = record_array(scenario, SignalSpec(1000.0), 10000.0, (-0.6, 0.6))
    rec.metadata["mic_positions"] = mics.positions.tolist()
    rec = add_stabilization_noise(rec, 80.0, seed=0)
    return scenario, window, selection, rec


class TestMovingSourceLocalizer:
    def test_fit_localizes(self, problem):
        scenario, window, selection, rec = problem
        est = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0
        )
        est.fit(rec)
        assert est.coef_.shape == (scenario.grid.n_points,)
        assert est.lambda_ > 0
        px, pz = est.peak_
        assert np.hypot(px - 2.0, pz - 2.0) <= 2 * scenario.grid.spacing

    def test_predict_matches_observations(self, problem):
        scenario, window, selection, rec = problem
        est = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0
        ).fit(rec)
        predicted = est.predict(rec)
        measured = extract_observations(rec, window, selection)
        rel = np.linalg.norm(predicted - measured) / np.linalg.norm(measured)
        assert rel < 1e-2
        assert est.score(rec) == pytest.approx(-rel)

    def test_transfer_cached(self, problem, tmp_path):
        scenario, window, selection, rec = problem
        est = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0,
            cache_dir=tmp_path,
        ).fit(rec)
        assert len(list(tmp_path.glob("*.bin"))) == 1
        again = clone(est).fit(rec)
        assert np.array_equal(again.coef_, est.coef_)

    def test_get_params_round_trip(self, problem):
        scenario, window, selection, _ = problem
        est = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0,
            lambda_floor=1e-8,
        )
        params = est.get_params()
        assert params["f0"] == 1000.0
        assert params["lambda_floor"] == 1e-8
        rebuilt = MovingSourceLocalizer(**params)
        assert rebuilt.get_params() == params

    def test_missing_parameters_rejected(self, problem):
        _, _, _, rec = problem
        with pytest.raises(ConfigurationError):
            MovingSourceLocalizer().fit(rec)

    def test_wrong_input_type_rejected(self, problem):
        scenario, window, selection, _ = problem
        est = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0
        )
        with pytest.raises(ConfigurationError):
            est.fit(np.zeros((4, 4)))

    def test_unfitted_predict_rejected(self, problem):
        scenario, window, selection, _ = problem
        est = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0
        )
        with pytest.raises(ConfigurationError):
            est.predict()

    def test_half_plane_kernel_configuration(self, problem):
        # the kernel is an ordinary parameter; swapping it changes the model
        scenario, window, selection, rec = problem
        free = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0
        ).fit(rec)
        mirrored = MovingSourceLocalizer(
            scenario=scenario, window=window, selection=selection, f0=1000.0,
            kernel=Kernel2D("half_plane", -1.0),
        ).fit(rec)
        assert not np.allclose(mirrored.transfer_.entries, free.transfer_.entries)

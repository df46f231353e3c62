"""Source maps and localization metrics.

Solution vectors are arranged on the source grid, normalized to their peak
in dB, and reduced to the numbers the experiments compare: peak position,
-3 dB beamwidths along x and z, and the spatial period of sidelobes that a
regular bin spacing induces along the direction of motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, DomainError
from .scenario import SourceGrid

_4CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True, eq=False)
class SourceMap:
    """Amplitude magnitudes on the source grid, peak-normalized in dB."""

    grid: SourceGrid
    amplitudes: np.ndarray = field(repr=False)
    db: np.ndarray = field(repr=False)
    dynamic_floor_db: float = -20.0

    @property
    def x_values(self) -> np.ndarray:
        return self.grid.x_values

    @property
    def z_values(self) -> np.ndarray:
        return self.grid.z_values


@dataclass(frozen=True)
class BeamwidthReport:
    """Peak location and -threshold contour extents around a reference point."""

    peak_xy: tuple[float, float]
    true_xy: tuple[float, float]
    displacement: float
    horizontal_bw: float
    vertical_bw: float
    threshold_db: float
    boundary_touch: bool

    def describe(self) -> dict:
        return {
            "peak_xy": list(self.peak_xy),
            "true_xy": list(self.true_xy),
            "displacement": self.displacement,
            "horizontal_bw": self.horizontal_bw,
            "vertical_bw": self.vertical_bw,
            "threshold_db": self.threshold_db,
            "boundary_touch": self.boundary_touch,
        }


def to_source_map(result, grid: SourceGrid, dynamic_floor_db: float = -20.0) -> SourceMap:
    """Arrange a solution vector on its grid and normalize to the peak."""
    a = np.asarray(getattr(result, "a", result))
    if a.size != grid.n_points:
        raise ConfigurationError(
            f"solution length {a.size} does not match grid with {grid.n_points} points"
        )
    amplitudes = np.abs(a).reshape(grid.nz, grid.nx)
    peak = float(np.max(amplitudes))
    if peak == 0.0:
        raise ConfigurationError("all-zero solution vector has no source map")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(amplitudes / peak)
    db = np.maximum(db, dynamic_floor_db)
    return SourceMap(grid=grid, amplitudes=amplitudes, db=db,
                     dynamic_floor_db=dynamic_floor_db)


def find_peak(source_map: SourceMap) -> tuple[float, float]:
    """(x, z) of the maximum cell; ties resolved toward the smallest index."""
    flat = int(np.argmax(source_map.amplitudes))
    iz, ix = np.unravel_index(flat, source_map.amplitudes.shape)
    return float(source_map.x_values[ix]), float(source_map.z_values[iz])


def _nearest_cell(source_map: SourceMap, xy) -> tuple[int, int]:
    x, z = xy
    ix = int(np.argmin(np.abs(source_map.x_values - x)))
    iz = int(np.argmin(np.abs(source_map.z_values - z)))
    return iz, ix


def _component_extent(db, level, comp, axis_values, along_rows):
    """Sub-cell extent of a labeled region along one axis.

    Crossing positions between an inside cell and its outside neighbor are
    interpolated linearly in dB, which reproduces the vertex positions a
    marching-squares contour would place on those cell edges.  Regions that
    reach the map edge are clipped there and flagged.
    """
    data = db if along_rows else db.T
    mask = comp if along_rows else comp.T
    lo, hi = np.inf, -np.inf
    touched = False
    n = data.shape[1]
    for row, inside in zip(data, mask):
        idx = np.nonzero(inside)[0]
        if idx.size == 0:
            continue
        first, last = idx[0], idx[-1]
        if first == 0:
            lo = min(lo, axis_values[0])
            touched = True
        else:
            t = (level - row[first]) / (row[first - 1] - row[first])
            lo = min(lo, axis_values[first] + t * (axis_values[first - 1] - axis_values[first]))
        if last == n - 1:
            hi = max(hi, axis_values[-1])
            touched = True
        else:
            t = (level - row[last]) / (row[last + 1] - row[last])
            hi = max(hi, axis_values[last] + t * (axis_values[last + 1] - axis_values[last]))
    return hi - lo, touched


def beamwidth(
    source_map: SourceMap,
    center: tuple[float, float] | None = None,
    threshold_db: float = 3.0,
) -> tuple[float, float]:
    """Extents along x and z of the -threshold contour region around center."""
    h, v, _ = _beamwidth_details(source_map, center, threshold_db)
    return h, v


def _beamwidth_details(source_map, center, threshold_db):
    if threshold_db <= 0:
        raise ConfigurationError("threshold_db must be positive")
    if center is None:
        center = find_peak(source_map)
    level = -float(threshold_db)
    iz, ix = _nearest_cell(source_map, center)
    db = source_map.db
    if db[iz, ix] < level:
        raise DomainError(
            f"reference point {center} lies {db[iz, ix]:.2f} dB below the peak, "
            f"outside the -{threshold_db} dB region; no enclosing contour"
        )
    labels, _ = ndimage.label(db >= level, structure=_4CONN)
    comp = labels == labels[iz, ix]
    h_bw, touch_x = _component_extent(db, level, comp, source_map.x_values, True)
    v_bw, touch_z = _component_extent(db, level, comp, source_map.z_values, False)
    return float(h_bw), float(v_bw), bool(touch_x or touch_z)


def beamwidth_report(
    source_map: SourceMap,
    true_xy: tuple[float, float],
    threshold_db: float = 3.0,
) -> BeamwidthReport:
    """Measure around the true position (it stays within a cell of the peak)."""
    peak = find_peak(source_map)
    h, v, touched = _beamwidth_details(source_map, true_xy, threshold_db)
    return BeamwidthReport(
        peak_xy=peak,
        true_xy=(float(true_xy[0]), float(true_xy[1])),
        displacement=float(np.hypot(peak[0] - true_xy[0], peak[1] - true_xy[1])),
        horizontal_bw=h,
        vertical_bw=v,
        threshold_db=float(threshold_db),
        boundary_touch=touched,
    )


def robust_beamwidth_report(
    source_map: SourceMap,
    true_xy: tuple[float, float],
    threshold_db: float = 3.0,
) -> BeamwidthReport:
    """Like :func:`beamwidth_report`, but survives poor localizations.

    When the true position falls outside the -threshold region, the widths
    are measured around the detected peak instead; the displacement keeps
    referring to the true position.
    """
    try:
        return beamwidth_report(source_map, true_xy, threshold_db)
    except DomainError:
        peak = find_peak(source_map)
        h, v, touched = _beamwidth_details(source_map, peak, threshold_db)
        return BeamwidthReport(
            peak_xy=peak,
            true_xy=(float(true_xy[0]), float(true_xy[1])),
            displacement=float(np.hypot(peak[0] - true_xy[0], peak[1] - true_xy[1])),
            horizontal_bw=h,
            vertical_bw=v,
            threshold_db=float(threshold_db),
            boundary_touch=touched,
        )


def sidelobe_period(
    source_map: SourceMap,
    axis: str = "x",
    lobe_floor_db: float = -20.0,
    prominence: float = 0.1,
) -> float | None:
    """Dominant repetition length of lobes in the profile through the peak.

    Returns None when no secondary lobe rises above ``lobe_floor_db``
    relative to the peak.  Otherwise the first prominent maximum of the
    profile autocorrelation, refined parabolically, scaled by the grid
    spacing.
    """
    if axis not in ("x", "z"):
        raise ConfigurationError(f"axis must be 'x' or 'z', got {axis!r}")
    iz, ix = _nearest_cell(source_map, find_peak(source_map))
    if axis == "x":
        profile = source_map.amplitudes[iz, :]
        peak_pos = ix
    else:
        profile = source_map.amplitudes[:, ix]
        peak_pos = iz
    spacing = source_map.grid.spacing

    floor = np.max(profile) * 10.0 ** (lobe_floor_db / 20.0)
    interior = np.arange(1, profile.size - 1)
    local_max = interior[
        (profile[interior] > profile[interior - 1])
        & (profile[interior] >= profile[interior + 1])
    ]
    secondary = local_max[(np.abs(local_max - peak_pos) > 1) & (profile[local_max] >= floor)]
    if secondary.size == 0:
        return None

    signal = profile - np.mean(profile)
    corr = np.correlate(signal, signal, mode="full")[signal.size - 1 :]
    corr /= corr[0]
    lags = np.arange(1, corr.size - 1)
    peaks = lags[(corr[lags] > corr[lags - 1]) & (corr[lags] >= corr[lags + 1]) & (corr[lags] > prominence)]
    if peaks.size == 0:
        return None
    k = int(peaks[0])
    if 1 <= k < corr.size - 1 and corr[k - 1] - 2 * corr[k] + corr[k + 1] < 0:
        k_refined = k + 0.5 * (corr[k - 1] - corr[k + 1]) / (
            corr[k - 1] - 2 * corr[k] + corr[k + 1]
        )
    else:
        k_refined = float(k)
    return float(k_refined * spacing)


def map_to_csv(path, source_map: SourceMap) -> None:
    """Write rows of x, z, amplitude, db."""
    xs = source_map.x_values
    zs = source_map.z_values
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,z,amplitude,db\n")
        for iz, z in enumerate(zs):
            for ix, x in enumerate(xs):
                fh.write(
                    f"{float(x)!r},{float(z)!r},"
                    f"{float(source_map.amplitudes[iz, ix])!r},"
                    f"{float(source_map.db[iz, ix])!r}\n"
                )


def map_plot_data(path, source_map: SourceMap) -> None:
    """Write a gnuplot 'nonuniform matrix' of the dB map."""
    xs = source_map.x_values
    zs = source_map.z_values
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(xs)} " + " ".join(repr(float(x)) for x in xs) + "\n")
        for iz, z in enumerate(zs):
            row = " ".join(repr(float(v)) for v in source_map.db[iz])
            fh.write(f"{float(z)!r} {row}\n")

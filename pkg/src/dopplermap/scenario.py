"""Geometry, kinematics and medium configuration.

A :class:`Scenario` bundles everything the forward simulator and the
transfer-matrix builder have to agree on: the candidate source grid (moving
along +x), the stationary microphone array, the source speed, the speed of
sound and an optional fully reflecting ground plane.  All types are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .serialization import content_hash

_REL_TOL = 1e-9


@dataclass(frozen=True)
class Medium:
    """Homogeneous propagation medium."""

    c: float = 343.0

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigurationError(f"speed of sound must be positive, got {self.c}")


@dataclass(frozen=True, eq=False)
class SourceGrid:
    """Regular grid of candidate source positions in an x-z plane.

    ``points`` holds positions at t = 0 s, ordered row-major with x running
    fastest, so index ``l = iz * nx + ix``.
    """

    origin: tuple[float, float, float]
    x_extent: float
    z_extent: float
    spacing: float
    y_plane: float
    cell_centered: bool
    nx: int
    nz: int
    points: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.nx * self.nz

    @property
    def x_values(self) -> np.ndarray:
        return self.points[: self.nx, 0].copy()

    @property
    def z_values(self) -> np.ndarray:
        return self.points[:: self.nx, 2].copy()

    def index_of(self, ix: int, iz: int) -> int:
        if not (0 <= ix < self.nx and 0 <= iz < self.nz):
            raise IndexError(f"grid index ({ix}, {iz}) outside {self.nx}x{self.nz}")
        return iz * self.nx + ix

    def coords_of(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.n_points:
            raise IndexError(f"point index {index} outside 0..{self.n_points - 1}")
        return index % self.nx, index // self.nx

    @property
    def center(self) -> tuple[float, float, float]:
        x0, y0, z0 = self.origin
        return (x0 + self.x_extent / 2.0, self.y_plane, z0 + self.z_extent / 2.0)

    def describe(self) -> dict:
        return {
            "origin": list(self.origin),
            "x_extent": self.x_extent,
            "z_extent": self.z_extent,
            "spacing": self.spacing,
            "y_plane": self.y_plane,
            "cell_centered": self.cell_centered,
        }


@dataclass(frozen=True, eq=False)
class MicArray:
    """Stationary microphone positions."""

    positions: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ConfigurationError("microphone positions must form an (N, 3) array")
        diffs = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) <= 0:
            raise ConfigurationError("microphone positions must be pairwise distinct")
        object.__setattr__(self, "positions", pos)

    @property
    def n_mics(self) -> int:
        return self.positions.shape[0]

    def translated(self, offset: Sequence[float]) -> "MicArray":
        return MicArray(self.positions + np.asarray(offset, dtype=float), self.label)

    def describe(self) -> dict:
        return {"label": self.label, "positions": self.positions.tolist()}


@dataclass(frozen=True)
class MotionSpec:
    """Uniform motion of the source region along +x."""

    v_s: float
    x0: float = 0.0

    def __post_init__(self):
        if self.v_s == 0:
            raise ConfigurationError(
                "source speed must be nonzero; use e.g. 1 m/s for quasi-stationary runs"
            )


@dataclass(frozen=True)
class GroundPlane:
    """Fully reflecting plane z = z_plane."""

    enabled: bool = False
    z_plane: float = -1.0


@dataclass(frozen=True, eq=False)
class Scenario:
    """Complete measurement geometry shared by simulation and inversion."""

    medium: Medium
    grid: SourceGrid
    array: MicArray
    motion: MotionSpec
    ground: GroundPlane = GroundPlane()
    source_position: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.ground.enabled:
            z_min = min(float(np.min(self.grid.points[:, 2])), float(np.min(self.array.positions[:, 2])))
            if self.ground.z_plane >= z_min:
                raise ConfigurationError(
                    f"ground plane z={self.ground.z_plane} must lie strictly below "
                    f"all source and microphone z coordinates (min {z_min})"
                )
        if abs(self.motion.v_s) >= self.medium.c:
            raise DomainError("only subsonic source speeds are supported")
        if self.source_position is None:
            cx, cy, cz = self.grid.center
            object.__setattr__(self, "source_position", (self.motion.x0, cy, cz))
        else:
            object.__setattr__(self, "source_position", tuple(float(v) for v in self.source_position))

    def describe(self) -> dict:
        return {
            "medium": {"c": self.medium.c},
            "grid": self.grid.describe(),
            "array": self.array.describe(),
            "motion": {"v_s": self.motion.v_s, "x0": self.motion.x0},
            "ground": {"enabled": self.ground.enabled, "z_plane": self.ground.z_plane},
            "source_position": list(self.source_position),
        }

    @property
    def hash(self) -> str:
        return content_hash(self.describe())


def _axis_count(extent: float, spacing: float, what: str) -> int:
    cells = extent / spacing
    n = round(cells)
    if n < 1 or abs(cells - n) > _REL_TOL * max(1.0, abs(cells)):
        raise ConfigurationError(
            f"{what} extent {extent} is not a positive integer multiple of spacing {spacing}"
        )
    return int(n)


def make_source_grid(
    origin: Sequence[float],
    x_extent: float,
    z_extent: float,
    spacing: float,
    y_plane: float,
    cell_centered: bool = True,
) -> SourceGrid:
    """Build a regular source grid in the plane y = y_plane.

    With ``cell_centered`` (default) an extent of ``n * spacing`` yields
    ``n`` points per axis, offset by spacing/2 from the origin; otherwise
    the nodes themselves are used, yielding ``n + 1`` points per axis.
    """
    if spacing <= 0:
        raise ConfigurationError(f"grid spacing must be positive, got {spacing}")
    if x_extent <= 0 or z_extent <= 0:
        raise ConfigurationError("grid extents must be positive")
    ncx = _axis_count(x_extent, spacing, "x")
    ncz = _axis_count(z_extent, spacing, "z")
    x0, _, z0 = (float(v) for v in origin)
    if cell_centered:
        xs = x0 + (np.arange(ncx) + 0.5) * spacing
        zs = z0 + (np.arange(ncz) + 0.5) * spacing
    else:
        xs = x0 + np.arange(ncx + 1) * spacing
        zs = z0 + np.arange(ncz + 1) * spacing
    zz, xx = np.meshgrid(zs, xs, indexing="ij")
    points = np.column_stack([xx.ravel(), np.full(xx.size, float(y_plane)), zz.ravel()])
    return SourceGrid(
        origin=tuple(float(v) for v in origin),
        x_extent=float(x_extent),
        z_extent=float(z_extent),
        spacing=float(spacing),
        y_plane=float(y_plane),
        cell_centered=cell_centered,
        nx=len(xs),
        nz=len(zs),
        points=points,
    )


def make_spiral_array(
    n_mics: int,
    diameter: float,
    n_arms: int = 7,
    turn_parameter: float = 1.0,
    seed: int = 0,
) -> MicArray:
    """Multi-arm spiral microphone layout in the x-z plane, centered at 0.

    Each arm carries ``n_mics / n_arms`` microphones whose radius grows
    linearly to ``diameter / 2`` while the azimuth advances by
    ``turn_parameter`` full turns.  A small seeded angular dither breaks
    the exact rotational symmetry, as is common for measurement arrays.
    """
    if n_mics < 1 or diameter <= 0 or n_arms < 1:
        raise ConfigurationError("need n_mics >= 1, diameter > 0, n_arms >= 1")
    if n_mics == 1:
        return MicArray(np.zeros((1, 3)), label="spiral-1")
    if n_mics % n_arms != 0:
        raise ConfigurationError(
            f"n_mics = {n_mics} is not divisible by n_arms = {n_arms}"
        )
    per_arm = n_mics // n_arms
    radius = diameter / 2.0
    rng = np.random.default_rng(seed)
    dither = rng.uniform(-0.05, 0.05, size=n_mics) * (2 * np.pi / n_arms)
    positions = np.empty((n_mics, 3))
    i = 0
    for arm in range(n_arms):
        base = 2 * np.pi * arm / n_arms
        for k in range(per_arm):
            frac = (k + 1) / per_arm
            r = radius * frac
            theta = base + 2 * np.pi * turn_parameter * frac + dither[i]
            positions[i] = (r * np.cos(theta), 0.0, r * np.sin(theta))
            i += 1
    return MicArray(positions, label=f"spiral-{n_mics}-{n_arms}arm")


def doppler_band(f0: float, v_s: float, medium: Medium) -> tuple[float, float]:
    """Frequency interval swept at a stationary receiver by a moving tone.

    Returns ``(f0 / (1 + v_s/c), f0 / (1 - v_s/c))``, the recede and
    approach limits of the Doppler shift.
    """
    if f0 <= 0:
        raise DomainError(f"source frequency must be positive, got {f0}")
    if not 0 < v_s < medium.c:
        raise DomainError(f"need 0 < v_s < c, got v_s={v_s}, c={medium.c}")
    ratio = v_s / medium.c
    return f0 / (1.0 + ratio), f0 / (1.0 - ratio)


def analysis_band(
    f0: float,
    v_s: float,
    medium: Medium,
    factors: tuple[float, float] = (0.92, 1.12),
) -> tuple[float, float]:
    """Default observation band, clipped strictly inside the Doppler band.

    The nominal limits are ``factors`` times f0; at low speeds those fall
    outside the physical Doppler band, in which case frequencies are
    limited to the band interior (the band edges are kernel singularities).
    """
    f_minus, f_plus = doppler_band(f0, abs(v_s), medium)
    margin = 1e-6 * f0
    lo = max(factors[0] * f0, f_minus + margin)
    hi = min(factors[1] * f0, f_plus - margin)
    if lo >= hi:
        raise ConfigurationError(
            f"empty analysis band for f0={f0}, v_s={v_s}: doppler band "
            f"({f_minus:.3f}, {f_plus:.3f}) Hz leaves no room"
        )
    return lo, hi


def load_array_file(path) -> MicArray:
    """Read microphone positions from plain text, one "x y z" triple per line."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ConfigurationError(f"{path}:{lineno}: expected 'x y z', got {line!r}")
            rows.append([float(p) for p in parts])
    if not rows:
        raise ConfigurationError(f"{path}: no microphone positions found")
    return MicArray(np.asarray(rows), label=str(path))


def scenario_from_config(cfg: dict) -> Scenario:
    """Build a Scenario from a nested configuration mapping.

    Recognized keys::

        medium.c
        grid.{origin, x_extent, z_extent, spacing, y, cell_centered}
        array.{type, n_mics, diameter, arms, turns, seed, file, center}
        motion.{v_s, x0}
        ground.{enabled, z}
        source.{x, z}      # optional true-source override
    """
    medium = Medium(c=float(cfg.get("medium", {}).get("c", 343.0)))

    gcfg = cfg.get("grid", {})
    grid = make_source_grid(
        origin=gcfg.get("origin", (0.0, 0.0, 0.0)),
        x_extent=float(gcfg.get("x_extent", 4.0)),
        z_extent=float(gcfg.get("z_extent", 4.0)),
        spacing=float(gcfg.get("spacing", 0.05)),
        y_plane=float(gcfg.get("y", 0.0)),
        cell_centered=bool(gcfg.get("cell_centered", True)),
    )

    acfg = cfg.get("array", {})
    kind = acfg.get("type", "spiral")
    if kind == "file":
        array = load_array_file(acfg["file"])
    elif kind == "spiral":
        array = make_spiral_array(
            n_mics=int(acfg.get("n_mics", 112)),
            diameter=float(acfg.get("diameter", 1.0)),
            n_arms=int(acfg.get("arms", 7)),
            turn_parameter=float(acfg.get("turns", 1.0)),
            seed=int(acfg.get("seed", 0)),
        )
    else:
        raise ConfigurationError(f"unknown array type {kind!r}")
    cx, _, cz = grid.center
    center = acfg.get("center", (cx, float(acfg.get("distance", 4.0)), cz))
    array = array.translated(center)

    mcfg = cfg.get("motion", {})
    motion = MotionSpec(v_s=float(mcfg.get("v_s", 50.0)), x0=float(mcfg.get("x0", grid.center[0])))

    gr = cfg.get("ground", {})
    ground = GroundPlane(enabled=bool(gr.get("enabled", False)), z_plane=float(gr.get("z", -1.0)))

    scfg = cfg.get("source", {})
    source_position = None
    if scfg:
        source_position = (
            float(scfg.get("x", motion.x0)),
            grid.y_plane,
            float(scfg.get("z", grid.center[2])),
        )
    return Scenario(
        medium=medium,
        grid=grid,
        array=array,
        motion=motion,
        ground=ground,
        source_position=source_position,
    )

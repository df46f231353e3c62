"""Frequency-domain transfer matrix for a uniformly moving tonal source.

Each entry links the complex amplitude of a candidate source (position
fixed in the moving frame) to the windowed DFT coefficient that a
microphone observes at one frequency bin:

    h[w'] = 1 / (2 pi |v_s|) * integral over omega of
            q2d( sqrt(omega^2/c^2 - (omega - w0)^2/v_s^2) )
            * g_hat(w' - omega)
            * exp( i (omega - w0) (x_r - x_s) / v_s ) d omega,

where g_hat is the DTFT of the analysis window.  The integrand has
integrable kernel singularities where the squared 2D wavenumber vanishes,
at omega = c w0 / (c +- |v_s|); the quadrature pins interval edges there,
truncates where the window has decayed by ``truncation_db`` and follows
the evanescent tails only while the kernel magnitude is representable.

Assembly exploits that the integrand factorizes over a structured source
grid: the 2D kernel depends on the source z only and the x dependence is a
pure phase, so one vector-valued adaptive quadrature per (microphone, bin)
row integrates all columns at once with per-column error control.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError, QuadratureError
from .kernels import Kernel2D
from .quadrature import (
    G7_INDICES,
    G7_WEIGHTS,
    GK15_NODES,
    GK15_WEIGHTS,
    adaptive_panels,
    adaptive_quadrature,
)
from .scenario import Scenario
from .serialization import (
    content_hash,
    read_complex_binary,
    read_json,
    write_complex_binary,
    write_json,
)
from .spectral import BinSelection, Window, decay_limits, window_dtft

TRANSFER_FORMAT_VERSION = 1

# kernel tail cut: K0(41) ~ 1e-19, far below any entry's working precision
_TAIL_EXPONENT = 41.0


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and truncation controls for the transfer integrals."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    max_subdivisions: int = 4000
    truncation_db: float = 80.0
    truncation_delta_f: float | None = None

    def __post_init__(self):
        if not 0.0 < self.rel_tol <= 1e-2:
            raise ConfigurationError(f"rel_tol must be in (0, 1e-2], got {self.rel_tol}")
        if self.truncation_db <= 0 and self.truncation_delta_f is None:
            raise ConfigurationError("truncation_db must be positive")

    def describe(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """Complex (N*M) x L matrix with row/column provenance."""

    entries: np.ndarray = field(repr=False)
    row_index: tuple[tuple[int, float], ...]
    n_sources: int
    hashes: dict

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=complex)
        if ent.ndim != 2 or ent.shape != (len(self.row_index), self.n_sources):
            raise ConfigurationError("entries shape does not match row/column index")
        if not np.all(np.isfinite(ent)):
            raise ConfigurationError("transfer matrix contains non-finite entries")
        object.__setattr__(self, "entries", ent)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def singular_frequencies(f0: float, v_s: float, c: float) -> tuple[float, float]:
    """Angular frequencies where the 2D wavenumber vanishes (band edges)."""
    w0 = 2.0 * np.pi * f0
    v = abs(v_s)
    return w0 * c / (c + v), w0 * c / (c - v)


def _support_extension(f0: float, v_s: float, c: float, r2_min: float) -> tuple[float, float]:
    """Interval outside which the evanescent kernel is negligibly small."""
    w0 = 2.0 * np.pi * f0
    v = abs(v_s)
    kappa = _TAIL_EXPONENT / r2_min
    a = 1.0 / v**2 - 1.0 / c**2
    disc = w0**2 / v**4 - a * (w0**2 / v**2 - kappa**2)
    root = np.sqrt(max(disc, 0.0))
    lo = (w0 / v**2 - root) / a
    hi = (w0 / v**2 + root) / a
    return max(lo, 1e-6 * w0), hi


def _truncation_half_width(window: Window, quad: QuadratureSpec) -> float:
    if quad.truncation_delta_f is not None:
        return 2.0 * np.pi * quad.truncation_delta_f
    return decay_limits(window, quad.truncation_db)


def _clamp_collar(k2sq: np.ndarray, collar_sq: float) -> np.ndarray:
    inside = np.abs(k2sq) < collar_sq
    if np.any(inside):
        k2sq = np.where(inside, np.where(k2sq >= 0, collar_sq, -collar_sq), k2sq)
    return k2sq


def _kernel_block(radii: tuple, k2sq: np.ndarray) -> np.ndarray:
    """Field values for every (node, source-z) pair, all mirror terms summed.

    radii: tuple of (Z,) arrays of cross-plane distances.  Returns (K, Z).
    """
    k = np.empty_like(k2sq)
    prop = k2sq > 0
    k[prop] = np.sqrt(k2sq[prop])
    k[~prop] = np.sqrt(-k2sq[~prop])
    out = np.zeros((k2sq.size, radii[0].size), dtype=complex)
    for r2 in radii:
        args = k[:, None] * r2[None, :]
        if np.any(prop):
            out[prop] += 0.25j * special.hankel1(0, args[prop])
        if np.any(~prop):
            out[~prop] += special.k0(args[~prop]) / (2.0 * np.pi)
    return out


def _row_geometry(scenario: Scenario, kernel: Kernel2D, mic: np.ndarray) -> tuple:
    """Cross-plane radii from one microphone to every source-grid z row."""
    ys = scenario.grid.y_plane
    zs = scenario.grid.z_values
    radii = [np.hypot(mic[1] - ys, mic[2] - zs)]
    if kernel.kind == "half_plane":
        radii.append(np.hypot(mic[1] - ys, mic[2] - (2.0 * kernel.z_plane - zs)))
    for r2 in radii:
        if np.min(r2) <= 0:
            raise DomainError("microphone lies in the source plane (r2 = 0)")
    return tuple(radii)


def _row_domain(omega_prime, half_width, scenario, f0):
    """Quadrature breakpoints for one bin, or None if the domain is empty."""
    v, c = scenario.motion.v_s, scenario.medium.c
    w_lo, w_hi = singular_frequencies(f0, v, c)
    r2_all = np.hypot(
        scenario.array.positions[:, 1][:, None] - scenario.grid.y_plane,
        scenario.array.positions[:, 2][:, None] - scenario.grid.z_values[None, :],
    )
    ext_lo, ext_hi = _support_extension(f0, v, c, float(np.min(r2_all)))
    lo = max(omega_prime - half_width, ext_lo)
    hi = min(omega_prime + half_width, ext_hi)
    if lo >= hi:
        return None
    pts = [lo, hi]
    for w in (w_lo, w_hi):
        if lo < w < hi:
            pts.append(w)
    return sorted(pts)


def _initial_width(scenario: Scenario, window: Window, mic_x: float) -> float:
    xs = scenario.grid.x_values
    dx_max = max(abs(mic_x - xs[0]), abs(mic_x - xs[-1]), 1e-9)
    w_phase = np.pi * abs(scenario.motion.v_s) / dx_max
    w_window = 2.0 * np.pi * window.delta_f
    return min(w_phase, w_window)


def _row_panel_rule(scenario, window, kernel, f0, mic, omega_prime):
    """Batched Gauss-Kronrod panel sums for a whole transfer-matrix row."""
    v = scenario.motion.v_s
    c = scenario.medium.c
    w0 = 2.0 * np.pi * f0
    xs = scenario.grid.x_values
    radii = _row_geometry(scenario, kernel, mic)
    collar_sq = (1e-6 * w0 / c) ** 2
    prefactor = 1.0 / (2.0 * np.pi * abs(v))
    mic_x = mic[0]

    def rule(a: np.ndarray, b: np.ndarray):
        n_panels = len(a)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        om = (mid[:, None] + half[:, None] * GK15_NODES[None, :]).ravel()
        k2sq = _clamp_collar(om**2 / c**2 - (om - w0) ** 2 / v**2, collar_sq)
        coeff = (
            prefactor
            * window_dtft(window, omega_prime - om)
            * np.exp(1j * (om - w0) * mic_x / v)
        )
        kmat = coeff[:, None] * _kernel_block(radii, k2sq)
        pmat = np.exp(-1j * np.outer(om - w0, xs) / v)
        kmat = kmat.reshape(n_panels, 15, -1)
        pmat = pmat.reshape(n_panels, 15, -1)
        kron = np.matmul(
            (GK15_WEIGHTS[None, :, None] * kmat).transpose(0, 2, 1), pmat
        )
        gauss = np.matmul(
            (G7_WEIGHTS[None, :, None] * kmat[:, G7_INDICES, :]).transpose(0, 2, 1),
            pmat[:, G7_INDICES, :],
        )
        scale = half[:, None, None]
        values = (scale * kron).reshape(n_panels, -1)
        errors = np.abs(scale * (kron - gauss)).reshape(n_panels, -1)
        return values, errors

    return rule


def transfer_entry(
    scenario: Scenario,
    window: Window,
    kernel: Kernel2D,
    f0: float,
    mic_index: int,
    source_index: int,
    f_prime: float,
    quad: QuadratureSpec = QuadratureSpec(),
) -> complex:
    """Single transfer coefficient via scalar adaptive quadrature."""
    mic = scenario.array.positions[mic_index]
    source = scenario.grid.points[source_index]
    return entry_at(scenario, window, kernel, f0, mic, source, f_prime, quad)


def entry_at(scenario, window, kernel, f0, mic, source, f_prime, quad=QuadratureSpec()):
    """Transfer coefficient for arbitrary mic / source positions."""
    mic = np.asarray(mic, dtype=float)
    source = np.asarray(source, dtype=float)
    v = scenario.motion.v_s
    c = scenario.medium.c
    w0 = 2.0 * np.pi * f0
    omega_prime = 2.0 * np.pi * f_prime
    radii = tuple(
        np.atleast_1d(r)
        for r in kernel.radii((source[1], source[2]), (mic[1], mic[2]))
    )
    collar_sq = (1e-6 * w0 / c) ** 2
    prefactor = 1.0 / (2.0 * np.pi * abs(v))
    dx = mic[0] - source[0]

    half_width = _truncation_half_width(window, quad)
    pts = _row_domain(omega_prime, half_width, scenario, f0)
    if pts is None:
        return 0.0 + 0.0j

    def integrand(om):
        k2sq = _clamp_collar(om**2 / c**2 - (om - w0) ** 2 / v**2, collar_sq)
        kernel_vals = _kernel_block(radii, k2sq)[:, 0]
        return (
            prefactor
            * kernel_vals
            * window_dtft(window, omega_prime - om)
            * np.exp(1j * (om - w0) * dx / v)
        )

    dx_max = max(abs(dx), 1e-9)
    width = min(np.pi * abs(v) / dx_max, 2.0 * np.pi * window.delta_f)
    try:
        value, _ = adaptive_quadrature(
            integrand,
            pts,
            rel_tol=quad.rel_tol,
            abs_tol=quad.abs_tol,
            max_subdivisions=quad.max_subdivisions,
            initial_width=width,
        )
    except QuadratureError as exc:
        raise QuadratureError(
            f"transfer entry (mic at x={mic[0]:.3f}, source at x={source[0]:.3f}, "
            f"f'={f_prime:.6g} Hz) did not converge: {exc}",
            estimate=exc.estimate,
            value=exc.value,
        ) from exc
    return complex(value)


def assemble(
    scenario: Scenario,
    window: Window,
    kernel: Kernel2D,
    selection: BinSelection,
    f0: float,
    quad: QuadratureSpec = QuadratureSpec(),
    progress=None,
    cache_dir=None,
) -> TransferMatrix:
    """Build the full (N*M) x L transfer matrix, one quadrature per row.

    Deterministic for fixed inputs; with ``cache_dir`` the matrix is reused
    across runs keyed by the content hashes of all inputs (a corrupted or
    mismatched cache entry is rebuilt).
    """
    if abs(selection.delta_f - window.delta_f) > 1e-9 * window.delta_f:
        raise ConfigurationError(
            f"bin selection delta_f {selection.delta_f} does not match window "
            f"delta_f {window.delta_f}"
        )
    hashes = {
        "scenario": scenario.hash,
        "window": window.hash,
        "selection": selection.hash,
        "kernel": content_hash(kernel.describe()),
        "quad": content_hash(quad.describe()),
        "f0": f0,
    }
    if cache_dir is not None:
        cached = _load_cached(cache_dir, hashes)
        if cached is not None:
            return cached

    rows = list(selection.rows())
    n_sources = scenario.grid.n_points
    entries = np.empty((len(rows), n_sources), dtype=complex)
    half_width = _truncation_half_width(window, quad)

    for r, (n, m) in enumerate(rows):
        f_prime = m * selection.delta_f
        omega_prime = 2.0 * np.pi * f_prime
        mic = scenario.array.positions[n]
        pts = _row_domain(omega_prime, half_width, scenario, f0)
        if pts is None:
            entries[r] = 0.0
        else:
            rule = _row_panel_rule(scenario, window, kernel, f0, mic, omega_prime)
            try:
                value, _ = adaptive_panels(
                    rule,
                    pts,
                    rel_tol=quad.rel_tol,
                    abs_tol=quad.abs_tol,
                    max_subdivisions=quad.max_subdivisions,
                    initial_width=_initial_width(scenario, window, mic[0]),
                )
            except QuadratureError as exc:
                worst = int(np.argmax(exc.estimate)) if exc.estimate is not None else -1
                raise QuadratureError(
                    f"transfer row {r} (mic {n}, f'={f_prime:.6g} Hz) did not "
                    f"converge; worst column {worst}: {exc}",
                    estimate=exc.estimate,
                    value=exc.value,
                ) from exc
            entries[r] = value
        if progress is not None:
            progress(r + 1, len(rows))

    matrix = TransferMatrix(
        entries=entries,
        row_index=tuple((n, m * selection.delta_f) for n, m in rows),
        n_sources=n_sources,
        hashes=hashes,
    )
    if cache_dir is not None:
        save_transfer(Path(cache_dir) / content_hash(hashes), matrix)
    return matrix


def limit_transfer_entry(
    scenario: Scenario,
    kernel: Kernel2D,
    f0: float,
    mic_index: int,
    source_index: int,
    f_prime: float,
) -> complex:
    """Infinite-window limit of the transfer coefficient (no quadrature).

    Valid strictly inside the open Doppler band, where the leakage kernel
    collapses to a point evaluation:
    q2d at the bin's 2D wavenumber times a pure x-offset phase.
    """
    mic = scenario.array.positions[mic_index]
    source = scenario.grid.points[source_index]
    return limit_entry_at(scenario, kernel, f0, mic, source, f_prime)


def limit_entry_at(scenario, kernel, f0, mic, source, f_prime) -> complex:
    v = scenario.motion.v_s
    c = scenario.medium.c
    w0 = 2.0 * np.pi * f0
    omega_prime = 2.0 * np.pi * f_prime
    w_lo, w_hi = singular_frequencies(f0, v, c)
    if not w_lo < omega_prime < w_hi:
        raise DomainError(
            f"f' = {f_prime:.6g} Hz lies outside the open Doppler band "
            f"({w_lo / (2 * np.pi):.6g}, {w_hi / (2 * np.pi):.6g}) Hz"
        )
    k2sq = omega_prime**2 / c**2 - (omega_prime - w0) ** 2 / v**2
    mic = np.asarray(mic, dtype=float)
    source = np.asarray(source, dtype=float)
    radii = kernel.radii((source[1], source[2]), (mic[1], mic[2]))
    q = sum(0.25j * special.hankel1(0, r2 * np.sqrt(k2sq)) for r2 in radii)
    phase = np.exp(1j * (omega_prime - w0) * (mic[0] - source[0]) / v)
    return complex(q * phase / (2.0 * np.pi * abs(v)))


def predicted_period(delta_f: float, v_s: float) -> float:
    """Spatial period induced along x by a regular bin spacing delta_f."""
    if delta_f <= 0:
        raise DomainError(f"bin spacing must be positive, got {delta_f}")
    return abs(v_s) / delta_f


def save_transfer(stem, matrix: TransferMatrix) -> None:
    """Persist as <stem>.json (header) + <stem>.bin (complex entries)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(matrix.entries)
    header = {
        "format_version": TRANSFER_FORMAT_VERSION,
        "shape": list(matrix.shape),
        "row_index": [[n, f] for n, f in matrix.row_index],
        "hashes": matrix.hashes,
        "data_hash": content_hash(np.abs(data).sum().item()),
    }
    write_json(f"{stem}.json", header)
    write_complex_binary(f"{stem}.bin", data)


def load_transfer(stem) -> TransferMatrix:
    header = read_json(f"{stem}.json")
    if header.get("format_version") != TRANSFER_FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported transfer matrix format {header.get('format_version')}"
        )
    shape = tuple(header["shape"])
    entries = read_complex_binary(f"{stem}.bin", shape)
    if header.get("data_hash") != content_hash(np.abs(entries).sum().item()):
        raise ConfigurationError("transfer matrix data does not match its header checksum")
    return TransferMatrix(
        entries=entries,
        row_index=tuple((int(n), float(f)) for n, f in header["row_index"]),
        n_sources=shape[1],
        hashes=header["hashes"],
    )


def _load_cached(cache_dir, hashes: dict) -> TransferMatrix | None:
    stem = Path(cache_dir) / content_hash(hashes)
    if not Path(f"{stem}.json").exists():
        return None
    try:
        matrix = load_transfer(stem)
    except (ConfigurationError, ValueError, OSError):
        return None
    if matrix.hashes != hashes:
        return None
    return matrix

"""Analysis windows, their discrete-time Fourier transforms, and bin selection.

Windowed DFT convention: the transform of a sampled channel p is

    DFT_g(p)[m] = sum_n p[t_n] g[t_n] exp(+i w_m t_n),   w_m = 2 pi m / T_g,

with *absolute* sample times t_n.  The window occupies N_g consecutive
samples at t_n = center + (n - N_g//2) / fs, so "centered at t = 0" is
expressed through the phase reference rather than by shifting data.  The
model side uses the closed-form DTFT of exactly these samples, which keeps
measurement and forward model on one common time origin.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, WindowCoverageError
from .serialization import content_hash

WINDOW_KINDS = ("hanning", "rectangular")


@dataclass(frozen=True)
class Window:
    """Sampled analysis window of duration T_g at sampling rate fs."""

    kind: str
    T_g: float
    fs: float
    center: float = 0.0

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ConfigurationError(f"unknown window kind {self.kind!r}")
        if self.T_g <= 0 or self.fs <= 0:
            raise ConfigurationError("window duration and sampling rate must be positive")
        if self.n_samples < 2:
            raise ConfigurationError("window must span at least 2 samples")

    @property
    def n_samples(self) -> int:
        return int(round(self.T_g * self.fs))

    @property
    def delta_f(self) -> float:
        """DFT bin spacing 1 / T_g."""
        return self.fs / self.n_samples

    @property
    def sample_offsets(self) -> np.ndarray:
        n = self.n_samples
        return np.arange(n) - n // 2

    @property
    def sample_times(self) -> np.ndarray:
        return self.center + self.sample_offsets / self.fs

    @property
    def samples(self) -> np.ndarray:
        n = self.n_samples
        if self.kind == "rectangular":
            return np.ones(n)
        # raised-cosine taper offset by half a sample: strictly positive
        # everywhere, and the sample sum is exactly n / 2
        return np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 2

    def bin_frequency(self, m: int | np.ndarray) -> float | np.ndarray:
        return m * self.delta_f

    def bin_of(self, frequency: float) -> int:
        return int(round(frequency / self.delta_f))

    def describe(self) -> dict:
        return {"kind": self.kind, "T_g": self.T_g, "fs": self.fs, "center": self.center}

    @property
    def hash(self) -> str:
        return content_hash(self.describe())


def _dirichlet(theta: np.ndarray, n: int) -> np.ndarray:
    """sin(n theta / 2) / sin(theta / 2) with its removable singularities."""
    theta = np.asarray(theta, dtype=float)
    den = np.sin(theta / 2.0)
    num = np.sin(n * theta / 2.0)
    out = np.empty_like(den)
    singular = np.abs(den) < 1e-13
    np.divide(num, den, out=out, where=~singular)
    if np.any(singular):
        out[singular] = n * np.cos(n * theta[singular] / 2.0) / np.cos(theta[singular] / 2.0)
    return out


def _geometric_sum(omega: np.ndarray, n: int, ts: float) -> np.ndarray:
    """sum_{k=0}^{n-1} exp(i omega k ts)."""
    theta = omega * ts
    return np.exp(1j * theta * (n - 1) / 2.0) * _dirichlet(theta, n)


def window_dtft(window: Window, omega) -> complex | np.ndarray:
    """Closed-form DTFT of the window samples at absolute times.

    Evaluates sum_n g[t_n] exp(i omega t_n).  The rectangular case is a
    Dirichlet kernel; the raised-cosine case is the corresponding sum of
    three Dirichlet kernels.  Periodic in omega with period 2 pi fs.
    """
    omega_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    n = window.n_samples
    ts = 1.0 / window.fs
    if window.kind == "rectangular":
        core = _geometric_sum(omega_arr, n, ts)
    else:
        w1 = 2.0 * np.pi / (n * ts)
        phase = np.exp(1j * np.pi / n)
        core = (
            0.5 * _geometric_sum(omega_arr, n, ts)
            - 0.25 * phase * _geometric_sum(omega_arr + w1, n, ts)
            - 0.25 * np.conj(phase) * _geometric_sum(omega_arr - w1, n, ts)
        )
    start = window.center - (n // 2) * ts
    result = np.exp(1j * omega_arr * start) * core
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return complex(result[0])
    return result


@functools.lru_cache(maxsize=64)
def decay_limits(window: Window, threshold_db: float = 80.0) -> float:
    """Half-width (rad/s) beyond which |DTFT| stays threshold_db below peak.

    Scans outward on a grid of delta_f / 50, then bisects the last
    crossing.  Rectangular windows decay too slowly to reach large
    thresholds within one DTFT period and raise instead.
    """
    if threshold_db < 0:
        raise ConfigurationError("threshold_db must be nonnegative")
    peak = abs(window_dtft(window, 0.0))
    target = peak * 10.0 ** (-threshold_db / 20.0)
    step = 2.0 * np.pi * window.delta_f / 50.0
    nu_max = np.pi * window.fs
    grid = np.arange(0.0, nu_max + step, step)
    mags = np.abs(window_dtft(window, grid))
    above = np.nonzero(mags >= target)[0]
    if above.size == 0 or (above.size == 1 and above[0] == 0):
        return 0.0
    last = above[-1]
    if last >= grid.size - 1 or grid[last] > 0.9 * nu_max:
        raise ConfigurationError(
            f"|DTFT| of the {window.kind} window never stays {threshold_db} dB below "
            "its peak within half a DTFT period; lower threshold_db or supply an "
            "explicit truncation half-width"
        )
    lo, hi = grid[last], grid[last + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if abs(window_dtft(window, mid)) >= target:
            lo = mid
        else:
            hi = mid
    return float(hi)


def _window_indices(recording, window: Window) -> np.ndarray:
    if abs(recording.fs - window.fs) > 1e-9 * window.fs:
        raise ConfigurationError(
            f"window sampled at {window.fs} Hz does not match recording at {recording.fs} Hz"
        )
    pos = (window.sample_times - recording.t_start) * recording.fs
    idx = np.rint(pos).astype(int)
    if np.max(np.abs(pos - idx)) > 1e-6:
        raise ConfigurationError(
            "window sample times do not align with the recording sample grid"
        )
    if idx[0] < 0 or idx[-1] >= recording.n_samples:
        t0, t1 = window.sample_times[0], window.sample_times[-1]
        r0 = recording.t_start
        r1 = recording.t_start + (recording.n_samples - 1) / recording.fs
        raise WindowCoverageError(
            f"window support [{t0:.6f}, {t1:.6f}] s not covered by recording "
            f"[{r0:.6f}, {r1:.6f}] s"
        )
    return idx


def windowed_dft(recording, window: Window, bin_index: int, channel: int = 0) -> complex:
    """Windowed DFT coefficient of one channel at one frequency bin."""
    idx = _window_indices(recording, window)
    data = recording.channels[channel, idx]
    omega = 2.0 * np.pi * window.bin_frequency(bin_index)
    phases = np.exp(1j * omega * window.sample_times)
    return complex(np.sum(data * window.samples * phases))


def extract_observations(recording, window: Window, selection: "BinSelection") -> np.ndarray:
    """Stack windowed DFT coefficients in canonical (mic, bin) row order."""
    idx = _window_indices(recording, window)
    g = window.samples
    times = window.sample_times
    values = np.empty(selection.n_rows, dtype=complex)
    for row, (n, m) in enumerate(selection.rows()):
        omega = 2.0 * np.pi * window.bin_frequency(m)
        values[row] = np.sum(recording.channels[n, idx] * g * np.exp(1j * omega * times))
    return values


def stft_matrix(recording, window: Window, hop: int):
    """Plain short-time spectrum dump: (frame centers, bin frequencies, coefficients)."""
    n = window.n_samples
    if hop < 1:
        raise ConfigurationError("hop must be >= 1 samples")
    g = window.samples
    starts = np.arange(0, recording.n_samples - n + 1, hop)
    frames = np.stack([recording.channels[:, s : s + n] * g for s in starts])
    coeffs = np.fft.fft(frames, axis=-1)
    centers = recording.t_start + (starts + n // 2) / recording.fs
    freqs = np.arange(n) * window.delta_f
    return centers, freqs, coeffs


@dataclass(frozen=True, eq=False)
class BinSelection:
    """Per-microphone sets of DFT bin indices used for the inversion."""

    strategy: str
    m_per_mic: int
    band: tuple[float, float]
    delta_f: float
    bins: tuple[tuple[int, ...], ...]
    seed: int

    def __post_init__(self):
        for omega_n in self.bins:
            if len(omega_n) != self.m_per_mic:
                raise ConfigurationError("every per-mic bin set must have M entries")

    @property
    def n_mics(self) -> int:
        return len(self.bins)

    @property
    def n_rows(self) -> int:
        return self.n_mics * self.m_per_mic

    def frequencies(self, mic: int) -> np.ndarray:
        return np.asarray(self.bins[mic], dtype=float) * self.delta_f

    def rows(self) -> Iterator[tuple[int, int]]:
        """Canonical row order: mics outer, ascending bin index inner."""
        for n, omega_n in enumerate(self.bins):
            for m in omega_n:
                yield n, m

    def row_index(self) -> list[tuple[int, float]]:
        return [(n, m * self.delta_f) for n, m in self.rows()]

    def describe(self) -> dict:
        return {
            "strategy": self.strategy,
            "m_per_mic": self.m_per_mic,
            "band": list(self.band),
            "delta_f": self.delta_f,
            "bins": [list(b) for b in self.bins],
            "seed": self.seed,
        }

    @property
    def hash(self) -> str:
        return content_hash(self.describe())

    @classmethod
    def from_dict(cls, d: dict) -> "BinSelection":
        return cls(
            strategy=d["strategy"],
            m_per_mic=int(d["m_per_mic"]),
            band=tuple(d["band"]),
            delta_f=float(d["delta_f"]),
            bins=tuple(tuple(int(m) for m in b) for b in d["bins"]),
            seed=int(d["seed"]),
        )


def available_bins(band: tuple[float, float], window: Window) -> np.ndarray:
    """All DFT bin indices whose frequency lies inside the band."""
    lo, hi = band
    if lo >= hi:
        raise ConfigurationError(f"empty frequency band {band}")
    df = window.delta_f
    tol = 1e-9
    m_min = int(np.ceil(lo / df - tol))
    m_max = int(np.floor(hi / df + tol))
    if m_max < m_min:
        return np.empty(0, dtype=int)
    return np.arange(m_min, m_max + 1)


def select_bins(
    strategy: str,
    band: tuple[float, float],
    window: Window,
    m_per_mic: int,
    n_mics: int,
    seed: int = 0,
    f0: float | None = None,
) -> BinSelection:
    """Choose observation bins per microphone.

    strategy "single": the one bin closest to f0, identical for all mics.
    strategy "regular": M bins nearest to an equal spacing across the band,
    identical for all mics (exact regularity only when the spacing is a
    multiple of the bin width).
    strategy "random": M bins drawn per mic without replacement from the
    available range, deterministic per (seed, mic).
    """
    if strategy not in ("single", "regular", "random"):
        raise ConfigurationError(f"unknown bin selection strategy {strategy!r}")
    if n_mics < 1 or m_per_mic < 1:
        raise ConfigurationError("need n_mics >= 1 and M >= 1")
    avail = available_bins(band, window)
    if m_per_mic > avail.size:
        raise ConfigurationError(
            f"M = {m_per_mic} bins requested but only {avail.size} DFT bins are "
            f"available in [{band[0]:.6g}, {band[1]:.6g}] Hz at delta_f = "
            f"{window.delta_f:.6g} Hz"
        )

    if strategy == "single":
        if m_per_mic != 1:
            raise ConfigurationError("strategy 'single' requires M = 1")
        if f0 is None:
            raise ConfigurationError("strategy 'single' needs the source frequency f0")
        m_star = int(np.clip(window.bin_of(f0), avail[0], avail[-1]))
        per_mic = (m_star,)
        bins = tuple(per_mic for _ in range(n_mics))
    elif strategy == "regular":
        if m_per_mic == 1:
            targets = np.array([0.5 * (band[0] + band[1])])
        else:
            targets = np.linspace(band[0], band[1], m_per_mic)
        chosen: list[int] = []
        for f in targets:
            m = avail[np.argmin(np.abs(avail * window.delta_f - f))]
            while m in chosen:
                free = np.setdiff1d(avail, chosen)
                m = free[np.argmin(np.abs(free * window.delta_f - f))]
            chosen.append(int(m))
        per_mic = tuple(sorted(chosen))
        bins = tuple(per_mic for _ in range(n_mics))
    else:
        sets = []
        for n in range(n_mics):
            rng = np.random.default_rng([seed, n])
            draw = rng.choice(avail, size=m_per_mic, replace=False)
            sets.append(tuple(sorted(int(m) for m in draw)))
        bins = tuple(sets)

    return BinSelection(
        strategy=strategy,
        m_per_mic=m_per_mic,
        band=(float(band[0]), float(band[1])),
        delta_f=window.delta_f,
        bins=bins,
        seed=seed,
    )

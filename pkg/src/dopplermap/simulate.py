"""Time-domain simulation of a uniformly moving monopole at a microphone array.

The exact retarded-time solution of the pressure wave equation for a
subsonic uniformly moving point source provides the reference data every
frequency-domain quantity is tested against:

    p(x_r, t) = s(tau) / (4 pi R(tau) (1 - M_r(tau))),

where tau is the emission time, R the emission distance and M_r the Mach
component along the emission direction.  With a reflecting ground plane the
field is the sum of the source and its mirror image.  Noise injection
(correlated background from a stationary point source, or per-channel
stabilization noise) is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, DomainError, EvaluationError
from .scenario import Medium, MotionSpec, Scenario, doppler_band
from .serialization import (
    content_hash,
    read_complex_binary,
    read_json,
    write_complex_binary,
    write_json,
)

RECORDING_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SignalSpec:
    """Single-frequency complex-exponential source signal a * exp(-i w0 t)."""

    f0: float
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.f0 <= 0:
            raise ConfigurationError(f"source frequency must be positive, got {self.f0}")

    @property
    def omega0(self) -> float:
        return 2.0 * np.pi * self.f0

    def describe(self) -> dict:
        return {"f0": self.f0, "amplitude": [self.amplitude.real, self.amplitude.imag]}


@dataclass(frozen=True, eq=False)
class Recording:
    """Complex pressure samples for all channels on a common time grid."""

    fs: float
    t_start: float
    channels: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=complex)
        if ch.ndim != 2:
            raise ConfigurationError("channels must be an (N, T) array")
        object.__setattr__(self, "channels", ch)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_samples) / self.fs

    def with_channels(self, channels: np.ndarray, **meta) -> "Recording":
        return Recording(self.fs, self.t_start, channels, {**self.metadata, **meta})


@dataclass(frozen=True)
class NoiseSpec:
    """Correlated background noise radiated by a stationary point source."""

    snr_db: float
    source_position: tuple[float, float, float] = (20.0, 10.0, 1.0)
    band: tuple[float, float] = (0.0, 0.0)
    seed: int = 0


def retarded_time(x_r, source_position, motion: MotionSpec, medium: Medium, t):
    """Emission time tau < t for a receiver at x_r, closed form.

    Solves c (t - tau) = || x_r - x_s(tau) || with x_s(tau) = source
    position advanced by v_s tau along x.  Subsonic motion guarantees a
    unique causal root of the underlying quadratic.
    """
    v = motion.v_s
    c = medium.c
    if abs(v) >= c:
        raise DomainError("retarded time undefined for supersonic source speeds")
    t = np.asarray(t, dtype=float)
    x_r = np.asarray(x_r, dtype=float)
    src = np.asarray(source_position, dtype=float)
    dx = x_r[0] - src[0]
    rho_sq = (x_r[1] - src[1]) ** 2 + (x_r[2] - src[2]) ** 2
    c2v2 = c * c - v * v
    disc = (dx - v * t) ** 2 + rho_sq * (1.0 - (v / c) ** 2)
    return ((c * c * t - v * dx) - c * np.sqrt(disc)) / c2v2


def simulate_pressure(scenario: Scenario, signal: SignalSpec, mic, times):
    """Complex pressure samples of the moving tone at one microphone."""
    times = np.asarray(times, dtype=float)
    total = _monopole(scenario, signal, mic, times, scenario.source_position)
    if scenario.ground.enabled:
        xs, ys, zs = scenario.source_position
        image = (xs, ys, 2.0 * scenario.ground.z_plane - zs)
        total = total + _monopole(scenario, signal, mic, times, image)
    return total


def _monopole(scenario, signal, mic, times, source_position):
    v = scenario.motion.v_s
    c = scenario.medium.c
    tau = retarded_time(mic, source_position, scenario.motion, scenario.medium, times)
    radius = c * (times - tau)
    if np.any(radius < 1e-9):
        bad = float(np.asarray(times).ravel()[np.argmin(radius)])
        raise EvaluationError(f"receiver lies on the source trajectory near t = {bad}")
    mach_r = v * (np.asarray(mic, dtype=float)[0] - (source_position[0] + v * tau)) / (c * radius)
    return signal.amplitude * np.exp(-1j * signal.omega0 * tau) / (
        4.0 * np.pi * radius * np.abs(1.0 - mach_r)
    )


def record_array(scenario: Scenario, signal: SignalSpec, fs: float, t_span) -> Recording:
    """Sample all array channels over t_span = [t0, t1)."""
    _, f_plus = doppler_band(signal.f0, abs(scenario.motion.v_s), scenario.medium)
    if fs <= 2.0 * f_plus:
        raise ConfigurationError(
            f"sampling rate {fs} Hz cannot resolve Doppler-shifted content up to "
            f"{f_plus:.1f} Hz; need fs > {2 * f_plus:.1f} Hz"
        )
    t0, t1 = (float(v) for v in t_span)
    n = int(round((t1 - t0) * fs))
    if n < 1:
        raise ConfigurationError(f"empty time span {t_span}")
    times = t0 + np.arange(n) / fs
    channels = np.empty((scenario.array.n_mics, n), dtype=complex)
    for i, mic in enumerate(scenario.array.positions):
        channels[i] = simulate_pressure(scenario, signal, mic, times)
    meta = {
        "scenario_hash": scenario.hash,
        "signal": signal.describe(),
        "noise": [],
    }
    return Recording(fs=float(fs), t_start=t0, channels=channels, metadata=meta)


def _fractional_delay(x: np.ndarray, shift_samples: float) -> np.ndarray:
    """Delay a sampled signal by a (possibly fractional) number of samples."""
    n = x.size
    freqs = np.fft.fftfreq(n)
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * freqs * shift_samples))


def add_noise(recording: Recording, noise: NoiseSpec) -> Recording:
    """Add bandpass-filtered noise radiated from a stationary point source.

    One seeded master sequence is filtered, then delayed by the propagation
    time to each microphone and scaled by the spherical spreading factor,
    so channels receive correlated copies.  The overall level is set so the
    ratio of the peak signal amplitude on channel 0 to the stationary noise
    RMS equals snr_db.
    """
    if math.isinf(noise.snr_db):
        return recording
    fs = recording.fs
    lo, hi = noise.band
    if not 0.0 < lo < hi < fs / 2.0:
        raise ConfigurationError(f"invalid noise passband {noise.band} for fs = {fs}")

    peak = float(np.max(np.abs(recording.channels[0])))
    if peak == 0.0:
        raise ConfigurationError("cannot set an SNR against an all-zero first channel")

    mic_pos = recording.metadata.get("mic_positions")
    if mic_pos is None:
        raise ConfigurationError(
            "recording carries no microphone positions; build it via record_array "
            "on a Scenario or attach metadata['mic_positions']"
        )
    mic_pos = np.asarray(mic_pos, dtype=float)
    c = float(recording.metadata.get("c", 343.0))
    r3 = np.linalg.norm(mic_pos - np.asarray(noise.source_position, dtype=float), axis=1)
    delays = r3 / c

    guard = 1024
    pad = int(np.ceil(np.max(delays) * fs)) + guard
    n_total = recording.n_samples + pad + guard
    rng = np.random.default_rng(noise.seed)
    master = (rng.standard_normal(n_total) + 1j * rng.standard_normal(n_total)) / np.sqrt(2.0)
    sos = sps.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
    filtered = sps.sosfiltfilt(sos, master.real) + 1j * sps.sosfiltfilt(sos, master.imag)

    raw = np.empty_like(recording.channels)
    for i, (delay, dist) in enumerate(zip(delays, r3)):
        shifted = _fractional_delay(filtered, delay * fs)
        raw[i] = shifted[pad : pad + recording.n_samples] / (4.0 * np.pi * dist)

    rms0 = float(np.sqrt(np.mean(np.abs(raw[0]) ** 2)))
    scale = peak / (rms0 * 10.0 ** (noise.snr_db / 20.0))
    noisy = recording.channels + scale * raw
    entry = {
        "kind": "correlated",
        "snr_db": noise.snr_db,
        "source_position": list(noise.source_position),
        "band": list(noise.band),
        "seed": noise.seed,
        "filter": "butterworth-order4-sosfiltfilt",
    }
    return recording.with_channels(noisy, noise=recording.metadata.get("noise", []) + [entry])


def add_stabilization_noise(recording: Recording, snr_db: float = 80.0, seed: int = 0) -> Recording:
    """Add independent white complex Gaussian noise per channel.

    The per-channel RMS sits snr_db below that channel's peak amplitude; a
    tiny amount (80 dB) keeps the regularization L-curve well shaped.
    """
    if snr_db is None or math.isinf(snr_db):
        return recording
    channels = recording.channels.copy()
    for i in range(recording.n_channels):
        peak = float(np.max(np.abs(channels[i])))
        if peak == 0.0:
            raise ConfigurationError(f"channel {i} is all zero; SNR target undefined")
        rms = peak * 10.0 ** (-snr_db / 20.0)
        rng = np.random.default_rng([seed, i])
        draw = rng.standard_normal(recording.n_samples) + 1j * rng.standard_normal(
            recording.n_samples
        )
        channels[i] += rms / np.sqrt(2.0) * draw
    entry = {"kind": "stabilization", "snr_db": snr_db, "seed": seed}
    return recording.with_channels(channels, noise=recording.metadata.get("noise", []) + [entry])


def record_with_positions(scenario: Scenario, signal: SignalSpec, fs: float, t_span) -> Recording:
    """record_array plus the per-mic metadata that noise injection needs."""
    rec = record_array(scenario, signal, fs, t_span)
    rec.metadata["mic_positions"] = scenario.array.positions.tolist()
    rec.metadata["c"] = scenario.medium.c
    return rec


def save_recording(stem, recording: Recording) -> None:
    """Persist as <stem>.json (metadata) + <stem>.bin (interleaved re/im float64)."""
    header = {
        "format_version": RECORDING_FORMAT_VERSION,
        "fs": recording.fs,
        "t_start": recording.t_start,
        "n_channels": recording.n_channels,
        "n_samples": recording.n_samples,
        "metadata": recording.metadata,
    }
    write_json(f"{stem}.json", header)
    write_complex_binary(f"{stem}.bin", recording.channels)


def load_recording(stem) -> Recording:
    header = read_json(f"{stem}.json")
    if header.get("format_version") != RECORDING_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported recording format {header.get('format_version')}")
    channels = read_complex_binary(
        f"{stem}.bin", (header["n_channels"], header["n_samples"])
    )
    return Recording(
        fs=header["fs"],
        t_start=header["t_start"],
        channels=channels,
        metadata=header.get("metadata", {}),
    )

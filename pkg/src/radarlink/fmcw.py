"""FMCW radar synthesis at a passive uniform linear array.

Complex-baseband model of superimposed automotive chirps: each radar
transmits a periodic linear chirp; the capture at the array applies
per-path delays, carrier-consistent steering phases, and AWGN.  Also
provides the ideal (delta-excited) isolated covariance used as the
training reference, and a binary capture dump for debugging.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .channel import UlaConfig, steering_vector
from .covariance import SpatialCovariance

CAPTURE_MAGIC = b"FMCW"


@dataclass(frozen=True)
class FmcwParams:
    """One radar's chirp: rate, bandwidth, timing/phase offsets, power.

    start_freq_hz is the residual carrier after downconversion (0 for a
    common ideal LO at the band edge).  The chirp period is bandwidth/rate.
    """

    chirp_rate_hz_per_s: float
    bandwidth_hz: float
    start_freq_hz: float = 0.0
    time_offset_s: float = 0.0
    phase_offset_rad: float = 0.0
    power_w: float = 1.0

    def __post_init__(self):
        if self.chirp_rate_hz_per_s <= 0:
            raise ValueError(f"chirp rate must be > 0, got {self.chirp_rate_hz_per_s}")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth_hz}")
        if not 0 <= self.time_offset_s < self.chirp_period_s:
            raise ValueError(
                f"time offset {self.time_offset_s} outside [0, {self.chirp_period_s})"
            )
        if self.power_w <= 0:
            raise ValueError(f"power must be > 0, got {self.power_w}")

    @property
    def chirp_period_s(self) -> float:
        return self.bandwidth_hz / self.chirp_rate_hz_per_s


@dataclass(frozen=True)
class RadarPath:
    """One propagation path from a radar to the array."""

    gain: complex
    delay_s: float
    aoa_rad: float

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError(f"negative path delay {self.delay_s}")


@dataclass(frozen=True)
class RadarPathSet:
    paths: tuple[RadarPath, ...]

    def __post_init__(self):
        if len(self.paths) == 0:
            raise ValueError("a radar needs at least one path")


@dataclass(frozen=True)
class CaptureConfig:
    """Sampling grid of the passive array capture."""

    sample_rate_hz: float
    n_samples: int
    carrier_hz: float = 76e9

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be > 0, got {self.sample_rate_hz}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")


@dataclass(frozen=True)
class RxCapture:
    """Antenna-by-sample capture matrix plus its sampling rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 2 or s.shape[1] < 1:
            raise ValueError(f"samples must be (antennas, I), got {s.shape}")
        if not np.all(np.isfinite(s.view(float))):
            raise ValueError("capture contains non-finite samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def n_antennas(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


def fmcw_sample(p: FmcwParams, t) -> np.ndarray:
    """Baseband chirp value(s) at time t (scalar or array), periodic in T.

    sqrt(P) * exp(j 2 pi (f_r t' + beta t'^2 / 2) + j phi) with
    t' = (t - time_offset) mod chirp_period.
    """
    tp = np.mod(np.asarray(t, dtype=float) - p.time_offset_s, p.chirp_period_s)
    phase = (
        2.0 * np.pi * (p.start_freq_hz * tp + 0.5 * p.chirp_rate_hz_per_s * tp * tp)
        + p.phase_offset_rad
    )
    return np.sqrt(p.power_w) * np.exp(1j * phase)


def element_delays(array: UlaConfig, angle_rad: float, carrier_hz: float) -> np.ndarray:
    """Inter-element propagation delays for a plane wave from angle_rad.

    sin(theta) * n / (2 f_c) for element n under half-wavelength spacing;
    general spacing scales by 2 * spacing_wavelengths.
    """
    n = np.arange(array.n_elements)
    return (
        np.sin(angle_rad) * n * array.spacing_wavelengths / (0.5 * carrier_hz) * 0.5
    )


def synthesize_rx(
    radars: list[tuple[FmcwParams, RadarPathSet]],
    array: UlaConfig,
    capture: CaptureConfig,
    noise_power_w: float = 0.0,
    seed: int = 0,
) -> RxCapture:
    """Superimposed multi-radar reception on the array, plus AWGN.

    Per path: the envelope is the chirp delayed by the common path delay
    and the per-element delay; the carrier enters as the steering phase
    (matched to steering_vector's sign convention so radar and
    communication covariances share a direction convention).  Noise is
    circular complex Gaussian with per-sample variance noise_power_w,
    reproducible from the seed.
    """
    if len(radars) == 0:
        raise ValueError("radar list is empty")
    if noise_power_w < 0:
        raise ValueError(f"negative noise power {noise_power_w}")
    t = np.arange(capture.n_samples) / capture.sample_rate_hz
    y = np.zeros((array.n_elements, capture.n_samples), dtype=complex)
    for params, path_set in radars:
        for path in path_set.paths:
            if path.gain == 0:
                continue
            d_elem = element_delays(array, path.aoa_rad, capture.carrier_hz)
            steer = steering_vector(array, path.aoa_rad)
            # (antennas, samples) evaluation grid of the delayed envelope
            t_eff = t[np.newaxis, :] - path.delay_s - d_elem[:, np.newaxis]
            y += path.gain * steer[:, np.newaxis] * fmcw_sample(params, t_eff)
    if noise_power_w > 0:
        rng = np.random.default_rng(seed)
        scale = np.sqrt(noise_power_w / 2.0)
        y += scale * (
            rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        )
    return RxCapture(samples=y, sample_rate_hz=capture.sample_rate_hz)


def ideal_isolated_covariance(
    paths: RadarPathSet,
    array: UlaConfig,
    capture: CaptureConfig,
) -> SpatialCovariance:
    """Ground-truth covariance of one radar from a delta-excited channel.

    A unit-power impulse propagated along the paths yields one sample per
    delay bin carrying the path's gain and steering vector; paths landing
    in the same bin combine coherently, resolvable paths stay orthogonal.
    """
    n = array.n_elements
    bins: dict[int, np.ndarray] = {}
    for path in paths.paths:
        i = int(round(path.delay_s * capture.sample_rate_hz)) % capture.n_samples
        contrib = path.gain * steering_vector(array, path.aoa_rad)
        if i in bins:
            bins[i] = bins[i] + contrib
        else:
            bins[i] = contrib
    r = np.zeros((n, n), dtype=complex)
    for v in bins.values():
        r += np.outer(v, np.conj(v))
    return SpatialCovariance(r / capture.n_samples)


def write_capture(path, capture: RxCapture) -> None:
    """Dump a capture: magic "FMCW", u32 antennas, u64 samples, f64 rate,
    then row-major interleaved float64 (re, im).  Little-endian."""
    header = struct.pack(
        "<4sIQd",
        CAPTURE_MAGIC,
        capture.n_antennas,
        capture.n_samples,
        capture.sample_rate_hz,
    )
    inter = np.empty((capture.n_antennas, capture.n_samples, 2), dtype="<f8")
    inter[..., 0] = capture.samples.real
    inter[..., 1] = capture.samples.imag
    with open(path, "wb") as f:
        f.write(header)
        f.write(inter.tobytes())


def read_capture(path) -> RxCapture:
    """Read a capture written by write_capture."""
    with open(path, "rb") as f:
        header = f.read(struct.calcsize("<4sIQd"))
        magic, n_ant, n_samp, rate = struct.unpack("<4sIQd", header)
        if magic != CAPTURE_MAGIC:
            raise ValueError(f"bad capture magic {magic!r}")
        raw = np.frombuffer(f.read(), dtype="<f8")
    expected = n_ant * n_samp * 2
    if raw.size != expected:
        raise ValueError(
            f"capture payload has {raw.size} floats, expected {expected}"
        )
    inter = raw.reshape(n_ant, n_samp, 2)
    return RxCapture(
        samples=inter[..., 0] + 1j * inter[..., 1],
        sample_rate_hz=rate,
    )

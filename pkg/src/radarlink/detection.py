"""FMCW mixing filter bank: dechirp, lag correlation, max CFAR, isolation.

Each bank block mixes the capture with a reference chirp at one candidate
rate, evaluates the lag-domain correlator over one chirp period, detects
peaks with a max-CFAR rule, and estimates the isolated spatial covariance
of every detection after a lag correction and lowpass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import czt

from .covariance import SpatialCovariance
from .fmcw import RxCapture
from .numerics import fir_lowpass, lowpass_taps


@dataclass(frozen=True)
class MixingBlockConfig:
    """Reference chirp of one mixing block."""

    chirp_rate_hz_per_s: float
    bandwidth_hz: float

    def __post_init__(self):
        if self.chirp_rate_hz_per_s <= 0:
            raise ValueError(f"chirp rate must be > 0, got {self.chirp_rate_hz_per_s}")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth_hz}")

    @property
    def chirp_period_s(self) -> float:
        return self.bandwidth_hz / self.chirp_rate_hz_per_s

    def n_lags(self, sample_rate_hz: float) -> int:
        return int(round(self.chirp_period_s * sample_rate_hz))


@dataclass(frozen=True)
class BankConfig:
    """Strictly increasing chirp-rate grid of mixing blocks."""

    blocks: tuple[MixingBlockConfig, ...]

    def __post_init__(self):
        if len(self.blocks) == 0:
            raise ValueError("bank needs at least one block")
        rates = [b.chirp_rate_hz_per_s for b in self.blocks]
        if any(r2 <= r1 for r1, r2 in zip(rates, rates[1:])):
            raise ValueError("block chirp rates must be strictly increasing")

    @classmethod
    def uniform(
        cls,
        rate_min_hz_per_s: float,
        rate_max_hz_per_s: float,
        bandwidth_hz: float,
        n_blocks: int = 51,
    ) -> "BankConfig":
        rates = np.linspace(rate_min_hz_per_s, rate_max_hz_per_s, n_blocks)
        return cls(
            blocks=tuple(
                MixingBlockConfig(chirp_rate_hz_per_s=float(r), bandwidth_hz=bandwidth_hz)
                for r in rates
            )
        )

    @property
    def rates(self) -> np.ndarray:
        return np.array([b.chirp_rate_hz_per_s for b in self.blocks])

    def nearest_block(self, chirp_rate_hz_per_s: float) -> int:
        return int(np.argmin(np.abs(self.rates - chirp_rate_hz_per_s)))


@dataclass(frozen=True)
class CorrelatorOutput:
    """Antenna-by-lag correlator matrix over one chirp period."""

    c: np.ndarray
    lag_interval_s: float

    @property
    def n_lags(self) -> int:
        return self.c.shape[1]


@dataclass(frozen=True)
class CfarConfig:
    """Max-CFAR ring geometry and threshold (linear power ratio)."""

    n_guard: int
    n_floor: int
    threshold_factor: float = 10.0

    def __post_init__(self):
        if self.n_guard < 1:
            raise ValueError(f"n_guard must be >= 1, got {self.n_guard}")
        if self.n_floor < 1:
            raise ValueError(f"n_floor must be >= 1, got {self.n_floor}")
        if self.threshold_factor <= 1:
            raise ValueError(
                f"threshold_factor must be > 1, got {self.threshold_factor}"
            )


@dataclass(frozen=True)
class Detection:
    """One CFAR detection with its isolated covariance estimate."""

    block_index: int
    lag_index: int
    peak_power_w: float
    floor_power_w: float
    isolated_covariance: SpatialCovariance


def reference_chirp(block: MixingBlockConfig, t: np.ndarray) -> np.ndarray:
    """Conjugate reference chirp exp(-j pi beta t'^2), periodic in T_mix."""
    tp = np.mod(np.asarray(t, dtype=float), block.chirp_period_s)
    return np.exp(-1j * np.pi * block.chirp_rate_hz_per_s * tp * tp)


def mix(capture: RxCapture, block: MixingBlockConfig) -> RxCapture:
    """Multiply every antenna row by the sampled reference chirp."""
    if block.n_lags(capture.sample_rate_hz) < 2:
        raise ValueError(
            "block chirp period is not representable at the capture sample rate"
        )
    t = np.arange(capture.n_samples) / capture.sample_rate_hz
    ref = reference_chirp(block, t)
    return RxCapture(
        samples=capture.samples * ref[np.newaxis, :],
        sample_rate_hz=capture.sample_rate_hz,
    )


def lag_correction(
    block: MixingBlockConfig, lag: int, sample_rate_hz: float, n_samples: int
) -> np.ndarray:
    """Per-sample correction tone for one lag.

    exp(j 2 pi beta (l T_r) (i T_r) + j pi beta (l T_r)^2): a tone at the
    reference chirp's frequency at the start of lag l, plus the constant
    phase accumulated up to that lag.
    """
    t_r = 1.0 / sample_rate_hz
    beta = block.chirp_rate_hz_per_s
    lag_t = lag * t_r
    i = np.arange(n_samples)
    return np.exp(
        1j * (2.0 * np.pi * beta * lag_t * i * t_r + np.pi * beta * lag_t * lag_t)
    )


def correlate(mixed: RxCapture, block: MixingBlockConfig) -> CorrelatorOutput:
    """Correlator output C[n, l] = sum_i mixed[n, i] * correction[l, i].

    Evaluated for every lag in one chirp period.  The lag sums form a
    uniform grid of complex tones, computed exactly with the chirp-Z
    transform (same values as the direct multiply-accumulate).
    """
    n_lags = block.n_lags(mixed.sample_rate_hz)
    if n_lags < 2:
        raise ValueError(
            "block chirp period is not representable at the capture sample rate"
        )
    t_r = 1.0 / mixed.sample_rate_hz
    beta = block.chirp_rate_hz_per_s
    delta = 2.0 * np.pi * beta * t_r * t_r
    c = czt(mixed.samples, m=n_lags, w=np.exp(1j * delta), a=1.0 + 0j, axis=-1)
    lags = np.arange(n_lags)
    c *= np.exp(1j * np.pi * beta * (lags * t_r) ** 2)[np.newaxis, :]
    return CorrelatorOutput(c=c, lag_interval_s=t_r)


def _ring_max(p: np.ndarray, inner: int, outer: int) -> np.ndarray:
    """Max of p over offsets inner <= |delta| <= outer from each index.

    Indices wrap modulo len(p).
    """
    size = outer - inner + 1
    # filter window at index i covers [i - size//2, i + (size-1)//2]
    w = maximum_filter1d(p, size=size, mode="wrap")
    right = np.roll(w, -(inner + size // 2))
    left = np.roll(w, inner + (size - 1) // 2)
    return np.maximum(left, right)


def cfar_detect(c: CorrelatorOutput, cfg: CfarConfig) -> list[int]:
    """Lags whose antenna-max power beats the guard ring and the floor.

    A lag l is detected iff P_CUT > P_guard and P_CUT > factor * P_floor,
    with P_guard the max over offsets 1..n_guard and P_floor the max over
    offsets n_guard+1..n_guard+n_floor (both sides, wrapping modulo L).
    """
    n_lags = c.n_lags
    if n_lags <= 2 * (cfg.n_guard + cfg.n_floor):
        raise ValueError(
            f"{n_lags} lags cannot fit guard+floor rings of "
            f"{cfg.n_guard}+{cfg.n_floor} cells per side"
        )
    p = np.max(np.abs(c.c) ** 2, axis=0)
    p_guard = _ring_max(p, 1, cfg.n_guard)
    p_floor = _ring_max(p, cfg.n_guard + 1, cfg.n_guard + cfg.n_floor)
    hits = (p > p_guard) & (p > cfg.threshold_factor * p_floor)
    return [int(l) for l in np.nonzero(hits)[0]]


def isolate_covariance(
    mixed: RxCapture,
    lag: int,
    block: MixingBlockConfig,
    lowpass_bw_hz: float,
    lowpass_n_taps: int = 2049,
) -> SpatialCovariance:
    """Covariance of the lag-corrected, lowpass-filtered mixed signal.

    The lag correction parks the detected radar's multipath near DC; the
    lowpass then rejects the other radars' spread-out residual chirps.
    """
    n_lags = block.n_lags(mixed.sample_rate_hz)
    if not 0 <= lag < n_lags:
        raise ValueError(f"lag {lag} outside [0, {n_lags})")
    corr = lag_correction(block, lag, mixed.sample_rate_hz, mixed.n_samples)
    corrected = mixed.samples * corr[np.newaxis, :]
    filtered = fir_lowpass(
        corrected, lowpass_bw_hz, mixed.sample_rate_hz, n_taps=lowpass_n_taps
    )
    return SpatialCovariance.from_samples(filtered)


def lowpass_noise_gain(
    lowpass_bw_hz: float, sample_rate_hz: float, lowpass_n_taps: int = 2049
) -> float:
    """White-noise power gain of the isolation lowpass (sum of tap squares)."""
    taps = lowpass_taps(lowpass_bw_hz, sample_rate_hz, lowpass_n_taps)
    return float(np.sum(taps * taps))


def run_bank(
    capture: RxCapture,
    bank: BankConfig,
    cfar: CfarConfig,
    lowpass_bw_hz: float,
    lowpass_n_taps: int = 2049,
) -> list[Detection]:
    """Full bank sweep: mix, correlate, CFAR, then isolate survivors.

    Adjacent blocks often both respond to one radar whose rate falls
    between their grid points; candidates in adjacent blocks within a
    guard-width lag distance are merged, keeping the higher peak.
    """
    candidates: list[tuple[int, int, float, float]] = []
    mixed_cache: dict[int, RxCapture] = {}
    for b_idx, block in enumerate(bank.blocks):
        mixed = mix(capture, block)
        corr = correlate(mixed, block)
        lags = cfar_detect(corr, cfar)
        if lags:
            mixed_cache[b_idx] = mixed
            p = np.max(np.abs(corr.c) ** 2, axis=0)
            p_floor = _ring_max(p, cfar.n_guard + 1, cfar.n_guard + cfar.n_floor)
            for lag in lags:
                candidates.append((b_idx, lag, float(p[lag]), float(p_floor[lag])))

    kept = _merge_adjacent(candidates, cfar.n_guard)

    detections = []
    for b_idx, lag, peak, floor in kept:
        cov = isolate_covariance(
            mixed_cache[b_idx],
            lag,
            bank.blocks[b_idx],
            lowpass_bw_hz,
            lowpass_n_taps=lowpass_n_taps,
        )
        detections.append(
            Detection(
                block_index=b_idx,
                lag_index=lag,
                peak_power_w=peak,
                floor_power_w=floor,
                isolated_covariance=cov,
            )
        )
    return detections


def _merge_adjacent(
    candidates: list[tuple[int, int, float, float]], lag_window: int
) -> list[tuple[int, int, float, float]]:
    """Drop candidates dominated by a stronger peak in an adjacent block
    at (nearly) the same lag."""
    kept = []
    for cand in candidates:
        b, lag, peak, _ = cand
        dominated = False
        for other in candidates:
            ob, olag, opeak, _ = other
            if abs(ob - b) == 1 and abs(olag - lag) <= lag_window:
                if opeak > peak or (opeak == peak and ob < b):
                    dominated = True
                    break
        if not dominated:
            kept.append(cand)
    return kept


def dump_correlator_csv(path, capture: RxCapture, bank: BankConfig, header_lines=()) -> None:
    """Write per-block lag powers (dB) for correlator-output plots."""
    with open(path, "w", newline="") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(["block_index", "chirp_rate_hz_per_s", "lag", "power_db"])
        for b_idx, block in enumerate(bank.blocks):
            corr = correlate(mix(capture, block), block)
            p = np.max(np.abs(corr.c) ** 2, axis=0)
            p_db = 10.0 * np.log10(np.maximum(p, 1e-300))
            for lag in range(corr.n_lags):
                writer.writerow(
                    [b_idx, f"{block.chirp_rate_hz_per_s:.6e}", lag, f"{p_db[lag]:.4f}"]
                )

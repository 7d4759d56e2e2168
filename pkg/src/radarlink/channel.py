"""Geometric wideband MIMO channel model and communication-band covariance.

Clustered multipath geometry shared between bands: steering vectors for
uniform linear arrays, delay-tap channel matrices under rectangular pulse
shaping, per-subcarrier frequency response, and the subcarrier-averaged
spatial covariance seen at the infrastructure array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import SpatialCovariance


@dataclass(frozen=True)
class UlaConfig:
    """Uniform linear array: element count and spacing in wavelengths."""

    n_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError(f"n_elements must be >= 1, got {self.n_elements}")
        if self.spacing_wavelengths <= 0:
            raise ValueError(
                f"spacing must be > 0, got {self.spacing_wavelengths}"
            )


@dataclass(frozen=True)
class Ray:
    """One path within a cluster, relative to the cluster means."""

    gain: complex
    rel_delay_s: float = 0.0
    rel_aoa_rad: float = 0.0
    rel_aod_rad: float = 0.0


@dataclass(frozen=True)
class PathCluster:
    """Multipath cluster: mean delay/angles plus per-ray offsets."""

    mean_delay_s: float
    mean_aoa_rad: float
    mean_aod_rad: float
    rays: tuple[Ray, ...]

    def __post_init__(self):
        if len(self.rays) == 0:
            raise ValueError("a cluster needs at least one ray")
        if self.mean_delay_s < 0:
            raise ValueError(f"negative cluster delay {self.mean_delay_s}")


@dataclass(frozen=True)
class WidebandChannel:
    """Delay-tap MIMO channel: taps[d] is the (N_rx x N_tx) matrix at lag d."""

    taps: np.ndarray
    tap_interval_s: float

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=complex)
        if t.ndim != 3 or t.shape[0] < 1:
            raise ValueError(f"taps must be (D, N_rx, N_tx), got {t.shape}")
        if not np.all(np.isfinite(t.view(float))):
            raise ValueError("channel taps contain non-finite entries")
        t.setflags(write=False)
        object.__setattr__(self, "taps", t)

    @property
    def n_taps(self) -> int:
        return self.taps.shape[0]


def steering_vector(array: UlaConfig, angle_rad: float) -> np.ndarray:
    """Array response: element n has phase n * 2*pi*spacing*sin(angle)."""
    n = np.arange(array.n_elements)
    return np.exp(
        2j * np.pi * array.spacing_wavelengths * np.sin(angle_rad) * n
    )


def channel_taps(
    clusters: list[PathCluster],
    arrays: tuple[UlaConfig, UlaConfig],
    d_taps: int,
    tap_interval_s: float,
) -> WidebandChannel:
    """Accumulate per-ray rank-1 contributions into delay taps.

    arrays = (receiver array, transmitter array); the tap matrices are
    N_rx x N_tx.  Rectangular pulse shaping: a ray with total delay tau
    lands entirely in the tap d satisfying d*T - tau in [0, T).
    """
    if d_taps < 1:
        raise ValueError(f"d_taps must be >= 1, got {d_taps}")
    rx, tx = arrays
    taps = np.zeros((d_taps, rx.n_elements, tx.n_elements), dtype=complex)
    for c_idx, cluster in enumerate(clusters):
        for r_idx, ray in enumerate(cluster.rays):
            tau = cluster.mean_delay_s + ray.rel_delay_s
            # p(d*T - tau) = 1 exactly when d*T - tau in [0, T)
            d = int(np.ceil(tau / tap_interval_s - 1e-12))
            if d * tap_interval_s - tau >= tap_interval_s:
                d -= 1
            if d >= d_taps:
                raise ValueError(
                    f"ray {r_idx} of cluster {c_idx} has delay {tau:.3e} s "
                    f"beyond the {d_taps}-tap span "
                    f"({d_taps * tap_interval_s:.3e} s)"
                )
            a_rx = steering_vector(rx, cluster.mean_aoa_rad + ray.rel_aoa_rad)
            a_tx = steering_vector(tx, cluster.mean_aod_rad + ray.rel_aod_rad)
            taps[d] += ray.gain * np.outer(a_rx, np.conj(a_tx))
    return WidebandChannel(taps=taps, tap_interval_s=tap_interval_s)


def channel_freq(ch: WidebandChannel, k: int, k_total: int) -> np.ndarray:
    """Channel matrix at subcarrier k: sum_d taps[d] exp(-j 2 pi k d / K)."""
    if not 0 <= k < k_total:
        raise ValueError(f"subcarrier {k} outside [0, {k_total})")
    d = np.arange(ch.n_taps)
    phases = np.exp(-2j * np.pi * k * d / k_total)
    return np.tensordot(phases, ch.taps, axes=1)


def channel_freq_all(ch: WidebandChannel, k_total: int) -> np.ndarray:
    """All subcarrier responses at once, shape (K, N_rx, N_tx)."""
    if ch.n_taps > k_total:
        raise ValueError(
            f"{ch.n_taps} taps do not fit in {k_total} subcarriers"
        )
    return np.fft.fft(ch.taps, n=k_total, axis=0)


def comm_covariance(ch: WidebandChannel, k_total: int) -> SpatialCovariance:
    """Subcarrier-averaged transmit-side covariance (1/(K N_rx)) sum H^H H.

    Uses the tap-domain identity sum_k H[k]^H H[k] = K sum_d H[d]^H H[d]
    (exact for D <= K); the k-domain sum is the test oracle.
    """
    if k_total < 1:
        raise ValueError(f"k_total must be >= 1, got {k_total}")
    if ch.n_taps > k_total:
        raise ValueError(
            f"{ch.n_taps} taps do not fit in {k_total} subcarriers"
        )
    n_rx = ch.taps.shape[1]
    n_tx = ch.taps.shape[2]
    acc = np.zeros((n_tx, n_tx), dtype=complex)
    for d in range(ch.n_taps):
        tap = ch.taps[d]
        if np.any(tap):
            acc += tap.conj().T @ tap
    return SpatialCovariance(acc / n_rx)

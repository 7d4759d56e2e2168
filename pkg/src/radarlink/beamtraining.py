"""Codebooks, assisted search spaces, beam selection, SINR/rate/overhead.

Phase-quantized DFT codebooks, construction of reduced beam search spaces
from predicted covariance features, exhaustive selection over precoder and
combiner pairs, multiuser SINR with the diagonal-baseband assumption, and
the training-overhead accounting that discounts the effective rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import UlaConfig, steering_vector
from .covfeatures import reconstruct_toeplitz


@dataclass(frozen=True)
class Codebook:
    """Unit-norm phase-quantized beams, one per row."""

    beams: np.ndarray
    n_bits: int

    def __post_init__(self):
        b = np.asarray(self.beams, dtype=complex)
        b.setflags(write=False)
        object.__setattr__(self, "beams", b)

    @property
    def n_beams(self) -> int:
        return self.beams.shape[0]

    @property
    def n_elements(self) -> int:
        return self.beams.shape[1]


def build_codebook(n: int, n_bits: int = 2) -> Codebook:
    """DFT-direction codebook with 2^n_bits phase levels.

    Beam i (1-based) points at arcsin((2i - n - 1)/n); each entry keeps
    magnitude 1/sqrt(n) with its phase rounded to the nearest level, so
    every beam has exactly unit norm.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n_bits < 1:
        raise ValueError(f"n_bits must be >= 1, got {n_bits}")
    levels = 2**n_bits
    step = 2.0 * np.pi / levels
    array = UlaConfig(n)
    beams = np.empty((n, n), dtype=complex)
    for i in range(1, n + 1):
        angle = np.arcsin((2.0 * i - n - 1.0) / n)
        a = steering_vector(array, angle)
        quantized = np.round(np.angle(a) / step) * step
        beams[i - 1] = np.exp(1j * quantized) / np.sqrt(n)
    return Codebook(beams=beams, n_bits=n_bits)


SEARCH_SIZES = {"exhaustive": 64, "narrow": 4, "wide": 12}


@dataclass(frozen=True)
class ProtocolConfig:
    """Downlink training-protocol bookkeeping (SS and CSI-RS blocks)."""

    ss_block_symbols: int = 4
    ss_subcarrier_fraction: float = 1.0
    csirs_block_symbols: int = 1
    csirs_subcarrier_fraction: float = 0.25
    csirs_blocks_per_coherence: int = 4
    beams_per_block: int = 4
    n_ue_beams: int = 16
    search_sizes: dict = field(
        default_factory=lambda: dict(SEARCH_SIZES)
    )

    def ss_blocks(self, variant: str) -> int:
        """SS blocks to sweep search_size RSU beams against every UE beam."""
        size = self.search_sizes[variant]
        blocks, rem = divmod(size * self.n_ue_beams, self.beams_per_block)
        if rem:
            raise ValueError(
                f"search size {size} x {self.n_ue_beams} UE beams does not "
                f"pack into blocks of {self.beams_per_block}"
            )
        return blocks


def symbol_duration(k_subcarriers: int, subcarrier_spacing_hz: float, cp_samples: int) -> float:
    """OFDM symbol duration including the cyclic prefix."""
    return (k_subcarriers + cp_samples) / (k_subcarriers * subcarrier_spacing_hz)


def training_time(
    proto: ProtocolConfig,
    variant: str,
    symbol_duration_s: float,
    n_tracked_users: int = 3,
) -> float:
    """Effective training time per coherence interval.

    SS blocks sweep the initial-access search space (every block carries
    beams_per_block beams, already counted in the block total); CSI-RS
    blocks track the connected users on a csirs_subcarrier_fraction of the
    band, hence their subcarrier-averaged weight.
    """
    if variant not in proto.search_sizes:
        raise ValueError(f"unknown protocol variant {variant!r}")
    n_ss = proto.ss_blocks(variant)
    n_csirs = proto.csirs_blocks_per_coherence * n_tracked_users
    symbols = (
        n_ss * proto.ss_block_symbols
        + proto.csirs_subcarrier_fraction * n_csirs * proto.csirs_block_symbols
    )
    return symbol_duration_s * symbols


def effective_rate(
    spectral_efficiency: float,
    t_train_s: float,
    t_coh_s: float,
    subcarrier_spacing_hz: float,
) -> float:
    """Rate after discounting the training share of the coherence interval.

    Zero when training does not fit in one coherence interval.
    """
    if t_coh_s <= 0:
        raise ValueError(f"t_coh must be > 0, got {t_coh_s}")
    if t_train_s >= t_coh_s:
        return 0.0
    return (1.0 - t_train_s / t_coh_s) * subcarrier_spacing_hz * spectral_efficiency


def outage(rates_bps, r_min_bps: float = 100e6) -> float:
    """Fraction of trials whose rate falls below the minimum supported rate."""
    rates = np.asarray(rates_bps, dtype=float)
    if rates.size == 0:
        raise ValueError("outage needs at least one trial")
    return float(np.mean(rates < r_min_bps))


def assisted_search_space(
    predicted, codebook: Codebook, k: int, kind: str | None = None
) -> list[int]:
    """Top-k codebook beams ranked by a predicted covariance feature.

    kind "aps": each beam scored by the larger of its two adjacent DFT
    bins in the predicted APS.  "eigvec": beams scored by |b^H v|^2.
    "covvec": beams scored by the quadratic form b^H T(r) b.  When kind
    is omitted it is inferred from the dtype (real implies aps, complex
    unit norm implies eigvec, other complex implies covvec).  Ties break
    toward the lower beam index.
    """
    if not 1 <= k <= codebook.n_beams:
        raise ValueError(f"k={k} outside [1, {codebook.n_beams}]")
    pred = np.asarray(predicted)
    n = codebook.n_beams
    if kind is None:
        if not np.iscomplexobj(pred):
            kind = "aps"
        elif abs(np.linalg.norm(pred) - 1.0) < 1e-6:
            kind = "eigvec"
        else:
            kind = "covvec"
    if kind == "aps":
        if np.iscomplexobj(pred) or pred.shape != (n,):
            raise ValueError("aps ranking expects a real vector of beam-count length")
        idx = np.arange(n)
        lower = (idx - n // 2) % n
        upper = (idx + 1 - n // 2) % n
        scores = np.maximum(pred[lower], pred[upper])
    elif kind == "eigvec":
        if not np.iscomplexobj(pred):
            raise ValueError("eigvec ranking expects a complex vector")
        scores = np.abs(codebook.beams.conj() @ pred) ** 2
    elif kind == "covvec":
        if not np.iscomplexobj(pred):
            raise ValueError("covvec ranking expects a complex vector")
        t = reconstruct_toeplitz(pred).matrix
        scores = np.real(np.einsum("bi,ij,bj->b", codebook.beams.conj(), t, codebook.beams))
    else:
        raise ValueError(f"unknown feature kind {kind!r}")
    order = np.argsort(-scores, kind="stable")
    return sorted(int(i) for i in order[:k])


@dataclass(frozen=True)
class BeamSelection:
    rsu_index: int
    ue_index: int
    score: float


def pair_scores(
    h_all: np.ndarray,
    codebook_rsu: Codebook,
    codebook_ue: Codebook,
    rsu_space=None,
    ue_space=None,
) -> np.ndarray:
    """Sum-log2(1 + |w^H H f|^2) over subcarriers for every beam pair.

    h_all: (K, N_ue, N_rsu).  Returns (len(ue_space), len(rsu_space)).
    """
    rsu_idx = np.arange(codebook_rsu.n_beams) if rsu_space is None else np.asarray(list(rsu_space))
    ue_idx = np.arange(codebook_ue.n_beams) if ue_space is None else np.asarray(list(ue_space))
    if rsu_idx.size == 0 or ue_idx.size == 0:
        raise ValueError("search spaces must be non-empty")
    f_sub = codebook_rsu.beams[rsu_idx]  # (nf, N_rsu)
    w_sub = codebook_ue.beams[ue_idx]  # (nw, N_ue)
    g = w_sub.conj() @ h_all @ f_sub.T  # (K, nw, nf)
    return np.sum(np.log2(1.0 + np.abs(g) ** 2), axis=0)


def beam_select(
    h_all: np.ndarray,
    codebook_rsu: Codebook,
    codebook_ue: Codebook,
    rsu_space=None,
    ue_space=None,
) -> BeamSelection:
    """Exhaustive argmax over the given beam-pair space.

    Ties break toward the lower UE index, then the lower RSU index.
    """
    rsu_idx = np.arange(codebook_rsu.n_beams) if rsu_space is None else np.asarray(list(rsu_space))
    ue_idx = np.arange(codebook_ue.n_beams) if ue_space is None else np.asarray(list(ue_space))
    scores = pair_scores(h_all, codebook_rsu, codebook_ue, rsu_idx, ue_idx)
    flat = int(np.argmax(scores))
    w_local, f_local = np.unravel_index(flat, scores.shape)
    return BeamSelection(
        rsu_index=int(rsu_idx[f_local]),
        ue_index=int(ue_idx[w_local]),
        score=float(scores[w_local, f_local]),
    )


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def noise_power_w(
    subcarrier_spacing_hz: float,
    thermal_dbm_per_hz: float = -174.0,
    noise_figure_db: float = 10.0,
) -> float:
    """Per-subcarrier noise power from the thermal floor and noise figure."""
    dbm = thermal_dbm_per_hz + noise_figure_db + 10.0 * np.log10(subcarrier_spacing_hz)
    return dbm_to_w(dbm)


def sinr(
    selections: list[tuple[np.ndarray, np.ndarray]],
    channels: list[np.ndarray],
    p_tx_per_subcarrier_w: float,
    p_noise_w: float,
) -> np.ndarray:
    """Per-user per-subcarrier SINR for the selected beam pairs.

    selections[i] = (combiner w_i, precoder f_i); channels[i] is user i's
    (K, N_ue, N_rsu) response.  The interference at user i sums the other
    streams' combiner/precoder pairs applied to user i's channel.
    """
    if len(selections) != len(channels):
        raise ValueError("need one selection per user channel")
    n_users = len(selections)
    k_total = channels[0].shape[0]
    out = np.empty((n_users, k_total))
    for i in range(n_users):
        h = channels[i]
        gains = np.empty((n_users, k_total))
        for l, (w, f) in enumerate(selections):
            gains[l] = np.abs(w.conj() @ h @ f) ** 2
        p_sig = gains[i] * p_tx_per_subcarrier_w
        p_int = (gains.sum(axis=0) - gains[i]) * p_tx_per_subcarrier_w
        out[i] = p_sig / (p_int + p_noise_w)
    return out


def spectral_efficiency(sinr_per_subcarrier: np.ndarray) -> np.ndarray:
    """Subcarrier-summed log2(1 + SINR) per user (bits/s/Hz units of one
    subcarrier spacing)."""
    return np.sum(np.log2(1.0 + np.asarray(sinr_per_subcarrier)), axis=-1)

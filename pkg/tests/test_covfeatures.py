"""Tests for Toeplitz-PSD projection, APS extraction, covariance vectors."""

import numpy as np
import pytest

from radarlink.channel import UlaConfig, steering_vector
from radarlink.covariance import SpatialCovariance
from radarlink.covfeatures import (
    aps_diag,
    aps_from_covariance,
    aps_from_vector,
    cov_vector,
    reconstruct_toeplitz,
    toeplitz_aps_matrices,
    toeplitz_psd_project,
)
from radarlink.numerics import dft_matrix


def toeplitz_average_oracle(x):
    """Independent per-diagonal averaging (loop over entries)."""
    n = x.shape[0]
    h = 0.5 * (x + x.conj().T)
    out = np.zeros_like(h)
    for d in range(-(n - 1), n):
        vals = [h[i, i - d] for i in range(max(0, d), min(n, n + d))]
        mean = np.mean(vals)
        for i in range(max(0, d), min(n, n + d)):
            out[i, i - d] = mean
    return out


def projection_oracle(a, iters=3000):
    """Fine-grained alternating projections run to a tight fixed point."""
    x = toeplitz_average_oracle(a)
    for _ in range(iters):
        vals, vecs = np.linalg.eigh(0.5 * (x + x.conj().T))
        x_psd = (vecs * np.maximum(vals, 0.0)) @ vecs.conj().T
        x_next = toeplitz_average_oracle(x_psd)
        if np.linalg.norm(x_next - x) < 1e-12 * max(np.linalg.norm(a), 1.0):
            return x_next
        x = x_next
    return x


def rank1_cov(n, theta):
    a = steering_vector(UlaConfig(n), theta)
    return SpatialCovariance(np.outer(a, a.conj()))


class TestToeplitzPsdProject:
    def test_fixed_point(self):
        theta = 0.4
        r = rank1_cov(8, theta)
        res = toeplitz_psd_project(r, noise_power_w=0.0)
        assert res.converged
        assert np.max(np.abs(res.cov.matrix - r.matrix)) <= 1e-8

    def test_identity_minus_noise_is_zero(self):
        r = SpatialCovariance(np.eye(6, dtype=complex))
        res = toeplitz_psd_project(r, noise_power_w=1.0)
        assert res.converged
        assert np.allclose(res.cov.matrix, 0.0)

    def test_output_in_both_cones(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        r = SpatialCovariance(a @ a.conj().T)
        res = toeplitz_psd_project(r, noise_power_w=0.5)
        m = res.cov.matrix
        scale = np.linalg.norm(m)
        # Toeplitz: constant along every diagonal
        for d in range(1, 8):
            diag = np.diagonal(m, offset=d)
            assert np.max(np.abs(diag - diag[0])) <= 1e-10 * scale
        assert np.linalg.eigvalsh(m).min() >= -1e-7 * scale

    def test_close_to_long_run_oracle(self):
        rng = np.random.default_rng(1)
        for seed in range(3):
            rng = np.random.default_rng(seed)
            a = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
            r = SpatialCovariance(a @ a.conj().T + 2.0 * np.eye(8))
            sigma = 1.0
            res = toeplitz_psd_project(r, noise_power_w=sigma, tol=1e-10, max_iter=2000)
            target = r.matrix - sigma * np.eye(8)
            oracle = projection_oracle(target)
            d_ours = np.linalg.norm(res.cov.matrix - target)
            d_oracle = np.linalg.norm(oracle - target)
            assert d_ours <= 1.01 * d_oracle + 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        r = SpatialCovariance(a @ a.conj().T)
        tol = 1e-9
        once = toeplitz_psd_project(r, 0.0, tol=tol).cov
        twice = toeplitz_psd_project(once, 0.0, tol=tol).cov
        scale = np.linalg.norm(once.matrix)
        assert np.linalg.norm(twice.matrix - once.matrix) <= 2 * tol * scale


class TestApsFromCovariance:
    def test_identity_flat(self):
        aps = aps_from_covariance(SpatialCovariance(np.eye(8, dtype=complex)))
        assert np.allclose(aps, 1.0)

    def test_dft_column_one_hot(self):
        f = dft_matrix(16)
        k = 5
        r = SpatialCovariance(np.outer(f[:, k], f[:, k].conj()))
        aps = aps_from_covariance(r)
        assert aps[k] == pytest.approx(1.0)
        others = np.delete(aps, k)
        assert np.max(others) <= 1e-12

    def test_off_grid_peak_at_nearest_bin(self):
        n = 32
        rng = np.random.default_rng(3)
        f = dft_matrix(n)
        for _ in range(5):
            theta = float(rng.uniform(-1.2, 1.2))
            r = rank1_cov(n, theta)
            aps = aps_from_covariance(r)
            # brute force: project the steering vector on every DFT bin
            a = steering_vector(UlaConfig(n), theta)
            gains = np.abs(f.conj().T @ a) ** 2
            assert int(np.argmax(aps)) == int(np.argmax(gains))

    def test_trace_conservation(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        r = SpatialCovariance(a @ a.conj().T)
        aps = aps_from_covariance(r)
        assert np.sum(aps) == pytest.approx(r.trace, rel=1e-10)


class TestApsFromVector:
    def test_zero_vector(self):
        assert np.allclose(aps_from_vector(np.zeros(8, dtype=complex)), 0.0)

    def test_dft_column_no_window(self):
        n = 16
        f = dft_matrix(n)
        aps = aps_from_vector(f[:, 3], window=False)
        assert aps[3] == pytest.approx(n)
        assert np.max(np.delete(aps, 3)) <= 1e-12

    def test_windowed_sidelobes(self):
        n = 64
        a = steering_vector(UlaConfig(n), 0.0) / np.sqrt(n)
        aps = aps_from_vector(a)
        peak_bin = int(np.argmax(aps))
        level = 10 * np.log10(np.maximum(aps / aps[peak_bin], 1e-30))
        # outside the mainlobe (a few bins), all sidelobes below -35 dB
        outside = [i for i in range(n) if min(abs(i - peak_bin), n - abs(i - peak_bin)) > 3]
        assert np.all(level[outside] <= -35.0 + 0.5)

    def test_window_does_not_move_single_peak(self):
        n = 32
        rng = np.random.default_rng(5)
        for _ in range(5):
            theta = float(rng.uniform(-1.0, 1.0))
            a = steering_vector(UlaConfig(n), theta)
            r = rank1_cov(n, theta)
            assert int(np.argmax(aps_from_vector(a))) == int(
                np.argmax(aps_from_covariance(r))
            )


class TestCovVector:
    def test_identity(self):
        r = SpatialCovariance(np.eye(5, dtype=complex))
        v = cov_vector(r)
        assert np.allclose(v, [1, 0, 0, 0, 0])

    def test_rank1_structure(self):
        # Toeplitz rank-1 ULA covariance: entries are conjugate phase steps
        theta = 0.3
        n = 6
        a = steering_vector(UlaConfig(n), theta)
        r = SpatialCovariance(np.outer(a, a.conj()))
        v = cov_vector(r)
        phase = 2 * np.pi * 0.5 * np.sin(theta)
        expected = np.exp(1j * phase * np.arange(n))
        np.testing.assert_allclose(v, expected, atol=1e-12)
        assert np.allclose(np.abs(v), 1.0)

    def test_round_trip(self):
        rng = np.random.default_rng(6)
        col = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        col[0] = abs(col[0])
        r = reconstruct_toeplitz(col)
        back = cov_vector(r)
        assert np.max(np.abs(back - col)) <= 1e-12
        again = reconstruct_toeplitz(back)
        assert np.linalg.norm(again.matrix - r.matrix) <= 1e-12

    def test_rejects_non_toeplitz(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        r = SpatialCovariance(a @ a.conj().T)
        with pytest.raises(ValueError, match="Toeplitz"):
            cov_vector(r)


class TestToeplitzApsMatrices:
    def test_matches_explicit_construction(self):
        n = 16
        rng = np.random.default_rng(8)
        j_re, j_im = toeplitz_aps_matrices(n)
        for _ in range(5):
            col = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            col[0] = col[0].real
            direct = aps_diag(reconstruct_toeplitz(col))
            linear = j_re @ col.real + j_im @ col.imag
            np.testing.assert_allclose(linear, direct, atol=1e-10)

import math

import numpy as np
import pytest

from simisac import (
    ChannelSet,
    ScenarioConfig,
    build_channel,
    build_geometry,
    correlation_sqrt,
    path_loss,
    sample_channels,
    spatial_correlation,
)
from simisac.channel import ChannelError, user_distances


class TestPathLoss:
    def test_reference_distance_gives_free_space_gain(self):
        lam = 0.0107
        assert path_loss(1.0, lam, 3.5) == pytest.approx((lam / (4 * math.pi)) ** 2, rel=1e-12)

    def test_reference_gain_at_28ghz(self):
        lam = 2.99792458e8 / 28e9
        assert path_loss(1.0, lam, 3.5) == pytest.approx(7.26e-7, rel=1e-2)

    def test_exponent(self):
        lam = 0.0107
        c0 = (lam / (4 * math.pi)) ** 2
        assert path_loss(10.0, lam, 3.5) == pytest.approx(c0 * 10 ** (-3.5), rel=1e-12)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ChannelError):
            path_loss(0.0, 0.01, 3.5)
        with pytest.raises(ChannelError):
            path_loss(-5.0, 0.01, 3.5)


class TestCorrelation:
    def test_unit_diagonal_and_symmetry(self):
        cfg = ScenarioConfig(m_x=4, m_z=4)
        r = spatial_correlation(build_geometry(cfg), cfg.wavelength)
        assert np.allclose(np.diag(r), 1.0)
        assert np.allclose(r, r.T)

    def test_half_wavelength_neighbors_are_uncorrelated(self):
        cfg = ScenarioConfig(m_x=2, m_z=1)  # one pair at the default pitch
        r = spatial_correlation(build_geometry(cfg), cfg.wavelength)
        assert r[0, 1] == pytest.approx(0.0, abs=1e-15)

    def test_quarter_wavelength_pair(self):
        cfg = ScenarioConfig(m_x=2, m_z=1)
        cfg = cfg.replace(atom_spacing_m=cfg.wavelength / 4)
        r = spatial_correlation(build_geometry(cfg), cfg.wavelength)
        assert r[0, 1] == pytest.approx(2 / math.pi, rel=1e-12)

    def test_psd_and_sqrt_accuracy(self):
        cfg = ScenarioConfig(m_x=5, m_z=5)
        r = spatial_correlation(build_geometry(cfg), cfg.wavelength)
        eig = np.linalg.eigvalsh(r)
        assert eig.min() >= -1e-10 * eig.max()
        s = correlation_sqrt(r)
        assert np.linalg.norm(s @ s - r) <= 1e-10 * np.linalg.norm(r)
        assert np.all(np.linalg.eigvalsh(s) >= -1e-12)

    def test_sqrt_rejects_indefinite_matrix(self):
        with pytest.raises(ChannelError):
            correlation_sqrt(np.array([[1.0, 2.0], [2.0, 1.0]]))


@pytest.fixture()
def small_cfg():
    return ScenarioConfig(m_x=4, m_z=4, num_users=2)


class TestSampling:
    def test_deterministic_given_seed(self, small_cfg):
        layout = build_geometry(small_cfg)
        a = build_channel(small_cfg, layout, np.random.default_rng(123))
        b = build_channel(small_cfg, layout, np.random.default_rng(123))
        assert np.array_equal(a.h_rows, b.h_rows)
        assert np.array_equal(a.upsilon, b.upsilon)

    def test_distances_measured_from_output_layer_center(self, small_cfg):
        d = user_distances(small_cfg)
        center = np.array([0.0, small_cfg.sim_thickness, 0.0])
        for k, pos in enumerate(small_cfg.user_positions):
            assert d[k] == pytest.approx(np.linalg.norm(np.array(pos) - center))

    def test_path_loss_applied_per_user(self, small_cfg):
        layout = build_geometry(small_cfg)
        chan = build_channel(small_cfg, layout, np.random.default_rng(0))
        d = user_distances(small_cfg)
        for k in range(small_cfg.num_users):
            want = path_loss(d[k], small_cfg.wavelength, small_cfg.path_loss_exponent)
            assert chan.upsilon[k] == pytest.approx(want, rel=1e-12)

    def test_empirical_mean_is_zero(self, small_cfg):
        n = 100_000
        m = small_cfg.num_atoms
        rng = np.random.default_rng(7)
        cfg = small_cfg.replace(num_users=1, user_positions=((10.0, 10.0, 10.0),))
        acc = np.zeros(m, dtype=complex)
        s = np.eye(m)
        for _ in range(20):
            batch = np.zeros(m, dtype=complex)
            for _ in range(n // 20):
                batch += sample_channels(cfg, s, rng).h_rows[0]
            acc += batch
        ups = sample_channels(cfg, s, np.random.default_rng(0)).upsilon[0]
        bound = 4.0 * math.sqrt(ups / n)
        assert np.all(np.abs(acc / n) <= bound)

    def test_variance_matches_path_loss_with_identity_correlation(self, small_cfg):
        # Monte-Carlo oracle on the sampler: per-entry variance -> upsilon_k
        n = 100_000
        m = small_cfg.num_atoms
        cfg = small_cfg.replace(num_users=1, user_positions=((10.0, 10.0, 10.0),))
        rng = np.random.default_rng(11)
        re = rng.standard_normal((n, m))
        im = rng.standard_normal((n, m))
        # reference draw with the same generator contract as the sampler
        one = sample_channels(cfg, np.eye(m), np.random.default_rng(3))
        ups = one.upsilon[0]
        var = np.mean(np.abs(np.sqrt(ups) * (re + 1j * im) / np.sqrt(2)) ** 2, axis=0)
        assert np.all(np.abs(var - ups) <= 0.03 * ups)
        # and the sampler itself on a smaller batch
        draws = np.stack(
            [sample_channels(cfg, np.eye(m), rng).h_rows[0] for _ in range(20_000)]
        )
        var2 = np.var(draws, axis=0)
        assert np.all(np.abs(var2 - ups) <= 0.05 * ups)

    def test_empirical_covariance_matches_correlated_model(self, small_cfg):
        n = 100_000
        m = small_cfg.num_atoms
        cfg = small_cfg.replace(num_users=1, user_positions=((10.0, 10.0, 10.0),))
        layout = build_geometry(cfg)
        r = spatial_correlation(layout, cfg.wavelength)
        s = correlation_sqrt(r)
        rng = np.random.default_rng(17)
        cov = np.zeros((m, m), dtype=complex)
        batch = 10_000
        for _ in range(n // batch):
            z = (rng.standard_normal((batch, m)) + 1j * rng.standard_normal((batch, m))) / np.sqrt(2)
            h = z @ s.T
            cov += h.conj().T @ h
        ups = sample_channels(cfg, s, np.random.default_rng(3)).upsilon[0]
        cov = ups * cov / n
        assert np.max(np.abs(cov - ups * r)) <= 0.05 * ups

    def test_sampler_covariance_small_check(self, small_cfg):
        # direct check on sample_channels output with 20k draws, looser bound
        cfg = small_cfg.replace(num_users=1, user_positions=((10.0, 10.0, 10.0),))
        layout = build_geometry(cfg)
        r = spatial_correlation(layout, cfg.wavelength)
        s = correlation_sqrt(r)
        rng = np.random.default_rng(29)
        m = cfg.num_atoms
        cov = np.zeros((m, m), dtype=complex)
        n = 20_000
        ups = None
        for _ in range(n):
            chan = sample_channels(cfg, s, rng)
            hk = np.conj(chan.h_rows[0])  # h_k itself
            cov += np.outer(hk, hk.conj())
            ups = chan.upsilon[0]
        cov /= n
        assert np.max(np.abs(cov - ups * r)) <= 0.08 * ups

    def test_rejects_wrong_sqrt_shape(self, small_cfg):
        with pytest.raises(ChannelError):
            sample_channels(small_cfg, np.eye(3), np.random.default_rng(0))

    def test_from_matrix_validates_power(self):
        with pytest.raises(ChannelError):
            ChannelSet.from_matrix(np.zeros((2, 4), dtype=complex))
        ok = ChannelSet.from_matrix((1 + 1j) * np.ones((2, 4)))
        assert ok.num_users == 2
        assert np.allclose(ok.upsilon, 2.0)

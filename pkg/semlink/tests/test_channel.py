# Third-party
import astropy.units as u
from astropy.tests.helper import quantity_allclose
import numpy as np
import pytest

# Project
from ..channel import (OfdmConfig, PathSet, ChannelSet, steering_vector,
                       max_doppler, sample_paths, assemble_channel,
                       generate_channels, add_awgn)
from ..config import ExperimentConfig
from ..numcore import Tensor, backward, sum as tsum, abs2, DimensionError
from ..utils import RandomStreams


@pytest.fixture
def small_config():
    return ExperimentConfig(N_t=2, N_r=4, N_c=4, L=1, Q=2)


def test_ofdm_numerology():
    ofdm = OfdmConfig(16, 120 * u.kHz, 28 * u.GHz)
    assert quantity_allclose(ofdm.T_s, 1 / (16 * 120e3) * u.s)
    assert ofdm.N_cp == 4
    assert quantity_allclose(ofdm.T_I, 20 * ofdm.T_s)

    with pytest.raises(ValueError):
        OfdmConfig(0)

    with pytest.raises(u.UnitsError):
        OfdmConfig(16, delta_f=120 * u.m)


def test_steering_vector():
    assert np.allclose(steering_vector(0., 4), 0.5)
    assert np.allclose(steering_vector(np.pi / 2, 2),
                       np.array([1., -1.]) / np.sqrt(2))

    rng = np.random.default_rng(0)
    a = steering_vector(rng.uniform(-np.pi, np.pi, (3, 5)), 7)
    assert a.shape == (3, 5, 7)
    assert np.allclose(np.linalg.norm(a, axis=-1), 1.)

    with pytest.raises(ValueError):
        steering_vector(0., 0)


def test_max_doppler():
    f_d = max_doppler(120 * u.km / u.h, 28 * u.GHz)
    assert quantity_allclose(f_d, 3.11 * u.kHz, rtol=1e-2)
    assert max_doppler(0 * u.m / u.s, 28 * u.GHz) == 0 * u.Hz


def test_sample_paths(small_config):
    rng = np.random.default_rng(4)
    paths = sample_paths(small_config, rng)
    assert paths.K == 2
    assert np.all((paths.n_paths >= 3) & (paths.n_paths <= 6))
    assert np.all(paths.gain[~paths.mask] == 0)
    f_dmax = max_doppler(small_config.v_max, small_config.f_c)
    assert np.all(np.abs(paths.f_d) <= f_dmax)
    T_s = small_config.ofdm.T_s
    assert np.all(paths.tau <= small_config.tau_max * T_s)


def test_static_user_has_no_time_variation(small_config):
    config = small_config.replace(v_max=0 * u.km / u.h)
    paths = sample_paths(config, np.random.default_rng(1))
    assert np.all(paths.f_d == 0 * u.Hz)
    H = assemble_channel(paths, config).H
    for q in range(1, config.n_symbols):
        assert np.allclose(H[:, q], H[:, 0], rtol=0, atol=1e-14)


def _single_path(gain, tau=0., f_d=0.):
    return PathSet(gain=[[gain], [gain]], theta_t=[[0.3], [-1.2]],
                   theta_r=[[-0.7], [2.5]], tau=[[tau], [tau]] * u.s,
                   f_d=[[f_d], [f_d]] * u.Hz, n_paths=[1, 1])


def test_single_path_is_rank_one(small_config):
    alpha = 0.8 - 0.6j
    H = assemble_channel(_single_path(alpha), small_config).H
    norms = np.linalg.norm(H, axis=(-2, -1))
    assert np.allclose(norms, np.abs(alpha))
    sv = np.linalg.svd(H, compute_uv=False)
    assert np.all(sv[..., 1:] < 1e-12)


def test_delay_rotates_subcarriers(small_config):
    T_s = small_config.ofdm.T_s.to_value(u.s)
    tau = 2.5 * T_s
    H = assemble_channel(_single_path(1., tau=tau), small_config).H
    ratio = H[0, 0, 1] / H[0, 0, 0]
    expected = np.exp(-2j * np.pi * tau / (small_config.N_c * T_s))
    assert np.allclose(ratio, expected)


def test_matches_scalar_loop(small_config):
    config = small_config
    paths = sample_paths(config, np.random.default_rng(9))
    H = assemble_channel(paths, config).H

    T_s = config.ofdm.T_s.to_value(u.s)
    T_I = config.ofdm.T_I.to_value(u.s)
    tau = paths.tau.to_value(u.s)
    f_d = paths.f_d.to_value(u.Hz)
    for k in range(config.K):
        Lp = paths.n_paths[k]
        for q in range(config.n_symbols):
            for n in range(config.N_c):
                ref = np.zeros((config.N_r, config.N_t), dtype=complex)
                for p in range(Lp):
                    for r in range(config.N_r):
                        for t in range(config.N_t):
                            a_r = np.exp(1j * np.pi * r *
                                         np.sin(paths.theta_r[k, p]))
                            a_t = np.exp(1j * np.pi * t *
                                         np.sin(paths.theta_t[k, p]))
                            ref[r, t] += (
                                paths.gain[k, p] / np.sqrt(Lp) *
                                a_r * np.conj(a_t) /
                                np.sqrt(config.N_r * config.N_t) *
                                np.exp(-2j * np.pi * (n + 1) * tau[k, p] /
                                       (config.N_c * T_s)) *
                                np.exp(2j * np.pi * f_d[k, p] * (q + 1) *
                                       T_I))
                assert np.allclose(H[k, q, n], ref, rtol=0, atol=1e-12)


def test_average_power(small_config):
    channels = generate_channels(small_config, 500, RandomStreams(3))
    power = np.mean(np.sum(np.abs(channels.H)**2, axis=(-2, -1)))
    assert abs(power - 1.) < 0.1


def test_generate_channels_deterministic(small_config, monkeypatch):
    monkeypatch.setenv('SEMLINK_THREADS', '1')
    a = generate_channels(small_config, 6, RandomStreams(7))
    monkeypatch.setenv('SEMLINK_THREADS', '4')
    b = generate_channels(small_config, 6, RandomStreams(7))
    assert np.array_equal(a.H, b.H)
    assert a.H.shape == (6, 2, 3, 4, 4, 2)

    c = generate_channels(small_config, 3, RandomStreams(7), offset=3)
    assert np.array_equal(c.H, a.H[3:])


def test_channel_set_views(small_config):
    channels = generate_channels(small_config, 4, RandomStreams(0))
    assert len(channels) == 4
    assert channels.K == 2
    assert channels.Q == 2
    assert channels.pilot.shape[-4] == 1
    assert channels.data.shape[-4] == 2
    assert channels[1].H.shape == (1, ) + channels.H.shape[1:]
    assert channels[1:3].batch_shape == (2, )

    single = ChannelSet(channels.H[0], L=1)
    with pytest.raises(TypeError):
        len(single)

    with pytest.raises(DimensionError):
        ChannelSet(channels.H[0], L=5)

    stacked = ChannelSet.stack([channels[0], channels[1]])
    assert stacked.batch_shape == (2, 1)


def test_channel_set_roundtrip(small_config, tmp_path):
    channels = generate_channels(small_config, 3, RandomStreams(5))
    path = str(tmp_path / 'channels')
    channels.write(path, small_config)
    loaded = ChannelSet.read(path)
    assert np.array_equal(loaded.H, channels.H)
    assert loaded.L == channels.L
    assert loaded.seed == 5
    assert loaded.noise_var == pytest.approx(small_config.sigma2)


def test_awgn_statistics():
    rng = np.random.default_rng(0)
    signal = np.zeros(200000, dtype=complex)
    noisy = add_awgn(signal, 0.5, rng)
    assert abs(np.mean(np.abs(noisy)**2) - 0.5) < 0.015
    assert abs(np.var(noisy.real) - 0.25) < 0.0075
    assert abs(np.mean(noisy)) < 0.01


def test_awgn_edge_cases():
    rng = np.random.default_rng(0)
    x = np.ones(4) + 1j
    assert add_awgn(x, 0., rng) is x

    with pytest.raises(ValueError):
        add_awgn(x, -1., rng)

    t = Tensor(x, requires_grad=True)
    noisy = add_awgn(t, 1., rng)
    grads = backward(tsum(abs2(noisy)), wrt=[t])
    assert np.allclose(grads[t], 2 * noisy.value)

import numpy as np
import pytest

from loren.channel import (ChannelConfig, ChannelRealization, add_awgn, apply_channel, default_pdp, ebno_to_n0,
                           sample_channel)
from loren.rng import derive_rng


def test_default_pdp_is_normalized():
    cfg = ChannelConfig()
    assert abs(cfg.powers.sum() - 1) < 1e-9
    assert list(cfg.delays) == [0, 1, 2, 4, 8, 16]
    ratios = cfg.powers[1:] / cfg.powers[:-1]
    np.testing.assert_allclose(ratios, np.exp(-0.5))


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(pdp=())
    with pytest.raises(ValueError):
        ChannelConfig(num_rx_antennas=0)
    with pytest.raises(ValueError):
        ChannelConfig(doppler_model="jakes")


def test_from_db():
    cfg = ChannelConfig.from_db([{"delay_samples": 0, "power_db": 0.0}, {"delay_samples": 3, "power_db": 0.0}])
    np.testing.assert_allclose(cfg.powers, [0.5, 0.5])


def test_flat_fading_single_tap(rng):
    cfg = ChannelConfig(num_rx_antennas=3, pdp=((0, 1.0),))
    for _ in range(5):
        H = sample_channel(cfg, rng).freq_response
        mag = np.abs(H)
        assert np.allclose(mag, mag[:, :1, :1])


def test_two_tap_comb(rng):
    F = 128
    cfg = ChannelConfig(num_rx_antennas=1, pdp=((0, 1.0), (F // 2, 1.0)))
    acc = np.zeros(F)
    n = 4000
    for _ in range(n):
        H = sample_channel(cfg, rng, 1, F).freq_response[0, 0]
        # closed form: H[f] = g0 + g1 (-1)^f, so even and odd bins each take one value
        assert np.allclose(H[0::2], H[0]) and np.allclose(H[1::2], H[1])
        acc += np.abs(H) ** 2
    assert np.all(np.abs(acc / n - 1) < 0.08)


def test_power_normalization_monte_carlo():
    rng = derive_rng(99, 0)
    cfg = ChannelConfig(num_rx_antennas=1)
    # 100000 single-subcarrier realizations
    total = 0.0
    n = 100_000
    for chunk in range(10):
        H = sample_channel(ChannelConfig(num_rx_antennas=n // 10, pdp=cfg.pdp), rng, 1, 4).freq_response
        total += np.sum(np.abs(H[:, 0, 1]) ** 2)
    assert 0.99 <= total / n <= 1.01


def test_block_constant_and_correlated(rng):
    H = sample_channel(ChannelConfig(), rng).freq_response
    assert H.shape == (2, 14, 128)
    assert np.array_equal(H[:, 0], H[:, 13])
    Hc = sample_channel(ChannelConfig(doppler_model="per-symbol-correlated", time_correlation=0.9), rng).freq_response
    assert not np.allclose(Hc[:, 0], Hc[:, 13])


def test_apply_channel_cases(rng):
    x = rng.standard_normal((14, 128)) + 1j * rng.standard_normal((14, 128))
    ones = ChannelRealization(np.ones((2, 14, 128), complex))
    assert np.array_equal(apply_channel(x, ones)[1], x)
    y = apply_channel(x, ChannelRealization(np.full((1, 14, 128), 1j)))
    np.testing.assert_allclose(np.abs(y[0]), np.abs(x))
    np.testing.assert_allclose(np.angle(y[0] / x), np.pi / 2)
    h = sample_channel(ChannelConfig(), rng)
    np.testing.assert_array_equal(apply_channel(x, h), h.freq_response * x[None])
    with pytest.raises(ValueError):
        apply_channel(x[:, :5], h)


def test_apply_channel_linear(rng):
    x = rng.standard_normal((14, 128)) + 1j * rng.standard_normal((14, 128))
    h = sample_channel(ChannelConfig(), rng)
    a = 2.5
    np.testing.assert_allclose(apply_channel(a * x, h), a * apply_channel(x, h), rtol=1e-12)


def test_awgn():
    x = np.zeros((1, 1000, 1000), complex)
    assert np.array_equal(add_awgn(x, 0.0, derive_rng(0)), x)
    y = add_awgn(x, 0.3, derive_rng(1))
    assert abs(np.mean(np.abs(y) ** 2) / 0.3 - 1) < 0.01
    assert abs(np.var(y.real) / 0.15 - 1) < 0.01
    assert np.array_equal(add_awgn(x[:, :10], 0.3, derive_rng(5)), add_awgn(x[:, :10], 0.3, derive_rng(5)))
    with pytest.raises(ValueError):
        add_awgn(x, -1.0, derive_rng(0))


class TestEbno:
    def test_rate_half_no_overhead(self):
        assert ebno_to_n0(0.0, 0.5, 4, 1.0) == pytest.approx(0.5)

    def test_ten_db(self):
        assert ebno_to_n0(10.0, 0.5, 4, 1.0) == pytest.approx(0.05)

    def test_pilot_overhead(self):
        assert ebno_to_n0(0.0, 2 / 3, 4, 12 / 14) == pytest.approx(0.4375)

    def test_monotone(self):
        vals = [ebno_to_n0(e, 0.5) for e in np.linspace(-5, 15, 21)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        vals = [ebno_to_n0(3.0, r) for r in (0.3, 0.5, 2 / 3, 0.75)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_errors(self):
        with pytest.raises(ValueError):
            ebno_to_n0(0.0, 0.0)
        with pytest.raises(ValueError):
            ebno_to_n0(0.0, 0.5, 0)


def test_default_pdp_helper():
    assert len(default_pdp()) == 6

import numpy as np
import pytest

from loren.baseline import CsiEstimate, ls_estimate, mrc_demap, perfect_csi
from loren.channel import ChannelConfig, ChannelRealization, add_awgn, apply_channel, sample_channel
from loren.link import Link
from loren.phy import default_pilot_pattern, ldpc_decode_bp, qam16_demap_llr
from loren.rng import derive_rng


@pytest.fixture(scope="module")
def link():
    return Link()


def _tx(link, rng):
    bits = rng.integers(0, 2, link.codeword_length)
    return link.transmit(bits)


def test_perfect_csi_is_exact(link, rng):
    h = sample_channel(ChannelConfig(), rng)
    assert perfect_csi(h).h_hat is h.freq_response


def test_ls_flat_channel_exact(link, rng):
    c = 0.3 - 1.1j
    y = apply_channel(_tx(link, rng), ChannelRealization(np.full((2, 14, 128), c)))
    est = ls_estimate(y, link.pilots)
    np.testing.assert_allclose(est.h_hat, c, atol=1e-12)


def test_ls_exact_at_pilots_two_tap(link, rng):
    h = sample_channel(ChannelConfig(pdp=((0, 1.0), (5, 1.0))), rng)
    y = apply_channel(_tx(link, rng), h)
    est = ls_estimate(y, link.pilots)
    for t in link.pilots.pilot_symbols:
        np.testing.assert_allclose(est.h_hat[:, t], h.freq_response[:, t], atol=1e-12)


def test_ls_interpolates_in_time(link):
    p = default_pilot_pattern(num_subcarriers=4)
    H = np.zeros((1, 14, 4), complex)
    H[0] = np.arange(14)[:, None] + 0j  # linear in time
    x = np.ones((14, 4), complex)
    x[list(p.pilot_symbols)] = p.pilot_values
    est = ls_estimate(H * x, p).h_hat[0, :, 0].real
    np.testing.assert_allclose(est[2:12], np.arange(2, 12))
    np.testing.assert_allclose(est[:2], 2)
    np.testing.assert_allclose(est[12:], 11)


def test_ls_mse_drops_with_noise(link):
    mse = []
    for n0 in (1.0, 0.1, 0.01):
        errs = []
        for i in range(30):
            rng = derive_rng(3, i)
            h = sample_channel(ChannelConfig(), rng)
            y = add_awgn(apply_channel(_tx(link, rng), h), n0, rng)
            errs.append(np.mean(np.abs(ls_estimate(y, link.pilots).h_hat - h.freq_response) ** 2))
        mse.append(np.mean(errs))
    assert mse[0] > mse[1] > mse[2]


def test_ls_needs_pilots():
    p = default_pilot_pattern(pilot_symbols=())
    with pytest.raises(ValueError):
        ls_estimate(np.zeros((1, 14, 128), complex), p)


def test_mrc_single_antenna_unit_channel_is_plain_demap(rng):
    y = rng.standard_normal((1, 14, 128)) + 1j * rng.standard_normal((1, 14, 128))
    llr, dead = mrc_demap(y, CsiEstimate(np.ones((1, 14, 128), complex), "perfect"), 0.2)
    assert np.array_equal(llr, qam16_demap_llr(y[0], 1.0, 0.2))
    assert not dead.any()


def test_mrc_gain_invariance(link, rng):
    h = sample_channel(ChannelConfig(), rng)
    y = add_awgn(apply_channel(_tx(link, rng), h), 0.1, rng)
    a, _ = mrc_demap(y, perfect_csi(h), 0.1)
    b, _ = mrc_demap(2 * y, CsiEstimate(2 * h.freq_response, "perfect"), 0.4)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


def test_mrc_zero_csi_flags(rng):
    h = np.ones((2, 14, 128), complex)
    h[:, 3, 7] = 0
    llr, dead = mrc_demap(np.ones((2, 14, 128), complex), CsiEstimate(h, "ls-interpolated"), 0.5)
    assert dead[3, 7] and dead.sum() == 1
    assert np.all(llr[3, 7] == 0)


def test_perfect_csi_high_snr_decodes(link):
    code = link.code(0.5)
    for i in range(5):
        b = link.generate_block(0.5, 30.0, derive_rng(11, i))
        llr, _ = mrc_demap(b.rx, perfect_csi(b.channel), b.n0, link.pilots.data_mask)
        bits, ok, _ = ldpc_decode_bp(code, llr.ravel())
        assert ok and np.array_equal(bits[:code.k], b.info_bits)

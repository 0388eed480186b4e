"""Gray-mapped QAM-16 and its exact soft demapper."""

import numpy as np
from scipy.special import logsumexp

BITS_PER_SYMBOL = 4
_SCALE = 1.0 / np.sqrt(10.0)


def _pam4(b_sign: np.ndarray, b_mag: np.ndarray) -> np.ndarray:
    # 00 -> +1, 01 -> +3, 10 -> -1, 11 -> -3
    b_sign = np.asarray(b_sign, dtype=np.int64)
    b_mag = np.asarray(b_mag, dtype=np.int64)
    return (1 - 2 * b_sign) * (2 - (1 - 2 * b_mag))


def _build_table() -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(16)
    bits = ((labels[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    points = (_pam4(bits[:, 0], bits[:, 1]) + 1j * _pam4(bits[:, 2], bits[:, 3])) * _SCALE
    return points, bits


CONSTELLATION, LABEL_BITS = _build_table()
"""``CONSTELLATION[l]`` is the point for label ``l``; ``LABEL_BITS[l]`` its 4 bits, MSB first."""


def qam16_map(bits: np.ndarray) -> np.ndarray:
    """Map ``4*S`` bits to ``S`` unit-energy QAM-16 symbols (first two bits on I)."""
    bits = np.asarray(bits).astype(np.int64).ravel()
    if bits.size % BITS_PER_SYMBOL:
        raise ValueError(f"bit count {bits.size} is not divisible by {BITS_PER_SYMBOL}")
    b = bits.reshape(-1, BITS_PER_SYMBOL)
    return (_pam4(b[:, 0], b[:, 1]) + 1j * _pam4(b[:, 2], b[:, 3])) * _SCALE


def qam16_demap_llr(y, h_eff, n0) -> np.ndarray:
    """Exact log-sum-exp LLRs for ``y = h_eff * x + noise``, noise variance ``n0``.

    Inputs broadcast against each other; the output has a trailing axis of 4.
    """
    y, h_eff, n0 = np.broadcast_arrays(np.asarray(y, dtype=complex),
                                       np.asarray(h_eff, dtype=complex),
                                       np.asarray(n0, dtype=float))
    if np.any(n0 <= 0):
        raise ValueError("noise variance n0 must be positive")
    d = y[..., None] - h_eff[..., None] * CONSTELLATION
    metric = -(d.real ** 2 + d.imag ** 2) / n0[..., None]
    llr = np.empty(y.shape + (BITS_PER_SYMBOL,))
    for i in range(BITS_PER_SYMBOL):
        zero = LABEL_BITS[:, i] == 0
        llr[..., i] = logsumexp(metric[..., zero], axis=-1) - logsumexp(metric[..., ~zero], axis=-1)
    return llr

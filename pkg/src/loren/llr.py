"""LLR sign convention shared by every demapper, loss and decoder.

A positive LLR means bit 0 is more likely: ``llr = log P(b=0) - log P(b=1)``.
"""

import numpy as np

POSITIVE_MEANS_ZERO = True


def hard_decision(llr: np.ndarray) -> np.ndarray:
    """Bits from LLRs; ties (llr == 0) resolve to 0."""
    return (np.asarray(llr) < 0).astype(np.uint8)


def bits_to_llr(bits: np.ndarray, magnitude: float) -> np.ndarray:
    """Noiseless LLRs of the given magnitude for known bits."""
    return magnitude * (1.0 - 2.0 * np.asarray(bits, dtype=np.float64))

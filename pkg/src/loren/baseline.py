"""Classical receivers: perfect-CSI and LS-estimated MRC with exact demapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .phy.grid import PilotPattern
from .phy.qam import qam16_demap_llr

PERFECT_CSI = "baseline-perfect-csi"
LS = "baseline-ls"


@dataclass(eq=False)
class CsiEstimate:
    h_hat: np.ndarray  # [num_rx, T, F]
    source: str  # "perfect" | "ls-interpolated"


def perfect_csi(h: ChannelRealization) -> CsiEstimate:
    return CsiEstimate(h.freq_response, "perfect")


def ls_estimate(rx: np.ndarray, pilots: PilotPattern) -> CsiEstimate:
    """LS estimates ``y / p`` on the pilot symbols, linearly interpolated in time.

    Symbols before the first or after the last pilot symbol take the nearest
    pilot estimate.
    """
    ps = list(pilots.pilot_symbols)
    if not ps:
        raise ValueError("LS estimation needs at least one pilot symbol")
    if np.any(pilots.pilot_values == 0):
        raise ValueError("pilot values must be nonzero")
    rx = np.asarray(rx)
    at_pilots = rx[:, ps, :] / pilots.pilot_values  # [A, P, F]
    T = rx.shape[1]
    h_hat = np.empty(rx.shape, dtype=complex)
    for t in range(T):
        j = np.searchsorted(ps, t)
        if j == 0:
            h_hat[:, t] = at_pilots[:, 0]
        elif j == len(ps):
            h_hat[:, t] = at_pilots[:, -1]
        elif ps[j] == t:
            h_hat[:, t] = at_pilots[:, j]
        else:
            w = (t - ps[j - 1]) / (ps[j] - ps[j - 1])
            h_hat[:, t] = (1 - w) * at_pilots[:, j - 1] + w * at_pilots[:, j]
    return CsiEstimate(h_hat, "ls-interpolated")


def mrc_demap(rx: np.ndarray, csi: CsiEstimate, n0: float, data_mask: np.ndarray | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Maximal-ratio combining followed by exact QAM-16 demapping.

    Returns ``(llrs, dead)``: LLRs of shape ``[T, F, 4]`` (or ``[n_data, 4]``
    when ``data_mask`` is given) and a mask of REs whose CSI is all zero,
    whose LLRs are set to 0.
    """
    if n0 <= 0:
        raise ValueError("noise variance n0 must be positive")
    rx = np.asarray(rx)
    h = csi.h_hat
    if data_mask is not None:
        rx, h = rx[:, data_mask], h[:, data_mask]
    z = np.sum(np.conj(h) * rx, axis=0)
    g = np.sum(np.abs(h) ** 2, axis=0)
    dead = g <= 0
    g_safe = np.where(dead, 1.0, g)
    llr = qam16_demap_llr(z, g_safe, g_safe * n0)
    llr[dead] = 0.0
    return llr, dead

"""SIMO tapped-delay-line fading channel, AWGN and Eb/N0 bookkeeping.

The default power-delay profile stands in for a CDL-C channel: six taps with
exponentially decaying power at delays {0, 1, 2, 4, 8, 16} samples.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DELAYS = (0, 1, 2, 4, 8, 16)


def default_pdp() -> list[tuple[int, float]]:
    return [(d, float(np.exp(-l / 2.0))) for l, d in enumerate(DEFAULT_DELAYS)]


@dataclass(frozen=True)
class ChannelConfig:
    """``pdp`` is a list of (delay in samples, linear power); powers are normalized to sum 1."""

    num_rx_antennas: int = 2
    pdp: tuple[tuple[int, float], ...] = field(default_factory=lambda: tuple(default_pdp()))
    doppler_model: str = "block-constant"
    # AR(1) coefficient between consecutive OFDM symbols in the correlated model
    time_correlation: float = 0.99

    def __post_init__(self):
        if self.num_rx_antennas < 1:
            raise ValueError("num_rx_antennas must be >= 1")
        if not self.pdp:
            raise ValueError("power-delay profile is empty")
        delays = [int(d) for d, _ in self.pdp]
        powers = np.array([float(p) for _, p in self.pdp])
        if any(d < 0 for d in delays) or np.any(powers < 0) or powers.sum() <= 0:
            raise ValueError("PDP needs non-negative delays and powers with positive total")
        powers = powers / powers.sum()
        object.__setattr__(self, "pdp", tuple(zip(delays, powers.tolist())))
        if self.doppler_model not in ("block-constant", "per-symbol-correlated"):
            raise ValueError(f"unknown doppler_model {self.doppler_model!r}")
        if not 0.0 <= self.time_correlation <= 1.0:
            raise ValueError("time_correlation must lie in [0, 1]")

    @classmethod
    def from_db(cls, taps: list[dict], **kwargs) -> "ChannelConfig":
        """Build from ``[{delay_samples, power_db}, ...]`` as found in config files."""
        pdp = tuple((int(t["delay_samples"]), 10.0 ** (float(t["power_db"]) / 10.0)) for t in taps)
        return cls(pdp=pdp, **kwargs)

    @property
    def delays(self) -> np.ndarray:
        return np.array([d for d, _ in self.pdp])

    @property
    def powers(self) -> np.ndarray:
        return np.array([p for _, p in self.pdp])

    def digest(self) -> str:
        blob = json.dumps([self.num_rx_antennas, self.pdp, self.doppler_model, self.time_correlation])
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(eq=False)
class ChannelRealization:
    freq_response: np.ndarray  # [num_rx, T, F] complex
    config_hash: str = ""


def sample_channel(config: ChannelConfig, rng: np.random.Generator,
                   num_symbols: int = 14, num_subcarriers: int = 128) -> ChannelRealization:
    """Draw Rayleigh tap gains per antenna and return the frequency response."""
    L = len(config.pdp)
    A = config.num_rx_antennas
    std = np.sqrt(config.powers / 2.0)
    if config.doppler_model == "block-constant":
        g = (rng.standard_normal((A, 1, L)) + 1j * rng.standard_normal((A, 1, L))) * std
        g = np.broadcast_to(g, (A, num_symbols, L))
    else:
        rho = config.time_correlation
        w = (rng.standard_normal((A, num_symbols, L)) + 1j * rng.standard_normal((A, num_symbols, L))) * std
        g = np.empty_like(w)
        g[:, 0] = w[:, 0]
        for t in range(1, num_symbols):
            g[:, t] = rho * g[:, t - 1] + np.sqrt(1.0 - rho * rho) * w[:, t]
    f = np.arange(num_subcarriers)
    steer = np.exp(-2j * np.pi * np.outer(config.delays, f) / num_subcarriers)  # [L, F]
    H = g @ steer
    return ChannelRealization(H, config.digest())


def apply_channel(grid: np.ndarray, h: ChannelRealization) -> np.ndarray:
    """Per-RE multiplicative channel: ``y[a, t, f] = H[a, t, f] * x[t, f]``."""
    x = np.asarray(getattr(grid, "cells", grid))
    H = h.freq_response
    if H.shape[1:] != x.shape:
        raise ValueError(f"channel grid {H.shape[1:]} does not match transmit grid {x.shape}")
    return H * x


def add_awgn(rx: np.ndarray, n0: float, rng: np.random.Generator) -> np.ndarray:
    """Add CN(0, n0) noise to every RE of every antenna."""
    if n0 < 0:
        raise ValueError(f"noise variance must be non-negative, got {n0}")
    if n0 == 0:
        return np.array(rx, dtype=complex)
    noise = rng.standard_normal(rx.shape) + 1j * rng.standard_normal(rx.shape)
    return rx + np.sqrt(n0 / 2.0) * noise


def ebno_to_n0(ebno_db: float, code_rate: float, bits_per_symbol: int = 4,
               data_re_fraction: float = 1.0) -> float:
    """Noise variance for unit-energy symbols at the given Eb/N0 in dB.

    Pilot overhead is charged to the information bits via ``data_re_fraction``.
    """
    if code_rate <= 0 or bits_per_symbol <= 0 or data_re_fraction <= 0:
        raise ValueError("code_rate, bits_per_symbol and data_re_fraction must be positive")
    eb = 1.0 / (code_rate * bits_per_symbol * data_re_fraction)
    return eb / 10.0 ** (ebno_db / 10.0)

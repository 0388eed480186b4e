"""SIMO link: LDPC + QAM-16 + resource grid, fading channel and noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelConfig, ChannelRealization, add_awgn, apply_channel, ebno_to_n0, sample_channel
from .phy.grid import PilotPattern, assemble_grid, default_pilot_pattern
from .phy.ldpc import LdpcCode, build_ldpc, canonical_code_rate, ldpc_encode
from .phy.qam import BITS_PER_SYMBOL, qam16_map


@dataclass(frozen=True)
class LinkConfig:
    num_symbols: int = 14
    num_subcarriers: int = 128
    pilot_symbols: tuple[int, ...] = (2, 11)
    pilot_seed: int = 1
    pilot_sequence: str = "constant"
    ldpc_seed: int = 7
    channel: ChannelConfig = field(default_factory=ChannelConfig)

    @property
    def num_rx(self) -> int:
        return self.channel.num_rx_antennas


@dataclass(eq=False)
class Block:
    """One transport block: a single codeword carried by a single grid."""

    cr: float
    ebno_db: float
    n0: float
    info_bits: np.ndarray
    coded_bits: np.ndarray
    tx_grid: np.ndarray  # [T, F]
    channel: ChannelRealization
    rx: np.ndarray  # [num_rx, T, F]


class Link:
    """Transmitter, channel and noise for a fixed grid and pilot layout."""

    def __init__(self, config: LinkConfig | None = None):
        self.config = config or LinkConfig()
        c = self.config
        self.pilots: PilotPattern = default_pilot_pattern(
            c.num_symbols, c.num_subcarriers, c.pilot_symbols, c.pilot_seed, c.pilot_sequence)

    @property
    def codeword_length(self) -> int:
        return self.pilots.num_data_re * BITS_PER_SYMBOL

    def code(self, cr: float) -> LdpcCode:
        return build_ldpc(self.codeword_length, cr, self.config.ldpc_seed)

    def n0(self, ebno_db: float, cr: float) -> float:
        return ebno_to_n0(ebno_db, float(canonical_code_rate(cr)), BITS_PER_SYMBOL,
                          self.pilots.data_re_fraction)

    def transmit(self, coded_bits: np.ndarray) -> np.ndarray:
        return assemble_grid(qam16_map(coded_bits), self.pilots).cells

    def generate_block(self, cr: float, ebno_db: float, rng: np.random.Generator) -> Block:
        code = self.code(cr)
        info = rng.integers(0, 2, code.k, dtype=np.uint8)
        coded = ldpc_encode(code, info)
        x = self.transmit(coded)
        c = self.config
        h = sample_channel(c.channel, rng, c.num_symbols, c.num_subcarriers)
        n0 = self.n0(ebno_db, cr)
        y = add_awgn(apply_channel(x, h), n0, rng)
        return Block(cr, ebno_db, n0, info, coded, x, h, y)

"""Transmitter chain: LDPC coding, QAM-16 mapping and OFDM resource grids."""

from .grid import PilotPattern, ResourceGrid, assemble_grid, default_pilot_pattern, extract_data
from .ldpc import LdpcCode, build_ldpc, canonical_code_rate, ldpc_decode_bp, ldpc_encode
from .qam import BITS_PER_SYMBOL, CONSTELLATION, qam16_demap_llr, qam16_map

__all__ = [
    "BITS_PER_SYMBOL", "CONSTELLATION", "LdpcCode", "PilotPattern", "ResourceGrid",
    "assemble_grid", "build_ldpc", "canonical_code_rate", "default_pilot_pattern",
    "extract_data", "ldpc_decode_bp", "ldpc_encode", "qam16_demap_llr", "qam16_map",
]

"""OFDM resource grid with full-symbol pilots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_SYMBOLS = 14
NUM_SUBCARRIERS = 128
DEFAULT_PILOT_SYMBOLS = (2, 11)


@dataclass(frozen=True, eq=False)
class PilotPattern:
    """Pilot-carrying OFDM symbols and their known values.

    ``pilot_values[i]`` holds the ``F`` pilots of OFDM symbol ``pilot_symbols[i]``.
    """

    num_symbols: int
    num_subcarriers: int
    pilot_symbols: tuple[int, ...]
    pilot_values: np.ndarray

    def __post_init__(self):
        ps = tuple(sorted(set(int(s) for s in self.pilot_symbols)))
        if any(s < 0 or s >= self.num_symbols for s in ps):
            raise ValueError(f"pilot symbols {ps} outside 0..{self.num_symbols - 1}")
        if self.pilot_values.shape != (len(ps), self.num_subcarriers):
            raise ValueError(f"pilot_values shape {self.pilot_values.shape} does not match "
                             f"{(len(ps), self.num_subcarriers)}")
        object.__setattr__(self, "pilot_symbols", ps)

    @property
    def pilot_mask(self) -> np.ndarray:
        mask = np.zeros((self.num_symbols, self.num_subcarriers), dtype=bool)
        mask[list(self.pilot_symbols), :] = True
        return mask

    @property
    def data_mask(self) -> np.ndarray:
        return ~self.pilot_mask

    @property
    def num_data_re(self) -> int:
        return (self.num_symbols - len(self.pilot_symbols)) * self.num_subcarriers

    @property
    def data_re_fraction(self) -> float:
        return self.num_data_re / (self.num_symbols * self.num_subcarriers)


PILOT_SEQUENCES = ("constant", "random")


def default_pilot_pattern(num_symbols: int = NUM_SYMBOLS, num_subcarriers: int = NUM_SUBCARRIERS,
                          pilot_symbols=DEFAULT_PILOT_SYMBOLS, seed: int = 1,
                          sequence: str = "constant") -> PilotPattern:
    """Unit-energy QPSK pilots.

    ``"constant"`` draws one seeded QPSK point per pilot symbol and repeats it across subcarriers;
    ``"random"`` draws an independent seeded point for every pilot RE.
    """
    if sequence not in PILOT_SEQUENCES:
        raise ValueError(f"pilot sequence must be one of {PILOT_SEQUENCES}, got {sequence!r}")
    rng = np.random.default_rng(seed)
    n = len(set(pilot_symbols))
    width = 1 if sequence == "constant" else num_subcarriers
    re = 1 - 2 * rng.integers(0, 2, (n, width))
    im = 1 - 2 * rng.integers(0, 2, (n, width))
    values = np.broadcast_to((re + 1j * im) / np.sqrt(2.0), (n, num_subcarriers)).copy()
    return PilotPattern(num_symbols, num_subcarriers, tuple(pilot_symbols), values)


@dataclass(eq=False)
class ResourceGrid:
    cells: np.ndarray  # [T, F] complex
    pilot_mask: np.ndarray  # [T, F] bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


def assemble_grid(symbols: np.ndarray, pattern: PilotPattern) -> ResourceGrid:
    """Place data symbols row-major (symbol, then subcarrier) on the data REs."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    if symbols.size != pattern.num_data_re:
        raise ValueError(f"got {symbols.size} symbols for {pattern.num_data_re} data REs")
    mask = pattern.pilot_mask
    cells = np.empty(mask.shape, dtype=complex)
    cells[list(pattern.pilot_symbols), :] = pattern.pilot_values
    cells[~mask] = symbols
    return ResourceGrid(cells, mask)


def extract_data(grid: ResourceGrid | np.ndarray, pattern: PilotPattern | None = None) -> np.ndarray:
    """Data-RE values in assembly order; accepts a grid or a raw ``[..., T, F]`` array."""
    if isinstance(grid, ResourceGrid):
        return grid.cells[~grid.pilot_mask]
    if pattern is None:
        raise ValueError("a pilot pattern is required to extract from a raw array")
    return np.asarray(grid)[..., pattern.data_mask]

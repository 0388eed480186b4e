"""Weight-memory cost model for classical multi-rate receivers versus shared-base adapters.

Storage is counted in bits of on-chip SRAM. Power and area are only estimated when the caller
supplies per-SRAM datasheet numbers; otherwise the report is storage-only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

TABLE_RANKS = (2, 4, 8)
MAX_SRAM_WORDS = 4096
ESTIMATE_LABEL = "estimate, datasheet-dependent"


@dataclass(frozen=True)
class SramSpec:
    """One SRAM macro type and how many of it each layer uses."""

    name: str
    words: int
    bitwidth: int
    count_per_layer: int = 1
    num_layers: int = 1
    access_ns: float = 5.0

    def __post_init__(self):
        if min(self.words, self.bitwidth, self.count_per_layer, self.num_layers) < 1:
            raise ValueError(f"{self.name}: words, bitwidth and counts must be >= 1")
        if self.access_ns <= 0:
            raise ValueError(f"{self.name}: access_ns must be > 0")

    @property
    def bits_per_sram(self) -> int:
        return self.words * self.bitwidth

    @property
    def num_srams(self) -> int:
        return self.count_per_layer * self.num_layers

    @property
    def total_bits(self) -> int:
        return self.bits_per_sram * self.num_srams


@dataclass(frozen=True)
class Datasheet:
    """Per-SRAM figures from a memory compiler; any field may be left unset."""

    read_energy_pj_per_word: float | None = None
    leakage_uw_per_sram: float | None = None
    area_um2_per_bit: float | None = None


@dataclass(frozen=True)
class CostConfig:
    channels: int = 128
    num_res_blocks: int = 4
    kernel: int = 3
    input_channels: int = 3
    bits_per_symbol: int = 4
    num_symbols: int = 14
    num_subcarriers: int = 128
    quant_bits: int = 16
    n_code_rates: int = 3
    adapter_layers: int = 4
    rank: int = 4
    clock_mhz: float = 200.0
    voltage: str = "0.9V"
    subframe_ms: float = 1.0
    access_ns: float = 5.0
    sram_mode: str = "table"
    analytic_fallback: bool = True
    layer_loading: str = "parallel"
    datasheet: Datasheet = field(default_factory=Datasheet)

    def __post_init__(self):
        if self.quant_bits <= 0:
            raise ValueError("quant_bits must be > 0")
        if self.n_code_rates < 1:
            raise ValueError("n_code_rates must be >= 1")
        if self.sram_mode not in ("table", "analytic"):
            raise ValueError(f"sram_mode must be 'table' or 'analytic', got {self.sram_mode!r}")
        if self.layer_loading not in ("parallel", "sequential"):
            raise ValueError(f"layer_loading must be 'parallel' or 'sequential', got {self.layer_loading!r}")
        if self.adapter_layers > 2 * self.num_res_blocks:
            raise ValueError("adapter_layers exceeds the number of residual convolutions")
        if self.access_ns <= 0 or self.subframe_ms <= 0:
            raise ValueError("access_ns and subframe_ms must be > 0")

    @property
    def num_res_convs(self) -> int:
        return 2 * self.num_res_blocks

    @property
    def matches_table(self) -> bool:
        return (self.channels, self.num_res_blocks, self.kernel, self.input_channels, self.bits_per_symbol,
                self.num_symbols, self.num_subcarriers, self.quant_bits) == (128, 4, 3, 3, 4, 14, 128, 16) \
            and self.rank in TABLE_RANKS


@dataclass(frozen=True)
class ParamCounts:
    conv_weights: int  # one residual conv
    conv_bias: int
    conv_in: int
    conv_out: int
    layer_norm_gamma: int  # one layer norm, scale only
    layer_norm_gamma_beta: int
    adapter_per_layer_per_cr: int
    num_res_convs: int
    num_layer_norms: int
    adapter_layers: int
    n_code_rates: int

    @property
    def conv_weight_sets(self) -> int:
        """Residual conv weights stored once per code rate by a classical receiver."""
        return self.conv_weights * self.n_code_rates

    @property
    def adapter_per_layer(self) -> int:
        return self.adapter_per_layer_per_cr * self.n_code_rates

    @property
    def adapter_total(self) -> int:
        return self.adapter_per_layer * self.adapter_layers

    @property
    def base_total(self) -> int:
        return (self.num_res_convs * (self.conv_weights + self.conv_bias) + self.conv_in + self.conv_out
                + self.num_layer_norms * self.layer_norm_gamma_beta)


def count_params(cfg: CostConfig) -> ParamCounts:
    """Parameter counts per layer type for the configured receiver."""
    c, k = cfg.channels, cfg.kernel
    grid = cfg.num_symbols * cfg.num_subcarriers * c
    return ParamCounts(
        conv_weights=k * k * c * c,
        conv_bias=c,
        conv_in=k * k * cfg.input_channels * c,
        conv_out=k * k * c * cfg.bits_per_symbol,
        layer_norm_gamma=grid,
        layer_norm_gamma_beta=2 * grid,
        adapter_per_layer_per_cr=cfg.rank * (c + c),
        num_res_convs=cfg.num_res_convs,
        num_layer_norms=cfg.num_res_convs,
        adapter_layers=cfg.adapter_layers,
        n_code_rates=cfg.n_code_rates,
    )


@dataclass(frozen=True)
class SramInventory:
    mode: str
    base: tuple[SramSpec, ...]
    adapter: SramSpec
    adapter_bits_per_cr: int
    notes: tuple[str, ...] = ()

    @property
    def base_bits(self) -> int:
        return sum(s.total_bits for s in self.base)

    def rows(self) -> list[tuple[str, int, int, int | None]]:
        """(name, words, bitwidth, SRAMs per layer) in table layout."""
        out = [(s.name, s.words, s.bitwidth, s.count_per_layer) for s in self.base]
        count = None if self.mode == "table" else self.adapter.count_per_layer
        out.append((self.adapter.name, self.adapter.words, self.adapter.bitwidth, count))
        return out


def table_inventory(rank: int, n_layers: int = 8, access_ns: float = 5.0) -> SramInventory:
    """The reference inventory for the 128-channel, 4-block receiver."""
    if rank not in TABLE_RANKS:
        raise ValueError(f"table inventory only lists ranks {TABLE_RANKS}, got {rank}")
    base = (
        SramSpec("Convolution", 4096, 144, 4, n_layers, access_ns),
        SramSpec("Convin+Convout", 896, 144, 1, 1, access_ns),
        SramSpec("Layernorm", 4096, 224, 8, n_layers, access_ns),
    )
    words = 384 * rank
    adapter = SramSpec(f"LOREN rank-{rank}-{words}", words, 16, 1, 1, access_ns)
    # the listed adapter SRAM serves three code rates
    return SramInventory("table", base, adapter, adapter.total_bits // 3)


def _analytic_sram(name: str, params: int, quant_bits: int, bitwidth: int, num_layers: int,
                   access_ns: float) -> SramSpec:
    words = math.ceil(params * quant_bits / bitwidth)
    count = math.ceil(words / MAX_SRAM_WORDS)
    return SramSpec(name, math.ceil(words / count), bitwidth, count, num_layers, access_ns)


def analytic_inventory(cfg: CostConfig, counts: ParamCounts | None = None,
                       layer_norm: str = "gamma_beta") -> SramInventory:
    """Inventory derived from parameter counts, using the reference word widths."""
    counts = counts or count_params(cfg)
    q = cfg.quant_bits
    ln = counts.layer_norm_gamma_beta if layer_norm == "gamma_beta" else counts.layer_norm_gamma
    base = (
        _analytic_sram("Convolution", counts.conv_weights, q, 144, counts.num_res_convs, cfg.access_ns),
        _analytic_sram("Convin+Convout", counts.conv_in + counts.conv_out, q, 144, 1, cfg.access_ns),
        _analytic_sram("Layernorm", ln, q, 224, counts.num_layer_norms, cfg.access_ns),
    )
    per_cr = counts.adapter_per_layer_per_cr * counts.adapter_layers
    adapter = _analytic_sram(f"LOREN rank-{cfg.rank}", per_cr * cfg.n_code_rates, q, 16, 1, cfg.access_ns)
    return SramInventory("analytic", base, adapter, per_cr * q)


def map_to_srams(cfg: CostConfig, counts: ParamCounts | None = None) -> SramInventory:
    counts = counts or count_params(cfg)
    if cfg.sram_mode == "table":
        if cfg.matches_table:
            return table_inventory(cfg.rank, cfg.num_res_convs, cfg.access_ns)
        if not cfg.analytic_fallback:
            raise ValueError("dimensions differ from the reference inventory and analytic_fallback is off")
    return analytic_inventory(cfg, counts)


def switch_latency(inventory: SramInventory, access_ns: float, subframe_ms: float = 1.0,
                   layer_loading: str = "parallel") -> tuple[dict[str, float], int]:
    """Per-layer read time in microseconds and how many full reloads fit in one subframe.

    SRAMs within a layer are read concurrently. With ``"parallel"`` loading every layer is read at
    once and the slowest layer sets the budget; ``"sequential"`` reads layers one after another.
    """
    if access_ns <= 0:
        raise ValueError("access_ns must be > 0")
    per_layer = {s.name: s.words * access_ns / 1000.0 for s in inventory.base}
    if layer_loading == "parallel":
        budget_us = max(per_layer.values())
    else:
        budget_us = sum(per_layer[s.name] * s.num_layers for s in inventory.base)
    # integer nanoseconds keep floor() exact
    reads = int(round(subframe_ms * 1e6)) // int(round(budget_us * 1000))
    return per_layer, reads


def classical_bits(inventory: SramInventory, n_code_rates: int) -> int:
    return n_code_rates * inventory.base_bits


def loren_bits(inventory: SramInventory, n_code_rates: int) -> int:
    return inventory.base_bits + n_code_rates * inventory.adapter_bits_per_cr


@dataclass
class CostReport:
    config: CostConfig
    counts: ParamCounts
    inventory: SramInventory
    analytic: SramInventory
    classical_bits: int
    loren_bits: int
    switch_us: dict[str, float]
    reads_per_subframe: int
    estimates: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def savings(self) -> float:
        return 1.0 - self.loren_bits / self.classical_bits

    @property
    def loren_fraction(self) -> float:
        return self.loren_bits / self.classical_bits

    def to_rows(self) -> list[tuple[str, object]]:
        c = self.counts
        rows: list[tuple[str, object]] = [
            ("conv_params_per_layer", c.conv_weights),
            ("conv_bias_per_layer", c.conv_bias),
            ("conv_params_all_rates", c.conv_weight_sets),
            ("conv_in_params", c.conv_in),
            ("conv_out_params", c.conv_out),
            ("layer_norm_params_gamma", c.layer_norm_gamma),
            ("layer_norm_params_gamma_beta", c.layer_norm_gamma_beta),
            ("adapter_params_per_layer_per_cr", c.adapter_per_layer_per_cr),
            ("adapter_params_per_layer", c.adapter_per_layer),
            ("adapter_params_total", c.adapter_total),
        ]
        inventories = (self.inventory,) if self.inventory.mode == "analytic" else (self.inventory, self.analytic)
        for inv in inventories:
            for name, words, width, count in inv.rows():
                rows.append((f"sram_{inv.mode}:{name}", f"{words}x{width}x{count if count else 'N/A'}"))
        rows += [
            ("classical_bits", self.classical_bits),
            ("loren_bits", self.loren_bits),
            ("loren_fraction", round(self.loren_fraction, 6)),
            ("savings_percent", round(100 * self.savings, 3)),
        ]
        rows += [(f"switch_us:{k}", round(v, 6)) for k, v in self.switch_us.items()]
        rows.append(("reads_per_subframe", self.reads_per_subframe))
        rows += [(k, round(v, 6)) for k, v in self.estimates.items()]
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "value"])
        w.writerows(self.to_rows())
        return buf.getvalue()

    def to_text(self) -> str:
        cfg = self.config
        lines = [f"weight-memory cost report ({cfg.clock_mhz:g} MHz @ {cfg.voltage}, "
                 f"{cfg.n_code_rates} code rates, {cfg.adapter_layers} adapter layers, rank {cfg.rank})"]
        lines += [f"  {k}: {v}" for k, v in self.to_rows()]
        if self.estimates:
            lines.append(f"  power/area figures: {ESTIMATE_LABEL}")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"config": asdict(self.config), "rows": dict(self.to_rows()), "notes": list(self.notes)}


def _estimates(inv: SramInventory, cfg: CostConfig, n_cr: int) -> dict[str, float]:
    ds = cfg.datasheet
    out: dict[str, float] = {}
    base_srams = sum(s.num_srams for s in inv.base)
    if ds.area_um2_per_bit is not None:
        out["area_um2_classical"] = classical_bits(inv, n_cr) * ds.area_um2_per_bit
        out["area_um2_loren"] = loren_bits(inv, n_cr) * ds.area_um2_per_bit
    if ds.leakage_uw_per_sram is not None:
        out["leakage_uw_classical"] = n_cr * base_srams * ds.leakage_uw_per_sram
        out["leakage_uw_loren"] = (base_srams + 1) * ds.leakage_uw_per_sram
    if ds.read_energy_pj_per_word is not None:
        # one full weight-set reload versus one adapter reload per code-rate switch
        base_words = sum(s.words * s.num_srams for s in inv.base)
        adapter_words = inv.adapter_bits_per_cr // inv.adapter.bitwidth
        out["switch_energy_pj_classical"] = base_words * ds.read_energy_pj_per_word
        out["switch_energy_pj_loren"] = adapter_words * ds.read_energy_pj_per_word
    return out


def storage_compare(cfg: CostConfig) -> CostReport:
    counts = count_params(cfg)
    inv = map_to_srams(cfg, counts)
    analytic = analytic_inventory(cfg, counts)
    per_layer, reads = switch_latency(inv, cfg.access_ns, cfg.subframe_ms, cfg.layer_loading)
    notes = []
    for t, a in zip(inv.base, analytic.base):
        if t.total_bits != a.total_bits:
            notes.append(f"{t.name}: {inv.mode} {t.total_bits} bits vs analytic {a.total_bits} bits")
    if inv.mode == "table":
        notes.append(f"adapter SRAM: table {inv.adapter.words} words x 16 b vs analytic "
                     f"{counts.adapter_total} parameters ({counts.adapter_total * cfg.quant_bits} bits) "
                     f"for {cfg.n_code_rates} rates x {cfg.adapter_layers} layers")
        notes.append(f"layer norm: gamma-only analytic count {counts.layer_norm_gamma * cfg.quant_bits} bits "
                     f"per layer, gamma+beta {counts.layer_norm_gamma_beta * cfg.quant_bits} bits per layer")
    return CostReport(cfg, counts, inv, analytic, classical_bits(inv, cfg.n_code_rates),
                      loren_bits(inv, cfg.n_code_rates), per_layer, reads,
                      _estimates(inv, cfg, cfg.n_code_rates), notes)

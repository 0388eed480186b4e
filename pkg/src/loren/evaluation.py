"""Monte-Carlo block error rate over Eb/N0 sweeps, comparison tables and SVG plots."""

from __future__ import annotations

import csv
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baseline import LS, PERFECT_CSI, ls_estimate, mrc_demap, perfect_csi
from .link import Block, Link
from .phy.ldpc import cr_milli, ldpc_decode_bp
from .receiver import AdapterRegistry, BaseWeights, build_input_features, forward_base, merged_weights
from .rng import derive_rng

NEURAL_BASE = "neural-base"
LOREN = "loren"
RECEIVER_KINDS = (PERFECT_CSI, LS, NEURAL_BASE, LOREN)
CSV_COLUMNS = ("receiver", "cr", "ebno_db", "blocks", "errors", "bler", "ci_lo", "ci_hi", "seed")
WILSON_Z = 1.959963984540054
CHUNK_BLOCKS = 16


class MissingWeightsError(ValueError):
    """A neural receiver was requested but no weights (or adapters) were supplied."""


@dataclass(frozen=True)
class Stopping:
    min_block_errors: int = 100
    max_blocks: int = 20_000

    def __post_init__(self):
        if self.min_block_errors < 1:
            raise ValueError("min_block_errors must be >= 1")
        if self.max_blocks < self.min_block_errors:
            raise ValueError("max_blocks must be >= min_block_errors")


@dataclass(frozen=True)
class EvalConfig:
    receivers: tuple[str, ...] = RECEIVER_KINDS
    cr_list: tuple[float, ...] = (0.5, 2 / 3, 0.75)
    ebno_points_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    stopping: Stopping = field(default_factory=Stopping)
    seed: int = 0
    confidence: bool = True
    max_decoder_iters: int = 50

    def __post_init__(self):
        unknown = [r for r in self.receivers if r not in RECEIVER_KINDS]
        if unknown:
            raise ValueError(f"unknown receiver kinds {unknown}; expected a subset of {RECEIVER_KINDS}")
        if not self.cr_list or not self.ebno_points_db:
            raise ValueError("cr_list and ebno_points_db must be nonempty")


def wilson_interval(errors: int, blocks: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if blocks <= 0:
        return 0.0, 1.0
    p = errors / blocks
    denom = 1 + z * z / blocks
    centre = (p + z * z / (2 * blocks)) / denom
    half = z * math.sqrt(p * (1 - p) / blocks + z * z / (4 * blocks * blocks)) / denom
    # clamp so the interval always contains the point estimate despite rounding
    return min(max(centre - half, 0.0), p), max(min(centre + half, 1.0), p)


@dataclass(frozen=True)
class BlerPoint:
    receiver: str
    cr: float
    ebno_db: float
    blocks: int
    errors: int
    seed: int

    @property
    def bler(self) -> float:
        return self.errors / self.blocks if self.blocks else 0.0

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.errors, self.blocks)

    def row(self) -> list[str]:
        lo, hi = self.ci
        return [self.receiver, repr(float(self.cr)), repr(float(self.ebno_db)), str(self.blocks), str(self.errors),
                repr(self.bler), repr(lo), repr(hi), str(self.seed)]


# --------------------------------------------------------------------------
# receivers

Receiver = Callable[[Block, Link], np.ndarray]


def _baseline(kind: str) -> Receiver:
    def run(block: Block, link: Link) -> np.ndarray:
        csi = perfect_csi(block.channel) if kind == PERFECT_CSI else ls_estimate(block.rx, link.pilots)
        llr, _ = mrc_demap(block.rx, csi, block.n0, link.pilots.data_mask)
        return llr.ravel()
    return run


def _neural(weights: BaseWeights) -> Receiver:
    def run(block: Block, link: Link) -> np.ndarray:
        feats = build_input_features(block.rx, block.n0, weights.config.num_rx)
        return forward_base(feats, weights).data[link.pilots.data_mask].ravel()
    return run


def make_receivers(kinds: Sequence[str], cr_list: Sequence[float], weights: BaseWeights | None = None,
                   registry: AdapterRegistry | None = None) -> dict[tuple[str, int], Receiver]:
    """Receiver callables keyed by ``(kind, cr_milli)``.

    Adapters are merged into the base kernels once per code rate, so every neural receiver runs the
    plain base forward pass.
    """
    out: dict[tuple[str, int], Receiver] = {}
    for kind in kinds:
        if kind not in RECEIVER_KINDS:
            raise ValueError(f"unknown receiver kind {kind!r}")
        if kind in (NEURAL_BASE, LOREN) and weights is None:
            raise MissingWeightsError(f"receiver {kind!r} needs base weights")
        if kind == LOREN and registry is None:
            raise MissingWeightsError("receiver 'loren' needs an adapter registry")
        for cr in cr_list:
            key = (kind, cr_milli(cr))
            if kind in (PERFECT_CSI, LS):
                out[key] = _baseline(kind)
            elif kind == NEURAL_BASE:
                out[key] = _neural(weights)
            else:
                registry.switch_cr(cr)
                out[key] = _neural(merged_weights(weights, registry))
    return out


# --------------------------------------------------------------------------
# block loop

def block_rng(seed: int, cr: float, ebno_db: float, index: int) -> np.random.Generator:
    """Generator for one block; identical for every receiver (paired evaluation)."""
    return derive_rng(seed, cr_milli(cr), ebno_db, index)


def block_error(receiver: Receiver, link: Link, cr: float, ebno_db: float, seed: int, index: int,
                max_iters: int = 50) -> bool:
    block = link.generate_block(cr, ebno_db, block_rng(seed, cr, ebno_db, index))
    code = link.code(cr)
    bits, _, _ = ldpc_decode_bp(code, receiver(block, link), max_iters)
    return not np.array_equal(bits[:code.k], block.info_bits)


_WORKER: dict = {}


def _run_chunk(args) -> list[bool]:
    kind, cr, ebno_db, seed, start, stop, max_iters = args
    receiver = _WORKER["receivers"][(kind, cr_milli(cr))]
    return [block_error(receiver, _WORKER["link"], cr, ebno_db, seed, i, max_iters) for i in range(start, stop)]


class Evaluator:
    """Runs BLER points for a fixed link and receiver set, optionally across worker processes.

    Blocks are evaluated in fixed-size chunks and the stopping rule is applied to the outcomes in
    block-index order, so results do not depend on the number of workers.
    """

    def __init__(self, link: Link, receivers: dict[tuple[str, int], Receiver], workers: int = 1,
                 max_decoder_iters: int = 50):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.link = link
        self.receivers = receivers
        self.workers = workers
        self.max_decoder_iters = max_decoder_iters
        self._pool: ProcessPoolExecutor | None = None

    def __enter__(self):
        _WORKER.update(link=self.link, receivers=self.receivers)
        for _, milli in self.receivers:
            self.link.code(milli / 1000)  # build before forking so workers share the cache
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(self.workers, mp_context=multiprocessing.get_context("fork"))
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
        _WORKER.clear()

    def _chunks(self, jobs):
        if self._pool is None:
            return [_run_chunk(j) for j in jobs]
        return list(self._pool.map(_run_chunk, jobs))

    def run_point(self, kind: str, cr: float, ebno_db: float, stopping: Stopping, seed: int) -> BlerPoint:
        if (kind, cr_milli(cr)) not in self.receivers:
            raise KeyError(f"no receiver {kind!r} prepared for code rate {cr}")
        outcomes: list[bool] = []
        errors = 0
        while errors < stopping.min_block_errors and len(outcomes) < stopping.max_blocks:
            jobs = []
            start = len(outcomes)
            for _ in range(self.workers):
                if start >= stopping.max_blocks:
                    break
                stop = min(start + CHUNK_BLOCKS, stopping.max_blocks)
                jobs.append((kind, cr, ebno_db, seed, start, stop, self.max_decoder_iters))
                start = stop
            for chunk in self._chunks(jobs):
                outcomes.extend(chunk)
            errors = sum(outcomes)
        blocks = len(outcomes)
        if errors >= stopping.min_block_errors:
            blocks = int(np.flatnonzero(np.cumsum(outcomes) == stopping.min_block_errors)[0]) + 1
            errors = stopping.min_block_errors
        return BlerPoint(kind, cr, ebno_db, blocks, errors, seed)


def run_bler_point(kind: str, cr: float, ebno_db: float, stopping: Stopping, seed: int, link: Link | None = None,
                   weights: BaseWeights | None = None, registry: AdapterRegistry | None = None,
                   workers: int = 1, max_decoder_iters: int = 50) -> BlerPoint:
    link = link or Link()
    receivers = make_receivers([kind], [cr], weights, registry)
    with Evaluator(link, receivers, workers, max_decoder_iters) as ev:
        return ev.run_point(kind, cr, ebno_db, stopping, seed)


def sweep(cfg: EvalConfig, link: Link | None = None, weights: BaseWeights | None = None,
          registry: AdapterRegistry | None = None, workers: int = 1, csv_path=None,
          progress: Callable[[BlerPoint], None] | None = None) -> list[BlerPoint]:
    """BLER for every receiver x code rate x Eb/N0 point; optionally written to ``csv_path``."""
    link = link or Link()
    receivers = make_receivers(cfg.receivers, cfg.cr_list, weights, registry)
    points = []
    with Evaluator(link, receivers, workers, cfg.max_decoder_iters) as ev:
        for kind in cfg.receivers:
            for cr in cfg.cr_list:
                for ebno in cfg.ebno_points_db:
                    p = ev.run_point(kind, cr, ebno, cfg.stopping, cfg.seed)
                    points.append(p)
                    if progress:
                        progress(p)
    if csv_path is not None:
        write_csv(csv_path, points)
    return points


def write_csv(path, points: Sequence[BlerPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow(p.row())


def read_csv(path) -> list[BlerPoint]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: expected columns {CSV_COLUMNS}, found {reader.fieldnames}")
        return [BlerPoint(r["receiver"], float(r["cr"]), float(r["ebno_db"]), int(r["blocks"]), int(r["errors"]),
                          int(r["seed"])) for r in reader]


# --------------------------------------------------------------------------
# analysis

def curves(points: Sequence[BlerPoint]) -> dict[tuple[str, int], list[BlerPoint]]:
    """Points grouped by ``(receiver, cr_milli)`` and sorted by Eb/N0."""
    out: dict[tuple[str, int], list[BlerPoint]] = {}
    for p in points:
        out.setdefault((p.receiver, cr_milli(p.cr)), []).append(p)
    return {k: sorted(v, key=lambda p: p.ebno_db) for k, v in out.items()}


def intervals_overlap(a: BlerPoint, b: BlerPoint) -> bool:
    (alo, ahi), (blo, bhi) = a.ci, b.ci
    return alo <= bhi and blo <= ahi


def monotone_violations(curve: Sequence[BlerPoint]) -> list[tuple[BlerPoint, BlerPoint]]:
    """Consecutive pairs where BLER rises with Eb/N0 and the Wilson intervals do not overlap."""
    curve = sorted(curve, key=lambda p: p.ebno_db)
    return [(a, b) for a, b in zip(curve, curve[1:]) if b.bler > a.bler and not intervals_overlap(a, b)]


@dataclass(frozen=True)
class Comparison:
    cr: float
    ebno_db: float
    ranking: tuple[str, ...]
    outcomes: dict[tuple[str, str], str]  # "better" | "worse" | "tie", first vs second receiver
    significant: dict[tuple[str, str], bool]
    best_or_tied: tuple[str, ...]
    loren_le_ls: bool | None


def _compare(a: BlerPoint, b: BlerPoint) -> str:
    if a.bler < b.bler:
        return "better"
    if a.bler > b.bler:
        return "worse"
    return "tie"


def compare_report(points: Sequence[BlerPoint]) -> list[Comparison]:
    """Per (cr, Eb/N0) ranking of receivers.

    A receiver is "best or tied" when no other receiver beats it with non-overlapping intervals.
    """
    grouped = curves(points)
    grids = {k: tuple(p.ebno_db for p in v) for k, v in grouped.items()}
    by_cr: dict[int, set] = {}
    for (kind, milli), g in grids.items():
        by_cr.setdefault(milli, set()).add(g)
    for milli, gs in by_cr.items():
        if len(gs) > 1:
            raise ValueError(f"receivers use different Eb/N0 grids at code rate {milli / 1000}: {sorted(gs)}")
    cells: dict[tuple[int, float], dict[str, BlerPoint]] = {}
    for (kind, milli), curve in grouped.items():
        for p in curve:
            cells.setdefault((milli, p.ebno_db), {})[kind] = p
    report = []
    for (milli, ebno), pts in sorted(cells.items()):
        kinds = sorted(pts, key=lambda k: (pts[k].bler, RECEIVER_KINDS.index(k) if k in RECEIVER_KINDS else 99))
        outcomes, significant = {}, {}
        for a, b in combinations(kinds, 2):
            outcomes[(a, b)] = _compare(pts[a], pts[b])
            significant[(a, b)] = outcomes[(a, b)] != "tie" and not intervals_overlap(pts[a], pts[b])
        best = tuple(k for k in kinds
                     if not any(pts[o].bler < pts[k].bler and not intervals_overlap(pts[o], pts[k])
                                for o in kinds if o != k))
        loren_ls = pts[LOREN].bler <= pts[LS].bler if LOREN in pts and LS in pts else None
        report.append(Comparison(next(iter(pts.values())).cr, ebno, tuple(kinds), outcomes, significant,
                                 best, loren_ls))
    return report


def format_report(report: Sequence[Comparison]) -> str:
    lines = ["cr,ebno_db,ranking,best_or_tied,loren_le_ls"]
    for c in report:
        flag = "" if c.loren_le_ls is None else str(c.loren_le_ls).lower()
        lines.append(f"{c.cr:.4g},{c.ebno_db:g},{' < '.join(c.ranking)},{' '.join(c.best_or_tied)},{flag}")
    return "\n".join(lines) + "\n"


def paired_wins(points: Sequence[BlerPoint], challenger: str, reference: str, cr: float,
                bler_range: tuple[float, float] = (0.01, 0.99)) -> tuple[int, int]:
    """``(wins, total)`` of ``challenger`` over ``reference`` on the mid-SNR points of one code rate.

    Mid-SNR points are those where the reference BLER lies inside ``bler_range``.
    """
    g = curves(points)
    ref = {p.ebno_db: p for p in g[(reference, cr_milli(cr))]}
    ch = {p.ebno_db: p for p in g[(challenger, cr_milli(cr))]}
    lo, hi = bler_range
    mid = [e for e, p in ref.items() if lo <= p.bler <= hi and e in ch]
    return sum(ch[e].bler < ref[e].bler for e in mid), len(mid)


# --------------------------------------------------------------------------
# plots

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "loren"
    plt.rcParams["svg.fonttype"] = "path"
    return plt


def plot_bler(points: Sequence[BlerPoint], out_dir) -> list[Path]:
    """One log-scale BLER-vs-Eb/N0 SVG per code rate."""
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grouped = curves(points)
    written = []
    for milli in sorted({m for _, m in grouped}):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for (kind, m), curve in sorted(grouped.items()):
            if m != milli:
                continue
            x = [p.ebno_db for p in curve]
            # zero-error points have no place on a log axis; draw them at the interval's upper bound
            y = [p.bler if p.errors else p.ci[1] for p in curve]
            ax.semilogy(x, y, marker="o", label=kind)
        ax.set_xlabel("Eb/N0 [dB]")
        ax.set_ylabel("BLER")
        ax.set_title(f"code rate {milli / 1000:.3g}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        path = out_dir / f"bler_cr{milli}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


def plot_loss(iterations: Sequence[int], losses: Sequence[float], path, window: int = 50) -> Path:
    """Training loss per iteration with a trailing moving average."""
    plt = _pyplot()
    path = Path(path)
    loss = np.asarray(losses, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iterations, loss, alpha=0.3, label="loss")
    if len(loss) >= window:
        smooth = np.convolve(loss, np.ones(window) / window, mode="valid")
        ax.plot(list(iterations)[window - 1:], smooth, label=f"{window}-iteration mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("BCE loss")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path

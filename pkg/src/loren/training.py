"""Base-network training with randomized code rate, and per-code-rate adapter training.

Every iteration draws its code rate, Eb/N0 and block data from a generator
derived from ``(seed, phase, iteration, item)``, so a run restored from a
checkpoint continues exactly as if it had never stopped.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .link import Link
from .phy.ldpc import cr_milli
from .receiver import (AdapterRegistry, BaseWeights, ModelConfig, build_input_features, forward_base,
                       forward_loren, load_weights, save_weights)
from .rng import derive_rng
from .tensor import Parameter, Tape, Tensor, as_tensor, backward, record, select_cells

log = logging.getLogger(__name__)

PHASE_INIT, PHASE_BASE, PHASE_ADAPTER_INIT, PHASE_ADAPTER, PHASE_HELD_OUT = range(5)
_LOG_CLAMP = 1e-12


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"optimizer kind must be 'adam' or 'sgd', got {self.kind!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 1
    ebno_range_db: tuple[float, float] = (-2.0, 12.0)
    cr_list: tuple[float, ...] = (0.5, 2 / 3, 0.75)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ebno_range_db", tuple(float(v) for v in self.ebno_range_db))
        object.__setattr__(self, "cr_list", tuple(float(v) for v in self.cr_list))
        lo, hi = self.ebno_range_db
        if not lo < hi:
            raise ValueError(f"ebno_range_db needs lo < hi, got {self.ebno_range_db}")
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if not self.cr_list:
            raise ValueError("cr_list must not be empty")


@dataclass
class TrainLog:
    iteration: list[int] = field(default_factory=list)
    cr: list[float] = field(default_factory=list)
    ebno_db: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def append(self, it: int, cr: float, ebno_db: float, loss: float) -> None:
        self.iteration.append(it)
        self.cr.append(cr)
        self.ebno_db.append(ebno_db)
        self.loss.append(loss)

    def per_cr_mean(self, last: int | None = None) -> dict[int, float]:
        """Mean loss per code rate (keyed by cr_milli), optionally over the last entries only."""
        sl = slice(-last, None) if last else slice(None)
        out: dict[int, list[float]] = {}
        for cr, l in zip(self.cr[sl], self.loss[sl]):
            out.setdefault(cr_milli(cr), []).append(l)
        return {k: float(np.mean(v)) for k, v in sorted(out.items())}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "cr", "ebno_db", "loss"])
            for row in zip(self.iteration, self.cr, self.ebno_db, self.loss):
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])

    @classmethod
    def read_csv(cls, path) -> "TrainLog":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(int(row["iteration"]), float(row["cr"]), float(row["ebno_db"]), float(row["loss"]))
        return out


# --------------------------------------------------------------------------
# loss

def bce_llr_loss(llrs: Tensor, coded_bits: np.ndarray) -> Tensor:
    """Binary cross-entropy between bits and LLRs (positive LLR means bit 0).

    ``loss = -mean(b log s(-l) + (1 - b) log s(l))`` with ``s`` the logistic
    function and log arguments clamped at 1e-12.
    """
    llrs = as_tensor(llrs)
    b = np.asarray(coded_bits, dtype=np.float64).ravel()
    if llrs.data.size != b.size:
        raise ValueError(f"{llrs.data.size} LLRs for {b.size} coded bits")
    l = llrs.data.reshape(-1)
    s = 1.0 / (1.0 + np.exp(-np.clip(l, -700, 700)))  # P(bit 0)
    p0 = np.maximum(s, _LOG_CLAMP)
    p1 = np.maximum(1.0 - s, _LOG_CLAMP)
    n = b.size
    value = -np.sum(b * np.log(p1) + (1.0 - b) * np.log(p0)) / n

    def fn(g, needs):
        # d/dl of -log s(l) is -(1 - s); of -log s(-l) it is s; zero where clamped
        d = b * np.where(1.0 - s > _LOG_CLAMP, s, 0.0) - (1.0 - b) * np.where(s > _LOG_CLAMP, 1.0 - s, 0.0)
        return ((g * d / n).reshape(llrs.shape),)

    return record(np.asarray(value), (llrs,), fn)


# --------------------------------------------------------------------------
# optimizers

class Optimizer:
    """SGD or Adam over named parameters; Adam keeps a per-parameter step count."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, params: dict[str, Parameter], grad_scale: float = 1.0) -> None:
        c = self.config
        for name, p in params.items():
            if not p.trainable:
                continue
            g = p.grad * grad_scale if grad_scale != 1.0 else p.grad
            if c.kind == "sgd":
                p.data -= c.learning_rate * g
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            m, v = self.m[name], self.v[name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            mhat = m / (1.0 - c.beta1 ** t)
            vhat = v / (1.0 - c.beta2 ** t)
            p.data -= c.learning_rate * mhat / (np.sqrt(vhat) + c.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in sorted(self.m):
            out[f"optim/{name}/m"] = self.m[name]
            out[f"optim/{name}/v"] = self.v[name]
            out[f"optim/{name}/t"] = np.asarray(self.t[name], dtype=np.int64)
        return out

    def load_state(self, tensors: dict[str, np.ndarray], params: dict[str, Parameter]) -> None:
        self.m, self.v, self.t = {}, {}, {}
        for key, arr in tensors.items():
            if not key.startswith("optim/"):
                continue
            name, part = key[len("optim/"):].rsplit("/", 1)
            if name not in params:
                raise ValueError(f"optimizer state for unknown parameter {name}")
            if part == "t":
                self.t[name] = int(arr)
            else:
                if arr.shape != params[name].shape:
                    raise ValueError(f"optimizer state {key} has shape {arr.shape}, "
                                     f"parameter has {params[name].shape}")
                getattr(self, part)[name] = arr.copy()


def optimizer_step(params: dict[str, Parameter], optimizer: Optimizer) -> None:
    optimizer.step(params)


# --------------------------------------------------------------------------
# training loops

def _sample_point(cfg: TrainConfig, rng: np.random.Generator) -> tuple[float, float]:
    cr = cfg.cr_list[int(rng.integers(len(cfg.cr_list)))]
    lo, hi = cfg.ebno_range_db
    return cr, float(rng.uniform(lo, hi))


def block_loss(link: Link, weights: BaseWeights, registry: AdapterRegistry | None,
               cr: float, ebno_db: float, rng: np.random.Generator) -> Tensor:
    """Loss of one freshly generated block; records on the active tape if any."""
    block = link.generate_block(cr, ebno_db, rng)
    feats = build_input_features(block.rx, block.n0, weights.config.num_rx)
    llrs = forward_base(feats, weights) if registry is None else forward_loren(feats, weights, registry)
    return bce_llr_loss(select_cells(llrs, link.pilots.data_mask), block.coded_bits)


class Trainer:
    """Shared loop for both phases; ``registry`` set means adapter training."""

    def __init__(self, link: Link, weights: BaseWeights, cfg: TrainConfig,
                 registry: AdapterRegistry | None = None):
        self.link = link
        self.weights = weights
        self.cfg = cfg
        self.registry = registry
        self.phase = PHASE_BASE if registry is None else PHASE_ADAPTER
        self.optimizer = Optimizer(cfg.optimizer)
        self.log = TrainLog()
        self.iteration = 0

    def named_parameters(self, cr: float | None = None) -> dict[str, Parameter]:
        if self.registry is None:
            return {f"base/{n}": p for n, p in self.weights.params.items()}
        out = {}
        keys = sorted(self.registry.adapters) if cr is None else [cr_milli(cr)]
        for key in keys:
            for lid, ad in self.registry.adapters[key].items():
                out[f"adapter/{key}/{lid}/A"] = ad.A
                out[f"adapter/{key}/{lid}/B"] = ad.B
        return out

    def step(self) -> float:
        it = self.iteration
        rng = derive_rng(self.cfg.seed, self.phase, it)
        cr, ebno = _sample_point(self.cfg, rng)
        if self.registry is not None:
            self.registry.switch_cr(cr)
        params = self.named_parameters(None if self.registry is None else cr)
        for p in params.values():
            p.zero_grad()
        losses = []
        for item in range(self.cfg.batch_size):
            with Tape():
                loss = block_loss(self.link, self.weights, self.registry, cr, ebno,
                                  derive_rng(self.cfg.seed, self.phase, it, item + 1))
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(f"non-finite loss at iteration {it}")
            backward(loss)
            losses.append(value)
        self.optimizer.step(params, 1.0 / self.cfg.batch_size)
        mean = float(np.mean(losses))
        self.log.append(it, cr, ebno, mean)
        self.iteration += 1
        return mean

    def run(self, checkpoint_path=None) -> TrainLog:
        t0 = time.perf_counter()
        while self.iteration < self.cfg.iterations:
            loss = self.step()
            if self.iteration % 100 == 0:
                log.info("iteration %d loss %.4f", self.iteration, loss)
            every = self.cfg.checkpoint_every
            if checkpoint_path is not None and every and self.iteration % every == 0:
                self.checkpoint(checkpoint_path)
        self.log.wall_clock_s += time.perf_counter() - t0
        return self.log

    # ---------------------------------------------------------- checkpoints

    def checkpoint(self, path) -> None:
        path = Path(path)
        extra = self.optimizer.state_tensors()
        extra["train/iteration"] = np.asarray(self.iteration, dtype=np.int64)
        extra["train/phase"] = np.asarray(self.phase, dtype=np.int64)
        save_weights(path, self.weights, self.registry, extra)
        self.log.write_csv(loss_csv_path(path))

    def restore(self, path) -> None:
        path = Path(path)
        weights, registry, extra = load_weights(path, self.weights.config)
        if int(extra.get("train/phase", -1)) != self.phase:
            raise ValueError(f"{path}: checkpoint belongs to a different training phase")
        for n, p in weights.params.items():
            self.weights.params[n].data[...] = p.data
        if self.registry is not None:
            if registry is None:
                raise ValueError(f"{path}: checkpoint has no adapters")
            for key, layers in registry.adapters.items():
                for lid, ad in layers.items():
                    mine = self.registry.adapters[key][lid]
                    mine.A.data[...] = ad.A.data
                    mine.B.data[...] = ad.B.data
        self.optimizer.load_state(extra, self.named_parameters())
        self.iteration = int(extra["train/iteration"])
        self.log = TrainLog.read_csv(loss_csv_path(path))


def loss_csv_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".loss.csv")


def init_base_weights(model: ModelConfig, seed: int) -> BaseWeights:
    return BaseWeights.init(model, derive_rng(seed, PHASE_INIT))


def init_registry(model: ModelConfig, cr_list, seed: int) -> AdapterRegistry:
    registry = AdapterRegistry(model)
    for i, cr in enumerate(cr_list):
        registry.register(cr, derive_rng(seed, PHASE_ADAPTER_INIT, cr_milli(cr)))
    registry.switch_cr(cr_list[0])
    return registry


def train_base(model: ModelConfig, cfg: TrainConfig, link: Link, weights: BaseWeights | None = None,
               checkpoint_path=None) -> tuple[BaseWeights, TrainLog]:
    """Train every base parameter on blocks of randomly drawn code rate and Eb/N0."""
    weights = weights if weights is not None else init_base_weights(model, cfg.seed)
    weights.unfreeze()
    trainer = Trainer(link, weights, cfg)
    trainer.run(checkpoint_path)
    return weights, trainer.log


def train_adapters(model: ModelConfig, base: BaseWeights, cfg: TrainConfig, link: Link,
                   registry: AdapterRegistry | None = None, checkpoint_path=None
                   ) -> tuple[AdapterRegistry, TrainLog]:
    """Train only the active code rate's (A, B) per iteration; the base stays frozen."""
    base.freeze()
    registry = registry if registry is not None else init_registry(model, cfg.cr_list, cfg.seed)
    trainer = Trainer(link, base, cfg, registry)
    trainer.run(checkpoint_path)
    return registry, trainer.log


def held_out_loss(link: Link, weights: BaseWeights, registry: AdapterRegistry | None, cr: float,
                  ebno_points, blocks_per_point: int, seed: int) -> float:
    """Mean BCE over blocks drawn from seeds disjoint from training (paired across receivers)."""
    if registry is not None:
        registry.switch_cr(cr)
    vals = []
    for ebno in ebno_points:
        for i in range(blocks_per_point):
            rng = derive_rng(seed, PHASE_HELD_OUT, cr_milli(cr), ebno, i)
            vals.append(float(block_loss(link, weights, registry, cr, ebno, rng).data))
    return float(np.mean(vals))

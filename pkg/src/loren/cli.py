"""Command-line entry point: ``loren <command> [--config PATH] [--seed N] [--workers N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .config import ConfigError, GlobalConfig, dump_yaml, load_config
from .hwcost import storage_compare
from .link import Link
from .phy.ldpc import canonical_code_rate, ldpc_decode_bp, ldpc_encode
from .llr import bits_to_llr
from .receiver import WeightFileError, load_weights, save_weights
from .rng import derive_rng
from .training import DivergenceError, TrainLog, loss_csv_path, train_adapters, train_base

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("loren")


class MissingArtifactError(FileNotFoundError):
    """A file produced by an earlier command is absent."""


class CheckFailed(RuntimeError):
    pass


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{what} not found: {path}")
    return path


def _echo(cfg: GlobalConfig) -> None:
    out = cfg.path("out_dir")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_yaml(cfg))


def _load_base(cfg: GlobalConfig):
    weights, _, _ = load_weights(_require(cfg.path("weights"), "base weights"), cfg.model_config())
    if weights is None:
        raise WeightFileError(f"{cfg.path('weights')}: file holds no base weights")
    return weights


def _load_adapters(cfg: GlobalConfig):
    _, registry, _ = load_weights(_require(cfg.path("adapters"), "adapter file"), cfg.model_config())
    if registry is None:
        raise WeightFileError(f"{cfg.path('adapters')}: file holds no adapters")
    return registry


# --------------------------------------------------------------------------
# commands

def cmd_ldpc_check(cfg: GlobalConfig, args) -> int:
    link = Link(cfg.link_config())
    rows = ["cr,n,k,rate,parity_ok,roundtrip_ok"]
    failed = []
    for cr in cfg.eval.cr_list:
        code = link.code(cr)
        rng = derive_rng(cfg.seed, 0, cr)
        parity_ok = roundtrip_ok = True
        for _ in range(args.blocks):
            u = rng.integers(0, 2, code.k, dtype=np.uint8)
            c = ldpc_encode(code, u)
            parity_ok &= not code.syndrome(c).any()
            bits, ok, _ = ldpc_decode_bp(code, bits_to_llr(c, 20.0))
            roundtrip_ok &= ok and np.array_equal(bits[:code.k], u)
        rows.append(f"{canonical_code_rate(cr)},{code.n},{code.k},{code.k / code.n:.4f},"
                    f"{parity_ok},{roundtrip_ok}")
        if not (parity_ok and roundtrip_ok and abs(code.k / code.n - float(canonical_code_rate(cr))) <= 0.01):
            failed.append(cr)
    text = "\n".join(rows) + "\n"
    sys.stdout.write(text)
    (cfg.path("out_dir") / "ldpc_check.csv").write_text(text)
    if failed:
        raise CheckFailed(f"LDPC invariants failed for code rates {failed}")
    return EXIT_OK


def cmd_train_base(cfg: GlobalConfig, args) -> int:
    path = cfg.path("weights")
    weights, tlog = train_base(cfg.model_config(), cfg.train_config("base"), Link(cfg.link_config()))
    save_weights(path, weights)
    tlog.write_csv(loss_csv_path(path))
    print(f"base weights: {path}  final mean loss (last 100): {np.mean(tlog.loss[-100:]):.4f}")
    return EXIT_OK


def cmd_train_adapters(cfg: GlobalConfig, args) -> int:
    base = _load_base(cfg)
    path = cfg.path("adapters")
    registry, tlog = train_adapters(cfg.model_config(), base, cfg.train_config("adapters"),
                                    Link(cfg.link_config()))
    save_weights(path, None, registry)
    tlog.write_csv(loss_csv_path(path))
    means = ", ".join(f"{k / 1000:g}: {v:.4f}" for k, v in tlog.per_cr_mean(last=300).items())
    print(f"adapters: {path}  per-rate mean loss (last 300): {means}")
    return EXIT_OK


def cmd_eval(cfg: GlobalConfig, args) -> int:
    ecfg = cfg.eval_config()
    weights = registry = None
    if ev.NEURAL_BASE in ecfg.receivers or ev.LOREN in ecfg.receivers:
        weights = _load_base(cfg)
    if ev.LOREN in ecfg.receivers:
        registry = _load_adapters(cfg)
        missing = [cr for cr in ecfg.cr_list if cr not in registry]
        if missing:
            raise ConfigError(f"eval.cr_list: no adapters for code rates {missing} in {cfg.path('adapters')}")
    csv_path = cfg.path("bler_csv")
    points = ev.sweep(ecfg, Link(cfg.link_config()), weights, registry, args.workers, csv_path,
                      progress=lambda p: log.info("%s cr=%.3f %g dB: %d/%d", p.receiver, p.cr, p.ebno_db,
                                                  p.errors, p.blocks))
    report = ev.format_report(ev.compare_report(points))
    (cfg.path("out_dir") / "compare.csv").write_text(report)
    sys.stdout.write(report)
    return EXIT_OK


def cmd_hwcost(cfg: GlobalConfig, args) -> int:
    report = storage_compare(cfg.hwcost)
    out = cfg.path("out_dir")
    (out / "cost_report.txt").write_text(report.to_text())
    (out / "cost_report.csv").write_text(report.to_csv())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_plot(cfg: GlobalConfig, args) -> int:
    written = []
    for name in ("weights", "adapters"):
        loss_csv = loss_csv_path(cfg.path(name))
        if loss_csv.exists():
            tlog = TrainLog.read_csv(loss_csv)
            written.append(ev.plot_loss(tlog.iteration, tlog.loss, loss_csv.with_suffix(".svg")))
    bler_csv = cfg.path("bler_csv")
    if bler_csv.exists():
        written += ev.plot_bler(ev.read_csv(bler_csv), cfg.path("out_dir"))
    if not written:
        raise MissingArtifactError(f"nothing to plot: no loss CSVs next to {cfg.path('weights')} and no {bler_csv}")
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {
    "ldpc-check": cmd_ldpc_check,
    "train-base": cmd_train_base,
    "train-adapters": cmd_train_adapters,
    "eval": cmd_eval,
    "hwcost": cmd_hwcost,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file (defaults apply to omitted fields)")
    common.add_argument("--seed", type=int, help="root seed, overrides the config's seed")
    common.add_argument("--workers", type=int, default=1, help="evaluation worker processes")
    common.add_argument("--out", type=Path, help="output directory, overrides paths.out_dir")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="loren", description="Code-rate adaptive neural receiver toolkit.")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "ldpc-check":
            p.add_argument("--blocks", type=int, default=3, help="noiseless roundtrips per code rate")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(dump_yaml(GlobalConfig()))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("loren: error: a command is required", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.workers < 1:
            raise ConfigError(f"--workers: must be >= 1, got {args.workers}")
        overrides = {"seed": args.seed, "paths.out_dir": str(args.out) if args.out else None}
        cfg = load_config(args.config, overrides)
        _echo(cfg)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (DivergenceError, CheckFailed) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, WeightFileError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

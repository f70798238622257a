"""Command-line entry point: ``toponet <verb> [options]``.

Exit codes: 0 success, 2 config error, 3 numeric/training failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from ._fileio import atomic_open
from .compress import compression_curve, write_curve_csv
from .errors import CheckpointError, ConfigError, FitError, InsufficientDataError, NumericError, TrainingError
from .metrics import fit_integration_window, read_theta_csv
from .training import (
    DEFAULT_TAUS,
    Checkpoint,
    TrainConfig,
    evaluate,
    load_checkpoint,
    load_config,
    report_maps,
    save_checkpoint,
    sweep,
    train,
    write_grid_csv,
    write_log_csv,
    write_sweep_csv,
)

log = logging.getLogger("toponet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if getattr(args, "tau", None) is not None:
        cfg = cfg.with_tau(args.tau)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _checkpoint(args) -> Checkpoint:
    if getattr(args, "checkpoint", None):
        return load_checkpoint(args.checkpoint)
    return train(_config(args)).checkpoint


def _write_rows(path: Path, header, rows) -> None:
    with atomic_open(path, "w") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def cmd_train(args) -> None:
    result = train(_config(args))
    out = Path(args.out)
    ckpt = result.checkpoint
    save_checkpoint(ckpt, out / "checkpoint")
    write_log_csv(out / "train_log.csv", result.log)
    print(f"accuracy={ckpt.metrics['accuracy']!r}")


def cmd_eval(args) -> None:
    ckpt = _checkpoint(args)
    acc = evaluate(ckpt.model, ckpt.config.dataset)
    _write_rows(Path(args.out) / "eval.csv", ["accuracy"], [[repr(acc)]])
    print(f"accuracy={acc!r}")


def cmd_sweep(args) -> None:
    rows = sweep(_config(args), args.taus or DEFAULT_TAUS, args.bins)
    write_sweep_csv(Path(args.out) / "sweep.csv", rows)
    for r in rows:
        print(f"tau={r.tau!r} accuracy={r.accuracy!r} smoothness={r.smoothness!r} ed={r.effective_dimensionality!r} {r.status}")


def _curve(method: str):
    def run(args) -> None:
        ckpt = _checkpoint(args)
        levels = args.levels if args.levels is not None else [0.0, 0.2, 0.4, 0.6, 0.8]
        rows = compression_curve(ckpt.model, ckpt.config.dataset, method, levels)
        write_curve_csv(Path(args.out) / f"{method}_curve.csv", rows)
        for r in rows:
            print(f"level={r.level!r} param_ratio={r.param_ratio!r} delta={r.performance_delta!r}")

    return run


def cmd_maps(args) -> None:
    ckpt = _checkpoint(args)
    X, y = ckpt.config.dataset.eval_split()
    groups = {f"class{k}": X[y == k] for k in range(ckpt.config.dataset.n_classes)}
    out = Path(args.out)
    for lm in report_maps(ckpt.model, groups, args.bins):
        for g, grid in lm.t_maps.items():
            write_grid_csv(out / f"{lm.layer}_{g}_t.csv", grid)
        names = list(lm.t_maps)
        _write_rows(out / f"{lm.layer}_ssim.csv", ["group", *names], [[n, *map(repr, row)] for n, row in zip(names, lm.ssim.tolist())])
        _write_rows(out / f"{lm.layer}_smoothness.csv", ["group", "smoothness"], [[g, repr(v)] for g, v in lm.smoothness.items()])
    print(f"wrote maps to {out}")


def cmd_fit_window(args) -> None:
    deltas, thetas = read_theta_csv(args.input)
    fit = fit_integration_window(deltas, thetas)
    _write_rows(Path(args.out) / "window_fit.csv", ["a", "b", "c", "residual"], [[repr(fit.a), repr(fit.b), repr(fit.c), repr(fit.residual)]])
    print(f"a={fit.a!r} b={fit.b!r} c={fit.c!r} residual={fit.residual!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toponet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, model_source: bool = True):
        sp.add_argument("--out", default=".", help="output directory")
        if model_source:
            sp.add_argument("--config", help="JSON training config")
            sp.add_argument("--tau", type=float, help="override topo.tau")
            sp.add_argument("--seed", type=_u64, help="override the run seed")
        return sp

    common(sub.add_parser("train", help="train a toy model")).set_defaults(func=cmd_train)

    for name, func, help_ in (
        ("eval", cmd_eval, "accuracy on the task's evaluation split"),
        ("prune-curve", _curve("prune"), "accuracy vs L1 pruning level"),
        ("downsample-curve", _curve("downsample"), "accuracy vs sheet downsampling level"),
        ("maps", cmd_maps, "selectivity t-maps and their SSIM matrix"),
    ):
        sp = common(sub.add_parser(name, help=help_))
        sp.add_argument("--checkpoint", help="checkpoint directory (otherwise train from --config)")
        if name.endswith("curve"):
            sp.add_argument("--levels", type=_floats, help="fractions of penalized weights removed, e.g. 0,0.5,0.8")
        if name == "maps":
            sp.add_argument("--bins", type=int, default=10)
        sp.set_defaults(func=func)

    sp = common(sub.add_parser("sweep", help="train across tau values"))
    sp.add_argument("--taus", type=_floats, help="comma-separated tau grid (default 0,0.5,1,5,10,50)")
    sp.add_argument("--bins", type=int, default=10)
    sp.set_defaults(func=cmd_sweep)

    sp = common(sub.add_parser("fit-window", help="fit the integration-window model to a delta,theta CSV"), False)
    sp.add_argument("--input", required=True)
    sp.set_defaults(func=cmd_fit_window)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (NumericError, TrainingError, FitError, InsufficientDataError) as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except (CheckpointError, OSError) as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except ValueError as e:
        log.error("invalid input: %s", e)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface.

Subcommands cover the full pipeline: build the offline dataset, train
offline, transfer onto one frame's pilots, detect that frame, and run
full BER sweeps.  Exit codes: 0 success, 2 configuration error,
3 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .sysmodel import ConfigError, SystemParams, frame_from_seed, load_params as load_config
from .features import build_source_dataset, build_target_dataset, save_dataset, load_dataset
from .cmnet.arch import ModelFileError
from .cmnet.train import TrainConfig
from .dtl import DetectorModel, offline_learn, transfer_learn, detect_batch, save_model, load_model
from .bench import DETECTORS, TrainBudget, load_sweep, run_sweep, emit_csv
from .rng import substream, derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the master seed from the config/spec file")
    common.add_argument("--workers", type=int, default=None,
                        help="process count for Monte Carlo frames")
    common.add_argument("--no-normalize", action="store_true",
                        help="disable SCM trace normalization")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ambc",
        description="Ambient backscatter tag-signal detection toolkit",
    )
    parser.add_argument("--version", action="version", version=f"ambc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()

    p = sub.add_parser("gen-dataset", parents=[common],
                       help="build and serialize an offline source dataset")
    p.add_argument("--config", required=True, help="scenario parameter file")
    p.add_argument("--k", required=True, type=int, help="number of examples")
    p.add_argument("--out", required=True, help="output dataset path")

    p = sub.add_parser("train-offline", parents=[common],
                       help="offline learning on a serialized dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", required=True, type=int)
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-3)

    p = sub.add_parser("transfer", parents=[common],
                       help="pilot transfer learning on one generated frame")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True, help="pretrained model path")
    p.add_argument("--frame-seed", required=True, type=int)
    p.add_argument("--epochs", required=True, type=int)
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--k-t", type=int, default=2000, help="augmented example count")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-3)

    p = sub.add_parser("detect", parents=[common],
                       help="detect one frame's data symbols with a model")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--frame-seed", required=True, type=int)
    p.add_argument("--out", required=True, help="decision CSV path")

    p = sub.add_parser("ber-sweep", parents=[common],
                       help="run a BER sweep described by a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="result CSV path")
    p.add_argument("--detectors", default=None,
                   help=f"comma list from {{{','.join(DETECTORS)}}}")
    p.add_argument("--trials", type=int, default=None,
                   help="decided data symbols per point")
    return parser


def _load_scenario(args) -> SystemParams:
    params = load_config(args.config)
    if args.seed is not None:
        params = params.replace(seed=args.seed)
    return params


def _cmd_gen_dataset(args) -> int:
    params = _load_scenario(args)
    if args.k < 2:
        raise ConfigError(f"--k must be >= 2, got {args.k}")
    ds = build_source_dataset(
        params, args.k, substream(params.seed, "source"),
        normalize=not args.no_normalize,
    )
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} examples (M={ds.m}, normalize={ds.normalize}) to {args.out}")
    return EXIT_OK


def _cmd_train_offline(args) -> int:
    params = _load_scenario(args)
    ds = load_dataset(args.dataset)
    if ds.m != params.m:
        raise ConfigError(
            f"dataset M={ds.m} does not match configured antenna count {params.m}"
        )
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        freeze_conv=False,
        seed=derive_seed(params.seed, "offline"),
    )
    model = offline_learn(ds, config)
    save_model(model, args.out)
    print(f"offline training done: final epoch loss {model.train_loss:.6f}; "
          f"model saved to {args.out}")
    return EXIT_OK


def _check_normalize_flag(args, model: DetectorModel) -> None:
    if args.no_normalize and model.normalize:
        raise ConfigError(
            "model was trained with SCM normalization; --no-normalize would "
            "mismatch its inputs"
        )


def _cmd_transfer(args) -> int:
    params = _load_scenario(args)
    model = load_model(args.model)
    _check_normalize_flag(args, model)
    if model.arch.m != params.m:
        raise ConfigError(
            f"model M={model.arch.m} does not match configured antenna count {params.m}"
        )
    if args.k_t < params.p_pilots:
        raise ConfigError(f"--k-t must be >= the pilot count {params.p_pilots}")
    _, frame = frame_from_seed(params, args.frame_seed)
    pilots = frame[: params.p_pilots]
    d_t = build_target_dataset(
        pilots, args.k_t, substream(args.frame_seed, "augment"),
        normalize=model.normalize,
    )
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        freeze_conv=True,
        seed=derive_seed(args.frame_seed, "transfer"),
    )
    transferred = transfer_learn(model, d_t, config)
    save_model(transferred, args.out)
    print(f"transfer done on frame {args.frame_seed}: final epoch loss "
          f"{transferred.train_loss:.6f}; model saved to {args.out}")
    return EXIT_OK


def _cmd_detect(args) -> int:
    params = _load_scenario(args)
    model = load_model(args.model)
    _check_normalize_flag(args, model)
    if model.arch.m != params.m:
        raise ConfigError(
            f"model M={model.arch.m} does not match configured antenna count {params.m}"
        )
    _, frame = frame_from_seed(params, args.frame_seed)
    data = frame[params.p_pilots :]
    x_batch = np.stack([s.x for s in data])
    decisions = detect_batch(model, x_batch)
    errors = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frame_id,symbol_index,decision,truth\n")
        for i, sym in enumerate(data):
            dec = int(decisions[i])
            fh.write(f"{args.frame_seed},{params.p_pilots + i},{dec},{sym.label}\n")
            errors += dec != sym.label
    print(f"decided {len(data)} symbols, {errors} errors "
          f"(frame BER {errors / len(data):.6g}); decisions in {args.out}")
    return EXIT_OK


def _cmd_ber_sweep(args) -> int:
    spec = load_sweep(args.spec)
    changes = {}
    if args.detectors is not None:
        detectors = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
        changes["detectors"] = detectors
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.no_normalize:
        changes["normalize"] = False
    if args.seed is not None:
        changes["fixed"] = spec.fixed.replace(seed=args.seed)
    if changes:
        from dataclasses import replace

        spec = replace(spec, **changes)
    points = run_sweep(spec)
    emit_csv(points, args.out)
    for p in sorted(points, key=lambda p: (p.detector, p.axis_value)):
        print(f"{p.detector:6s} {p.axis}={p.axis_value:<8g} "
              f"ber={p.ber:.6g} ({p.errors}/{p.trials}, stderr {p.stderr:.3g})")
    print(f"wrote {len(points)} points to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen-dataset": _cmd_gen_dataset,
    "train-offline": _cmd_train_offline,
    "transfer": _cmd_transfer,
    "detect": _cmd_detect,
    "ber-sweep": _cmd_ber_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime / numerical failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

Heavy imports happen inside the command handlers so that thread caps
(TEMPNET_THREADS, --deterministic) are applied to the environment before
numpy first loads its BLAS.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this project reserves 2 for
    runtime failures, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _count_type(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 10:
        raise argparse.ArgumentTypeError(f"--count must be at least 10, got {value}")
    return value


def _ratio_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"--positive-ratio must be inside (0, 1), got {value}")
    return value


def _hw_type(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected HxW, e.g. 160x208, got {text!r}")
    try:
        h, w = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integer extents, got {text!r}")
    if h < 16 or w < 16:
        raise argparse.ArgumentTypeError(f"frame must be at least 16x16, got {h}x{w}")
    return h, w


def _tolerance_type(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"--tolerance must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    gen = sub.add_parser("gen", help="render a labeled synthetic clip dataset")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--count", type=_count_type, default=892, help="clips to render (min 10)")
    gen.add_argument("--positive-ratio", type=_ratio_type, default=0.5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--hw", type=_hw_type, default=(160, 208), help="frame size HxW")
    gen.set_defaults(func=_cmd_gen)

    pre = sub.add_parser("preprocess", help="cache preprocessed tensors for inspection")
    pre.add_argument("--data", required=True, help="directory with manifest.tsv and raw clips")
    pre.add_argument("--out", required=True, help="output directory")
    pre.add_argument("--config", required=True, help="config file")
    pre.set_defaults(func=_cmd_preprocess)

    tr = sub.add_parser("train", help="fit a network on a generated dataset")
    tr.add_argument("--data", required=True, help="directory with manifest.tsv and raw clips")
    tr.add_argument("--config", required=True, help="config file")
    tr.add_argument("--out", required=True, help="model file to write (history goes next to it)")
    tr.add_argument("--deterministic", action="store_true", help="single-threaded math")
    tr.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="score a trained model on the test split")
    ev.add_argument("--data", required=True, help="directory with manifest.tsv and raw clips")
    ev.add_argument("--model", required=True, help="trained model file")
    ev.add_argument("--report", required=True, help="report file to write")
    ev.set_defaults(func=_cmd_eval)

    cnt = sub.add_parser("count", help="print parameter and FLOP totals")
    cnt.add_argument("--config", required=True, help="config file")
    cnt.set_defaults(func=_cmd_count)

    desc = sub.add_parser("describe", help="print the per-stage shape/parameter/FLOP table")
    desc.add_argument("--config", required=True, help="config file")
    desc.set_defaults(func=_cmd_describe)

    gc = sub.add_parser("gradcheck", help="finite-difference check of the full gradient")
    gc.add_argument("--config", help="config file (default: built-in reduced network)")
    gc.add_argument("--tolerance", type=_tolerance_type, default=1e-4)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument(
        "--corrupt",
        action="store_true",
        help="deliberately scale conv kernel gradients to prove the check can fail",
    )
    gc.set_defaults(func=_cmd_gradcheck)
    return parser


def _cap_threads(n: int) -> None:
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


# ---------------------------------------------------------------------------
# command handlers


def _cmd_gen(args) -> int:
    from .synth import SceneConfig, generate_dataset

    try:
        scene = SceneConfig(hw=args.hw, seed=args.seed)
    except ValueError as e:
        # bad geometry is a flag problem; nothing has been written yet
        print(f"tempnet gen: error: {e}", file=sys.stderr)
        return 1
    entries = generate_dataset(
        args.out, n=args.count, positive_ratio=args.positive_ratio, seed=args.seed, scene=scene
    )
    by_split: dict[str, list[int]] = {}
    for e in entries:
        by_split.setdefault(e.split, []).append(e.label)
    for split in ("train", "val", "test"):
        labels = by_split.get(split, [])
        print(f"{split}: {len(labels)} clips ({sum(labels)} positive)")
    print(f"wrote {len(entries)} clips to {args.out}")
    return 0


def _cmd_preprocess(args) -> int:
    from pathlib import Path

    from .clipio import load_split, save_tclp, write_manifest
    from .configfile import load_config_file
    from .preproc import RawClip, preprocess

    cfgs = load_config_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    total = 0
    from .clipio import SPLITS, ManifestEntry

    for split in SPLITS:
        for clip_id, frames, label in load_split(args.data, split):
            x = preprocess(RawClip(frames, fps=cfgs.preproc.target_fps), cfgs.preproc)
            save_tclp(out / clip_id, x, label)
            entries.append(ManifestEntry(clip_id, label, split))
            total += 1
    write_manifest(out / "manifest.tsv", entries)
    shape = "x".join(str(e) for e in cfgs.preproc.output_frame_shape())
    print(f"preprocessed {total} clips to {args.out} (frame {shape})")
    return 0


def _cmd_train(args) -> int:
    from dataclasses import replace

    from .configfile import config_to_text, load_config_file
    from .network import build
    from .store import save_store
    from .training import load_dataset, train, write_history

    cfgs = load_config_file(args.config)
    training = replace(cfgs.training, deterministic=cfgs.training.deterministic or args.deterministic)
    dataset = load_dataset(args.data, cfgs.preproc)
    if not dataset.get("train"):
        raise ValueError(f"{args.data}: manifest has no train clips")
    if not dataset.get("val"):
        raise ValueError(f"{args.data}: manifest has no val clips")
    net = build(cfgs.network, seed=training.seed)
    result = train(net, dataset, training, log=print)
    save_store(net.store, args.out, metadata={"config": config_to_text(cfgs)})
    write_history(str(args.out) + ".history", result.history)
    last = result.history[-1]
    print(
        f"best epoch {result.best_epoch} (val_bce {result.best_val_bce:.4f}); "
        f"stopped after {last.epoch} epochs; model -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    from .configfile import config_from_text
    from .network import rebuild_like
    from .store import load_store
    from .training import evaluate, load_dataset, write_report

    store, metadata = load_store(args.model)
    if "config" not in metadata:
        raise ValueError(f"{args.model}: model file carries no config metadata")
    cfgs = config_from_text(metadata["config"])
    net = rebuild_like(cfgs.network, {name: t.data for name, t in store.items()})
    dataset = load_dataset(args.data, cfgs.preproc)
    clips = dataset.get("test", [])
    if not clips:
        raise ValueError(f"{args.data}: manifest has no test clips")
    report = evaluate(net, clips)
    write_report(args.report, report)
    m = report.metrics
    print(f"n {report.n}  threshold {report.threshold:g}")
    print(
        f"accuracy {m.accuracy:.4f}  precision {m.precision:.4f}  recall {m.recall:.4f}  "
        f"f1 {m.f1:.4f}  bce {report.bce:.4f}"
    )
    print(f"false_positives {report.fp}  false_negatives {report.fn}")
    print(f"report -> {args.report}")
    return 0


def _cmd_count(args) -> int:
    from .configfile import load_config_file
    from .network import count_flops, count_params


    cfgs = load_config_file(args.config)
    print(f"parameters: {count_params(cfgs.network):,}")
    print(f"flops per forward: {count_flops(cfgs.network):,}")
    return 0


def _cmd_describe(args) -> int:
    from .configfile import load_config_file
    from .network import describe

    cfgs = load_config_file(args.config)
    print(describe(cfgs.network))
    return 0


def _cmd_gradcheck(args) -> int:
    from .configfile import load_config_file
    from .gradcheck import run_gradcheck

    cfg = None
    if args.config is not None:
        cfg = load_config_file(args.config).network
    result = run_gradcheck(cfg, tolerance=args.tolerance, seed=args.seed, corrupt=args.corrupt)
    print(result.summary())
    return 0 if result.passed else 2


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    env_cap = os.environ.get("TEMPNET_THREADS")
    if env_cap is not None:
        try:
            cap = int(env_cap)
        except ValueError:
            print(f"tempnet: error: TEMPNET_THREADS must be an integer, got {env_cap!r}", file=sys.stderr)
        else:
            if cap >= 1:
                _cap_threads(cap)
    if getattr(args, "deterministic", False):
        _cap_threads(1)

    from .autodiff import NonFiniteError, ShapeError
    from .clipio import ClipFormatError
    from .configfile import ConfigError
    from .store import StoreFormatError

    try:
        return args.func(args)
    except ConfigError as e:
        print(f"tempnet: error: {e}", file=sys.stderr)
        return 1
    except (
        FileNotFoundError,
        IsADirectoryError,
        PermissionError,
        ClipFormatError,
        StoreFormatError,
        ShapeError,
        NonFiniteError,
        ValueError,
        OSError,
    ) as e:
        print(f"tempnet: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``sdcwarp <command> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import (ensure_dir, frame_paths, load_frame, make_translating_square, read_flo, save_frame,
                   write_flo)
from .flow import estimate_flow
from .optimize import fit_transform
from .pipeline import (METHODS, Config, SequenceInput, compare_methods, format_memory_report,
                       predict_multi, report_csv)
from .resample import MotionField, SeparableKernelField, TransformParams


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    p.add_argument("--config", type=Path, help="key = value file overriding schedule/extractor settings")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the operators")


def _config(args) -> Config:
    return Config.from_file(args.config) if args.config else Config()


def cmd_synth(args) -> int:
    if args.scene != "square":
        raise SystemExit(f"unknown scene {args.scene!r}")
    scene = make_translating_square((args.height, args.width), args.size, args.speed, args.steps)
    out = ensure_dir(args.out)
    for t, frame in enumerate(scene.frames):
        save_frame(frame, out / f"frame_{t:03d}.png")
    for t, (gt, fix) in enumerate(zip(scene.gt_backward_flow, scene.correct_sampling), start=1):
        write_flo(gt, out / f"gt_flow_{t:03d}.flo")
        write_flo(fix, out / f"correct_{t:03d}.flo")
    print(f"wrote {len(scene.frames)} frames to {out}")
    return 0


def cmd_flow(args) -> int:
    flow = estimate_flow(load_frame(args.prev), load_frame(args.next))
    write_flo(flow, args.out)
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args)
    source, target = load_frame(args.source), load_frame(args.target)
    schedule = cfg.schedule(args.schedule)
    extractor = cfg.extractor() if args.schedule == "paper" else None
    report = fit_transform(source, target, args.n, schedule, seed=args.seed, extractor=extractor,
                           grid_search_radius=args.grid_search, workers=args.threads)
    report.params.save(args.out)
    report.to_csv(args.report)
    pred_path = args.pred or Path(args.out).with_name(Path(args.out).stem + "_pred.png")
    save_frame(report.prediction, pred_path)
    last = report.records[-1]
    print(f"final loss {last.loss:.6g}, psnr {last.psnr:.2f} dB")
    return 0


def _load_sequence(directory, context: int) -> SequenceInput:
    paths = frame_paths(directory)
    if len(paths) < 2:
        raise SystemExit(f"{directory}: need at least two frames")
    return SequenceInput([load_frame(p) for p in paths[-context:]])


def cmd_predict(args) -> int:
    cfg = _config(args)
    seq = _load_sequence(args.frames, cfg.context)
    source = args.params if args.params else "fitted"
    if args.params and args.params.suffix == ".flo":
        flow = read_flo(args.params)
        source = TransformParams(MotionField.from_flow(flow), SeparableKernelField.identity(flow.height, flow.width, 1))
    run = predict_multi(seq, args.method, args.steps, source, cfg, args.seed, workers=args.threads)
    out = ensure_dir(args.out)
    for k, frame in enumerate(run.predictions, start=1):
        save_frame(frame, out / f"pred_{k:03d}.png")
    print(f"wrote {run.steps} predictions to {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    seq = _load_sequence(args.frames, cfg.context)
    rows = compare_methods(seq, load_frame(args.gt), cfg, args.seed, workers=args.threads)
    text = report_csv(rows)
    Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_mem(args) -> int:
    print(format_memory_report(args.width, args.height, args.n, args.kernel_n, args.bytes))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcwarp", description="Frame synthesis with displaced convolution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--scene", default="square", choices=["square"])
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--size", type=int, default=2)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=2)
    p.add_argument("--out", type=Path, required=True)
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("flow", help="estimate backward flow between two frames")
    p.add_argument("--prev", type=Path, required=True)
    p.add_argument("--next", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _common(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("fit", help="fit transform parameters mapping source to target")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--target", type=Path, required=True)
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--schedule", choices=["paper", "quick"], default="paper")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--pred", type=Path, help="predicted frame image (default: <out>_pred.png)")
    p.add_argument("--grid-search", type=int, default=None, metavar="R",
                   help="seed motion by integer search over [-R, R]")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict future frames")
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--method", choices=METHODS, default="sdc")
    p.add_argument("--params", type=Path, help="parameter file (.sdc, or .flo for motion only); fitted if omitted")
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="compare operators and CopyLast against a ground-truth frame")
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("mem", help="parameter memory estimate")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--kernel-n", type=int, default=51)
    p.add_argument("--bytes", type=int, default=4)
    _common(p)
    p.set_defaults(func=cmd_mem)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""``tactile-splitter`` command line: simulate, train, ablate, reconstruct, align.

Exit codes: 0 success, 1 computation failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import align, benchmark, gelsim
from .core import ContractError, MultiModalFrame
from .lut import load_lut, lut_lookup, save_lut
from .metrics import format_table, write_report_table, write_reports_csv
from .pfsnn import TrainConfig, load_model, save_model, write_loss_csv
from .poisson import fast_poisson, gradients_from_normals, reconstruct
from .tensorio import TensorFormatError, load_tensor, save_depth_png, save_png, save_tensor
from .textconfig import ConfigError

log = logging.getLogger("tactile_splitter")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _scene_entries(args):
    entries = []
    for role, paths in ((benchmark.TRAIN, args.train_scene), (benchmark.VAL, args.val_scene),
                        (benchmark.TEST, args.scene)):
        for p in paths or ():
            entries.append((Path(p).stem, role, gelsim.load_scene(p)))
    names = [e[0] for e in entries]
    if len(set(names)) != len(names):
        raise UsageError("scene file names must be distinct (item names come from the file stem)")
    return entries


def cmd_simulate(args) -> int:
    lighting = gelsim.load_lighting(args.lighting) if args.lighting else gelsim.LightingConfig.default()
    scenes = _scene_entries(args) or None
    items = benchmark.generate_benchmark(lighting, seed=args.seed or 0, scenes=scenes)
    out = Path(args.out)
    benchmark.save_dataset(items, out, previews=not args.no_previews)
    gelsim.save_lighting(lighting, out / "lighting.txt")
    print(f"wrote {len(items)} items to {out}")
    return EXIT_OK


def _load_dataset(path):
    items = benchmark.load_dataset(path)
    roles = {it.role for it in items}
    if benchmark.TRAIN not in roles:
        raise UsageError(f"dataset {path} has no training items")
    return items


def cmd_train(args) -> int:
    items = _load_dataset(args.dataset)
    cfg = _train_config(args)
    use_nir = args.mode == "rgb+nir"
    model, state = benchmark.train_model(items, use_nir, cfg)
    out = Path(args.out)
    save_model(model, out / "model")
    write_loss_csv(state, out / "loss.csv")
    last = state.history[-1] if state.history else None
    msg = f"trained {args.mode} model for {cfg.epochs} epochs"
    if last is not None:
        msg += f"; train L1 {last[1]:.5f}, val L1 {last[2]:.5f}"
    print(msg)
    return EXIT_OK


def _slug(label: str) -> str:
    return label.lower().replace("/", "").replace(".", "").replace(" ", "_").replace("__", "_")


def cmd_ablate(args) -> int:
    items = _load_dataset(args.dataset)
    cfg = _train_config(args)
    result = benchmark.run_ablation(items, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_table(result.reports, out / "table.txt")
    write_reports_csv(result.reports, out / "results.csv")
    _, _, held_out = benchmark.split(items)
    predictors = {label: (lambda f, b, t=t: lut_lookup(t, f, b)) for label, t in result.luts.items()}
    predictors.update({label: m.predict for label, m in result.models.items()})
    for label, table in result.luts.items():
        save_lut(table, out / _slug(label))
    for label, model in result.models.items():
        save_model(model, out / _slug(label))
        write_loss_csv(result.states[label], out / _slug(label) / "loss.csv")
    for label, predict in predictors.items():
        pdir = out / "previews" / _slug(label)
        pdir.mkdir(parents=True, exist_ok=True)
        for it in held_out:
            normals = predict(it.frame, it.background)
            depth = fast_poisson(gradients_from_normals(normals.as_unit(), it.depth.pitch))
            save_png(normals.normals, pdir / f"{it.name}_normals.png")
            save_depth_png(depth.depth, pdir / f"{it.name}_depth.png",
                           max_depth=float(max(it.depth.depth.max(), 1e-6)))
    print(format_table(result.reports), end="")
    print(f"ablation took {result.seconds:.1f} s")
    return EXIT_OK


def _load_frame(path) -> MultiModalFrame:
    return MultiModalFrame.from_stack(load_tensor(path))


def cmd_reconstruct(args) -> int:
    if args.weights:
        estimator = load_model(args.weights, expect_modality=args.mode)
    else:
        estimator = load_lut(args.lut, expect_modality=args.mode)
    mode = args.mode or estimator.modality
    frame = _load_frame(args.frame)
    background = _load_frame(args.background)
    normals, depth = reconstruct(frame, background, estimator, mode=mode, pitch=args.pitch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(normals.normals, out / "normals.tsr")
    save_png(normals.normals, out / "normals.png")
    save_tensor(depth.depth, out / "depth.tsr")
    save_depth_png(depth.depth, out / "depth.png")
    print(f"max depth {float(depth.depth.max()):.4f} mm")
    return EXIT_OK


def cmd_align(args) -> int:
    corr = align.load_correspondences(args.correspondences)
    h, inliers = align.ransac_homography(corr, args.threshold, args.iterations, args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(h, out / "homography.tsr")
    (out / "inliers.txt").write_text("".join(f"{int(v)}\n" for v in inliers))
    if args.frame:
        frame = _load_frame(args.frame)
        # correspondences map reference pixels to the moving camera; pull it back
        aligned = align.warp_frame(frame, np.linalg.inv(h), channels=args.channels)
        save_tensor(aligned.stack(), out / "aligned.tsr")
        save_tensor(align.valid_mask(frame.shape, np.linalg.inv(h)).astype(np.float32),
                    out / "valid.tsr")
    err = align.symmetric_transfer_error(h, corr.subset(inliers))
    print(f"{int(inliers.sum())}/{len(corr)} inliers, max symmetric error {err.max():.4f} px")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS threads; 1 keeps runs bit-reproducible")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tactile-splitter",
                                description="RGB+NIR tactile normal estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common],
                       help="render a synthetic dataset (default: the benchmark set)")
    s.add_argument("--scene", action="append", help="test scene file (repeatable)")
    s.add_argument("--train-scene", action="append", help="training scene file (repeatable)")
    s.add_argument("--val-scene", action="append", help="validation scene file (repeatable)")
    s.add_argument("--lighting", help="lighting key=value file")
    s.add_argument("--no-previews", action="store_true", help="skip PNG previews")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", parents=[common], help="train a PFSNN model")
    t.add_argument("dataset")
    t.add_argument("--config", help="training key=value file")
    t.add_argument("--mode", choices=("rgb", "rgb+nir"), default="rgb+nir")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", parents=[common], help="LUT vs PFSNN, with and without NIR")
    a.add_argument("dataset")
    a.add_argument("--config", help="training key=value file")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("reconstruct", parents=[common], help="normals and depth for one frame")
    r.add_argument("--frame", required=True, help="TSR1 (H, W, 4) frame")
    r.add_argument("--background", required=True, help="TSR1 (H, W, 4) background")
    est = r.add_mutually_exclusive_group(required=True)
    est.add_argument("--weights", help="PFSNN model directory")
    est.add_argument("--lut", help="LUT directory")
    r.add_argument("--mode", choices=("rgb", "rgb+nir"), default=None,
                   help="expected modality (default: the estimator's own)")
    r.add_argument("--pitch", type=float, default=benchmark.PITCH_MM, help="mm per pixel")
    r.set_defaults(func=cmd_reconstruct)

    g = sub.add_parser("align", parents=[common], help="RANSAC homography from corner matches")
    g.add_argument("correspondences", help="text file of 'x y x2 y2' lines")
    g.add_argument("--threshold", type=float, default=1.0, help="inlier threshold in px")
    g.add_argument("--iterations", type=int, default=1000)
    g.add_argument("--frame", help="TSR1 frame to warp into the reference view")
    g.add_argument("--channels", choices=("nir", "rgb", "all"), default="nir")
    g.set_defaults(func=cmd_align)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except (align.AlignmentError, align.DegenerateConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (UsageError, FileNotFoundError, NotADirectoryError, ConfigError, TensorFormatError,
            ContractError, gelsim.InvalidSceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

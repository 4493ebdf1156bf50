"""Command-line interface.

Subcommands cover the full loop on disk: synthesize a scene directory,
estimate per-view depth, train the regularizer, fuse depth maps into a
point cloud, benchmark against the dense search and evaluate depth maps.
Settings come from defaults, an optional --config YAML file, then flags.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import report
from .config import Settings
from .fileio import load_params, read_pfm, save_params, write_pfm, write_pgm, write_ply
from .fusion import depth_to_points, fuse_depth_maps
from .search import SearchResult, run_search
from .strategies import compare_strategies, evaluate_depth
from .synthetic import SCENE_KINDS, load_scene, make_scene, save_scene
from .training import epoch_mean_losses, train_stagewise

__all__ = ["main"]


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _settings(args, **extra) -> Settings:
    overrides = dict(extra)
    for flag, field in getattr(args, "_setting_flags", {}).items():
        overrides[field] = getattr(args, flag)
    return Settings.load(getattr(args, "config", None), **overrides)


def _add_setting_flags(parser, mapping):
    for flag, (field, kind, help_text) in mapping.items():
        if kind is bool:
            parser.add_argument(f"--{flag}", action="store_true", default=None,
                                help=help_text)
        else:
            parser.add_argument(f"--{flag}", type=kind, default=None,
                                help=help_text)
    parser.set_defaults(_setting_flags={flag.replace("-", "_"): field
                                        for flag, (field, _, _) in mapping.items()})


def cmd_synth(args) -> int:
    settings = _settings(args)
    scene = make_scene(kind=settings.kind, seed=settings.seed,
                       size=(settings.height, settings.width),
                       n_views=settings.n_views, baseline=settings.baseline,
                       focal=settings.focal, z_mid=settings.z_mid,
                       n_waves=settings.n_waves, margin=settings.margin,
                       noise=settings.noise)
    save_scene(scene, _ensure_dir(args.out))
    print(f"wrote scene {scene.name!r}: {len(scene.images)} views of "
          f"{settings.height}x{settings.width} to {args.out}")
    print(f"depth range [{scene.depth_range.d_min:.3f}, "
          f"{scene.depth_range.d_max:.3f}]")
    return 0


def cmd_depth(args) -> int:
    settings = _settings(args)
    config = settings.search_config()
    scene = load_scene(args.scene)
    params = load_params(args.params) if args.params else None
    refs = range(len(scene.images)) if args.all_views else [args.ref]
    depth_dir = _ensure_dir(os.path.join(args.out, "depth"))
    conf_dir = _ensure_dir(os.path.join(args.out, "conf"))
    fig_dir = _ensure_dir(os.path.join(args.out, "figures"))
    metric_rows = []
    for ref in refs:
        result = run_search(scene, params, config, ref_index=ref,
                            oracle=args.oracle)
        write_pfm(os.path.join(depth_dir, f"depth_{ref:04d}.pfm"), result.depth)
        write_pfm(os.path.join(conf_dir, f"conf_{ref:04d}.pfm"),
                  result.confidence)
        report.depth_figure(os.path.join(fig_dir, f"depth_{ref:04d}.png"),
                            result.depth, result.confidence,
                            title=f"view {ref}")
        line = f"view {ref}: depth in [{result.depth.min():.3f}, {result.depth.max():.3f}]"
        if scene.gt_depths is not None:
            m = evaluate_depth(result.depth, scene.gt_depths[ref])
            metric_rows.append([ref, m.mae, m.rmse, m.median_ae, m.max_ae])
            line += f", mae {m.mae:.4f}"
        print(line)
    if metric_rows:
        report.save_csv(os.path.join(args.out, "metrics.csv"),
                        ["view", "mae", "rmse", "median_ae", "max_ae"],
                        metric_rows)
    return 0


def cmd_train(args) -> int:
    settings = _settings(args)
    config = settings.search_config()
    scenes = [load_scene(d) for d in args.scenes]
    for scene in scenes:
        if scene.gt_depths is None:
            raise SystemExit(f"scene {scene.name!r} has no gt/ depth maps")
    out = _ensure_dir(args.out)
    params, records = train_stagewise(scenes, config, epochs=settings.epochs,
                                      learning_rate=settings.learning_rate,
                                      stage_ramp=settings.stage_ramp)
    save_params(os.path.join(out, "params.txt"), params)
    report.save_csv(os.path.join(out, "records.csv"),
                    ["stage", "epoch", "loss", "valid_fraction"],
                    [[r.stage, r.epoch, "" if r.loss is None else r.loss,
                      r.valid_fraction] for r in records])
    history = epoch_mean_losses(records)
    report.save_csv(os.path.join(out, "loss.csv"), ["epoch", "mean_stage_loss"],
                    [[i + 1, v] for i, v in enumerate(history)])
    report.loss_curve_figure(os.path.join(out, "loss.png"), history)
    shown = [v for v in history if v is not None]
    print(f"trained on {len(scenes)} scenes for {settings.epochs} epochs")
    if shown:
        print(f"loss {shown[0]:.4f} -> {shown[-1]:.4f}")
    return 0


def cmd_fuse(args) -> int:
    settings = _settings(args)
    scene = load_scene(args.scene)
    results = []
    for ref in range(len(scene.images)):
        depth = read_pfm(os.path.join(args.depths, "depth",
                                      f"depth_{ref:04d}.pfm")).astype(np.float64)
        conf = read_pfm(os.path.join(args.depths, "conf",
                                     f"conf_{ref:04d}.pfm")).astype(np.float64)
        results.append(SearchResult(depth=depth, confidence=conf,
                                    final_prob=conf))
    fused = fuse_depth_maps(scene, results, tau_ph=settings.tau_ph,
                            tau_px=settings.tau_px, tau_rel=settings.tau_rel,
                            min_consistent=settings.min_consistent)
    out = _ensure_dir(args.out)
    fig_dir = _ensure_dir(os.path.join(out, "figures"))
    all_points, all_gray = [], []
    for ref, fv in enumerate(fused):
        write_pfm(os.path.join(out, f"fused_{ref:04d}.pfm"), fv.depth)
        write_pgm(os.path.join(out, f"mask_{ref:04d}.pgm"),
                  fv.mask.astype(np.float64), maxval=255)
        report.fusion_figure(os.path.join(fig_dir, f"fused_{ref:04d}.png"), fv)
        pts, gray = depth_to_points(fv.depth, scene.cameras[ref],
                                    scene.rotations[ref],
                                    scene.translations[ref], fv.mask,
                                    scene.core_image(ref))
        all_points.append(pts)
        all_gray.append(gray)
        kept = float(fv.mask.mean())
        print(f"view {ref}: kept {kept:.1%} of pixels")
    points = np.concatenate(all_points, axis=0)
    gray = np.concatenate(all_gray, axis=0)
    write_ply(os.path.join(out, "cloud.ply"), points, gray)
    print(f"wrote {len(points)} points to {os.path.join(out, 'cloud.ply')}")
    return 0


def cmd_compare(args) -> int:
    settings = _settings(args)
    config = settings.search_config()
    scene = load_scene(args.scene)
    params = load_params(args.params) if args.params else None
    comparison = compare_strategies(scene, config, params=params,
                                    dense_hypotheses=settings.dense_hypotheses)
    out = _ensure_dir(args.out)
    rows = [
        ["agreement", comparison.agreement],
        ["agreement_tol", comparison.agreement_tol],
        ["element_reduction", comparison.element_reduction],
    ]
    report.save_csv(os.path.join(out, "compare.csv"), ["metric", "value"], rows)
    strategy_rows = comparison.rows()
    header = list(strategy_rows[0])
    report.save_csv(os.path.join(out, "strategies.csv"), header,
                    [[row.get(k, "") for k in header] for row in strategy_rows])
    if comparison.stage_valid_fraction:
        report.save_csv(os.path.join(out, "stage_valid_fraction.csv"),
                        ["stage", "staged_fraction", "binary_fraction"],
                        [[i + 1, v, b] for i, (v, b) in
                         enumerate(zip(comparison.stage_valid_fraction,
                                       comparison.binet_valid_fraction))])
    report.compare_figure(os.path.join(out, "compare.png"), comparison)
    print(f"agreement {comparison.agreement:.4f} within {comparison.agreement_tol:.6g}")
    print(f"peak elements: staged {comparison.staged_peak_elements}, "
          f"dense {comparison.dense_peak_elements} "
          f"({comparison.element_reduction:.1f}x reduction)")
    return 0


def cmd_eval(args) -> int:
    pred = read_pfm(args.pred).astype(np.float64)
    gt = read_pfm(args.gt).astype(np.float64)
    metrics = evaluate_depth(pred, gt)
    out = _ensure_dir(args.out)
    report.save_csv(os.path.join(out, "metrics.csv"), ["metric", "value"],
                    metrics.rows())
    report.error_histogram_figure(os.path.join(out, "error_hist.png"),
                                  np.abs(pred - gt))
    print(f"mae {metrics.mae:.4f}, rmse {metrics.rmse:.4f}, "
          f"median {metrics.median_ae:.4f} over {metrics.n_pixels} pixels")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="binsweep",
        description="Multi-view depth estimation by binary subdivision of "
                    "depth-hypothesis bins.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene directory")
    p.add_argument("--out", required=True, help="scene directory to create")
    p.add_argument("--config", help="YAML settings file")
    _add_setting_flags(p, {
        "kind": ("kind", str, f"surface kind: {', '.join(SCENE_KINDS)}"),
        "seed": ("seed", int, "texture seed"),
        "height": ("height", int, "image height"),
        "width": ("width", int, "image width"),
        "views": ("n_views", int, "number of views"),
        "baseline": ("baseline", float, "camera spacing"),
        "focal": ("focal", float, "focal length in pixels"),
        "margin": ("margin", int, "rendered guard band in pixels"),
        "noise": ("noise", float, "added image noise sigma"),
        "waves": ("n_waves", int, "texture wave count"),
    })
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("depth", help="estimate depth maps for a scene")
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="trained parameter file")
    p.add_argument("--ref", type=int, default=0, help="reference view index")
    p.add_argument("--all-views", action="store_true",
                   help="estimate every view as reference")
    p.add_argument("--oracle", action="store_true",
                   help="classify stages with the true bin (needs gt/)")
    p.add_argument("--config", help="YAML settings file")
    _add_setting_flags(p, {
        "threads": ("threads", int, "worker threads per volume"),
        "stages": ("n_stages", int, "number of subdivision stages"),
    })
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("train", help="fit regularizer parameters on scenes")
    p.add_argument("scenes", nargs="+", help="scene directories with gt/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="YAML settings file")
    _add_setting_flags(p, {
        "epochs": ("epochs", int, "training epochs"),
        "lr": ("learning_rate", float, "gradient-descent step"),
        "stage-ramp": ("stage_ramp", int,
                       "epochs between admitting two more stages (0: all)"),
        "threads": ("threads", int, "worker threads per volume"),
    })
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="filter and fuse per-view depth maps")
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--depths", required=True,
                   help="output directory of 'depth --all-views'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="YAML settings file")
    _add_setting_flags(p, {
        "tau-ph": ("tau_ph", float, "photometric confidence gate"),
        "tau-px": ("tau_px", float, "reprojection gate in pixels"),
        "tau-rel": ("tau_rel", float, "relative depth gate"),
        "min-consistent": ("min_consistent", int,
                           "required number of agreeing views"),
    })
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("compare",
                       help="benchmark the staged search against dense search")
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--params", help="trained parameter file")
    p.add_argument("--config", help="YAML settings file")
    _add_setting_flags(p, {
        "dense": ("dense_hypotheses", int, "dense hypothesis count"),
        "threads": ("threads", int, "worker threads per volume"),
    })
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="score a depth map against a reference")
    p.add_argument("--pred", required=True, help="estimated depth (PFM)")
    p.add_argument("--gt", required=True, help="reference depth (PFM)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

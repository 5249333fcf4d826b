"""Command-line interface.

Subcommands: ``register`` (two PLY files or a synthetic pair config), ``synth``
(emit a synthetic pair as PLY + ground-truth JSON), ``swc`` (dump keypoints of
one cloud), ``ablate`` (cluster-count or cascade sweeps), ``bench`` (clustered
pipeline vs bypass timing).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cascade import CascadeMode
from .errors import SplatRegError
from .gaussian_model import identity_field
from .ply_io import load_ply_gaussians, save_ply_gaussians
from .registration import IcpParams, RansacParams
from .runner import (
    PairTemplate,
    RunConfig,
    ablation_csv,
    load_pair_template,
    registration_csv,
    report_json,
    run_ablation,
    run_bench,
    run_registration,
    save_transform_json,
)
from .swc import SwcParams, masked_keypoints, opacity_mask, swc as run_swc
from .synth import make_pair

_MODES = {"both": CascadeMode.BOTH,
          "static": CascadeMode.STATIC_ONLY,
          "deformed": CascadeMode.DEFORMED_ONLY}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--clusters", type=int, default=5,
                        help="cluster count N; 0 bypasses clustering entirely")
    parser.add_argument("--epsilon", type=float, default=0.8, help="opacity threshold")
    parser.add_argument("--drop-rate", type=float, default=0.5, help="per-cluster drop rate")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--t-a", type=float, default=0.5, help="scene A timestamp")
    parser.add_argument("--t-b", type=float, default=0.5, help="scene B timestamp")
    parser.add_argument("--mode", choices=sorted(_MODES), default="both",
                        help="feature blocks used for keypoints")
    parser.add_argument("--trials", type=int, default=1)
    parser.add_argument("--out", type=Path, default=None, help="output file path")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--opacity-raw", action="store_true",
                        help="treat stored PLY opacities as already in [0, 1]")
    parser.add_argument("--units-scale", type=float, default=1.0,
                        help="multiply reported translation errors (e.g. scene units to mm)")


def _swc_params(args) -> SwcParams | None:
    if args.clusters == 0:
        return None
    return SwcParams(num_clusters=args.clusters, opacity_threshold=args.epsilon,
                     drop_rate=args.drop_rate)


def _run_config(args, template: PairTemplate | None = None) -> RunConfig:
    return RunConfig(
        scene_a=getattr(args, "scene_a", None),
        scene_b=getattr(args, "scene_b", None),
        pair_template=template,
        gt_path=getattr(args, "gt", None),
        swc=_swc_params(args),
        ransac=RansacParams(),
        icp=IcpParams(),
        cascade_mode=_MODES[args.mode],
        bypass_opacity_threshold=args.epsilon,
        trials=args.trials,
        master_seed=args.seed,
        t_a=args.t_a,
        t_b=args.t_b,
        opacity_raw=args.opacity_raw,
        units_scale=args.units_scale,
        output_path=args.out,
        output_format=args.format,
    )


def _cmd_register(args) -> int:
    template = load_pair_template(args.pair) if args.pair else None
    config = _run_config(args, template)
    result = run_registration(config)
    if config.output_path is None:
        text = report_json(result) if args.format == "json" else registration_csv(result)
        sys.stdout.write(text)
    return 0


def _cmd_synth(args) -> int:
    template = (load_pair_template(args.pair) if args.pair else
                PairTemplate(num_gaussians=args.num_gaussians,
                             overlap_fraction=args.overlap,
                             noise_sigma=args.noise,
                             rotation_max_deg=args.rot_max,
                             translation_max_frac=args.trans_max_frac))
    spec = template.realize(args.seed)
    snap_a, snap_b, ground_truth = make_pair(spec)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    path_a = prefix.with_name(prefix.name + "_a.ply")
    path_b = prefix.with_name(prefix.name + "_b.ply")
    path_gt = prefix.with_name(prefix.name + "_gt.json")
    save_ply_gaussians(path_a, snap_a.static_cloud,
                       ascii_format=args.ascii, splat_convention=args.splat_f32)
    save_ply_gaussians(path_b, snap_b.static_cloud,
                       ascii_format=args.ascii, splat_convention=args.splat_f32)
    save_transform_json(path_gt, ground_truth)
    print(f"wrote {path_a}, {path_b}, {path_gt}")
    return 0


def _cmd_swc(args) -> int:
    cloud = load_ply_gaussians(args.input, opacity_raw=args.opacity_raw)
    mask = opacity_mask(cloud.opacities, args.epsilon)
    if args.clusters == 0:
        keypoints = masked_keypoints(cloud.positions, cloud.opacities, mask)
    else:
        params = SwcParams(num_clusters=args.clusters, opacity_threshold=args.epsilon,
                           drop_rate=args.drop_rate, seed=args.seed)
        keypoints = run_swc(cloud.positions, cloud.opacities, mask, params)
    kept = cloud.take(keypoints.source_indices)
    out = args.out or Path(str(args.input) + ".keypoints.ply")
    save_ply_gaussians(out, kept, ascii_format=args.ascii, splat_convention=args.splat_f32)
    print(f"kept {keypoints.count} of {cloud.count} gaussians -> {out}")
    return 0


def _cmd_ablate(args) -> int:
    template = load_pair_template(args.pair) if args.pair else None
    config = _run_config(args, template)
    rows = run_ablation(config, args.sweep)
    if config.output_path is None:
        sys.stdout.write(ablation_csv(rows))
    return 0


def _cmd_bench(args) -> int:
    template = PairTemplate(num_gaussians=args.num_gaussians,
                            overlap_fraction=args.overlap,
                            noise_sigma=args.noise)
    config = _run_config(args, template)
    outcome = run_bench(config)
    if config.output_path is None:
        sys.stdout.write(json.dumps(outcome, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatreg",
                                     description="Register dynamic Gaussian-splat scenes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_reg = sub.add_parser("register", help="register two scenes")
    p_reg.add_argument("scene_a", type=Path, nargs="?", default=None, help="scene A PLY")
    p_reg.add_argument("scene_b", type=Path, nargs="?", default=None, help="scene B PLY")
    p_reg.add_argument("--pair", type=Path, default=None, help="synthetic pair config JSON")
    p_reg.add_argument("--gt", type=Path, default=None, help="ground-truth transform JSON")
    _add_common(p_reg)
    p_reg.set_defaults(func=_cmd_register)

    p_synth = sub.add_parser("synth", help="emit a synthetic pair as PLY + ground truth")
    p_synth.add_argument("--out", type=Path, required=True, help="output path prefix")
    p_synth.add_argument("--pair", type=Path, default=None, help="pair config JSON")
    p_synth.add_argument("--num-gaussians", type=int, default=5000)
    p_synth.add_argument("--overlap", type=float, default=1.0)
    p_synth.add_argument("--noise", type=float, default=0.0)
    p_synth.add_argument("--rot-max", type=float, default=30.0)
    p_synth.add_argument("--trans-max-frac", type=float, default=0.2)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--ascii", action="store_true", help="write ASCII PLY")
    p_synth.add_argument("--splat-f32", action="store_true",
                         help="write trainer-style float32 layout with raw opacity")
    p_synth.set_defaults(func=_cmd_synth)

    p_swc = sub.add_parser("swc", help="extract keypoints from one cloud")
    p_swc.add_argument("input", type=Path, help="input PLY")
    p_swc.add_argument("--out", type=Path, default=None)
    p_swc.add_argument("--clusters", type=int, default=5)
    p_swc.add_argument("--epsilon", type=float, default=0.8)
    p_swc.add_argument("--drop-rate", type=float, default=0.5)
    p_swc.add_argument("--seed", type=int, default=0)
    p_swc.add_argument("--opacity-raw", action="store_true")
    p_swc.add_argument("--ascii", action="store_true")
    p_swc.add_argument("--splat-f32", action="store_true")
    p_swc.set_defaults(func=_cmd_swc)

    p_abl = sub.add_parser("ablate", help="run a parameter sweep")
    p_abl.add_argument("--sweep", choices=("clusters", "cascade"), required=True)
    p_abl.add_argument("scene_a", type=Path, nargs="?", default=None)
    p_abl.add_argument("scene_b", type=Path, nargs="?", default=None)
    p_abl.add_argument("--pair", type=Path, default=None)
    p_abl.add_argument("--gt", type=Path, default=None)
    _add_common(p_abl)
    p_abl.set_defaults(func=_cmd_ablate)

    p_bench = sub.add_parser("bench", help="time clustered pipeline vs bypass")
    p_bench.add_argument("--num-gaussians", type=int, default=50_000)
    p_bench.add_argument("--overlap", type=float, default=1.0)
    p_bench.add_argument("--noise", type=float, default=0.0)
    _add_common(p_bench)
    p_bench.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as err:
        missing = err.filename or str(err)
        print(f"error: input file not found: {missing}", file=sys.stderr)
        return 2
    except SplatRegError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""命令行入口：quant / ppm run / match / eval / loss check / gen"""
import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.geometry.point_cloud import PointCloud
from src.loss.contrastive import (
    DEFAULT_TAU, FeatureRole, contrastive_loss, gradient_check, l2_normalize, read_features_csv,
)
from src.matching.alignment import nearest_alignment
from src.matching.correspondence import match_synced, match_unsynced
from src.ppm.aggregation import aggregate
from src.ppm.miner import PositivePairMiner, PPMConfig
from src.ppm.registration import ICPConfig
from src.quantization.error_analysis import error_vs_distance_profile, quantization_error
from src.quantization.voxelizer import VoxelSpec, quantize
from src.synthetic.flow_metrics import evaluate_flow, results_to_dict, write_results_csv
from src.synthetic.scene import SceneScript, generate, load_script, write_ground_truth
from src.utils.errors import ConfigurationError, DataFormatError, LidarDistillError
from src.utils.io_utils import read_cloud, read_transforms, write_json, write_transforms
from src.utils.log_utils import configure_logging
from src.utils.manifest import load_scene, write_scene
from src.utils.visualization import plot_error_profiles

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_IO_ERROR = 3


@dataclass(frozen=True)
class RunConfig:
    """一次命令行调用的完整配置"""
    command: str
    seed: int = 0
    out: Optional[Path] = None
    inputs: dict = field(default_factory=dict)
    voxel: Optional[VoxelSpec] = None
    ppm: Optional[PPMConfig] = None
    tau: float = DEFAULT_TAU
    options: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args):
        command = args.command if args.command not in ("ppm", "loss") else f"{args.command} {args.action}"
        seed = 0 if args.seed is None else args.seed
        common = {"command": command, "seed": seed,
                  "out": Path(args.out) if args.out else None}

        if command == "quant":
            return cls(**common, inputs={"cloud": Path(args.input)},
                       voxel=VoxelSpec.parse(args.coord, args.voxel),
                       options={"bin_width": args.bin_width, "distance": args.distance,
                                "plot": args.plot})

        if command == "ppm run":
            if common["out"] is None:
                raise ConfigurationError("ppm run needs --out for the transform file")
            return cls(**common, inputs={"scene": Path(args.scene)}, ppm=_ppm_config(args, seed),
                       options={"diagnostics": args.diagnostics})

        if command == "match":
            if args.mode == "unsynced" and not args.z:
                raise ConfigurationError("unsynced matching needs --z")
            if args.mode == "synced" and args.z:
                raise ConfigurationError("synced matching does not take --z")
            if args.mode == "nearest" and not args.image_timestamps:
                raise ConfigurationError("nearest alignment needs --image-timestamps")
            if args.mode != "nearest" and not args.scene:
                raise ConfigurationError(f"{args.mode} matching needs --scene")
            inputs = {"scene": Path(args.scene) if args.scene else None,
                      "z": Path(args.z) if args.z else None}
            return cls(**common, inputs=inputs, ppm=_ppm_config(args, seed),
                       options={"mode": args.mode, "frame": args.frame,
                                "image_timestamps": args.image_timestamps,
                                "lidar_timestamps": args.lidar_timestamps})

        if command == "eval":
            return cls(**common, inputs={"scene": Path(args.scene), "z": Path(args.z), "gt": Path(args.gt)},
                       ppm=_ppm_config(args, seed), options={"csv": args.csv})

        if command == "loss check":
            if args.m < 1 or args.d < 1:
                raise ConfigurationError("--m and --d must be >= 1")
            if bool(args.f) != bool(args.g):
                raise ConfigurationError("--f and --g must be given together")
            inputs = {"f": Path(args.f) if args.f else None, "g": Path(args.g) if args.g else None}
            return cls(**common, inputs=inputs, tau=args.tau, options={"m": args.m, "d": args.d})

        if command == "gen":
            if common["out"] is None:
                raise ConfigurationError("gen needs --out for the scene directory")
            return cls(**common, inputs={"script": Path(args.script) if args.script else None},
                       options={"explicit_seed": args.seed is not None, "cloud_format": args.cloud_format})

        raise ConfigurationError(f"Unsupported command: {command}")


def _ppm_config(args, seed):
    return PPMConfig(
        window=args.window, eps=args.eps, min_pts=args.min_pts, c=args.c,
        min_track_points=args.min_track_points,
        icp=ICPConfig(max_iters=args.icp_max_iters, tol=args.icp_tol),
        seed=seed, threads=args.threads,
    )


def _print_json(data):
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_quant(config):
    cloud = read_cloud(config.inputs["cloud"])
    spec = config.voxel
    quantized = quantize(cloud, spec)
    error = quantization_error(cloud, spec)
    profile = error_vs_distance_profile(cloud, spec, config.options["bin_width"],
                                        distance=config.options["distance"])
    summary = {
        "voxel": spec.describe(),
        "mean_error_mm": error.mean_mm,
        "input_count": quantized.input_count,
        "retained_count": quantized.retained_count,
        "drop_rate": quantized.drop_rate,
    }

    out = config.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    profile.to_csv(out / "profile.csv", index=False, float_format="%.6f")
    write_json(summary, out / "summary.json")
    if config.options["plot"]:
        plot_error_profiles({spec.describe(): profile}, out / "profile.png")
    _print_json(summary)
    return EXIT_OK


def cmd_ppm(config):
    sequence = load_scene(config.inputs["scene"])
    result = PositivePairMiner(config.ppm).mine(sequence)

    write_transforms(result.z, config.out)
    diagnostics_path = config.options["diagnostics"] or config.out.with_suffix(".json")
    write_json(result.diagnostics, diagnostics_path)
    print(f"points: {result.diagnostics['point_count']}")
    print(f"clusters: {result.diagnostics['cluster_count']}")
    print(f"moving clusters: {result.diagnostics['moving_cluster_count']}")
    return EXIT_OK


def _frame_in_window(sequence, window, frame):
    """完整序列中的帧号 -> 窗口内的帧号"""
    windowed = sequence.window(window)
    offset = sequence.keyframe_index - windowed.keyframe_index
    index = sequence.keyframe_index if frame is None else frame
    if not offset <= index < offset + len(windowed):
        raise ConfigurationError(f"frame {index} is outside the aggregation window")
    return windowed, index - offset


def _compensated_window(sequence, window, z):
    """窗口内汇聚点在关键帧LiDAR坐标系下的坐标，并检查Z的长度"""
    windowed = sequence.window(window)
    aggregated = aggregate(windowed)
    if len(z) != len(aggregated):
        raise ConfigurationError(
            f"transform file has {len(z)} entries but the window aggregates {len(aggregated)} points"
        )
    points = windowed.keyframe.pose.inverse().apply_points(aggregated.points)
    return windowed, aggregated, points


def cmd_match(config):
    mode = config.options["mode"]
    if mode == "nearest":
        image_times = _parse_times(config.options["image_timestamps"])
        if config.inputs["scene"] is not None:
            lidar_times = load_scene(config.inputs["scene"]).timestamps
        elif config.options["lidar_timestamps"]:
            lidar_times = _parse_times(config.options["lidar_timestamps"])
        else:
            raise ConfigurationError("nearest alignment needs --scene or --lidar-timestamps")
        chosen = nearest_alignment(lidar_times, image_times)
        table = pd.DataFrame({
            "frame_index": np.arange(len(lidar_times)),
            "lidar_timestamp": lidar_times,
            "image_index": chosen,
            "image_timestamp": image_times[chosen],
        })
        _write_table(table, config.out)
        return EXIT_OK

    sequence = load_scene(config.inputs["scene"])
    camera = sequence.camera
    if mode == "synced":
        index = sequence.keyframe_index if config.options["frame"] is None else config.options["frame"]
        if not 0 <= index < len(sequence):
            raise ConfigurationError(f"frame {index} out of range for {len(sequence)} frames")
        corr = match_synced(camera, sequence.frames[index].cloud, sequence.superpixels)
    else:
        z = read_transforms(config.inputs["z"])
        windowed, aggregated, points = _compensated_window(sequence, config.ppm.window, z)
        _, local = _frame_in_window(sequence, config.ppm.window, config.options["frame"])
        mask = aggregated.frame_mask(local)
        cloud = PointCloud(points[mask], windowed.frames[local].cloud.timestamp, aggregated.source_index[mask])
        corr = match_unsynced(camera, cloud, z.subset(mask), sequence.superpixels,
                              image_timestamp=windowed.keyframe_timestamp)
    _write_table(corr.to_frame(), config.out)
    logger.info("Wrote %d correspondences", len(corr))
    return EXIT_OK


def _parse_times(value):
    """逗号分隔的时间戳，或每行一个时间戳的文本文件"""
    path = Path(value)
    text = path.read_text() if path.exists() else value
    try:
        return np.array([float(v) for v in text.replace("\n", ",").split(",") if v.strip()])
    except ValueError:
        raise DataFormatError(f"invalid timestamp list: {value!r}")


def _write_table(table, out):
    if out is None:
        table.to_csv(sys.stdout, index=False, float_format="%.17g")
    else:
        table.to_csv(out, index=False, float_format="%.17g")


def cmd_eval(config):
    sequence = load_scene(config.inputs["scene"])
    z = read_transforms(config.inputs["z"])
    windowed, _, points = _compensated_window(sequence, config.ppm.window, z)
    predicted = z.apply_points(points)

    with np.load(config.inputs["gt"]) as gt:
        start = sequence.keyframe_index - windowed.keyframe_index
        in_window = (gt["frame_index"] >= start) & (gt["frame_index"] < start + len(windowed))
        endpoints, labels = gt["endpoints"][in_window], gt["labels"][in_window]
    if len(endpoints) != len(points):
        raise DataFormatError(f"ground truth covers {len(endpoints)} points, scene has {len(points)}")

    results = evaluate_flow(predicted, endpoints, points, labels)
    data = results_to_dict(results)
    if config.out is not None:
        write_json(data, config.out)
    if config.options["csv"]:
        write_results_csv(results, config.options["csv"])
    _print_json(data)
    return EXIT_OK


def cmd_loss(config):
    tau = config.tau
    if config.inputs["f"] is not None:
        f = l2_normalize(read_features_csv(config.inputs["f"], FeatureRole.POINT))
        g = l2_normalize(read_features_csv(config.inputs["g"], FeatureRole.PIXEL))
        report = {"loss": contrastive_loss(f, g, tau), "m": len(f), "d": f.dim, "tau": tau}
    else:
        check = gradient_check(config.options["m"], config.options["d"], tau, config.seed)
        report = {**check.to_dict(), "m": config.options["m"], "d": config.options["d"],
                  "tau": tau, "seed": config.seed}
    if config.out is not None:
        write_json(report, config.out)
    print(f"loss: {report['loss']:.12g}")
    if "max_rel_error" in report:
        print(f"gradient check max relative error: {report['max_rel_error']:.3e}")
    return EXIT_OK


def cmd_gen(config):
    script = load_script(config.inputs["script"]) if config.inputs["script"] else SceneScript()
    if config.options["explicit_seed"]:
        script = script.model_copy(update={"seed": config.seed})
    scene = generate(script)
    manifest = write_scene(scene.sequence, config.out, cloud_format=config.options["cloud_format"])
    write_ground_truth(scene, config.out / "ground_truth.npz")
    print(f"manifest: {manifest}")
    return EXIT_OK


COMMANDS = {
    "quant": cmd_quant,
    "ppm run": cmd_ppm,
    "match": cmd_match,
    "eval": cmd_eval,
    "loss check": cmd_loss,
    "gen": cmd_gen,
}


def _add_ppm_options(parser):
    parser.add_argument("--window", type=int, default=11, help="aggregation window in frames")
    parser.add_argument("--c", type=float, default=0.5, help="moving threshold in meters")
    parser.add_argument("--eps", type=float, default=0.5)
    parser.add_argument("--min-pts", type=int, default=10)
    parser.add_argument("--min-track-points", type=int, default=5)
    parser.add_argument("--icp-max-iters", type=int, default=50)
    parser.add_argument("--icp-tol", type=float, default=1e-6)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for per-cluster ICP; only ppm run uses it")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lidar-distill", description="Image-to-LiDAR distillation toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    quant = commands.add_parser("quant", parents=[common], help="quantization error analysis")
    quant.add_argument("--input", required=True)
    quant.add_argument("--coord", choices=["cart", "cyl"], default="cart")
    quant.add_argument("--voxel", default="0.1,0.1,0.1")
    quant.add_argument("--bin-width", type=float, default=10.0)
    quant.add_argument("--distance", choices=["range", "planar"], default="range")
    quant.add_argument("--plot", action="store_true", help="also write profile.png")

    ppm = commands.add_parser("ppm", help="positive pair mining")
    ppm_actions = ppm.add_subparsers(dest="action", required=True)
    ppm_run = ppm_actions.add_parser("run", parents=[common])
    ppm_run.add_argument("--scene", required=True)
    ppm_run.add_argument("--diagnostics", default=None)
    _add_ppm_options(ppm_run)

    match = commands.add_parser("match", parents=[common], help="point-to-pixel matching")
    match.add_argument("--mode", choices=["synced", "unsynced", "nearest"], default="synced")
    match.add_argument("--scene", default=None)
    match.add_argument("--z", default=None)
    match.add_argument("--frame", type=int, default=None)
    match.add_argument("--image-timestamps", default=None)
    match.add_argument("--lidar-timestamps", default=None)
    _add_ppm_options(match)

    evaluate = commands.add_parser("eval", parents=[common], help="scene flow evaluation")
    evaluate.add_argument("--scene", required=True)
    evaluate.add_argument("--z", required=True)
    evaluate.add_argument("--gt", required=True)
    evaluate.add_argument("--csv", default=None)
    _add_ppm_options(evaluate)

    loss = commands.add_parser("loss", help="contrastive loss kernel")
    loss_actions = loss.add_subparsers(dest="action", required=True)
    loss_check = loss_actions.add_parser("check", parents=[common])
    loss_check.add_argument("--m", type=int, default=16)
    loss_check.add_argument("--d", type=int, default=8)
    loss_check.add_argument("--tau", type=float, default=DEFAULT_TAU)
    loss_check.add_argument("--f", default=None)
    loss_check.add_argument("--g", default=None)

    gen = commands.add_parser("gen", parents=[common], help="synthetic scene generation")
    gen.add_argument("--script", default=None)
    gen.add_argument("--cloud-format", choices=["bin", "csv"], default="bin", help="per-frame cloud file format")

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INPUT_ERROR
    configure_logging(args.verbose)

    try:
        config = RunConfig.from_args(args)
        return COMMANDS[config.command](config)
    except (LidarDistillError, ValidationError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except OSError as e:
        logger.error("I/O error: %s", e)
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO_ERROR


if __name__ == "__main__":
    sys.exit(main())

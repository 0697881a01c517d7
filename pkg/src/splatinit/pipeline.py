"""Stage orchestration: dataset directories in, run directories out.

A dataset directory holds the sequence inputs::

    cameras.json                 calibrated camera per frame
    images/frame_{t:06d}.pfm     3-channel color
    depth/frame_{t:06d}.pfm      single-channel metric depth
    flow/frame_{t:06d}.flo       forward flow t -> t+1, for t in [0, T-2]
    masks/frame_{t:06d}.pgm      instance masks consumed by the "oracle"
                                 provider (written by the synth stage)
    tracks.csv                   2D point tracks
    scene.json, truth/           scripted scene and exact references,
                                 present only for generated datasets

A run directory collects one output subtree per stage (detect/, track/,
flow/, encode/, init/, verify/) plus config.toml, the exact configuration
the run used. Every stage writes a manifest.json listing its parameters
and the sha256 of each input and output file. Manifests carry no
timestamps and no absolute paths, so rerunning with one config and
dataset reproduces every output byte for byte; stage wall times go to the
log instead.

Stage failures surface as MissingInput (an expected file is absent) or
StageFailure (anything else), both naming the stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import synthetic
from .config import PipelineConfig, save_config
from .detection import extract_regions, sampson_error, threshold_dynamic
from .encoding import BasisSpec, TrackCurve, eval_positions, fit_curve, read_curves, write_curves
from .errors import ConfigError, MissingInput, SplatinitError, StageFailure
from .formats import (
    InstanceMaskFrame,
    read_flo,
    read_image_pfm,
    read_masks,
    read_pfm,
    read_tracks,
    write_flo,
    write_image_pfm,
    write_masks,
    write_pfm,
    write_tracks,
)
from .geometry import fundamental_matrix, load_cameras, save_cameras
from .initialize import init_dynamic, log_magnitude, sample_static
from .losses import LossWeights, loss_terms
from .records import filter_by_instance, read_gaussians, write_gaussians
from .sceneflow import (
    assign_tracks,
    lift_tracks,
    read_trajectories,
    refine_instance,
    write_motions,
    write_trajectories,
)
from .tracking import DirectoryMaskProvider, reverse_propagate, run_tracking

logger = logging.getLogger("splatinit.pipeline")

STAGE_ORDER = ["synth", "detect", "track", "flow", "encode", "init"]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _frame_path(directory: Path, t: int, suffix: str, prefix: str = "frame") -> Path:
    return directory / f"{prefix}_{t:06d}{suffix}"


def _require(path: Path, stage: str, what: str) -> Path:
    if not Path(path).exists():
        raise MissingInput(f"{stage}: missing {what}: {path}")
    return Path(path)


def _label(path: Path, dataset_dir: Path, output_dir: Path | None) -> str:
    path = Path(path)
    roots = [("output", output_dir), ("dataset", dataset_dir)]
    for name, root in roots:
        if root is not None and path.is_relative_to(root):
            return f"{name}/{path.relative_to(root).as_posix()}"
    return path.name


def _write_manifest(
    stage: str,
    stage_dir: Path,
    parameters: dict,
    inputs: list[Path],
    outputs: list[Path],
    dataset_dir: Path,
    output_dir: Path | None,
) -> None:
    doc = {
        "stage": stage,
        "parameters": parameters,
        "inputs": {
            _label(p, dataset_dir, output_dir): _sha256(p) for p in sorted(set(inputs))
        },
        "outputs": {
            _label(p, dataset_dir, output_dir): _sha256(p) for p in sorted(set(outputs))
        },
    }
    with open(stage_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _parallel_map(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _cameras(dataset_dir: Path, stage: str):
    return load_cameras(_require(dataset_dir / "cameras.json", stage, "cameras.json"))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def resolve_scene(config: PipelineConfig) -> synthetic.SceneSpec:
    """Scene preset by name, or a scene description file by path."""
    factory = synthetic.SCENE_PRESETS.get(config.scene)
    if factory is not None:
        return factory()
    path = Path(config.scene)
    if path.is_file():
        return synthetic.SceneSpec.from_json(path.read_text())
    raise ConfigError(f"scene {config.scene!r} is neither a preset nor a file")


def stage_synth(config: PipelineConfig, dataset_dir: Path) -> None:
    """Render a scripted scene into a full dataset directory."""
    spec = resolve_scene(config)
    dataset_dir = Path(dataset_dir)
    for sub in ("images", "depth", "flow", "masks", "truth"):
        (dataset_dir / sub).mkdir(parents=True, exist_ok=True)
    points = synthetic.ScenePoints(spec)
    outputs: list[Path] = []

    cam_path = dataset_dir / "cameras.json"
    save_cameras([spec.camera_frame(t) for t in range(spec.frame_count)], cam_path)
    scene_path = dataset_dir / "scene.json"
    scene_path.write_text(spec.to_json())
    outputs += [cam_path, scene_path]

    def render_one(t: int) -> list[Path]:
        image, depth, mask = synthetic.render_frame(spec, t, points)
        image_path = _frame_path(dataset_dir / "images", t, ".pfm")
        depth_path = _frame_path(dataset_dir / "depth", t, ".pfm")
        mask_path = _frame_path(dataset_dir / "masks", t, ".pgm")
        write_image_pfm(image, image_path)
        write_pfm(depth, depth_path)
        write_masks(mask, mask_path)
        written = [image_path, depth_path, mask_path, _sidecar(mask_path)]
        if t < spec.frame_count - 1:
            flow_path = _frame_path(dataset_dir / "flow", t, ".flo")
            write_flo(synthetic.render_flow(spec, t, points), flow_path)
            written.append(flow_path)
        return written

    for written in _parallel_map(render_one, range(spec.frame_count), config.jobs):
        outputs += written

    tracks_path = dataset_dir / "tracks.csv"
    write_tracks(
        synthetic.render_tracks(spec, config.n_query_points, config.seed, points),
        tracks_path,
    )
    truth = synthetic.ground_truth(spec, config.n_query_points, config.seed, points)
    truth_traj = dataset_dir / "truth" / "trajectories.csv"
    truth_motions = dataset_dir / "truth" / "motions.json"
    synthetic.write_truth_trajectories(truth, truth_traj)
    write_motions(truth.motions, truth_motions)
    outputs += [tracks_path, truth_traj, truth_motions]

    _write_manifest(
        "synth",
        dataset_dir,
        {
            "scene": config.scene,
            "seed": config.seed,
            "n_query_points": config.n_query_points,
            "frame_count": spec.frame_count,
            "width": spec.width,
            "height": spec.height,
        },
        [],
        outputs,
        dataset_dir,
        None,
    )


def stage_detect(config: PipelineConfig, dataset_dir: Path, output_dir: Path) -> None:
    """Classify pixels as dynamic by epipolar error of the optical flow."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    stage_dir = output_dir / "detect"
    stage_dir.mkdir(parents=True, exist_ok=True)
    cams = _cameras(dataset_dir, "detect")
    flow_paths = [
        _require(_frame_path(dataset_dir / "flow", t, ".flo"), "detect", f"flow frame {t}")
        for t in range(len(cams) - 1)
    ]
    min_area = max(1, round(config.min_area_frac * cams[0].width * cams[0].height))

    def detect_one(t: int) -> list[Path]:
        flow = read_flo(flow_paths[t], frame_index=t)
        err = sampson_error(flow, fundamental_matrix(cams[t], cams[t + 1]))
        regions = extract_regions(
            threshold_dynamic(err, config.tau_epi), min_area=min_area, frame_index=t
        )
        ids = regions.mask.astype(np.uint16)
        confidence = {1: 1.0} if ids.any() else {}
        out = _frame_path(stage_dir, t, ".pgm", prefix="dynamic")
        write_masks(InstanceMaskFrame(flow.width, flow.height, ids, confidence), out)
        return [out, _sidecar(out)]

    outputs: list[Path] = []
    for written in _parallel_map(detect_one, range(len(flow_paths)), config.jobs):
        outputs += written
    _write_manifest(
        "detect",
        stage_dir,
        {"tau_epi": config.tau_epi, "min_area_frac": config.min_area_frac, "min_area": min_area},
        [dataset_dir / "cameras.json"] + flow_paths,
        outputs,
        dataset_dir,
        output_dir,
    )


def _provider_root(config: PipelineConfig, dataset_dir: Path) -> Path:
    # "oracle" reads the dataset's reference masks; "files" reads a
    # directory of externally produced masks in the same layout.
    sub = "masks" if config.provider == "oracle" else "provider_masks"
    return dataset_dir / sub


def stage_track(config: PipelineConfig, dataset_dir: Path, output_dir: Path) -> None:
    """Turn per-pair dynamic regions into consistent instance masks."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    stage_dir = output_dir / "track"
    masks_dir = stage_dir / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    cams = _cameras(dataset_dir, "track")
    t_total = len(cams)

    inputs = [dataset_dir / "cameras.json"]
    regions_by_frame = {}
    for t in range(t_total - 1):
        path = _require(
            _frame_path(output_dir / "detect", t, ".pgm", prefix="dynamic"),
            "track",
            f"detect output for frame {t}",
        )
        raster = read_masks(path)
        regions_by_frame[t] = extract_regions(raster.ids > 0, min_area=1, frame_index=t)
        inputs += [path, _sidecar(path)]

    provider_dir = _require(
        _provider_root(config, dataset_dir), "track", f"{config.provider} mask directory"
    )
    provider = DirectoryMaskProvider(provider_dir)
    result = run_tracking(
        t_total,
        cams[0].width,
        cams[0].height,
        regions_by_frame,
        provider,
        propagation_interval=config.propagation_interval,
        tau_mask=config.tau_mask,
    )
    result = reverse_propagate(result, provider)

    outputs: list[Path] = []
    for t, mask in enumerate(result.masks):
        path = _frame_path(masks_dir, t, ".pgm")
        write_masks(mask, path)
        outputs += [path, _sidecar(path)]
    timelines_path = stage_dir / "timelines.json"
    doc = {
        "instances": [
            {
                "instance_id": tl.instance_id,
                "first_frame": tl.first_frame,
                "last_frame": tl.last_frame,
                "confidence": {str(f): tl.confidence[f] for f in sorted(tl.confidence)},
            }
            for tl in sorted(result.timelines, key=lambda tl: tl.instance_id)
        ]
    }
    with open(timelines_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    outputs.append(timelines_path)

    for path in sorted(provider_dir.iterdir()):
        if path.suffix in (".pgm", ".json"):
            inputs.append(path)
    _write_manifest(
        "track",
        stage_dir,
        {
            "tau_mask": config.tau_mask,
            "propagation_interval": config.propagation_interval,
            "provider": config.provider,
        },
        inputs,
        outputs,
        dataset_dir,
        output_dir,
    )


def stage_flow(config: PipelineConfig, dataset_dir: Path, output_dir: Path) -> None:
    """Lift tracks through depth and refine per-instance rigid motion."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    stage_dir = output_dir / "flow"
    stage_dir.mkdir(parents=True, exist_ok=True)
    cams = _cameras(dataset_dir, "flow")
    t_total = len(cams)

    tracks_path = _require(dataset_dir / "tracks.csv", "flow", "tracks.csv")
    tracks = read_tracks(tracks_path, cams[0].width, cams[0].height)
    inputs = [dataset_dir / "cameras.json", tracks_path]
    depths = []
    track_masks = []
    for t in range(t_total):
        depth_path = _require(
            _frame_path(dataset_dir / "depth", t, ".pfm"), "flow", f"depth frame {t}"
        )
        mask_path = _require(
            _frame_path(output_dir / "track" / "masks", t, ".pgm"),
            "flow",
            f"track output for frame {t}",
        )
        depths.append(read_pfm(depth_path, frame_index=t))
        track_masks.append(read_masks(mask_path))
        inputs += [depth_path, mask_path, _sidecar(mask_path)]

    assignment = assign_tracks(tracks, track_masks)
    trajs = lift_tracks(tracks, depths, cams, assignment)
    kept = [traj for traj in trajs if traj.visible.any()]
    if len(kept) < len(trajs):
        logger.info("flow: dropped %d tracks with no lifted observation", len(trajs) - len(kept))

    motions = []
    for iid in sorted({traj.instance_id for traj in kept}):
        group = [traj for traj in kept if traj.instance_id == iid]
        motions.append(
            refine_instance(
                group,
                iid,
                inlier_frac=config.inlier_fraction,
                max_iters=config.ransac_iterations,
                seed=config.seed,
            )
        )

    traj_path = stage_dir / "trajectories.csv"
    motions_path = stage_dir / "motions.json"
    write_trajectories(kept, traj_path)
    write_motions(motions, motions_path)
    _write_manifest(
        "flow",
        stage_dir,
        {
            "n_query_points": config.n_query_points,
            "ransac_iterations": config.ransac_iterations,
            "inlier_fraction": config.inlier_fraction,
            "seed": config.seed,
        },
        inputs,
        [traj_path, motions_path],
        dataset_dir,
        output_dir,
    )


def stage_encode(config: PipelineConfig, dataset_dir: Path, output_dir: Path) -> None:
    """Fit one positional curve per refined trajectory."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    stage_dir = output_dir / "encode"
    stage_dir.mkdir(parents=True, exist_ok=True)
    traj_path = _require(output_dir / "flow" / "trajectories.csv", "encode", "flow output")
    trajs = read_trajectories(traj_path)
    curves = []
    if trajs:
        spec = BasisSpec(config.d_pol, config.d_fourier, trajs[0].frame_count, config.omega)
        for traj in trajs:
            curve, residual = fit_curve(traj.positions, spec, ridge=config.ridge)
            curves.append(
                TrackCurve(
                    track_id=traj.track_id,
                    instance_id=traj.instance_id,
                    curve=curve,
                    residual_rms=residual,
                )
            )
    curves_path = stage_dir / "curves.csv"
    write_curves(curves, curves_path)
    _write_manifest(
        "encode",
        stage_dir,
        {
            "d_pol": config.d_pol,
            "d_fourier": config.d_fourier,
            "omega": config.omega,
            "ridge": config.ridge,
        },
        [traj_path],
        [curves_path, _sidecar(curves_path)],
        dataset_dir,
        output_dir,
    )


def stage_init(config: PipelineConfig, dataset_dir: Path, output_dir: Path) -> None:
    """Build the initial static and dynamic Gaussian sets."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    stage_dir = output_dir / "init"
    stage_dir.mkdir(parents=True, exist_ok=True)
    cams = _cameras(dataset_dir, "init")
    t_total = len(cams)

    inputs = [dataset_dir / "cameras.json"]
    images = []
    depths = []
    track_masks = []
    for t in range(t_total):
        image_path = _require(
            _frame_path(dataset_dir / "images", t, ".pfm"), "init", f"image frame {t}"
        )
        depth_path = _require(
            _frame_path(dataset_dir / "depth", t, ".pfm"), "init", f"depth frame {t}"
        )
        mask_path = _require(
            _frame_path(output_dir / "track" / "masks", t, ".pgm"),
            "init",
            f"track output for frame {t}",
        )
        images.append(read_image_pfm(image_path))
        depths.append(read_pfm(depth_path, frame_index=t))
        track_masks.append(read_masks(mask_path))
        inputs += [image_path, depth_path, mask_path, _sidecar(mask_path)]
    traj_path = _require(output_dir / "flow" / "trajectories.csv", "init", "flow output")
    curves_path = _require(output_dir / "encode" / "curves.csv", "init", "encode output")
    trajs = read_trajectories(traj_path)
    curves = read_curves(curves_path)
    inputs += [traj_path, curves_path, _sidecar(curves_path)]

    scale_params = {
        "k_scale": config.scale_k,
        "eps_log": config.log_eps,
        "r_min": config.radius_min,
        "r_max": config.radius_max,
    }
    statics = sample_static(
        images,
        track_masks,
        depths,
        cams,
        stride=config.static_stride,
        n_per_frame=config.n_per_frame,
        seed=config.seed,
        sigma=config.log_sigma,
        alpha=config.alpha_init,
        scale_params=scale_params,
    )
    log_maps = [log_magnitude(np.asarray(img, dtype=np.float64), config.log_sigma) for img in images]
    dynamics = init_dynamic(
        trajs,
        curves,
        images,
        log_maps,
        depths,
        cams,
        alpha=config.alpha_init,
        scale_params=scale_params,
    )

    ply_path = stage_dir / "gaussians.ply"
    write_gaussians(statics + dynamics, ply_path, curves[0].curve.spec if curves else None)
    pairing_path = stage_dir / "dynamic_tracks.json"
    with open(pairing_path, "w", encoding="utf-8") as fh:
        json.dump({"track_ids": [traj.track_id for traj in trajs]}, fh, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        "init",
        stage_dir,
        {
            "static_stride": config.static_stride,
            "n_per_frame": config.n_per_frame,
            "seed": config.seed,
            "alpha_init": config.alpha_init,
            "log_sigma": config.log_sigma,
            "log_eps": config.log_eps,
            "scale_k": config.scale_k,
            "radius_min": config.radius_min,
            "radius_max": config.radius_max,
        },
        inputs,
        [ply_path, pairing_path],
        dataset_dir,
        output_dir,
    )


def _mask_iou(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    return int(np.sum(a & b)), int(np.sum(a | b))


def stage_verify(config: PipelineConfig, dataset_dir: Path, output_dir: Path) -> dict:
    """Compare a finished run against the dataset's exact references."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    stage_dir = output_dir / "verify"
    stage_dir.mkdir(parents=True, exist_ok=True)
    cams = _cameras(dataset_dir, "verify")
    t_total = len(cams)

    ply_path = _require(output_dir / "init" / "gaussians.ply", "verify", "init output")
    pairing_path = _require(
        output_dir / "init" / "dynamic_tracks.json", "verify", "dynamic track pairing"
    )
    truth_path = _require(
        dataset_dir / "truth" / "trajectories.csv", "verify", "reference trajectories"
    )
    inputs = [dataset_dir / "cameras.json", ply_path, pairing_path, truth_path]

    records, basis = read_gaussians(ply_path)
    track_ids = json.loads(pairing_path.read_text())["track_ids"]
    dynamics = [rec for rec in records if rec.kind == "dynamic"]
    if len(dynamics) != len(track_ids):
        raise StageFailure(
            f"verify: {len(dynamics)} dynamic records but {len(track_ids)} paired tracks"
        )
    truth = synthetic.read_truth_trajectories(truth_path)
    if dynamics and basis.frame_count != t_total:
        raise StageFailure(
            f"verify: encoding covers {basis.frame_count} frames, sequence has {t_total}"
        )

    taus = np.arange(t_total, dtype=np.float64) / max(t_total - 1, 1)
    sq_sum = 0.0
    samples = 0
    for rec, tid in zip(dynamics, track_ids):
        entry = truth.get(int(tid))
        if entry is None:
            raise StageFailure(f"verify: reference lacks track {tid}")
        _, gt_positions = entry
        diff = eval_positions(rec.deformation, taus) - gt_positions
        sq_sum += float(np.sum(diff**2))
        samples += diff.shape[0]
    rmse = float(np.sqrt(sq_sum / (3 * samples))) if samples else 0.0

    overlap: dict[int, dict[int, int]] = {}
    gt_frames = []
    tracker_frames = []
    for t in range(t_total):
        gt_path = _require(
            _frame_path(dataset_dir / "masks", t, ".pgm"), "verify", f"reference mask {t}"
        )
        tr_path = _require(
            _frame_path(output_dir / "track" / "masks", t, ".pgm"),
            "verify",
            f"track output for frame {t}",
        )
        gt_mask = read_masks(gt_path)
        tr_mask = read_masks(tr_path)
        gt_frames.append(gt_mask)
        tracker_frames.append(tr_mask)
        inputs += [gt_path, _sidecar(gt_path), tr_path, _sidecar(tr_path)]
        for gid in np.unique(gt_mask.ids):
            if gid == 0:
                continue
            sel = gt_mask.ids == gid
            counts = overlap.setdefault(int(gid), {})
            for tid_, n in zip(*np.unique(tr_mask.ids[sel], return_counts=True)):
                if tid_ != 0:
                    counts[int(tid_)] = counts.get(int(tid_), 0) + int(n)

    instances = {}
    min_iou = 1.0
    for gid, counts in sorted(overlap.items()):
        if not counts:
            instances[str(gid)] = {"tracker_id": 0, "iou": 0.0, "min_frame_iou": 0.0}
            min_iou = 0.0
            continue
        matched = max(sorted(counts), key=lambda k: counts[k])
        inter_sum = 0
        union_sum = 0
        frame_min = 1.0
        for gt_mask, tr_mask in zip(gt_frames, tracker_frames):
            inter, union = _mask_iou(gt_mask.ids == gid, tr_mask.ids == matched)
            inter_sum += inter
            union_sum += union
            if union:
                frame_min = min(frame_min, inter / union)
        iou = inter_sum / union_sum if union_sum else 1.0
        instances[str(gid)] = {
            "tracker_id": matched,
            "iou": iou,
            "min_frame_iou": frame_min,
        }
        min_iou = min(min_iou, frame_min)

    report = {
        "trajectory_rmse": rmse,
        "dynamic_count": len(dynamics),
        "frame_count": t_total,
        "instances": instances,
        "min_iou": min_iou,
    }
    report_path = stage_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    _write_manifest(
        "verify", stage_dir, {}, inputs, [report_path], dataset_dir, output_dir
    )
    return report


_STAGE_FUNCS = {
    "synth": stage_synth,
    "detect": stage_detect,
    "track": stage_track,
    "flow": stage_flow,
    "encode": stage_encode,
    "init": stage_init,
    "verify": stage_verify,
}


def run_stage(name: str, config: PipelineConfig, dataset_dir, output_dir):
    """Run one stage, wrapping unexpected failures with the stage name."""
    fn = _STAGE_FUNCS[name]
    start = time.perf_counter()
    try:
        if name == "synth":
            result = fn(config, dataset_dir)
        else:
            result = fn(config, dataset_dir, output_dir)
    except MissingInput:
        raise
    except SplatinitError as exc:
        raise StageFailure(f"{name}: {exc}") from exc
    except Exception as exc:  # noqa: BLE001 - stage boundary
        raise StageFailure(f"{name}: {exc!r}") from exc
    logger.info("stage %s finished in %.2fs", name, time.perf_counter() - start)
    return result


def run_pipeline(config: PipelineConfig, dataset_dir, output_dir) -> None:
    """Generate (when a scene is configured) and process a full sequence."""
    dataset_dir, output_dir = Path(dataset_dir), Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, output_dir / "config.toml")
    names = STAGE_ORDER if config.scene else STAGE_ORDER[1:]
    for name in names:
        run_stage(name, config, dataset_dir, output_dir)


def evaluate_losses(
    image_path, ref_image_path, depth_path, ref_depth_path, config: PipelineConfig
) -> dict[str, float]:
    """Loss terms between two rendered (image, depth) pairs on disk."""
    img = read_image_pfm(_require(Path(image_path), "eval-loss", "image"))
    ref = read_image_pfm(_require(Path(ref_image_path), "eval-loss", "reference image"))
    depth = read_pfm(_require(Path(depth_path), "eval-loss", "depth"))
    ref_depth = read_pfm(_require(Path(ref_depth_path), "eval-loss", "reference depth"))
    weights = LossWeights(lambda_ssim=config.lambda_ssim, lambda_depth=config.lambda_depth)
    return loss_terms(img, ref, depth.values, ref_depth.values, weights)


def edit_gaussians(
    input_path, output_path, keep=None, remove=None, include_static=True
) -> tuple[int, int]:
    """Filter a Gaussian set by instance id; returns (read, written) counts."""
    records, spec = read_gaussians(_require(Path(input_path), "edit", "gaussian set"))
    kept = filter_by_instance(records, keep=keep, remove=remove, include_static=include_static)
    write_gaussians(kept, output_path, spec)
    return len(records), len(kept)

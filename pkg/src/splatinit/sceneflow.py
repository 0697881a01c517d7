"""3D scene flow from 2D tracks: lifting, rigid refinement, interpolation.

Tracks vote for an instance through the tracked masks, visible observations
are lifted to world points with the nearest depth sample, and per-instance
rigid motion estimated by RANSAC fills occluded frames forward and backward.
Remaining gaps are interpolated linearly so every trajectory becomes total
over [0, T).

Provenance of every filled position is recorded per frame:
observed, rigid_forward, rigid_backward, interpolated.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    EmptyTrajectory,
    MalformedHeader,
    TooFewPoints,
)
from .formats import DepthMap, InstanceMaskFrame, TrackTable
from .geometry import CameraFrame, RigidTransform, unproject_pixels

logger = logging.getLogger(__name__)

PROV_UNSET = 0
PROV_OBSERVED = 1
PROV_RIGID_FORWARD = 2
PROV_RIGID_BACKWARD = 3
PROV_INTERPOLATED = 4

PROVENANCE_NAMES = ["unset", "observed", "rigid_forward", "rigid_backward", "interpolated"]

_DEGENERATE_SV_RATIO = 1e-9


@dataclass
class Trajectory3D:
    """World trajectory of one track over all frames.

    `positions[t]` is meaningful only where `visible[t]`; `provenance[t]`
    records how it was produced. `px`, `py`, `obs_visible` carry the raw
    2D observations for downstream color and scale sampling.
    """

    track_id: int
    instance_id: int
    positions: np.ndarray
    visible: np.ndarray
    provenance: np.ndarray
    px: np.ndarray
    py: np.ndarray
    obs_visible: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        t = self.positions.shape[0]
        if self.positions.shape != (t, 3):
            raise ValueError("positions must be (T, 3)")
        self.visible = np.asarray(self.visible, dtype=bool)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8)
        self.px = np.asarray(self.px, dtype=np.float64)
        self.py = np.asarray(self.py, dtype=np.float64)
        self.obs_visible = np.asarray(self.obs_visible, dtype=bool)
        for name in ("visible", "provenance", "px", "py", "obs_visible"):
            if getattr(self, name).shape != (t,):
                raise ValueError(f"{name} must have shape ({t},)")

    @property
    def frame_count(self) -> int:
        return int(self.positions.shape[0])

    def first_observed_frame(self) -> int:
        observed = np.flatnonzero(self.provenance == PROV_OBSERVED)
        if observed.size == 0:
            raise EmptyTrajectory(f"track {self.track_id} has no observed frame")
        return int(observed[0])


def assign_tracks(tracks: TrackTable, masks: list[InstanceMaskFrame]) -> dict[int, int]:
    """Majority vote of each track's visible observations over mask ids.

    Ties go to the smaller nonzero id; background (0) wins only with a
    strict majority. Tracks with no usable observation map to 0.
    """
    votes: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for i in range(len(tracks)):
        if not tracks.visible[i]:
            continue
        f = int(tracks.frame[i])
        if f < 0 or f >= len(masks):
            continue
        mask = masks[f]
        ix = min(int(round(float(tracks.x[i]))), mask.width - 1)
        iy = min(int(round(float(tracks.y[i]))), mask.height - 1)
        votes[int(tracks.track_id[i])][int(mask.ids[iy, ix])] += 1
    out: dict[int, int] = {}
    for tid in (int(v) for v in tracks.track_ids()):
        counts = votes.get(tid)
        if not counts:
            out[tid] = 0
            continue
        nonzero = [(cnt, -iid) for iid, cnt in counts.items() if iid != 0]
        if not nonzero:
            out[tid] = 0
            continue
        best_count, neg_id = max(nonzero)
        out[tid] = 0 if counts.get(0, 0) > best_count else -neg_id
    return out


def lift_tracks(
    tracks: TrackTable,
    depths: list[DepthMap],
    cams: list[CameraFrame],
    assignment: dict[int, int] | None = None,
) -> list[Trajectory3D]:
    """Lift visible observations to world points with nearest-pixel depth.

    Observations landing on a missing depth sample (<= 0) stay invisible.
    When `assignment` is given, only tracks mapped to a nonzero instance
    are lifted. Returned trajectories are ordered by track id.
    """
    if len(depths) != len(cams):
        raise ValueError("depths and cameras must cover the same frames")
    t_total = len(cams)
    trajs: dict[int, Trajectory3D] = {}
    for tid in (int(v) for v in tracks.track_ids()):
        iid = assignment.get(tid, 0) if assignment is not None else 0
        if assignment is not None and iid == 0:
            continue
        trajs[tid] = Trajectory3D(
            track_id=tid,
            instance_id=iid,
            positions=np.full((t_total, 3), np.nan),
            visible=np.zeros(t_total, dtype=bool),
            provenance=np.full(t_total, PROV_UNSET, dtype=np.uint8),
            px=np.full(t_total, np.nan),
            py=np.full(t_total, np.nan),
            obs_visible=np.zeros(t_total, dtype=bool),
        )
    for i in range(len(tracks)):
        tid = int(tracks.track_id[i])
        traj = trajs.get(tid)
        if traj is None:
            continue
        f = int(tracks.frame[i])
        if f < 0 or f >= t_total:
            continue
        traj.px[f] = float(tracks.x[i])
        traj.py[f] = float(tracks.y[i])
        traj.obs_visible[f] = bool(tracks.visible[i])
    for f in range(t_total):
        depth = depths[f]
        cam = cams[f]
        pend_traj = []
        pend_px = []
        for traj in trajs.values():
            if not traj.obs_visible[f]:
                continue
            ix = min(int(round(traj.px[f])), depth.width - 1)
            iy = min(int(round(traj.py[f])), depth.height - 1)
            d = float(depth.values[iy, ix])
            if d <= 0.0:
                continue
            pend_traj.append((traj, d))
            pend_px.append((traj.px[f], traj.py[f]))
        if not pend_traj:
            continue
        pixels = np.array(pend_px, dtype=np.float64)
        ds = np.array([d for _, d in pend_traj], dtype=np.float64)
        world = unproject_pixels(pixels, ds, cam)
        for (traj, _), point in zip(pend_traj, world):
            traj.positions[f] = point
            traj.visible[f] = True
            traj.provenance[f] = PROV_OBSERVED
    return [trajs[tid] for tid in sorted(trajs)]


def kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform src -> dst via SVD of the cross-covariance."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must both be (N, 3)")
    if src.shape[0] < 3:
        raise TooFewPoints(f"{src.shape[0]} correspondences < 3")
    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    H = (src - c_src).T @ (dst - c_dst)
    U, S, Vt = np.linalg.svd(H)
    if S[0] <= 0.0 or S[1] <= _DEGENERATE_SV_RATIO * S[0]:
        raise DegenerateConfiguration("points are collinear or coincident")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform(R, c_dst - R @ c_src)


def estimate_rigid(
    src: np.ndarray,
    dst: np.ndarray,
    inlier_tol: float,
    max_iters: int = 256,
    seed=0,
) -> tuple[RigidTransform, np.ndarray]:
    """RANSAC rigid fit with 3-point minimal samples and a Kabsch refit.

    Returns the refit transform and the index array of its inliers.
    Deterministic for a fixed seed (int, sequence, or Generator).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must both be (N, 3)")
    n = src.shape[0]
    if n < 3:
        raise TooFewPoints(f"{n} correspondences < 3")
    if inlier_tol <= 0.0:
        raise ValueError("inlier_tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    samples = np.argsort(rng.random((max_iters, n)), axis=1)[:, :3]
    A = src[samples]
    B = dst[samples]
    ca = A.mean(axis=1, keepdims=True)
    cb = B.mean(axis=1, keepdims=True)
    H = np.matmul((A - ca).transpose(0, 2, 1), B - cb)
    U, S, Vt = np.linalg.svd(H)
    valid = (S[:, 0] > 0.0) & (S[:, 1] > _DEGENERATE_SV_RATIO * S[:, 0])
    V = Vt.transpose(0, 2, 1)
    det = np.linalg.det(np.matmul(V, U.transpose(0, 2, 1)))
    V = V.copy()
    V[:, :, 2] *= np.sign(det)[:, None]
    R = np.matmul(V, U.transpose(0, 2, 1))
    t = cb[:, 0, :] - np.einsum("mij,mj->mi", R, ca[:, 0, :])
    pred = np.einsum("mij,nj->mni", R, src) + t[:, None, :]
    dist = np.linalg.norm(pred - dst[None, :, :], axis=2)
    counts = (dist < inlier_tol).sum(axis=1)
    counts[~valid] = -1
    best = int(np.argmax(counts))
    if counts[best] < 0:
        raise DegenerateConfiguration("every minimal sample was degenerate")

    best_transform = RigidTransform(R[best], t[best])
    inlier_idx = np.flatnonzero(dist[best] < inlier_tol)
    if inlier_idx.size >= 3:
        try:
            best_transform = kabsch(src[inlier_idx], dst[inlier_idx])
        except DegenerateConfiguration:
            pass
    final_dist = np.linalg.norm(best_transform.apply(src) - dst, axis=1)
    final_inliers = np.flatnonzero(final_dist < inlier_tol)
    return best_transform, final_inliers


@dataclass
class InstanceMotion:
    """Per-pair rigid motion of one instance across the sequence.

    transforms[t] maps frame t points to frame t+1. `estimated[t]` is
    False where too few co-visible points forced carrying the previous
    transform (identity before any estimate); inlier_counts are 0 there.
    """

    instance_id: int
    transforms: list[RigidTransform] = field(default_factory=list)
    inlier_counts: list[int] = field(default_factory=list)
    estimated: list[bool] = field(default_factory=list)


def _bbox_diagonal(points: np.ndarray) -> float:
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def _estimate_pair(
    trajs: list[Trajectory3D],
    t: int,
    prev: RigidTransform,
    inlier_frac: float,
    max_iters: int,
    seed_seq: list[int],
) -> tuple[RigidTransform, int, bool]:
    covis = [traj for traj in trajs if traj.visible[t] and traj.visible[t + 1]]
    if len(covis) < 3:
        return prev, 0, False
    src = np.array([traj.positions[t] for traj in covis])
    dst = np.array([traj.positions[t + 1] for traj in covis])
    tol = inlier_frac * _bbox_diagonal(src)
    if tol <= 0.0:
        return prev, 0, False
    try:
        transform, inliers = estimate_rigid(
            src, dst, inlier_tol=tol, max_iters=max_iters, seed=seed_seq
        )
    except (DegenerateConfiguration, TooFewPoints):
        logger.warning("pair %d: degenerate rigid fit, carrying previous", t)
        return prev, 0, False
    return transform, int(inliers.size), True


def refine_forward(
    trajs: list[Trajectory3D],
    instance_id: int,
    inlier_frac: float = 0.02,
    max_iters: int = 256,
    seed: int = 0,
) -> InstanceMotion:
    """Fill forward occlusions: a point visible at t but not t+1 moves with
    the pair's rigid transform. Filled points join later estimations."""
    if not trajs:
        raise EmptyTrajectory("no trajectories for instance")
    t_total = trajs[0].frame_count
    motion = InstanceMotion(instance_id=instance_id)
    prev = RigidTransform.identity()
    for t in range(t_total - 1):
        transform, inliers, estimated = _estimate_pair(
            trajs, t, prev, inlier_frac, max_iters, [seed, instance_id, 0, t]
        )
        for traj in trajs:
            if traj.visible[t] and not traj.visible[t + 1]:
                traj.positions[t + 1] = transform.apply(traj.positions[t])
                traj.visible[t + 1] = True
                traj.provenance[t + 1] = PROV_RIGID_FORWARD
        motion.transforms.append(transform)
        motion.inlier_counts.append(inliers)
        motion.estimated.append(estimated)
        prev = transform
    return motion


def refine_backward(
    trajs: list[Trajectory3D],
    instance_id: int,
    inlier_frac: float = 0.02,
    max_iters: int = 256,
    seed: int = 0,
) -> InstanceMotion:
    """Symmetric backward pass: a point visible at t+1 but not t moves with
    the inverse of the pair's transform."""
    if not trajs:
        raise EmptyTrajectory("no trajectories for instance")
    t_total = trajs[0].frame_count
    motion = InstanceMotion(instance_id=instance_id)
    prev = RigidTransform.identity()
    rev_transforms: list[RigidTransform] = []
    rev_counts: list[int] = []
    rev_estimated: list[bool] = []
    for t in range(t_total - 2, -1, -1):
        transform, inliers, estimated = _estimate_pair(
            trajs, t, prev, inlier_frac, max_iters, [seed, instance_id, 1, t]
        )
        inverse = transform.inverse()
        for traj in trajs:
            if traj.visible[t + 1] and not traj.visible[t]:
                traj.positions[t] = inverse.apply(traj.positions[t + 1])
                traj.visible[t] = True
                traj.provenance[t] = PROV_RIGID_BACKWARD
        rev_transforms.append(transform)
        rev_counts.append(inliers)
        rev_estimated.append(estimated)
        prev = transform
    motion.transforms = rev_transforms[::-1]
    motion.inlier_counts = rev_counts[::-1]
    motion.estimated = rev_estimated[::-1]
    return motion


def interpolate_gaps(traj: Trajectory3D) -> None:
    """Fill remaining gaps linearly, extending endpoints as constants."""
    known = np.flatnonzero(traj.visible)
    if known.size == 0:
        raise EmptyTrajectory(f"track {traj.track_id} has no visible frame")
    frames = np.arange(traj.frame_count)
    missing = ~traj.visible
    if not missing.any():
        return
    for axis in range(3):
        traj.positions[missing, axis] = np.interp(
            frames[missing], known, traj.positions[known, axis]
        )
    traj.visible[missing] = True
    traj.provenance[missing] = PROV_INTERPOLATED


def refine_instance(
    trajs: list[Trajectory3D],
    instance_id: int,
    inlier_frac: float = 0.02,
    max_iters: int = 256,
    seed: int = 0,
) -> InstanceMotion:
    """Forward fill, backward fill, then interpolate every trajectory."""
    motion = refine_forward(trajs, instance_id, inlier_frac, max_iters, seed)
    refine_backward(trajs, instance_id, inlier_frac, max_iters, seed)
    for traj in trajs:
        interpolate_gaps(traj)
    return motion


TRAJECTORY_HEADER = [
    "track_id", "frame", "x", "y", "visible", "X", "Y", "Z", "provenance", "instance_id",
]


def write_trajectories(trajs: list[Trajectory3D], path) -> None:
    """One CSV row per (track, frame); x, y empty where never observed."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for traj in sorted(trajs, key=lambda tr: tr.track_id):
            for f in range(traj.frame_count):
                has_obs = not (np.isnan(traj.px[f]) or np.isnan(traj.py[f]))
                writer.writerow(
                    [
                        traj.track_id,
                        f,
                        repr(float(traj.px[f])) if has_obs else "",
                        repr(float(traj.py[f])) if has_obs else "",
                        1 if traj.obs_visible[f] else 0,
                        repr(float(traj.positions[f, 0])),
                        repr(float(traj.positions[f, 1])),
                        repr(float(traj.positions[f, 2])),
                        PROVENANCE_NAMES[traj.provenance[f]],
                        traj.instance_id,
                    ]
                )


def read_trajectories(path) -> list[Trajectory3D]:
    rows: dict[int, list] = defaultdict(list)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise MalformedHeader(f"trajectory header {header!r}")
        for row in reader:
            rows[int(row[0])].append(row)
    out = []
    for tid in sorted(rows):
        entries = sorted(rows[tid], key=lambda r: int(r[1]))
        frames = [int(r[1]) for r in entries]
        t_total = len(entries)
        if frames != list(range(t_total)):
            raise MalformedHeader(f"track {tid} rows are not contiguous from 0")
        traj = Trajectory3D(
            track_id=tid,
            instance_id=int(entries[0][9]),
            positions=np.array([[float(r[5]), float(r[6]), float(r[7])] for r in entries]),
            visible=np.ones(t_total, dtype=bool),
            provenance=np.array(
                [PROVENANCE_NAMES.index(r[8]) for r in entries], dtype=np.uint8
            ),
            px=np.array([float(r[2]) if r[2] else np.nan for r in entries]),
            py=np.array([float(r[3]) if r[3] else np.nan for r in entries]),
            obs_visible=np.array([r[4] == "1" for r in entries], dtype=bool),
        )
        out.append(traj)
    return out


def write_motions(motions: list[InstanceMotion], path) -> None:
    doc = {
        "instances": [
            {
                "instance_id": m.instance_id,
                "pairs": [
                    {
                        "frame": t,
                        "R": [float(v) for v in m.transforms[t].R.reshape(-1)],
                        "t": [float(v) for v in m.transforms[t].t],
                        "inliers": int(m.inlier_counts[t]),
                        "estimated": bool(m.estimated[t]),
                    }
                    for t in range(len(m.transforms))
                ],
            }
            for m in sorted(motions, key=lambda m: m.instance_id)
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_motions(path) -> list[InstanceMotion]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for entry in doc["instances"]:
        motion = InstanceMotion(instance_id=int(entry["instance_id"]))
        for pair in entry["pairs"]:
            motion.transforms.append(
                RigidTransform(
                    np.array(pair["R"], dtype=np.float64).reshape(3, 3),
                    np.array(pair["t"], dtype=np.float64),
                )
            )
            motion.inlier_counts.append(int(pair["inliers"]))
            motion.estimated.append(bool(pair["estimated"]))
        out.append(motion)
    return out

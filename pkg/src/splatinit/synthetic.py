"""Fully ground-truthed synthetic scenes for exercising the pipeline.

Scenes are point sets: rigid colored point-cloud objects on scripted
motions (linear, sinusoidal, triangle-wave translation plus rotation about
the object center) in front of a static textured background plane, viewed
by a translating camera with fixed orientation. Every rendered product
(color, depth, flow, instance masks, 2D tracks) is derived analytically
from the same script, so downstream stages can be checked against exact
ground truth.

Scene specs serialize to JSON and regenerate byte-identical datasets: the
point sets themselves are re-drawn from seeded generators, never stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formats import DepthMap, FlowField, InstanceMaskFrame, TrackTable
from .geometry import CameraFrame, RigidTransform, project_points, unproject_pixels
from .sceneflow import InstanceMotion

TRUTH_HEADER = ["track_id", "frame", "X", "Y", "Z", "instance_id"]


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValueError("rotation axis must be nonzero")
    axis = axis / norm
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _triangle_position(t: int, half_period: int) -> int:
    """Zigzag integer sequence: 0,1,..,h,h-1,..,0,1,.. with unit steps."""
    cycle = 2 * half_period
    phase = t % cycle
    return phase if phase <= half_period else cycle - phase


@dataclass(frozen=True)
class MotionScript:
    """Scripted rigid motion: translation components plus a spin.

    The translation offset at frame t (of T) is

        velocity * t + amplitude * sin(2*pi*harmonic * t/(T-1))
                     + triangle_step * zigzag(t)

    and the rotation turns `turns` full revolutions about `rotation_axis`
    through the object center over the sequence, linear in t.
    """

    velocity: tuple = (0.0, 0.0, 0.0)
    amplitude: tuple = (0.0, 0.0, 0.0)
    harmonic: int = 1
    triangle_step: tuple = (0.0, 0.0, 0.0)
    triangle_half_period: int = 0
    rotation_axis: tuple = (0.0, 0.0, 1.0)
    turns: float = 0.0

    def offset(self, t: int, frame_count: int) -> np.ndarray:
        tau = t / (frame_count - 1) if frame_count > 1 else 0.0
        out = np.asarray(self.velocity, dtype=np.float64) * t
        out = out + np.asarray(self.amplitude, dtype=np.float64) * np.sin(
            2.0 * np.pi * self.harmonic * tau
        )
        if self.triangle_half_period > 0:
            out = out + np.asarray(self.triangle_step, dtype=np.float64) * _triangle_position(
                t, self.triangle_half_period
            )
        return out

    def rotation(self, t: int, frame_count: int) -> np.ndarray:
        if self.turns == 0.0:
            return np.eye(3)
        tau = t / (frame_count - 1) if frame_count > 1 else 0.0
        return _rodrigues(np.asarray(self.rotation_axis), 2.0 * np.pi * self.turns * tau)

    def to_dict(self) -> dict:
        return {
            "velocity": list(self.velocity),
            "amplitude": list(self.amplitude),
            "harmonic": self.harmonic,
            "triangle_step": list(self.triangle_step),
            "triangle_half_period": self.triangle_half_period,
            "rotation_axis": list(self.rotation_axis),
            "turns": self.turns,
        }

    @staticmethod
    def from_dict(data: dict) -> "MotionScript":
        return MotionScript(
            velocity=tuple(data["velocity"]),
            amplitude=tuple(data["amplitude"]),
            harmonic=int(data["harmonic"]),
            triangle_step=tuple(data["triangle_step"]),
            triangle_half_period=int(data["triangle_half_period"]),
            rotation_axis=tuple(data["rotation_axis"]),
            turns=float(data["turns"]),
        )


@dataclass(frozen=True)
class ObjectSpec:
    """A rigid ball-shaped point cloud with a motion script."""

    instance_id: int
    center: tuple
    radius: float
    n_points: int
    motion: MotionScript = field(default_factory=MotionScript)

    def __post_init__(self):
        if self.instance_id < 1:
            raise ValueError("object instance_id must be >= 1")
        if self.n_points < 100:
            raise ValueError("objects need at least 100 points")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")

    def points(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Base-frame positions and colors, drawn deterministically."""
        rng = np.random.default_rng([seed, self.instance_id])
        directions = rng.normal(size=(self.n_points, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(0.0, 1.0, self.n_points) ** (1.0 / 3.0)
        positions = np.asarray(self.center, dtype=np.float64) + directions * radii[:, None]
        colors = rng.uniform(0.1, 1.0, size=(self.n_points, 3))
        return positions, colors


@dataclass(frozen=True)
class BackgroundSpec:
    """Static fronto-parallel plane of textured grid points."""

    z: float = 8.0
    x_min: float = -4.0
    x_max: float = 4.0
    y_min: float = -4.0
    y_max: float = 4.0
    step: float = 0.045

    def __post_init__(self):
        if self.z <= 0.0 or self.step <= 0.0:
            raise ValueError("background needs positive depth and step")

    def points(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        xs = np.arange(self.x_min, self.x_max, self.step)
        ys = np.arange(self.y_min, self.y_max, self.step)
        gx, gy = np.meshgrid(xs, ys)
        positions = np.stack(
            [gx.ravel(), gy.ravel(), np.full(gx.size, self.z)], axis=1
        )
        rng = np.random.default_rng([seed, 0])
        colors = rng.uniform(0.05, 0.95, size=(positions.shape[0], 3))
        return positions, colors

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "step": self.step,
        }


@dataclass(frozen=True)
class CameraPathSpec:
    """Linear camera translation with orientation fixed at frame 0."""

    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    target: tuple = (0.0, 0.0, 1.0)
    up: tuple = (0.0, -1.0, 0.0)
    focal: float = 140.0

    def rotation(self) -> np.ndarray:
        position = np.asarray(self.position, dtype=np.float64)
        forward = np.asarray(self.target, dtype=np.float64) - position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        return np.stack([right, down, forward])

    def frame(self, t: int, width: int, height: int) -> CameraFrame:
        center = np.asarray(self.position, dtype=np.float64) + np.asarray(
            self.velocity, dtype=np.float64
        ) * t
        R = self.rotation()
        K = np.array(
            [
                [self.focal, 0.0, (width - 1) / 2.0],
                [0.0, self.focal, (height - 1) / 2.0],
                [0.0, 0.0, 1.0],
            ]
        )
        return CameraFrame(
            frame_index=t, width=width, height=height, K=K, R=R, t=-R @ center
        )

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "velocity": list(self.velocity),
            "target": list(self.target),
            "up": list(self.up),
            "focal": self.focal,
        }


@dataclass(frozen=True)
class SceneSpec:
    name: str
    frame_count: int
    width: int
    height: int
    seed: int
    camera: CameraPathSpec
    background: BackgroundSpec
    objects: tuple

    def __post_init__(self):
        if self.frame_count < 2:
            raise ValueError("a scene needs at least two frames")
        ids = [obj.instance_id for obj in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object instance ids must be unique")
        object.__setattr__(self, "objects", tuple(self.objects))

    def camera_frame(self, t: int) -> CameraFrame:
        return self.camera.frame(t, self.width, self.height)

    def object_transform(self, obj: ObjectSpec, t: int) -> RigidTransform:
        """World-frame rigid map taking base-frame object points to frame t."""
        R = obj.motion.rotation(t, self.frame_count)
        center = np.asarray(obj.center, dtype=np.float64)
        offset = obj.motion.offset(t, self.frame_count)
        return RigidTransform(R=R, t=center - R @ center + offset)

    def pair_motions(self, obj: ObjectSpec) -> list[RigidTransform]:
        """World transforms mapping frame t to t+1, for t in [0, T-2]."""
        out = []
        for t in range(self.frame_count - 1):
            a = self.object_transform(obj, t)
            b = self.object_transform(obj, t + 1)
            out.append(b.compose(a.inverse()))
        return out

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "frame_count": self.frame_count,
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "camera": self.camera.to_dict(),
            "background": self.background.to_dict(),
            "objects": [
                {
                    "instance_id": obj.instance_id,
                    "center": list(obj.center),
                    "radius": obj.radius,
                    "n_points": obj.n_points,
                    "motion": obj.motion.to_dict(),
                }
                for obj in self.objects
            ],
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        data = json.loads(text)
        return SceneSpec(
            name=data["name"],
            frame_count=int(data["frame_count"]),
            width=int(data["width"]),
            height=int(data["height"]),
            seed=int(data["seed"]),
            camera=CameraPathSpec(
                position=tuple(data["camera"]["position"]),
                velocity=tuple(data["camera"]["velocity"]),
                target=tuple(data["camera"]["target"]),
                up=tuple(data["camera"]["up"]),
                focal=float(data["camera"]["focal"]),
            ),
            background=BackgroundSpec(**data["background"]),
            objects=tuple(
                ObjectSpec(
                    instance_id=int(o["instance_id"]),
                    center=tuple(o["center"]),
                    radius=float(o["radius"]),
                    n_points=int(o["n_points"]),
                    motion=MotionScript.from_dict(o["motion"]),
                )
                for o in data["objects"]
            ),
        )


class ScenePoints:
    """Materialized base-frame point sets of a scene."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        positions = []
        colors = []
        ids = []
        bg_pos, bg_col = spec.background.points(spec.seed)
        positions.append(bg_pos)
        colors.append(bg_col)
        ids.append(np.zeros(bg_pos.shape[0], dtype=np.uint16))
        for obj in spec.objects:
            pos, col = obj.points(spec.seed)
            positions.append(pos)
            colors.append(col)
            ids.append(np.full(pos.shape[0], obj.instance_id, dtype=np.uint16))
        self.base_positions = np.concatenate(positions, axis=0)
        self.colors = np.concatenate(colors, axis=0)
        self.ids = np.concatenate(ids, axis=0)
        self._objects = {obj.instance_id: obj for obj in spec.objects}

    def positions_at(self, t: int) -> np.ndarray:
        out = self.base_positions.copy()
        for iid, obj in self._objects.items():
            sel = self.ids == iid
            transform = self.spec.object_transform(obj, t)
            out[sel] = transform.apply(out[sel])
        return out

    def pair_transform(self, instance_id: int, t: int) -> RigidTransform:
        if instance_id == 0:
            return RigidTransform.identity()
        obj = self._objects[instance_id]
        a = self.spec.object_transform(obj, t)
        b = self.spec.object_transform(obj, t + 1)
        return b.compose(a.inverse())


def _rasterize(points: ScenePoints, t: int):
    """Z-buffer splat with 1-px footprint.

    Returns (image, depth, ids, winner) where winner[r, c] is the global
    point index owning the pixel, -1 where empty. Nearest z wins; equal
    depths go to the lowest point index.
    """
    spec = points.spec
    cam = spec.camera_frame(t)
    positions = points.positions_at(t)
    pixels, depths = project_points(positions, cam)
    cols = np.round(pixels[:, 0]).astype(np.int64)
    rows = np.round(pixels[:, 1]).astype(np.int64)
    valid = (
        (depths > 0.0)
        & (cols >= 0)
        & (cols < spec.width)
        & (rows >= 0)
        & (rows < spec.height)
    )
    idx = np.flatnonzero(valid)
    order = np.lexsort((idx, depths[idx]))[::-1]  # far to near, ties leave low idx last
    idx = idx[order]
    image = np.zeros((spec.height, spec.width, 3), dtype=np.float64)
    depth = np.zeros((spec.height, spec.width), dtype=np.float64)
    ids = np.zeros((spec.height, spec.width), dtype=np.uint16)
    winner = np.full((spec.height, spec.width), -1, dtype=np.int64)
    image[rows[idx], cols[idx]] = points.colors[idx]
    depth[rows[idx], cols[idx]] = depths[idx]
    ids[rows[idx], cols[idx]] = points.ids[idx]
    winner[rows[idx], cols[idx]] = idx
    return image, depth, ids, winner, pixels, depths


def render_frame(
    spec: SceneSpec, t: int, points: ScenePoints | None = None
) -> tuple[np.ndarray, DepthMap, InstanceMaskFrame]:
    """Color, depth and instance-mask rasters of frame t."""
    if not 0 <= t < spec.frame_count:
        raise ValueError(f"frame {t} outside [0, {spec.frame_count})")
    points = points or ScenePoints(spec)
    image, depth, ids, _, _, _ = _rasterize(points, t)
    present = set(int(v) for v in np.unique(ids)) - {0}
    mask = InstanceMaskFrame(
        spec.width, spec.height, ids, {iid: 1.0 for iid in present}
    )
    return image, DepthMap(spec.width, spec.height, depth.astype(np.float32), t), mask


def render_flow(spec: SceneSpec, t: int, points: ScenePoints | None = None) -> FlowField:
    """Exact forward flow t -> t+1 at covered pixels, zero elsewhere.

    Each covered pixel center is lifted with the z-buffer depth, moved by
    its instance's scripted pair motion (identity for background) and
    reprojected into the next camera.
    """
    if not 0 <= t < spec.frame_count - 1:
        raise ValueError(f"flow frame {t} outside [0, {spec.frame_count - 1})")
    points = points or ScenePoints(spec)
    _, depth, ids, winner, _, _ = _rasterize(points, t)
    cam = spec.camera_frame(t)
    cam_next = spec.camera_frame(t + 1)
    flow = np.zeros((spec.height, spec.width, 2), dtype=np.float64)
    covered = winner >= 0
    rows, cols = np.nonzero(covered)
    pixel_centers = np.stack([cols, rows], axis=1).astype(np.float64)
    lifted = unproject_pixels(pixel_centers, depth[rows, cols], cam)
    pixel_ids = ids[rows, cols]
    moved = lifted.copy()
    for iid in np.unique(pixel_ids):
        if iid == 0:
            continue
        transform = points.pair_transform(int(iid), t)
        sel = pixel_ids == iid
        moved[sel] = transform.apply(lifted[sel])
    reprojected, _ = project_points(moved, cam_next)
    flow[rows, cols] = reprojected - pixel_centers
    return FlowField(spec.width, spec.height, flow.astype(np.float32), t)


def sample_track_points(
    spec: SceneSpec, n_tracks: int, seed: int, points: ScenePoints | None = None
) -> np.ndarray:
    """Deterministic choice of object point indices to track."""
    points = points or ScenePoints(spec)
    candidates = np.flatnonzero(points.ids > 0)
    if candidates.size == 0:
        return np.zeros(0, dtype=np.int64)
    rng = np.random.default_rng([seed, 997])
    n = min(n_tracks, candidates.size)
    chosen = rng.choice(candidates, size=n, replace=False)
    return np.sort(chosen)


def render_tracks(
    spec: SceneSpec, n_tracks: int, seed: int, points: ScenePoints | None = None
) -> TrackTable:
    """2D tracks of sampled object points with z-buffer visibility."""
    points = points or ScenePoints(spec)
    chosen = sample_track_points(spec, n_tracks, seed, points)
    track_ids = []
    frames = []
    xs = []
    ys = []
    visibles = []
    for t in range(spec.frame_count):
        _, _, _, winner, pixels, depths = _rasterize(points, t)
        for tid, pidx in enumerate(chosen):
            x, y = pixels[pidx]
            z = depths[pidx]
            visible = False
            if z > 0.0 and 0.0 <= x < spec.width and 0.0 <= y < spec.height:
                col = int(round(x))
                row = int(round(y))
                if 0 <= col < spec.width and 0 <= row < spec.height:
                    visible = winner[row, col] == pidx
            track_ids.append(tid)
            frames.append(t)
            xs.append(float(x) if z > 0.0 else 0.0)
            ys.append(float(y) if z > 0.0 else 0.0)
            visibles.append(visible)
    return TrackTable(
        width=spec.width,
        height=spec.height,
        track_id=np.array(track_ids, dtype=np.int64),
        frame=np.array(frames, dtype=np.int64),
        x=np.array(xs, dtype=np.float64),
        y=np.array(ys, dtype=np.float64),
        visible=np.array(visibles, dtype=bool),
    )


@dataclass
class GroundTruth:
    """Exact per-track world trajectories and per-instance pair motions."""

    track_ids: np.ndarray
    instance_ids: np.ndarray
    trajectories: np.ndarray  # (n_tracks, T, 3)
    motions: list[InstanceMotion]


def ground_truth(
    spec: SceneSpec, n_tracks: int, seed: int, points: ScenePoints | None = None
) -> GroundTruth:
    points = points or ScenePoints(spec)
    chosen = sample_track_points(spec, n_tracks, seed, points)
    trajectories = np.zeros((len(chosen), spec.frame_count, 3))
    for t in range(spec.frame_count):
        positions = points.positions_at(t)
        trajectories[:, t, :] = positions[chosen]
    motions = []
    for obj in spec.objects:
        pairs = spec.pair_motions(obj)
        motions.append(
            InstanceMotion(
                instance_id=obj.instance_id,
                transforms=pairs,
                inlier_counts=[obj.n_points] * len(pairs),
                estimated=[True] * len(pairs),
            )
        )
    return GroundTruth(
        track_ids=np.arange(len(chosen), dtype=np.int64),
        instance_ids=points.ids[chosen].astype(np.int64),
        trajectories=trajectories,
        motions=motions,
    )


def write_truth_trajectories(truth: GroundTruth, path) -> None:
    lines = [",".join(TRUTH_HEADER)]
    for i, tid in enumerate(truth.track_ids):
        for t in range(truth.trajectories.shape[1]):
            x, y, z = truth.trajectories[i, t]
            lines.append(
                f"{int(tid)},{t},{repr(float(x))},{repr(float(y))},{repr(float(z))},"
                f"{int(truth.instance_ids[i])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def read_truth_trajectories(path) -> dict[int, tuple[int, np.ndarray]]:
    """{track_id: (instance_id, (T, 3) positions)} from a truth CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",") != TRUTH_HEADER:
        raise ValueError(f"unexpected trajectory header in {path}")
    rows: dict[int, list[tuple[int, np.ndarray, int]]] = {}
    for line in lines[1:]:
        parts = line.split(",")
        tid = int(parts[0])
        rows.setdefault(tid, []).append(
            (int(parts[1]), np.array([float(v) for v in parts[2:5]]), int(parts[5]))
        )
    out = {}
    for tid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        positions = np.stack([e[1] for e in entries])
        out[tid] = (entries[0][2], positions)
    return out


def scene_a() -> SceneSpec:
    """Detection stress scene: zigzag movers over a textured plane.

    The camera translates in pure x, so epipolar lines are horizontal and
    the objects' vertical zigzag (about 4 px per frame at their depth)
    keeps every object pixel far from its epipolar line in every pair.
    The slow negative-x travel keeps every flow target inside the raster
    (background parallax is +0.175 px, objects stay clear of the borders),
    so every pixel of every pair carries epipolar evidence.
    """
    return SceneSpec(
        name="scene_a",
        frame_count=60,
        width=128,
        height=128,
        seed=11,
        camera=CameraPathSpec(
            position=(0.0, 0.0, 0.0),
            velocity=(-0.01, 0.0, 0.0),
            target=(0.0, 0.0, 1.0),
            focal=140.0,
        ),
        background=BackgroundSpec(
            z=8.0, x_min=-4.4, x_max=3.8, y_min=-4.0, y_max=4.0, step=0.045
        ),
        objects=(
            ObjectSpec(
                instance_id=1,
                center=(-0.6, 0.0, 6.0),
                radius=0.55,
                n_points=1200,
                motion=MotionScript(
                    triangle_step=(0.0, 4.0 * 6.0 / 140.0, 0.0),
                    triangle_half_period=8,
                ),
            ),
            ObjectSpec(
                instance_id=2,
                center=(1.2, 0.3, 6.5),
                radius=0.5,
                n_points=1100,
                motion=MotionScript(
                    triangle_step=(0.0, -4.0 * 6.5 / 140.0, 0.0),
                    triangle_half_period=10,
                ),
            ),
        ),
    )


def scene_b() -> SceneSpec:
    """End-to-end scene: smooth in-span motions for exact curve recovery.

    Object translations are linear plus low-harmonic sinusoids and the
    second object also spins one full turn, so with a Fourier degree of at
    least two every trajectory lies exactly in the encoding span.
    """
    return SceneSpec(
        name="scene_b",
        frame_count=60,
        width=128,
        height=128,
        seed=23,
        camera=CameraPathSpec(
            position=(0.0, 0.0, 0.0),
            velocity=(0.04, 0.0, 0.0),
            target=(0.0, 0.0, 1.0),
            focal=140.0,
        ),
        background=BackgroundSpec(
            z=8.0, x_min=-4.2, x_max=6.6, y_min=-4.0, y_max=4.0, step=0.045
        ),
        objects=(
            ObjectSpec(
                instance_id=1,
                center=(-0.2, -0.15, 6.0),
                radius=0.5,
                n_points=1200,
                motion=MotionScript(
                    velocity=(0.015, 0.0, 0.0),
                    amplitude=(0.0, 0.7, 0.0),
                    harmonic=2,
                ),
            ),
            ObjectSpec(
                instance_id=2,
                center=(2.0, 0.3, 6.6),
                radius=0.45,
                n_points=1100,
                motion=MotionScript(
                    amplitude=(0.0, -0.65, 0.0),
                    harmonic=2,
                    rotation_axis=(0.0, 0.0, 1.0),
                    turns=1.0,
                ),
            ),
        ),
    )


SCENE_PRESETS = {"scene_a": scene_a, "scene_b": scene_b}

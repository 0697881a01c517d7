"""Raster and track containers with strict binary readers and writers.

Layouts are normative and byte-exact:
  * depth / image: PFM, header b"Pf\\n{w} {h}\\n-1.0\\n" (b"PF" for 3-channel),
    little-endian float32 payload, rows stored bottom-up
  * optical flow: Middlebury .flo, float32 magic 202021.25, int32 width and
    height, interleaved (u, v) float32 row-major top-down
  * instance masks: 16-bit binary PGM (P5, maxval 65535, big-endian) plus a
    JSON sidecar mapping instance id to confidence
  * tracks: CSV with header "track_id,frame,x,y,visible"

Readers reject malformed headers and any payload whose length differs from
what the header promises.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    ConfidenceMissingForID,
    DuplicateObservation,
    MalformedHeader,
    OutOfBoundsPixel,
    TruncatedPayload,
)

FLO_MAGIC = 202021.25
TRACK_HEADER = ["track_id", "frame", "x", "y", "visible"]


@dataclass
class DepthMap:
    """Per-pixel metric depth; 0 or negative marks missing samples."""

    width: int
    height: int
    values: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"depth shape {self.values.shape} != ({self.height}, {self.width})"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("depth values must be finite")


@dataclass
class FlowField:
    """Dense optical flow (u, v) from frame t to frame t+1 in pixels."""

    width: int
    height: int
    flow: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.flow = np.asarray(self.flow, dtype=np.float32)
        if self.flow.shape != (self.height, self.width, 2):
            raise ValueError(
                f"flow shape {self.flow.shape} != ({self.height}, {self.width}, 2)"
            )
        if not np.isfinite(self.flow).all():
            raise ValueError("flow values must be finite")
        mag = np.sqrt((self.flow.astype(np.float64) ** 2).sum(axis=2))
        bound = float(max(self.width, self.height))
        if mag.max(initial=0.0) >= bound:
            raise ValueError(f"flow magnitude {mag.max():.1f} >= {bound}")


@dataclass
class InstanceMaskFrame:
    """Instance-id raster (0 = background) with per-id confidence."""

    width: int
    height: int
    ids: np.ndarray
    confidence: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint16)
        if self.ids.shape != (self.height, self.width):
            raise ValueError(f"mask shape {self.ids.shape} != ({self.height}, {self.width})")
        self.confidence = {int(k): float(v) for k, v in self.confidence.items()}
        if 0 in self.confidence:
            raise ValueError("background id 0 must not carry a confidence")
        for iid, conf in self.confidence.items():
            if not 0.0 <= conf <= 1.0:
                raise ValueError(f"confidence {conf} for id {iid} outside [0, 1]")
        present = set(int(v) for v in np.unique(self.ids)) - {0}
        missing = present - set(self.confidence)
        if missing:
            raise ConfidenceMissingForID(f"ids without confidence: {sorted(missing)}")

    def instance_mask(self, instance_id: int) -> np.ndarray:
        return self.ids == np.uint16(instance_id)


@dataclass
class TrackTable:
    """Columnar 2D point tracks over a fixed image raster."""

    width: int
    height: int
    track_id: np.ndarray
    frame: np.ndarray
    x: np.ndarray
    y: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        self.track_id = np.asarray(self.track_id, dtype=np.int64)
        self.frame = np.asarray(self.frame, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.visible = np.asarray(self.visible, dtype=bool)
        n = self.track_id.shape[0]
        for name in ("frame", "x", "y", "visible"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name} length differs from track_id")
        keys = np.stack([self.track_id, self.frame], axis=1)
        if n and np.unique(keys, axis=0).shape[0] != n:
            raise DuplicateObservation("repeated (track_id, frame) record")
        vis = self.visible
        bad = vis & (
            (self.x < 0.0) | (self.x >= self.width) | (self.y < 0.0) | (self.y >= self.height)
        )
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise OutOfBoundsPixel(
                f"track {self.track_id[i]} frame {self.frame[i]} at "
                f"({self.x[i]}, {self.y[i]}) outside {self.width}x{self.height}"
            )

    def __len__(self) -> int:
        return int(self.track_id.shape[0])

    def track_ids(self) -> np.ndarray:
        return np.unique(self.track_id)


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count + 1)
    if len(data) < count:
        raise TruncatedPayload(f"{what}: expected {count} bytes, got {len(data)}")
    if len(data) > count:
        raise TruncatedPayload(f"{what}: trailing bytes after payload")
    return data


def _read_header_line(fh) -> bytes:
    line = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise MalformedHeader("unexpected end of header")
        if ch == b"\n":
            return line
        line += ch
        if len(line) > 64:
            raise MalformedHeader("header line too long")


def _parse_pfm_header(fh) -> tuple[int, int, int]:
    magic = _read_header_line(fh)
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise MalformedHeader(f"bad PFM magic {magic!r}")
    dims = _read_header_line(fh).split()
    if len(dims) != 2:
        raise MalformedHeader("PFM dimension line must hold width and height")
    try:
        width, height = int(dims[0]), int(dims[1])
    except ValueError as exc:
        raise MalformedHeader("non-integer PFM dimensions") from exc
    if width <= 0 or height <= 0:
        raise MalformedHeader("PFM dimensions must be positive")
    scale_raw = _read_header_line(fh)
    try:
        scale = float(scale_raw)
    except ValueError as exc:
        raise MalformedHeader("non-numeric PFM scale") from exc
    if scale != -1.0:
        raise MalformedHeader(f"PFM scale must be -1.0, got {scale_raw.decode()!r}")
    return width, height, channels


def _read_pfm_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        width, height, channels = _parse_pfm_header(fh)
        payload = _read_exact(fh, width * height * channels * 4, "PFM payload")
    data = np.frombuffer(payload, dtype="<f4")
    if channels == 1:
        return data.reshape(height, width)[::-1].copy()
    return data.reshape(height, width, 3)[::-1].copy()


def _write_pfm_array(values: np.ndarray, path) -> None:
    color = values.ndim == 3
    height, width = values.shape[0], values.shape[1]
    with open(path, "wb") as fh:
        fh.write(b"PF\n" if color else b"Pf\n")
        fh.write(f"{width} {height}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(values[::-1], dtype="<f4").tobytes())


def read_pfm(path, frame_index: int = 0) -> DepthMap:
    """Read a single-channel PFM as a depth map."""
    values = _read_pfm_array(path)
    if values.ndim != 2:
        raise MalformedHeader("expected single-channel PFM for depth")
    return DepthMap(width=values.shape[1], height=values.shape[0], values=values,
                    frame_index=frame_index)


def write_pfm(depth: DepthMap, path) -> None:
    _write_pfm_array(depth.values, path)


def read_image_pfm(path) -> np.ndarray:
    """Read a 3-channel PFM as a float32 (H, W, 3) image."""
    values = _read_pfm_array(path)
    if values.ndim != 3:
        raise MalformedHeader("expected 3-channel PFM for an image")
    return values


def write_image_pfm(image: np.ndarray, path) -> None:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    _write_pfm_array(image, path)


def read_flo(path, frame_index: int = 0) -> FlowField:
    """Read a Middlebury .flo flow field."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise TruncatedPayload("flo header shorter than 12 bytes")
        magic = np.frombuffer(head[:4], dtype="<f4")[0]
        if magic != np.float32(FLO_MAGIC):
            raise BadMagic(f"flo magic {magic!r}")
        width, height = (int(v) for v in np.frombuffer(head[4:12], dtype="<i4"))
        if width <= 0 or height <= 0:
            raise BadMagic("non-positive flo dimensions")
        payload = _read_exact(fh, width * height * 2 * 4, "flo payload")
    flow = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2).copy()
    return FlowField(width=width, height=height, flow=flow, frame_index=frame_index)


def write_flo(flow: FlowField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(np.float32(FLO_MAGIC).tobytes())
        fh.write(np.array([flow.width, flow.height], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(flow.flow, dtype="<f4").tobytes())


def _sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def read_masks(path) -> InstanceMaskFrame:
    """Read a 16-bit PGM instance mask and its confidence sidecar."""
    with open(path, "rb") as fh:
        if _read_header_line(fh) != b"P5":
            raise MalformedHeader("mask must be binary PGM (P5)")
        dims = _read_header_line(fh).split()
        if len(dims) != 2:
            raise MalformedHeader("PGM dimension line must hold width and height")
        try:
            width, height = int(dims[0]), int(dims[1])
        except ValueError as exc:
            raise MalformedHeader("non-integer PGM dimensions") from exc
        if width <= 0 or height <= 0:
            raise MalformedHeader("PGM dimensions must be positive")
        if _read_header_line(fh) != b"65535":
            raise MalformedHeader("PGM maxval must be 65535")
        payload = _read_exact(fh, width * height * 2, "PGM payload")
    ids = np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        present = sorted(set(int(v) for v in np.unique(ids)) - {0})
        if present:
            raise ConfidenceMissingForID(f"no sidecar {sidecar.name} for ids {present}")
        confidence: dict[int, float] = {}
    else:
        with open(sidecar, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        confidence = {int(k): float(v) for k, v in raw.items()}
    return InstanceMaskFrame(width=width, height=height, ids=ids, confidence=confidence)


def write_masks(mask: InstanceMaskFrame, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        fh.write(f"{mask.width} {mask.height}\n65535\n".encode("ascii"))
        fh.write(np.ascontiguousarray(mask.ids, dtype=">u2").tobytes())
    payload = {str(k): float(v) for k, v in sorted(mask.confidence.items())}
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def read_tracks(path, width: int, height: int) -> TrackTable:
    """Read a track CSV; image bounds come from the caller."""
    track_id, frame, xs, ys, vis = [], [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACK_HEADER:
            raise MalformedHeader(f"track header {header!r}")
        for row in reader:
            if len(row) != 5:
                raise MalformedHeader(f"track row with {len(row)} fields")
            track_id.append(int(row[0]))
            frame.append(int(row[1]))
            xs.append(float(row[2]))
            ys.append(float(row[3]))
            vis.append(row[4] == "1")
    return TrackTable(
        width=width,
        height=height,
        track_id=np.array(track_id, dtype=np.int64),
        frame=np.array(frame, dtype=np.int64),
        x=np.array(xs, dtype=np.float64),
        y=np.array(ys, dtype=np.float64),
        visible=np.array(vis, dtype=bool),
    )


def write_tracks(tracks: TrackTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_HEADER)
        for i in range(len(tracks)):
            writer.writerow(
                [
                    int(tracks.track_id[i]),
                    int(tracks.frame[i]),
                    repr(float(tracks.x[i])),
                    repr(float(tracks.y[i])),
                    1 if tracks.visible[i] else 0,
                ]
            )

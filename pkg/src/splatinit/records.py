"""Gaussian primitive records and their binary PLY container.

The container is binary little-endian PLY with two elements:

  * static_gaussian: 14 float32 properties
        x y z qw qx qy qz sx sy sz opacity red green blue
  * dynamic_gaussian: the same 14 properties, then ushort instance_id,
    3*(D-1) float32 dpos_* (non-constant position coefficients, x row
    first) and 4*(D-1) float32 drot_* (rotation increment coefficients,
    w row first)

Header comments record the shared basis (d_pol, d_fourier, omega, the time
normalization rule and frame_count) so a reader can evaluate motion without
out-of-band information. Payload values are float32: writing quantizes, and
a written file reads back bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import BasisSpec, DeformationParams, PolyFourierCurve
from .errors import MalformedHeader, TruncatedPayload
from .geometry import Quaternion

_BASE_PROPS = [
    "x", "y", "z",
    "qw", "qx", "qy", "qz",
    "sx", "sy", "sz",
    "opacity",
    "red", "green", "blue",
]


@dataclass
class GaussianRecord:
    """One Gaussian primitive, static or dynamic.

    `position` is the canonical center (the constant basis column for
    dynamic records), `log_scale` holds per-axis log of the scale and
    `color` is linear RGB in [0, 1].
    """

    kind: str
    position: np.ndarray
    rotation: Quaternion
    log_scale: np.ndarray
    opacity: float
    color: np.ndarray
    instance_id: int = 0
    deformation: DeformationParams | None = None

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ValueError(f"unknown record kind {self.kind!r}")
        self.position = np.asarray(self.position, dtype=np.float64)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        for name in ("position", "log_scale", "color"):
            arr = getattr(self, name)
            if arr.shape != (3,):
                raise ValueError(f"{name} must be a 3-vector")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.opacity < 1.0:
            raise ValueError(f"opacity {self.opacity} outside (0, 1)")
        if self.color.min() < 0.0 or self.color.max() > 1.0:
            raise ValueError("color channels must lie in [0, 1]")
        # float32 storage quantizes unit quaternions; allow that much slack
        if abs(self.rotation.norm() - 1.0) > 1e-6:
            raise ValueError("rotation must be a unit quaternion")
        if not 0 <= self.instance_id <= 0xFFFF:
            raise ValueError("instance_id outside the 16-bit id range")
        if self.kind == "static":
            if self.deformation is not None:
                raise ValueError("static record must not carry a deformation")
            if self.instance_id != 0:
                raise ValueError("static record must use instance_id 0")
        else:
            if self.deformation is None:
                raise ValueError("dynamic record requires a deformation")
            if self.instance_id < 1:
                raise ValueError("dynamic record requires instance_id >= 1")
            if not np.array_equal(self.deformation.mu0, self.position):
                raise ValueError("position must equal the curve constant column")


def _base_row(rec: GaussianRecord) -> list[float]:
    q = rec.rotation
    return [
        *rec.position,
        q.w, q.x, q.y, q.z,
        *rec.log_scale,
        rec.opacity,
        *rec.color,
    ]


def _dynamic_dtype(dim: int) -> np.dtype:
    tail = dim - 1
    return np.dtype(
        [
            ("base", "<f4", (14,)),
            ("instance_id", "<u2"),
            ("dpos", "<f4", (3 * tail,)),
            ("drot", "<f4", (4 * tail,)),
        ]
    )


def write_gaussians(records: list[GaussianRecord], path, spec: BasisSpec | None = None) -> None:
    """Write records to PLY. `spec` is only needed when no record is dynamic."""
    statics = [r for r in records if r.kind == "static"]
    dynamics = [r for r in records if r.kind == "dynamic"]
    if dynamics:
        spec = dynamics[0].deformation.spec
        for rec in dynamics:
            if rec.deformation.spec != spec:
                raise ValueError("dynamic records must share one basis")
    elif spec is None:
        spec = BasisSpec(d_pol=0, d_fourier=0, frame_count=1)
    dim = spec.dimension
    tail = dim - 1
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        "comment motion-initialized gaussian set",
        f"comment d_pol {spec.d_pol}",
        f"comment d_fourier {spec.d_fourier}",
        f"comment omega {spec.omega!r}",
        "comment time_normalization tau = frame / (frame_count - 1)",
        f"comment frame_count {spec.frame_count}",
        f"element static_gaussian {len(statics)}",
    ]
    lines += [f"property float {name}" for name in _BASE_PROPS]
    lines.append(f"element dynamic_gaussian {len(dynamics)}")
    lines += [f"property float {name}" for name in _BASE_PROPS]
    lines.append("property ushort instance_id")
    lines += [f"property float dpos_{i}" for i in range(3 * tail)]
    lines += [f"property float drot_{i}" for i in range(4 * tail)]
    lines.append("end_header")
    static_block = np.array([_base_row(r) for r in statics], dtype="<f4").reshape(
        len(statics), 14
    )
    dyn_block = np.zeros(len(dynamics), dtype=_dynamic_dtype(dim))
    for i, rec in enumerate(dynamics):
        dyn_block[i]["base"] = _base_row(rec)
        dyn_block[i]["instance_id"] = rec.instance_id
        dyn_block[i]["dpos"] = rec.deformation.position_curve.coeffs[:, 1:].reshape(-1)
        dyn_block[i]["drot"] = rec.deformation.rotation_coeffs.reshape(-1)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(static_block.tobytes())
        fh.write(dyn_block.tobytes())


def _expect(lines: list[str], idx: int, want: str) -> int:
    if idx >= len(lines) or lines[idx] != want:
        got = lines[idx] if idx < len(lines) else "<eof>"
        raise MalformedHeader(f"expected {want!r}, got {got!r}")
    return idx + 1


def _comment_value(lines: list[str], idx: int, key: str) -> tuple[str, int]:
    prefix = f"comment {key} "
    if idx >= len(lines) or not lines[idx].startswith(prefix):
        got = lines[idx] if idx < len(lines) else "<eof>"
        raise MalformedHeader(f"expected comment {key!r}, got {got!r}")
    return lines[idx][len(prefix):], idx + 1


def read_gaussians(path) -> tuple[list[GaussianRecord], BasisSpec]:
    """Read a PLY written by write_gaussians; strict about the layout."""
    raw = Path(path).read_bytes()
    marker = b"end_header\n"
    cut = raw.find(marker)
    if cut < 0:
        raise MalformedHeader("missing end_header")
    header = raw[: cut + len(marker)].decode("ascii", errors="replace")
    payload = raw[cut + len(marker):]
    lines = header.splitlines()
    idx = _expect(lines, 0, "ply")
    idx = _expect(lines, idx, "format binary_little_endian 1.0")
    idx = _expect(lines, idx, "comment motion-initialized gaussian set")
    d_pol_s, idx = _comment_value(lines, idx, "d_pol")
    d_fourier_s, idx = _comment_value(lines, idx, "d_fourier")
    omega_s, idx = _comment_value(lines, idx, "omega")
    idx = _expect(lines, idx, "comment time_normalization tau = frame / (frame_count - 1)")
    frame_count_s, idx = _comment_value(lines, idx, "frame_count")
    try:
        spec = BasisSpec(
            d_pol=int(d_pol_s),
            d_fourier=int(d_fourier_s),
            frame_count=int(frame_count_s),
            omega=float(omega_s),
        )
    except ValueError as exc:
        raise MalformedHeader(f"bad basis comments: {exc}") from exc
    dim = spec.dimension
    tail = dim - 1

    if idx >= len(lines) or not lines[idx].startswith("element static_gaussian "):
        raise MalformedHeader("missing static_gaussian element")
    n_static = int(lines[idx].split()[-1])
    idx += 1
    for name in _BASE_PROPS:
        idx = _expect(lines, idx, f"property float {name}")
    if idx >= len(lines) or not lines[idx].startswith("element dynamic_gaussian "):
        raise MalformedHeader("missing dynamic_gaussian element")
    n_dynamic = int(lines[idx].split()[-1])
    idx += 1
    for name in _BASE_PROPS:
        idx = _expect(lines, idx, f"property float {name}")
    idx = _expect(lines, idx, "property ushort instance_id")
    for i in range(3 * tail):
        idx = _expect(lines, idx, f"property float dpos_{i}")
    for i in range(4 * tail):
        idx = _expect(lines, idx, f"property float drot_{i}")
    _expect(lines, idx, "end_header")

    static_bytes = n_static * 14 * 4
    dyn_dtype = _dynamic_dtype(dim)
    expected = static_bytes + n_dynamic * dyn_dtype.itemsize
    if len(payload) != expected:
        raise TruncatedPayload(f"payload {len(payload)} bytes, expected {expected}")
    static_block = np.frombuffer(payload[:static_bytes], dtype="<f4").reshape(n_static, 14)
    dyn_block = np.frombuffer(payload[static_bytes:], dtype=dyn_dtype)

    records: list[GaussianRecord] = []
    for row in static_block:
        records.append(
            GaussianRecord(
                kind="static",
                position=row[0:3],
                rotation=Quaternion.from_array(row[3:7]),
                log_scale=row[7:10],
                opacity=float(row[10]),
                color=row[11:14],
            )
        )
    for entry in dyn_block:
        base = entry["base"]
        coeffs = np.zeros((3, dim))
        coeffs[:, 0] = base[0:3]
        if tail:
            coeffs[:, 1:] = entry["dpos"].astype(np.float64).reshape(3, tail)
        curve = PolyFourierCurve(spec=spec, coeffs=coeffs)
        deform = DeformationParams(
            position_curve=curve,
            rotation_coeffs=entry["drot"].astype(np.float64).reshape(4, tail),
            q0=Quaternion.from_array(base[3:7]),
        )
        records.append(
            GaussianRecord(
                kind="dynamic",
                position=coeffs[:, 0],
                rotation=deform.q0,
                log_scale=base[7:10].astype(np.float64),
                opacity=float(base[10]),
                color=base[11:14].astype(np.float64),
                instance_id=int(entry["instance_id"]),
                deformation=deform,
            )
        )
    return records, spec


def filter_by_instance(
    records: list[GaussianRecord],
    keep: set[int] | None = None,
    remove: set[int] | None = None,
    include_static: bool = True,
) -> list[GaussianRecord]:
    """Select records by instance id.

    Dynamic records pass when their id is in `keep` (all ids when None)
    and not in `remove`. Static records pass unless include_static is
    False.
    """
    if keep is not None and remove is not None and keep & remove:
        raise ValueError("keep and remove sets overlap")
    out = []
    for rec in records:
        if rec.kind == "static":
            if include_static:
                out.append(rec)
            continue
        if keep is not None and rec.instance_id not in keep:
            continue
        if remove is not None and rec.instance_id in remove:
            continue
        out.append(rec)
    return out

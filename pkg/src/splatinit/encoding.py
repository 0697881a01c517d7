"""Compact per-track motion encodings over a shared time basis.

A trajectory x(tau) is modeled as a linear combination of a polynomial and a
Fourier basis evaluated at normalized time tau = frame / (frame_count - 1):

    phi(tau) = [1, tau, ..., tau^d_pol,
                cos(omega tau), sin(omega tau), ...,
                cos(d_fourier omega tau), sin(d_fourier omega tau)]

Rotation deformation shares the non-constant part of the basis: a 4-row
coefficient matrix produces an increment r(tau), and the pose quaternion is
q(tau) = normalize(r(tau) + e) * q0 with e the identity quaternion, so zero
coefficients reproduce q0 for every tau.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateRotation,
    IllConditioned,
    MalformedHeader,
    UnderdeterminedSystem,
)
from .geometry import Quaternion

_COND_LIMIT = 1e12
_ROT_NORM_TOL = 1e-9

IDENTITY_INCREMENT = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class BasisSpec:
    """Shape of the shared poly-Fourier time basis."""

    d_pol: int
    d_fourier: int
    frame_count: int
    omega: float = 2.0 * math.pi

    def __post_init__(self):
        if self.d_pol < 0 or self.d_fourier < 0:
            raise ValueError("basis degrees must be non-negative")
        if self.frame_count < 1:
            raise ValueError("frame_count must be positive")

    @property
    def dimension(self) -> int:
        return 1 + self.d_pol + 2 * self.d_fourier

    def tau(self, frame) -> np.ndarray | float:
        """Normalized time in [0, 1] for integer frame indices."""
        if self.frame_count == 1:
            return np.zeros_like(np.asarray(frame, dtype=np.float64))
        return np.asarray(frame, dtype=np.float64) / (self.frame_count - 1)

    def all_taus(self) -> np.ndarray:
        return np.atleast_1d(self.tau(np.arange(self.frame_count)))


def basis_matrix(spec: BasisSpec, taus: np.ndarray) -> np.ndarray:
    """Evaluate the basis at (N,) normalized times; returns (N, D)."""
    taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
    cols = [np.ones_like(taus)]
    for p in range(1, spec.d_pol + 1):
        cols.append(taus**p)
    for k in range(1, spec.d_fourier + 1):
        cols.append(np.cos(k * spec.omega * taus))
        cols.append(np.sin(k * spec.omega * taus))
    return np.stack(cols, axis=1)


def basis_row(spec: BasisSpec, tau: float) -> np.ndarray:
    """Basis vector phi(tau) of length D."""
    return basis_matrix(spec, np.array([tau]))[0]


@dataclass(frozen=True)
class PolyFourierCurve:
    """One R^3 curve: coeffs (3, D) against the shared basis."""

    spec: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.float64)
        if coeffs.shape != (3, self.spec.dimension):
            raise ValueError(
                f"coeffs shape {coeffs.shape} != (3, {self.spec.dimension})"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def evaluate(self, taus) -> np.ndarray:
        """Positions at (N,) times; returns (N, 3)."""
        return basis_matrix(self.spec, taus) @ self.coeffs.T

    @property
    def mu0(self) -> np.ndarray:
        """Constant term: the canonical position."""
        return self.coeffs[:, 0]


def fit_curve(
    positions: np.ndarray, spec: BasisSpec, ridge: float = 0.0
) -> tuple[PolyFourierCurve, np.ndarray]:
    """Least-squares fit of a curve to (T, 3) positions at frames 0..T-1.

    A positive `ridge` adds Tikhonov rows and lifts both the underdetermined
    and the ill-conditioned failure modes. Returns (curve, per-axis RMS
    residual).
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (spec.frame_count, 3):
        raise ValueError(f"positions shape {positions.shape} != ({spec.frame_count}, 3)")
    if not np.isfinite(positions).all():
        raise ValueError("positions must be finite")
    dim = spec.dimension
    if spec.frame_count < dim and ridge == 0.0:
        raise UnderdeterminedSystem(
            f"{spec.frame_count} samples cannot determine {dim} coefficients"
        )
    A = basis_matrix(spec, spec.all_taus())
    rhs = positions
    if ridge > 0.0:
        A = np.concatenate([A, math.sqrt(ridge) * np.eye(dim)], axis=0)
        rhs = np.concatenate([positions, np.zeros((dim, 3))], axis=0)
    solution, _, rank, singulars = np.linalg.lstsq(A, rhs, rcond=None)
    if ridge == 0.0:
        smallest = singulars[-1] if len(singulars) == dim else 0.0
        cond = math.inf if smallest == 0.0 else float(singulars[0] / smallest)
        if rank < dim or cond > _COND_LIMIT:
            raise IllConditioned(f"basis condition number {cond:.3g}")
    curve = PolyFourierCurve(spec=spec, coeffs=solution.T)
    fitted = curve.evaluate(spec.all_taus())
    residual = np.sqrt(np.mean((fitted - positions) ** 2, axis=0))
    return curve, residual


def right_multiply_matrix(q0: Quaternion) -> np.ndarray:
    """Matrix M with M @ q == (q * q0) for row quaternions (w, x, y, z)."""
    w, x, y, z = q0.w, q0.x, q0.y, q0.z
    return np.array(
        [
            [w, -x, -y, -z],
            [x, w, z, -y],
            [y, -z, w, x],
            [z, y, -x, w],
        ]
    )


@dataclass(frozen=True)
class DeformationParams:
    """Per-Gaussian motion: position curve plus rotation increment coeffs.

    `rotation_coeffs` has shape (4, D - 1): the rotation increment uses the
    non-constant basis columns only, so the identity increment is recovered
    exactly when every coefficient is zero.
    """

    position_curve: PolyFourierCurve
    rotation_coeffs: np.ndarray
    q0: Quaternion

    def __post_init__(self):
        rc = np.array(self.rotation_coeffs, dtype=np.float64)
        expected = (4, self.position_curve.spec.dimension - 1)
        if rc.shape != expected:
            raise ValueError(f"rotation_coeffs shape {rc.shape} != {expected}")
        rc.setflags(write=False)
        object.__setattr__(self, "rotation_coeffs", rc)
        # float32 round trips leave unit quaternions off by up to ~6e-8
        if abs(self.q0.norm() - 1.0) > 1e-6:
            raise ValueError("q0 must be a unit quaternion")

    @property
    def spec(self) -> BasisSpec:
        return self.position_curve.spec

    @property
    def mu0(self) -> np.ndarray:
        return self.position_curve.mu0


def eval_position(params: DeformationParams, tau: float) -> np.ndarray:
    return params.position_curve.evaluate(np.array([tau]))[0]


def eval_positions(params: DeformationParams, taus: np.ndarray) -> np.ndarray:
    return params.position_curve.evaluate(taus)


def _rotation_increments(params: DeformationParams, taus: np.ndarray) -> np.ndarray:
    """Unnormalized increments v(tau) = r(tau) + e; shape (N, 4)."""
    tail = basis_matrix(params.spec, taus)[:, 1:]
    return tail @ params.rotation_coeffs.T + IDENTITY_INCREMENT


def eval_rotations(params: DeformationParams, taus: np.ndarray) -> np.ndarray:
    """Unit pose quaternions at (N,) times as (N, 4) rows (w, x, y, z)."""
    v = _rotation_increments(params, np.atleast_1d(taus))
    norms = np.linalg.norm(v, axis=1)
    if (norms < _ROT_NORM_TOL).any():
        bad = float(np.atleast_1d(taus)[norms.argmin()])
        raise DegenerateRotation(f"increment norm {norms.min():.3g} at tau {bad}")
    u = v / norms[:, None]
    return u @ right_multiply_matrix(params.q0).T


def eval_rotation(params: DeformationParams, tau: float) -> Quaternion:
    return Quaternion.from_array(eval_rotations(params, np.array([tau]))[0])


def jacobian_position(params: DeformationParams, tau: float) -> np.ndarray:
    """d position / d coeffs at tau; shape (3, 3 D), coeffs flattened row-major."""
    phi = basis_row(params.spec, tau)
    dim = params.spec.dimension
    jac = np.zeros((3, 3 * dim))
    for axis in range(3):
        jac[axis, axis * dim : (axis + 1) * dim] = phi
    return jac


def jacobian_rotation(params: DeformationParams, tau: float) -> np.ndarray:
    """d quaternion / d rotation coeffs at tau; shape (4, 4 (D - 1)).

    Chain rule through normalize and the right multiplication by q0;
    rotation coefficients are flattened row-major.
    """
    tail = basis_row(params.spec, tau)[1:]
    v = params.rotation_coeffs @ tail + IDENTITY_INCREMENT
    norm = np.linalg.norm(v)
    if norm < _ROT_NORM_TOL:
        raise DegenerateRotation(f"increment norm {norm:.3g} at tau {tau}")
    u = v / norm
    proj = (np.eye(4) - np.outer(u, u)) / norm
    front = right_multiply_matrix(params.q0) @ proj
    return np.kron(front, tail[None, :])


@dataclass(frozen=True)
class TrackCurve:
    """Fitted positional encoding of one track."""

    track_id: int
    instance_id: int
    curve: PolyFourierCurve
    residual_rms: np.ndarray

    def __post_init__(self):
        rr = np.array(self.residual_rms, dtype=np.float64)
        if rr.shape != (3,):
            raise ValueError("residual_rms must be a 3-vector")
        rr.setflags(write=False)
        object.__setattr__(self, "residual_rms", rr)


_AXES = "xyz"


def write_curves(curves: list[TrackCurve], path) -> None:
    """Write fitted curves as CSV plus a JSON sidecar holding the basis."""
    path = Path(path)
    if curves:
        spec = curves[0].curve.spec
        if any(c.curve.spec != spec for c in curves):
            raise ValueError("all curves must share one basis")
    else:
        spec = BasisSpec(d_pol=0, d_fourier=0, frame_count=1)
    dim = spec.dimension
    header = ["track_id", "instance_id", "axis", "residual_rms"]
    header += [f"c{i}" for i in range(dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for tc in sorted(curves, key=lambda c: c.track_id):
            for axis in range(3):
                row = [tc.track_id, tc.instance_id, _AXES[axis], repr(float(tc.residual_rms[axis]))]
                row += [repr(float(v)) for v in tc.curve.coeffs[axis]]
                writer.writerow(row)
    meta = {
        "d_pol": spec.d_pol,
        "d_fourier": spec.d_fourier,
        "frame_count": spec.frame_count,
        "omega": spec.omega,
    }
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def read_curves(path) -> list[TrackCurve]:
    path = Path(path)
    with open(path.with_suffix(".json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spec = BasisSpec(
        d_pol=int(meta["d_pol"]),
        d_fourier=int(meta["d_fourier"]),
        frame_count=int(meta["frame_count"]),
        omega=float(meta["omega"]),
    )
    dim = spec.dimension
    expected = ["track_id", "instance_id", "axis", "residual_rms"]
    expected += [f"c{i}" for i in range(dim)]
    rows: dict[int, dict] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise MalformedHeader(f"curve header {header!r}")
        for row in reader:
            tid = int(row[0])
            entry = rows.setdefault(
                tid,
                {
                    "instance_id": int(row[1]),
                    "coeffs": np.zeros((3, dim)),
                    "residual": np.zeros(3),
                    "seen": set(),
                },
            )
            axis = _AXES.index(row[2])
            entry["seen"].add(axis)
            entry["residual"][axis] = float(row[3])
            entry["coeffs"][axis] = [float(v) for v in row[4:]]
    out = []
    for tid in sorted(rows):
        entry = rows[tid]
        if entry["seen"] != {0, 1, 2}:
            raise MalformedHeader(f"track {tid} missing axis rows")
        out.append(
            TrackCurve(
                track_id=tid,
                instance_id=entry["instance_id"],
                curve=PolyFourierCurve(spec=spec, coeffs=entry["coeffs"]),
                residual_rms=entry["residual"],
            )
        )
    return out

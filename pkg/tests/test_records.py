import numpy as np
import pytest

from splatinit.encoding import BasisSpec, DeformationParams, PolyFourierCurve
from splatinit.errors import MalformedHeader, TruncatedPayload
from splatinit.geometry import Quaternion
from splatinit.records import (
    GaussianRecord,
    filter_by_instance,
    read_gaussians,
    write_gaussians,
)


def f32(values):
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def unit_quat_f32(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Quaternion.from_array(f32(q))


def make_static(rng):
    return GaussianRecord(
        kind="static",
        position=f32(rng.normal(size=3)),
        rotation=unit_quat_f32(rng),
        log_scale=f32(rng.normal(size=3)),
        opacity=float(np.float32(rng.uniform(0.05, 0.95))),
        color=f32(rng.random(3)),
    )


def make_dynamic(rng, spec, instance_id=1):
    coeffs = f32(rng.normal(size=(3, spec.dimension)))
    curve = PolyFourierCurve(spec=spec, coeffs=coeffs)
    deform = DeformationParams(
        position_curve=curve,
        rotation_coeffs=f32(rng.normal(scale=0.1, size=(4, spec.dimension - 1))),
        q0=unit_quat_f32(rng),
    )
    return GaussianRecord(
        kind="dynamic",
        position=coeffs[:, 0],
        rotation=deform.q0,
        log_scale=f32(rng.normal(size=3)),
        opacity=float(np.float32(rng.uniform(0.05, 0.95))),
        color=f32(rng.random(3)),
        instance_id=instance_id,
        deformation=deform,
    )


class TestRecordValidation:
    def test_static_must_not_deform(self):
        rng = np.random.default_rng(0)
        rec = make_static(rng)
        spec = BasisSpec(d_pol=1, d_fourier=1, frame_count=8)
        dyn = make_dynamic(rng, spec)
        with pytest.raises(ValueError):
            GaussianRecord(
                kind="static",
                position=rec.position,
                rotation=rec.rotation,
                log_scale=rec.log_scale,
                opacity=rec.opacity,
                color=rec.color,
                deformation=dyn.deformation,
            )

    def test_dynamic_needs_instance_and_deformation(self):
        rng = np.random.default_rng(1)
        spec = BasisSpec(d_pol=1, d_fourier=1, frame_count=8)
        dyn = make_dynamic(rng, spec)
        with pytest.raises(ValueError):
            GaussianRecord(
                kind="dynamic",
                position=dyn.position,
                rotation=dyn.rotation,
                log_scale=dyn.log_scale,
                opacity=dyn.opacity,
                color=dyn.color,
                instance_id=0,
                deformation=dyn.deformation,
            )
        with pytest.raises(ValueError):
            GaussianRecord(
                kind="dynamic",
                position=dyn.position,
                rotation=dyn.rotation,
                log_scale=dyn.log_scale,
                opacity=dyn.opacity,
                color=dyn.color,
                instance_id=1,
                deformation=None,
            )

    def test_position_must_match_curve_constant(self):
        rng = np.random.default_rng(2)
        spec = BasisSpec(d_pol=1, d_fourier=1, frame_count=8)
        dyn = make_dynamic(rng, spec)
        with pytest.raises(ValueError):
            GaussianRecord(
                kind="dynamic",
                position=dyn.position + 1.0,
                rotation=dyn.rotation,
                log_scale=dyn.log_scale,
                opacity=dyn.opacity,
                color=dyn.color,
                instance_id=1,
                deformation=dyn.deformation,
            )

    def test_opacity_and_color_ranges(self):
        rng = np.random.default_rng(3)
        rec = make_static(rng)
        for bad_opacity in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                GaussianRecord(
                    kind="static",
                    position=rec.position,
                    rotation=rec.rotation,
                    log_scale=rec.log_scale,
                    opacity=bad_opacity,
                    color=rec.color,
                )
        with pytest.raises(ValueError):
            GaussianRecord(
                kind="static",
                position=rec.position,
                rotation=rec.rotation,
                log_scale=rec.log_scale,
                opacity=0.5,
                color=np.array([0.5, 1.5, 0.5]),
            )


def assert_records_equal(a: GaussianRecord, b: GaussianRecord):
    assert a.kind == b.kind
    np.testing.assert_array_equal(a.position, b.position)
    np.testing.assert_array_equal(a.rotation.as_array(), b.rotation.as_array())
    np.testing.assert_array_equal(a.log_scale, b.log_scale)
    assert a.opacity == b.opacity
    np.testing.assert_array_equal(a.color, b.color)
    assert a.instance_id == b.instance_id
    if a.kind == "dynamic":
        np.testing.assert_array_equal(
            a.deformation.position_curve.coeffs, b.deformation.position_curve.coeffs
        )
        np.testing.assert_array_equal(
            a.deformation.rotation_coeffs, b.deformation.rotation_coeffs
        )


class TestPlyIO:
    def test_roundtrip_values_and_bytes(self, tmp_path):
        rng = np.random.default_rng(4)
        spec = BasisSpec(d_pol=3, d_fourier=2, frame_count=20)
        records = [make_static(rng) for _ in range(5)]
        records += [make_dynamic(rng, spec, instance_id=i + 1) for i in range(4)]
        path = tmp_path / "g.ply"
        write_gaussians(records, path)
        back, back_spec = read_gaussians(path)
        assert back_spec == spec
        assert len(back) == len(records)
        for orig, readback in zip(records, back):
            assert_records_equal(orig, readback)
        twice = tmp_path / "g2.ply"
        write_gaussians(back, twice)
        assert path.read_bytes() == twice.read_bytes()

    def test_dynamic_property_count_example(self, tmp_path):
        # d_pol=3, d_fourier=2 -> a dynamic record carries 3 + 3*(3+2*2)
        # position floats: x y z plus 21 dpos columns
        rng = np.random.default_rng(5)
        spec = BasisSpec(d_pol=3, d_fourier=2, frame_count=9)
        path = tmp_path / "g.ply"
        write_gaussians([make_dynamic(rng, spec)], path)
        header = path.read_bytes().split(b"end_header\n")[0].decode()
        assert header.count("property float dpos_") == 21
        assert header.count("property float drot_") == 28

    def test_empty_and_static_only(self, tmp_path):
        rng = np.random.default_rng(6)
        path = tmp_path / "g.ply"
        spec = BasisSpec(d_pol=2, d_fourier=1, frame_count=7)
        write_gaussians([], path, spec=spec)
        back, back_spec = read_gaussians(path)
        assert back == [] and back_spec == spec
        write_gaussians([make_static(rng)], path, spec=spec)
        back, _ = read_gaussians(path)
        assert len(back) == 1 and back[0].kind == "static"

    def test_header_documents_basis(self, tmp_path):
        rng = np.random.default_rng(7)
        spec = BasisSpec(d_pol=1, d_fourier=3, frame_count=42)
        path = tmp_path / "g.ply"
        write_gaussians([make_dynamic(rng, spec)], path)
        header = path.read_bytes().split(b"end_header\n")[0].decode()
        assert "comment d_pol 1" in header
        assert "comment d_fourier 3" in header
        assert "comment frame_count 42" in header
        assert "comment time_normalization tau = frame / (frame_count - 1)" in header

    def test_mixed_basis_rejected(self, tmp_path):
        rng = np.random.default_rng(8)
        a = make_dynamic(rng, BasisSpec(d_pol=1, d_fourier=1, frame_count=9))
        b = make_dynamic(rng, BasisSpec(d_pol=2, d_fourier=1, frame_count=9))
        with pytest.raises(ValueError):
            write_gaussians([a, b], tmp_path / "g.ply")

    def test_rejects_corrupt_header(self, tmp_path):
        rng = np.random.default_rng(9)
        spec = BasisSpec(d_pol=1, d_fourier=1, frame_count=9)
        path = tmp_path / "g.ply"
        write_gaussians([make_dynamic(rng, spec)], path)
        raw = path.read_bytes()
        bad = tmp_path / "bad.ply"
        bad.write_bytes(raw.replace(b"binary_little_endian", b"binary_big_endian"))
        with pytest.raises(MalformedHeader):
            read_gaussians(bad)
        bad.write_bytes(raw.replace(b"comment d_pol 1", b"comment d_pol x"))
        with pytest.raises(MalformedHeader):
            read_gaussians(bad)

    def test_rejects_truncated_payload(self, tmp_path):
        rng = np.random.default_rng(10)
        spec = BasisSpec(d_pol=1, d_fourier=1, frame_count=9)
        path = tmp_path / "g.ply"
        write_gaussians([make_dynamic(rng, spec), make_static(rng)], path)
        raw = path.read_bytes()
        bad = tmp_path / "bad.ply"
        bad.write_bytes(raw[:-3])
        with pytest.raises(TruncatedPayload):
            read_gaussians(bad)
        bad.write_bytes(raw + b"\x00")
        with pytest.raises(TruncatedPayload):
            read_gaussians(bad)


class TestFilter:
    def build(self):
        rng = np.random.default_rng(11)
        spec = BasisSpec(d_pol=1, d_fourier=1, frame_count=9)
        return [
            make_static(rng),
            make_dynamic(rng, spec, instance_id=1),
            make_dynamic(rng, spec, instance_id=2),
            make_dynamic(rng, spec, instance_id=3),
        ]

    def test_keep(self):
        records = self.build()
        kept = filter_by_instance(records, keep={1, 3})
        assert [r.instance_id for r in kept] == [0, 1, 3]

    def test_remove(self):
        records = self.build()
        kept = filter_by_instance(records, remove={2})
        assert [r.instance_id for r in kept] == [0, 1, 3]

    def test_drop_static(self):
        records = self.build()
        kept = filter_by_instance(records, keep={2}, include_static=False)
        assert [r.instance_id for r in kept] == [2]
        assert all(r.kind == "dynamic" for r in kept)

    def test_conflicting_sets_rejected(self):
        with pytest.raises(ValueError):
            filter_by_instance(self.build(), keep={1}, remove={1})

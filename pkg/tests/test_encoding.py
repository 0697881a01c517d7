import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatinit.encoding import (
    BasisSpec,
    DeformationParams,
    PolyFourierCurve,
    TrackCurve,
    basis_matrix,
    basis_row,
    eval_position,
    eval_positions,
    eval_rotation,
    eval_rotations,
    fit_curve,
    jacobian_position,
    jacobian_rotation,
    read_curves,
    right_multiply_matrix,
    write_curves,
)
from splatinit.errors import (
    DegenerateRotation,
    IllConditioned,
    UnderdeterminedSystem,
)
from splatinit.geometry import Quaternion, quat_multiply


def small_spec(frame_count=40):
    return BasisSpec(d_pol=2, d_fourier=3, frame_count=frame_count)


def random_params(rng, spec=None, coeff_scale=0.3):
    spec = spec or small_spec()
    curve = PolyFourierCurve(spec=spec, coeffs=rng.normal(size=(3, spec.dimension)))
    rot = rng.normal(scale=coeff_scale, size=(4, spec.dimension - 1))
    q0 = Quaternion.from_array(rng.normal(size=4)).normalized()
    return DeformationParams(position_curve=curve, rotation_coeffs=rot, q0=q0)


class TestBasis:
    def test_dimension(self):
        assert BasisSpec(d_pol=3, d_fourier=8, frame_count=10).dimension == 20
        assert BasisSpec(d_pol=0, d_fourier=0, frame_count=10).dimension == 1

    def test_hand_computed_row(self):
        # d_pol=2, d_fourier=1, omega=2*pi at tau=0.25:
        # [1, 1/4, 1/16, cos(pi/2), sin(pi/2)]
        spec = BasisSpec(d_pol=2, d_fourier=1, frame_count=5)
        row = basis_row(spec, 0.25)
        np.testing.assert_allclose(row, [1.0, 0.25, 0.0625, 0.0, 1.0], atol=1e-12)

    def test_column_order_cos_before_sin(self):
        spec = BasisSpec(d_pol=0, d_fourier=2, frame_count=9)
        row = basis_row(spec, 0.125)
        w = spec.omega
        np.testing.assert_allclose(
            row,
            [1.0, np.cos(0.125 * w), np.sin(0.125 * w), np.cos(0.25 * w), np.sin(0.25 * w)],
        )

    def test_tau_endpoints(self):
        spec = small_spec(frame_count=61)
        assert spec.tau(0) == 0.0
        assert spec.tau(60) == 1.0
        np.testing.assert_allclose(spec.all_taus()[30], 0.5)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_linearity(self, seed):
        rng = np.random.default_rng(seed)
        spec = small_spec()
        a = PolyFourierCurve(spec=spec, coeffs=rng.normal(size=(3, spec.dimension)))
        b = PolyFourierCurve(spec=spec, coeffs=rng.normal(size=(3, spec.dimension)))
        s = float(rng.normal())
        combo = PolyFourierCurve(spec=spec, coeffs=a.coeffs + s * b.coeffs)
        taus = rng.random(7)
        np.testing.assert_allclose(
            combo.evaluate(taus), a.evaluate(taus) + s * b.evaluate(taus), atol=1e-9
        )


class TestFit:
    def test_exact_recovery_in_span(self):
        rng = np.random.default_rng(4)
        spec = small_spec(frame_count=50)
        truth = rng.normal(size=(3, spec.dimension))
        positions = PolyFourierCurve(spec=spec, coeffs=truth).evaluate(spec.all_taus())
        curve, residual = fit_curve(positions, spec)
        assert np.abs(curve.coeffs - truth).max() < 1e-10
        assert residual.max() < 1e-12

    def test_matches_normal_equations(self):
        # independent oracle: solve A^T A c = A^T y directly
        rng = np.random.default_rng(5)
        spec = BasisSpec(d_pol=1, d_fourier=2, frame_count=30)
        positions = rng.normal(size=(30, 3))
        curve, _ = fit_curve(positions, spec)
        A = basis_matrix(spec, spec.all_taus())
        ref = np.linalg.solve(A.T @ A, A.T @ positions).T
        np.testing.assert_allclose(curve.coeffs, ref, atol=1e-9)

    def test_ridge_matches_augmented_normal_equations(self):
        rng = np.random.default_rng(6)
        spec = BasisSpec(d_pol=1, d_fourier=2, frame_count=30)
        positions = rng.normal(size=(30, 3))
        lam = 0.37
        curve, _ = fit_curve(positions, spec, ridge=lam)
        A = basis_matrix(spec, spec.all_taus())
        ref = np.linalg.solve(A.T @ A + lam * np.eye(spec.dimension), A.T @ positions).T
        np.testing.assert_allclose(curve.coeffs, ref, atol=1e-9)

    def test_underdetermined_raises_without_ridge(self):
        spec = BasisSpec(d_pol=3, d_fourier=8, frame_count=10)
        positions = np.zeros((10, 3))
        with pytest.raises(UnderdeterminedSystem):
            fit_curve(positions, spec)
        curve, _ = fit_curve(positions, spec, ridge=1e-6)
        assert np.abs(curve.coeffs).max() < 1e-9

    def test_ill_conditioned_raises_without_ridge(self):
        spec = BasisSpec(d_pol=25, d_fourier=0, frame_count=30)
        rng = np.random.default_rng(7)
        positions = rng.normal(size=(30, 3))
        with pytest.raises(IllConditioned):
            fit_curve(positions, spec)
        fit_curve(positions, spec, ridge=1e-8)

    def test_residual_reports_rms_misfit(self):
        spec = BasisSpec(d_pol=0, d_fourier=0, frame_count=4)
        positions = np.zeros((4, 3))
        positions[:, 0] = [1.0, -1.0, 1.0, -1.0]
        _, residual = fit_curve(positions, spec)
        np.testing.assert_allclose(residual, [1.0, 0.0, 0.0], atol=1e-12)

    def test_mu0_is_constant_column(self):
        spec = small_spec(frame_count=25)
        rng = np.random.default_rng(8)
        coeffs = rng.normal(size=(3, spec.dimension))
        curve = PolyFourierCurve(spec=spec, coeffs=coeffs)
        np.testing.assert_array_equal(curve.mu0, coeffs[:, 0])


class TestRotation:
    def test_zero_coeffs_reproduce_q0_exactly(self):
        rng = np.random.default_rng(9)
        spec = small_spec()
        curve = PolyFourierCurve(spec=spec, coeffs=rng.normal(size=(3, spec.dimension)))
        q0 = Quaternion.from_array(rng.normal(size=4)).normalized()
        params = DeformationParams(
            position_curve=curve,
            rotation_coeffs=np.zeros((4, spec.dimension - 1)),
            q0=q0,
        )
        for tau in rng.random(20):
            q = eval_rotation(params, float(tau))
            assert q.as_array().tolist() == q0.as_array().tolist()

    def test_right_multiply_matrix_matches_quat_multiply(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            qa = Quaternion.from_array(rng.normal(size=4)).normalized()
            qb = Quaternion.from_array(rng.normal(size=4)).normalized()
            ref = quat_multiply(qa, qb).as_array()
            np.testing.assert_allclose(right_multiply_matrix(qb) @ qa.as_array(), ref, atol=1e-12)

    def test_matches_explicit_quaternion_path(self):
        rng = np.random.default_rng(11)
        params = random_params(rng)
        taus = rng.random(15)
        batch = eval_rotations(params, taus)
        spec = params.spec
        for tau, row in zip(taus, batch):
            tail = basis_row(spec, float(tau))[1:]
            v = params.rotation_coeffs @ tail + np.array([1.0, 0.0, 0.0, 0.0])
            delta = Quaternion.from_array(v).normalized()
            ref = quat_multiply(delta, params.q0)
            np.testing.assert_allclose(row, ref.as_array(), atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_unit_norm(self, seed):
        rng = np.random.default_rng(seed)
        params = random_params(rng, coeff_scale=1.0)
        taus = rng.random(32)
        q = eval_rotations(params, taus)
        np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-12)

    def test_degenerate_increment_raises(self):
        spec = BasisSpec(d_pol=1, d_fourier=0, frame_count=10)
        curve = PolyFourierCurve(spec=spec, coeffs=np.zeros((3, 2)))
        rot = np.zeros((4, 1))
        rot[0, 0] = -1.0  # cancels the identity component at tau = 1
        params = DeformationParams(position_curve=curve, rotation_coeffs=rot, q0=Quaternion.identity())
        with pytest.raises(DegenerateRotation):
            eval_rotation(params, 1.0)
        with pytest.raises(DegenerateRotation):
            jacobian_rotation(params, 1.0)


def central_difference(func, x0, step=1e-6):
    x0 = np.asarray(x0, dtype=np.float64)
    base = func(x0)
    jac = np.zeros((base.shape[0], x0.shape[0]))
    for i in range(x0.shape[0]):
        plus = x0.copy()
        plus[i] += step
        minus = x0.copy()
        minus[i] -= step
        jac[:, i] = (func(plus) - func(minus)) / (2.0 * step)
    return jac


class TestJacobians:
    def test_position_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        params = random_params(rng)
        spec = params.spec
        tau = 0.37

        def position_of(flat):
            curve = PolyFourierCurve(spec=spec, coeffs=flat.reshape(3, spec.dimension))
            return curve.evaluate(np.array([tau]))[0]

        analytic = jacobian_position(params, tau)
        numeric = central_difference(position_of, params.position_curve.coeffs.reshape(-1))
        assert np.abs(analytic - numeric).max() < 1e-6

    def test_rotation_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        params = random_params(rng)
        spec = params.spec
        tau = 0.61

        def quat_of(flat):
            p = DeformationParams(
                position_curve=params.position_curve,
                rotation_coeffs=flat.reshape(4, spec.dimension - 1),
                q0=params.q0,
            )
            return eval_rotations(p, np.array([tau]))[0]

        analytic = jacobian_rotation(params, tau)
        numeric = central_difference(quat_of, params.rotation_coeffs.reshape(-1))
        denom = max(1.0, np.abs(numeric).max())
        assert np.abs(analytic - numeric).max() / denom < 1e-5


class TestCurveIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(14)
        spec = BasisSpec(d_pol=3, d_fourier=2, frame_count=17)
        curves = [
            TrackCurve(
                track_id=tid,
                instance_id=tid % 3 + 1,
                curve=PolyFourierCurve(spec=spec, coeffs=rng.normal(size=(3, spec.dimension))),
                residual_rms=rng.random(3),
            )
            for tid in (4, 1, 9)
        ]
        path = tmp_path / "curves.csv"
        write_curves(curves, path)
        back = read_curves(path)
        assert [c.track_id for c in back] == [1, 4, 9]
        by_id = {c.track_id: c for c in curves}
        for readback in back:
            orig = by_id[readback.track_id]
            assert readback.instance_id == orig.instance_id
            assert readback.curve.spec == spec
            np.testing.assert_array_equal(readback.curve.coeffs, orig.curve.coeffs)
            np.testing.assert_array_equal(readback.residual_rms, orig.residual_rms)

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "curves.csv"
        write_curves([], path)
        path.write_text("a,b,c\n")
        with pytest.raises(Exception):
            read_curves(path)


class TestEvalHelpers:
    def test_scalar_and_batch_agree(self):
        rng = np.random.default_rng(15)
        params = random_params(rng)
        taus = rng.random(6)
        batch = eval_positions(params, taus)
        for tau, row in zip(taus, batch):
            np.testing.assert_allclose(eval_position(params, float(tau)), row)
        qbatch = eval_rotations(params, taus)
        for tau, row in zip(taus, qbatch):
            np.testing.assert_allclose(eval_rotation(params, float(tau)).as_array(), row)

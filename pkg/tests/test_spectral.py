import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import domelight as dl
from domelight.errors import ConfigError, InvariantError, RangeError, ShapeError
from domelight.spectral import (
    dequantize,
    lightmap_from_bytes,
    lightmap_to_bytes,
    load_calibration,
    load_lightmap,
    save_calibration,
    save_lightmap,
    solve_lightmap,
)


def pg_nnls(A, b, iters=500_000, tol=1e-12):
    """Projected-gradient oracle: slow, independent of the active-set path."""
    AtA = A.T @ A
    Atb = A.T @ b
    step = 1.0 / np.linalg.norm(AtA, 2)
    x = np.zeros(A.shape[1])
    for _ in range(iters):
        x_new = np.clip(x - step * (AtA @ x - Atb), 0.0, None)
        if np.abs(x_new - x).max() < tol:
            return x_new
        x = x_new
    return x


def kkt_residual(A, b, x):
    w = A.T @ (b - A @ x)
    passive = x > 0
    res = 0.0
    if passive.any():
        res = max(res, np.abs(w[passive]).max())
    if (~passive).any():
        res = max(res, max(0.0, w[~passive].max()))
    return res


class TestNnls:
    def test_identity_basis(self):
        x = dl.nnls(np.eye(3), np.array([0.5, 0.2, 0.1]))
        np.testing.assert_allclose(x, [0.5, 0.2, 0.1], atol=1e-14)

    def test_symmetric_cancellation(self):
        x = dl.nnls(np.array([[1.0], [1.0]]), np.array([1.0, -1.0]))
        assert x.tolist() == [0.0]

    def test_matches_projected_gradient_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            m = int(rng.integers(6, 13))
            A = rng.random((m, 4))
            b = rng.random(m)
            x = dl.nnls(A, b)
            oracle = pg_nnls(A, b)
            np.testing.assert_allclose(x, oracle, atol=1e-6)
            assert kkt_residual(A, b, x) <= 1e-8

    def test_kkt_on_negative_targets(self):
        rng = np.random.default_rng(43)
        for _ in range(50):
            A = rng.standard_normal((8, 5))
            b = rng.standard_normal(8)
            x = dl.nnls(A, b)
            assert (x >= 0).all()
            assert kkt_residual(A, b, x) <= 1e-8

    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            dl.nnls(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ShapeError):
            dl.nnls(np.eye(3), np.zeros(2))
        with pytest.raises(InvariantError):
            dl.nnls(np.array([[np.inf]]), np.array([1.0]))


class TestCalibration:
    def test_default_calibration_valid(self):
        cal = dl.default_calibration()
        assert cal.mode == "rgb3"
        assert cal.led_basis.shape == (3, 6)
        assert np.isfinite(cal.condition)
        np.testing.assert_allclose(cal.white_point, cal.led_basis @ np.ones(6))

    def test_dead_channel_rejected(self):
        basis = dl.default_calibration().led_basis.copy()
        basis[:, 3] = 0.0  # kill amber
        with pytest.raises(ConfigError, match="amber"):
            dl.SpectralCalibration(mode="rgb3", led_basis=basis)

    def test_negative_entries_rejected(self):
        basis = dl.default_calibration().led_basis.copy()
        basis[0, 0] = -0.2
        with pytest.raises(ConfigError):
            dl.SpectralCalibration(mode="rgb3", led_basis=basis)

    def test_file_roundtrip(self, tmp_path):
        cal = dl.default_calibration()
        p = tmp_path / "cal.json"
        save_calibration(cal, p)
        loaded = load_calibration(p)
        assert loaded.mode == cal.mode
        np.testing.assert_array_equal(loaded.led_basis, cal.led_basis)


def synthetic_chart():
    """Six distinct LED illuminants and 24 mixed-reflectance patches."""
    rng = np.random.default_rng(123)
    illum = np.array(
        [
            [1.0, 0.05, 0.02],
            [0.05, 1.0, 0.08],
            [0.02, 0.1, 1.0],
            [0.9, 0.55, 0.05],
            [0.05, 0.6, 0.9],
            [0.95, 0.97, 0.92],
        ]
    )
    refl = rng.uniform(0.05, 0.95, size=(24, 3))
    refl[18] = [0.9, 0.9, 0.9]  # a near-neutral bright patch
    captures = np.einsum("ck,pk->cpk", illum, refl)
    return illum, refl, captures


class TestChartCalibration:
    def test_basis_reproduces_synthesis_matrix(self):
        illum, refl, captures = synthetic_chart()
        cal = dl.calibrate_from_chart(captures, refl)
        assert cal.mode == "chart24"
        for c in range(6):
            np.testing.assert_allclose(cal.led_basis[:, c], captures[c].reshape(-1))
        np.testing.assert_allclose(cal.rgb_basis, illum.T, rtol=1e-12)

    def test_dead_amber_rejected(self):
        _, refl, captures = synthetic_chart()
        captures = captures.copy()
        captures[3] = 0.0
        with pytest.raises(ConfigError, match="amber"):
            dl.calibrate_from_chart(captures, refl)

    def test_capture_scaling_halves_weights(self):
        illum, refl, captures = synthetic_chart()
        cal1 = dl.calibrate_from_chart(captures, refl)
        cal2 = dl.calibrate_from_chart(captures * 2.0, refl)
        target = np.array([0.4, 0.3, 0.2])
        w1 = dl.solve_panel(target, cal1)
        w2 = dl.solve_panel(target, cal2)
        np.testing.assert_allclose(w2, w1 / 2.0, atol=1e-10)

    def test_single_led_illuminant_recovers_one_hot(self):
        illum, refl, captures = synthetic_chart()
        cal = dl.calibrate_from_chart(captures, refl)
        target = illum[2]  # blue channel's own illuminant at unit drive
        w = dl.solve_panel(target, cal)
        expected = np.zeros(6)
        expected[2] = 1.0
        np.testing.assert_allclose(w, expected, atol=1e-6)


class TestSolvePanel:
    def test_zero_target_zero_weights(self):
        cal = dl.default_calibration()
        assert dl.solve_panel(np.zeros(3), cal).tolist() == [0.0] * 6

    def test_white_target_residual_zero(self):
        # (1,1,1) admits many six-channel solutions; assert residual + KKT,
        # not specific weights
        cal = dl.default_calibration()
        target = np.ones(3)
        w = dl.solve_panel(target, cal)
        residual = cal.led_basis @ w - target
        assert np.abs(residual).max() <= 1e-10
        assert kkt_residual(cal.led_basis, target, w) <= 1e-8

    def test_scale_equivariance_pre_normalization(self):
        cal = dl.default_calibration()
        rng = np.random.default_rng(77)
        for _ in range(20):
            t = rng.random(3)
            s = rng.uniform(0.1, 9.0)
            np.testing.assert_allclose(dl.solve_panel(t * s, cal), dl.solve_panel(t, cal) * s, atol=1e-9)

    def test_in_gamut_fidelity(self):
        cal = dl.default_calibration()
        rng = np.random.default_rng(88)
        for _ in range(50):
            drive = rng.random(6)
            target = cal.led_basis @ drive
            w = dl.solve_panel(target, cal)
            np.testing.assert_allclose(cal.led_basis @ w, target, atol=1e-6)

    def test_negative_target_rejected(self):
        with pytest.raises(RangeError):
            dl.solve_panel(np.array([-0.1, 0, 0]), dl.default_calibration())

    def test_lightmap_normalization(self):
        cal = dl.default_calibration()
        targets = np.array([[5.0, 5.0, 5.0], [1.0, 0.5, 0.2]])
        weights, scale = solve_lightmap(targets, cal)
        assert weights.max() <= 1.0 + 1e-12
        assert scale >= 1.0
        # scale * emitted == target for in-gamut rows
        np.testing.assert_allclose(scale * (cal.led_basis @ weights[1]), targets[1], atol=1e-8)


class TestQuantize:
    def test_endpoints(self):
        assert dl.quantize(np.array([1.0, 0.0])).tolist() == [255, 0]

    def test_half_rounds_up(self):
        assert dl.quantize(np.array([0.5]))[0] == 128  # 127.5 -> 128

    def test_out_of_range(self):
        with pytest.raises(RangeError):
            dl.quantize(np.array([1.1]))
        # within tolerance clamps
        assert dl.quantize(np.array([1.0 + 1e-12]))[0] == 255

    def test_idempotent_on_lattice(self):
        rng = np.random.default_rng(5)
        w = rng.random(1000)
        q1 = dl.quantize(w)
        q2 = dl.quantize(dequantize(q1))
        assert np.array_equal(q1, q2)

    @given(hnp.arrays(np.float64, 50, elements=st.floats(0, 1)))
    @settings(max_examples=100, deadline=None)
    def test_quantization_error_bound(self, w):
        err = np.abs(dequantize(dl.quantize(w)) - w)
        assert (err <= 1.0 / 510.0 + 1e-15).all()


class TestLightMap:
    def test_dmx_must_match_weights(self):
        w = np.full((2, 6), 0.5)
        with pytest.raises(InvariantError):
            dl.LightMap(weights=w, dmx=np.zeros((2, 6), dtype=np.uint8), exposure_scalar=1.0, deficit=np.zeros(3))

    def test_from_weights(self):
        lm = dl.LightMap.from_weights(np.full((3, 6), 0.25))
        assert lm.n_panels == 3
        assert (lm.dmx == 64).all()

    def test_blob_roundtrip(self, tmp_path):
        rng = np.random.default_rng(31)
        lm = dl.LightMap.from_weights(rng.random((480, 6)), exposure_scalar=2.5, deficit=np.array([0.1, 0.0, 0.3]))
        p = tmp_path / "map.lmb"
        save_lightmap(lm, p)
        loaded = load_lightmap(p)
        assert np.array_equal(loaded.weights, lm.weights)
        assert np.array_equal(loaded.dmx, lm.dmx)
        assert loaded.exposure_scalar == lm.exposure_scalar
        assert np.array_equal(loaded.deficit, lm.deficit)
        # byte determinism
        assert lightmap_to_bytes(loaded) == p.read_bytes()

    def test_blob_truncation(self):
        lm = dl.LightMap.zero(4)
        buf = lightmap_to_bytes(lm)
        with pytest.raises(ConfigError):
            lightmap_from_bytes(buf[:-3])


class TestReconstructEnv:
    def test_zero_lightmap_zero_map(self):
        dome = dl.generate_dome(12)
        cal = dl.default_calibration()
        env = dl.reconstruct_env(dl.LightMap.zero(12), dome, cal, 32, 16)
        assert np.array_equal(env.pixels, np.zeros((16, 32, 3)))

    def test_single_panel_energy_confined(self):
        dome = dl.generate_dome(12, cutoff_polar=np.pi)
        cal = dl.default_calibration()
        w = np.zeros((12, 6))
        w[5, 0] = 1.0  # red channel full drive
        lm = dl.LightMap.from_weights(w, exposure_scalar=3.0)
        env = dl.reconstruct_env(lm, dome, cal, 64, 32)
        part = dl.partition(dome, 64, 32)
        outside = part.owner != 5
        assert (env.pixels[outside] == 0).all()
        emitted = 3.0 * cal.rgb_basis @ w[5]
        np.testing.assert_allclose(dl.total_power(env), emitted, rtol=1e-9)

    def test_per_cell_constant(self):
        dome = dl.generate_dome(8, cutoff_polar=np.pi)
        cal = dl.default_calibration()
        rng = np.random.default_rng(3)
        lm = dl.LightMap.from_weights(rng.random((8, 6)))
        env = dl.reconstruct_env(lm, dome, cal, 64, 32)
        part = dl.partition(dome, 64, 32)
        for p in range(8):
            cell = env.pixels[part.owner == p]
            assert (cell == cell[0]).all()

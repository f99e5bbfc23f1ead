import json
import math

import numpy as np
import pytest

import domelight as dl
from domelight.dome import CHANNELS_PER_PANEL, DEFAULT_CUTOFF_POLAR, PANELS_PER_UNIVERSE
from domelight.envmap import pixel_directions, solid_angles
from domelight.errors import ConfigError, RangeError, ShapeError


@pytest.fixture(scope="module")
def dome480():
    return dl.generate_dome(480)


class TestGenerateDome:
    def test_panel_and_universe_counts(self, dome480):
        assert len(dome480.panels) == 480
        assert {p.universe for p in dome480.panels} == {0, 1, 2, 3, 4, 5}
        assert math.isclose(DEFAULT_CUTOFF_POLAR, math.pi - math.asin(0.8))

    def test_addressing_scheme(self, dome480):
        for p in dome480.panels:
            assert p.universe == p.id // PANELS_PER_UNIVERSE
            assert p.channel_base == (p.id % PANELS_PER_UNIVERSE) * CHANNELS_PER_PANEL
            assert p.channel_base + CHANNELS_PER_PANEL <= 512

    def test_single_panel_at_zenith(self):
        dome = dl.generate_dome(1)
        assert np.allclose(dome.panels[0].direction, [0, 1, 0])
        assert dome.panels[0].universe == 0
        assert dome.panels[0].channel_base == 0

    def test_two_panel_separation(self):
        dome = dl.generate_dome(2, cutoff_polar=math.pi)
        d = dome.directions()
        sep = math.acos(float(np.clip(d[0] @ d[1], -1, 1)))
        assert sep > math.pi / 2

    def test_directions_unit_and_within_cutoff(self, dome480):
        d = dome480.directions()
        assert np.abs(np.linalg.norm(d, axis=1) - 1).max() < 1e-12
        polar = np.arccos(np.clip(d[:, 1], -1, 1))
        assert polar.max() <= DEFAULT_CUTOFF_POLAR + 1e-12

    def test_neighbors_symmetric(self, dome480):
        for p, nbs in enumerate(dome480.neighbors):
            assert len(nbs) >= 1
            for q in nbs:
                assert p in dome480.neighbors[q]

    def test_invalid_args(self):
        with pytest.raises(RangeError):
            dl.generate_dome(0)
        with pytest.raises(RangeError):
            dl.generate_dome(4, cutoff_polar=0.0)


class TestDomeFiles:
    def test_save_load_identity(self, dome480, tmp_path):
        p = tmp_path / "dome.json"
        dl.save_dome(dome480, p)
        loaded = dl.load_dome(p)
        assert len(loaded) == len(dome480)
        assert np.allclose(loaded.directions(), dome480.directions())
        assert loaded.cutoff_polar == dome480.cutoff_polar
        for a, b in zip(loaded.panels, dome480.panels):
            assert (a.universe, a.channel_base) == (b.universe, b.channel_base)
        # second save produces byte-identical file
        p2 = tmp_path / "dome2.json"
        dl.save_dome(loaded, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_duplicate_dmx_address(self, tmp_path):
        doc = {
            "version": 1,
            "cutoff_polar": 3.0,
            "neighbors_k": 2,
            "panels": [
                {"id": 0, "dir": [0, 1, 0], "universe": 0, "channel": 0},
                {"id": 1, "dir": [0, 0, 1], "universe": 0, "channel": 0},
            ],
        }
        p = tmp_path / "dup.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            dl.load_dome(p)

    def test_non_unit_direction_rejected(self, tmp_path):
        doc = {
            "version": 1,
            "cutoff_polar": 3.0,
            "neighbors_k": 1,
            "panels": [
                {"id": 0, "dir": [0, 2, 0], "universe": 0, "channel": 0},
                {"id": 1, "dir": [0, 0, 1], "universe": 0, "channel": 6},
            ],
        }
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            dl.load_dome(p)

    def test_slightly_off_unit_renormalized(self, tmp_path, caplog):
        eps = 5e-4  # between the warn (1e-6) and reject (1e-3) thresholds
        doc = {
            "version": 1,
            "cutoff_polar": 3.0,
            "neighbors_k": 1,
            "panels": [
                {"id": 0, "dir": [0, 1 + eps, 0], "universe": 0, "channel": 0},
                {"id": 1, "dir": [0, 0, 1], "universe": 0, "channel": 6},
            ],
        }
        p = tmp_path / "wobble.json"
        p.write_text(json.dumps(doc))
        with caplog.at_level("WARNING"):
            dome = dl.load_dome(p)
        assert np.allclose(dome.panels[0].direction, [0, 1, 0])
        assert any("re-normalizing" in r.message for r in caplog.records)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "garbage.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            dl.load_dome(p)


class TestPartition:
    def test_panel_direction_owned_by_itself(self, dome480):
        part = dl.partition(dome480, 256, 128)
        dirs = dome480.directions()
        from domelight.envmap import direction_to_pixel

        i, j = direction_to_pixel(dirs, 256, 128)
        # brute-force check: the pixel holding each panel's own direction
        # is nearest to that panel
        pd = pixel_directions(256, 128)
        for p in range(len(dome480)):
            dots = pd[j[p], i[p]] @ dirs.T
            assert part.owner[j[p], i[p]] == np.argmax(dots)

    def test_single_panel_owns_everything(self):
        dome = dl.generate_dome(1)
        part = dl.partition(dome, 16, 8)
        assert (part.owner == 0).all()

    @pytest.mark.parametrize("n", [1, 2, 12])
    def test_voronoi_exhaustive(self, n):
        dome = dl.generate_dome(n, cutoff_polar=math.pi)
        part = dl.partition(dome, 64, 32)
        dirs = pixel_directions(64, 32).reshape(-1, 3)
        dots = dirs @ dome.directions().T
        owner = part.owner.reshape(-1)
        got = dots[np.arange(dirs.shape[0]), owner]
        assert (got >= dots.max(axis=1) - 1e-15).all()
        # ties break to the lowest panel id
        assert np.array_equal(owner, np.argmax(dots, axis=1))

    def test_weights_nonneg_and_norms(self, dome480):
        part = dl.partition(dome480, 64, 32)
        assert (part.weight >= 0).all()
        np.testing.assert_allclose(
            np.bincount(part.owner.reshape(-1), weights=part.weight.reshape(-1), minlength=480),
            part.cell_norm,
        )

    def test_drop_uncovered_marks_floor(self, dome480):
        part = dl.partition(dome480, 64, 32, drop_uncovered=True)
        theta = np.pi * (np.arange(32) + 0.5) / 32
        floor_rows = theta > dome480.cutoff_polar
        assert (part.owner[floor_rows] == -1).all()
        assert (part.owner[~floor_rows] >= 0).all()
        assert (part.weight[floor_rows] == 0).all()

    def test_grid_too_small(self, dome480):
        with pytest.raises(RangeError):
            dl.partition(dome480, 4, 2)


class TestIntegrate:
    def test_uniform_power_proportional_to_cell_area(self, dome480):
        env = dl.EnvironmentMap(np.ones((64, 128, 3)))
        part = dl.partition(dome480, 128, 64)
        powers = dl.integrate(env, part)
        omega = solid_angles(128, 64).reshape(-1)
        areas = np.bincount(part.owner.reshape(-1), weights=omega, minlength=480)
        total = powers.sum(axis=0)
        assert total == pytest.approx([4 * np.pi] * 3, rel=1e-3)
        np.testing.assert_allclose(powers[:, 0], areas * total[0] / areas.sum(), rtol=1e-9)

    def test_impulse_power_exact(self, dome480):
        part = dl.partition(dome480, 64, 32)
        px = np.zeros((32, 64, 3))
        px[10, 20] = [2.0, 3.0, 4.0]
        env = dl.EnvironmentMap(px)
        powers = dl.integrate(env, part)
        owner = part.owner[10, 20]
        nonzero = np.flatnonzero(powers.sum(axis=1))
        assert nonzero.tolist() == [owner]
        np.testing.assert_allclose(powers[owner], dl.total_power(env), rtol=1e-12)

    def test_energy_conservation_random(self):
        dome = dl.generate_dome(12, cutoff_polar=math.pi)
        part = dl.partition(dome, 64, 32)
        rng = np.random.default_rng(17)
        env = dl.EnvironmentMap(rng.random((32, 64, 3)) * 5)
        powers = dl.integrate(env, part)
        total = dl.total_power(env)
        np.testing.assert_allclose(powers.sum(axis=0), total, rtol=1e-9)

    def test_monotonic_scaling_exact(self, dome480):
        part = dl.partition(dome480, 64, 32)
        rng = np.random.default_rng(21)
        base = rng.random((32, 64, 3))
        p1 = dl.integrate(dl.EnvironmentMap(base), part)
        p2 = dl.integrate(dl.EnvironmentMap(base * 4.0), part)  # power of two: exact in fp
        assert np.array_equal(p2, p1 * 4.0)

    def test_rotation_equivariance(self):
        # rotate env by k azimuth steps and the dome by the same angle:
        # identical powers (panel ids unchanged by construction)
        w, h, k = 64, 32, 9
        dome = dl.generate_dome(40, cutoff_polar=math.pi)
        angle = 2 * np.pi * k / w
        rot = np.array(
            [
                [np.cos(angle), 0.0, np.sin(angle)],
                [0.0, 1.0, 0.0],
                [-np.sin(angle), 0.0, np.cos(angle)],
            ]
        )
        rotated = dl.DomeGeometry(
            panels=tuple(
                dl.PanelDescriptor(
                    id=p.id,
                    direction=rot @ p.direction / np.linalg.norm(rot @ p.direction),
                    universe=p.universe,
                    channel_base=p.channel_base,
                )
                for p in dome.panels
            ),
            neighbors=dome.neighbors,
            cutoff_polar=dome.cutoff_polar,
            neighbors_k=dome.neighbors_k,
        )
        rng = np.random.default_rng(2)
        px = rng.random((h, w, 3))
        env = dl.EnvironmentMap(px)
        env_rot = dl.EnvironmentMap(np.roll(px, k, axis=1))
        p1 = dl.integrate(env, dl.partition(dome, w, h))
        p2 = dl.integrate(env_rot, dl.partition(rotated, w, h))
        np.testing.assert_allclose(p1, p2, rtol=1e-9, atol=1e-12)

    def test_empty_cell_gets_zero(self):
        # panels at both poles; light only near the top: bottom panel is 0
        dome = dl.generate_dome(2, cutoff_polar=math.pi)
        part = dl.partition(dome, 64, 32)
        px = np.zeros((32, 64, 3))
        px[0, :] = 1.0
        powers = dl.integrate(dl.EnvironmentMap(px), part)
        assert powers[1] == pytest.approx([0.0, 0.0, 0.0])

    def test_dimension_mismatch(self, dome480):
        part = dl.partition(dome480, 64, 32)
        env = dl.EnvironmentMap(np.ones((16, 32, 3)))
        with pytest.raises(ShapeError):
            dl.integrate(env, part)

    def test_drop_uncovered_removes_floor_energy(self, dome480):
        rng = np.random.default_rng(33)
        px = rng.random((32, 64, 3))
        env = dl.EnvironmentMap(px)
        keep = dl.integrate(env, dl.partition(dome480, 64, 32))
        drop = dl.integrate(env, dl.partition(dome480, 64, 32, drop_uncovered=True))
        omega = solid_angles(64, 32)
        theta = np.pi * (np.arange(32) + 0.5) / 32
        floor = theta > dome480.cutoff_polar
        floor_power = np.einsum("hwc,hw->c", px[floor], omega[floor])
        np.testing.assert_allclose(keep.sum(axis=0) - drop.sum(axis=0), floor_power, rtol=1e-9)

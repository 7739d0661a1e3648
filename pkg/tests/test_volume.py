import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambi360.geometry import ImageDims, PixelCoord, Projection, SphericalDirection, vectors_to_normalized
from ambi360.volume import (
    DegenerateDirectionError,
    ProbabilityVolume,
    SourceRegion,
    annotation_to_volume,
    ball_mask,
    extract_sources,
    lift_to_volume,
    region_direction,
    threshold,
    voxel_centers,
    voxel_coordinate,
)

from .oracles import brute_centroids, random_sparse_volume


class TestGrid:
    def test_voxel_coordinates(self):
        assert voxel_coordinate(0, 64) == -0.5 + 0.5 / 64
        assert voxel_coordinate(63, 64) == 0.5 - 0.5 / 64

    def test_centers_are_x_fastest(self):
        c = voxel_centers(8)
        assert c[0, 0, 1, 0] > c[0, 0, 0, 0]  # x grows along the last axis
        assert c[1, 0, 0, 2] > c[0, 0, 0, 2]  # z grows along the first

    def test_ball_excludes_corners(self):
        m = ball_mask(16)
        assert not m[0, 0, 0] and m[8, 8, 8]

    def test_volume_must_be_cube(self):
        with pytest.raises(ValueError):
            ProbabilityVolume(np.zeros((4, 4, 5)))


class TestLift:
    @pytest.mark.parametrize("proj", list(Projection))
    def test_uniform_one(self, proj):
        v = lift_to_volume(np.ones((7, 7)), proj, 32)
        np.testing.assert_array_equal(v.data, ball_mask(32).astype(np.float32))

    def test_all_zero(self):
        assert not lift_to_volume(np.zeros((7, 7)), Projection.EQUIRECT, 32).data.any()

    def test_single_hot_cell_matches_brute_force(self):
        res, cell = 64, (3, 5)
        m = np.zeros((7, 7))
        m[cell] = 1.0
        v = lift_to_volume(m, Projection.EQUIRECT, res)
        count = 0
        for z in range(res):
            cz = -0.5 + (z + 0.5) / res
            for y in range(res):
                cy = -0.5 + (y + 0.5) / res
                for x in range(res):
                    cx = -0.5 + (x + 0.5) / res
                    r = math.sqrt(cx * cx + cy * cy + cz * cz)
                    if r == 0 or r > 0.5:
                        continue
                    phi = math.atan2(cy, cx)
                    theta = math.atan2(cz, math.hypot(cx, cy))
                    col = min(int((phi + math.pi) / (2 * math.pi) * 7), 6)
                    row = min(int((math.pi / 2 - theta) / math.pi * 7), 6)
                    count += (row, col) == cell
        assert int(np.count_nonzero(v.data)) == count

    def test_values_copied_along_rays(self):
        m = np.random.default_rng(0).random((7, 7))
        v = lift_to_volume(m, Projection.CUBEMAP, 24)
        pts = voxel_centers(24)[ball_mask(24)]
        xn, yn = vectors_to_normalized(pts, Projection.CUBEMAP)
        rows, cols = np.minimum((yn * 7).astype(int), 6), np.minimum((xn * 7).astype(int), 6)
        np.testing.assert_array_equal(v.data[ball_mask(24)], m[rows, cols].astype(np.float32))

    def test_too_coarse(self):
        with pytest.raises(ValueError):
            lift_to_volume(np.ones((7, 7)), Projection.EQUIRECT, 4)


class TestThreshold:
    def test_boundary_value_is_removed(self):
        data = np.zeros((8, 8, 8), np.float32)
        data[0, 0, :3] = [0.3, 0.5, 0.7]
        out = threshold(ProbabilityVolume(data), 0.5).data[0, 0, :3]
        np.testing.assert_array_equal(out, np.float32([0.0, 0.0, 0.7]))

    def test_epsilon_zero_keeps_positive(self):
        data = np.random.default_rng(1).random((8, 8, 8)).astype(np.float32)
        data[data < 0.2] = 0.0
        np.testing.assert_array_equal(threshold(ProbabilityVolume(data), 0.0).data, data)

    def test_epsilon_one_clears(self):
        assert not threshold(ProbabilityVolume(np.ones((8, 8, 8))), 1.0).data.any()

    def test_float32_value_vs_double_epsilon(self):
        # float32(0.6) is slightly above 0.6, so it survives epsilon = 0.6
        data = np.full((8, 8, 8), 0.6, np.float32)
        assert threshold(ProbabilityVolume(data), 0.6).data.all()

    @pytest.mark.parametrize("eps", [-0.1, 1.1])
    def test_epsilon_range(self, eps):
        with pytest.raises(ValueError):
            threshold(ProbabilityVolume(np.zeros((8, 8, 8))), eps)

    @given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
    def test_properties(self, seed, e1, e2):
        data = np.random.default_rng(seed).random((8, 8, 8)).astype(np.float32)
        v = ProbabilityVolume(data)
        t1 = threshold(v, e1)
        np.testing.assert_array_equal(threshold(t1, e1).data, t1.data)
        lo, hi = sorted((e1, e2))
        assert np.all(threshold(v, hi).nonzero_mask() <= threshold(v, lo).nonzero_mask())
        kept = data.astype(np.float64) > e1
        np.testing.assert_array_equal(t1.data, np.where(kept, data, 0))


class TestExtract:
    def test_single_voxel(self):
        # no grid has a voxel center at exactly (0.25, 0, 0); x = 0.25 at R=10
        data = np.zeros((10, 10, 10), np.float32)
        data[5, 5, 7] = 1.0
        [r] = extract_sources(ProbabilityVolume(data))
        assert r.centroid == (0.25, voxel_coordinate(5, 10), voxel_coordinate(5, 10))
        assert r.mass == 1.0

    def test_empty(self):
        assert extract_sources(ProbabilityVolume(np.zeros((8, 8, 8)))) == []

    def test_two_blobs_heavier_first(self):
        data = np.zeros((16, 16, 16), np.float32)
        data[2:4, 8, 8] = 0.5
        data[12:15, 8, 8] = 0.5
        regions = extract_sources(ProbabilityVolume(data))
        assert [r.mass for r in regions] == [1.5, 1.0]

    def test_equal_mass_tie_by_first_voxel(self):
        data = np.zeros((16, 16, 16), np.float32)
        data[12, 8, 8] = 1.0
        data[2, 8, 8] = 1.0
        a, b = extract_sources(ProbabilityVolume(data))
        assert a.indices[0] < b.indices[0]

    def test_diagonal_neighbours_connect(self):
        data = np.zeros((8, 8, 8), np.float32)
        data[3, 3, 3] = data[4, 4, 4] = 1.0
        assert len(extract_sources(ProbabilityVolume(data))) == 1

    def test_uniform_blob_centroid_is_mean_of_centers(self):
        data = np.zeros((16, 16, 16), np.float32)
        data[5:9, 6:8, 9:12] = 0.8
        [r] = extract_sources(ProbabilityVolume(data))
        idx = np.argwhere(data)
        mean = [np.mean(-0.5 + (idx[:, k] + 0.5) / 16) for k in (2, 1, 0)]
        np.testing.assert_allclose(r.centroid, mean, rtol=1e-15)

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            data = random_sparse_volume(rng)
            got = extract_sources(ProbabilityVolume(data))
            want = brute_centroids(data)
            assert [(r.mass, int(r.indices[0]), r.centroid) for r in got] == want

    def test_indices_ascending(self):
        data = random_sparse_volume(np.random.default_rng(3))
        for r in extract_sources(ProbabilityVolume(data)):
            assert np.all(np.diff(r.indices) > 0)


class TestRegionDirection:
    def region(self, c):
        return SourceRegion(np.array([0]), 1.0, c, 64)

    def test_front(self):
        d = region_direction(self.region((0.25, 0.0, 0.0)))
        assert (d.phi, d.theta) == (0.0, 0.0)

    def test_pole(self):
        assert region_direction(self.region((0.0, 0.0, 0.25))).theta == pytest.approx(math.pi / 2)

    def test_symmetric_pair_is_degenerate(self):
        data = np.zeros((9, 9, 9), np.float32)
        data[4, 4, 7] = data[4, 4, 1] = 1.0  # x = +1/3 and -1/3, y = z = 0
        idx = np.flatnonzero(data)
        c = tuple(float(np.mean(voxel_centers(9).reshape(-1, 3)[idx][:, k])) for k in range(3))
        with pytest.raises(DegenerateDirectionError):
            region_direction(self.region(c))


class TestAnnotationVolume:
    dims = ImageDims(64, 32)

    def test_front_source_cone(self):
        v = annotation_to_volume([PixelCoord(31.5, 15.5)], "equirect", self.dims, 32, math.radians(10))
        pts = voxel_centers(32)[v.nonzero_mask()]
        assert len(pts) > 0
        unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        assert np.all(unit[:, 0] >= math.cos(math.radians(10)))

    def test_no_sources(self):
        assert not annotation_to_volume([], "equirect", self.dims, 16).data.any()

    def test_count_matches_brute_force(self):
        p, spread, res = PixelCoord(10.0, 7.0), math.radians(15), 24
        v = annotation_to_volume([p], "equirect", self.dims, res, spread)
        phi = 2 * math.pi * (p.x + 0.5) / 64 - math.pi
        theta = math.pi / 2 - math.pi * (p.y + 0.5) / 32
        d = SphericalDirection(phi, theta).to_vector()
        count = 0
        for z in range(res):
            for y in range(res):
                for x in range(res):
                    c = np.array([-0.5 + (i + 0.5) / res for i in (x, y, z)])
                    r = float(np.linalg.norm(c))
                    if 0 < r <= 0.5 and float(c @ d) / r >= math.cos(spread):
                        count += 1
        assert int(np.count_nonzero(v.data)) == count

    def test_values_are_binary(self):
        v = annotation_to_volume([PixelCoord(5, 5)], "cubemap3x2", ImageDims(60, 40), 16)
        assert set(np.unique(v.data)) <= {0.0, 1.0}

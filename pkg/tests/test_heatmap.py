import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lmreg.errors import InvalidArgumentError
from lmreg.heatmap import (NEG_INF, Heatmap, bce_with_logits, decode, gaussian_heatmap,
                           hard_argmax, read_heatmaps, soft_argmax, soft_argmax_jacobian,
                           softmax2d, write_heatmaps)

grids = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
               elements=st.floats(-50, 50, allow_nan=False))


def spike(size, x, y, value=1.0):
    w, h = size
    g = np.zeros((h, w))
    g[y, x] = value
    return g


class TestSoftmax:
    def test_constant_is_uniform(self):
        p = softmax2d(np.full((4, 6), 3.7), tau=0.3)
        np.testing.assert_allclose(p, np.full((4, 6), 1 / 24))

    def test_saturation(self):
        g = np.zeros((5, 5))
        g[2, 3] = 1000
        p = softmax2d(g, 1.0)
        assert p[2, 3] == pytest.approx(1.0)

    def test_hand_value(self):
        p = softmax2d([[0, np.log(2)], [0, 0]], 1.0)
        np.testing.assert_allclose(p, [[0.2, 0.4], [0.2, 0.2]], atol=1e-15)

    @pytest.mark.parametrize("tau", [0, -1, np.nan])
    def test_bad_temperature(self, tau):
        with pytest.raises(InvalidArgumentError):
            softmax2d(np.zeros((2, 2)), tau)

    def test_sums_to_one_many(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            g = rng.uniform(-50, 50, size=rng.integers(1, 20, size=2))
            p = softmax2d(g, rng.uniform(0.01, 5))
            assert abs(p.sum() - 1) < 1e-9
            assert np.all(p >= 0)

    def test_no_overflow(self):
        p = softmax2d(np.array([[1e6, 1e6 - 1]]), 1e-3)
        assert np.all(np.isfinite(p))


class TestSoftArgmax:
    def test_uniform_is_center(self):
        np.testing.assert_allclose(soft_argmax(np.zeros((5, 5)), 1.0), [2, 2])

    def test_spike(self):
        np.testing.assert_allclose(soft_argmax(spike((32, 32), 10, 20), 0.01), [10, 20], atol=1e-6)

    def test_two_spikes(self):
        g = np.full((1, 5), NEG_INF)
        g[0, 0] = g[0, 4] = 0.0
        np.testing.assert_allclose(soft_argmax(g, 1.0), [2, 0])

    @given(grids, st.floats(0.05, 5))
    @settings(max_examples=200, deadline=None)
    def test_inside_grid(self, g, tau):
        x, y = soft_argmax(g, tau)
        h, w = g.shape
        assert -1e-9 <= x <= w - 1 + 1e-9
        assert -1e-9 <= y <= h - 1 + 1e-9

    @given(grids, st.floats(-1e3, 1e3))
    @settings(max_examples=100, deadline=None)
    def test_shift_invariant(self, g, c):
        np.testing.assert_allclose(soft_argmax(g + c, 0.7), soft_argmax(g, 0.7), atol=1e-9)

    @pytest.mark.parametrize("xy", [(0, 0), (7, 3), (15, 15), (2, 11)])
    def test_low_temperature_limit(self, xy):
        g = spike((16, 16), *xy)
        assert np.linalg.norm(soft_argmax(g, 1e-3) - hard_argmax(g)) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_jacobian_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(5, 5))
        tau = 0.8
        jac = soft_argmax_jacobian(g, tau)
        h = 1e-4
        for i in range(5):
            for j in range(5):
                e = np.zeros_like(g)
                e[i, j] = h
                fd = (soft_argmax(g + e, tau) - soft_argmax(g - e, tau)) / (2 * h)
                rel = np.abs(jac[:, i, j] - fd) / np.maximum(np.abs(fd), 1e-8)
                assert np.all(rel < 1e-4), (i, j, jac[:, i, j], fd)


class TestHardArgmax:
    def test_spike(self):
        np.testing.assert_array_equal(hard_argmax(spike((32, 32), 10, 20)), [10, 20])

    def test_tie_break(self):
        np.testing.assert_array_equal(hard_argmax(np.zeros((4, 4))), [0, 0])

    def test_tie_break_row_major(self):
        g = np.zeros((3, 3))
        g[1, 0] = g[0, 2] = 1
        np.testing.assert_array_equal(hard_argmax(g), [2, 0])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_exhaustive_scan(self, seed):
        g = np.random.default_rng(seed).normal(size=(17, 23))
        best, pos = -np.inf, None
        for y in range(g.shape[0]):
            for x in range(g.shape[1]):
                if g[y, x] > best:
                    best, pos = g[y, x], (x, y)
        np.testing.assert_array_equal(hard_argmax(g), pos)


class TestGaussianHeatmap:
    def test_peak_at_center(self):
        np.testing.assert_array_equal(hard_argmax(gaussian_heatmap((10, 20), 2, (40, 40))), [10, 20])

    def test_subpixel_center(self):
        g = gaussian_heatmap((10.5, 20), 1.0, (40, 40))
        np.testing.assert_allclose(soft_argmax(g, 0.1), [10.5, 20], atol=0.05)

    def test_wide_sigma_tends_to_grid_center(self):
        g = gaussian_heatmap((3, 5), 1e6, (21, 11))
        np.testing.assert_allclose(soft_argmax(g, 1.0), [10, 5], atol=1e-3)

    def test_formula(self):
        g = gaussian_heatmap((1, 2), 2.0, (4, 3))
        assert g[2, 1] == 0
        assert g[0, 3] == pytest.approx(-((3 - 1) ** 2 + (0 - 2) ** 2) / 8)
        assert g.shape == (3, 4)

    def test_bad_sigma(self):
        with pytest.raises(InvalidArgumentError):
            gaussian_heatmap((0, 0), 0, (4, 4))


class TestBce:
    def test_zero_logits_half_target(self):
        assert bce_with_logits(np.zeros((4, 4)), np.full((4, 4), 0.5)) == pytest.approx(np.log(2), abs=1e-12)

    def test_zero_logits_zero_target(self):
        assert bce_with_logits(np.zeros((3, 5)), np.zeros((3, 5))) == pytest.approx(np.log(2), abs=1e-12)

    def test_saturated(self):
        assert bce_with_logits(np.full((3, 3), 50.0), np.ones((3, 3))) < 1e-20

    def test_matches_naive_formula(self, rng):
        x = rng.uniform(-8, 8, size=(6, 7))
        t = rng.uniform(0, 1, size=(6, 7))
        s = 1 / (1 + np.exp(-x))
        naive = -np.mean(t * np.log(s) + (1 - t) * np.log(1 - s))
        assert bce_with_logits(x, t) == pytest.approx(naive, rel=1e-12)

    def test_extreme_logits_finite(self):
        assert np.isfinite(bce_with_logits(np.array([[1e4, -1e4]]), np.array([[0.0, 1.0]])))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            bce_with_logits(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_target_range(self):
        with pytest.raises(InvalidArgumentError):
            bce_with_logits(np.zeros((2, 2)), np.full((2, 2), 1.5))


class TestDecodeAndFormat:
    def test_decode_stack(self):
        stack = np.stack([gaussian_heatmap(c, 2.0, (64, 48)) for c in [(10, 20), (30.25, 20.5)]])
        np.testing.assert_allclose(decode(stack, "soft", 1.0), [[10, 20], [30.25, 20.5]], atol=1e-3)
        np.testing.assert_array_equal(decode(stack, "hard"), [[10, 20], [30, 20]])

    def test_decode_bad_method(self):
        with pytest.raises(InvalidArgumentError):
            decode(np.zeros((1, 2, 2)), "median")

    def test_round_trip(self, tmp_path, rng):
        stack = rng.normal(size=(3, 7, 5)).astype(np.float32)
        path = tmp_path / "h.hmap"
        write_heatmaps(path, stack)
        np.testing.assert_array_equal(read_heatmaps(path), stack)

    def test_header_layout(self, tmp_path):
        stack = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4)
        path = tmp_path / "h.hmap"
        write_heatmaps(path, stack)
        raw = path.read_bytes()
        assert raw[:4] == b"HMAP"
        assert np.frombuffer(raw[4:20], dtype="<u4").tolist() == [1, 2, 3, 4]
        assert len(raw) == 20 + 2 * 3 * 4 * 4
        assert np.frombuffer(raw[20:], dtype="<f4")[5] == 5.0  # row-major, landmark-major

    @pytest.mark.parametrize("mutate", ["magic", "version", "truncate"])
    def test_corrupt_files(self, tmp_path, mutate):
        path = tmp_path / "h.hmap"
        write_heatmaps(path, np.zeros((1, 2, 2)))
        raw = bytearray(path.read_bytes())
        if mutate == "magic":
            raw[:4] = b"XXXX"
        elif mutate == "version":
            raw[4] = 2
        else:
            raw = raw[:-3]
        path.write_bytes(bytes(raw))
        with pytest.raises(InvalidArgumentError):
            read_heatmaps(path)

    def test_heatmap_type(self):
        hm = Heatmap(np.zeros((3, 4)), landmark_id=2)
        assert hm.shape == (3, 4)
        with pytest.raises(InvalidArgumentError):
            Heatmap(np.array([[np.inf]]))

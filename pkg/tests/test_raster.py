import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from urbangan.errors import ArgumentError, DomainError, ParseError
from urbangan.raster import (CityMap, MapMeta, SourceRaster, binarize, block_aggregate, decode_pgm,
                             encode_pgm, extract_window, from_symmetric_range, overlap_weights, read_map,
                             read_raster, resize_to, to_symmetric_range, window_side_px, write_map,
                             write_raster)


def rand_map(w, seed=0, px=750.0):
    return CityMap(np.random.default_rng(seed).random((w, w)), px)


class TestCityMap:
    def test_invariants(self):
        m = rand_map(4)
        assert m.width == 4 and m.extent == 3000.0
        with pytest.raises(DomainError):
            CityMap(np.full((3, 3), 1.5), 10.0)
        with pytest.raises(DomainError):
            CityMap(np.zeros((1, 1)), 10.0)
        with pytest.raises(DomainError):
            CityMap(np.zeros((3, 4)), 10.0)
        with pytest.raises(DomainError):
            CityMap(np.zeros((3, 3)), 0.0)

    def test_values_read_only(self):
        m = rand_map(4)
        with pytest.raises(ValueError):
            m.values[0, 0] = 0.5

    def test_input_array_not_aliased(self):
        a = np.zeros((3, 3))
        m = CityMap(a, 1.0)
        a[0, 0] = 1.0
        assert m.values[0, 0] == 0.0


class TestExtractWindow:
    def test_side_px_at_12m(self):
        assert window_side_px(100.0, 12.0) == 8334

    def test_side_px_exact_ratio(self):
        assert window_side_px(24.0, 750.0) == 32

    def test_constant_inside(self):
        r = SourceRaster(np.full((50, 50), 0.5), 100.0)
        w = extract_window(r, (25, 25), 2.0)
        assert w.width == 20 and np.all(w.values == 0.5)

    def test_edge_matches_per_pixel_copy(self):
        vals = np.random.default_rng(3).random((30, 40))
        r = SourceRaster(vals, 100.0, origin=(5, 7))
        center = (5 + 2, 7 + 38)
        w = extract_window(r, center, 1.1)  # 11 px
        n = 11
        top, left = 2 - n // 2, 38 - n // 2
        for i in range(n):
            for j in range(n):
                rr, cc = top + i, left + j
                want = vals[rr, cc] if 0 <= rr < 30 and 0 <= cc < 40 else 0.0
                assert w.values[i, j] == want

    def test_center_outside(self):
        r = SourceRaster(np.zeros((10, 10)), 100.0)
        with pytest.raises(DomainError):
            extract_window(r, (10, 0), 0.5)


class TestAggregate:
    def test_two_by_two_block_mean(self):
        # a 1x1 map is not a valid CityMap, so check the weights on the 2x2 -> 1x1 case directly
        x = np.array([[0.0, 1.0], [1.0, 1.0]])
        w = overlap_weights(2, Fraction(375), 1, Fraction(750))
        assert (w @ x @ w.T).tolist() == [[0.75]]
        with pytest.raises(ArgumentError):
            block_aggregate(CityMap(x, 375.0), 750.0)
        big = CityMap(np.pad(x, ((0, 2), (0, 2))), 375.0)
        assert block_aggregate(big, 750.0).values[0, 0] == 0.75

    @pytest.mark.parametrize("factor", [2, 3, 4])
    def test_constant(self, factor):
        m = CityMap(np.full((12, 12), 0.3), 10.0)
        out = block_aggregate(m, 10.0 * factor)
        assert np.allclose(out.values, 0.3, atol=1e-15, rtol=0)

    def test_random_matches_block_mean(self):
        x = np.random.default_rng(1).random((8, 8))
        out = block_aggregate(CityMap(x, 12.0), 24.0)
        assert out.width == 4 and out.pixel_size == 24.0
        assert np.max(np.abs(out.values - oracles.block_mean(x, 2))) < 1e-12

    def test_partial_last_cell_averages_covered_part(self):
        x = np.random.default_rng(2).random((5, 5))
        out = block_aggregate(CityMap(x, 10.0), 20.0)
        assert out.width == 3
        assert out.values[2, 2] == pytest.approx(x[4, 4], abs=1e-15)
        assert out.values[0, 2] == pytest.approx(x[0:2, 4].mean(), abs=1e-15)

    def test_finer_target_rejected(self):
        with pytest.raises(ArgumentError):
            block_aggregate(rand_map(4), 10.0)


class TestResize:
    def test_identity(self):
        m = rand_map(128)
        assert np.array_equal(resize_to(m, 128).values, m.values)

    @pytest.mark.parametrize("n", [2, 5, 7, 16])
    def test_constant(self, n):
        m = CityMap(np.full((9, 9), 0.7), 100.0)
        assert np.allclose(resize_to(m, n).values, 0.7, atol=1e-14, rtol=0)

    def test_six_to_four_matches_overlap_oracle(self):
        x = np.random.default_rng(4).random((6, 6))
        out = resize_to(CityMap(x, 750.0), 4)
        assert np.max(np.abs(out.values - oracles.overlap_resize(x, 4))) < 1e-9
        assert out.extent == pytest.approx(6 * 750.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 10**6))
    def test_mass_preserved(self, n_in, n_out, seed):
        x = np.random.default_rng(seed).random((n_in, n_in))
        out = resize_to(CityMap(x, 1.0), n_out)
        assert out.values.mean() == pytest.approx(x.mean(), abs=1e-12)


class TestSymmetricRange:
    def test_endpoints(self):
        m = CityMap(np.array([[0.0, 1.0], [0.5, 0.25]]), 1.0)
        assert to_symmetric_range(m).tolist() == [[-1.0, 1.0], [0.0, -0.5]]

    def test_round_trip(self):
        m = rand_map(16, 9)
        back = from_symmetric_range(to_symmetric_range(m), m.pixel_size)
        assert np.max(np.abs(back.values - m.values)) < 1e-7

    def test_overshoot_clamped(self):
        back = from_symmetric_range(np.array([[1.0000001, -1.0000001], [0.0, 1.0]]), 1.0)
        assert back.values[0, 0] == 1.0 and back.values[0, 1] == 0.0

    def test_far_out_of_range(self):
        with pytest.raises(DomainError):
            from_symmetric_range(np.array([[1.5, 0.0], [0.0, 0.0]]), 1.0)

    def test_leading_singletons(self):
        assert from_symmetric_range(np.zeros((1, 1, 3, 3)), 1.0).width == 3


class TestFiles:
    def test_round_trip_quantization(self, tmp_path):
        m = CityMap(np.random.default_rng(5).random((17, 17)), 750.0, MapMeta("X1", 1.5, -2.0, "toy"))
        write_map(m, tmp_path / "a.pgm")
        back = read_map(tmp_path / "a.pgm")
        assert np.max(np.abs(back.values - m.values)) <= 1 / 131070
        assert back.pixel_size == 750.0 and back.meta == m.meta

    def test_zero_pixel_size(self, tmp_path):
        write_map(rand_map(3), tmp_path / "a.pgm")
        (tmp_path / "a.json").write_text(json.dumps({"pixel_size_m": 0}))
        with pytest.raises(ParseError):
            read_map(tmp_path / "a.pgm")

    def test_hand_written_two_by_two(self, tmp_path):
        # header, then big-endian 16-bit samples 0, 65535, 32768, 1
        data = b"P5\n# hand made\n2 2\n65535\n" + bytes([0, 0, 255, 255, 128, 0, 0, 1])
        (tmp_path / "h.pgm").write_bytes(data)
        (tmp_path / "h.json").write_text('{"pixel_size_m": 12}')
        m = read_map(tmp_path / "h.pgm")
        assert m.values.tolist() == [[0.0, 1.0], [32768 / 65535, 1 / 65535]]
        assert m.pixel_size == 12.0

    def test_eight_bit(self):
        assert decode_pgm(b"P5 2 1 255\n" + bytes([0, 255])).tolist() == [[0.0, 1.0]]

    @pytest.mark.parametrize("data,word", [
        (b"P2\n2 2\n255\n" + bytes(4), "magic"),
        (b"P5\n2 2\n255\n" + bytes(3), "bytes"),
        (b"P5\n2 2\n0\n", "maxval"),
        (b"P5\n2", "height"),
        (b"P5\n2 2\n100\n" + bytes([0, 0, 0, 200]), "exceeds"),
    ])
    def test_malformed(self, data, word):
        with pytest.raises(ParseError, match=word):
            decode_pgm(data)

    def test_encode_is_deterministic(self):
        x = np.random.default_rng(0).random((4, 4))
        assert encode_pgm(x) == encode_pgm(x.copy())

    def test_raster_round_trip(self, tmp_path):
        r = SourceRaster(np.random.default_rng(6).random((5, 9)), 12.0, (100, 200), "grid")
        write_raster(r, tmp_path / "r.pgm")
        back = read_raster(tmp_path / "r.pgm")
        assert back.values.shape == (5, 9) and back.origin == (100, 200) and back.source == "grid"

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(encode_pgm(np.zeros((2, 2))))
        with pytest.raises(ParseError, match="sidecar"):
            read_map(tmp_path / "x.pgm")


def test_binarize():
    m = CityMap(np.array([[0.2, 0.5], [0.7, 0.0]]), 1.0)
    assert binarize(m).values.tolist() == [[0.0, 1.0], [1.0, 0.0]]

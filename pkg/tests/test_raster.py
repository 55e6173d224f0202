from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.ndimage import gaussian_filter
from oracles import bilinear_oracle, col_shift, row_shift

from hdtrack.geometry import TransformParams, build_homography, translation
from hdtrack.raster import (
    PGMError,
    as_image,
    crop_centered,
    decode_pgm,
    encode_pgm,
    hamming_window,
    move_centered,
    pad_for_correlation,
    read_pgm,
    recover_scale_rotation,
    rsew_grid,
    rsew_point,
    rsew_warp,
    sample_bilinear,
    shift_for_scale_rotation,
    warp_centered,
    warp_homography,
    wrap_angle,
    write_pgm,
)


class TestSampling:
    def test_integer_coordinates_exact(self, texture127):
        v, u = np.mgrid[0:127, 0:127]
        assert np.array_equal(sample_bilinear(texture127, u, v), texture127)

    def test_midpoint_is_average(self, texture127):
        got = sample_bilinear(texture127, 10.5, 20.0)
        assert got == pytest.approx((texture127[20, 10] + texture127[20, 11]) / 2, abs=1e-15)

    @given(st.floats(-2, 128), st.floats(-2, 128))
    def test_four_term_oracle(self, u, v):
        img = np.arange(127 * 127, dtype=float).reshape(127, 127) / (127 * 127)
        assert sample_bilinear(img, u, v) == pytest.approx(bilinear_oracle(img, u, v), abs=1e-12)

    def test_policies(self):
        img = np.array([[0.2, 0.4], [0.6, 0.8]])
        assert sample_bilinear(img, -1.0, 0.0, "zero") == 0.0
        assert sample_bilinear(img, -1.0, 0.0, "clamp") == 0.2
        assert sample_bilinear(img, 0.0, 2.0, "circular_vertical") == pytest.approx(0.2)
        assert sample_bilinear(img, 0.0, -1.0, "circular_vertical") == pytest.approx(0.6)
        with pytest.raises(ValueError):
            sample_bilinear(img, 0.0, 0.0, "mirror")

    def test_as_image_rejects(self):
        for bad in (np.zeros(3), np.zeros((0, 2)), np.array([[np.nan]])):
            with pytest.raises(ValueError):
                as_image(bad)


class TestWarp:
    def test_identity(self, texture127):
        assert np.array_equal(warp_homography(texture127, np.eye(3)), texture127)

    def test_integer_translation(self, texture127):
        out = warp_homography(texture127, translation(3, -2))
        assert np.array_equal(out[2:, :-3], texture127[:-2, 3:])
        assert np.all(out[:2] == 0) and np.all(out[:, -3:] == 0)

    def test_round_trip(self, texture255):
        # bilinear loss is bounded per pixel only for band-limited content
        img = gaussian_filter(texture255, 5.0)
        img = (img - img.min()) / (img.max() - img.min())
        h = build_homography(TransformParams(4.0, -3.0, 1.1, 0.2, 1.03, 0.01, 2e-4, -1e-4))
        back = warp_centered(warp_centered(img, h), np.linalg.inv(h))
        inner = slice(60, 195)
        assert np.abs(back[inner, inner] - img[inner, inner]).max() <= 2 / 255

    def test_composition(self, texture255):
        a = build_homography(TransformParams(2.0, 1.0, 1.05, 0.1))
        b = build_homography(TransformParams(-1.0, 3.0, 0.97, -0.05, 1.02, 0.005, 1e-4, 0.0))
        two = warp_centered(warp_centered(texture255, a), b)
        one = warp_centered(texture255, a @ b)
        inner = slice(60, 195)
        assert np.abs(two[inner, inner] - one[inner, inner]).mean() <= 2 / 255

    def test_singular_rejected(self, texture127):
        with pytest.raises(ValueError):
            warp_homography(texture127, np.diag([1.0, 0.0, 1.0]))

    def test_out_shape_and_crop(self, texture255):
        patch = crop_centered(texture255, 31, center=(10.0, -5.0))
        assert patch.shape == (31, 31)
        assert patch[15, 15] == texture255[127 - 5, 127 + 10]

    def test_move_is_forward(self, texture127):
        moved = move_centered(texture127, translation(4, 0))
        assert np.array_equal(moved[:, 4:], texture127[:, :-4])


class TestRSEW:
    def test_points(self):
        n = 64
        np.testing.assert_allclose(rsew_point(0, 0, n), (1.0, 0.0), atol=1e-15)
        np.testing.assert_allclose(rsew_point(n / 2, 0, n), (n / 4, 0.0), atol=1e-12)
        np.testing.assert_allclose(rsew_point(0, n / 4, n), (-1.0, 0.0), atol=1e-12)

    def test_offset_center(self):
        np.testing.assert_allclose(rsew_point(0, 0, 64, (3.0, 4.0)), (4.0, 4.0))

    def test_grid_layout(self):
        u, v = rsew_grid(64, centered=False)
        np.testing.assert_allclose((u[0, 0], v[0, 0]), (1.0, 0.0))
        uc, vc = rsew_grid(64)
        np.testing.assert_allclose((uc[0, 32], vc[0, 32]), (1.0, 0.0))
        assert uc.shape == (64, 64)

    def test_odd_size_allowed(self):
        assert rsew_grid(255)[0].shape == (255, 255)

    def test_constant_image(self):
        out = rsew_warp(np.full((64, 64), 0.37))
        np.testing.assert_allclose(out, 0.37, atol=1e-14)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            rsew_warp(np.zeros((10, 12)))

    @pytest.mark.parametrize("theta", [0.3, -0.3, 0.6, -0.6])
    def test_rotation_is_row_shift(self, texture255, theta):
        n = 255
        ref = rsew_warp(texture255)
        rot = rsew_warp(move_centered(texture255, build_homography(TransformParams(theta=theta))))
        measured = row_shift(ref, rot, slice(n // 2 + 20, n))
        assert measured == pytest.approx(shift_for_scale_rotation(1.0, theta, n)[1], abs=0.5)
        assert recover_scale_rotation((0.0, measured), n)[1] == pytest.approx(theta, abs=0.02)

    @pytest.mark.parametrize("gamma", [1 / 1.3, 1.3])
    def test_scale_is_column_shift(self, texture255, gamma):
        n = 255
        ref = rsew_warp(texture255)
        scaled = rsew_warp(move_centered(texture255, build_homography(TransformParams(gamma=gamma))))
        measured = col_shift(ref, scaled, 40, slice(n // 2, n - 1))
        assert measured == pytest.approx(shift_for_scale_rotation(gamma, 0.0, n)[0], abs=0.5)
        assert recover_scale_rotation((measured, 0.0), n)[0] == pytest.approx(gamma, rel=0.02)

    @given(st.floats(0.6, 1.6), st.floats(-3.0, 3.0), st.sampled_from([64, 127, 255]))
    def test_recover_inverts_shift(self, gamma, theta, n):
        g, t = recover_scale_rotation(shift_for_scale_rotation(gamma, theta, n), n)
        assert g == pytest.approx(gamma, rel=1e-12)
        assert t == pytest.approx(theta, abs=1e-12)

    def test_wrap_angle(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)

    def test_pad_for_correlation(self):
        w = np.arange(16, dtype=float).reshape(4, 4)
        p = pad_for_correlation(w, horizontal=1)
        assert p.shape == (8, 6)
        assert np.array_equal(p[2:6, 1:5], w)
        assert np.array_equal(p[0:2, 1:5], w[2:4])
        assert np.all(p[:, 0] == 0)

    def test_hamming_window(self):
        w = hamming_window((5, 7))
        assert w.shape == (5, 7)
        assert w[2, 3] == pytest.approx(1.0)
        assert w[0, 0] == pytest.approx(0.08 * 0.08)


class TestPGM:
    def test_bytes_round_trip_exact(self):
        rng = np.random.default_rng(0)
        px = rng.integers(0, 256, size=(13, 17), dtype=np.uint8)
        data = encode_pgm(px)
        back, maxval = decode_pgm(data)
        assert maxval == 255 and np.array_equal(back, px)
        assert encode_pgm(back) == data

    def test_float_round_trip(self, texture127):
        buf = io.BytesIO()
        write_pgm(buf, texture127)
        buf.seek(0)
        back = read_pgm(buf)
        assert np.max(np.abs(back - texture127)) <= 0.5 / 255 + 1e-12

    def test_file_round_trip(self, tmp_path, texture127):
        path = tmp_path / "a.pgm"
        write_pgm(path, texture127)
        assert read_pgm(path).shape == (127, 127)

    def test_header_comment_and_maxval(self):
        img, maxval = decode_pgm(b"P5 # comment\n2 1\n# another\n100\n" + bytes([0, 100]))
        assert maxval == 100 and img.tolist() == [[0, 100]]

    @pytest.mark.parametrize("data", [
        b"P2\n1 1\n255\n0",
        b"P5\n1 1\n65535\n\x00\x00",
        b"P5\n2 2\n255\n\x00",
        b"P5\n2",
        b"P5\n0 1\n255\n",
    ])
    def test_bad_files(self, data):
        with pytest.raises(PGMError):
            decode_pgm(data)

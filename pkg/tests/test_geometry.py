from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from strategies import params_in_range

from hdtrack.geometry import (
    DegenerateHomographyError,
    PointAtInfinityError,
    TransformParams,
    apply_homography,
    box_corners,
    build_homography,
    check_quad,
    compose,
    decompose,
    decompose_params,
    format_homography,
    invert,
    merge_params,
    normalize,
    parse_homography,
    read_homographies,
    to_homogeneous,
    transport_corners,
    write_homographies,
)


def _oracle_matrix(x: TransformParams) -> np.ndarray:
    """Entry-by-entry product of the two factors, written out by hand."""
    c, s = math.cos(x.theta), math.sin(x.theta)
    g = x.gamma
    a = [[g * c, -g * s, x.t1], [g * s, g * c, x.t2], [0.0, 0.0, 1.0]]
    b = [[x.k1, x.k2, 0.0], [0.0, 1.0 / x.k1, 0.0], [x.nu1, x.nu2, 1.0]]
    return np.array([[sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3)] for i in range(3)])


class TestBuild:
    def test_identity(self):
        assert np.array_equal(build_homography(TransformParams()), np.eye(3))

    def test_pure_translation(self):
        h = build_homography(TransformParams(t1=5, t2=-3))
        expected = np.eye(3)
        expected[:2, 2] = (5, -3)
        assert np.array_equal(h, expected)

    def test_matches_hand_product(self):
        x = TransformParams(10, 4, 1.2, 0.3, 1.05, 0.01, 0.001, -0.0005)
        np.testing.assert_allclose(build_homography(x), _oracle_matrix(x), rtol=0, atol=1e-14)

    @pytest.mark.parametrize("bad", [
        dict(gamma=0.0), dict(gamma=-1.0), dict(k1=0.0), dict(t1=math.nan), dict(nu2=math.inf),
    ])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            build_homography(TransformParams(**bad))

    @given(params_in_range)
    def test_factor_structure(self, x):
        sim = build_homography(x.similarity())
        res = build_homography(x.residual())
        assert np.array_equal(sim @ res, build_homography(x))


class TestDecompose:
    def test_identity(self):
        sim, res = decompose(np.eye(3))
        assert sim == TransformParams()
        assert res == TransformParams()

    def test_pure_perspective(self):
        h = np.eye(3)
        h[2, 0] = 0.001
        sim, res = decompose(h)
        assert sim == TransformParams()
        assert res == TransformParams(nu1=0.001)

    def test_round_trip_1000(self):
        rng = np.random.default_rng(0)
        lo = np.array([-32, -32, 1 / 1.38, -0.7, 0.9, -0.015, -0.0015, -0.0015])
        hi = -lo
        hi[2], hi[4] = 1.38, 1.1
        for x in rng.uniform(lo, hi, size=(1000, 8)):
            h = build_homography(TransformParams.from_array(x))
            got = decompose_params(h).as_array()
            np.testing.assert_allclose(got, x, rtol=0, atol=1e-9)
            back = build_homography(TransformParams.from_array(got))
            assert np.linalg.norm(back - h) / np.linalg.norm(h) <= 1e-10

    @given(params_in_range)
    def test_round_trip_property(self, x):
        got = decompose_params(build_homography(x))
        np.testing.assert_allclose(got.as_array(), x.as_array(), rtol=0, atol=1e-9)

    def test_scale_invariance_of_input(self):
        x = TransformParams(3, -2, 1.1, 0.2, 1.02, 0.004, 1e-4, 2e-4)
        h = build_homography(x)
        np.testing.assert_allclose(decompose_params(-7.5 * h).as_array(), x.as_array(), atol=1e-12)

    def test_mirror_rejected(self):
        with pytest.raises(DegenerateHomographyError):
            decompose(np.diag([-1.0, 1.0, 1.0]))

    def test_zero_corner_entry_rejected(self):
        h = np.eye(3)
        h[2, 2] = 0.0
        h[2, 0] = 1.0
        with pytest.raises(DegenerateHomographyError):
            decompose(h)

    def test_theta_at_pi_maps_to_plus_pi(self):
        sim, _ = decompose(np.diag([-1.0, -1.0, 1.0]))
        assert sim.theta == math.pi

    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            decompose(np.eye(2))

    def test_merge(self):
        a = TransformParams(1, 2, 1.1, 0.1, 1.05, 0.01, 1e-4, 2e-4)
        assert merge_params(a.similarity(), a.residual()) == a


def _random_h(rng) -> np.ndarray:
    x = TransformParams(*rng.uniform(-20, 20, 2), rng.uniform(0.8, 1.2), rng.uniform(-0.5, 0.5),
                        rng.uniform(0.9, 1.1), *rng.uniform(-0.01, 0.01, 1), *rng.uniform(-1e-3, 1e-3, 2))
    return build_homography(x)


class TestComposeInvert:
    def test_inverse(self):
        h = _random_h(np.random.default_rng(1))
        np.testing.assert_allclose(compose(h, invert(h)), np.eye(3), atol=1e-10)

    def test_left_identity(self):
        h = _random_h(np.random.default_rng(2))
        np.testing.assert_allclose(compose(np.eye(3), h), h, atol=1e-15)

    def test_elementwise_product_oracle(self):
        rng = np.random.default_rng(3)
        a, b = _random_h(rng), _random_h(rng)
        oracle = np.array([[sum(a[i, k] * b[k, j] for k in range(3)) for j in range(3)] for i in range(3)])
        np.testing.assert_allclose(compose(a, b), oracle / oracle[2, 2], rtol=1e-13)

    @given(st.integers(0, 10_000))
    def test_associative(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (_random_h(rng) for _ in range(3))
        np.testing.assert_allclose(compose(compose(a, b), c), compose(a, compose(b, c)), atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_double_inverse(self, seed):
        h = _random_h(np.random.default_rng(seed))
        np.testing.assert_allclose(invert(invert(h)), h, atol=1e-12)

    def test_singular(self):
        with pytest.raises(DegenerateHomographyError):
            invert(np.diag([1.0, 0.0, 1.0]))

    def test_normalize_checks(self):
        with pytest.raises(ValueError):
            normalize(np.eye(4))
        with pytest.raises(DegenerateHomographyError):
            normalize(np.full((3, 3), np.nan))
        np.testing.assert_allclose(normalize(2 * np.eye(3)), np.eye(3))


class TestCorners:
    def test_identity(self):
        q = box_corners(126)
        assert np.array_equal(transport_corners(np.eye(3), q), q)

    def test_translation(self):
        q = box_corners(10, 6)
        h = build_homography(TransformParams(t1=5, t2=-3))
        np.testing.assert_allclose(transport_corners(h, q), q + [5, -3])

    def test_manual_projective_division(self):
        h = _random_h(np.random.default_rng(4))
        unit = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        got = transport_corners(h, unit)
        for (u, v), (gu, gv) in zip(unit, got):
            w = h[2, 0] * u + h[2, 1] * v + h[2, 2]
            assert gu == pytest.approx((h[0, 0] * u + h[0, 1] * v + h[0, 2]) / w, rel=1e-14)
            assert gv == pytest.approx((h[1, 0] * u + h[1, 1] * v + h[1, 2]) / w, rel=1e-14)

    @given(st.integers(0, 10_000))
    def test_composition_transports(self, seed):
        rng = np.random.default_rng(seed)
        a, b = _random_h(rng), _random_h(rng)
        q = box_corners(126)
        np.testing.assert_allclose(
            transport_corners(compose(a, b), q), transport_corners(a, transport_corners(b, q)), atol=1e-9
        )

    def test_point_at_infinity(self):
        h = np.eye(3)
        h[2, 0] = -1.0
        with pytest.raises(PointAtInfinityError):
            apply_homography(h, np.array([1.0, 0.0]))

    def test_box_order(self):
        q = box_corners(126)
        assert q.tolist() == [[-63, -63], [63, -63], [63, 63], [-63, 63]]
        assert to_homogeneous(q).shape == (3, 4)
        assert np.all(to_homogeneous(q)[2] == 1)

    def test_collinear_quad(self):
        with pytest.raises(DegenerateHomographyError):
            check_quad([[0, 0], [1, 1], [2, 2], [0, 5]])


class TestSerialization:
    def test_round_trip_exact(self):
        hs = [_random_h(np.random.default_rng(s)) for s in range(5)]
        buf = io.StringIO()
        write_homographies(buf, hs)
        buf.seek(0)
        back = read_homographies(buf)
        assert all(np.array_equal(a, b) for a, b in zip(hs, back))

    def test_line_format(self):
        assert format_homography(np.eye(3)) == "1.0 0.0 0.0 0.0 1.0 0.0 0.0 0.0 1.0"

    def test_bad_line(self):
        with pytest.raises(ValueError):
            parse_homography("1 2 3")

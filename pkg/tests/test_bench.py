from __future__ import annotations

import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon

from hdtrack.bench import (
    ALIGNMENT_THRESHOLDS,
    Challenges,
    MotionScript,
    alignment_error,
    avg_precision,
    centroid_precision,
    convex_hull,
    evaluate,
    homography_discrepancy,
    hsr,
    iou,
    is_convex,
    list_frames,
    load_frames,
    polygon_area,
    polygon_centroid,
    precision_curve,
    random_script,
    read_ground_truth,
    robustness_histogram,
    save_sequence,
    success_rate,
    synthesize,
    textured_image,
    write_ground_truth,
)
from hdtrack.geometry import (
    TransformParams,
    box_corners,
    build_homography,
    read_homographies,
    translation,
    transport_corners,
)

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _rle(ious, t=0.2):
    return [len(list(g)) for ok, g in itertools.groupby(np.asarray(ious) > t) if ok]


class TestTexture:
    def test_range_and_determinism(self):
        a = textured_image(64, seed=1)
        assert a.min() == 0.0 and a.max() == 1.0
        assert np.array_equal(a, textured_image(64, seed=1))
        assert textured_image((10, 20)).shape == (10, 20)


class TestScripts:
    def test_cosine_ease(self):
        x1 = TransformParams(t1=10.0)
        s = MotionScript(11, ((0, TransformParams()), (10, x1)))
        assert s.params(0) == TransformParams()
        assert s.params(10) == x1
        assert s.params(5).t1 == pytest.approx(5.0)
        assert s.params(20) == x1

    def test_keyframes_validated(self):
        with pytest.raises(ValueError):
            MotionScript(5, ((1, TransformParams()),))
        with pytest.raises(ValueError):
            MotionScript(0)

    def test_random_script_deltas_in_range(self):
        s = random_script(100, seed=3)
        s.check_deltas()
        assert s.params(0) == TransformParams()

    def test_check_deltas_rejects_jumps(self):
        s = MotionScript(2, ((0, TransformParams()), (1, TransformParams(t1=50.0))))
        with pytest.raises(ValueError):
            s.check_deltas()

    def test_challenges_validated(self):
        with pytest.raises(ValueError):
            Challenges(gain=0.0)


class TestSynthesize:
    def test_identity_script_equals_base(self):
        base = textured_image(255, seed=2)
        seq = synthesize(base, MotionScript(3))
        assert all(np.array_equal(f, base) for f in seq.frames)

    def test_translation_script_shifts(self):
        base = textured_image(300, seed=2)
        s = MotionScript(2, ((0, TransformParams()), (1, TransformParams(t1=5.0, t2=-3.0))))
        seq = synthesize(base, s, frame_shape=(255, 255), object_size=101)
        a, b = seq.frames
        assert np.array_equal(b[10:-10, 10:-10], a[13:-7, 5:-15])
        np.testing.assert_allclose(seq.corners[1] - seq.corners[0], np.tile([5.0, -3.0], (4, 1)))

    def test_ground_truth_consistent(self):
        seq = synthesize(textured_image(640, 1), random_script(10, 1), object_size=101)
        for h, quad in zip(seq.homographies, seq.corners):
            np.testing.assert_allclose(transport_corners(h, box_corners(126)), quad, atol=1e-9)
        np.testing.assert_allclose(seq.corners[0], box_corners(100) + 127)

    def test_deterministic_noise(self):
        script = random_script(5, 0, challenges=Challenges(noise_sigma=0.05, blur_sigma=1.0))
        base = textured_image(640, 1)
        a = synthesize(base, script, seed=4, object_size=101)
        b = synthesize(base, script, seed=4, object_size=101)
        assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))

    def test_occlusion(self):
        ch = Challenges(occlusion_frames=(1, 2))
        seq = synthesize(textured_image(255, 3), MotionScript(3, challenges=ch), object_size=101)
        assert seq.occluded == [False, True, False]
        assert np.all(seq.frames[1][127, 77:178] == 0.5)

    def test_object_leaving_frame(self):
        s = MotionScript(2, ((0, TransformParams()), (1, TransformParams(t1=120.0))))
        with pytest.raises(ValueError):
            synthesize(textured_image(640, 0), s, object_size=101)

    def test_view_leaving_base(self):
        with pytest.raises(ValueError):
            synthesize(textured_image(200, 0), MotionScript(1), object_size=101)


class TestErrors:
    def test_alignment(self):
        assert alignment_error(UNIT, UNIT) == 0
        moved = UNIT.copy()
        moved[2] += (3, 4)
        assert alignment_error(moved, UNIT) == 1.25

    def test_alignment_shape(self):
        with pytest.raises(ValueError):
            alignment_error(UNIT[:3], UNIT[:3])

    def test_precision_examples(self):
        assert np.all(precision_curve([0, 0, 0]) == 1) and avg_precision(precision_curve([0.0])) == 1
        assert np.all(precision_curve([np.inf, np.nan]) == 0)

    @given(st.lists(st.floats(0, 80), min_size=1, max_size=50))
    def test_precision_monotone_and_oracle(self, errs):
        curve = precision_curve(errs)
        assert np.all(np.diff(curve) >= 0)
        t = 17.0
        assert curve[int(t) - 1] == sum(e <= t for e in errs) / len(errs)

    def test_hsr_examples(self):
        box = box_corners(126)
        h = build_homography(TransformParams(3, 4, 1.1, 0.2, 1.02, 0.01, 1e-4, 0))
        assert homography_discrepancy(h, h, box) == pytest.approx(0.0, abs=1e-9)
        assert homography_discrepancy(h @ translation(2.5, 0), h, box) == pytest.approx(2.5, abs=1e-9)
        assert np.all(np.diff(hsr(np.random.default_rng(0).exponential(10, 100))) >= 0)

    def test_thresholds(self):
        assert ALIGNMENT_THRESHOLDS[0] == 1 and ALIGNMENT_THRESHOLDS[-1] == 50


def _random_convex(rng):
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, size=4))
        quad = rng.uniform(-3, 3, 2) + rng.uniform(1, 4, (4, 1)) * np.stack([np.cos(ang), np.sin(ang)], 1)
        p = Polygon(quad)
        if p.is_valid and p.convex_hull.area - p.area < 1e-9 and p.area > 1e-3:
            return quad


class TestPolygons:
    def test_iou_examples(self):
        assert iou(UNIT, UNIT) == (1.0, False)
        assert iou(UNIT, UNIT + 3)[0] == 0.0
        assert iou(UNIT, UNIT + (0.5, 0.0))[0] == pytest.approx(1 / 3, abs=1e-15)

    @given(st.integers(0, 100_000))
    @settings(max_examples=100)
    def test_iou_matches_shapely(self, seed):
        rng = np.random.default_rng(seed)
        a, b = _random_convex(rng), _random_convex(rng)
        pa, pb = Polygon(a), Polygon(b)
        want = pa.intersection(pb).area / pa.union(pb).area
        got, flagged = iou(a, b)
        assert got == pytest.approx(want, abs=1e-9) and not flagged

    def test_bowtie_flagged(self):
        bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        value, flagged = iou(bowtie, UNIT)
        assert flagged and value == pytest.approx(1.0)

    def test_orientation_independent(self):
        assert iou(UNIT[::-1], UNIT + (0.5, 0.5))[0] == pytest.approx(1 / 7)

    def test_area_centroid_hull(self):
        assert polygon_area(UNIT) == 1.0
        np.testing.assert_allclose(polygon_centroid(UNIT * 2 + 1), (2, 2))
        assert is_convex(UNIT) and not is_convex(UNIT[[0, 2, 1, 3]])
        hull = convex_hull(np.vstack([UNIT, [[0.5, 0.5]]]))
        assert len(hull) == 4 and polygon_area(hull) == 1.0

    def test_centroid_precision(self):
        curve = centroid_precision([UNIT, UNIT + (3, 4)], [UNIT, UNIT])
        assert curve[0] == 0.5 and curve[4] == 1.0

    def test_success_rate(self):
        sr = success_rate([1.0, 0.5, 0.0])
        assert sr[0] == pytest.approx(2 / 3) and sr[-1] == pytest.approx(1 / 3)
        assert np.all(np.diff(success_rate(np.random.default_rng(1).random(50))) <= 0)


class TestRobustness:
    def test_examples(self):
        assert robustness_histogram(np.ones(501)).runs == [501]
        r = robustness_histogram(np.tile([1.0, 0.0], 20))
        assert set(r.runs) == {1} and r.short_ratio == 1.0
        assert robustness_histogram(np.zeros(5)).runs == []

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=100))
    def test_run_length_oracle(self, ious):
        r = robustness_histogram(ious)
        assert r.runs == _rle(ious)
        assert sum(k * v for k, v in r.histogram.items()) == sum(r.runs)


class TestEvaluate:
    def test_perfect(self):
        quads = [UNIT * 50 + i for i in range(5)]
        hs = [np.eye(3)] * 5
        rep = evaluate(quads, quads, hs, hs)
        assert rep.avg_precision == 1 and rep.avg_hsr == 1 and rep.avg_centroid == 1
        assert rep.robustness.runs == [5]
        assert "mean error (px)   0.000" in rep.summary()
        lines = rep.curves_csv().splitlines()
        assert lines[0] == "threshold,precision,hsr,centroid_precision" and len(lines) == 1 + 50 + 2 + 19

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([UNIT], [])


class TestFiles:
    def test_ground_truth_round_trip(self):
        quads = [np.random.default_rng(i).normal(size=(4, 2)) * 100 for i in range(4)]
        buf = io.StringIO()
        write_ground_truth(buf, quads)
        buf.seek(0)
        back = read_ground_truth(buf)
        assert all(np.array_equal(a, b) for a, b in zip(quads, back))

    @pytest.mark.parametrize("text", ["1 2 3\n", "1 2 3 4 5 6 7 x\n", "1 2 3 4 5 6 7 nan\n"])
    def test_bad_ground_truth(self, text):
        with pytest.raises(ValueError):
            read_ground_truth(io.StringIO(text))

    def test_commas_and_blank_lines(self):
        q = read_ground_truth(io.StringIO("\n1,2,3,4,5,6,7,8\n"))
        assert q[0].tolist() == [[1, 2], [3, 4], [5, 6], [7, 8]]

    def test_save_sequence(self, tmp_path):
        seq = synthesize(textured_image(640, 1), random_script(3, 1), object_size=101)
        save_sequence(seq, tmp_path)
        assert [p.name for p in list_frames(tmp_path)] == ["00000.pgm", "00001.pgm", "00002.pgm"]
        frames = load_frames(tmp_path)
        assert np.max(np.abs(frames[1] - seq.frames[1])) <= 0.5 / 255 + 1e-12
        with open(tmp_path / "homographies.txt") as f:
            assert all(np.array_equal(a, b) for a, b in zip(read_homographies(f), seq.homographies))

    def test_no_frames(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_frames(tmp_path)

import numpy as np
import pytest

from qrsl.framelab.detect import DecodeFailure, Detection
from qrsl.framelab.degrade import DegradationSpec
from qrsl.framelab.raster import BBox
from qrsl.framelab.scene import Camera, SceneObject, SceneSpec, object_texture, synth_scene
from qrsl.labeling import (DegenerateBBox, DictionaryEntry, NoPositives, ObjectDictionary, Source,
                           build_dictionary, extract_feature, label_video, link, read_tags,
                           sampled_frames)
from qrsl.synthetic import dictionary_fixture

BOX = BBox(0, 0, 4, 4)


def pos(name, frame=0):
    return Detection(frame, BOX, name)


def neg(frame=0):
    return Detection(frame, BOX, None, DecodeFailure.Unreadable)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_feature_shape_norm_determinism():
    img = object_texture(3, 60, 80).astype(np.uint8)
    b = BBox(5, 7, 40, 30)
    f = extract_feature(img, b)
    assert f.shape == (80,)
    assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(f, extract_feature(img, b))


def test_constant_patch():
    f = extract_feature(np.full((20, 20), 120, np.uint8), BBox(2, 2, 10, 10))
    assert np.isfinite(f).all()
    assert np.allclose(f[64:], 0.0)
    assert np.allclose(f[:64], 1 / 8)
    assert np.linalg.norm(f) == pytest.approx(1.0)


def test_degenerate_and_outside():
    img = np.zeros((10, 10), np.uint8)
    with pytest.raises(DegenerateBBox):
        extract_feature(img, BBox(0, 0, 1, 5))
    with pytest.raises(ValueError):
        extract_feature(img, BBox(5, 5, 8, 8))


def test_translated_copies_beat_noise():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        tex = object_texture(seed, 90, 90)
        dx, dy = rng.integers(1, 3, size=2)
        a = extract_feature(tex, BBox(20, 20, 40, 40))
        b = extract_feature(tex, BBox(20 + int(dx), 20 + int(dy), 40, 40))
        noise = extract_feature(rng.integers(0, 256, (40, 40)).astype(float), BBox(0, 0, 40, 40))
        assert a @ b > a @ noise
        assert b @ a > b @ noise


def test_dictionary_single_and_repeated():
    v = unit([1, 2, 3])
    d = build_dictionary([(pos("A"), v)])
    assert d["A"].count == 1 and np.allclose(d["A"].mean, v)
    d = build_dictionary([(pos("A"), v), (pos("A"), v), (neg(), unit([9, 0, 0]))])
    assert d["A"].count == 2 and np.allclose(d["A"].mean, v)
    assert len(d) == 1


def test_dictionary_mean_matches_direct_recomputation():
    rng = np.random.default_rng(0)
    vs = [unit(rng.standard_normal(16)) for _ in range(3)]
    d = build_dictionary([(pos("A"), v) for v in vs])
    s = vs[0] + vs[1] + vs[2]
    assert np.abs(d["A"].mean - s / np.linalg.norm(s)).max() < 1e-12


def test_dictionary_order_independent():
    fx = dictionary_fixture(seed=3)
    pairs = list(zip(fx.detections, fx.features))
    ref = build_dictionary(pairs)
    rng = np.random.default_rng(1)
    for _ in range(5):
        perm = rng.permutation(len(pairs))
        d = build_dictionary([pairs[i] for i in perm])
        for n in ref.names:
            assert np.abs(d[n].mean - ref[n].mean).max() < 1e-9
            assert d[n].count == ref[n].count


def test_no_positives():
    with pytest.raises(NoPositives):
        build_dictionary([(neg(), unit([1, 0]))])
    with pytest.raises(NoPositives):
        ObjectDictionary({})


def test_link_basics():
    e1, e2 = np.eye(2)
    d = ObjectDictionary({"A": DictionaryEntry(e1, 1), "B": DictionaryEntry(e2, 1)})
    assert link(e2, d) == ("B", 1.0)
    assert link(e1, d) == ("A", 1.0)
    assert link(unit([1, 1]), d)[0] == "A"  # tie goes to the smaller name
    assert link(3.7 * e2, d)[0] == "B"
    assert link(unit([1, 1]), d, min_similarity=0.9)[0] is None


def test_link_matches_brute_force():
    rng = np.random.default_rng(5)
    means = {f"n{i}": DictionaryEntry(unit(rng.standard_normal(12)), 1) for i in range(5)}
    d = ObjectDictionary(means)
    for _ in range(200):
        q = rng.standard_normal(12)
        best = max(means, key=lambda n: (float(means[n].mean @ unit(q)), -int(n[1:])))
        assert link(q, d)[0] == best


def test_dictionary_fixture_accuracy():
    for seed in range(5):
        fx = dictionary_fixture(seed=seed)
        assert fx.margin >= 0.2
        d = build_dictionary(zip(fx.detections, fx.features))
        for det, f, truth in zip(fx.detections, fx.features, fx.truth):
            if det.name is None:
                assert link(f, d)[0] == truth


def test_sampled_frames():
    assert sampled_frames(5, 10) == [0, 1, 2, 3, 4]
    assert sampled_frames(10, 30) == [0, 3, 6, 9]
    assert sampled_frames(7, 25) == [0, 2, 5]
    assert sampled_frames(0, 30) == []


def test_label_video_pass_through_and_linking():
    a, b = unit([1, 0, 0]), unit([0, 1, 0])
    dets = [pos("A", 0), pos("B", 0), pos("A", 1), neg(2), neg(2)]
    feats = [a, b, a, unit([0.9, 0.1, 0]), unit([0.2, 1, 0])]
    d = build_dictionary(zip(dets, feats))
    out = label_video(dets, feats, d, n_frames=4)
    assert out.names == [("A", "B"), ("A",), ("A", "B"), ()]
    srcs = [lab.source for lab in out.labeled]
    assert srcs == [Source.QrDecoded] * 3 + [Source.DictionaryLinked] * 2
    assert all(lab.similarity == 1.0 for lab in out.labeled[:3])
    # positives keep their decoded names even if they look like something else
    out = label_video([pos("B", 0)], [a], d, n_frames=1)
    assert out.names == [("B",)]
    with pytest.raises(ValueError):
        label_video([pos("A", 5)], [a], d, n_frames=3)


def test_label_video_subsamples():
    a = unit([1, 0])
    dets = [pos("A", i) for i in range(9)]
    d = build_dictionary(zip(dets, [a] * 9))
    out = label_video(dets, [a] * 9, d, n_frames=9, fps=30, sample_fps=10)
    assert out.frames == [0, 3, 6]
    assert len(out.labeled) == 3


def test_scene_blurred_frames_relabelled():
    objs = [SceneObject("GP1", 3, 1), SceneObject("tube", 3, 2), SceneObject("rack", 3, 3)]
    script = ["GP1"] * 6 + ["tube"] * 6 + ["rack"] * 6
    blur = DegradationSpec(gaussian_sigma=2.5)
    late = {i: blur for i in (3, 4, 5, 9, 10, 11, 15, 16, 17)}
    spec = SceneSpec(objs, 18, 10.0, Camera((220, 160)), script, frame_degradations=late)
    scene = synth_scene(spec, seed=2)
    dets, feats = [], []
    for box in scene.object_boxes:
        img = scene.frames[box.frame_idx]
        dets += read_tags(img, [box.bbox], box.frame_idx)
        feats.append(extract_feature(img, box.bbox))
    named = [d.frame_idx for d in dets if d.name]
    assert set(named) == {0, 1, 2, 6, 7, 8, 12, 13, 14}
    d = build_dictionary(zip(dets, feats))
    out = label_video(dets, feats, d, 18)
    assert [n[0] for n in out.names] == script


def test_read_tags_name_map():
    objs = [SceneObject("incubator", 3, 1, payload="7")]
    spec = SceneSpec(objs, 1, 10.0, Camera((160, 120)), ["incubator"])
    scene = synth_scene(spec)
    box = scene.object_boxes[0]
    got = read_tags(scene.frames[0], [box.bbox], 0, name_map={"7": "incubator"})
    assert got[0].name == "incubator"
    empty = read_tags(np.full((120, 160), 200, np.uint8), [BBox(0, 0, 50, 50)], 0)
    assert empty[0].name is None and empty[0].detail == "NoCandidate"

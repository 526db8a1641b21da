import hashlib
import json
import os

import pytest

from qrsl import io as qio
from qrsl.cli import main
from qrsl.localization import SegmentList

SMALL = {
    "frames": 20, "fps": 10, "camera": {"resolution": [200, 160], "px_per_cm": 12},
    "objects": [{"name": "incubator", "payload": "7", "qr_size_cm": 3},
                {"name": "tube", "payload": "5", "qr_size_cm": 3}],
    "steps": [{"text": "Open the incubator", "object": "incubator", "start": 1, "end": 8},
              {"text": "Close the tube", "object": "tube", "start": 11, "end": 18}],
}


def err_json(capsys):
    lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith("{")]
    return json.loads(lines[-1])


def digests(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


@pytest.fixture
def scene_dir(tmp_path, cfg_path):
    out = tmp_path / "scene"
    assert main(["gen", cfg_path, str(out), "--seed", "4"]) == 0
    return out


def test_gen_layout_and_determinism(tmp_path, cfg_path, scene_dir):
    assert len(list((scene_dir / "frames").glob("*.pgm"))) == 20
    man = json.loads((scene_dir / "manifest.json").read_text())
    assert man["n_frames"] == 20 and man["seed"] == 4 and man["resolution"] == [200, 160]
    for f in man["files"]:
        assert (scene_dir / f).exists()
    again = tmp_path / "again"
    assert main(["gen", cfg_path, str(again), "--seed", "4"]) == 0
    assert digests(scene_dir) == digests(again)
    other = tmp_path / "other"
    main(["gen", cfg_path, str(other), "--seed", "5"])
    assert digests(other) != digests(scene_dir)


def test_gen_bad_configs(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**SMALL, "frames": 0, "steps": None}))
    assert main(["gen", str(p), str(tmp_path / "o")]) == 2
    assert err_json(capsys)["exit_code"] == 2
    p.write_text("{not json")
    assert main(["gen", str(p), str(tmp_path / "o")]) == 2
    assert main(["gen", str(tmp_path / "missing.json"), str(tmp_path / "o")]) == 3
    assert main(["gen", str(p), str(tmp_path / "o"), "--seed", "-1"]) == 2
    assert main(["nonsense"]) == 2
    e = err_json(capsys)
    assert set(e) == {"error", "message", "exit_code"}


def test_decode_with_name_map(tmp_path, scene_dir, capsys):
    out = tmp_path / "dets.jsonl"
    rc = main(["decode", str(scene_dir / "frames"), "-o", str(out),
               "--detections", str(scene_dir / "objects.jsonl"), "--names", str(scene_dir / "names.json")])
    assert rc == 0
    dets = qio.read_detections(out)
    truth = {d.frame_idx: d.name for d in qio.read_detections(scene_dir / "truth.jsonl")}
    named = [d for d in dets if d.name]
    assert named and all(truth[d.frame_idx] == d.name for d in named)
    assert "incubator" in {d.name for d in named}
    assert "decode:" in capsys.readouterr().err

    # without a map the raw payload comes through, with a warning
    raw = tmp_path / "raw.jsonl"
    main(["decode", str(scene_dir / "frames"), "-o", str(raw), "--detections", str(scene_dir / "objects.jsonl")])
    assert {"5", "7"} <= {d.name for d in qio.read_detections(raw) if d.name}
    assert "not in name map" in capsys.readouterr().err


def test_decode_reports_failures(tmp_path, capsys):
    cfg = {**SMALL, "degradation": {"gaussian_sigma": 3.0}}
    p = tmp_path / "blur.json"
    p.write_text(json.dumps(cfg))
    scene = tmp_path / "blur"
    assert main(["gen", str(p), str(scene)]) == 0
    out = tmp_path / "d.jsonl"
    assert main(["decode", str(scene / "frames"), "-o", str(out),
                 "--detections", str(scene / "objects.jsonl")]) == 0
    err = capsys.readouterr().err
    assert "Unreadable" in err
    dets = qio.read_detections(out)
    assert dets and all(d.name is None for d in dets)


def test_decode_errors(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["decode", str(tmp_path / "empty"), "-o", str(tmp_path / "x")]) == 3
    frames = tmp_path / "bad"
    frames.mkdir()
    (frames / "f.pgm").write_bytes(b"garbage")
    assert main(["decode", str(frames), "-o", str(tmp_path / "x")]) == 3
    assert err_json(capsys)["exit_code"] == 3


def test_stage_chain(tmp_path, scene_dir, capsys):
    s = lambda f: str(scene_dir / f)
    t = lambda f: str(tmp_path / f)
    assert main(["decode", s("frames"), "-o", t("d.jsonl"), "--detections", s("objects.jsonl"),
                 "--names", s("names.json")]) == 0
    assert main(["features", s("frames"), t("d.jsonl"), "-o", t("f.txt")]) == 0
    assert main(["dict", t("d.jsonl"), t("f.txt"), "-o", t("dict.json")]) == 0
    assert set(qio.read_dictionary(t("dict.json")).names) == {"incubator", "tube"}
    assert main(["link", t("d.jsonl"), t("f.txt"), t("dict.json"), "-o", t("n.jsonl"), "--n-frames", "20"]) == 0
    names = qio.parse_names(qio.read_text(t("n.jsonl")), 20)
    script = [None, *["incubator"] * 8, None, None, *["tube"] * 8, None]
    assert [n[0] if n else None for n in names] == script
    assert main(["localize", s("protocol.csv"), s("embeddings.txt"), "-o", t("seg.csv"),
                 "--names", t("n.jsonl"), "--labels-out", t("lab.csv")]) == 0
    texts, segs = qio.read_segments(t("seg.csv"))
    assert texts == [st["text"] for st in SMALL["steps"]]
    SegmentList(segs.segments).check()
    capsys.readouterr()
    assert main(["eval", t("lab.csv"), s("protocol.csv"), "-o", t("m.json")]) == 0
    assert "MoF" in capsys.readouterr().out
    m = qio.load_json(t("m.json"))["aggregate"]
    assert all(0 <= v <= 100 for v in m.values())


def test_eval_and_agreement_identity(tmp_path, scene_dir, capsys):
    proto = str(scene_dir / "protocol.csv")
    assert main(["eval", proto, proto, "-o", str(tmp_path / "m.json")]) == 0
    agg = qio.load_json(tmp_path / "m.json")["aggregate"]
    assert agg == {"mof": 100.0, "precision": 100.0, "recall": 100.0, "tiou": 100.0}
    capsys.readouterr()
    assert main(["agreement", proto, proto]) == 0
    assert capsys.readouterr().out.strip() == "100.0"


def test_agreement_partial_overlap(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    qio.write_protocol(a, qio.Protocol(["x"], [(0.0, 2.0)]))
    qio.write_protocol(b, qio.Protocol(["x"], [(1.0, 3.0)]))
    assert main(["agreement", str(a), str(b)]) == 0
    assert capsys.readouterr().out.strip() == "33.3"
    qio.write_protocol(b, qio.Protocol(["x"]))
    assert main(["agreement", str(a), str(b)]) == 3


def test_localize_infeasible(tmp_path, capsys):
    p = tmp_path / "p.csv"
    qio.write_protocol(p, qio.Protocol(["a", "b", "c"]))
    e = tmp_path / "e.txt"
    e.write_text("2 3\n1 0 0\n0 1 0\n")
    assert main(["localize", str(p), str(e), "-o", str(tmp_path / "s.csv")]) == 4
    e = err_json(capsys)
    assert e["error"] == "Infeasible" and e["exit_code"] == 4 and e["message"]
    assert not (tmp_path / "s.csv").exists()


def test_localize_bad_flags(tmp_path):
    p = tmp_path / "p.csv"
    qio.write_protocol(p, qio.Protocol(["a"]))
    e = tmp_path / "e.txt"
    e.write_text("2 2\n1 0\n0 1\n")
    o = str(tmp_path / "s.csv")
    assert main(["localize", str(p), str(e), "-o", o, "--lambda", "-1"]) == 2
    assert main(["localize", str(p), str(e), "-o", o, "--fps", "0"]) == 2
    assert main(["localize", str(p), str(e), "-o", o, "--embedder", "table"]) == 2
    e.write_text("2 2\n1 0\n")
    assert main(["localize", str(p), str(e), "-o", o]) == 3


def test_adapt(tmp_path):
    src = tmp_path / "raw.csv"
    src.write_text("Order,Description,Begin,Finish\n1,Open,0,1.5\n2,Spin,5,6\n")
    mp = tmp_path / "map.json"
    mp.write_text(json.dumps({"step_index": "Order", "step_text": "Description",
                              "gt_start_sec": "Begin", "gt_end_sec": "Finish"}))
    out = tmp_path / "p.csv"
    assert main(["adapt", str(src), str(mp), "-o", str(out)]) == 0
    pr = qio.read_protocol(out)
    assert pr.steps == ["Open", "Spin"] and pr.gt == [(0.0, 1.5), (5.0, 6.0)]
    mp.write_text("[1, 2]")
    assert main(["adapt", str(src), str(mp), "-o", str(out)]) == 2


@pytest.mark.slow
def test_run_fusion_not_worse_than_visual_only(tmp_path, capsys):
    assert main(["run", str(tmp_path / "a"), "--lambda", "0"]) == 0
    assert main(["run", str(tmp_path / "b"), "--lambda", "0.5"]) == 0
    base = qio.load_json(tmp_path / "a" / "metrics.json")["aggregate"]["mof"]
    fused = qio.load_json(tmp_path / "b" / "metrics.json")["aggregate"]["mof"]
    assert fused >= base


@pytest.mark.slow
def test_run_thread_count_does_not_change_outputs(tmp_path, monkeypatch):
    monkeypatch.setenv("QRSL_THREADS", "1")
    assert main(["run", str(tmp_path / "one"), "--seed", "3"]) == 0
    monkeypatch.setenv("QRSL_THREADS", "8")
    assert main(["run", str(tmp_path / "eight"), "--seed", "3"]) == 0
    assert digests(tmp_path / "one") == digests(tmp_path / "eight")


def test_bad_thread_env(tmp_path, monkeypatch, cfg_path):
    monkeypatch.setenv("QRSL_THREADS", "zero")
    assert main(["gen", cfg_path, str(tmp_path / "o")]) == 2

"""End-to-end flow over files: generate, read tags, label, localize, score."""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import io as qio
from .evaluation import FrameLabeling, compute_metrics, segments_to_frame_labels
from .framelab.detect import DecodeFailure, Detection, detect_and_decode
from .framelab.raster import read_pgm
from .framelab.scene import SceneSpec, render_frame, scene_from_dict, symbols_for
from .labeling import build_dictionary, extract_feature, label_video, read_tags
from .localization import FusionConfig, ToyHashEmbedder, localize
from .synthetic import frame_embeddings


class ConfigError(ValueError):
    pass


def thread_count(default=4):
    raw = os.environ.get("QRSL_THREADS")
    if raw is None or raw == "":
        return max(1, min(default, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"QRSL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("QRSL_THREADS must be >= 1")
    return n


def pmap(fn, items, threads=None):
    """Ordered parallel map."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def bundled_config():
    text = resources.files("qrsl").joinpath("data/fixture_scene.json").read_text(encoding="utf-8")
    return json.loads(text)


# --- configuration ---------------------------------------------------------------

@dataclass
class RunSpec:
    scene: SceneSpec
    steps: list | None  # [{"text", "object", "start", "end"}] with frame spans
    dim: int = 80
    noise: float = 0.4


def parse_config(cfg):
    """Validate a scene config dict; optional "steps" drive the hand script
    and the synthetic frame embeddings."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg = dict(cfg)
    steps = cfg.pop("steps", None)
    emb = cfg.pop("embedding", {}) or {}
    try:
        if steps is not None:
            frames = cfg["frames"]
            steps = [{"text": str(s["text"]), "object": s.get("object"),
                      "start": int(s["start"]), "end": int(s["end"])} for s in steps]
            if not steps:
                raise ConfigError("steps must not be empty")
            prev = -1
            for s in steps:
                if not prev < s["start"] <= s["end"]:
                    raise ConfigError(f"step spans must be ordered and disjoint: {s}")
                prev = s["end"]
            if isinstance(frames, int) and prev >= frames:
                raise ConfigError("a step ends after the last frame")
            if "hand_script" not in cfg:
                cfg["hand_script"] = [{"name": s["object"], "start": s["start"], "end": s["end"]}
                                      for s in steps if s["object"] is not None]
        scene = scene_from_dict(cfg)
        dim, noise = int(emb.get("dim", 80)), float(emb.get("noise", 0.4))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"invalid scene config: {type(e).__name__}: {e}") from None
    if dim < 2 or not noise >= 0:
        raise ConfigError("embedding dim must be >= 2 and noise >= 0")
    return RunSpec(scene, steps, dim, noise)


def load_config(path):
    try:
        return parse_config(json.loads(qio.read_text(path)))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None


# --- stages -----------------------------------------------------------------------

def generate(run, seed, out_dir, threads=None):
    """Render frames and write the scene files; returns written relative paths."""
    spec = run.scene
    symbols = symbols_for(spec)
    rendered = pmap(lambda i: render_frame(spec, symbols, i, seed), range(spec.frames), threads)
    written = []

    def put(rel, data):
        qio.atomic_write(os.path.join(out_dir, rel), data)
        written.append(rel)

    truth, boxes = [], []
    for i, (raster, t, b) in enumerate(rendered):
        put(f"frames/frame_{i:05d}.pgm", qio.pgm_bytes(raster))
        if t is not None:
            truth.append(t)
            boxes.append(b)
    put("truth.jsonl", qio.format_detections(truth))
    put("objects.jsonl", qio.format_detections(boxes))
    put("hand_trace.jsonl", qio.format_jsonl({"frame": i, "name": n} for i, n in enumerate(spec.hand_script)))
    put("names.json", qio.dump_json({o.code: o.name for o in spec.objects}))
    if run.steps is not None:
        labels = np.zeros(spec.frames, dtype=int)
        for k, s in enumerate(run.steps, start=1):
            labels[s["start"]:s["end"] + 1] = k
        texts = [s["text"] for s in run.steps]
        rng = np.random.default_rng([seed, 0, 1])  # stream disjoint from the per-frame seeds
        F = frame_embeddings(texts, labels, run.noise, rng, ToyHashEmbedder(run.dim))
        put("embeddings.txt", qio.format_matrix(F))
        gt = [(s["start"] / spec.fps, s["end"] / spec.fps) for s in run.steps]
        put("protocol.csv", qio.format_protocol(qio.Protocol(texts, gt)))
    manifest = {"fps": spec.fps, "n_frames": spec.frames, "seed": seed,
                "resolution": list(spec.camera.resolution), "files": sorted(written)}
    put("manifest.json", qio.dump_json(manifest))
    return written


def _load_frame(path):
    try:
        return read_pgm(path)
    except (OSError, ValueError) as e:
        raise OSError(f"unreadable frame {path}: {e}") from None


def decode_frames(frame_files, boxes=None, name_map=None, threshold=None, threads=None, warn=None):
    """Read tags frame by frame.

    With ``boxes`` (detections from a hand-object detector) each box is
    searched; otherwise whole frames are. Payloads missing from
    ``name_map`` pass through unchanged with a warning.
    """
    by_frame = None
    if boxes is not None:
        by_frame = {}
        for d in boxes:
            if not 0 <= d.frame_idx < len(frame_files):
                raise ValueError(f"detection references frame {d.frame_idx} of {len(frame_files)}")
            by_frame.setdefault(d.frame_idx, []).append(d.bbox)

    def one(i):
        if by_frame is not None and i not in by_frame:
            return []
        raster = _load_frame(frame_files[i])
        if by_frame is None:
            return detect_and_decode(raster, frame_idx=i, threshold=threshold)
        for b in by_frame[i]:
            if not b.inside(raster):
                raise ValueError(f"box {b.as_list()} outside frame {i}")
        return read_tags(raster, by_frame[i], frame_idx=i, threshold=threshold)

    found = [d for ds in pmap(one, range(len(frame_files)), threads) for d in ds]
    name_map = name_map or {}
    unknown = set()
    out = []
    for d in found:
        if d.name is not None:
            if d.name in name_map:
                d = Detection(d.frame_idx, d.bbox, name_map[d.name])
            else:
                unknown.add(d.name)
        out.append(d)
    if warn is not None:
        for p in sorted(unknown):
            warn(f"warning: payload {p!r} not in name map, kept as name")
    return out


def failure_summary(dets):
    named = sum(d.name is not None for d in dets)
    counts = {}
    for d in dets:
        if d.decode_failure is not None:
            counts[d.decode_failure.value] = counts.get(d.decode_failure.value, 0) + 1
    parts = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
    return f"{len(dets)} detections, {named} named, {len(dets) - named} failed" + (f" ({parts})" if parts else "")


def compute_features(frame_files, dets, threads=None):
    if not dets:
        return np.zeros((0, 80))
    frames = sorted({d.frame_idx for d in dets})
    for f in frames:
        if not 0 <= f < len(frame_files):
            raise ValueError(f"detection references frame {f} of {len(frame_files)}")

    def one(f):
        raster = _load_frame(frame_files[f])
        return {id(d): extract_feature(raster, d.bbox) for d in dets if d.frame_idx == f}

    feats = {}
    for part in pmap(one, frames, threads):
        feats.update(part)
    return np.stack([feats[id(d)] for d in dets])


def names_for_rows(frames, names, n_rows):
    """Align per-sampled-frame name records with embedding rows."""
    if len(names) == n_rows:
        return list(names)
    out = [()] * n_rows
    for f, n in zip(frames, names):
        if not 0 <= f < n_rows:
            raise ValueError(f"{len(names)} name records do not match {n_rows} embedding rows")
        out[f] = tuple(n)
    return out


def predicted_labels(loc):
    """Frame labels for scoring: matched step or background where dropped."""
    return FrameLabeling(loc.alignment.assignment, loc.alignment.n_steps)


def run_pipeline(out_dir, cfg=None, seed=0, lam=0.5, percentile=0.75, sample_fps=10.0,
                 min_similarity=None, threads=None, warn=None):
    """gen -> decode -> features -> dict -> link -> localize -> eval, all through files."""
    run = parse_config(bundled_config() if cfg is None else cfg)
    if run.steps is None:
        raise ConfigError("the pipeline needs a config with steps")
    generate(run, seed, out_dir, threads)
    j = lambda *p: os.path.join(out_dir, *p)
    frame_files = qio.frame_paths(j("frames"))
    boxes = qio.read_detections(j("objects.jsonl"))
    name_map = qio.read_name_map(j("names.json"))
    dets = decode_frames(frame_files, boxes, name_map, threads=threads, warn=warn)
    qio.write_detections(j("detections.jsonl"), dets)
    feats = compute_features(frame_files, dets, threads)
    qio.write_matrix(j("features.txt"), feats)
    dictionary = build_dictionary(zip(dets, feats))
    qio.write_dictionary(j("dictionary.json"), dictionary)
    fps = run.scene.fps
    labels = label_video(dets, feats, dictionary, len(frame_files), fps, sample_fps, min_similarity)
    qio.atomic_write(j("frame_names.jsonl"), qio.format_names(labels.frames, labels.names))

    protocol = qio.read_protocol(j("protocol.csv"))
    F = qio.read_matrix(j("embeddings.txt"))
    F = F[labels.frames]
    rate = min(fps, sample_fps)
    names = names_for_rows(range(len(labels.names)), labels.names, F.shape[0])
    loc = localize(protocol.steps, F, names, ToyHashEmbedder(F.shape[1]), FusionConfig(lam, percentile), rate)
    qio.write_segments(j("segments.csv"), protocol.steps, loc.segments)
    qio.atomic_write(j("frame_labels.csv"), qio.format_frame_labels(loc.alignment.assignment))
    gt = protocol.gt_segments(rate)
    report = compute_metrics(predicted_labels(loc),
                             segments_to_frame_labels(gt, F.shape[0], len(protocol)))
    qio.write_metrics(j("metrics.json"), report)
    return report


def stderr_warn(msg):
    print(msg, file=sys.stderr)

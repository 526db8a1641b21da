"""Synthetic egocentric-style scenes: tagged objects handled frame by frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..codec import EcLevel, Payload, auto_version, encode
from .degrade import DegradationSpec, degrade
from .detect import Detection
from .raster import BBox, paint_grid, place_symbol, to_uint8

REFERENCE_RESOLUTION = (3840, 2160)
DEFAULT_PX_PER_CM = 12.0
QR_SIZES_CM = (1, 2, 3)
BACKGROUND = 205.0


@dataclass(frozen=True)
class SceneObject:
    name: str
    qr_size_cm: int = 2
    feature_seed: int = 0
    payload: str | None = None  # what the tag encodes; defaults to the name

    def __post_init__(self):
        if self.qr_size_cm not in QR_SIZES_CM:
            raise ValueError(f"qr_size_cm must be one of {QR_SIZES_CM}")

    @property
    def code(self):
        return self.payload if self.payload is not None else self.name


@dataclass(frozen=True)
class Camera:
    resolution: tuple = (640, 360)
    px_per_cm: float = DEFAULT_PX_PER_CM


@dataclass
class SceneSpec:
    objects: list
    frames: int
    fps: float = 10.0
    camera: Camera = field(default_factory=Camera)
    hand_script: list = field(default_factory=list)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    frame_degradations: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise ValueError("object names must be unique")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if not self.fps > 0:
            raise ValueError("fps must be > 0")
        if len(self.hand_script) != self.frames:
            raise ValueError(f"hand_script has {len(self.hand_script)} entries for {self.frames} frames")
        unknown = {n for n in self.hand_script if n is not None} - set(names)
        if unknown:
            raise ValueError(f"hand_script names unknown objects: {sorted(unknown)}")

    def object(self, name):
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)

    def degradation_for(self, frame_idx):
        return self.frame_degradations.get(frame_idx, self.degradation)


@dataclass
class Scene:
    frames: list
    truth: list  # Detection per rendered symbol, name = true object name
    hand_trace: list  # touched object name (or None) per frame
    object_boxes: list  # simulated hand-object detector output: Detection without name
    payloads: dict  # payload string -> object name


def frame_seed(seed, frame_idx):
    """Order-independent per-frame seed."""
    return int(np.random.SeedSequence([seed, frame_idx]).generate_state(1, np.uint64)[0])


def object_texture(feature_seed, h, w):
    """Deterministic appearance for an object body of h x w pixels."""
    rng = np.random.default_rng([7919, feature_seed])
    coarse = rng.uniform(20, 230, size=(5, 5))
    yy, xx = np.mgrid[0:h, 0:w]
    rows = yy * (4.0 / max(h - 1, 1))
    cols = xx * (4.0 / max(w - 1, 1))
    base = ndimage.map_coordinates(coarse, [rows, cols], order=1)
    angle = rng.uniform(0, np.pi)
    period = rng.uniform(12.0, 30.0)
    phase = rng.uniform(0, 2 * np.pi)
    stripes = 30.0 * np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase)
    return np.clip(base + stripes, 0, 255)


def _body_size(qr_px):
    return int(round(qr_px * 2.4)), int(round(qr_px * 1.8))  # (w, h)


def render_object(canvas, obj, symbol, x, y, px_per_cm):
    """Paint the object body with its tag; returns (canvas, body bbox, symbol float rect)."""
    qr_px = obj.qr_size_cm * px_per_cm
    bw, bh = _body_size(qr_px)
    tex = object_texture(obj.feature_seed, bh, bw)
    canvas = paint_grid(canvas, tex, x, y, 1.0)
    module = qr_px / symbol.side
    sx = x + 0.3 * qr_px + 2 * module
    sy = y + 0.2 * qr_px + 2 * module
    canvas = place_symbol(canvas, symbol, sx, sy, qr_px)
    return canvas, (x, y, bw, bh), (sx, sy, qr_px)


def _int_box(x, y, w, h, shape):
    H, W = shape
    xa, ya = max(0, int(np.floor(x))), max(0, int(np.floor(y)))
    xb, yb = min(W, int(np.ceil(x + w))), min(H, int(np.ceil(y + h)))
    return BBox(xa, ya, xb - xa, yb - ya)


def symbols_for(spec, ec=EcLevel.L):
    out = {}
    for o in spec.objects:
        payload = Payload.auto(o.code)
        out[o.name] = encode(payload, auto_version(payload, ec), ec)
    return out


def render_frame(spec, symbols, frame_idx, seed):
    """Render one frame; returns (raster, truth detection or None, body box or None)."""
    W, H = spec.camera.resolution
    fseed = frame_seed(seed, frame_idx)
    rng = np.random.default_rng(fseed)
    yy, xx = np.mgrid[0:H, 0:W]
    canvas = BACKGROUND - 25.0 * (yy / H) + 10.0 * (xx / W)
    touched = spec.hand_script[frame_idx]
    truth = box = None
    if touched is not None:
        obj = spec.object(touched)
        qr_px = obj.qr_size_cm * spec.camera.px_per_cm
        bw, bh = _body_size(qr_px)
        if bw + 4 > W or bh + 4 > H:
            raise ValueError(f"object {obj.name} does not fit in the frame")
        x = rng.uniform(2, W - bw - 2)
        y = rng.uniform(2, H - bh - 2)
        canvas, body, (sx, sy, s) = render_object(canvas, obj, symbols[obj.name], x, y, spec.camera.px_per_cm)
        truth = Detection(frame_idx, _int_box(sx, sy, s, s, (H, W)), obj.name)
        box = Detection(frame_idx, _int_box(*body, (H, W)))
    raster = degrade(to_uint8(canvas), spec.degradation_for(frame_idx), seed=fseed)
    return raster, truth, box


def synth_scene(spec, seed=0):
    """Render every frame of ``spec``; deterministic for a given ``seed``."""
    symbols = symbols_for(spec)
    frames, truth, boxes = [], [], []
    for i in range(spec.frames):
        raster, t, b = render_frame(spec, symbols, i, seed)
        frames.append(raster)
        if t is not None:
            truth.append(t)
            boxes.append(b)
    payloads = {o.code: o.name for o in spec.objects}
    return Scene(frames, truth, list(spec.hand_script), boxes, payloads)


def scene_from_dict(cfg):
    """Build a SceneSpec from its JSON form.

    ``hand_script`` may be a per-frame list of names/null or a list of runs
    ``{"name": ..., "start": i, "end": j}`` (inclusive).
    """
    objects = [SceneObject(o["name"], int(o.get("qr_size_cm", 2)), int(o.get("feature_seed", 0)),
                           o.get("payload")) for o in cfg["objects"]]
    frames = cfg["frames"]
    if not isinstance(frames, int) or isinstance(frames, bool):
        raise ValueError("frames must be an integer")
    cam = cfg.get("camera", {})
    camera = Camera(tuple(cam.get("resolution", (640, 360))), float(cam.get("px_per_cm", DEFAULT_PX_PER_CM)))
    script = cfg.get("hand_script", [None] * max(frames, 0))
    if script and isinstance(script[0], dict):
        flat = [None] * max(frames, 0)
        for run in script:
            for i in range(int(run["start"]), int(run["end"]) + 1):
                flat[i] = run["name"]
        script = flat
    degr = DegradationSpec.from_dict(cfg.get("degradation", {}))
    per_frame = {int(k): DegradationSpec.from_dict(v) for k, v in cfg.get("frame_degradations", {}).items()}
    return SceneSpec(objects, frames, float(cfg.get("fps", 10.0)), camera, script, degr, per_frame)

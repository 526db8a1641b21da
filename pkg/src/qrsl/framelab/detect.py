"""Finder-pattern location and grid sampling for axis-aligned Micro QR symbols."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..codec import MicroQrError, decode
from .raster import BBox, clip_bbox, otsu_threshold, sample_modules

SIDES = (11, 13, 15, 17)
MIN_CONTRAST = 24


class DecodeFailure(enum.Enum):
    Blur = "Blur"
    Occlusion = "Occlusion"
    Unreadable = "Unreadable"


@dataclass(frozen=True)
class Detection:
    frame_idx: int
    bbox: BBox
    name: str | None = None
    decode_failure: DecodeFailure | None = None
    # codec exception class name when decoding failed; not serialised
    detail: str | None = None

    @property
    def positive(self):
        return self.name is not None


@dataclass
class Candidate:
    cx: float
    cy: float
    module: float
    sides: tuple
    hits: int = 1

    @property
    def origin(self):
        return self.cx - 3.5 * self.module, self.cy - 3.5 * self.module

    def bbox(self, shape, side=None):
        side = side or self.sides[0]
        ox, oy = self.origin
        size = side * self.module
        return clip_bbox(ox, oy, ox + size, oy + size, shape)


def payload_name(data):
    """UTF-8 when valid, else latin-1 (lossless for arbitrary bytes)."""
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("latin-1")


def _runs(line):
    """(start, length, value) runs of a boolean 1-D array."""
    change = np.flatnonzero(np.diff(line.astype(np.int8))) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [line.size]))
    return starts, ends - starts, line[starts]


def _ratio_ok(lengths):
    total = lengths.sum()
    if total < 7:
        return False
    m = total / 7.0
    tol = m / 2.0
    a, b, c, d, e = lengths
    return (abs(a - m) < tol and abs(b - m) < tol and abs(c - 3 * m) < 3 * tol
            and abs(d - m) < tol and abs(e - m) < tol)


def _scan_line(line):
    """Centres and widths of 1:1:3:1:1 dark/light/dark/light/dark patterns."""
    starts, lengths, values = _runs(line)
    found = []
    for i in range(len(lengths) - 4):
        if not values[i]:
            continue
        window = lengths[i:i + 5]
        if _ratio_ok(window):
            centre = starts[i + 2] + lengths[i + 2] / 2.0
            found.append((centre, float(window.sum())))
    return found


def _cross_check(column, y):
    """Vertical 1:1:3:1:1 check through row ``y``; returns (centre, width) or None."""
    starts, lengths, values = _runs(column)
    i = int(np.searchsorted(starts, y, side="right")) - 1
    if i < 2 or i + 2 >= len(lengths) or not values[i]:
        return None
    window = lengths[i - 2:i + 3]
    if not _ratio_ok(window):
        return None
    return starts[i] + lengths[i] / 2.0, float(window.sum())


def _side_from_timing(dark, origin, module, horizontal):
    """Estimate symbol side by following the timing pattern past the finder."""
    H, W = dark.shape
    ox, oy = origin
    first_dev = None
    for k in range(8, 21):
        along = (k + 0.5) * module
        across = 0.5 * module
        x = ox + (along if horizontal else across)
        y = oy + (across if horizontal else along)
        xi, yi = int(np.floor(x)), int(np.floor(y))
        if not (0 <= xi < W and 0 <= yi < H):
            # outside the frame counts as light
            value = False
        else:
            value = bool(dark[yi, xi])
        if value != (k % 2 == 0):
            first_dev = k
            break
    if first_dev is None:
        return None
    side = first_dev - 1
    return side if side in SIDES else None


def _binarisation_levels(img, threshold):
    if threshold is not None:
        return [threshold]
    lo, hi = np.percentile(img, (1, 99))
    levels = [otsu_threshold(img), int(round((lo + hi) / 2))]
    return list(dict.fromkeys(levels))


def find_candidates(raster, threshold=None):
    """Finder-pattern candidates in ``raster`` (uint8, 2-D).

    Rows are scanned at the image's Otsu level and at its mid-range level;
    a fixed ``threshold`` replaces both.
    """
    img = np.asarray(raster)
    if img.size == 0 or int(img.max()) - int(img.min()) < MIN_CONTRAST:
        return []
    hits = []
    for t in _binarisation_levels(img, threshold):
        dark_t = img < t
        for y in range(img.shape[0]):
            row = dark_t[y]
            if not row.any():
                continue
            for cx, width_h in _scan_line(row):
                chk = _cross_check(dark_t[:, int(cx)], y)
                if chk is None:
                    continue
                cy, width_v = chk
                hits.append((cx, cy, (width_h + width_v) / 14.0, t))

    clusters = []
    for cx, cy, m, t in hits:
        for c in clusters:
            if abs(c[0] / c[3] - cx) <= max(1.0, c[2] / c[3]) and abs(c[1] / c[3] - cy) <= max(1.0, c[2] / c[3]):
                c[0] += cx
                c[1] += cy
                c[2] += m
                c[3] += 1
                c[4].add(t)
                break
        else:
            clusters.append([cx, cy, m, 1, {t}])

    out = []
    for sx, sy, sm, n, ts in clusters:
        cx, cy, m = sx / n, sy / n, sm / n
        origin = (cx - 3.5 * m, cy - 3.5 * m)
        dark = img < min(ts)
        h = _side_from_timing(dark, origin, m, True)
        v = _side_from_timing(dark, origin, m, False)
        preferred = [s for s in (h, v) if s is not None]
        sides = tuple(dict.fromkeys(preferred + sorted(SIDES, key=lambda s: abs(s - (preferred or [13])[0]))))
        out.append(Candidate(cx, cy, m, sides, n))
    out.sort(key=lambda c: (round(c.cy), round(c.cx)))
    return out


def locate_symbols(raster, threshold=None):
    """Bounding boxes of candidate Micro QR symbols (may include false positives)."""
    boxes = []
    for c in find_candidates(raster, threshold):
        b = c.bbox(np.shape(raster))
        if b is not None:
            boxes.append(b)
    return boxes


def _decode_candidate(img, cand, global_threshold=None):
    last_error = None
    for side in cand.sides:
        box = cand.bbox(img.shape, side)
        if box is None:
            continue
        region = box.crop(img)
        t = otsu_threshold(region) if global_threshold is None else global_threshold
        modules = sample_modules(img, side, cand.origin, cand.module, t)
        try:
            return box, decode(modules), None
        except MicroQrError as exc:
            last_error = exc
    return cand.bbox(img.shape), None, last_error


def detect_and_decode(raster, roi=None, frame_idx=0, threshold=None):
    """Locate and decode symbols, optionally restricted to ``roi``.

    Returns one Detection per candidate. Failed candidates that overlap a
    successful decode are dropped. ``threshold`` switches from per-candidate
    Otsu to a fixed global binarisation level.
    """
    img = np.asarray(raster)
    dx = dy = 0
    if roi is not None:
        if not roi.inside(img):
            raise ValueError(f"roi {roi} outside raster {img.shape}")
        img = roi.crop(img)
        dx, dy = roi.x, roi.y
    good = []
    bad = []
    for cand in find_candidates(img, threshold):
        box, result, err = _decode_candidate(img, cand, threshold)
        if box is None:
            continue
        box = box.shifted(dx, dy)
        if result is not None:
            name = payload_name(result.text)
            if not any(g.bbox.iou(box) > 0.5 and g.name == name for g in good):
                good.append(Detection(frame_idx, box, name))
        else:
            bad.append(Detection(frame_idx, box, None, DecodeFailure.Unreadable,
                                 type(err).__name__ if err else None))
    bad = [b for b in bad if not any(g.bbox.iou(b.bbox) > 0 for g in good)]
    return good + bad


def sample_symbol_grid(raster, bbox, side):
    """Resample the module grid inside ``bbox`` assuming it holds a whole symbol."""
    img = np.asarray(raster)
    region = bbox.crop(img)
    module = bbox.w / side
    return sample_modules(img, side, (bbox.x, bbox.y), module, otsu_threshold(region))


__all__ = [
    "Candidate", "DecodeFailure", "Detection", "detect_and_decode",
    "find_candidates", "locate_symbols", "sample_symbol_grid",
]

"""Object labeling from Micro QR reads plus appearance-dictionary linking.

Detections whose tag decodes are *positive* and keep the decoded name.
Their appearance vectors are averaged per name into a dictionary; the
remaining *negative* detections take the name of the most cosine-similar
dictionary entry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .framelab.detect import DecodeFailure, Detection, detect_and_decode
from .framelab.raster import resample_bilinear

FEATURE_DIM = 80
N_ORIENT_BINS = 16


class DegenerateBBox(ValueError):
    pass


class NoPositives(ValueError):
    pass


class Source(enum.Enum):
    QrDecoded = "QrDecoded"
    DictionaryLinked = "DictionaryLinked"


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def extract_feature(raster, bbox):
    """80-d appearance descriptor of ``bbox``.

    An 8x8 zero-mean intensity thumbnail followed by a 16-bin
    magnitude-weighted gradient orientation histogram; each block is scaled
    to unit length before the whole vector is L2-normalised. A constant
    patch has no contrast to centre, so its thumbnail block is uniform and
    its gradient block zero.
    """
    if bbox.w < 2 or bbox.h < 2:
        raise DegenerateBBox(f"bbox {bbox} too small for a descriptor")
    img = np.asarray(raster)
    if not bbox.inside(img):
        raise ValueError(f"bbox {bbox} outside raster {img.shape}")
    patch = bbox.crop(img).astype(float)

    thumb = resample_bilinear(patch, (8, 8)).ravel()
    thumb = thumb - thumb.mean()
    if np.abs(thumb).max() < 1e-9:
        thumb = np.ones(64)
    thumb = _unit(thumb)

    gy, gx = np.gradient(patch)
    mag = np.hypot(gx, gy)
    hist = np.zeros(N_ORIENT_BINS)
    if mag.max() > 1e-12:
        ang = np.mod(np.arctan2(gy, gx), 2 * np.pi)
        bins = np.minimum((ang / (2 * np.pi) * N_ORIENT_BINS).astype(int), N_ORIENT_BINS - 1)
        hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=N_ORIENT_BINS)
        hist = _unit(hist)

    return _unit(np.concatenate([thumb, hist]))


@dataclass(frozen=True)
class DictionaryEntry:
    mean: np.ndarray
    count: int


class ObjectDictionary:
    """Object name -> renormalised mean appearance vector."""

    def __init__(self, entries):
        if not entries:
            raise NoPositives("an object dictionary needs at least one entry")
        dims = {e.mean.shape[0] for e in entries.values()}
        if len(dims) != 1:
            raise ValueError("dictionary entries have inconsistent dimensions")
        self.entries = dict(sorted(entries.items()))
        self.dim = dims.pop()
        self._names = list(self.entries)
        self._means = np.stack([self.entries[n].mean for n in self._names])

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name):
        return self.entries[name]

    @property
    def names(self):
        return list(self._names)

    def similarities(self, feature):
        f = _unit(np.asarray(feature, dtype=float))
        return self._means @ f


def build_dictionary(pairs):
    """Average the features of positive detections per decoded name.

    ``pairs`` is an iterable of (Detection, feature vector); negatives are
    ignored.
    """
    sums = {}
    counts = {}
    for det, feat in pairs:
        if det.name is None:
            continue
        v = np.asarray(feat, dtype=float)
        if det.name in sums:
            sums[det.name] = sums[det.name] + v
        else:
            sums[det.name] = v.copy()
        counts[det.name] = counts.get(det.name, 0) + 1
    if not sums:
        raise NoPositives("no positive detections to build a dictionary from")
    entries = {}
    for name, s in sums.items():
        mean = s / counts[name]
        entries[name] = DictionaryEntry(_unit(mean), counts[name])
    return ObjectDictionary(entries)


def link(feature, dictionary, min_similarity=None):
    """Best-matching dictionary name for ``feature`` by cosine similarity.

    Ties go to the lexicographically smallest name. Returns ``(None, sim)``
    when ``min_similarity`` is set and not reached.
    """
    sims = dictionary.similarities(feature)
    best = int(np.argmax(sims))  # names are sorted, argmax takes the first maximum
    sim = float(sims[best])
    if min_similarity is not None and sim < min_similarity:
        return None, sim
    return dictionary.names[best], sim


@dataclass(frozen=True)
class LabeledDetection:
    detection: Detection
    assigned_name: str | None
    source: Source
    similarity: float


def sampled_frames(n_frames, fps, sample_fps=10.0):
    """Indices of frames kept when resampling ``fps`` video at ``sample_fps``."""
    if fps <= sample_fps:
        return list(range(n_frames))
    step = fps / sample_fps
    out = []
    j = 0
    while True:
        i = int(math.floor(j * step + 1e-9))
        if i >= n_frames:
            return out
        out.append(i)
        j += 1


@dataclass
class FrameLabels:
    frames: list  # sampled frame indices
    names: list  # tuple of sorted unique names per sampled frame
    labeled: list  # LabeledDetection for every detection on a sampled frame

    def as_dict(self):
        return dict(zip(self.frames, self.names))


def label_video(detections, features, dictionary, n_frames, fps=10.0, sample_fps=10.0,
                min_similarity=None):
    """Per-sampled-frame object name sets.

    ``features[i]`` belongs to ``detections[i]``. Positives keep their decoded
    names; negatives are linked against ``dictionary``.
    """
    if len(detections) != len(features):
        raise ValueError("detections and features differ in length")
    keep = sampled_frames(n_frames, fps, sample_fps)
    keep_set = set(keep)
    per_frame = {i: set() for i in keep}
    labeled = []
    for det, feat in zip(detections, features):
        if not 0 <= det.frame_idx < n_frames:
            raise ValueError(f"detection references frame {det.frame_idx} of {n_frames}")
        if det.frame_idx not in keep_set:
            continue
        if det.name is not None:
            lab = LabeledDetection(det, det.name, Source.QrDecoded, 1.0)
        else:
            name, sim = link(feat, dictionary, min_similarity)
            lab = LabeledDetection(det, name, Source.DictionaryLinked, sim)
        labeled.append(lab)
        if lab.assigned_name is not None:
            per_frame[det.frame_idx].add(lab.assigned_name)
    names = [tuple(sorted(per_frame[i])) for i in keep]
    return FrameLabels(keep, names, labeled)


def read_tags(raster, boxes, frame_idx=0, threshold=None, name_map=None):
    """Try to decode a tag inside each hand-object box.

    Returns one Detection per box carrying the box itself, with the decoded
    (and optionally mapped) name or an Unreadable failure.
    """
    out = []
    for box in boxes:
        found = detect_and_decode(raster, roi=box, frame_idx=frame_idx, threshold=threshold)
        named = [d for d in found if d.name is not None]
        if named:
            payload = named[0].name
            name = name_map.get(payload, payload) if name_map else payload
            out.append(Detection(frame_idx, box, name))
        else:
            detail = found[0].detail if found else "NoCandidate"
            out.append(Detection(frame_idx, box, None, DecodeFailure.Unreadable, detail))
    return out

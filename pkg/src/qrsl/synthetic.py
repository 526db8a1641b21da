"""Synthetic protocols and frame-embedding timelines with object-name tracks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .localization import SegmentList, ToyHashEmbedder, embed_steps

VERBS = ("Add", "Mix", "Transfer", "Discard", "Place", "Incubate", "Centrifuge", "Pour", "Load", "Shake")
OBJECTS = ("GP1", "GP2", "tube", "incubator", "column", "buffer", "gel", "rack", "vortex", "beaker",
           "flask", "tray")
FILLERS = ("the sample in", "gently with", "slowly into", "carefully using", "briefly on")


@dataclass
class Timeline:
    step_texts: list
    step_objects: list
    F: np.ndarray
    names: list  # tuple of names per frame
    segments: SegmentList  # ground truth
    fps: float

    @property
    def n_frames(self):
        return self.F.shape[0]


def make_protocol(n_steps, rng):
    objs = rng.permutation(len(OBJECTS))[:n_steps]
    texts, used = [], []
    for k in range(n_steps):
        obj = OBJECTS[objs[k % len(objs)]]
        verb = VERBS[rng.integers(len(VERBS))]
        filler = FILLERS[rng.integers(len(FILLERS))]
        texts.append(f"{verb} {filler} {obj}")
        used.append(obj)
    return texts, used


def random_segments(n_steps, n_frames, rng, background=0.25):
    """Ordered, non-overlapping step spans separated by background gaps."""
    n_bg = int(round(background * n_frames))
    n_step_frames = n_frames - n_bg
    if n_step_frames < n_steps:
        raise ValueError("too few frames for the requested steps")
    lengths = 1 + rng.multinomial(n_step_frames - n_steps, rng.dirichlet(np.full(n_steps, 4.0)))
    gaps = rng.multinomial(n_bg, rng.dirichlet(np.full(n_steps + 1, 2.0)))
    segs = []
    pos = int(gaps[0])
    for k in range(n_steps):
        segs.append((pos, pos + int(lengths[k]) - 1))
        pos += int(lengths[k]) + int(gaps[k + 1])
    return segs


def visual_embeddings(step_texts, embedder):
    """What the camera sees of each step: the action without its object word."""
    return embed_steps([t.rsplit(" ", 1)[0] if " " in t else t for t in step_texts], embedder)


def frame_embeddings(step_texts, labels, noise, rng, embedder):
    """N x D frame embeddings for per-frame step labels (0 = background)."""
    labels = np.asarray(labels, dtype=int)
    visual = visual_embeddings(step_texts, embedder)
    F = noise / np.sqrt(embedder.dim) * rng.standard_normal((labels.size, embedder.dim))
    inside = labels > 0
    F[inside] += visual[labels[inside] - 1]
    return F


def synth_timeline(n_steps=5, n_frames=150, dim=80, noise=0.4, seed=0, name_prob=0.8,
                   confusion_prob=0.1, shared_name=None, shared_step_object=None, fps=10.0,
                   embedder=None):
    """Frame embeddings for a protocol whose objects look alike.

    Inside step k the frame embedding is the embedding of the step text
    without its object word plus isotropic Gaussian noise of expected norm
    ``noise``; background frames are noise only.

    Each step frame sees its step's object with probability ``name_prob``
    and some other protocol object with probability ``confusion_prob``.
    ``shared_name`` is added to every frame (an object present throughout
    but never mentioned in the protocol). ``shared_step_object=j`` instead
    puts the object of step j on every frame: a name the protocol does
    mention but which carries no timing information.
    """
    rng = np.random.default_rng(seed)
    embedder = embedder or ToyHashEmbedder(dim)
    texts, objs = make_protocol(n_steps, rng)
    if shared_step_object is not None:
        shared_name = objs[shared_step_object]
    segs = random_segments(n_steps, n_frames, rng)
    labels = np.zeros(n_frames, dtype=int)
    for k, (s, e) in enumerate(segs, start=1):
        labels[s:e + 1] = k
    F = frame_embeddings(texts, labels, noise, rng, embedder)
    names = []
    for i in range(n_frames):
        k = labels[i]
        present = set()
        if k:
            if rng.random() < name_prob:
                present.add(objs[k - 1])
        if rng.random() < confusion_prob:
            present.add(objs[rng.integers(n_steps)])
        if shared_name:
            present.add(shared_name)
        names.append(tuple(sorted(present)))
    return Timeline(texts, objs, F, names, SegmentList(segs, fps), fps)


@dataclass
class DictionaryFixture:
    prototypes: dict  # name -> unit vector
    detections: list
    features: np.ndarray
    truth: list  # true name per detection

    @property
    def margin(self):
        P = np.stack(list(self.prototypes.values()))
        G = P @ P.T
        np.fill_diagonal(G, -np.inf)
        return 1.0 - float(G.max())


def dictionary_fixture(n_objects=5, dim=80, noise=0.05, margin=0.2, n_pos=8, n_neg=40, seed=0):
    """Noisy descriptor samples around well-separated object prototypes.

    Prototypes are redrawn until every pair has cosine <= 1 - margin. Each
    object yields ``n_pos`` decoded and ``n_neg`` undecoded detections whose
    features are prototype + N(0, noise^2 I), renormalised.
    """
    from .framelab.detect import DecodeFailure, Detection
    from .framelab.raster import BBox

    rng = np.random.default_rng(seed)
    names = [f"obj{i}" for i in range(n_objects)]
    while True:
        P = rng.standard_normal((n_objects, dim))
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        G = P @ P.T
        np.fill_diagonal(G, -1.0)
        if G.max() <= 1.0 - margin:
            break
    dets, feats, truth = [], [], []
    frame = 0
    for i, name in enumerate(names):
        for j in range(n_pos + n_neg):
            v = P[i] + noise * rng.standard_normal(dim)
            feats.append(v / np.linalg.norm(v))
            box = BBox(0, 0, 8, 8)
            if j < n_pos:
                dets.append(Detection(frame, box, name))
            else:
                dets.append(Detection(frame, box, None, DecodeFailure.Unreadable))
            truth.append(name)
            frame += 1
    return DictionaryFixture(dict(zip(names, P)), dets, np.array(feats), truth)

"""Frame-level step localization metrics and annotation agreement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BACKGROUND = 0


class ShapeMismatch(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class NoCommonSteps(ValueError):
    pass


@dataclass
class FrameLabeling:
    labels: np.ndarray  # 0 = background, 1..K = step
    n_steps: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > self.n_steps):
            raise OutOfRange(f"labels outside 0..{self.n_steps}")

    @property
    def n_frames(self):
        return self.labels.size


def segments_to_frame_labels(segments, n_frames, n_steps=None):
    """Label frames inside segment k with k (1-based); others background.

    ``segments`` is a SegmentList or a list of (start, end) inclusive pairs.
    A later segment wins a shared boundary frame.
    """
    spans = getattr(segments, "segments", segments)
    K = len(spans) if n_steps is None else n_steps
    labels = np.zeros(n_frames, dtype=int)
    for k, (s, e) in enumerate(spans, start=1):
        if not (0 <= s <= e < n_frames):
            raise OutOfRange(f"segment {k} ({s}, {e}) outside [0, {n_frames})")
        labels[s:e + 1] = k
    return FrameLabeling(labels, K)


def frame_labels_to_spans(labeling):
    """Inverse of segments_to_frame_labels for contiguous labelings."""
    spans = []
    for k in range(1, labeling.n_steps + 1):
        idx = np.flatnonzero(labeling.labels == k)
        spans.append((int(idx[0]), int(idx[-1])) if idx.size else None)
    return spans


@dataclass
class StepScore:
    precision: float
    recall: float
    tiou: float


@dataclass
class MetricsReport:
    mof: float
    precision: float
    recall: float
    tiou: float
    per_step: list = field(default_factory=list)

    def as_dict(self):
        return {
            "aggregate": {"mof": self.mof, "precision": self.precision,
                          "recall": self.recall, "tiou": self.tiou},
            "per_step": [{"step": k, "precision": s.precision, "recall": s.recall, "tiou": s.tiou}
                         for k, s in enumerate(self.per_step, start=1)],
        }

    def table(self, title="result"):
        head = f"{'':<16}{'MoF':>7}{'Prec.':>7}{'Rec.':>7}{'tIoU':>7}"
        row = f"{title:<16}{self.mof:7.1f}{self.precision:7.1f}{self.recall:7.1f}{self.tiou:7.1f}"
        return head + "\n" + row


def step_score(pred_mask, gt_mask):
    p = int(pred_mask.sum())
    g = int(gt_mask.sum())
    if p == 0 and g == 0:
        return StepScore(100.0, 100.0, 100.0)
    tp = int((pred_mask & gt_mask).sum())
    union = int((pred_mask | gt_mask).sum())
    precision = 100.0 * tp / p if p else 0.0
    recall = 100.0 * tp / g if g else 0.0
    return StepScore(precision, recall, 100.0 * tp / union)


def compute_metrics(pred, gt):
    """MoF over all frames (background included), macro-averaged per-step
    precision / recall / tIoU, all in percent."""
    if pred.n_frames != gt.n_frames or pred.n_steps != gt.n_steps:
        raise ShapeMismatch(
            f"pred has {pred.n_frames} frames/{pred.n_steps} steps, gt {gt.n_frames}/{gt.n_steps}")
    if gt.n_frames == 0:
        raise ShapeMismatch("no frames to evaluate")
    mof = 100.0 * float(np.mean(pred.labels == gt.labels))
    per_step = [step_score(pred.labels == k, gt.labels == k) for k in range(1, gt.n_steps + 1)]
    if per_step:
        prec = float(np.mean([s.precision for s in per_step]))
        rec = float(np.mean([s.recall for s in per_step]))
        tiou = float(np.mean([s.tiou for s in per_step]))
    else:
        prec = rec = tiou = 100.0
    return MetricsReport(mof, prec, rec, tiou, per_step)


# --- annotation agreement ----------------------------------------------------

@dataclass
class AnnotationTrack:
    events: list  # (step_id, start_sec, end_sec)

    def __post_init__(self):
        spans = sorted((float(s), float(e)) for _, s, e in self.events)
        for s, e in spans:
            if s > e:
                raise ValueError(f"event ({s}, {e}) ends before it starts")
        for (_, e), (s, _) in zip(spans, spans[1:]):
            if s < e:
                raise ValueError("events overlap within a track")

    def intervals(self):
        out = {}
        for step, s, e in self.events:
            out.setdefault(step, []).append((float(s), float(e)))
        return out


def _measure(intervals):
    total = 0.0
    end = -np.inf
    for s, e in sorted(intervals):
        if e <= end:
            continue
        total += e - max(s, end)
        end = e
    return total


def _intersection(a, b):
    pieces = []
    for s1, e1 in a:
        for s2, e2 in b:
            lo, hi = max(s1, s2), min(e1, e2)
            if hi > lo:
                pieces.append((lo, hi))
    return _measure(pieces)


def interval_iou(a, b):
    """IoU of two unions of time intervals."""
    inter = _intersection(a, b)
    union = _measure(list(a) + list(b))
    if union == 0:
        return 1.0 if sorted(a) == sorted(b) else 0.0
    return inter / union


def agreement_tiou(a, b):
    """Mean per-step temporal IoU (percent) over steps both tracks annotate."""
    ia, ib = a.intervals(), b.intervals()
    common = sorted(set(ia) & set(ib), key=str)
    if not common:
        raise NoCommonSteps("the two tracks share no step ids")
    return 100.0 * float(np.mean([interval_iou(ia[k], ib[k]) for k in common]))

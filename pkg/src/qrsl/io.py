"""File formats shared by the command-line tools.

Every writer produces canonical bytes so that write -> read -> write is
byte-identical. Writes go to a temporary file in the target directory and
are moved into place with os.replace.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from .codec import SymbolMatrix
from .evaluation import AnnotationTrack
from .framelab.detect import DecodeFailure, Detection
from .framelab.raster import BBox
from .labeling import DictionaryEntry, ObjectDictionary
from .localization import SegmentList, TableEmbedder


class FormatError(ValueError):
    """Malformed input file."""


def atomic_write(path, data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_text(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read()


def fnum(x):
    """Shortest repr that round-trips a float."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x}")
    return repr(x)


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_json(path):
    try:
        return json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None


# --- symbols and frames --------------------------------------------------------

def write_symbol(path, symbol):
    atomic_write(path, symbol.to_text())


def read_symbol(path):
    try:
        return SymbolMatrix.from_text(read_text(path))
    except (ValueError, IndexError) as e:
        raise FormatError(f"{path}: {e}") from None


def pgm_bytes(raster):
    raster = np.asarray(raster)
    if raster.ndim != 2 or raster.dtype != np.uint8:
        raise ValueError("PGM frames must be 2-D uint8 arrays")
    h, w = raster.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + raster.tobytes()


def write_frame(path, raster):
    atomic_write(path, pgm_bytes(raster))


def frame_paths(frames_dir):
    """Sorted *.pgm paths in a directory."""
    names = sorted(n for n in os.listdir(frames_dir) if n.lower().endswith(".pgm"))
    return [os.path.join(frames_dir, n) for n in names]


# --- detections ----------------------------------------------------------------

def detection_to_dict(det):
    return {
        "frame": int(det.frame_idx),
        "bbox": det.bbox.as_list(),
        "name": det.name,
        "failure": det.decode_failure.value if det.decode_failure is not None else None,
    }


def detection_from_dict(d):
    try:
        x, y, w, h = (int(v) for v in d["bbox"])
        failure = d.get("failure")
        return Detection(int(d["frame"]), BBox(x, y, w, h), d.get("name"),
                         DecodeFailure(failure) if failure is not None else None)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad detection record {d!r}: {e}") from None


def format_detections(dets):
    return "".join(json.dumps(detection_to_dict(d), ensure_ascii=False) + "\n" for d in dets)


def parse_detections(text):
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"line {lineno}: {e}") from None
        out.append(detection_from_dict(rec))
    return out


def write_detections(path, dets):
    atomic_write(path, format_detections(dets))


def read_detections(path):
    return parse_detections(read_text(path))


def format_jsonl(records):
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def read_jsonl(path):
    out = []
    for lineno, line in enumerate(read_text(path).splitlines(), start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    return out


# --- matrices (features, frame embeddings) -------------------------------------

def format_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(fnum(v) for v in row) for row in M]
    return "\n".join(lines) + "\n"


def parse_matrix(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty matrix file")
    try:
        n, d = (int(t) for t in lines[0].split())
    except ValueError:
        raise FormatError(f"bad matrix header {lines[0]!r}") from None
    if n < 0 or d < 1:
        raise FormatError(f"bad matrix shape {n} x {d}")
    if len(lines) - 1 != n:
        raise FormatError(f"header says {n} rows, found {len(lines) - 1}")
    M = np.empty((n, d))
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != d:
            raise FormatError(f"row {i + 1} has {len(parts)} values, expected {d}")
        try:
            M[i] = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"row {i + 1} is not numeric") from None
    if not np.isfinite(M).all():
        raise FormatError("matrix has non-finite entries")
    return M


def write_matrix(path, M):
    atomic_write(path, format_matrix(M))


def read_matrix(path):
    return parse_matrix(read_text(path))


# --- dictionary and embedding table ----------------------------------------------

def dictionary_to_dict(dictionary):
    return {
        "dim": dictionary.dim,
        "entries": {name: {"mean": [float(v) for v in e.mean], "count": int(e.count)}
                    for name, e in dictionary.entries.items()},
    }


def dictionary_from_dict(d):
    try:
        dim = int(d["dim"])
        entries = {}
        for name, e in d["entries"].items():
            mean = np.asarray(e["mean"], dtype=float)
            if mean.shape != (dim,):
                raise FormatError(f"entry {name!r} is not {dim}-d")
            entries[name] = DictionaryEntry(mean, int(e["count"]))
    except (KeyError, TypeError, AttributeError) as e:
        raise FormatError(f"bad dictionary file: {e}") from None
    return ObjectDictionary(entries)


def write_dictionary(path, dictionary):
    atomic_write(path, dump_json(dictionary_to_dict(dictionary)))


def read_dictionary(path):
    return dictionary_from_dict(load_json(path))


def table_to_dict(vectors, dim):
    return {"dim": int(dim), "vectors": {k: [float(x) for x in v] for k, v in vectors.items()}}


def write_table(path, vectors, dim):
    atomic_write(path, dump_json(table_to_dict(vectors, dim)))


def read_table(path):
    d = load_json(path)
    try:
        return TableEmbedder(d["vectors"], int(d["dim"]))
    except (KeyError, TypeError) as e:
        raise FormatError(f"{path}: bad embedding table: {e}") from None


# --- CSV -------------------------------------------------------------------------

SEGMENT_COLUMNS = ("step_index", "step_text", "start_frame", "end_frame", "start_sec", "end_sec")
PROTOCOL_COLUMNS = ("step_index", "step_text", "gt_start_sec", "gt_end_sec")


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _csv_rows(text, required):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise FormatError("CSV has no header row")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise FormatError(f"CSV lacks columns {missing}")
    return list(reader)


def sec_to_frame(sec, fps):
    return int(math.floor(float(sec) * fps + 1e-9))


def format_segments(step_texts, segments):
    if len(step_texts) != len(segments.segments):
        raise ValueError("one step text per segment required")
    rows = []
    for k, ((s, e), (ss, es)) in enumerate(zip(segments.segments, segments.seconds()), start=1):
        rows.append([k, step_texts[k - 1], s, e, fnum(ss), fnum(es)])
    return _csv_text(SEGMENT_COLUMNS, rows)


def parse_segments(text, fps=None):
    """Returns (step_texts, SegmentList). fps is taken from the seconds columns unless given."""
    rows = _csv_rows(text, SEGMENT_COLUMNS)
    texts, segs, rate = [], [], fps
    for i, r in enumerate(rows, start=1):
        try:
            if int(r["step_index"]) != i:
                raise FormatError(f"step_index must be dense from 1 (row {i})")
            s, e = int(r["start_frame"]), int(r["end_frame"])
            if rate is None and float(r["end_sec"]) > 0:
                rate = e / float(r["end_sec"])
        except ValueError as exc:
            raise FormatError(f"segment row {i}: {exc}") from None
        texts.append(r["step_text"])
        segs.append((s, e))
    return texts, SegmentList(segs, rate or 10.0).check()


def write_segments(path, step_texts, segments):
    atomic_write(path, format_segments(step_texts, segments))


def read_segments(path, fps=None):
    return parse_segments(read_text(path), fps)


LABEL_COLUMNS = ("frame", "step")


def format_frame_labels(labels):
    """Per-frame step labels (0 = dropped / background) as CSV."""
    return _csv_text(LABEL_COLUMNS, [[i, int(k)] for i, k in enumerate(labels)])


def parse_frame_labels(text):
    rows = _csv_rows(text, LABEL_COLUMNS)
    out = []
    for i, r in enumerate(rows):
        try:
            if int(r["frame"]) != i:
                raise FormatError(f"frame column must count from 0 (row {i + 1})")
            out.append(int(r["step"]))
        except ValueError as exc:
            raise FormatError(f"label row {i + 1}: {exc}") from None
    return np.array(out, dtype=int)


def csv_kind(text):
    """'segments', 'labels' or 'protocol' judging by the header row."""
    head = next(csv.reader(io.StringIO(text)), None)
    if head is None:
        raise FormatError("empty CSV")
    cols = set(head)
    if set(SEGMENT_COLUMNS) <= cols:
        return "segments"
    if set(LABEL_COLUMNS) <= cols:
        return "labels"
    if set(PROTOCOL_COLUMNS[:2]) <= cols:
        return "protocol"
    raise FormatError(f"unrecognised CSV header {head}")


class Protocol:
    """Ordered step texts with optional ground-truth times in seconds."""

    def __init__(self, steps, gt=None):
        self.steps = list(steps)
        self.gt = gt  # list of (start_sec, end_sec) or None
        if gt is not None:
            if len(gt) != len(self.steps):
                raise FormatError("ground truth must cover every step")
            for s, e in gt:
                if s > e:
                    raise FormatError(f"ground-truth span ({s}, {e}) is reversed")
            for (_, e), (s, _) in zip(gt, gt[1:]):
                if not e < s:
                    raise FormatError("ground-truth spans overlap or are out of order")

    def __len__(self):
        return len(self.steps)

    def gt_segments(self, fps):
        if self.gt is None:
            raise FormatError("protocol has no ground-truth columns")
        return SegmentList([(sec_to_frame(s, fps), sec_to_frame(e, fps)) for s, e in self.gt], fps)


def format_protocol(protocol):
    if protocol.gt is None:
        return _csv_text(PROTOCOL_COLUMNS[:2], [[k, t] for k, t in enumerate(protocol.steps, start=1)])
    rows = [[k, t, fnum(s), fnum(e)]
            for k, (t, (s, e)) in enumerate(zip(protocol.steps, protocol.gt), start=1)]
    return _csv_text(PROTOCOL_COLUMNS, rows)


def parse_protocol(text):
    rows = _csv_rows(text, PROTOCOL_COLUMNS[:2])
    steps, gt = [], []
    has_gt = bool(rows) and "gt_start_sec" in rows[0] and "gt_end_sec" in rows[0]
    for i, r in enumerate(rows, start=1):
        try:
            if int(r["step_index"]) != i:
                raise FormatError(f"step_index must be dense from 1 (row {i})")
            if has_gt:
                gt.append((float(r["gt_start_sec"]), float(r["gt_end_sec"])))
        except ValueError as exc:
            raise FormatError(f"protocol row {i}: {exc}") from None
        steps.append(r["step_text"])
    if not steps:
        raise FormatError("protocol has no steps")
    return Protocol(steps, gt if has_gt else None)


def write_protocol(path, protocol):
    atomic_write(path, format_protocol(protocol))


def read_protocol(path):
    return parse_protocol(read_text(path))


def protocol_track(protocol):
    """Ground-truth times as an annotation track keyed by step index."""
    if protocol.gt is None:
        raise FormatError("protocol has no ground-truth columns")
    return AnnotationTrack([(k, s, e) for k, (s, e) in enumerate(protocol.gt, start=1)])


def adapt_protocol(text, mapping):
    """Rename arbitrary CSV columns into the protocol layout.

    ``mapping`` maps our column names to the source's, e.g.
    {"step_text": "Description", "gt_start_sec": "Start"}. A missing
    ``step_index`` mapping numbers rows from 1.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise FormatError("CSV has no header row")
    unknown = set(mapping) - set(PROTOCOL_COLUMNS)
    if unknown:
        raise FormatError(f"unknown target columns {sorted(unknown)}")
    absent = [src for src in mapping.values() if src not in reader.fieldnames]
    if absent:
        raise FormatError(f"source CSV lacks columns {absent}")
    if "step_text" not in mapping:
        raise FormatError("mapping must name the step_text column")
    has_gt = "gt_start_sec" in mapping and "gt_end_sec" in mapping
    steps, gt = [], []
    for r in reader:
        steps.append(r[mapping["step_text"]])
        if has_gt:
            try:
                gt.append((float(r[mapping["gt_start_sec"]]), float(r[mapping["gt_end_sec"]])))
            except ValueError as exc:
                raise FormatError(str(exc)) from None
    if "step_index" in mapping:
        reader = csv.DictReader(io.StringIO(text))
        order = [int(r[mapping["step_index"]]) for r in reader]
        perm = sorted(range(len(order)), key=order.__getitem__)
        steps = [steps[i] for i in perm]
        gt = [gt[i] for i in perm] if has_gt else gt
    return Protocol(steps, gt if has_gt else None)


# --- small JSON documents ----------------------------------------------------------

def read_name_map(path):
    d = load_json(path)
    if not isinstance(d, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in d.items()):
        raise FormatError(f"{path}: name map must be an object of strings")
    return d


def write_name_map(path, mapping):
    atomic_write(path, dump_json(dict(mapping)))


def write_metrics(path, report):
    atomic_write(path, dump_json(report.as_dict()))


def format_names(frames, names):
    """Per-sampled-frame name sets as JSON lines {"frame", "names"}."""
    return "".join(json.dumps({"frame": int(f), "names": list(n)}, ensure_ascii=False) + "\n"
                   for f, n in zip(frames, names))


def parse_names(text, n_frames=None):
    """Inverse of format_names; frames not listed get an empty set when n_frames is given."""
    recs = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    if n_frames is None:
        return [int(r["frame"]) for r in recs], [tuple(r["names"]) for r in recs]
    out = [()] * n_frames
    for r in recs:
        f = int(r["frame"])
        if not 0 <= f < n_frames:
            raise FormatError(f"name record for frame {f} outside [0, {n_frames})")
        out[f] = tuple(sorted(set(r["names"])))
    return out

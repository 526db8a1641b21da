"""qrsl command-line interface.

Exit codes: 0 ok, 2 bad configuration or arguments, 3 I/O or malformed
input file, 4 infeasible alignment. Errors are also printed to stderr as
one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import io as qio
from . import pipeline
from .evaluation import (AnnotationTrack, FrameLabeling, NoCommonSteps, agreement_tiou,
                         compute_metrics, segments_to_frame_labels)
from .labeling import NoPositives, build_dictionary, label_video
from .localization import FusionConfig, Infeasible, ToyHashEmbedder, localize

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INFEASIBLE = 0, 2, 3, 4


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _warn(msg):
    print(msg, file=sys.stderr)


def _threads():
    return pipeline.thread_count()


def _embedder(args, dim):
    if args.embedder == "table":
        if not args.table:
            raise UsageError("--embedder table needs --table PATH")
        emb = qio.read_table(args.table)
        if emb.dim != dim:
            raise UsageError(f"table is {emb.dim}-d but embeddings are {dim}-d")
        return emb
    return ToyHashEmbedder(dim)


def _fusion(args):
    try:
        return FusionConfig(args.lam, args.percentile)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load_spans(path, fps):
    """Step spans in frames from a segments, labels or protocol CSV."""
    text = qio.read_text(path)
    kind = qio.csv_kind(text)
    if kind == "segments":
        _, segs = qio.parse_segments(text, fps)
        return kind, segs
    if kind == "labels":
        return kind, qio.parse_frame_labels(text)
    return kind, qio.parse_protocol(text).gt_segments(fps)


def _labeling(kind, value, n_frames, n_steps):
    if kind == "labels":
        if value.size != n_frames:
            raise qio.FormatError(f"label file has {value.size} frames, expected {n_frames}")
        return FrameLabeling(value, n_steps)
    return segments_to_frame_labels(value, n_frames, n_steps)


def _n_steps(kind, value):
    if kind == "labels":
        return int(value.max()) if value.size else 0
    return len(value.segments)


def _span_end(kind, value):
    if kind == "labels":
        return value.size
    return max((e + 1 for _, e in value.segments), default=0)


def _track(path):
    """Annotation track (step index, start sec, end sec) from a segments or protocol CSV."""
    text = qio.read_text(path)
    kind = qio.csv_kind(text)
    if kind == "segments":
        rows = qio._csv_rows(text, qio.SEGMENT_COLUMNS)
        return AnnotationTrack([(int(r["step_index"]), float(r["start_sec"]), float(r["end_sec"]))
                                for r in rows])
    if kind == "protocol":
        return qio.protocol_track(qio.parse_protocol(text))
    raise qio.FormatError(f"{path}: agreement needs timestamps, got a {kind} file")


# --- commands ---------------------------------------------------------------------

def cmd_gen(args):
    run = pipeline.load_config(args.config)
    written = pipeline.generate(run, args.seed, args.out, _threads())
    print(f"wrote {len(written)} files to {args.out}")


def cmd_decode(args):
    frames = qio.frame_paths(args.frames)
    if not frames:
        raise OSError(f"no .pgm frames in {args.frames}")
    boxes = qio.read_detections(args.detections) if args.detections else None
    name_map = qio.read_name_map(args.names) if args.names else None
    dets = pipeline.decode_frames(frames, boxes, name_map, args.threshold, _threads(), _warn)
    qio.write_detections(args.out, dets)
    _warn("decode: " + pipeline.failure_summary(dets))


def cmd_features(args):
    frames = qio.frame_paths(args.frames)
    dets = qio.read_detections(args.detections)
    qio.write_matrix(args.out, pipeline.compute_features(frames, dets, _threads()))


def _dets_and_features(args):
    dets = qio.read_detections(args.detections)
    feats = qio.read_matrix(args.features)
    if feats.shape[0] != len(dets):
        raise qio.FormatError(f"{feats.shape[0]} feature rows for {len(dets)} detections")
    return dets, feats


def cmd_dict(args):
    dets, feats = _dets_and_features(args)
    d = build_dictionary(zip(dets, feats))
    qio.write_dictionary(args.out, d)
    _warn(f"dict: {len(d)} objects from {sum(e.count for e in d.entries.values())} positives")


def cmd_link(args):
    dets, feats = _dets_and_features(args)
    dictionary = qio.read_dictionary(args.dictionary)
    if feats.shape[0] and feats.shape[1] != dictionary.dim:
        raise qio.FormatError(f"features are {feats.shape[1]}-d, dictionary {dictionary.dim}-d")
    n = args.n_frames
    if n is None:
        n = max((d.frame_idx for d in dets), default=-1) + 1
    labels = label_video(dets, feats, dictionary, n, args.fps, args.sample_fps, args.min_sim)
    qio.atomic_write(args.out, qio.format_names(labels.frames, labels.names))
    linked = sum(lab.source.value == "DictionaryLinked" and lab.assigned_name is not None
                 for lab in labels.labeled)
    _warn(f"link: {len(labels.frames)} sampled frames, {linked} detections linked via dictionary")


def cmd_localize(args):
    protocol = qio.read_protocol(args.protocol)
    F = qio.read_matrix(args.embeddings)
    if args.names:
        frames, names = qio.parse_names(qio.read_text(args.names))
        names = pipeline.names_for_rows(frames, names, F.shape[0])
    else:
        names = [()] * F.shape[0]
    loc = localize(protocol.steps, F, names, _embedder(args, F.shape[1]), _fusion(args), args.fps)
    qio.write_segments(args.out, protocol.steps, loc.segments)
    if args.labels_out:
        qio.atomic_write(args.labels_out, qio.format_frame_labels(loc.alignment.assignment))


def cmd_eval(args):
    pk, pv = _load_spans(args.pred, args.fps)
    gk, gv = _load_spans(args.gt, args.fps)
    K = _n_steps(gk, gv)
    if pk != "labels" and _n_steps(pk, pv) != K:
        raise qio.FormatError(f"prediction has {_n_steps(pk, pv)} steps, ground truth {K}")
    n = args.n_frames
    if n is None:
        n = max(_span_end(pk, pv), _span_end(gk, gv))
    report = compute_metrics(_labeling(pk, pv, n, K), _labeling(gk, gv, n, K))
    if args.out:
        qio.write_metrics(args.out, report)
    print(report.table(args.title))


def cmd_agreement(args):
    value = agreement_tiou(_track(args.a), _track(args.b))
    print(f"{value:.1f}")


def cmd_adapt(args):
    mapping = qio.load_json(args.mapping)
    if not isinstance(mapping, dict):
        raise UsageError("column mapping must be a JSON object")
    protocol = qio.adapt_protocol(qio.read_text(args.csv), mapping)
    qio.write_protocol(args.out, protocol)


def cmd_run(args):
    cfg = None
    if args.config:
        try:
            cfg = json.loads(qio.read_text(args.config))
        except json.JSONDecodeError as e:
            raise pipeline.ConfigError(f"{args.config}: {e}") from None
    report = pipeline.run_pipeline(args.out, cfg, args.seed, args.lam, args.percentile,
                                   args.sample_fps, args.min_sim, _threads(), _warn)
    print(report.table(f"lambda={args.lam:g}"))


# --- argument parsing ---------------------------------------------------------------

def _add_fusion_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--percentile", type=float, default=0.75)


def build_parser():
    ap = _Parser(prog="qrsl", description="Micro QR object labeling and step localization.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="render a synthetic scene")
    p.add_argument("config")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decode", help="read Micro QR tags in frames")
    p.add_argument("frames")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--detections", help="hand-object boxes (JSONL); whole frames are searched if absent")
    p.add_argument("--names", help="QR payload -> object name map (JSON)")
    p.add_argument("--threshold", type=float, default=None, help="fixed binarisation threshold")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("features", help="appearance descriptors for detections")
    p.add_argument("frames")
    p.add_argument("detections")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("dict", help="build the object dictionary from decoded detections")
    p.add_argument("detections")
    p.add_argument("features")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_dict)

    p = sub.add_parser("link", help="per-frame object names via QR reads and dictionary linking")
    p.add_argument("detections")
    p.add_argument("features")
    p.add_argument("dictionary")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--sample-fps", type=float, default=10.0)
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--min-sim", type=float, default=None)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("localize", help="align protocol steps to frame embeddings")
    p.add_argument("protocol")
    p.add_argument("embeddings")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--names", help="per-frame names (JSONL from link)")
    p.add_argument("--labels-out", help="also write per-frame labels (0 = dropped)")
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--embedder", choices=("toy", "table"), default="toy")
    p.add_argument("--table")
    _add_fusion_flags(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="MoF / precision / recall / tIoU")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("-o", "--out")
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--title", default="result")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("agreement", help="tIoU between two annotation CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("adapt", help="rename dataset CSV columns into the protocol layout")
    p.add_argument("csv")
    p.add_argument("mapping")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("run", help="whole pipeline on a scene config (bundled fixture by default)")
    p.add_argument("out")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-fps", type=float, default=10.0)
    p.add_argument("--min-sim", type=float, default=None)
    _add_fusion_flags(p)
    p.set_defaults(func=cmd_run)
    return ap


def _fail(code, exc):
    msg = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
    err = {"error": type(exc).__name__, "message": msg, "exit_code": code}
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        for name in ("fps", "sample_fps"):
            v = getattr(args, name, None)
            if v is not None and not v > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be > 0")
        if getattr(args, "seed", 0) < 0:
            raise UsageError("--seed must be >= 0")
        args.func(args)
    except Infeasible as e:
        return _fail(EXIT_INFEASIBLE, e)
    except (qio.FormatError, OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        return _fail(EXIT_IO, e)
    except (UsageError, pipeline.ConfigError, NoPositives, NoCommonSteps, ValueError, KeyError) as e:
        return _fail(EXIT_CONFIG, e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

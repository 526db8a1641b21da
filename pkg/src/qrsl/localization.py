"""Step localization: object-name fusion, cosine costs and Drop-DTW alignment.

Frames may be dropped at a fixed cost; every protocol step must be matched
to at least one frame, in protocol order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

DROP = 0

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class DimensionMismatch(ValueError):
    pass


class UnknownName(KeyError):
    pass


class Infeasible(ValueError):
    pass


def fnv1a64(data):
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


_TOKEN = re.compile(r"[^\s,;:()\[\]\"'!?]+")


def tokenize(text):
    return [t.rstrip(".") for t in _TOKEN.findall(text) if t.rstrip(".")]


class ToyHashEmbedder:
    """Deterministic stand-in text encoder.

    A name maps to a unit Gaussian vector seeded by the FNV-1a hash of its
    UTF-8 bytes. Longer texts embed as the normalised sum of their token
    vectors, so a step that mentions an object shares direction with it.
    """

    kind = "toy"

    def __init__(self, dim=80):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self._cache = {}

    def name_vector(self, name):
        v = self._cache.get(name)
        if v is None:
            rng = np.random.default_rng(fnv1a64(name.encode("utf-8")))
            v = rng.standard_normal(self.dim)
            v /= np.linalg.norm(v)
            v.setflags(write=False)
            self._cache[name] = v
        return v

    def embed_text(self, text):
        tokens = tokenize(text)
        if not tokens:
            return np.zeros(self.dim)
        v = np.sum([self.name_vector(t) for t in tokens], axis=0)
        n = np.linalg.norm(v)
        return v / n if n > 0 else v


class TableEmbedder:
    """Looks names and step texts up in a precomputed vector table."""

    kind = "table"

    def __init__(self, vectors, dim=None):
        vectors = {k: np.asarray(v, dtype=float) for k, v in vectors.items()}
        dims = {v.shape[0] for v in vectors.values()}
        if dim is None:
            if len(dims) != 1:
                raise DimensionMismatch("table vectors have inconsistent dimensions")
            dim = dims.pop()
        elif dims - {dim}:
            raise DimensionMismatch(f"table vectors are not all {dim}-d")
        self.dim = dim
        self.vectors = vectors

    def name_vector(self, name):
        try:
            return self.vectors[name]
        except KeyError:
            raise UnknownName(name) from None

    embed_text = name_vector


def embed_names(names, embedder):
    """Unit vectors for ``names`` as an (n, D) array."""
    if not names:
        return np.zeros((0, embedder.dim))
    return np.stack([embedder.name_vector(n) for n in names])


def embed_steps(step_texts, embedder):
    return np.stack([embedder.embed_text(t) for t in step_texts])


@dataclass(frozen=True)
class FusionConfig:
    lam: float = 0.5
    percentile: float = 0.75

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lambda must be finite and >= 0")
        if not 0 <= self.percentile <= 1:
            raise ValueError("percentile must be in [0, 1]")


def name_sum(names_per_frame, embedder, n_frames=None):
    """E: per-frame sum of name embeddings (zero rows for empty frames)."""
    n = len(names_per_frame) if n_frames is None else n_frames
    E = np.zeros((n, embedder.dim))
    for i, names in enumerate(names_per_frame):
        for name in names:
            E[i] += embedder.name_vector(name)
    return E


def fuse(F, names_per_frame, embedder, lam):
    """V = F + lam * E."""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2:
        raise DimensionMismatch("frame embeddings must be an N x D matrix")
    if len(names_per_frame) != F.shape[0]:
        raise DimensionMismatch(f"{len(names_per_frame)} name sets for {F.shape[0]} frames")
    if embedder.dim != F.shape[1]:
        raise DimensionMismatch(f"name embeddings are {embedder.dim}-d, frames {F.shape[1]}-d")
    if lam == 0:
        return F.copy()
    return F + lam * name_sum(names_per_frame, embedder, F.shape[0])


def cost_matrix(V, S):
    """C[k, n] = 1 - cos(S_k, V_n); zero vectors count as cos = 0."""
    V = np.asarray(V, dtype=float)
    S = np.asarray(S, dtype=float)
    if V.ndim != 2 or S.ndim != 2 or V.shape[1] != S.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {S.shape} and {V.shape}")
    if not (np.isfinite(V).all() and np.isfinite(S).all()):
        raise ValueError("embeddings must be finite")
    vn = np.linalg.norm(V, axis=1)
    sn = np.linalg.norm(S, axis=1)
    Vu = np.divide(V, vn[:, None], out=np.zeros_like(V), where=vn[:, None] > 0)
    Su = np.divide(S, sn[:, None], out=np.zeros_like(S), where=sn[:, None] > 0)
    return 1.0 - Su @ Vu.T


def drop_cost(C, percentile=0.75):
    """Nearest-rank percentile of all entries of C."""
    vals = np.sort(np.asarray(C, dtype=float).ravel())
    if vals.size == 0:
        raise ValueError("cost matrix is empty")
    rank = max(1, math.ceil(percentile * vals.size - 1e-12))
    return float(vals[rank - 1])


@dataclass
class AlignmentResult:
    assignment: np.ndarray  # per frame: step 1..K or DROP (0)
    total_cost: float
    drop_cost: float
    n_steps: int

    def recomputed_cost(self, C):
        cost = 0.0
        for n, k in enumerate(self.assignment):
            cost += self.drop_cost if k == DROP else C[k - 1, n]
        return cost


def align(C, d):
    """Drop-DTW with mandatory, ordered steps.

    dp[k][n] is the best cost of frames 1..n with steps 1..k each matched at
    least once; frames may be dropped at cost ``d``. Backtracking prefers
    continuing the current step, then starting it, then dropping.
    """
    C = np.asarray(C, dtype=float)
    K, N = C.shape
    if K < 1:
        raise ValueError("need at least one step")
    if K > N:
        raise Infeasible(f"{K} steps cannot each match one of {N} frames")
    inf = math.inf
    dp = np.full((K + 1, N + 1), inf)
    dp[0, 0] = 0.0
    for n in range(1, N + 1):
        prev = dp[:, n - 1]
        c = C[:, n - 1]
        col = np.empty(K + 1)
        col[0] = prev[0] + d
        col[1:] = np.minimum(np.minimum(prev[1:] + d, prev[1:] + c), prev[:-1] + c)
        dp[:, n] = col

    assignment = np.zeros(N, dtype=int)
    k, n = K, N
    while n > 0:
        here = dp[k, n]
        c = C[k - 1, n - 1] if k > 0 else None
        if k > 0 and dp[k, n - 1] + c == here:
            assignment[n - 1] = k
        elif k > 0 and dp[k - 1, n - 1] + c == here:
            assignment[n - 1] = k
            k -= 1
        else:
            assignment[n - 1] = DROP
        n -= 1
    return AlignmentResult(assignment, float(dp[K, N]), float(d), K)


@dataclass
class SegmentList:
    segments: list  # (start_frame, end_frame) per step, inclusive
    fps: float = 10.0

    def seconds(self):
        return [(s / self.fps, e / self.fps) for s, e in self.segments]

    def __len__(self):
        return len(self.segments)

    def check(self):
        for s, e in self.segments:
            if s > e:
                raise ValueError(f"segment ({s}, {e}) is reversed")
        for (_, e), (s, _) in zip(self.segments, self.segments[1:]):
            if not e < s:
                raise ValueError("segments overlap or are out of order")
        return self


def extract_segments(result, fps=10.0):
    """First-to-last matched frame per step; interior drops fall inside the span."""
    a = np.asarray(result.assignment)
    segments = []
    for k in range(1, result.n_steps + 1):
        idx = np.flatnonzero(a == k)
        segments.append((int(idx[0]), int(idx[-1])))
    return SegmentList(segments, fps)


@dataclass
class Localization:
    segments: SegmentList
    alignment: AlignmentResult
    costs: np.ndarray


def localize(step_texts, F, names_per_frame, embedder, cfg=FusionConfig(), fps=10.0):
    """Embed steps, fuse object names into frames, align, return segments."""
    S = embed_steps(step_texts, embedder)
    V = fuse(F, names_per_frame, embedder, cfg.lam)
    C = cost_matrix(V, S)
    d = drop_cost(C, cfg.percentile)
    result = align(C, d)
    return Localization(extract_segments(result, fps), result, C)

"""Grayscale rasters: symbol rendering, resampling and PGM files.

A raster is a 2-D ``uint8`` numpy array indexed ``[row, col]``; 0 is black.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"bbox needs w, h >= 1, got {self}")

    def inside(self, raster):
        H, W = raster.shape[:2]
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= W and self.y + self.h <= H

    def crop(self, raster):
        return raster[self.y:self.y + self.h, self.x:self.x + self.w]

    def shifted(self, dx, dy):
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def iou(self, other):
        ix = max(0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        union = self.w * self.h + other.w * other.h - inter
        return inter / union

    def as_list(self):
        return [self.x, self.y, self.w, self.h]


def clip_bbox(x0, y0, x1, y1, shape):
    """Integer bbox covering [x0, x1) x [y0, y1) clipped to ``shape``; None if empty."""
    H, W = shape[:2]
    xa = max(0, int(np.floor(x0)))
    ya = max(0, int(np.floor(y0)))
    xb = min(W, int(np.ceil(x1)))
    yb = min(H, int(np.ceil(y1)))
    if xb - xa < 1 or yb - ya < 1:
        return None
    return BBox(xa, ya, xb - xa, yb - ya)


def to_uint8(a):
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def rasterize_symbol(symbol, module_px=4, quiet_zone_modules=2):
    """Render a symbol at an integer module size: dark -> 0, light -> 255."""
    if module_px < 1:
        raise ValueError("module_px must be >= 1")
    if quiet_zone_modules < 2:
        raise ValueError("quiet zone must be at least 2 modules")
    m = symbol.modules if hasattr(symbol, "modules") else np.asarray(symbol, dtype=bool)
    padded = np.pad(m, quiet_zone_modules, constant_values=False)
    img = np.where(padded, 0, 255).astype(np.uint8)
    return np.kron(img, np.ones((module_px, module_px), dtype=np.uint8))


def sample_modules(raster, side, origin=(0.0, 0.0), module_px=1.0, threshold=128):
    """Sample a ``side``x``side`` grid at module centres; True where dark."""
    ox, oy = origin
    centers = (np.arange(side) + 0.5) * module_px
    rows = oy + centers - 0.5
    cols = ox + centers - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    vals = ndimage.map_coordinates(raster.astype(float), [rr, cc], order=1, mode="nearest")
    return vals < threshold


def _coverage(n_pixels, start, step, n_cells):
    """Overlap of pixel [p, p+1) with cell [start + k*step, start + (k+1)*step)."""
    edges = start + step * np.arange(n_cells + 1)
    lo = np.maximum(np.arange(n_pixels)[:, None], edges[None, :-1])
    hi = np.minimum(np.arange(n_pixels)[:, None] + 1, edges[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def paint_grid(canvas, values, x, y, cell_px):
    """Composite a grid of intensities onto ``canvas`` with exact area coverage.

    The grid's top-left corner sits at fractional pixel position (x, y) and
    each cell is ``cell_px`` pixels wide, so sub-pixel cells blend into
    their neighbours the way a camera sensor integrates them.
    """
    values = np.asarray(values, dtype=float)
    H, W = canvas.shape
    wr = _coverage(H, y, cell_px, values.shape[0])
    wc = _coverage(W, x, cell_px, values.shape[1])
    painted = wr @ values @ wc.T
    cover = np.outer(wr.sum(1), wc.sum(1))
    out = canvas.astype(float) * (1.0 - cover) + painted
    return out


def place_symbol(canvas, symbol, x, y, size_px, quiet_zone_modules=2):
    """Draw ``symbol`` (plus white quiet zone) with its top-left module corner at (x, y).

    ``size_px`` is the symbol side without quiet zone and may be fractional.
    Returns a float canvas.
    """
    m = symbol.modules if hasattr(symbol, "modules") else np.asarray(symbol, dtype=bool)
    q = quiet_zone_modules
    module = size_px / m.shape[0]
    grid = np.where(np.pad(m, q, constant_values=False), 0.0, 255.0)
    return paint_grid(canvas, grid, x - q * module, y - q * module, module)


def resample_bilinear(raster, out_shape):
    """Bilinear resampling with pixel-centre alignment."""
    H, W = raster.shape
    h, w = out_shape
    rows = (np.arange(h) + 0.5) * (H / h) - 0.5
    cols = (np.arange(w) + 0.5) * (W / w) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(raster.astype(float), [rr, cc], order=1, mode="nearest")


def otsu_threshold(values):
    """Otsu's threshold on 8-bit intensities; pixels < t count as dark."""
    v = np.asarray(values).ravel()
    hist = np.bincount(np.clip(v, 0, 255).astype(np.int64), minlength=256).astype(float)
    total = hist.sum()
    if total == 0:
        return 128
    levels = np.arange(256)
    w0 = np.cumsum(hist)
    w1 = total - w0
    s0 = np.cumsum(hist * levels)
    mu_t = s0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = s0 / w0
        m1 = (mu_t - s0) / w1
        between = w0 * w1 * (m0 - m1) ** 2
    between[~np.isfinite(between)] = -1
    k = int(np.argmax(between))
    if between[k] <= 0:
        return 128
    # dark = value <= k
    return k + 1


# --- PGM (P5) ----------------------------------------------------------------

def write_pgm(path, raster):
    raster = np.asarray(raster, dtype=np.uint8)
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def _pgm_tokens(buf):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(buf) and chr(buf[pos]).isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not chr(buf[pos]).isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(buf[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pgm(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens, offset = _pgm_tokens(buf)
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=offset)
    return data.reshape(h, w).copy()

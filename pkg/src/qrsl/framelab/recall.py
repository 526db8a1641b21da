"""Detection recall as a function of printed tag size and blur."""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from ..codec import EcLevel, MicroQrVersion, encode
from .degrade import DegradationSpec, degrade
from .detect import detect_and_decode
from .raster import place_symbol, to_uint8
from .scene import DEFAULT_PX_PER_CM, frame_seed

DEFAULT_BLUR_GRID = tuple(DegradationSpec(gaussian_sigma=s) for s in (0.0, 0.6, 1.2, 1.8))

_NAME_CHARS = string.ascii_uppercase + string.digits


@dataclass
class RecallTable:
    sizes: tuple
    grid: tuple
    hits: np.ndarray  # [size, grid cell]
    trials: int

    @property
    def cells(self):
        """Recall % per (size, grid cell)."""
        return 100.0 * self.hits / self.trials

    def by_size(self):
        return {s: 100.0 * self.hits[i].sum() / (self.trials * len(self.grid))
                for i, s in enumerate(self.sizes)}

    def format(self):
        lines = ["size  " + "  ".join(f"s={g.gaussian_sigma:<4g}" for g in self.grid) + "   total"]
        totals = self.by_size()
        for i, s in enumerate(self.sizes):
            row = "  ".join(f"{v:6.1f}" for v in self.cells[i])
            lines.append(f"{s}cm   {row}   {totals[s]:5.1f}")
        return "\n".join(lines)


def _trial_name(rng):
    return "".join(rng.choice(list(_NAME_CHARS), size=3))


def recall_trial(size_cm, spec, trial_seed, px_per_cm=DEFAULT_PX_PER_CM):
    """Render one tag of ``size_cm`` in a small frame, degrade, try to read it."""
    rng = np.random.default_rng(trial_seed)
    name = _trial_name(rng)
    symbol = encode(name, MicroQrVersion.M2, EcLevel.L)
    qr_px = size_cm * px_per_cm
    side = int(np.ceil(qr_px * 1.6)) + 16
    x = rng.uniform(6, side - qr_px - 6)
    y = rng.uniform(6, side - qr_px - 6)
    canvas = np.full((side, side), 215.0)
    raster = degrade(to_uint8(place_symbol(canvas, symbol, x, y, qr_px)), spec, seed=trial_seed)
    return any(d.name == name for d in detect_and_decode(raster))


def recall_study(sizes=(1, 2, 3), grid=DEFAULT_BLUR_GRID, trials=100, seed=0,
                 px_per_cm=DEFAULT_PX_PER_CM):
    """Recall per (size, degradation) over ``trials`` renders per cell.

    The same trial seeds are reused across sizes and grid cells so that
    differences between cells are not sampling noise.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = tuple(sizes)
    grid = tuple(grid)
    hits = np.zeros((len(sizes), len(grid)), dtype=int)
    for t in range(trials):
        ts = frame_seed(seed, t)
        for i, s in enumerate(sizes):
            for j, g in enumerate(grid):
                hits[i, j] += recall_trial(s, g, ts, px_per_cm)
    return RecallTable(sizes, grid, hits, trials)

"""Precision accounting and grid quantization.

The information content of a continuous dimension is log2 of the ratio
between its domain supremum and the smallest nonzero spacing; matching
it with discrete tokens requires an exponentially growing vocabulary.
Quantization snaps layout coordinates onto the 2^b + 1 boundary-
inclusive uniform grid lines over [0, coord_max], which is how the
functional-failure experiments degrade a dataset to b bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .drc import GRID, LayoutSample, Rect


@dataclass(frozen=True)
class PrecisionSpec:
    x_max: float
    dx: float
    bits: int | None = None

    def __post_init__(self):
        if self.x_max <= 0:
            raise ValueError("x_max must be > 0")
        if self.dx <= 0:
            raise ValueError("dx must be > 0")
        if self.dx > self.x_max:
            raise ValueError("dx must be <= x_max")


def precision_bits(x_max: float, dx: float) -> float:
    """log2(x_max / dx), the bits needed to resolve the dimension."""
    spec = PrecisionSpec(x_max=x_max, dx=dx)
    return math.log2(spec.x_max / spec.dx)


def required_vocab(p: float) -> int:
    """Tokens needed for p bits of resolution: ceil(2^p).

    Values within 1e-9 relative of an integer round to it, so that
    required_vocab(precision_bits(n, 1)) returns n exactly.
    """
    if p < 0:
        raise ValueError("precision must be >= 0")
    v = 2.0 ** p
    nearest = round(v)
    if abs(v - nearest) <= 1e-9 * max(nearest, 1):
        return int(nearest)
    return int(math.ceil(v))


def _snap_level(v: float, step: float, levels: int) -> int:
    """Nearest grid line index, round-half-up, clamped into range."""
    lv = math.floor(v / step + 0.5)
    return min(max(lv, 0), levels)


def _level_coord(lv: int, step: float) -> int:
    # grid lines are fractional for some b; stored coordinates stay
    # integers, so each line rounds half-up to the nearest unit
    return int(math.floor(lv * step + 0.5))


def _quantize_span(lo: int, hi: int, step: float, levels: int) -> tuple[int, int]:
    lo_lv = _snap_level(lo, step, levels)
    hi_lv = _snap_level(hi, step, levels)
    if hi_lv <= lo_lv:           # zero-width spans widen to one grid step
        if lo_lv == levels:
            lo_lv -= 1
        hi_lv = lo_lv + 1
    lo_q = _level_coord(lo_lv, step)
    hi_q = _level_coord(hi_lv, step)
    if hi_q <= lo_q:             # sub-unit steps can collide after rounding
        hi_q = lo_q + 1
    return lo_q, hi_q


def quantize_rect(rect: Rect, bits: int, coord_max: int = GRID) -> Rect:
    step = coord_max / (2 ** bits)
    levels = 2 ** bits
    x1, x2 = _quantize_span(rect.x, rect.x2, step, levels)
    y1, y2 = _quantize_span(rect.y, rect.y2, step, levels)
    x2 = min(x2, coord_max)
    y2 = min(y2, coord_max)
    x1 = min(x1, x2 - 1)
    y1 = min(y1, y2 - 1)
    return Rect(layer=rect.layer, x=x1, y=y1, w=x2 - x1, h=y2 - y1)


def quantize_dataset(layouts, bits: int, coord_max: int = GRID) -> list[LayoutSample]:
    """Snap every layout to b bits of coordinate resolution.

    Idempotent at a fixed b; spans that collapse are widened to one
    grid step so rectangle invariants keep holding.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    return [LayoutSample.of(quantize_rect(r, bits, coord_max)
                            for r in layout.rects)
            for layout in layouts]

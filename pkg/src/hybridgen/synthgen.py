"""Seeded synthetic stand-in for the layout benchmark corpus.

Generates layouts that satisfy every design rule by construction: the
grid is divided into horizontal bands, each holding an x-disjoint row
of power segments, a separated row of wiring segments, and devices
placed on a spacing-respecting lattice inside a power segment. Per-
layer rectangle counts follow truncated normals matching the reported
corpus statistics, optionally shrunk to desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drc import (DEVICE_LAYER, GRID, POWER_LAYER, WIRING_LAYER, LayoutSample,
                  Rect)
from .schema import AtomicUnit, SchemaSpec, UnitSequence, denormalize, \
    layout_schema, normalize

CLASS_TO_LAYER = {0: POWER_LAYER, 1: WIRING_LAYER, 2: DEVICE_LAYER}
LAYER_TO_CLASS = {v: k for k, v in CLASS_TO_LAYER.items()}

# band geometry (grid units)
_MARGIN = 400
_POWER_H = 1400
_WIRING_H = 600
_BAND_GAP = 300
_PITCH = _POWER_H + _WIRING_H + 2 * _BAND_GAP
_BANDS = (GRID - 2 * _MARGIN) // _PITCH
_DEVICE_PITCH = 1200          # matches the minimum horizontal separation
_DEV_MIN, _DEV_MAX = 100, 400
_SEG_MIN, _SEG_GAP = 600, 100
_MAX_DEV_PER_BAND = 24
_ROW_LO, _ROW_HI = _MARGIN, GRID - _MARGIN


@dataclass(frozen=True)
class SynthConfig:
    """Per-layer count statistics (power, wiring, device order).

    ``shrink`` divides the means and deviations so sequences fit a
    desk-scale context window. ``min_devices`` keeps layouts clear of
    the spacing-score shortfall penalty; drop it to 1 when small
    layouts are wanted and the penalty does not matter.
    """

    means: tuple = (30.0, 116.0, 178.0)
    stds: tuple = (10.0, 92.0, 75.0)
    shrink: float = 1.0
    count: int = 1
    seed: int = 0
    min_devices: int = 20

    def __post_init__(self):
        if any(m <= 0 for m in self.means) or any(s < 0 for s in self.stds):
            raise ValueError("means must be > 0 and stds >= 0")
        if self.shrink < 1.0:
            raise ValueError("shrink must be >= 1")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.min_devices < 1:
            raise ValueError("min_devices must be >= 1")


@dataclass(frozen=True)
class LengthStats:
    mu: float
    sigma: float


def _draw_counts(cfg: SynthConfig, rng: np.random.Generator) -> tuple[int, int, int]:
    floors = (1, 1, cfg.min_devices)
    out = []
    for mean, std, floor in zip(cfg.means, cfg.stds, floors):
        draw = rng.normal(mean / cfg.shrink, std / cfg.shrink)
        out.append(max(floor, int(round(draw))))
    return tuple(out)


def _spread(total: int, bins: int) -> list[int]:
    """Round-robin allocation of ``total`` items over ``bins``."""
    base, extra = divmod(total, bins)
    return [base + (1 if i < extra else 0) for i in range(bins)]


def _split_row(rng: np.random.Generator, lo: int, hi: int, count: int,
               reserved: tuple | None = None) -> list[tuple[int, int]]:
    """Cut [lo, hi) into ``count`` disjoint segments with gaps.

    ``reserved`` fixes the length of the first segment (device host);
    the rest get the minimum length plus a random share of the slack.
    Returns None-equivalent [] when it cannot fit.
    """
    if count == 0:
        return []
    lengths = [_SEG_MIN] * count
    if reserved is not None:
        lengths[0] = reserved[0]
    width = hi - lo
    need = sum(lengths) + (count - 1) * _SEG_GAP
    slack = width - need
    if slack < 0:
        return []
    # split the slack into count growth shares + count+1 gap shares
    parts = 2 * count + 1
    cuts = np.sort(rng.integers(0, slack + 1, size=parts - 1))
    shares = np.diff(np.concatenate([[0], cuts, [slack]]))
    segments = []
    x = lo + int(shares[0])
    for i in range(count):
        length = lengths[i] + int(shares[1 + 2 * i])
        if reserved is not None and i == 0:
            length = lengths[0]          # keep the reserved span exact
            x = lo + int(shares[0])
        segments.append((x, x + length))
        x = x + length + _SEG_GAP + int(shares[2 + 2 * i])
    if segments[-1][1] > hi:
        return []
    return segments


def _generate_one(cfg: SynthConfig, rng: np.random.Generator) -> LayoutSample:
    for _attempt in range(20):
        n_power, n_wiring, n_device = _draw_counts(cfg, rng)
        power_bands = min(n_power, _BANDS)
        if n_device > power_bands * _MAX_DEV_PER_BAND:
            continue
        dev_alloc = _spread(n_device, power_bands)
        if max(dev_alloc) > _MAX_DEV_PER_BAND:
            continue
        pow_alloc = [0] * _BANDS
        for i, extra in enumerate(_spread(n_power, power_bands)):
            pow_alloc[i] = extra
        wire_alloc = _spread(n_wiring, _BANDS)

        rects: list[Rect] = []
        ok = True
        for band in range(_BANDS):
            y0 = _MARGIN + band * _PITCH
            d_b = dev_alloc[band] if band < power_bands else 0
            p_b = pow_alloc[band]
            reserved = None
            if d_b > 0:
                reserved = (d_b * _DEVICE_PITCH + 500,)
            segs = _split_row(rng, _ROW_LO, _ROW_HI, p_b, reserved=reserved)
            if p_b and not segs:
                ok = False
                break
            for i, (sx, sx2) in enumerate(segs):
                if i == 0 and d_b > 0:
                    h = _POWER_H          # device host spans the band
                    y = y0
                else:
                    h = int(rng.integers(400, _POWER_H + 1))
                    y = y0 + int(rng.integers(0, _POWER_H - h + 1))
                rects.append(Rect(POWER_LAYER, sx, y, sx2 - sx, h))
            if d_b > 0:
                sx, sx2 = segs[0]
                jitter_max = (sx2 - sx) - ((d_b - 1) * _DEVICE_PITCH + _DEV_MAX)
                jitter = int(rng.integers(0, min(jitter_max, _DEVICE_PITCH) + 1))
                for k in range(d_b):
                    w = int(rng.integers(_DEV_MIN, _DEV_MAX + 1))
                    h = int(rng.integers(_DEV_MIN, _DEV_MAX + 1))
                    x = sx + jitter + k * _DEVICE_PITCH
                    y = y0 + int(rng.integers(0, _POWER_H - h + 1))
                    rects.append(Rect(DEVICE_LAYER, x, y, w, h))
            w_b = wire_alloc[band]
            wy0 = y0 + _POWER_H + _BAND_GAP
            wsegs = _split_row(rng, _ROW_LO, _ROW_HI, w_b)
            if w_b and not wsegs:
                ok = False
                break
            for sx, sx2 in wsegs:
                h = int(rng.integers(200, _WIRING_H + 1))
                y = wy0 + int(rng.integers(0, _WIRING_H - h + 1))
                rects.append(Rect(WIRING_LAYER, sx, y, sx2 - sx, h))
        if ok:
            return LayoutSample.of(rects)
    raise RuntimeError("layout generation failed: counts do not fit the "
                       "spacing constraints after bounded retries")


def generate_layouts(cfg: SynthConfig) -> list[LayoutSample]:
    """Deterministic list of rule-satisfying layouts."""
    out = []
    for i in range(cfg.count):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(i,)))
        out.append(_generate_one(cfg, rng))
    return out


# ----------------------------------------------------------------------
# layout <-> sequence conversion
# ----------------------------------------------------------------------

def _sort_key(ordering: str):
    if ordering == "layer-raster":
        return lambda r: (LAYER_TO_CLASS[r.layer], r.y, r.x)
    if ordering == "raster":
        return lambda r: (r.y, r.x, LAYER_TO_CLASS[r.layer])
    raise ValueError(f"unknown ordering {ordering!r}")


def layouts_to_sequences(layouts, schema: SchemaSpec | None = None,
                         ordering: str = "layer-raster") -> list[UnitSequence]:
    """One atomic unit per rectangle, BOS/EOS framed, exactly invertible."""
    schema = schema or layout_schema()
    key = _sort_key(ordering)
    out = []
    for layout in layouts:
        units = [AtomicUnit.special(schema.bos_id, schema.cont_dim)]
        for r in sorted(layout.rects, key=key):
            raw = np.array([r.x, r.y, r.w, r.h], dtype=np.float64)
            units.append(AtomicUnit.of(LAYER_TO_CLASS[r.layer],
                                       normalize(raw, schema)))
        units.append(AtomicUnit.special(schema.eos_id, schema.cont_dim))
        out.append(UnitSequence.of(units))
    return out


def sequences_to_layouts(seqs, schema: SchemaSpec | None = None, *,
                         clamp: bool = False) -> list[LayoutSample]:
    """Inverse of :func:`layouts_to_sequences` (coordinates re-rounded
    to the integer grid). With ``clamp`` set, degenerate model outputs
    are forced into legal rectangles instead of raising."""
    schema = schema or layout_schema()
    out = []
    for seq in seqs:
        rects = []
        for u in seq.units:
            if schema.is_special(u.d):
                continue
            x, y, w, h = (int(round(v))
                          for v in denormalize(np.asarray(u.c), schema))
            if clamp:
                w = max(w, 1)
                h = max(h, 1)
                x = min(max(x, 0), GRID - w)
                y = min(max(y, 0), GRID - h)
            rects.append(Rect(CLASS_TO_LAYER[u.d], x, y, w, h))
        out.append(LayoutSample.of(rects))
    return out


def length_stats(generated, references,
                 schema: SchemaSpec | None = None) -> LengthStats:
    """Gaussian fit (sample mean, population std) of paired length errors."""
    schema = schema or layout_schema()
    generated = list(generated)
    references = list(references)
    if not generated or not references:
        raise ValueError("length_stats needs nonempty sequence lists")
    if len(generated) != len(references):
        raise ValueError("generated and reference lists must pair by index")
    diffs = np.array([g.length(schema) - r.length(schema)
                      for g, r in zip(generated, references)],
                     dtype=np.float64)
    return LengthStats(mu=float(diffs.mean()), sigma=float(diffs.std()))

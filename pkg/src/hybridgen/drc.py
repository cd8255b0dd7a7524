"""Exact-integer design-rule checks for rectangle layouts.

Four rules over the three layer kinds (power 515, wiring 644, device
1457), each normalized to [0, 1]:

* circuit linkage: no power/wiring overlap anywhere (power-wiring cross
  pairs and same-layer pairs); scored as the overlapped area divided by
  the union area of both layers,
* power delivery: every device rectangle must intersect the power layer
  with positive area; scored as the violating-device rate,
* horizontal / vertical spacing: device pairs aligned within an epsilon
  band on one axis must keep a minimum separation on the other; scored
  as the violation rate over aligned pairs, with a shortfall penalty
  for layouts carrying fewer devices than a threshold.

All areas and distances are exact integers; the overlap area uses a
coordinate-compression sweep.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

POWER_LAYER = 515
WIRING_LAYER = 644
DEVICE_LAYER = 1457
LAYERS = (POWER_LAYER, WIRING_LAYER, DEVICE_LAYER)
GRID = 40_000


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle on the integer grid; w, h > 0."""

    layer: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer {self.layer}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError("w and h must be > 0")
        if self.x < 0 or self.y < 0 or self.x + self.w > GRID \
                or self.y + self.h > GRID:
            raise ValueError("rectangle outside the grid")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h


@dataclass(frozen=True)
class LayoutSample:
    rects: tuple

    @staticmethod
    def of(rects) -> "LayoutSample":
        return LayoutSample(rects=tuple(rects))

    def by_layer(self, layer: int) -> list[Rect]:
        return [r for r in self.rects if r.layer == layer]

    def to_dict(self) -> dict:
        return {"rects": [{"layer": r.layer, "x": r.x, "y": r.y,
                           "w": r.w, "h": r.h} for r in self.rects]}

    @staticmethod
    def from_dict(rec: dict) -> "LayoutSample":
        return LayoutSample.of(
            Rect(layer=int(e["layer"]), x=int(e["x"]), y=int(e["y"]),
                 w=int(e["w"]), h=int(e["h"])) for e in rec["rects"])


@dataclass(frozen=True)
class DrcConfig:
    """Rule constants; the defaults match the benchmark settings."""

    alignment_eps: int = 240
    min_horizontal: int = 1200   # separation W for horizontally spread pairs
    min_vertical: int = 1000     # separation H for vertically spread pairs
    device_threshold: int = 20
    anchor: str = "corner"       # or "center"

    def __post_init__(self):
        if self.alignment_eps <= 0 or self.min_horizontal <= 0 \
                or self.min_vertical <= 0:
            raise ValueError("eps and minimum separations must be > 0")
        if self.device_threshold < 0:
            raise ValueError("device_threshold must be >= 0")
        if self.anchor not in ("corner", "center"):
            raise ValueError(f"unknown anchor {self.anchor!r}")


@dataclass
class RuleResult:
    score: float
    violations: list = field(default_factory=list)


@dataclass
class DrcReport:
    clc: float
    pdc: float
    hsc: float
    vsc: float
    clc_violations: list = field(default_factory=list)
    pdc_violations: list = field(default_factory=list)
    hsc_violations: list = field(default_factory=list)
    vsc_violations: list = field(default_factory=list)

    def scores(self) -> dict:
        return {"clc": self.clc, "pdc": self.pdc,
                "hsc": self.hsc, "vsc": self.vsc}

    def total_violations(self) -> int:
        return (len(self.clc_violations) + len(self.pdc_violations)
                + len(self.hsc_violations) + len(self.vsc_violations))


@dataclass
class DrcSummary:
    reports: list
    means: dict

    def to_dict(self) -> dict:
        return {
            "means": self.means,
            "samples": [{**r.scores(), "violations": r.total_violations()}
                        for r in self.reports],
        }


# ----------------------------------------------------------------------
# geometry primitives
# ----------------------------------------------------------------------

def intersection_box(a: Rect, b: Rect):
    """(x1, y1, x2, y2) of the positive-area intersection, or None."""
    x1 = max(a.x, b.x)
    y1 = max(a.y, b.y)
    x2 = min(a.x2, b.x2)
    y2 = min(a.y2, b.y2)
    if x2 > x1 and y2 > y1:
        return (x1, y1, x2, y2)
    return None


def union_area(boxes) -> int:
    """Exact union area of (x1, y1, x2, y2) integer boxes.

    Coordinate-compression sweep: for each x-strip between consecutive
    distinct x edges, merge the y-intervals of the boxes spanning the
    strip and accumulate covered-length times strip width.
    """
    boxes = [b for b in boxes if b[2] > b[0] and b[3] > b[1]]
    if not boxes:
        return 0
    xs = sorted({b[0] for b in boxes} | {b[2] for b in boxes})
    total = 0
    for x_lo, x_hi in zip(xs, xs[1:]):
        spans = sorted((b[1], b[3]) for b in boxes
                       if b[0] <= x_lo and b[2] >= x_hi)
        covered = 0
        cur_lo = cur_hi = None
        for y1, y2 in spans:
            if cur_hi is None or y1 > cur_hi:
                if cur_hi is not None:
                    covered += cur_hi - cur_lo
                cur_lo, cur_hi = y1, y2
            else:
                cur_hi = max(cur_hi, y2)
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        total += covered * (x_hi - x_lo)
    return total


def _rect_union_area(rects) -> int:
    return union_area([(r.x, r.y, r.x2, r.y2) for r in rects])


# ----------------------------------------------------------------------
# rules
# ----------------------------------------------------------------------

def clc(sample: LayoutSample, config: DrcConfig | None = None) -> RuleResult:
    """Circuit linkage: forbidden power/wiring overlap area, normalized
    by the union area of both layers."""
    indexed = [(i, r) for i, r in enumerate(sample.rects)
               if r.layer in (POWER_LAYER, WIRING_LAYER)]
    overlap_boxes = []
    violations = []
    if len(indexed) >= 2:
        # broadcast the pairwise intersection test; only pairs that
        # actually overlap are materialized
        x1 = np.array([r.x for _, r in indexed])
        y1 = np.array([r.y for _, r in indexed])
        x2 = np.array([r.x2 for _, r in indexed])
        y2 = np.array([r.y2 for _, r in indexed])
        iu, ju = np.triu_indices(len(indexed), k=1)
        ox1 = np.maximum(x1[iu], x1[ju])
        oy1 = np.maximum(y1[iu], y1[ju])
        ox2 = np.minimum(x2[iu], x2[ju])
        oy2 = np.minimum(y2[iu], y2[ju])
        hit = (ox2 > ox1) & (oy2 > oy1)
        for a, b, bx1, by1, bx2, by2 in zip(iu[hit], ju[hit], ox1[hit],
                                            oy1[hit], ox2[hit], oy2[hit]):
            overlap_boxes.append((int(bx1), int(by1), int(bx2), int(by2)))
            violations.append({"i": indexed[a][0], "j": indexed[b][0],
                               "area": int((bx2 - bx1) * (by2 - by1))})
    overlap = union_area(overlap_boxes)
    denom = _rect_union_area([r for _, r in indexed])
    score = overlap / denom if denom > 0 else 0.0
    return RuleResult(score=score, violations=violations)


def pdc(sample: LayoutSample, config: DrcConfig | None = None) -> RuleResult:
    """Power delivery: a device violates iff it has zero intersection
    area with the power layer."""
    power = sample.by_layer(POWER_LAYER)
    violations = []
    devices = [(i, r) for i, r in enumerate(sample.rects)
               if r.layer == DEVICE_LAYER]
    if devices and power:
        dx1 = np.array([r.x for _, r in devices])[:, None]
        dy1 = np.array([r.y for _, r in devices])[:, None]
        dx2 = np.array([r.x2 for _, r in devices])[:, None]
        dy2 = np.array([r.y2 for _, r in devices])[:, None]
        px1 = np.array([r.x for r in power])[None, :]
        py1 = np.array([r.y for r in power])[None, :]
        px2 = np.array([r.x2 for r in power])[None, :]
        py2 = np.array([r.y2 for r in power])[None, :]
        covered = ((np.minimum(dx2, px2) > np.maximum(dx1, px1))
                   & (np.minimum(dy2, py2) > np.maximum(dy1, py1))).any(axis=1)
        violations = [{"device": devices[k][0]}
                      for k in np.nonzero(~covered)[0]]
    elif devices:
        violations = [{"device": i} for i, _ in devices]
    score = len(violations) / len(devices) if devices else 0.0
    return RuleResult(score=score, violations=violations)


def _anchors(devices, config: DrcConfig) -> np.ndarray:
    """(n, 2) anchor coordinates, doubled so centers stay integral."""
    if config.anchor == "center":
        return np.array([[2 * r.x + r.w, 2 * r.y + r.h] for _, r in devices],
                        dtype=np.int64)
    return np.array([[2 * r.x, 2 * r.y] for _, r in devices], dtype=np.int64)


def _shortfall_penalty(score: float, count: int, config: DrcConfig) -> float:
    """Layouts with too few devices cannot earn a good spacing score."""
    if config.device_threshold > 0 and count < config.device_threshold:
        return max(score, (config.device_threshold - count)
                   / config.device_threshold)
    return score


def _spacing(sample: LayoutSample, config: DrcConfig, *, axis: int) -> RuleResult:
    """Shared pair logic; ``axis`` 0 checks horizontal separation of
    vertically aligned pairs, 1 vertical separation of horizontally
    aligned pairs."""
    devices = [(i, r) for i, r in enumerate(sample.rects)
               if r.layer == DEVICE_LAYER]
    n = len(devices)
    violations = []
    aligned = 0
    if n >= 2:
        pts = _anchors(devices, config)
        min_sep = 2 * (config.min_horizontal if axis == 0
                       else config.min_vertical)
        eps = 2 * config.alignment_eps
        gate_axis = 1 - axis
        diff_gate = np.abs(pts[:, gate_axis][:, None] - pts[:, gate_axis][None, :])
        diff_sep = np.abs(pts[:, axis][:, None] - pts[:, axis][None, :])
        iu, ju = np.triu_indices(n, k=1)
        gated = diff_gate[iu, ju] < eps
        aligned = int(gated.sum())
        bad = gated & (diff_sep[iu, ju] < min_sep)
        for a, b in zip(iu[bad], ju[bad]):
            violations.append({"i": devices[a][0], "j": devices[b][0],
                               "separation": int(diff_sep[a, b] // 2)})
    score = len(violations) / aligned if aligned else 0.0
    score = _shortfall_penalty(score, n, config)
    return RuleResult(score=score, violations=violations)


def hsc(sample: LayoutSample, config: DrcConfig | None = None) -> RuleResult:
    return _spacing(sample, config or DrcConfig(), axis=0)


def vsc(sample: LayoutSample, config: DrcConfig | None = None) -> RuleResult:
    return _spacing(sample, config or DrcConfig(), axis=1)


def check_sample(sample: LayoutSample, config: DrcConfig | None = None) -> DrcReport:
    config = config or DrcConfig()
    r_clc = clc(sample, config)
    r_pdc = pdc(sample, config)
    r_hsc = hsc(sample, config)
    r_vsc = vsc(sample, config)
    return DrcReport(clc=r_clc.score, pdc=r_pdc.score, hsc=r_hsc.score,
                     vsc=r_vsc.score,
                     clc_violations=r_clc.violations,
                     pdc_violations=r_pdc.violations,
                     hsc_violations=r_hsc.violations,
                     vsc_violations=r_vsc.violations)


def evaluate(samples, config: DrcConfig | None = None) -> DrcSummary:
    """Per-sample reports plus the arithmetic mean of each metric."""
    samples = list(samples)
    if not samples:
        raise ValueError("evaluate needs at least one layout")
    config = config or DrcConfig()
    reports = [check_sample(s, config) for s in samples]
    means = {key: float(np.mean([r.scores()[key] for r in reports]))
             for key in ("clc", "pdc", "hsc", "vsc")}
    return DrcSummary(reports=reports, means=means)


# ----------------------------------------------------------------------
# interchange
# ----------------------------------------------------------------------

def save_layouts(layouts, path) -> None:
    with open(path, "w") as fh:
        for layout in layouts:
            fh.write(json.dumps(layout.to_dict(), sort_keys=True,
                                separators=(",", ":")))
            fh.write("\n")


def load_layouts(path) -> list[LayoutSample]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(LayoutSample.from_dict(json.loads(line)))
    return out


def write_report_json(summary: DrcSummary, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_report_csv(summary: DrcSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "clc", "pdc", "hsc", "vsc"])
        for i, r in enumerate(summary.reports):
            writer.writerow([i, repr(r.clc), repr(r.pdc), repr(r.hsc),
                             repr(r.vsc)])
        writer.writerow(["mean", repr(summary.means["clc"]),
                         repr(summary.means["pdc"]),
                         repr(summary.means["hsc"]),
                         repr(summary.means["vsc"])])

"""Hybrid discrete-continuous sequence schema.

A sequence element (an *atomic unit*) pairs a discrete class id with a
fixed-width continuous vector. Continuous values live normalized in
[-1, 1] inside the library; raw grid units appear only at file I/O and
geometry boundaries. Special ids (BOS/EOS/PAD) follow the class ids and
carry an all-zero continuous vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class SchemaSpec:
    """Vocabulary and coordinate conventions shared by every module.

    ``num_classes`` counts the element/command classes; the three
    special ids are appended after them. ``cont_dim`` is the width of
    the continuous vector; ``coord_min``/``coord_max`` bound the raw
    units.
    """

    num_classes: int
    cont_dim: int
    coord_min: float = 0.0
    coord_max: float = 40000.0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.cont_dim < 1:
            raise ValueError("cont_dim must be >= 1")
        if not self.coord_min < self.coord_max:
            raise ValueError("coord_min must be < coord_max")

    @property
    def bos_id(self) -> int:
        return self.num_classes

    @property
    def eos_id(self) -> int:
        return self.num_classes + 1

    @property
    def pad_id(self) -> int:
        return self.num_classes + 2

    @property
    def vocab_size(self) -> int:
        """Class ids plus BOS/EOS/PAD."""
        return self.num_classes + 3

    def is_special(self, d: int) -> bool:
        return d >= self.num_classes

    def is_legal_id(self, d: int) -> bool:
        return 0 <= d < self.vocab_size


def layout_schema() -> SchemaSpec:
    """Rectangle layouts: 3 layer classes, c = (x, y, w, h) on the 40k grid."""
    return SchemaSpec(num_classes=3, cont_dim=4, coord_min=0.0, coord_max=40000.0)


def svg_schema(coord_max: float = 512.0) -> SchemaSpec:
    """Vector-path commands (move/line/curve) with four coordinate pairs.

    Constructible counterpart of the layout schema; text conditioning is
    out of scope, the schema only fixes shapes.
    """
    return SchemaSpec(num_classes=3, cont_dim=8, coord_min=0.0, coord_max=coord_max)


@dataclass(frozen=True)
class AtomicUnit:
    """One sequence element: discrete id + normalized continuous vector."""

    d: int
    c: tuple

    @staticmethod
    def special(d: int, cont_dim: int) -> "AtomicUnit":
        return AtomicUnit(d=d, c=(0.0,) * cont_dim)

    @staticmethod
    def of(d: int, c: Iterable[float]) -> "AtomicUnit":
        return AtomicUnit(d=int(d), c=tuple(float(x) for x in c))


@dataclass(frozen=True)
class UnitSequence:
    """Ordered atomic units; ``length`` counts the non-special ones."""

    units: tuple

    @staticmethod
    def of(units: Iterable[AtomicUnit]) -> "UnitSequence":
        return UnitSequence(units=tuple(units))

    def __len__(self) -> int:
        return len(self.units)

    def __iter__(self):
        return iter(self.units)

    def __getitem__(self, i):
        return self.units[i]

    def length(self, spec: SchemaSpec) -> int:
        return sum(1 for u in self.units if not spec.is_special(u.d))


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    error: str | None = None
    position: int | None = None

    def __bool__(self) -> bool:
        return self.valid


def normalize(raw, spec: SchemaSpec) -> np.ndarray:
    """Affine map from [coord_min, coord_max] onto [-1, 1]."""
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = spec.coord_min, spec.coord_max
    bad = (raw < lo) | (raw > hi)
    if bad.any():
        j = int(np.argmax(bad))
        raise ValueError(
            f"raw value {raw.flat[j]} at index {j} outside [{lo}, {hi}]")
    return 2.0 * (raw - lo) / (hi - lo) - 1.0


def denormalize(norm, spec: SchemaSpec) -> np.ndarray:
    """Inverse of :func:`normalize`; tolerates |x| <= 1 + 1e-6 overshoot."""
    norm = np.asarray(norm, dtype=np.float64)
    bad = np.abs(norm) > 1.0 + 1e-6
    if bad.any():
        j = int(np.argmax(bad))
        raise ValueError(
            f"normalized value {norm.flat[j]} at index {j} outside [-1, 1]")
    clipped = np.clip(norm, -1.0, 1.0)
    lo, hi = spec.coord_min, spec.coord_max
    return (clipped + 1.0) * 0.5 * (hi - lo) + lo


def validate_sequence(seq: UnitSequence, spec: SchemaSpec) -> ValidationResult:
    """Check sequence invariants; reports the first violation found."""
    seen_eos = False
    for i, u in enumerate(seq.units):
        if not spec.is_legal_id(u.d):
            return ValidationResult(False, f"unknown id {u.d}", i)
        if len(u.c) != spec.cont_dim:
            return ValidationResult(
                False, f"continuous vector has length {len(u.c)}, "
                       f"expected {spec.cont_dim}", i)
        if u.d == spec.bos_id and i != 0:
            return ValidationResult(False, "BOS after position 0", i)
        if seen_eos and u.d != spec.pad_id:
            return ValidationResult(False, "unit after EOS", i)
        if u.d == spec.eos_id:
            seen_eos = True
        if spec.is_special(u.d):
            if any(x != 0.0 for x in u.c):
                return ValidationResult(
                    False, "special unit with nonzero continuous vector", i)
        else:
            if any(abs(x) > 1.0 + 1e-9 for x in u.c):
                return ValidationResult(
                    False, "continuous value outside [-1, 1]", i)
    return ValidationResult(True)


def check_sequence(seq: UnitSequence, spec: SchemaSpec) -> None:
    """Raise ``ValueError`` if the sequence violates an invariant."""
    res = validate_sequence(seq, spec)
    if not res:
        raise ValueError(f"invalid sequence at position {res.position}: {res.error}")


# ----------------------------------------------------------------------
# JSONL interchange: one `{"units": [{"d": int, "c": [...]}]}` per line,
# continuous values in raw (unnormalized) units; specials carry zeros.
# ----------------------------------------------------------------------

def sequence_to_record(seq: UnitSequence, spec: SchemaSpec) -> dict:
    units = []
    for u in seq.units:
        if spec.is_special(u.d):
            c = [0.0] * spec.cont_dim
        else:
            c = [float(x) for x in denormalize(np.asarray(u.c), spec)]
        units.append({"d": int(u.d), "c": c})
    return {"units": units}


def sequence_from_record(rec: dict, spec: SchemaSpec) -> UnitSequence:
    units = []
    for entry in rec["units"]:
        d = int(entry["d"])
        if spec.is_special(d):
            units.append(AtomicUnit.special(d, spec.cont_dim))
        else:
            units.append(AtomicUnit.of(d, normalize(entry["c"], spec)))
    return UnitSequence.of(units)


def save_sequences(seqs: Sequence[UnitSequence], path, spec: SchemaSpec) -> None:
    with open(path, "w") as fh:
        for seq in seqs:
            fh.write(json.dumps(sequence_to_record(seq, spec),
                                sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def load_sequences(path, spec: SchemaSpec) -> list[UnitSequence]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            seq = sequence_from_record(json.loads(line), spec)
            check_sequence(seq, spec)
            out.append(seq)
    return out

"""Domain types, the built-in LoD face-count table, CSV I/O and a synthetic MOS generator."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class ValidationError(ValueError):
    """Input data violates a domain invariant."""


class DatasetParseError(ValidationError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, order=True)
class LodLevel:
    index: int
    fraction_removed: float

    @property
    def name(self) -> str:
        return "original" if self.index == 0 else f"LoD{self.index}"


FRACTIONS_REMOVED = (0.0, 0.20, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95)
LOD_LEVELS = tuple(LodLevel(i, f) for i, f in enumerate(FRACTIONS_REMOVED))
ORIGINAL = LOD_LEVELS[0]
# LoD1..LoD8; the original mesh is never offered to the allocator.
ALLOCATABLE_LODS = LOD_LEVELS[1:]


def lod(index: int | LodLevel) -> LodLevel:
    if isinstance(index, LodLevel):
        return index
    if not 0 <= int(index) < len(LOD_LEVELS) or int(index) != index:
        raise ValidationError(f"unknown LoD index {index!r}")
    return LOD_LEVELS[int(index)]


@dataclass(frozen=True)
class MeshDescriptor:
    id: str
    faces_per_lod: Mapping[LodLevel, int]
    si_geo: float | None = None
    si_col: float | None = None

    def __post_init__(self):
        missing = [lv.name for lv in LOD_LEVELS if lv not in self.faces_per_lod]
        if missing:
            raise ValidationError(f"mesh {self.id}: missing face counts for {missing}")
        counts = [self.faces_per_lod[lv] for lv in LOD_LEVELS]
        if any(c < 1 for c in counts):
            raise ValidationError(f"mesh {self.id}: face counts must be positive")
        if any(a <= b for a, b in zip(counts, counts[1:])):
            raise ValidationError(f"mesh {self.id}: face counts must strictly decrease with LoD")
        for name in ("si_geo", "si_col"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"mesh {self.id}: {name} must be finite and >= 0")

    def faces(self, level: int | LodLevel) -> int:
        return self.faces_per_lod[lod(level)]

    @property
    def has_si(self) -> bool:
        return self.si_geo is not None and self.si_col is not None

    def with_si(self, si_geo: float, si_col: float) -> MeshDescriptor:
        return dataclasses.replace(self, si_geo=float(si_geo), si_col=float(si_col))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "faces": [self.faces_per_lod[lv] for lv in LOD_LEVELS],
            "si_geo": self.si_geo,
            "si_col": self.si_col,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> MeshDescriptor:
        faces = d["faces"]
        if len(faces) != len(LOD_LEVELS):
            raise ValidationError(f"mesh {d.get('id')}: expected {len(LOD_LEVELS)} face counts")
        return cls(
            id=str(d["id"]),
            faces_per_lod={lv: int(n) for lv, n in zip(LOD_LEVELS, faces)},
            si_geo=None if d.get("si_geo") is None else float(d["si_geo"]),
            si_col=None if d.get("si_col") is None else float(d["si_col"]),
        )


# Face counts per mesh, original then LoD1..LoD8.
_FACE_COUNTS = {
    "M1": (4063, 3250, 2436, 2030, 1625, 1218, 812, 406, 202),
    "M2": (25246, 20193, 15144, 12623, 10094, 7570, 5045, 2522, 1260),
    "M3": (32720, 26149, 19606, 16361, 13063, 9826, 6526, 3326, 1703),
    "M4": (6832, 5457, 4087, 3589, 2719, 2104, 1349, 790, 398),
    "M5": (77980, 65122, 52277, 46493, 39429, 33333, 26588, 20643, 11360),
    "M6": (16556, 13237, 9928, 8277, 6620, 4963, 3307, 1646, 825),
    "M7": (66776, 54106, 41547, 35144, 28805, 22482, 16159, 9832, 6775),
    "M8": (221874, 169489, 127116, 105935, 84744, 63557, 42366, 21178, 10588),
}

# Stand-in (si_geo, si_col) values for synthetic experiments. Only the ordering
# is grounded: M1 has the highest colour complexity, M4 has few faces but low
# colour complexity.
SYNTHETIC_SI = {
    "M1": (38.0, 112.0),
    "M2": (52.0, 74.0),
    "M3": (61.0, 58.0),
    "M4": (29.0, 41.0),
    "M5": (74.0, 66.0),
    "M6": (44.0, 88.0),
    "M7": (67.0, 35.0),
    "M8": (83.0, 49.0),
}


def builtin_lod_table() -> list[MeshDescriptor]:
    """The eight evaluation meshes M1..M8 with their per-LoD face counts (no SI)."""
    return [
        MeshDescriptor(mesh_id, {lv: n for lv, n in zip(LOD_LEVELS, counts)})
        for mesh_id, counts in _FACE_COUNTS.items()
    ]


def builtin_meshes_with_synthetic_si() -> list[MeshDescriptor]:
    return [m.with_si(*SYNTHETIC_SI[m.id]) for m in builtin_lod_table()]


@dataclass(frozen=True)
class StimulusRecord:
    mesh_id: str
    lod: LodLevel
    faces: int
    distance_m: float
    si_geo: float
    si_col: float
    mos: float

    def __post_init__(self):
        if self.faces < 1:
            raise ValidationError("faces must be >= 1")
        if not (math.isfinite(self.distance_m) and self.distance_m > 0):
            raise ValidationError("distance_m must be > 0")
        if not (math.isfinite(self.si_geo) and self.si_geo >= 0):
            raise ValidationError("si_geo must be finite and >= 0")
        if not (math.isfinite(self.si_col) and self.si_col >= 0):
            raise ValidationError("si_col must be finite and >= 0")
        if not (1.0 <= self.mos <= 5.0):
            raise ValidationError(f"mos {self.mos} outside [1, 5]")

    @property
    def key(self) -> tuple:
        return (self.mesh_id, self.lod.index, self.distance_m)

    def features(self) -> np.ndarray:
        """Feature row in model order: faces, distance, fraction removed, si_geo, si_col."""
        return np.array(
            [self.faces, self.distance_m, self.lod.fraction_removed, self.si_geo, self.si_col],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Dataset:
    records: tuple[StimulusRecord, ...]
    provenance: str = "ingested"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.provenance not in ("ingested", "synthetic"):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        seen = set()
        for r in self.records:
            if r.key in seen:
                raise ValidationError(f"duplicate record key {r.key}")
            seen.add(r.key)

    def __len__(self) -> int:
        return len(self.records)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, y) with X of shape (n, 5)."""
        if not self.records:
            return np.empty((0, 5)), np.empty(0)
        X = np.stack([r.features() for r in self.records])
        y = np.array([r.mos for r in self.records], dtype=np.float64)
        return X, y

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset(tuple(self.records[i] for i in indices), self.provenance)


CSV_COLUMNS = ("mesh_id", "lod_index", "fraction_removed", "faces", "distance_m", "si_geo", "si_col", "mos")


def _parse_row(row: dict, line: int) -> StimulusRecord:
    try:
        level = lod(int(row["lod_index"]))
        frac = float(row["fraction_removed"])
        faces = int(row["faces"])
        distance = float(row["distance_m"])
        si_geo = float(row["si_geo"])
        si_col = float(row["si_col"])
        mos = float(row["mos"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise DatasetParseError(line, str(exc)) from None
        raise DatasetParseError(line, f"malformed value ({exc})") from None
    if abs(frac - level.fraction_removed) > 1e-9:
        raise DatasetParseError(line, f"fraction_removed {frac} does not match {level.name}")
    try:
        return StimulusRecord(row["mesh_id"], level, faces, distance, si_geo, si_col, mos)
    except ValidationError as exc:
        raise DatasetParseError(line, str(exc)) from None


def load_dataset(path: str | Path, format: str = "csv") -> Dataset:
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetParseError(1, "missing header") from None
        header = [h.strip() for h in header]
        extra = [h for h in header if h not in CSV_COLUMNS]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if extra or missing or len(header) != len(CSV_COLUMNS):
            raise DatasetParseError(1, f"bad header (unknown={extra}, missing={missing})")
        records = []
        seen: dict[tuple, int] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetParseError(line, f"expected {len(header)} fields, got {len(row)}")
            rec = _parse_row(dict(zip(header, (c.strip() for c in row))), line)
            if rec.key in seen:
                raise DatasetParseError(line, f"duplicate key {rec.key} (first seen on line {seen[rec.key]})")
            seen[rec.key] = line
            records.append(rec)
    return Dataset(tuple(records), "ingested")


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in dataset.records:
        w.writerow([
            r.mesh_id, r.lod.index, f"{r.lod.fraction_removed:.6f}", r.faces,
            f"{r.distance_m:.6f}", f"{r.si_geo:.6f}", f"{r.si_col:.6f}", f"{r.mos:.6f}",
        ])
    return buf.getvalue()


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8")


@dataclass(frozen=True)
class SyntheticMosModel:
    """mos = 5 - a*l^p*c(mesh) + b*t(d)*l, clipped to [1, 5].

    c(mesh) = 0.5 + si_col / (2 * max si_col) and t(d) rescales distance to [0, 1]
    over the requested distances.
    """

    a: float = 4.0
    p: float = 1.6
    b: float = 0.8

    def clean_mos(self, frac: float, distance: float, complexity: float, d_min: float, d_max: float) -> float:
        t = 0.0 if d_max == d_min else (distance - d_min) / (d_max - d_min)
        return 5.0 - self.a * frac**self.p * complexity + self.b * t * frac


def generate_synthetic(
    meshes: Sequence[MeshDescriptor],
    distances: Sequence[float],
    seed: int,
    noise_sigma: float,
    model: SyntheticMosModel = SyntheticMosModel(),
) -> Dataset:
    if not distances:
        raise ValidationError("distances must be non-empty")
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be >= 0")
    for m in meshes:
        if not m.has_si:
            raise ValidationError(f"mesh {m.id} has no SI values")
    max_col = max((m.si_col for m in meshes), default=0.0)
    d_min, d_max = min(distances), max(distances)
    rng = np.random.default_rng(seed)
    records = []
    for m in meshes:
        complexity = 0.5 + (m.si_col / (2.0 * max_col) if max_col > 0 else 0.0)
        for level in ALLOCATABLE_LODS:
            for d in distances:
                mos = model.clean_mos(level.fraction_removed, d, complexity, d_min, d_max)
                if noise_sigma > 0:
                    mos += rng.normal(0.0, noise_sigma)
                # rounded so the CSV round trip is exact
                mos = round(min(5.0, max(1.0, mos)), 6)
                records.append(StimulusRecord(
                    m.id, level, m.faces(level), float(d), m.si_geo, m.si_col, mos,
                ))
    return Dataset(tuple(records), "synthetic")


DISTANCE_POOL = (4.0, 8.0, 12.0, 16.0, 20.0)


def default_synthetic_dataset(seed: int = 0, noise_sigma: float = 0.2) -> Dataset:
    """320 records: 8 builtin meshes x LoD1..8 x five distances."""
    return generate_synthetic(builtin_meshes_with_synthetic_si(), DISTANCE_POOL, seed, noise_sigma)

"""Surface materials: per-face material distributions and absorption blending."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bands import N_BANDS
from .errors import FaceMismatch, ParseError, UnknownMaterial
from .geometry import Pose, ShoeboxModel, face_axis, face_side

MAX_MATERIALS = 10
DEFAULT_REFLECTIVE_ALPHA = 0.05


class MaterialClass(str, Enum):
    CONCRETE_BRICK = "concrete_brick"
    GLASS = "glass"
    WOOD_PANEL = "wood_panel"
    CARPET = "carpet"
    HEAVY_CURTAIN = "heavy_curtain"
    PLASTER_DRYWALL = "plaster_drywall"
    ACOUSTIC_TILE = "acoustic_tile"
    METAL = "metal"
    OTHER = "other"
    DEFAULT_REFLECTIVE = "default_reflective"

    @classmethod
    def parse(cls, label) -> "MaterialClass":
        if isinstance(label, cls):
            return label
        try:
            return cls(str(label).strip().lower())
        except ValueError:
            raise ParseError(f"unknown material label {label!r}") from None


# Segmentation label maps index into this tuple; -1 marks unlabeled pixels.
SEGMENTATION_CLASSES = tuple(m for m in MaterialClass if m is not MaterialClass.DEFAULT_REFLECTIVE)


def as_spectrum(values) -> np.ndarray:
    a = np.asarray(values, dtype=float).reshape(-1)
    if a.shape != (N_BANDS,):
        raise ValueError(f"absorption spectrum needs {N_BANDS} bands, got {a.size}")
    if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
        raise ValueError("absorption coefficients must lie in [0, 1]")
    return a


def parse_material_library(text: str) -> dict[MaterialClass, np.ndarray]:
    """Parse the tabular material library.

    One row per material: the label followed by eight absorption values in
    band order. Lines starting with ``#`` and a ``material`` header row are
    skipped. Anything else that does not parse is an error.
    """
    library = {}
    rows = csv.reader(line for line in io.StringIO(text) if line.strip() and not line.lstrip().startswith("#"))
    for lineno, row in enumerate(rows, 1):
        if row and row[0].strip().lower() == "material":
            continue
        if len(row) != N_BANDS + 1:
            raise ParseError(f"material library row {lineno}: expected {N_BANDS + 1} fields, got {len(row)}")
        material = MaterialClass.parse(row[0])
        if material in library:
            raise ParseError(f"material library row {lineno}: duplicate {material.value}")
        try:
            library[material] = as_spectrum([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"material library row {lineno}: {exc}") from None
    if not library:
        raise ParseError("material library is empty")
    return library


def load_material_library(path: str | Path | None = None) -> dict[MaterialClass, np.ndarray]:
    if path is None:
        text = resources.files("roomverb.data").joinpath("materials.csv").read_text()
    else:
        text = Path(path).read_text()
    return parse_material_library(text)


def default_reflective_spectrum(library: Mapping[MaterialClass, np.ndarray] | None = None) -> np.ndarray:
    if library is not None and MaterialClass.DEFAULT_REFLECTIVE in library:
        return np.array(library[MaterialClass.DEFAULT_REFLECTIVE], dtype=float)
    return np.full(N_BANDS, DEFAULT_REFLECTIVE_ALPHA)


@dataclass
class MaterialObservation:
    """Share of one face's visible pixels carrying one material label.

    ``weight`` is the face's visible-pixel count in the frame the
    observation came from; observations sharing a timestamp belong to one
    frame.
    """

    face_id: int
    material: MaterialClass
    pixel_fraction: float
    confidence: float
    timestamp: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        if not 0 <= int(self.face_id) <= 5:
            raise ValueError(f"face_id must be in 0..5, got {self.face_id}")
        self.face_id = int(self.face_id)
        self.material = MaterialClass.parse(self.material)
        for name in ("pixel_fraction", "confidence"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
            setattr(self, name, v)
        if self.weight < 0:
            raise ValueError("observation weight must be non-negative")


@dataclass(frozen=True)
class MaterialEntry:
    material: MaterialClass
    area_ratio: float
    confidence: float


@dataclass
class SurfaceMaterialProfile:
    """Running material distribution of a single shoebox face.

    Accumulates, per material, the pixel-weighted coverage sum and the
    pixel-weighted confidence sum. ``entries`` turns those into normalized
    area ratios and mean confidences.
    """

    face_id: int
    total_weight: float = 0.0
    _coverage: dict = field(default_factory=dict)
    _conf_num: dict = field(default_factory=dict)
    _conf_den: dict = field(default_factory=dict)

    @classmethod
    def from_entries(cls, face_id: int, entries: Iterable) -> "SurfaceMaterialProfile":
        """Build a profile with fixed (material, area_ratio, confidence) entries."""
        profile = cls(face_id)
        for item in entries:
            if isinstance(item, MaterialEntry):
                material, ratio, conf = item.material, item.area_ratio, item.confidence
            else:
                material, ratio, conf = item
            material = MaterialClass.parse(material)
            if material in profile._coverage:
                raise ValueError(f"material {material.value} listed twice")
            if not (0 <= ratio <= 1 and 0 <= conf <= 1):
                raise ValueError("area ratio and confidence must lie in [0, 1]")
            profile._coverage[material] = float(ratio)
            profile._conf_num[material] = float(ratio) * float(conf)
            profile._conf_den[material] = float(ratio)
        profile.total_weight = 1.0 if profile._coverage else 0.0
        profile._cap()
        return profile

    def copy(self) -> "SurfaceMaterialProfile":
        return SurfaceMaterialProfile(self.face_id, self.total_weight, dict(self._coverage),
                                      dict(self._conf_num), dict(self._conf_den))

    def _confidence(self, m) -> float:
        den = self._conf_den[m]
        return self._conf_num[m] / den if den > 0 else 0.0

    @property
    def entries(self) -> list[MaterialEntry]:
        """Entries sorted by prominence (area ratio times confidence)."""
        total = sum(self._coverage.values())
        if total <= 0:
            return []
        out = [MaterialEntry(m, c / total, self._confidence(m)) for m, c in self._coverage.items()]
        out.sort(key=lambda e: (-e.area_ratio * e.confidence, e.material.value))
        return out

    def __len__(self):
        return len(self._coverage)

    def _cap(self, limit: int = MAX_MATERIALS):
        while len(self._coverage) > limit:
            weakest = min(self._coverage,
                          key=lambda m: (self._coverage[m] * self._confidence(m), m.value))
            for d in (self._coverage, self._conf_num, self._conf_den):
                del d[weakest]


def update_profile(profile: SurfaceMaterialProfile, observations: Sequence[MaterialObservation],
                   max_materials: int = MAX_MATERIALS) -> SurfaceMaterialProfile:
    """Fold new observations into a face profile, returning a new profile.

    Observations are grouped into frames by timestamp. Each frame adds its
    visible-pixel weight to the total; each material gains
    ``weight * pixel_fraction`` of coverage and the same amount of
    confidence mass. At most ``max_materials`` materials are kept, dropping
    the least prominent.
    """
    out = profile.copy()
    frames = defaultdict(list)
    for obs in observations:
        if obs.face_id != profile.face_id:
            raise FaceMismatch(f"observation for face {obs.face_id} given to profile of face {profile.face_id}")
        frames[obs.timestamp].append(obs)
    for ts in sorted(frames):
        frame = frames[ts]
        w = max(o.weight for o in frame)
        out.total_weight += w
        for o in frame:
            if o.pixel_fraction <= 0.0:
                continue
            m = o.material
            mass = w * o.pixel_fraction
            out._coverage[m] = out._coverage.get(m, 0.0) + mass
            out._conf_num[m] = out._conf_num.get(m, 0.0) + mass * o.confidence
            out._conf_den[m] = out._conf_den.get(m, 0.0) + mass
    out._cap(max_materials)
    return out


def blend_absorption(profile: SurfaceMaterialProfile,
                     library: Mapping[MaterialClass, np.ndarray]) -> np.ndarray:
    """Per-band absorption of a face as a prominence-weighted mean.

    Each material is weighted by ``area_ratio * confidence``. A face with
    no usable entries gets the default reflective spectrum.
    """
    entries = profile.entries
    for e in entries:
        if e.material not in library:
            raise UnknownMaterial(f"material {e.material.value} missing from library")
    weights = np.array([e.area_ratio * e.confidence for e in entries])
    if not entries or weights.sum() <= 0:
        return default_reflective_spectrum(library)
    spectra = np.array([library[e.material] for e in entries])
    return weights @ spectra / weights.sum()


def face_absorptions(profiles: Sequence[SurfaceMaterialProfile],
                     library: Mapping[MaterialClass, np.ndarray]) -> np.ndarray:
    """Blend all six faces into a (6, 8) absorption array."""
    if len(profiles) != 6:
        raise ValueError("need one profile per shoebox face")
    return np.array([blend_absorption(p, library) for p in profiles])


def empty_profiles() -> list[SurfaceMaterialProfile]:
    return [SurfaceMaterialProfile(f) for f in range(6)]


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera; the camera looks along +z with +x right and +y down."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")


def project_face_coverage(shoebox: ShoeboxModel, camera_pose: Pose, intrinsics: Intrinsics,
                          labels, confidence, timestamp: float = 0.0) -> list[MaterialObservation]:
    """Assign segmentation pixels to the shoebox faces they look at.

    Each pixel's ray is intersected with all six faces and the nearest hit
    wins. Hits on the exterior side of a face are discarded, which also
    hides everything behind them. ``labels`` holds indices into
    ``SEGMENTATION_CLASSES`` (-1 = unlabeled) and ``confidence`` the
    per-pixel score.
    """
    labels = np.asarray(labels)
    confidence = np.asarray(confidence, dtype=float)
    shape = (intrinsics.height, intrinsics.width)
    if labels.shape != shape or confidence.shape != shape:
        raise ValueError(f"segmentation must have shape {shape}")

    u = np.arange(intrinsics.width) + 0.5
    v = np.arange(intrinsics.height) + 0.5
    uu, vv = np.meshgrid(u, v)
    rays = np.stack([(uu - intrinsics.cx) / intrinsics.fx,
                     (vv - intrinsics.cy) / intrinsics.fy,
                     np.ones_like(uu)], axis=-1)
    rays = shoebox.to_local(rays @ camera_pose.rotation.T)
    origin = shoebox.to_local(camera_pose.position)

    bounds = shoebox.bounds
    lo, hi = shoebox.min_corner, shoebox.max_corner
    eps = 1e-9
    best_t = np.full(shape, np.inf)
    best_face = np.full(shape, -1)
    best_front = np.zeros(shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for face in range(6):
            k = face_axis(face)
            dk = rays[..., k]
            t = (bounds[face] - origin[k]) / dk
            hit = origin + t[..., None] * rays
            inside = np.ones(shape, dtype=bool)
            for j in range(3):
                if j != k:
                    inside &= (hit[..., j] >= lo[j] - eps) & (hit[..., j] <= hi[j] + eps)
            valid = np.isfinite(t) & (t > 0) & inside
            closer = valid & (t < best_t)
            best_t[closer] = t[closer]
            best_face[closer] = face
            front = dk < 0 if face_side(face) == 0 else dk > 0
            best_front[closer] = front[closer]

    observations = []
    for face in range(6):
        mask = (best_face == face) & best_front
        n_face = int(mask.sum())
        if n_face == 0:
            continue
        face_labels = labels[mask]
        face_conf = confidence[mask]
        for idx in np.unique(face_labels):
            if idx < 0:
                continue
            sel = face_labels == idx
            observations.append(MaterialObservation(
                face_id=face,
                material=SEGMENTATION_CLASSES[int(idx)],
                pixel_fraction=float(sel.sum()) / n_face,
                confidence=float(face_conf[sel].mean()),
                timestamp=timestamp,
                weight=float(n_face),
            ))
    return observations

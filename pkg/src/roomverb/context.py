"""Scene types, their acoustic parameter vectors, and grid-search calibration."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyDataset, EmptyGrid, IncompleteTable, ParseError


class SceneType(str, Enum):
    CONFERENCE_ROOM = "conference_room"
    LIVING_ROOM = "living_room"
    BEDROOM = "bedroom"
    OUTDOOR = "outdoor"
    OTHER = "other"

    @classmethod
    def parse(cls, value) -> "SceneType":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParseError(f"unknown scene type {value!r}") from None


PARAMETER_NAMES = ("reverb_gain", "rt_modulator", "reverb_brightness", "reflection_gain")


@dataclass(frozen=True)
class AcousticParameterVector:
    reverb_gain: float
    rt_modulator: float
    reverb_brightness: float
    reflection_gain: float

    def __post_init__(self):
        values = self.as_tuple()
        if not all(math.isfinite(v) for v in values):
            raise ValueError("acoustic parameters must be finite")
        if self.reverb_gain < 0 or self.reflection_gain < 0:
            raise ValueError("gains must be non-negative")
        if self.rt_modulator <= 0:
            raise ValueError("rt_modulator must be positive")
        if not -1.0 <= self.reverb_brightness <= 1.0:
            raise ValueError("reverb_brightness must lie in [-1, 1]")

    def as_tuple(self) -> tuple:
        return (self.reverb_gain, self.rt_modulator, self.reverb_brightness, self.reflection_gain)

    def sort_key(self) -> tuple:
        # the trailing raw brightness only orders +b and -b deterministically
        return (self.reverb_gain, self.rt_modulator, abs(self.reverb_brightness),
                self.reflection_gain, self.reverb_brightness)


DEFAULT_TABLE: Mapping[SceneType, AcousticParameterVector] = {
    SceneType.CONFERENCE_ROOM: AcousticParameterVector(0.18, 1.0, 0.0, 0.9),
    SceneType.LIVING_ROOM: AcousticParameterVector(0.15, 0.9, -0.1, 0.8),
    SceneType.BEDROOM: AcousticParameterVector(0.10, 0.7, -0.2, 0.7),
    SceneType.OUTDOOR: AcousticParameterVector(0.0, 1.0, 0.0, 0.2),
    SceneType.OTHER: AcousticParameterVector(0.15, 1.0, 0.0, 0.8),
}


def validate_table(table: Mapping) -> dict:
    """Return a SceneType-keyed copy, or raise IncompleteTable if a type is missing."""
    out = {SceneType.parse(k): v for k, v in table.items()}
    missing = [s.value for s in SceneType if s not in out]
    if missing:
        raise IncompleteTable(f"parameter table lacks scene types: {', '.join(missing)}")
    return out


def params_for_scene(scene, table: Mapping[SceneType, AcousticParameterVector]) -> AcousticParameterVector:
    return table[SceneType.parse(scene)]


def parse_param_table(text: str) -> dict:
    """Parse ``scene_type,reverb_gain,rt_modulator,reverb_brightness,reflection_gain`` rows."""
    table = {}
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    for row in rows:
        if row[0].strip() == "scene_type":
            continue
        if len(row) != 5:
            raise ParseError(f"parameter row needs 5 fields: {row}")
        try:
            values = [float(v) for v in row[1:]]
            table[SceneType.parse(row[0])] = AcousticParameterVector(*values)
        except ValueError as exc:
            raise ParseError(f"bad parameter row {row}: {exc}") from None
    return validate_table(table)


def format_param_table(table: Mapping) -> str:
    table = validate_table(table)
    lines = ["scene_type," + ",".join(PARAMETER_NAMES)]
    for scene in SceneType:
        lines.append(scene.value + "," + ",".join(repr(float(v)) for v in table[scene].as_tuple()))
    return "\n".join(lines) + "\n"


def load_param_table(path=None) -> dict:
    """Read a parameter table file; without a path, the shipped default table."""
    if path is None:
        text = resources.files("roomverb.data").joinpath("scene_params.csv").read_text()
    else:
        text = Path(path).read_text()
    return parse_param_table(text)


def save_param_table(table: Mapping, path) -> None:
    Path(path).write_text(format_param_table(table))


def _axis(start: float, stop: float, step: float) -> tuple:
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


@dataclass(frozen=True)
class ParameterGrid:
    reverb_gain: tuple = _axis(0.0, 0.3, 0.05)
    rt_modulator: tuple = _axis(0.5, 1.5, 0.1)
    reverb_brightness: tuple = (-0.4, -0.2, 0.0, 0.2, 0.4)
    reflection_gain: tuple = _axis(0.2, 1.0, 0.2)

    def __post_init__(self):
        for name in PARAMETER_NAMES:
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise EmptyGrid(f"grid axis {name} is empty")
            object.__setattr__(self, name, values)

    def __len__(self):
        return math.prod(len(getattr(self, n)) for n in PARAMETER_NAMES)

    def points(self) -> list:
        """All grid points, in tie-break order."""
        pts = {AcousticParameterVector(*v) for v in product(*(getattr(self, n) for n in PARAMETER_NAMES))}
        return sorted(pts, key=AcousticParameterVector.sort_key)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ParameterGrid":
        missing = [n for n in PARAMETER_NAMES if n not in data]
        if missing:
            raise EmptyGrid(f"grid lacks axes: {', '.join(missing)}")
        return cls(**{n: tuple(data[n]) for n in PARAMETER_NAMES})

    def to_mapping(self) -> dict:
        return {n: list(getattr(self, n)) for n in PARAMETER_NAMES}


@dataclass
class CalibrationEntry:
    """One calibration scene: a descriptor the synthesizer understands plus measured RT60."""

    descriptor: object
    scene_type: SceneType
    rt60: np.ndarray

    def __post_init__(self):
        self.scene_type = SceneType.parse(self.scene_type)
        self.rt60 = np.asarray(self.rt60, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(self.rt60)) and np.all(self.rt60 > 0)):
            raise ValueError("ground-truth RT60 values must be positive and finite")


@dataclass
class CalibrationResult:
    table: dict
    mae: dict = field(default_factory=dict)
    evaluated: int = 0


Synthesizer = Callable[[object, AcousticParameterVector], np.ndarray]


def _objective(synthesizer: Synthesizer, entries: Sequence[CalibrationEntry], point) -> float:
    errors = []
    for e in entries:
        est = np.asarray(synthesizer(e.descriptor, point), dtype=float)
        errors.append(np.abs(est - e.rt60))
    err = np.concatenate(errors)
    err = err[np.isfinite(err)]
    return float(err.mean()) if err.size else math.inf


def calibrate(dataset: Sequence[CalibrationEntry], grid: ParameterGrid, synthesizer: Synthesizer,
              scene_types=None, workers: int = 1) -> CalibrationResult:
    """Exhaustive grid search per scene type, minimizing mean absolute RT60 error.

    Parameters
    ----------
    dataset : sequence of CalibrationEntry
    grid : ParameterGrid
    synthesizer : callable
        ``synthesizer(descriptor, params)`` returns 8 per-band RT60 values.
        Non-finite estimates are left out of the mean.
    scene_types : iterable of SceneType, optional
        Types to calibrate; all five by default. Each needs at least one entry.
    workers : int
        Threads used to evaluate grid points. The result does not depend on it.

    Returns
    -------
    CalibrationResult
        ``table`` maps each calibrated scene type to its best grid point and
        ``mae`` holds the matching objective value. Exact ties go to the
        smallest ``(reverb_gain, rt_modulator, |brightness|, reflection_gain)``.
    """
    if len(grid) == 0:
        raise EmptyGrid("parameter grid is empty")
    types = list(SceneType) if scene_types is None else [SceneType.parse(s) for s in scene_types]
    by_type = {s: [e for e in dataset if e.scene_type == s] for s in types}
    for s, entries in by_type.items():
        if not entries:
            raise EmptyDataset(f"no calibration entries for scene type {s.value}")
    points = grid.points()
    result = CalibrationResult({})
    for s, entries in by_type.items():
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                scores = list(pool.map(lambda p: _objective(synthesizer, entries, p), points))
        else:
            scores = [_objective(synthesizer, entries, p) for p in points]
        best = int(np.argmin(scores))  # first minimum in tie-break order
        result.table[s] = points[best]
        result.mae[s] = scores[best]
        result.evaluated += len(points)
    return result

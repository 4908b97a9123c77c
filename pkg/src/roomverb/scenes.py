"""Scene, observation-stream and calibration files (JSON, ``format_version`` 1).

A scene gives the room either resolved (``room``) or as raw planes
(``planes``), and the surface materials either resolved (``materials``) or
as raw observations (``material_observations``); never both for one aspect.

    {
      "format_version": 1,
      "scene_id": "office",
      "scene_type": "conference_room",
      "room": {"dimensions": [6, 5, 3], "origin": [0, 0, 0], "yaw": 0.0},
      "materials": {"z_min": "carpet", "x_max": [["glass", 0.6, 0.9], ["plaster_drywall", 0.4, 0.8]]},
      "listener": {"position": [2, 2, 1.6], "orientation": [1, 0, 0, 0]},
      "sources": [{"id": "talker", "position": [4, 2.5, 1.5]}],
      "ground_truth_rt60": [0.6, 0.6, 0.55, 0.5, 0.5, 0.45, 0.4, 0.35]
    }

Faces left out of ``materials`` get the default reflective surface.
Positions are world coordinates; orientations are (w, x, y, z) quaternions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bands import N_BANDS
from .context import SceneType
from .errors import InvalidScene, ParseError, RoomverbError, StreamOrderError
from .geometry import FACE_NAMES, Plane, Pose, ShoeboxModel, estimate_shoebox
from .materials import (Intrinsics, MaterialObservation, SurfaceMaterialProfile, empty_profiles,
                        project_face_coverage, update_profile)

FORMAT_VERSION = 1
RECORD_KINDS = ("planes", "materials", "segmentation", "scene_type")


@dataclass
class SceneDescriptor:
    shoebox: ShoeboxModel
    profiles: list
    scene_type: SceneType
    listener: Pose
    sources: list  # [(source id, Pose)]
    ground_truth_rt60: np.ndarray | None = None
    scene_id: str = "scene"

    def local_listener(self) -> np.ndarray:
        return self.shoebox.to_local(self.listener.position)

    def local_sources(self) -> list:
        return [(sid, self.shoebox.to_local(p.position)) for sid, p in self.sources]


def _load_json(path_or_text, what: str) -> dict:
    try:
        if isinstance(path_or_text, (str, Path)) and not str(path_or_text).lstrip().startswith("{"):
            text = Path(path_or_text).read_text()
        else:
            text = str(path_or_text)
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot parse {what}: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{what} must be a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"{what} has format_version {version!r}, expected {FORMAT_VERSION}")
    return data


def _vector(value, n: int, name: str) -> np.ndarray:
    try:
        v = np.asarray(value, dtype=float).reshape(n)
    except (TypeError, ValueError):
        raise ParseError(f"{name} must be {n} numbers") from None
    if not np.all(np.isfinite(v)):
        raise ParseError(f"{name} must be finite")
    return v


def parse_pose(data, name: str = "pose") -> Pose:
    if not isinstance(data, dict) or "position" not in data:
        raise ParseError(f"{name} needs a position")
    orientation = data.get("orientation", [1.0, 0.0, 0.0, 0.0])
    try:
        return Pose(_vector(data["position"], 3, name), _vector(orientation, 4, name))
    except ValueError as exc:
        raise ParseError(f"bad {name}: {exc}") from None


def parse_plane(data) -> Plane:
    try:
        return Plane(_vector(data["normal"], 3, "plane normal"), float(data["offset"]),
                     tuple(data.get("extent", (1.0, 1.0))), float(data.get("confidence", 1.0)),
                     float(data.get("timestamp", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad plane record {data}: {exc}") from None


def parse_observation(data) -> MaterialObservation:
    try:
        face = data["face_id"]
        face = FACE_NAMES.index(face) if isinstance(face, str) else int(face)
        return MaterialObservation(face, data["material"], float(data["pixel_fraction"]),
                                   float(data.get("confidence", 1.0)), float(data.get("timestamp", 0.0)),
                                   float(data.get("weight", 1.0)))
    except RoomverbError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad material observation {data}: {exc}") from None


def _face_index(name) -> int:
    if name in FACE_NAMES:
        return FACE_NAMES.index(name)
    try:
        face = int(name)
    except (TypeError, ValueError):
        raise ParseError(f"unknown face {name!r}") from None
    if not 0 <= face <= 5:
        raise ParseError(f"unknown face {name!r}")
    return face


def parse_profiles(data) -> list:
    if not isinstance(data, dict):
        raise ParseError("materials must map face names to materials")
    profiles = empty_profiles()
    for name, spec in data.items():
        face = _face_index(name)
        entries = [(spec, 1.0, 1.0)] if isinstance(spec, str) else [tuple(e) for e in spec]
        try:
            profiles[face] = SurfaceMaterialProfile.from_entries(face, entries)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad materials for face {name}: {exc}") from None
    return profiles


def fold_observations(profiles: list, observations) -> list:
    out = list(profiles)
    for face in range(6):
        obs = [o for o in observations if o.face_id == face]
        if obs:
            out[face] = update_profile(out[face], obs)
    return out


def parse_room(data) -> ShoeboxModel:
    try:
        yaw = float(data.get("yaw", 0.0))
        if "bounds" in data:
            return ShoeboxModel.from_bounds(_vector(data["bounds"], 6, "room bounds"), yaw)
        return ShoeboxModel.from_dimensions(_vector(data["dimensions"], 3, "room dimensions"),
                                            _vector(data.get("origin", [0, 0, 0]), 3, "room origin"), yaw)
    except KeyError:
        raise ParseError("room needs dimensions or bounds") from None
    except ValueError as exc:
        raise InvalidScene(f"bad room: {exc}") from None


def _exclusive(data: dict, resolved: str, raw: str, aspect: str):
    if resolved in data and raw in data:
        raise InvalidScene(f"{aspect} given both resolved ({resolved}) and raw ({raw})")


def scene_from_dict(data: dict) -> SceneDescriptor:
    _exclusive(data, "room", "planes", "room geometry")
    _exclusive(data, "materials", "material_observations", "surface materials")
    listener = parse_pose(data.get("listener"), "listener")
    if "room" in data:
        shoebox = parse_room(data["room"])
    elif "planes" in data:
        shoebox = estimate_shoebox([parse_plane(p) for p in data["planes"]], listener.position)
    else:
        raise InvalidScene("scene has neither room nor planes")
    if "materials" in data:
        profiles = parse_profiles(data["materials"])
    else:
        profiles = fold_observations(empty_profiles(),
                                     [parse_observation(o) for o in data.get("material_observations", [])])
    sources = []
    for i, s in enumerate(data.get("sources", [])):
        sources.append((str(s.get("id", f"s{i}")), parse_pose(s, "source")))
    if not sources:
        raise InvalidScene("scene has no sources")
    if len({sid for sid, _ in sources}) != len(sources):
        raise InvalidScene("source ids must be unique")
    gt = data.get("ground_truth_rt60")
    if gt is not None:
        gt = _vector(gt, N_BANDS, "ground_truth_rt60")
        if np.any(gt <= 0):
            raise InvalidScene("ground-truth RT60 must be positive")
    return SceneDescriptor(shoebox, profiles, SceneType.parse(data.get("scene_type", "other")), listener,
                           sources, gt, str(data.get("scene_id", "scene")))


def load_scene(path_or_text) -> SceneDescriptor:
    return scene_from_dict(_load_json(path_or_text, "scene"))


def scene_to_dict(scene: SceneDescriptor) -> dict:
    box = scene.shoebox
    out = {
        "format_version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "scene_type": scene.scene_type.value,
        "room": {"bounds": box.bounds.tolist(), "yaw": box.frame_yaw},
        "materials": {FACE_NAMES[p.face_id]: [[e.material.value, e.area_ratio, e.confidence] for e in p.entries]
                      for p in scene.profiles if len(p)},
        "listener": {"position": scene.listener.position.tolist(),
                     "orientation": scene.listener.orientation.tolist()},
        "sources": [{"id": sid, "position": p.position.tolist(), "orientation": p.orientation.tolist()}
                    for sid, p in scene.sources],
    }
    if scene.ground_truth_rt60 is not None:
        out["ground_truth_rt60"] = np.asarray(scene.ground_truth_rt60).tolist()
    return out


def save_scene(scene: SceneDescriptor, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


@dataclass
class StreamRecord:
    time: float
    kind: str
    planes: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    scene_type: SceneType | None = None


@dataclass
class ObservationStream:
    listener: Pose
    sources: list
    scene_type: SceneType
    records: list


def segmentation_observations(rec: dict, shoebox: ShoeboxModel | None, t: float) -> list:
    """Project a labelled camera frame onto the current shoebox."""
    if shoebox is None:
        return []
    try:
        k = rec["intrinsics"]
        intr = Intrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]),
                          int(k["width"]), int(k["height"]))
        labels = np.asarray(rec["labels"], dtype=int)
        conf = np.asarray(rec.get("confidence", np.ones(labels.shape)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad segmentation record: {exc}") from None
    return project_face_coverage(shoebox, parse_pose(rec["camera"], "camera"), intr, labels, conf, t)


def load_stream(path_or_text) -> ObservationStream:
    """Read an observation stream.

    Records carry ``t`` (seconds, non-decreasing) and ``kind``, one of
    ``planes``, ``materials``, ``segmentation`` (label image plus camera
    pose and intrinsics) or ``scene_type``. Segmentation records keep their
    raw payload and are projected during replay.
    """
    data = _load_json(path_or_text, "observation stream")
    listener = parse_pose(data.get("listener"), "listener")
    sources = [(str(s.get("id", f"s{i}")), parse_pose(s, "source")) for i, s in enumerate(data.get("sources", []))]
    if not sources:
        raise InvalidScene("stream has no sources")
    records, last = [], -np.inf
    for rec in data.get("records", []):
        try:
            t, kind = float(rec["t"]), rec["kind"]
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"stream record needs t and kind: {rec}") from None
        if t < last:
            raise StreamOrderError(f"record at t={t} follows t={last}")
        last = t
        if kind not in RECORD_KINDS:
            raise ParseError(f"unknown record kind {kind!r}")
        r = StreamRecord(t, kind)
        if kind == "planes":
            r.planes = [parse_plane(p) for p in rec.get("planes", [])]
        elif kind == "materials":
            r.observations = [parse_observation(o) for o in rec.get("observations", [])]
        elif kind == "segmentation":
            r.observations = rec
        else:
            r.scene_type = SceneType.parse(rec.get("scene_type"))
        records.append(r)
    return ObservationStream(listener, sources, SceneType.parse(data.get("scene_type", "other")), records)


def load_calibration_dataset(path) -> list:
    """Read ``{"format_version": 1, "entries": [{"scene": {...} | "scene_file": ..., "rt60": [...]}]}``.

    Returns (SceneDescriptor, rt60) pairs. ``rt60`` falls back to the
    scene's ground truth.
    """
    data = _load_json(path, "calibration dataset")
    base = Path(path).parent if not str(path).lstrip().startswith("{") else Path(".")
    out = []
    for e in data.get("entries", []):
        if "scene" in e:
            scene = scene_from_dict({"format_version": FORMAT_VERSION, **e["scene"]})
        elif "scene_file" in e:
            scene = load_scene(base / e["scene_file"])
        else:
            raise ParseError("calibration entry needs scene or scene_file")
        rt = e.get("rt60", scene.ground_truth_rt60)
        if rt is None:
            raise ParseError(f"calibration entry {scene.scene_id} has no RT60")
        out.append((scene, _vector(rt, N_BANDS, "rt60")))
    return out


def load_grid(path) -> dict:
    data = _load_json(path, "grid")
    return {k: v for k, v in data.items() if k != "format_version"}

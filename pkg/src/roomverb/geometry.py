"""Shoebox room geometry.

A room is approximated by a cuboid that is axis-aligned in a room-local
frame. The local frame shares the world origin and the gravity axis (+z) and
is rotated about +z by ``frame_yaw`` so that its x/y axes follow the
dominant wall headings. Faces are indexed 0..5 as
``x_min, x_max, y_min, y_max, z_min (floor), z_max (ceiling)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateInput, InsufficientPlanes, OutOfRoom

FACE_NAMES = ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")

FAMILY_TOLERANCE = math.radians(15.0)
DEFAULT_FACE_OFFSET = 3.0
CLUSTER_DISTANCE = 0.25
SMOOTHING = 0.8
CONFIDENCE_DECAY = 0.99


def face_axis(face: int) -> int:
    return face // 2


def face_side(face: int) -> int:
    """0 for the min face of an axis, 1 for the max face."""
    return face % 2


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(angle: float) -> float:
    """Wrap to [-pi, pi)."""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


# Quaternions are stored scalar-first (w, x, y, z).

def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def matrix_to_quat(m) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(m).as_quat()
    return np.array([w, x, y, z])


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])


@dataclass(eq=False)
class Plane:
    """Observed planar patch ``{x : normal . x = offset}``.

    ``extent`` is the (width, height) of the patch's bounding rectangle in
    the plane. A non-unit normal is normalized and the offset rescaled so
    the plane itself is unchanged.
    """

    normal: np.ndarray
    offset: float
    extent: tuple = (0.0, 0.0)
    confidence: float = 1.0
    timestamp: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise DegenerateInput("plane normal has zero length")
        self.normal = n / norm
        self.offset = float(self.offset) / norm
        w, h = (float(v) for v in self.extent)
        if w < 0 or h < 0:
            raise ValueError("plane extent must be non-negative")
        self.extent = (w, h)
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("plane confidence must lie in [0, 1]")
        self.confidence = float(self.confidence)

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]


@dataclass(eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        norm = np.linalg.norm(q)
        if norm < 1e-12:
            raise DegenerateInput("orientation quaternion has zero length")
        self.orientation = q / norm

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)


@dataclass(frozen=True, eq=False)
class ShoeboxModel:
    """Cuboid room model in its yaw-fitted local frame.

    ``support`` holds a confidence in [0, 1] per face; 0 marks a face placed
    by the default rule rather than by an observed plane. ``previous`` keeps
    the bounds before the latest refinement step.
    """

    frame_yaw: float
    min_corner: np.ndarray
    max_corner: np.ndarray
    support: np.ndarray = field(default_factory=lambda: np.ones(6))
    previous: np.ndarray | None = None

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float).reshape(3)
        hi = np.asarray(self.max_corner, dtype=float).reshape(3)
        if not np.all(hi > lo):
            raise ValueError("max_corner must exceed min_corner on every axis")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)
        object.__setattr__(self, "frame_yaw", wrap_angle(float(self.frame_yaw)))
        object.__setattr__(self, "support", np.clip(np.asarray(self.support, dtype=float).reshape(6), 0.0, 1.0))

    @classmethod
    def from_dimensions(cls, dims, origin=(0.0, 0.0, 0.0), yaw: float = 0.0) -> "ShoeboxModel":
        origin = np.asarray(origin, dtype=float)
        return cls(yaw, origin, origin + np.asarray(dims, dtype=float))

    @classmethod
    def from_bounds(cls, bounds, yaw: float = 0.0, support=None, previous=None) -> "ShoeboxModel":
        b = np.asarray(bounds, dtype=float).reshape(6)
        return cls(yaw, b[0::2], b[1::2], np.ones(6) if support is None else support, previous)

    @property
    def bounds(self) -> np.ndarray:
        """Face coordinates in face order ``[x_min, x_max, y_min, ...]``."""
        return np.stack([self.min_corner, self.max_corner], axis=1).reshape(6)

    @property
    def dimensions(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def volume(self) -> float:
        return float(np.prod(self.dimensions))

    @property
    def face_areas(self) -> np.ndarray:
        lx, ly, lz = self.dimensions
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])

    @property
    def surface_area(self) -> float:
        return float(self.face_areas.sum())

    def to_local(self, points) -> np.ndarray:
        """World coordinates to room-local coordinates."""
        return np.asarray(points, dtype=float) @ yaw_matrix(self.frame_yaw)

    def to_world(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ yaw_matrix(self.frame_yaw).T

    def contains(self, point, tol: float = 0.0) -> bool:
        """Whether a room-local point lies inside the box."""
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.min_corner - tol) and np.all(p <= self.max_corner + tol))


def _is_horizontal(n: np.ndarray) -> bool:
    return abs(n[2]) >= math.cos(FAMILY_TOLERANCE)


def _is_vertical(n: np.ndarray) -> bool:
    return abs(n[2]) <= math.sin(FAMILY_TOLERANCE)


def dominant_yaw(planes: Iterable[Plane]) -> float:
    """Wall heading modulo 90 degrees, as a weighted circular mean.

    Headings are quadrupled so that walls facing any of the four directions
    vote for the same frame.
    """
    s = c = 0.0
    for p in planes:
        if not _is_vertical(p.normal):
            continue
        theta = math.atan2(p.normal[1], p.normal[0])
        w = max(p.confidence, 1e-12)
        s += w * math.sin(4.0 * theta)
        c += w * math.cos(4.0 * theta)
    if s == 0.0 and c == 0.0:
        return 0.0
    return math.atan2(s, c) / 4.0


def _fit_faces(planes: Sequence[Plane], yaw: float, reference: np.ndarray):
    """Per-face bound estimates in the local frame given by ``yaw``.

    Returns ``(bounds, confidence, supported)`` arrays of length 6.
    ``reference`` is a local point used to decide which side of the room a
    plane belongs to.
    """
    rot = yaw_matrix(yaw)
    candidates = [[] for _ in range(6)]
    cos_tol = math.cos(FAMILY_TOLERANCE)
    for p in planes:
        n = rot.T @ p.normal
        axis = int(np.argmax(np.abs(n)))
        if abs(n[axis]) < cos_tol:
            continue
        coord = reference[axis] + (p.offset - n @ reference) / n[axis]
        side = 0 if coord < reference[axis] else 1
        candidates[2 * axis + side].append((coord, p.confidence))

    bounds = np.zeros(6)
    conf = np.zeros(6)
    supported = np.zeros(6, dtype=bool)
    for face, cands in enumerate(candidates):
        if not cands:
            continue
        coords = np.array([c for c, _ in cands])
        weights = np.array([w for _, w in cands]) + 1e-12
        extreme = coords.min() if face_side(face) == 0 else coords.max()
        near = np.abs(coords - extreme) <= CLUSTER_DISTANCE
        bounds[face] = np.average(coords[near], weights=weights[near])
        conf[face] = min(1.0, float((weights[near] - 1e-12).max()))
        supported[face] = True
    return bounds, conf, supported


def estimate_shoebox(planes: Sequence[Plane], listener=None) -> ShoeboxModel:
    """Fit a shoebox to plane observations.

    Parameters
    ----------
    planes : sequence of Plane
        Must contain at least one near-horizontal plane and one
        near-vertical plane.
    listener : array_like, optional
        World position of the listener, used to split planes into the two
        sides of the room and to place unobserved faces. Defaults to the
        origin.

    Returns
    -------
    ShoeboxModel
    """
    planes = list(planes)
    if not any(_is_horizontal(p.normal) for p in planes):
        raise InsufficientPlanes("no near-horizontal (floor) plane observed")
    if not any(_is_vertical(p.normal) for p in planes):
        raise InsufficientPlanes("no near-vertical (wall) plane observed")

    yaw = dominant_yaw(planes)
    ref_world = np.zeros(3) if listener is None else np.asarray(listener, dtype=float)
    ref = ref_world @ yaw_matrix(yaw)
    bounds, conf, supported = _fit_faces(planes, yaw, ref)
    for face in range(6):
        if not supported[face]:
            sign = -1.0 if face_side(face) == 0 else 1.0
            bounds[face] = ref[face_axis(face)] + sign * DEFAULT_FACE_OFFSET
    return ShoeboxModel.from_bounds(bounds, yaw, conf)


def update_shoebox(model: ShoeboxModel, planes: Sequence[Plane], reference=None,
                   smoothing: float = SMOOTHING, decay: float = CONFIDENCE_DECAY) -> ShoeboxModel:
    """One refinement tick.

    Faces with a fresh supporting plane move to
    ``smoothing * old + (1 - smoothing) * fresh``; other faces keep their
    bound. Support decays by ``decay`` and is raised to any fresh
    confidence. The local frame is kept fixed.
    """
    old = model.bounds
    ref = model.center if reference is None else np.asarray(reference, dtype=float)
    fresh, fresh_conf, supported = _fit_faces(list(planes), model.frame_yaw, ref)
    new = np.where(supported, smoothing * old + (1.0 - smoothing) * fresh, old)
    if not np.all(new[1::2] > new[0::2]):
        new = old
    conf = np.maximum(model.support * decay, np.where(supported, fresh_conf, 0.0))
    return ShoeboxModel.from_bounds(new, model.frame_yaw, conf, previous=old)


def minimal_rotation(v_orig, v_new) -> np.ndarray:
    """Smallest rotation taking the direction of ``v_orig`` onto ``v_new``.

    The antipodal case uses a fixed axis: ``v_orig`` crossed with the basis
    vector along its smallest-magnitude component (first such index).
    """
    a = np.asarray(v_orig, dtype=float)
    b = np.asarray(v_new, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise DegenerateInput("minimal_rotation needs two nonzero vectors")
    a = a / na
    b = b / nb
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    c = float(np.dot(a, b))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        e = np.zeros(3)
        e[int(np.argmin(np.abs(a)))] = 1.0
        k = np.cross(a, e)
        k /= np.linalg.norm(k)
        return 2.0 * np.outer(k, k) - np.eye(3)
    k = axis / s
    theta = math.atan2(s, c)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def nearest_wall_distances(shoebox: ShoeboxModel, point):
    """Distance from a local point to the nearer face on each axis.

    Returns ``(distances, sides)`` with ``sides[k]`` 0 for the min face.
    """
    p = np.asarray(point, dtype=float)
    to_min = p - shoebox.min_corner
    to_max = shoebox.max_corner - p
    sides = (to_max < to_min).astype(int)
    return np.where(sides == 1, to_max, to_min), sides


def map_pose_into_shoebox(pose: Pose, wall_distances, shoebox: ShoeboxModel,
                          sides=(0, 0, 0), companion: tuple[Pose, Pose] | None = None) -> Pose:
    """Place an entity in the shoebox so its wall distances are preserved.

    Parameters
    ----------
    pose : Pose
        Entity pose in world coordinates.
    wall_distances : array_like, shape (3,)
        Real-world distance to the nearest surface along each local axis.
    shoebox : ShoeboxModel
    sides : array_like, shape (3,)
        Which face each distance refers to: 0 = min face, 1 = max face.
    companion : (Pose, Pose), optional
        The paired entity's original world pose and its already mapped
        local pose. When given, the returned orientation is additionally
        rotated by the minimal rotation between the pre- and post-mapping
        entity-to-companion vectors.

    Returns
    -------
    Pose
        Position and orientation in room-local coordinates.
    """
    d = np.asarray(wall_distances, dtype=float).reshape(3)
    sides = np.asarray(sides, dtype=int).reshape(3)
    dims = shoebox.dimensions
    if np.any(d < 0) or np.any(d > dims + 1e-12):
        raise OutOfRoom(f"wall distances {d.tolist()} do not fit shoebox {dims.tolist()}")
    position = np.where(sides == 1, shoebox.max_corner - d, shoebox.min_corner + d)

    orientation = quat_multiply(quat_from_yaw(-shoebox.frame_yaw), pose.orientation)
    if companion is not None:
        other_orig, other_mapped = companion
        v_orig = shoebox.to_local(other_orig.position - pose.position)
        v_new = other_mapped.position - position
        if np.linalg.norm(v_orig) > 1e-12 and np.linalg.norm(v_new) > 1e-12:
            r = minimal_rotation(v_orig, v_new)
            orientation = quat_multiply(matrix_to_quat(r), orientation)
    return Pose(position, orientation)

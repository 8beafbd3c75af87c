"""Rotation-group arithmetic for SO(2) and SO(3).

Conventions
-----------
- Batches are plain numpy arrays: SO(2) poses are angles of shape ``(n,)``
  wrapped to ``(-pi, pi]``; SO(3) poses are unit quaternions ``(w, x, y, z)``
  of shape ``(n, 4)``.
- Quaternions are kept in a canonical hemisphere: ``w >= 0`` and, when
  ``w == 0``, the first nonzero of ``x, y, z`` is positive. This resolves the
  double cover so equal rotations have equal coordinates.
- Composition ``a * b`` corresponds to the matrix product ``R(a) @ R(b)``;
  the action on points is ``x -> R x``.
- Distances are geodesic angles in radians, in ``[0, pi]``.

:class:`Rotation2` and :class:`Rotation3` wrap single elements and own the
JSON wire format.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .errors import DataError, DimensionError

SO2 = "so2"
SO3 = "so3"
GROUPS = (SO2, SO3)

TWO_PI = 2.0 * np.pi
HALF_TURN_TOL = 1e-12


# ---------------------------------------------------------------------------
# SO(2)
# ---------------------------------------------------------------------------

def wrap_angle(a):
    """Wrap angles to ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    out = a - TWO_PI * np.ceil((a - np.pi) / TWO_PI)
    # ceil can land one period off for values a hair above an odd multiple of pi
    out = np.where(out <= -np.pi, out + TWO_PI, out)
    out = np.where(out > np.pi, out - TWO_PI, out)
    return out if out.ndim else float(out)


def so2_compose(a, b):
    return wrap_angle(np.asarray(a, dtype=float) + np.asarray(b, dtype=float))


def so2_inverse(a):
    return wrap_angle(-np.asarray(a, dtype=float))


def so2_distance(a, b):
    d = np.abs(wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return d if np.ndim(d) else float(d)


def so2_matrix(a):
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a), np.sin(a)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


# ---------------------------------------------------------------------------
# SO(3), quaternion storage
# ---------------------------------------------------------------------------

def quat_canonical(q):
    """Normalize and move quaternions into the canonical hemisphere."""
    q = np.array(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    lead = q[..., 0]
    # w == 0: decide by first nonzero imaginary component
    for i in (1, 2, 3):
        undecided = lead == 0.0
        if not np.any(undecided):
            break
        lead = np.where(undecided, q[..., i], lead)
    return np.where((lead < 0.0)[..., None], -q, q)


def quat_multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def so3_compose(a, b):
    return quat_canonical(quat_multiply(a, b))


def so3_inverse(q):
    q = np.array(q, dtype=float)
    q[..., 1:] *= -1.0
    return quat_canonical(q)


def so3_distance(a, b):
    """Geodesic angle between rotations.

    Equal to ``2 arccos(|<a, b>|)`` but evaluated through the relative
    rotation with ``atan2`` so that nearly equal inputs keep full precision.
    """
    rel = quat_multiply(so3_inverse(a), np.asarray(b, dtype=float))
    d = 2.0 * np.arctan2(np.linalg.norm(rel[..., 1:], axis=-1), np.abs(rel[..., 0]))
    return d if np.ndim(d) else float(d)


def so3_exp(v):
    """Axis-angle vector(s) to canonical quaternion(s)."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    small = theta < 1e-6
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(0.5 * safe) / safe)
    q = np.concatenate([np.cos(0.5 * theta), k * v], axis=-1)
    return quat_canonical(q)


def so3_log(q, *, with_flag=False):
    """Canonical quaternion(s) to axis-angle vector(s) with norm in ``[0, pi]``.

    At exactly a half turn the log is not unique; the canonical hemisphere
    already fixes the axis sign (positive first component), and
    ``with_flag=True`` additionally returns a boolean mask marking angles
    within ``2 * HALF_TURN_TOL`` of pi.
    """
    q = quat_canonical(q)
    w = q[..., :1]
    xyz = q[..., 1:]
    n = np.linalg.norm(xyz, axis=-1, keepdims=True)
    small = n < 1e-8
    theta = 2.0 * np.arctan2(n, w)
    scale = np.where(small, 2.0 / np.where(w == 0, 1.0, w), theta / np.where(small, 1.0, n))
    v = scale * xyz
    if with_flag:
        return v, (q[..., 0] <= HALF_TURN_TOL)
    return v


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def matrix_to_quat(m):
    m = np.asarray(m, dtype=float)
    xyzw = _ScipyRotation.from_matrix(m.reshape(-1, 3, 3)).as_quat()
    q = quat_canonical(xyzw[:, [3, 0, 1, 2]])
    return q.reshape(m.shape[:-2] + (4,))


def rotz(angle):
    """Quaternion of a rotation about the z axis (handy in tests and presets)."""
    return so3_exp(np.array([0.0, 0.0, angle]))


# ---------------------------------------------------------------------------
# Group-generic helpers
# ---------------------------------------------------------------------------

def identity(group, n=None):
    if group == SO2:
        return 0.0 if n is None else np.zeros(n)
    e = np.array([1.0, 0.0, 0.0, 0.0])
    return e if n is None else np.tile(e, (n, 1))


def compose(group, a, b):
    return so2_compose(a, b) if group == SO2 else so3_compose(a, b)


def inverse(group, a):
    return so2_inverse(a) if group == SO2 else so3_inverse(a)


def distance(group, a, b):
    return so2_distance(a, b) if group == SO2 else so3_distance(a, b)


def as_matrix(group, a):
    return so2_matrix(a) if group == SO2 else quat_to_matrix(a)


def sample_haar(group, n, rng):
    """Draw ``n`` Haar-uniform rotations.

    SO(2) angles are uniform on the circle; SO(3) quaternions are normalized
    4D standard Gaussians.
    """
    rng = np.random.default_rng(rng)
    if group == SO2:
        return wrap_angle(rng.uniform(-np.pi, np.pi, size=n))
    if group == SO3:
        return quat_canonical(rng.standard_normal((n, 4)))
    raise ValueError(f"unknown group {group!r}")


def as_poses(group, poses):
    """Coerce a sequence of Rotation objects or raw values into a batch array."""
    if isinstance(poses, np.ndarray):
        arr = poses.astype(float, copy=False)
    else:
        items = list(poses)
        if items and isinstance(items[0], (Rotation2, Rotation3)):
            arr = np.array([p.value for p in items], dtype=float)
        else:
            arr = np.asarray(items, dtype=float)
    if group == SO2:
        return wrap_angle(arr.reshape(-1))
    return quat_canonical(arr.reshape(-1, 4))


# ---------------------------------------------------------------------------
# Element types and wire format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rotation2:
    angle: float = 0.0

    group = SO2

    def __post_init__(self):
        object.__setattr__(self, "angle", float(wrap_angle(self.angle)))

    @property
    def value(self):
        return self.angle

    def __mul__(self, other):
        return Rotation2(so2_compose(self.angle, other.angle))

    def inverse(self):
        return Rotation2(-self.angle)

    def distance(self, other):
        return so2_distance(self.angle, other.angle)

    def as_matrix(self):
        return so2_matrix(self.angle)

    def to_json(self):
        return {"type": SO2, "angle": self.angle}

    @classmethod
    def from_degrees(cls, deg):
        return cls(np.deg2rad(deg))


@dataclass(frozen=True, eq=False)
class Rotation3:
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    group = SO3

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float)
        if q.shape != (4,) or not np.all(np.isfinite(q)) or not np.any(q):
            raise DataError(f"invalid quaternion {self.quat!r}")
        q = quat_canonical(q)
        q.flags.writeable = False
        object.__setattr__(self, "quat", q)

    def __eq__(self, other):
        return isinstance(other, Rotation3) and np.array_equal(self.quat, other.quat)

    def __hash__(self):
        return hash(self.quat.tobytes())

    def __repr__(self):
        return f"Rotation3(quat={self.quat.tolist()})"

    @property
    def value(self):
        return self.quat

    def __mul__(self, other):
        return Rotation3(so3_compose(self.quat, other.quat))

    def inverse(self):
        return Rotation3(so3_inverse(self.quat))

    def distance(self, other):
        return so3_distance(self.quat, other.quat)

    def as_matrix(self):
        return quat_to_matrix(self.quat)

    def log(self):
        return so3_log(self.quat)

    def to_json(self):
        return {"type": SO3, "quat": self.quat.tolist()}

    @classmethod
    def from_matrix(cls, m):
        return cls(matrix_to_quat(m))

    @classmethod
    def exp(cls, v):
        return cls(so3_exp(v))


Rotation = Union[Rotation2, Rotation3]


def rotation(group, value) -> Rotation:
    return Rotation2(value) if group == SO2 else Rotation3(value)


def pose_to_json(group, value):
    return rotation(group, value).to_json()


def pose_from_json(obj) -> Rotation:
    """Parse the pose wire format; the hemisphere convention is applied on load."""
    if not isinstance(obj, dict):
        raise DataError(f"pose must be an object, got {type(obj).__name__}")
    kind = obj.get("type")
    try:
        if kind == SO2:
            angle = obj["angle"]
            if isinstance(angle, bool) or not np.isfinite(float(angle)):
                raise DataError(f"invalid angle {angle!r}")
            return Rotation2(float(angle))
        if kind == SO3:
            quat = obj["quat"]
            if not isinstance(quat, list) or len(quat) != 4:
                raise DataError(f"quat must be a list of 4 numbers, got {quat!r}")
            return Rotation3(np.array([float(c) for c in quat]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed pose {obj!r}: {exc}") from None
    raise DataError(f"unknown pose type {kind!r}")


# ---------------------------------------------------------------------------
# Point sets and the group action
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointSet:
    points: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] not in (2, 3):
            raise DataError(f"points must have shape (n>0, 2|3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("points must be finite")
        labels = tuple(str(s) for s in self.labels) if self.labels else ("",) * len(pts)
        if len(labels) != len(pts):
            raise DataError("one label per point required")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def rms_distance(self, other: "PointSet") -> float:
        return float(np.sqrt(np.mean(np.sum((self.points - other.points) ** 2, axis=1))))

    def to_json(self):
        return {"points": self.points.tolist(), "labels": list(self.labels)}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(np.asarray(obj["points"], dtype=float), tuple(obj.get("labels", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed shape: {exc}") from None


def apply_action(g, x: PointSet) -> PointSet:
    """Rotate every point of ``x`` by ``g``; labels are untouched."""
    if isinstance(g, (Rotation2, Rotation3)):
        group, value = g.group, g.value
    else:
        value = np.asarray(g, dtype=float)
        group = SO3 if value.shape == (4,) else SO2
    dim = 2 if group == SO2 else 3
    if x.dim != dim:
        raise DimensionError(f"{group} acts on {dim}D points, got {x.dim}D")
    R = as_matrix(group, value)
    return PointSet(x.points @ R.T, x.labels)


def align_rotation(group, source: np.ndarray, target: np.ndarray):
    """Least-squares rotation taking ``source`` points onto ``target`` (Kabsch)."""
    if group == SO2:
        cross = np.sum(source[:, 0] * target[:, 1] - source[:, 1] * target[:, 0])
        dot = np.sum(source[:, 0] * target[:, 0] + source[:, 1] * target[:, 1])
        return float(np.arctan2(cross, dot))
    rot, _ = _ScipyRotation.align_vectors(target, source)
    return quat_canonical(rot.as_quat()[[3, 0, 1, 2]])

"""Synthetic class-pose world and dataset I/O.

Each class has a natural point-set pose ``gamma``, an identity-centered
symmetry model ``mu`` and an arbitrary canonical offset. An instance is made
by drawing ``g ~ mu`` and emitting

- pose ``g * offset * delta`` with ``delta`` a random rotation of angle at
  most ``eps_pose``,
- embedding ``anchor + N(0, eps_latent^2)``,
- shape ``g . gamma`` plus per-point noise of norm at most ``eps_shape``.

This is what a trained invariant/equivariant autoencoder would report: the
pose is relative to its own (arbitrarily oriented) canonical reconstruction.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import groups
from .distributions import (
    MatrixFisher3, SymmetryModel, UniformArc2, WrappedGaussian2, model_from_json, model_to_json,
    sample,
)
from .errors import ConfigError, DataError, EmptyDatasetError
from .groups import SO2, SO3, PointSet, Rotation, Rotation2, Rotation3


@dataclass(frozen=True, eq=False)
class ClassSpec:
    class_id: str
    model: SymmetryModel
    canonical_offset: Rotation
    latent_anchor: np.ndarray
    natural_pose: Optional[PointSet] = None
    eps_shape: float = 0.0
    eps_latent: float = 0.0
    eps_pose: float = 0.0

    def __post_init__(self):
        anchor = np.array(self.latent_anchor, dtype=float).reshape(-1)
        anchor.flags.writeable = False
        object.__setattr__(self, "latent_anchor", anchor)
        for name in ("eps_shape", "eps_latent", "eps_pose"):
            value = getattr(self, name)
            if not value >= 0:
                raise ConfigError(f"{self.class_id}: {name} must be >= 0")
        if self.canonical_offset.group != self.model.group:
            raise ConfigError(f"{self.class_id}: offset group does not match model group")
        if self.natural_pose is not None:
            dim = 2 if self.group == SO2 else 3
            if self.natural_pose.dim != dim:
                raise ConfigError(f"{self.class_id}: natural pose must be {dim}D")

    @property
    def group(self):
        return self.model.group

    def to_json(self):
        return {
            "class_id": self.class_id,
            "model": model_to_json(self.model),
            "canonical_offset": self.canonical_offset.to_json(),
            "latent_anchor": self.latent_anchor.tolist(),
            "natural_pose": None if self.natural_pose is None else self.natural_pose.to_json(),
            "eps_shape": self.eps_shape,
            "eps_latent": self.eps_latent,
            "eps_pose": self.eps_pose,
        }

    @classmethod
    def from_json(cls, obj):
        try:
            pose = obj.get("natural_pose")
            return cls(
                class_id=str(obj["class_id"]),
                model=model_from_json(obj["model"]),
                canonical_offset=groups.pose_from_json(obj["canonical_offset"]),
                latent_anchor=np.asarray(obj["latent_anchor"], dtype=float),
                natural_pose=None if pose is None else PointSet.from_json(pose),
                eps_shape=float(obj.get("eps_shape", 0.0)),
                eps_latent=float(obj.get("eps_latent", 0.0)),
                eps_pose=float(obj.get("eps_pose", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed class spec: {exc}") from None


@dataclass(frozen=True)
class Sample:
    class_id: str
    z: np.ndarray
    pose: Rotation
    shape: Optional[PointSet] = None


@dataclass(eq=False)
class Dataset:
    """Columnar store of samples sharing one group and latent dimension.

    ``poses`` is an angle vector for SO(2) and an ``(n, 4)`` quaternion array
    for SO(3).
    """

    group: str
    class_ids: list
    z: np.ndarray
    poses: np.ndarray
    shapes: list = field(default_factory=list)

    def __post_init__(self):
        if self.group not in groups.GROUPS:
            raise DataError(f"unknown group {self.group!r}")
        self.class_ids = [str(c) for c in self.class_ids]
        self.z = np.asarray(self.z, dtype=float)
        self.poses = groups.as_poses(self.group, self.poses)
        n = len(self.class_ids)
        if not self.shapes:
            self.shapes = [None] * n
        if self.z.ndim != 2 or len(self.z) != n or len(self.poses) != n or len(self.shapes) != n:
            raise DataError("dataset columns have inconsistent lengths")

    def __len__(self):
        return len(self.class_ids)

    @property
    def latent_dim(self):
        return self.z.shape[1]

    def __getitem__(self, i) -> Sample:
        return Sample(self.class_ids[i], self.z[i], groups.rotation(self.group, self.poses[i]),
                      self.shapes[i])

    @property
    def samples(self):
        return [self[i] for i in range(len(self))]

    def with_poses(self, poses, shapes=None) -> "Dataset":
        return Dataset(self.group, list(self.class_ids), self.z.copy(), poses,
                       list(self.shapes) if shapes is None else shapes)

    def subset(self, indices) -> "Dataset":
        idx = [int(i) for i in np.asarray(indices).reshape(-1)]
        return Dataset(self.group, [self.class_ids[i] for i in idx], self.z[idx], self.poses[idx],
                       [self.shapes[i] for i in idx])

    def right_offset(self, h) -> "Dataset":
        """Every pose right-multiplied by ``h``: the same data seen through another canonical."""
        return self.with_poses(groups.compose(self.group, self.poses, h))

    def class_members(self):
        members: dict = {}
        for i, c in enumerate(self.class_ids):
            members.setdefault(c, []).append(i)
        return {c: np.array(ix) for c, ix in members.items()}


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def class_seed(master_seed: int, class_id: str) -> np.random.SeedSequence:
    digest = hashlib.sha256(str(class_id).encode("utf-8")).digest()
    return np.random.SeedSequence([int(master_seed), int.from_bytes(digest[:8], "little")])


def validate_specs(specs: Sequence[ClassSpec]):
    if not specs:
        raise ConfigError("at least one class spec is required")
    ids = [s.class_id for s in specs]
    dupes = sorted({c for c in ids if ids.count(c) > 1})
    if dupes:
        raise ConfigError(f"duplicate class_id: {', '.join(dupes)}")
    group = specs[0].group
    dim = len(specs[0].latent_anchor)
    for s in specs:
        if s.group != group:
            raise ConfigError(f"class {s.class_id}: mixed groups {group}/{s.group}")
        if len(s.latent_anchor) != dim:
            raise ConfigError(f"class {s.class_id}: latent dimension {len(s.latent_anchor)} != {dim}")
    for i, a in enumerate(specs):
        for b in specs[i + 1:]:
            gap = np.linalg.norm(a.latent_anchor - b.latent_anchor)
            if gap < 10.0 * max(a.eps_latent, b.eps_latent):
                raise ConfigError(
                    f"anchors of {a.class_id} and {b.class_id} are {gap:.3g} apart; "
                    "need >= 10x eps_latent")
    return group, dim


def random_rotation_bounded(group, n, max_angle, rng):
    """Isotropic random rotations with geodesic angle at most ``max_angle``."""
    if group == SO2:
        return groups.wrap_angle(rng.uniform(-max_angle, max_angle, size=n))
    axes = rng.standard_normal((n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, size=n)
    return groups.so3_exp(axes * angles[:, None])


def _bounded_point_noise(shape, radius, rng):
    directions = rng.standard_normal(shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * rng.uniform(0.0, radius, size=(shape[0], 1))


def generate_class(spec: ClassSpec, n: int, rng):
    """Draw ``n`` instances of one class; returns ``(z, poses, shapes, draws)``."""
    group = spec.group
    draws = sample(spec.model, n, rng)
    poses = groups.compose(group, draws, spec.canonical_offset.value)
    if spec.eps_pose > 0:
        delta = random_rotation_bounded(group, n, spec.eps_pose, rng)
        poses = groups.compose(group, poses, delta)
    z = spec.latent_anchor + spec.eps_latent * rng.standard_normal((n, len(spec.latent_anchor)))
    shapes = [None] * n
    if spec.natural_pose is not None:
        gamma = spec.natural_pose
        for i in range(n):
            pts = groups.apply_action(groups.rotation(group, draws[i]), gamma).points
            if spec.eps_shape > 0:
                pts = pts + _bounded_point_noise(pts.shape, spec.eps_shape, rng)
            shapes[i] = PointSet(pts, gamma.labels)
    return z, poses, shapes, draws


def generate_dataset(specs: Sequence[ClassSpec], n_per_class: int, seed: int = 0,
                     *, return_draws: bool = False):
    """Generate a dataset class by class with per-class derived seeds.

    Class ``c`` uses a generator seeded from ``(seed, sha256(c))`` so its
    samples do not depend on which other classes are present or their order.
    """
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    group, _ = validate_specs(specs)
    ids, zs, poses, shapes, draws = [], [], [], [], []
    for spec in specs:
        rng = np.random.default_rng(class_seed(seed, spec.class_id))
        z, p, s, d = generate_class(spec, n_per_class, rng)
        ids += [spec.class_id] * n_per_class
        zs.append(z)
        poses.append(p)
        shapes += s
        draws.append(d)
    ds = Dataset(group, ids, np.concatenate(zs), np.concatenate(poses), shapes)
    if return_draws:
        return ds, np.concatenate(draws)
    return ds


def encode_pose(spec: ClassSpec, shape: PointSet):
    """The oracle's pose encoder: best rotation from ``gamma`` onto ``shape``, times the offset.

    Equivariant by construction: ``encode_pose(spec, h . x) = h * encode_pose(spec, x)``.
    """
    if spec.natural_pose is None:
        raise DataError(f"class {spec.class_id} has no natural pose")
    r = groups.align_rotation(spec.group, spec.natural_pose.points, shape.points)
    return groups.compose(spec.group, r, spec.canonical_offset.value)


def encode_latent(spec: ClassSpec, rng):
    rng = np.random.default_rng(rng)
    return spec.latent_anchor + spec.eps_latent * rng.standard_normal(len(spec.latent_anchor))


def random_point_set(dim, n_points, rng, scale=1.0):
    pts = rng.standard_normal((n_points, dim)) * scale
    pts -= pts.mean(axis=0)
    labels = tuple(f"p{i}" for i in range(n_points))
    return PointSet(pts, labels)


# ---------------------------------------------------------------------------
# JSONL I/O
# ---------------------------------------------------------------------------

def sample_to_json(ds: Dataset, i: int) -> dict:
    obj = {"class": ds.class_ids[i], "z": ds.z[i].tolist(),
           "pose": groups.pose_to_json(ds.group, ds.poses[i])}
    if ds.shapes[i] is not None:
        obj["shape"] = ds.shapes[i].to_json()
    return obj


def save_dataset(ds: Dataset, path):
    """Write one JSON object per line. Floats use Python's round-trip repr."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(ds)):
            fh.write(json.dumps(sample_to_json(ds, i), separators=(",", ":")))
            fh.write("\n")


def load_dataset(path) -> Dataset:
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    group = None
    ids, zs, poses, shapes = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise DataError("line is not a JSON object")
                pose = groups.pose_from_json(obj["pose"])
                z = np.asarray(obj["z"], dtype=float)
                if z.ndim != 1 or not np.all(np.isfinite(z)):
                    raise DataError("z must be a finite vector")
                shape = PointSet.from_json(obj["shape"]) if obj.get("shape") is not None else None
                cls = str(obj["class"]) if "class" in obj else ""
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if group is None:
                group = pose.group
            elif pose.group != group:
                raise DataError(f"{path}:{lineno}: mixed group tags ({group} and {pose.group})")
            if zs and len(z) != len(zs[0]):
                raise DataError(f"{path}:{lineno}: latent dimension {len(z)} != {len(zs[0])}")
            ids.append(cls)
            zs.append(z)
            poses.append(pose.value)
            shapes.append(shape)
    if not ids:
        raise EmptyDatasetError(f"{path}: dataset is empty")
    return Dataset(group, ids, np.array(zs), np.array(poses), shapes)


def save_specs(specs: Sequence[ClassSpec], path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"classes": [s.to_json() for s in specs]}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_specs(path):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"truth file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    return [ClassSpec.from_json(c) for c in obj.get("classes", [])]


# ---------------------------------------------------------------------------
# TOML class specs
# ---------------------------------------------------------------------------

def _num(entry, key, where, default=None):
    """Read ``key`` (radians) or ``key_deg`` (degrees) from a TOML table."""
    if key in entry:
        value = entry[key]
    elif f"{key}_deg" in entry:
        value = np.deg2rad(entry[f"{key}_deg"])
    elif default is not None:
        return default
    else:
        raise ConfigError(f"{where}.{key}: required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    return float(value)


def specs_from_config(cfg: dict, seed: int = 0):
    """Build class specs from a parsed TOML document.

    Schema::

        group = "so2"            # or "so3"
        latent_dim = 32
        [[class]]
        id = "seven"
        family = "uniform_arc"   # uniform_arc | wrapped_gaussian | matrix_fisher
        half_width_deg = 30      # or half_width (rad); sigma / sigma_deg; F = [[..],[..],[..]]
        offset_deg = 180         # so2: offset / offset_deg; so3: offset_quat = [w,x,y,z]
                                 # omitted -> random offset from the seed
        eps_pose = 0.02          # radians
        eps_latent = 0.05
        eps_shape = 0.0
        n_points = 6             # natural pose size, 0 = no shapes
        anchor = [...]           # optional; default scaled one-hot
    """
    group = cfg.get("group")
    if group not in groups.GROUPS:
        raise ConfigError(f"group: expected 'so2' or 'so3', got {group!r}")
    classes = cfg.get("class")
    if not isinstance(classes, list) or not classes:
        raise ConfigError("class: at least one [[class]] table is required")
    latent_dim = cfg.get("latent_dim", max(32, len(classes)))
    if not isinstance(latent_dim, int) or latent_dim < 1:
        raise ConfigError(f"latent_dim: expected a positive integer, got {latent_dim!r}")
    rng = np.random.default_rng([int(seed), 0x5EC])
    specs = []
    dim = 2 if group == SO2 else 3
    for i, entry in enumerate(classes):
        where = f"class[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected a table")
        cid = entry.get("id")
        if cid is None:
            raise ConfigError(f"{where}.id: required")
        family = entry.get("family")
        try:
            if family == "uniform_arc":
                model = UniformArc2(_num(entry, "half_width", where))
            elif family == "wrapped_gaussian":
                model = WrappedGaussian2(_num(entry, "sigma", where))
            elif family == "matrix_fisher":
                model = MatrixFisher3(np.asarray(entry["F"], dtype=float))
            else:
                raise ConfigError(f"{where}.family: unknown family {family!r}")
        except KeyError:
            raise ConfigError(f"{where}.F: required for matrix_fisher") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        except ConfigError as exc:
            msg = str(exc)
            raise ConfigError(msg if msg.startswith(where) else f"{where}: {msg}") from None
        if model.group != group:
            raise ConfigError(f"{where}.family: {family} does not live on {group}")
        if group == SO2:
            off = entry.get("offset", entry.get("offset_deg"))
            offset = (Rotation2(groups.sample_haar(SO2, 1, rng)[0]) if off is None
                      else Rotation2(_num(entry, "offset", where)))
        else:
            quat = entry.get("offset_quat")
            offset = (Rotation3(groups.sample_haar(SO3, 1, rng)[0]) if quat is None
                      else Rotation3(np.asarray(quat, dtype=float)))
        if "anchor" in entry:
            anchor = np.asarray(entry["anchor"], dtype=float)
            if anchor.shape != (latent_dim,):
                raise ConfigError(f"{where}.anchor: expected {latent_dim} numbers")
        else:
            if i >= latent_dim:
                raise ConfigError(f"{where}: more classes than latent_dim; give explicit anchors")
            anchor = np.zeros(latent_dim)
            anchor[i] = 1.0
        n_points = entry.get("n_points", 6)
        gamma = random_point_set(dim, n_points, rng) if n_points else None
        specs.append(ClassSpec(
            class_id=str(cid), model=model, canonical_offset=offset, latent_anchor=anchor,
            natural_pose=gamma,
            eps_shape=_num(entry, "eps_shape", where, 0.0),
            eps_latent=_num(entry, "eps_latent", where, 0.05),
            eps_pose=_num(entry, "eps_pose", where, 0.0),
        ))
    validate_specs(specs)
    return specs

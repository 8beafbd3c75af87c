"""Canonical orientation normalization and the pseudo-label regressors.

For a sample ``x`` the neighborhood of its embedding approximates its class.
The Fréchet mean of the neighbors' poses estimates the arbitrary canonical
offset; right-multiplying every neighbor pose by its inverse yields
identity-centered samples of the class's symmetry distribution, to which a
parametric family is fitted.

Running this at every training sample produces a pseudo-label table. Two
k-NN regressors over that table play the role of the learned maps: one
predicts symmetry parameters, the other the centering offset. Both read only
the embedding, never the pose.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import groups
from .distributions import (
    FAMILIES, SymmetryModel, family_group, fit_report, mean_model, model_from_json, model_to_json,
)
from .errors import ConfigError, DataError, NumericalError
from .frechet import FrechetConfig, frechet_mean
from .groups import SO2, PointSet
from .latent_index import Index, IndexConfig, build_index, query, query_many
from .oracle import Dataset, Sample

MAX_FAILURE_FRACTION = 0.5


@dataclass(frozen=True, eq=False)
class NormalizationResult:
    gamma_hat: object
    normalized_poses: np.ndarray
    theta_hat: SymmetryModel
    neighbor_indices: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PseudoLabel:
    z: np.ndarray
    gamma_hat: Optional[object]
    theta_hat: Optional[SymmetryModel]
    status: str = "ok"

    @property
    def ok(self):
        return self.status == "ok"


class PseudoLabelTable:
    """Per-sample ``(gamma_hat, theta_hat)`` estimates keyed by embedding."""

    def __init__(self, group, family, entries):
        self.group = group
        self.family = family
        self.entries = list(entries)
        if not self.entries:
            raise DataError("pseudo-label table is empty")
        self._ok = np.array([i for i, e in enumerate(self.entries) if e.ok], dtype=np.int64)
        self._index = build_index(np.array([self.entries[i].z for i in self._ok])) if len(self._ok) else None
        if len(self._ok):
            self._gammas = groups.as_poses(group, [self.entries[i].gamma_hat for i in self._ok])

    def __len__(self):
        return len(self.entries)

    @property
    def n_ok(self):
        return len(self._ok)

    @property
    def failures(self):
        return [(i, e.status) for i, e in enumerate(self.entries) if not e.ok]

    def neighbors(self, z, cfg: IndexConfig):
        """Positions (into the ok entries) of the nearest pseudo-labels to ``z``."""
        if self._index is None:
            raise DataError("pseudo-label table has no usable entries")
        k = min(cfg.k, len(self._ok))
        return query(self._index, z, IndexConfig(k, cfg.metric))

    def ok_entry(self, pos):
        return self.entries[self._ok[pos]]

    def neighbor_gammas(self, pos):
        return self._gammas[pos]

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                obj = {
                    "z": np.asarray(e.z).tolist(),
                    "gamma_hat": None if e.gamma_hat is None else groups.pose_to_json(self.group, e.gamma_hat),
                    "theta_hat": None if e.theta_hat is None else model_to_json(e.theta_hat),
                    "status": e.status,
                }
                fh.write(json.dumps(obj, separators=(",", ":")))
                fh.write("\n")

    @classmethod
    def from_jsonl(cls, path):
        entries = []
        group = family = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    gamma = theta = None
                    if obj.get("gamma_hat") is not None:
                        pose = groups.pose_from_json(obj["gamma_hat"])
                        group, gamma = pose.group, pose.value
                    if obj.get("theta_hat") is not None:
                        theta = model_from_json(obj["theta_hat"])
                        family = theta.family
                    entries.append(PseudoLabel(np.asarray(obj["z"], dtype=float), gamma, theta,
                                               str(obj.get("status", "ok"))))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
        if group is None:
            raise DataError(f"{path}: no successful pseudo-label entries")
        return cls(group, family, entries)


def _check_family(dataset: Dataset, family: str):
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    if family_group(family) != dataset.group:
        raise ConfigError(f"family {family} lives on {family_group(family)}, dataset is {dataset.group}")


def normalize_neighbors(group, poses, family, fcfg: FrechetConfig = FrechetConfig()):
    """Center a pose set at its Fréchet mean and fit ``family`` to the result.

    The spread is fitted with ``ddof=1`` since the center came from the same
    poses. Returns ``(gamma_hat, normalized_poses, fit_report)``.
    """
    gamma_hat = frechet_mean(group, poses, fcfg)
    normalized = groups.compose(group, poses, groups.inverse(group, gamma_hat))
    return gamma_hat, normalized, fit_report(family, normalized, ddof=1)


def normalize_class(dataset: Dataset, index: Index, x_index: int, cfg: IndexConfig = IndexConfig(),
                    family: str = "uniform_arc", fcfg: FrechetConfig = FrechetConfig()) -> NormalizationResult:
    _check_family(dataset, family)
    nbrs = query(index, dataset.z[x_index], cfg)
    return _normalize_at(dataset, x_index, nbrs, family, fcfg)


def _normalize_at(dataset, x_index, nbrs, family, fcfg):
    group = dataset.group
    poses = dataset.poses[nbrs]
    try:
        gamma_hat, normalized, report = normalize_neighbors(group, poses, family, fcfg)
    except NumericalError as exc:
        raise type(exc)(f"sample {x_index}: {exc}") from exc
    # dispersion of the centered set around the identity
    spread = float(np.sqrt(np.mean(groups.distance(group, normalized, groups.identity(group)) ** 2)))
    diagnostics = {"dispersion": spread, "fit_flags": list(report.flags)}
    if report.robust_half_width is not None:
        diagnostics["robust_half_width"] = report.robust_half_width
    if group != SO2:
        resid = groups.so3_log(normalized).mean(axis=0)
        diagnostics["residual"] = float(np.linalg.norm(resid))
    else:
        diagnostics["residual"] = float(abs(np.mean(np.sin(normalized))))
    return NormalizationResult(gamma_hat, normalized, report.model, nbrs, diagnostics)


def build_pseudo_labels(dataset: Dataset, index: Index, cfg: IndexConfig = IndexConfig(),
                        family: str = "uniform_arc", fcfg: FrechetConfig = FrechetConfig()) -> PseudoLabelTable:
    """Normalize at every sample. Per-entry failures are recorded, not raised,
    unless more than half the entries fail."""
    _check_family(dataset, family)
    neighbors = query_many(index, dataset.z, cfg)
    entries = []
    for i in range(len(dataset)):
        try:
            res = _normalize_at(dataset, i, neighbors[i], family, fcfg)
            entries.append(PseudoLabel(dataset.z[i], res.gamma_hat, res.theta_hat))
        except NumericalError as exc:
            reason = type(exc).__name__
            entries.append(PseudoLabel(dataset.z[i], None, None, f"failed:{reason}"))
    failed = sum(not e.ok for e in entries)
    if failed > MAX_FAILURE_FRACTION * len(entries):
        kinds = sorted({e.status for e in entries if not e.ok})
        raise NumericalError(f"{failed}/{len(entries)} pseudo-labels failed ({', '.join(kinds)})")
    return PseudoLabelTable(dataset.group, family, entries)


def predict_theta(table: PseudoLabelTable, z, cfg: IndexConfig = IndexConfig()) -> SymmetryModel:
    """Average of the neighbors' fitted parameters."""
    pos = table.neighbors(z, cfg)
    return mean_model(table.ok_entry(p).theta_hat for p in pos)


def predict_gamma(table: PseudoLabelTable, z, cfg: IndexConfig = IndexConfig(),
                  fcfg: FrechetConfig = FrechetConfig()):
    """Fréchet mean of the neighbors' centering offsets."""
    pos = table.neighbors(z, cfg)
    return frechet_mean(table.group, table.neighbor_gammas(pos), fcfg)


def absolute_pose(sample: Sample, table: PseudoLabelTable, cfg: IndexConfig = IndexConfig(),
                  fcfg: FrechetConfig = FrechetConfig()):
    """Pose relative to the predicted natural frame, ``psi(x) * Lambda(x)^-1``."""
    group = table.group
    gamma = predict_gamma(table, sample.z, cfg, fcfg)
    pose = getattr(sample.pose, "value", sample.pose)
    return groups.compose(group, pose, groups.inverse(group, gamma))


def canonicalize(sample: Sample, table: PseudoLabelTable, cfg: IndexConfig = IndexConfig(),
                 direction: str = "natural", fcfg: FrechetConfig = FrechetConfig()) -> PointSet:
    """Move a sample's shape into its natural frame.

    ``direction="natural"`` applies ``(psi(x) Lambda(x)^-1)^-1``, which takes
    the observed shape back onto the natural pose. ``direction="forward"``
    applies ``psi(x) Lambda(x)^-1`` itself.
    """
    if sample.shape is None:
        raise DataError("sample carries no shape to canonicalize")
    g_abs = absolute_pose(sample, table, cfg, fcfg)
    if direction == "natural":
        g = groups.inverse(table.group, g_abs)
    elif direction == "forward":
        g = g_abs
    else:
        raise ValueError(f"direction must be 'natural' or 'forward', got {direction!r}")
    return groups.apply_action(groups.rotation(table.group, g), sample.shape)

"""Evaluation metrics: exact Wasserstein distances, parameter errors, AUC."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import groups
from .distributions import MatrixFisher3, SymmetryModel, UniformArc2, WrappedGaussian2
from .errors import DataError
from .groups import SO2, SO3

MAX_W2_SIZE = 512


def wasserstein1_so2(a, b) -> float:
    """Exact W1 between equal-size empirical measures on the circle.

    With both sets sorted, some cyclic shift of the order-preserving matching
    is optimal, so every shift is evaluated and the best mean arc length kept.
    """
    a = np.sort(groups.as_poses(SO2, a))
    b = np.sort(groups.as_poses(SO2, b))
    n = len(a)
    if n != len(b):
        raise DataError(f"W1 needs equal sizes, got {n} and {len(b)}")
    if n == 0:
        raise DataError("W1 of empty sets is undefined")
    shifted = b[(np.arange(n)[:, None] + np.arange(n)[None, :]) % n]
    cost = np.abs(groups.wrap_angle(a[None, :] - shifted))
    return float(cost.mean(axis=1).min())


def wasserstein2_so3(a, b) -> float:
    """Exact W2 between equal-size empirical measures on SO(3) (optimal assignment)."""
    a = groups.as_poses(SO3, a)
    b = groups.as_poses(SO3, b)
    n = len(a)
    if n != len(b):
        raise DataError(f"W2 needs equal sizes, got {n} and {len(b)}")
    if n == 0:
        raise DataError("W2 of empty sets is undefined")
    if n > MAX_W2_SIZE:
        raise DataError(f"W2 limited to {MAX_W2_SIZE} points, got {n}")
    cost = groups.so3_distance(a[:, None, :], b[None, :, :]) ** 2
    rows, cols = optimize.linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def pose_set_distance(group, a, b) -> float:
    return wasserstein1_so2(a, b) if group == SO2 else wasserstein2_so3(a, b)


def theta_error(pred: SymmetryModel, true: SymmetryModel) -> float:
    """Degrees for SO(2) families; mean squared entrywise ``F`` error for matrix-Fisher."""
    if type(pred) is not type(true):
        raise DataError(f"family mismatch: {pred.family} vs {true.family}")
    if isinstance(pred, UniformArc2):
        return float(np.rad2deg(abs(pred.half_width - true.half_width)))
    if isinstance(pred, WrappedGaussian2):
        return float(np.rad2deg(abs(pred.sigma - true.sigma)))
    return float(np.mean((pred.F - true.F) ** 2))


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC; ties count half. Higher score means in-distribution.

    ``labels`` are ``"in"``/``"out"`` strings or booleans (``True`` = in).
    """
    scores = np.asarray(scores, dtype=float)
    lab = np.array([l == "in" if isinstance(l, str) else bool(l) for l in labels])
    if len(lab) != len(scores):
        raise DataError("scores and labels differ in length")
    n_in, n_out = int(lab.sum()), int((~lab).sum())
    if n_in == 0 or n_out == 0:
        raise DataError("AUC needs both in and out labels")
    if np.any(np.isnan(scores)):
        raise DataError("scores contain NaN")
    ranks = stats.rankdata(scores)
    u = ranks[lab].sum() - n_in * (n_in + 1) / 2.0
    return float(u / (n_in * n_out))


def pose_histogram(group, poses, bins=36):
    """Counts over angle (SO(2)) or geodesic angle from the identity (SO(3))."""
    if group == SO2:
        edges = np.linspace(-np.pi, np.pi, bins + 1)
        values = groups.as_poses(SO2, poses)
    else:
        edges = np.linspace(0.0, np.pi, bins + 1)
        values = groups.so3_distance(groups.identity(SO3), groups.as_poses(SO3, poses))
    counts, _ = np.histogram(values, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts


@dataclass
class ClassEval:
    class_id: str
    n: int
    w1: float
    theta_error: float
    gamma_error: float
    theta_pred: dict
    theta_true: dict


@dataclass
class EvalReport:
    group: str
    family: str
    per_class: list = field(default_factory=list)
    histograms: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def mae(self):
        return float(np.mean([c.theta_error for c in self.per_class])) if self.group == SO2 else None

    @property
    def mse(self):
        return float(np.mean([c.theta_error for c in self.per_class])) if self.group == SO3 else None

    def bucket_errors(self):
        """Mean parameter error over all classes sharing the same true model."""
        buckets = {}
        for c in self.per_class:
            key = json.dumps(c.theta_true, sort_keys=True)
            buckets.setdefault(key, []).append((c.n, c.theta_error))
        return {k: float(np.average([e for _, e in v], weights=[n for n, _ in v]))
                for k, v in sorted(buckets.items())}

    def to_json(self):
        return {
            "group": self.group,
            "family": self.family,
            "per_class": {c.class_id: {
                "n": c.n, "w1": c.w1, "theta_error": c.theta_error, "gamma_error_deg": c.gamma_error,
                "theta_pred": c.theta_pred, "theta_true": c.theta_true,
            } for c in self.per_class},
            "aggregate": {
                "mae_deg": self.mae,
                "mse": self.mse,
                "max_gamma_error_deg": max(c.gamma_error for c in self.per_class),
                "theta_error_by_truth": self.bucket_errors(),
                "histograms": {k: [int(v) for v in counts]
                               for k, (_, counts) in sorted(self.histograms.items())},
            },
            "failures": self.failures,
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_histograms(self, directory):
        for key, (centers, counts) in sorted(self.histograms.items()):
            write_histogram_csv(f"{directory}/{key}.csv", centers, counts)


def write_histogram_csv(path, centers, counts):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center", "count"])
        for c, n in zip(centers, counts):
            w.writerow([repr(float(c)), int(n)])

"""Fréchet (Karcher) means on SO(2) and SO(3).

Three estimators are provided:

- ``circular``: closed-form circular mean on SO(2).
- ``fisher_mode``: proper-rotation projection of the arithmetic mean matrix
  on SO(3) (the mode of a moment-matched matrix-Fisher fit). Default.
- ``karcher``: Riemannian gradient iteration on SO(3).

All three are right-equivariant, ``mean(S h) = mean(S) h``, which is what
makes normalization independent of the arbitrary canonical pose.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import groups
from .errors import ConvergenceError, DataError, DegenerateMeanError
from .groups import SO2, SO3

MIN_RESULTANT = 1e-6
MIN_SINGULAR = 1e-9

METHODS = ("circular", "karcher", "fisher_mode")


@dataclass(frozen=True)
class FrechetConfig:
    tol: Optional[float] = None
    max_iter: int = 100
    method: str = "fisher_mode"

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def tolerance(self, group):
        if self.tol is not None:
            return self.tol
        return 1e-9 if group == SO2 else 1e-8


@dataclass(frozen=True)
class KarcherResult:
    mean: np.ndarray
    residual: float
    iterations: int


def frechet_mean_so2(angles) -> float:
    """Circular mean ``atan2(sum sin, sum cos)``.

    Raises :class:`DegenerateMeanError` when the mean resultant length is
    below ``1e-6`` (antipodal or uniform data).
    """
    a = groups.as_poses(SO2, angles)
    if a.size == 0:
        raise DataError("cannot average an empty set of rotations")
    s, c = np.mean(np.sin(a)), np.mean(np.cos(a))
    if np.hypot(s, c) < MIN_RESULTANT:
        raise DegenerateMeanError(f"mean resultant length {np.hypot(s, c):.3g} too small")
    return float(groups.wrap_angle(np.arctan2(s, c)))


def project_to_rotation(m):
    """Closest proper rotation to ``m`` and its singular values (descending)."""
    u, d, vt = np.linalg.svd(m)
    if np.linalg.det(u @ vt) < 0:
        u = u.copy()
        u[:, -1] *= -1.0
    return u @ vt, d


def frechet_mean_so3_fisher_mode(quats) -> np.ndarray:
    q = groups.as_poses(SO3, quats)
    if len(q) == 0:
        raise DataError("cannot average an empty set of rotations")
    mbar = groups.quat_to_matrix(q).mean(axis=0)
    r, d = project_to_rotation(mbar)
    if d[-1] < MIN_SINGULAR:
        raise DegenerateMeanError(f"smallest singular value {d[-1]:.3g} of mean matrix too small")
    return groups.matrix_to_quat(r)


def frechet_mean_so3_karcher(quats, cfg: FrechetConfig = FrechetConfig()) -> KarcherResult:
    """Iterate ``y <- y exp(mean log(y^-1 g_i))`` until the tangent mean is below tol."""
    q = groups.as_poses(SO3, quats)
    if len(q) == 0:
        raise DataError("cannot average an empty set of rotations")
    tol = cfg.tolerance(SO3)
    try:
        y = frechet_mean_so3_fisher_mode(q)
    except DegenerateMeanError:
        y = q[0]
    residual = np.inf
    for it in range(1, cfg.max_iter + 1):
        step = groups.so3_log(groups.quat_multiply(groups.so3_inverse(y), q)).mean(axis=0)
        residual = float(np.linalg.norm(step))
        if residual < tol:
            return KarcherResult(y, residual, it - 1)
        y = groups.so3_compose(y, groups.so3_exp(step))
    step = groups.so3_log(groups.quat_multiply(groups.so3_inverse(y), q)).mean(axis=0)
    residual = float(np.linalg.norm(step))
    if residual < tol:
        return KarcherResult(y, residual, cfg.max_iter)
    raise ConvergenceError(
        f"Karcher iteration did not converge in {cfg.max_iter} steps (residual {residual:.3g})",
        last_iterate=y, residual=residual)


def frechet_mean(group, poses, cfg: FrechetConfig = FrechetConfig()):
    """Dispatch on group and configured method."""
    if group == SO2:
        return frechet_mean_so2(poses)
    if cfg.method == "karcher":
        return frechet_mean_so3_karcher(poses, cfg).mean
    return frechet_mean_so3_fisher_mode(poses)

"""Out-of-distribution pose detection.

A sample's pose relative to its predicted natural frame is scored under the
predicted symmetry model; a low log-likelihood flags an unusual pose.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import groups
from .distributions import log_density
from .errors import DataError
from .frechet import FrechetConfig
from .latent_index import IndexConfig
from .metrics import auc_roc
from .normalize import PseudoLabelTable, absolute_pose, predict_theta
from .oracle import Dataset, Sample

__all__ = ["OodScore", "absolute_pose", "score", "score_dataset", "evaluate_ood", "haar_repose",
           "write_scores_csv"]


@dataclass(frozen=True)
class OodScore:
    g_abs: object
    log_likelihood: float
    label: Optional[str] = None


def score(sample: Sample, table: PseudoLabelTable, cfg: IndexConfig = IndexConfig(),
          fcfg: FrechetConfig = FrechetConfig(), label=None, normalizer_seed: int = 0) -> OodScore:
    g_abs = absolute_pose(sample, table, cfg, fcfg)
    theta = predict_theta(table, sample.z, cfg)
    return OodScore(g_abs, log_density(theta, g_abs, seed=normalizer_seed), label)


def score_dataset(ds: Dataset, table: PseudoLabelTable, cfg: IndexConfig = IndexConfig(),
                  fcfg: FrechetConfig = FrechetConfig(), label=None):
    if ds.group != table.group:
        raise DataError(f"dataset group {ds.group} != table group {table.group}")
    return [score(ds[i], table, cfg, fcfg, label) for i in range(len(ds))]


def haar_repose(ds: Dataset, rng) -> Dataset:
    """Left-multiply every pose (and rotate every shape) by an independent Haar draw.

    Embeddings are invariant and stay put; this is the same object presented
    in a random orientation.
    """
    rng = np.random.default_rng(rng)
    h = groups.sample_haar(ds.group, len(ds), rng)
    poses = groups.compose(ds.group, h, ds.poses)
    shapes = [None if s is None else groups.apply_action(groups.rotation(ds.group, h[i]), s)
              for i, s in enumerate(ds.shapes)]
    return ds.with_poses(poses, shapes)


def evaluate_ood(dataset_in: Dataset, dataset_out: Dataset, table: PseudoLabelTable,
                 cfg: IndexConfig = IndexConfig(), fcfg: FrechetConfig = FrechetConfig()):
    if dataset_in.group != dataset_out.group or dataset_in.latent_dim != dataset_out.latent_dim:
        raise DataError("in and out datasets must share group and latent dimension")
    scores = score_dataset(dataset_in, table, cfg, fcfg, "in") + \
        score_dataset(dataset_out, table, cfg, fcfg, "out")
    auc = auc_roc([s.log_likelihood for s in scores], [s.label for s in scores])
    return {"auc": auc, "scores": scores}


def write_scores_csv(path, scores, class_ids):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "class", "log_likelihood", "label"])
        for i, (s, c) in enumerate(zip(scores, class_ids)):
            w.writerow([i, c, repr(float(s.log_likelihood)), s.label or ""])

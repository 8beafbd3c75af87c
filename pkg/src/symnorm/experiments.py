"""Experiment presets and the end-to-end recovery pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import groups
from .distributions import (
    MatrixFisher3, UniformArc2, WrappedGaussian2, mean_model, model_to_json, reference_sample,
)
from .errors import ConfigError
from .frechet import FrechetConfig, frechet_mean
from .groups import SO2, SO3, Rotation2, Rotation3
from .latent_index import IndexConfig, build_index
from .metrics import ClassEval, EvalReport, pose_histogram, pose_set_distance, theta_error
from .normalize import PseudoLabelTable, build_pseudo_labels
from .oracle import ClassSpec, Dataset, random_point_set

PRESETS = ("mnist_analog", "fashion_analog", "fisher_analog")
DEFAULT_FAMILY = {SO2: "uniform_arc", SO3: "matrix_fisher"}
PRESET_FAMILY = {"mnist_analog": "uniform_arc", "fashion_analog": "wrapped_gaussian",
                 "fisher_analog": "matrix_fisher"}
PRESET_N = {"mnist_analog": 500, "fashion_analog": 500, "fisher_analog": 64}

F_TRUE = (
    np.diag([100.0, 0.001, 0.001]),
    np.diag([0.001, 100.0, 0.001]),
    np.diag([0.001, 0.001, 100.0]),
)

LATENT_DIM = 32
EPS_LATENT = 0.05
EPS_POSE = 0.02


def _specs(models, seed, eps_pose=EPS_POSE, eps_latent=EPS_LATENT, n_points=6):
    group = models[0].group
    rng = np.random.default_rng([int(seed), 0xC1A55])
    dim = 2 if group == SO2 else 3
    latent_dim = max(LATENT_DIM, len(models))
    specs = []
    for i, model in enumerate(models):
        offset = groups.sample_haar(group, 1, rng)[0]
        anchor = np.zeros(latent_dim)
        anchor[i] = 1.0
        specs.append(ClassSpec(
            class_id=str(i), model=model, canonical_offset=groups.rotation(group, offset),
            latent_anchor=anchor, natural_pose=random_point_set(dim, n_points, rng) if n_points else None,
            eps_latent=eps_latent, eps_pose=eps_pose))
    return specs


def mnist_analog(seed=0, **kw):
    """Ten uniform-arc classes: half width 60 deg for classes 0-4, 90 deg for 5-9."""
    models = [UniformArc2(np.deg2rad(60.0 if i < 5 else 90.0)) for i in range(10)]
    return _specs(models, seed, **kw)


def fashion_analog(seed=0, **kw):
    """Ten wrapped-Gaussian classes: sigma 0 (0-2), 32 deg (3-5), 64 deg (6-9)."""
    sig = [0.0] * 3 + [32.0] * 3 + [64.0] * 4
    return _specs([WrappedGaussian2(np.deg2rad(s)) for s in sig], seed, **kw)


def fisher_analog(seed=0, n_classes=30, **kw):
    """Matrix-Fisher classes assigned round-robin to the three ``F_TRUE`` presets."""
    return _specs([MatrixFisher3(F_TRUE[i % 3]) for i in range(n_classes)], seed, **kw)


def preset_specs(name, seed=0, **kw):
    try:
        return {"mnist_analog": mnist_analog, "fashion_analog": fashion_analog,
                "fisher_analog": fisher_analog}[name](seed, **kw)
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {PRESETS}") from None


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class Predictions:
    thetas: list
    gammas: np.ndarray
    g_abs: np.ndarray


def predict_all(dataset: Dataset, table: PseudoLabelTable, cfg: IndexConfig = IndexConfig(),
                fcfg: FrechetConfig = FrechetConfig()) -> Predictions:
    """Both regressors at every sample, sharing one neighbor query per sample."""
    group = dataset.group
    thetas, gammas = [], []
    for i in range(len(dataset)):
        pos = table.neighbors(dataset.z[i], cfg)
        thetas.append(mean_model(table.ok_entry(p).theta_hat for p in pos))
        gammas.append(frechet_mean(group, table.neighbor_gammas(pos), fcfg))
    gammas = groups.as_poses(group, gammas)
    g_abs = groups.compose(group, dataset.poses, groups.inverse(group, gammas))
    return Predictions(thetas, gammas, g_abs)


def dominant_axis(F):
    """Left singular vector of the largest singular value of ``F``."""
    u, _, _ = np.linalg.svd(np.asarray(F, dtype=float))
    return u[:, 0]


def axis_angle_deg(a, b):
    c = abs(float(np.dot(a, b))) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.rad2deg(np.arccos(min(1.0, c))))


def evaluate_recovery(dataset: Dataset, specs, table: PseudoLabelTable, preds: Predictions,
                      seed: int = 0) -> EvalReport:
    """Compare predictions against oracle ground truth, class by class.

    Per class: ``w1`` is the distance between the class's absolute poses and
    an equal-size reference sample of the true model (W1 on SO(2), W2 on
    SO(3)); ``theta_error`` is the mean per-sample parameter error of the
    predicted model; ``gamma_error`` is the geodesic distance in degrees
    between the true canonical offset and the class's offset estimate, taken
    as the Fréchet mean of the pseudo-label offsets of the class's samples.
    """
    group = dataset.group
    truth = {s.class_id: s for s in specs}
    report = EvalReport(group, table.family, failures=[list(f) for f in table.failures])
    rng = np.random.default_rng([int(seed), 0xE7A1])
    for cid, idx in dataset.class_members().items():
        spec = truth.get(cid)
        if spec is None:
            continue
        errs = [theta_error(preds.thetas[i], spec.model) for i in idx]
        g_abs = preds.g_abs[idx]
        if group == SO3 and len(g_abs) > 512:
            g_abs = g_abs[:512]
        ref = reference_sample(spec.model, len(g_abs), rng)
        w = pose_set_distance(group, g_abs, ref)
        own = []
        if len(table) == len(dataset):  # table built from this very dataset
            own = [table.entries[i].gamma_hat for i in idx if table.entries[i].ok]
        class_gamma = frechet_mean(group, own if own else preds.gammas[idx])
        gerr = float(np.rad2deg(groups.distance(group, class_gamma, spec.canonical_offset.value)))
        report.per_class.append(ClassEval(
            cid, len(idx), w, float(np.mean(errs)), gerr,
            model_to_json(mean_model(preds.thetas[i] for i in idx)), model_to_json(spec.model)))
        report.histograms[f"class_{cid}_relative"] = pose_histogram(group, dataset.poses[idx])
        report.histograms[f"class_{cid}_normalized"] = pose_histogram(group, preds.g_abs[idx])
    return report


def run_recovery(dataset: Dataset, specs, cfg: IndexConfig = IndexConfig(), family=None,
                 fcfg: FrechetConfig = FrechetConfig(), seed: int = 0):
    family = family or DEFAULT_FAMILY[dataset.group]
    index = build_index(dataset)
    table = build_pseudo_labels(dataset, index, cfg, family, fcfg)
    preds = predict_all(dataset, table, cfg, fcfg)
    return table, preds, evaluate_recovery(dataset, specs, table, preds, seed)

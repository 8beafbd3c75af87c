"""``symnorm`` command-line front end.

Every command is a pure function of its input files, the configuration and
``--seed``: rerunning it reproduces its outputs byte for byte.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical
degeneracy.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, experiments, groups, oracle
from .config import EXPERIMENTS, RunConfig, load_config
from .distributions import family_group, model_to_json
from .errors import ConfigError, DataError, SymnormError
from .frechet import frechet_mean
from .latent_index import build_index
from .normalize import PseudoLabelTable, build_pseudo_labels
from .ood import evaluate_ood, haar_repose, write_scores_csv

log = logging.getLogger("symnorm")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _fmt(x):
    return "none" if x is None else f"{x:.6g}"


# ---------------------------------------------------------------------------
# Shared steps
# ---------------------------------------------------------------------------

def _load_dataset(cfg: RunConfig, path):
    ds = oracle.load_dataset(path)
    if cfg.group is not None and cfg.group != ds.group:
        raise ConfigError(f"group: config says {cfg.group}, dataset {path} is {ds.group}")
    return ds


def _family(cfg: RunConfig, group):
    family = cfg.family or experiments.DEFAULT_FAMILY[group]
    if family_group(family) != group:
        raise ConfigError(f"family: {family} does not live on {group}")
    return family


def _pseudo_labels(cfg: RunConfig, ds, labels_path, family):
    if labels_path:
        table = PseudoLabelTable.from_jsonl(labels_path)
        if table.group != ds.group:
            raise ConfigError(f"pseudo-labels are {table.group}, dataset is {ds.group}")
        if table.family != family:
            raise ConfigError(f"pseudo-labels were fitted as {table.family}, requested {family}")
        return table
    return build_pseudo_labels(ds, build_index(ds), cfg.index, family, cfg.frechet)


def _specs(cfg: RunConfig):
    if cfg.experiment == "custom":
        if not cfg.classes:
            raise ConfigError("experiment: custom requires [[class]] tables in the config")
        return oracle.specs_from_config(cfg.custom_document(), cfg.seed)
    kw = {k: v for k, v in (("eps_pose", cfg.eps_pose), ("eps_latent", cfg.eps_latent)) if v is not None}
    specs = experiments.preset_specs(cfg.experiment, cfg.seed, **kw)
    if cfg.group is not None and specs[0].group != cfg.group:
        raise ConfigError(f"group: {cfg.experiment} is {specs[0].group}, config says {cfg.group}")
    return specs


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(cfg: RunConfig, args, out):
    specs = _specs(cfg)
    n = cfg.n_per_class or experiments.PRESET_N.get(cfg.experiment, 100)
    ds = oracle.generate_dataset(specs, n, seed=cfg.seed)
    oracle.save_dataset(ds, os.path.join(out, "dataset.jsonl"))
    oracle.save_specs(specs, os.path.join(out, "truth.json"))
    return f"gen: {cfg.experiment} group={ds.group} classes={len(specs)} samples={len(ds)}"


def cmd_normalize(cfg: RunConfig, args, out):
    ds = _load_dataset(cfg, args.data)
    family = _family(cfg, ds.group)
    table = build_pseudo_labels(ds, build_index(ds), cfg.index, family, cfg.frechet)
    table.to_jsonl(os.path.join(out, "pseudo_labels.jsonl"))
    _write_json(os.path.join(out, "normalize_report.json"), {
        "group": ds.group, "family": family, "k": cfg.k, "metric": cfg.metric,
        "frechet_method": cfg.frechet_method, "n": len(table), "n_ok": table.n_ok,
        "failures": [list(f) for f in table.failures],
    })
    return f"normalize: {table.n_ok}/{len(table)} pseudo-labels ok family={family}"


def cmd_estimate(cfg: RunConfig, args, out):
    ds = _load_dataset(cfg, args.data)
    family = _family(cfg, ds.group)
    table = _pseudo_labels(cfg, ds, args.labels, family)
    preds = experiments.predict_all(ds, table, cfg.index, cfg.frechet)
    with open(os.path.join(out, "estimates.jsonl"), "w", encoding="utf-8") as fh:
        for i in range(len(ds)):
            obj = {
                "class": ds.class_ids[i],
                "theta": model_to_json(preds.thetas[i]),
                "gamma": groups.pose_to_json(ds.group, preds.gammas[i]),
                "g_abs": groups.pose_to_json(ds.group, preds.g_abs[i]),
            }
            fh.write(json.dumps(obj, separators=(",", ":"), sort_keys=True))
            fh.write("\n")
    return f"estimate: {len(ds)} samples family={family}"


def cmd_eval(cfg: RunConfig, args, out):
    ds = _load_dataset(cfg, args.data)
    specs = oracle.load_specs(args.truth)
    if specs and specs[0].group != ds.group:
        raise ConfigError(f"truth file is {specs[0].group}, dataset is {ds.group}")
    family = _family(cfg, ds.group)
    table = _pseudo_labels(cfg, ds, args.labels, family)
    preds = experiments.predict_all(ds, table, cfg.index, cfg.frechet)
    report = experiments.evaluate_recovery(ds, specs, table, preds, cfg.seed)
    if not report.per_class:
        raise DataError("no dataset class matches the truth file")
    report.write(os.path.join(out, "report.json"))
    hist_dir = os.path.join(out, "histograms")
    os.makedirs(hist_dir, exist_ok=True)
    report.write_histograms(hist_dir)
    err = f"mae_deg={_fmt(report.mae)}" if ds.group == groups.SO2 else f"mse={_fmt(report.mse)}"
    worst = max(c.gamma_error for c in report.per_class)
    return f"eval: classes={len(report.per_class)} {err} max_gamma_error_deg={_fmt(worst)}"


def cmd_ood(cfg: RunConfig, args, out):
    ds = _load_dataset(cfg, args.data)
    family = _family(cfg, ds.group)
    if args.negatives:
        neg = _load_dataset(cfg, args.negatives)
    else:
        neg = haar_repose(ds, np.random.default_rng([cfg.seed, 0x00D]))
    table = _pseudo_labels(cfg, ds, args.labels, family)
    result = evaluate_ood(ds, neg, table, cfg.index, cfg.frechet)
    write_scores_csv(os.path.join(out, "ood_scores.csv"), result["scores"],
                     list(ds.class_ids) + list(neg.class_ids))
    _write_json(os.path.join(out, "ood_report.json"), {
        "auc": result["auc"], "n_in": len(ds), "n_out": len(neg), "family": family,
        "negatives": args.negatives or "haar_repose",
    })
    return f"ood: auc={_fmt(result['auc'])} n_in={len(ds)} n_out={len(neg)}"


def cmd_frechet(cfg: RunConfig, args, out):
    """Mean of a pose file: a dataset JSONL or one pose object per line."""
    poses, group = [], None
    try:
        with open(args.poses, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    pose = groups.pose_from_json(obj["pose"] if "pose" in obj else obj)
                except (json.JSONDecodeError, TypeError, KeyError) as exc:
                    raise DataError(f"{args.poses}:{lineno}: {exc}") from None
                if group is not None and pose.group != group:
                    raise DataError(f"{args.poses}:{lineno}: mixed group tags")
                group = pose.group
                poses.append(pose.value)
    except FileNotFoundError:
        raise DataError(f"pose file not found: {args.poses}") from None
    if not poses:
        raise DataError(f"{args.poses}: no poses")
    if cfg.group is not None and cfg.group != group:
        raise ConfigError(f"group: config says {cfg.group}, pose file is {group}")
    if group == groups.SO2:
        method = "circular"
    else:
        method = "karcher" if cfg.frechet_method == "karcher" else "fisher_mode"
    mean = frechet_mean(group, poses, cfg.frechet)
    obj = {"mean": groups.pose_to_json(group, mean), "n": len(poses), "method": method}
    _write_json(os.path.join(out, "frechet.json"), obj)
    return "frechet: " + json.dumps(obj, sort_keys=True)


COMMANDS = {
    "gen": cmd_gen, "normalize": cmd_normalize, "estimate": cmd_estimate,
    "eval": cmd_eval, "ood": cmd_ood, "frechet": cmd_frechet,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    # SUPPRESS keeps a subcommand from resetting a flag given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    pipeline = argparse.ArgumentParser(add_help=False)
    pipeline.add_argument("--data", required=True, help="dataset JSONL")
    pipeline.add_argument("--k", type=int, help="neighbors per query (default 25)")
    pipeline.add_argument("--metric", help="cosine or euclidean")
    pipeline.add_argument("--family", help="uniform_arc, wrapped_gaussian or matrix_fisher")
    pipeline.add_argument("--frechet-method", dest="frechet_method",
                          help="SO(3) mean: fisher_mode (default) or karcher")

    labels = argparse.ArgumentParser(add_help=False)
    labels.add_argument("--labels", help="pseudo-label JSONL from 'normalize' (rebuilt if omitted)")

    p = argparse.ArgumentParser(prog="symnorm", description=__doc__.splitlines()[0],
                                parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen", parents=[common], help="generate an oracle dataset")
    g.add_argument("--experiment", choices=EXPERIMENTS)
    g.add_argument("--n", type=int, dest="n_per_class", help="samples per class")

    sub.add_parser("normalize", parents=[common, pipeline], help="build the pseudo-label table")
    sub.add_parser("estimate", parents=[common, pipeline, labels],
                   help="predict symmetry parameters and offsets per sample")
    e = sub.add_parser("eval", parents=[common, pipeline, labels], help="score recovery against truth")
    e.add_argument("--truth", required=True, help="truth.json written by 'gen'")
    o = sub.add_parser("ood", parents=[common, pipeline, labels], help="out-of-distribution pose AUC")
    o.add_argument("--negatives", help="dataset of negatives (default: Haar re-posed inputs)")
    f = sub.add_parser("frechet", parents=[common], help="Fréchet mean of a pose file")
    f.add_argument("poses", help="JSONL of poses or a dataset")
    f.add_argument("--frechet-method", dest="frechet_method")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    verbose = getattr(args, "verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(
            getattr(args, "config", None), seed=getattr(args, "seed", None),
            output_dir=getattr(args, "out", None),
            **{k: getattr(args, k, None) for k in
               ("k", "metric", "family", "frechet_method", "experiment", "n_per_class")})
        out = cfg.output_dir
        os.makedirs(out, exist_ok=True)
        log.info("running %s into %s", args.command, out)
        summary = COMMANDS[args.command](cfg, args, out)
    except SymnormError as exc:
        print(f"symnorm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"symnorm {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    print(summary)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

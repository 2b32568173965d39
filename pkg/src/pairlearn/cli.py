"""Command-line entry point: ``gen-data``, ``train``, ``eval`` and ``landscape``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .data import (
    LabeledDataset,
    generate_blobs,
    labeled_split,
    load_csv_dataset,
    save_csv_dataset,
    train_test_split,
    write_metrics_csv,
    write_surface_csv,
)
from .errors import ConfigError, ContractError, PairlearnError
from .evaluation import evaluate_nodes
from .landscape import GridSpec, dataset_loss, evaluate_surface, mutual_directions, random_directions
from .model import MlpSpec, build, load_checkpoint, save_checkpoint
from .similarity import NoiseSpec, OracleSource
from .trainer import (
    make_evaluator,
    train_semi_supervised,
    train_supervised_pairwise,
    train_unsupervised_transfer,
)


class UsageError(PairlearnError):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_path(args, name: str) -> Path:
    if args.out is None:
        raise UsageError("no output directory: pass --out DIR")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _load_dataset(cfg: ExperimentConfig):
    d = cfg.data
    if d.path is not None:
        return load_csv_dataset(d.path, d.has_label_column)
    b = d.blobs
    return generate_blobs(b.n_classes, b.n_per_class, b.dim, b.separation, b.spread, b.seed)


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    if cfg.data.blobs is None:
        raise ConfigError("gen-data needs blob parameters in the data section")
    path = _out_path(args, cfg.output.dataset)
    dataset = _load_dataset(cfg)
    save_csv_dataset(dataset, path)
    print(f"wrote {path}: N={len(dataset)} d={dataset.dim} C={dataset.n_classes}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    ckpt_path = _out_path(args, cfg.output.checkpoint)
    metrics_path = _out_path(args, cfg.output.metrics)
    dataset = _load_dataset(cfg)
    if not isinstance(dataset, LabeledDataset):
        # transfer also needs them: hidden labels drive the simulated oracle and evaluation
        raise ConfigError("training data needs a label column")
    if cfg.paradigm == "transfer" and cfg.train.objective == "CE":
        raise ConfigError("the transfer paradigm has no class labels: use MCL or KCL")
    if cfg.paradigm == "semi" and cfg.data.labeled_fraction is None:
        raise ConfigError("the semi paradigm needs data.labeled_fraction")

    if cfg.data.test_fraction > 0:
        train_set, eval_set = train_test_split(dataset, cfg.data.test_fraction, cfg.data.split_seed)
    else:
        train_set, eval_set = dataset, dataset
    k = cfg.model.n_outputs or dataset.n_classes
    spec = MlpSpec((train_set.dim, *cfg.model.hidden, k), cfg.model.activation, cfg.model.seed)
    model = build(spec)
    evaluator = make_evaluator(eval_set.features, eval_set.labels, dataset.n_classes)

    if cfg.paradigm == "supervised":
        result = train_supervised_pairwise(model, train_set, cfg.train, evaluator)
    elif cfg.paradigm == "transfer":
        s = cfg.similarity
        noise = NoiseSpec(s.similar_recall, s.dissimilar_recall, s.similar_precision, s.dissimilar_precision, s.seed)
        pool = train_set.without_labels()
        source = OracleSource(pool.hidden_labels, noise)
        result = train_unsupervised_transfer(model, pool, source, cfg.train, evaluator)
    else:
        labeled, unlabeled = labeled_split(train_set, cfg.data.labeled_fraction, cfg.data.split_seed)
        train_cfg = cfg.train
        if cfg.similarity.augmentation_scale is not None:
            train_cfg = replace(train_cfg, augment_scale=cfg.similarity.augmentation_scale)
        result = train_semi_supervised(model, labeled, unlabeled, train_cfg, evaluator)

    save_checkpoint(result.model, ckpt_path)
    write_metrics_csv(result.history, metrics_path)
    if cfg.output.eval_data:
        save_csv_dataset(eval_set, _out_path(args, cfg.output.eval_data))
    report = evaluate_nodes(result.model.assign(eval_set.features), eval_set.labels, k, dataset.n_classes)
    line = f"final accuracy={_fmt(report.accuracy)} nmi={_fmt(report.nmi)}"
    if cfg.eval.report_ndc:
        line += f" ndc={report.ndc}"
    print(line)
    return 0


def cmd_eval(args) -> int:
    if not args.checkpoint or not args.data:
        raise UsageError("eval needs --checkpoint and --data")
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    model = load_checkpoint(args.checkpoint)
    dataset = load_csv_dataset(args.data, has_label_column=True)
    k_expected = args.k if args.k is not None else cfg.eval.k
    k = model.spec.n_outputs
    if k_expected is not None and k_expected != k:
        raise ContractError(f"checkpoint has {k} output nodes, --k says {k_expected}")
    if model.spec.n_inputs != dataset.dim:
        raise ContractError(f"checkpoint expects {model.spec.n_inputs} features, data has {dataset.dim}")
    report = evaluate_nodes(model.assign(dataset.features), dataset.labels, k, dataset.n_classes)
    print(f"accuracy={_fmt(report.accuracy)}")
    print(f"nmi={_fmt(report.nmi)}")
    print(f"ndc={report.ndc}")
    print("cluster_sizes=" + ",".join(str(int(s)) for s in report.cluster_sizes))
    for loss in ("MCL", "KCL", "CE"):
        if loss == "CE" and dataset.n_classes > k:
            continue
        print(f"loss_{loss.lower()}={_fmt(dataset_loss(model, dataset.features, dataset.labels, loss))}")
    return 0


def cmd_landscape(args) -> int:
    cfg = _config(args)
    ls = cfg.landscape
    surface_path = _out_path(args, cfg.output.surface)
    expected = 1 if ls.method == "random" else 3
    if len(ls.checkpoints) != expected:
        raise ConfigError(f"{ls.method} projection needs {expected} checkpoint(s), got {len(ls.checkpoints)}")
    models = [load_checkpoint(p) for p in ls.checkpoints]
    origin = models[0]
    for other in models[1:]:
        if other.spec.layer_sizes != origin.spec.layer_sizes:
            raise ContractError("checkpoints have different architectures")
    dataset = _load_dataset(cfg)
    if not isinstance(dataset, LabeledDataset):
        raise ConfigError("landscape needs labels to form loss targets")
    if ls.method == "random":
        delta, eta = random_directions(origin.params, ls.seed)
    else:
        delta, eta = mutual_directions(origin.params, models[1].params, models[2].params)
    grid = GridSpec(ls.alpha_range, ls.beta_range, ls.resolution)
    surface = evaluate_surface(
        origin,
        origin.params,
        delta,
        eta,
        grid,
        dataset.features,
        dataset.labels,
        loss=ls.loss,
        sigma=ls.sigma,
        method=ls.method,
        seed=ls.seed if ls.method == "random" else None,
        log_scale=ls.log_scale,
    )
    write_surface_csv(surface, surface_path)
    finite = surface.values[np.isfinite(surface.values)]
    low = _fmt(finite.min()) if finite.size else "inf"
    print(f"wrote {surface_path}: {ls.resolution}x{ls.resolution} {ls.loss} surface, min={low}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairlearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        if out:
            p.add_argument("--out", help="output directory")

    common(sub.add_parser("gen-data", help="write a synthetic blob dataset"))
    common(sub.add_parser("train", help="train a model and write checkpoint + metrics"))
    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled dataset")
    common(p, out=False)
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--k", type=int, help="expected number of output nodes")
    common(sub.add_parser("landscape", help="write a 2-D loss surface"))
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "landscape": cmd_landscape}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pairlearn: error: {exc}", file=sys.stderr)
        return 2
    except (PairlearnError, OSError) as exc:
        print(f"pairlearn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

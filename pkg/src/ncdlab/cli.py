"""Experiment runner.

    ncdlab <command> [--config PATH] [--set key=value ...] [--seed N] [--out DIR]

Commands: gen-data, pretrain, discover, evaluate, estimate-k, ablate,
dump-features. Each run writes into its own directory named from the
resolved-config hash and seed (root: --out, else $NCDLAB_RUNS, else ./runs);
the directory always contains the fully resolved config. Exit codes:
0 success, 1 usage, 2 config, 3 runtime.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, metrics, trainer
from .config import (ConfigError, ExperimentConfig, PRESETS, apply_set_flags,
                     load_config)
from .data import Dataset, load_dataset, save_dataset
from .model import DiscoveryNet

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

COMMANDS = ("gen-data", "pretrain", "discover", "evaluate", "estimate-k",
            "ablate", "dump-features")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ncdlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file (flat key = value lines)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="output root directory")
        if name in ("pretrain", "discover", "evaluate", "estimate-k", "dump-features"):
            p.add_argument("--data", default=None,
                           help="dataset file; generated from the config when omitted")
        if name == "discover":
            p.add_argument("--checkpoint", default=None,
                           help="pretraining checkpoint; pretrains first when omitted")
        if name in ("evaluate", "dump-features"):
            p.add_argument("--checkpoint", required=True)
        if name == "evaluate":
            p.add_argument("--split", choices=("train", "test", "both"), default="both")
            p.add_argument("--baseline-kmeans", action="store_true",
                           help="append a k-means-on-features baseline record")
        if name == "estimate-k":
            p.add_argument("--candidates", default="2,3,4,5,6,7,8",
                           help="comma-separated novel-cluster counts to sweep")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.preset:
        cfg = cfg.with_overrides(PRESETS[args.preset])
    cfg = apply_set_flags(cfg, args.set)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": str(args.seed)})
    return cfg


def _run_dir(args, cfg: ExperimentConfig, command: str) -> Path:
    root = Path(args.out or os.environ.get("NCDLAB_RUNS", "runs"))
    base = f"{command}-{cfg.content_hash()}-s{cfg.seed}"
    path = root / base
    attempt = 1
    while path.exists():  # never mutate a previous run's directory
        attempt += 1
        path = root / f"{base}-r{attempt}"
    path.mkdir(parents=True)
    (path / "config.txt").write_text(cfg.to_text())
    return path


def _load_data(args, cfg: ExperimentConfig) -> Dataset:
    if getattr(args, "data", None):
        return load_dataset(args.data)
    return cfg.make_dataset()


def _new_model(cfg: ExperimentConfig) -> DiscoveryNet:
    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**32 - 1]))
    return DiscoveryNet(cfg.model_config(), init_rng)


def _write_metrics(run: Path, name: str, report: metrics.MetricsReport,
                   extra_records: list[str] | None = None) -> None:
    records = report.to_records()
    if extra_records:
        records += "\n".join(extra_records) + "\n"
    (run / f"{name}.tsv").write_text(records)
    (run / f"{name}.txt").write_text(report.to_table())


def _cmd_gen_data(args, cfg: ExperimentConfig, run: Path) -> None:
    dataset = cfg.make_dataset()
    save_dataset(dataset, run / "dataset.txt")
    print(f"wrote {run / 'dataset.txt'}")


def _pretrain_into(run: Path, cfg: ExperimentConfig, dataset: Dataset) -> DiscoveryNet:
    model = _new_model(cfg)
    result = trainer.pretrain(model, dataset.train_data(), cfg.train_config(),
                              cfg.augment_policy(), log_path=run / "pretrain_log.jsonl")
    model.save(run / "pretrain.npz", extras={"phase": "pretrain"})
    print(f"pretrain: final loss {result.loss_curve[-1]:.6f} "
          f"-> {run / 'pretrain.npz'}")
    return model


def _cmd_pretrain(args, cfg: ExperimentConfig, run: Path) -> None:
    _pretrain_into(run, cfg, _load_data(args, cfg))


def _cmd_discover(args, cfg: ExperimentConfig, run: Path) -> None:
    dataset = _load_data(args, cfg)
    if args.checkpoint:
        model, _ = DiscoveryNet.load(args.checkpoint)
    else:
        model = _pretrain_into(run, cfg, dataset)

    tcfg = cfg.train_config()
    ocfg = cfg.objective_config()
    result = trainer.discover(model, dataset.train_data(), tcfg,
                              cfg.augment_policy(), ocfg,
                              log_path=run / "discover_log.jsonl",
                              checkpoint_every=cfg.checkpoint_every,
                              checkpoint_dir=run)
    head_losses = result.final_head_losses
    model.save(run / "discover.npz",
               extras={"phase": "discover", "head_losses": head_losses})
    for split in ("train", "test"):
        report = metrics.evaluate(model, dataset.eval_split(split), head_losses)
        _write_metrics(run, f"metrics_{split}", report)
    print(f"discover: final loss {result.loss_curve[-1]:.6f}, "
          f"best head {result.best_head} -> {run / 'discover.npz'}")


def _cmd_evaluate(args, cfg: ExperimentConfig, run: Path) -> None:
    dataset = _load_data(args, cfg)
    model, extras = DiscoveryNet.load(args.checkpoint)
    head_losses = extras.get("head_losses")
    splits = ("train", "test") if args.split == "both" else (args.split,)
    for split in splits:
        extra_records = []
        if args.baseline_kmeans:
            feats = model.encode(dataset.unlabeled_x).value
            result = baselines.kmeans(feats, dataset.num_unlabeled_classes,
                                      seed=cfg.seed)
            acc = metrics.cluster_accuracy(result.labels, dataset.hidden_unlabeled_y)
            extra_records.append(f"baseline_kmeans\ttask_aware\t-\t{acc:.6f}\t-\t-")
        report = metrics.evaluate(model, dataset.eval_split(split), head_losses)
        _write_metrics(run, f"metrics_{split}", report, extra_records)
        print(f"[{split}] best head {report.best_index}: "
              f"aware all {report.best.task_aware.overall:.4f}, "
              f"agnostic all {report.best.task_agnostic.overall:.4f}")


def _cmd_estimate_k(args, cfg: ExperimentConfig, run: Path) -> None:
    dataset = _load_data(args, cfg)
    try:
        candidates = [int(v) for v in args.candidates.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --candidates list: {args.candidates!r}")
    scores = baselines.candidate_scores(dataset.labeled_x, dataset.labeled_y,
                                        dataset.unlabeled_x, candidates,
                                        seed=cfg.seed)
    estimate = baselines.pick_estimate(scores)
    lines = ["candidate\tprobe_accuracy\tfree_silhouette"]
    lines += [f"{cand}\t{acc:.6f}\t{sil:.6f}" for cand, acc, sil in scores]
    lines.append(f"estimate\t{estimate}")
    (run / "estimate.txt").write_text("\n".join(lines) + "\n")
    print(f"estimated novel cluster count: {estimate}")


def _cmd_dump_features(args, cfg: ExperimentConfig, run: Path) -> None:
    dataset = _load_data(args, cfg)
    model, _ = DiscoveryNet.load(args.checkpoint)
    with open(run / "features.tsv", "w") as fh:
        fh.write("split\tsubset\tclass\t" +
                 "\t".join(f"f{i}" for i in range(model.config.feature_dim)) + "\n")
        for split in ("train", "test"):
            view = dataset.eval_split(split)
            feats = model.encode(view.x).value
            for cls, labeled, row in zip(view.y, view.labeled_mask, feats):
                subset = "labeled" if labeled else "unlabeled"
                fh.write(f"{split}\t{subset}\t{cls}\t" +
                         "\t".join("%.10g" % v for v in row) + "\n")
    print(f"wrote {run / 'features.tsv'}")


ABLATION_VARIANTS = (
    ("full", {}),
    ("no_concat", {"concat_logits": "false"}),
    ("no_over", {"use_overclustering": "false"}),
    ("weak_aug", {"augment": "weak"}),
)


def _cmd_ablate(args, cfg: ExperimentConfig, run: Path) -> None:
    rows = []
    for name, overrides in ABLATION_VARIANTS:
        vcfg = cfg.with_overrides(overrides)
        vdir = run / name
        vdir.mkdir()
        (vdir / "config.txt").write_text(vcfg.to_text())
        dataset = vcfg.make_dataset()
        model = _pretrain_into(vdir, vcfg, dataset)
        result = trainer.discover(model, dataset.train_data(), vcfg.train_config(),
                                  vcfg.augment_policy(), vcfg.objective_config(),
                                  log_path=vdir / "discover_log.jsonl")
        head_losses = result.final_head_losses
        model.save(vdir / "discover.npz",
                   extras={"phase": "discover", "head_losses": head_losses})
        report = metrics.evaluate(model, dataset.eval_split("test"), head_losses)
        _write_metrics(vdir, "metrics_test", report)
        rows.append((name, report.best))
        print(f"ablate[{name}]: agnostic all {report.best.task_agnostic.overall:.4f}")

    header = "variant\taware_lab\taware_unlab\taware_all\tagn_lab\tagn_unlab\tagn_all"
    lines = [header]
    pretty = [f"{'variant':>10} | {'aware All':>9} | {'agnostic All':>12}"]
    for name, best in rows:
        a, g = best.task_aware, best.task_agnostic
        lines.append(f"{name}\t{a.labeled:.6f}\t{a.unlabeled:.6f}\t{a.overall:.6f}"
                     f"\t{g.labeled:.6f}\t{g.unlabeled:.6f}\t{g.overall:.6f}")
        pretty.append(f"{name:>10} | {a.overall:9.4f} | {g.overall:12.4f}")
    (run / "summary.tsv").write_text("\n".join(lines) + "\n")
    (run / "summary.txt").write_text("\n".join(pretty) + "\n")


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "pretrain": _cmd_pretrain,
    "discover": _cmd_discover,
    "evaluate": _cmd_evaluate,
    "estimate-k": _cmd_estimate_k,
    "ablate": _cmd_ablate,
    "dump-features": _cmd_dump_features,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run = _run_dir(args, cfg, args.command)
        _HANDLERS[args.command](args, cfg, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point tying the pipeline together.

Usage::

    mosbench synth    --config cfg.txt [--set key=value ...] [--out DIR]
    mosbench train    --config cfg.txt [--set key=value ...] [--out DIR]
    mosbench evaluate --config cfg.txt [--set key=value ...] [--out DIR]
    mosbench predict  --config cfg.txt [--set key=value ...] [--out DIR]
    mosbench ablate   --config cfg.txt [--set key=value ...] [--out DIR]

Every command writes ``config_resolved.txt`` (the fully resolved settings)
into its output directory, making the run reproducible from disk alone.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig
from .corpus import Corpus, load_corpus, split_corpus
from .errors import ConfigError, MosbenchError
from .evaluation import (
    CORRECT_JUDGES,
    MEAN_ONLY,
    RANDOM_JUDGES,
    evaluate,
    predict_utterance,
    report_csv_rows,
    report_lines,
)
from .model import load_checkpoint
from .synthbench import export_corpus, generate_synthetic
from .training import run_seeds, train

ABLATION_VARIANTS = (
    # (name, TrainConfig overrides, inference mode used in the ablation table).
    # The bias-only variant has no mean path, so its table row uses the
    # judge-conditioned prediction without oracle knowledge of the raters.
    ("full", {}, MEAN_ONLY),
    ("no_biasnet", {"disable_biasnet": True}, MEAN_ONLY),
    ("no_meannet", {"disable_meannet": True}, RANDOM_JUDGES),
    ("no_cmse", {"disable_clipping": True}, MEAN_ONLY),
    ("no_reppad", {"zero_padding": True}, MEAN_ONLY),
)


def _require_manifest(cfg: RunConfig) -> Corpus:
    manifest = cfg.path("manifest")
    if manifest is None:
        raise ConfigError("paths.manifest is required for this command")
    audio_root = cfg.path("audio_root") or manifest.parent
    return load_corpus(manifest, audio_root, stft=cfg.stft_config(),
                       cache_dir=cfg.path("cache_dir"))


def _three_way_split(corpus: Corpus, cfg: RunConfig) -> tuple[Corpus, Corpus, Corpus]:
    return split_corpus(corpus, cfg.split_sizes, cfg.split_seed)


def _eval_subset(corpus: Corpus, cfg: RunConfig) -> Corpus:
    if cfg.eval_split == "all":
        return corpus
    parts = dict(zip(("train", "val", "test"), _three_way_split(corpus, cfg)))
    return parts[cfg.eval_split]


def _require_checkpoint(cfg: RunConfig):
    path = cfg.path("checkpoint")
    if path is None:
        raise ConfigError("paths.checkpoint is required for this command")
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def cmd_synth(cfg: RunConfig, out: Path) -> None:
    corpus, truth = generate_synthetic(cfg.synth_spec())
    manifest = export_corpus(corpus, out, stft=cfg.stft_config(), truth=truth)
    print(f"wrote {len(corpus)} entries, {corpus.num_judges} judges -> {manifest}")


def cmd_train(cfg: RunConfig, out: Path) -> None:
    corpus = _require_manifest(cfg)
    train_corpus, val_corpus, _ = _three_way_split(corpus, cfg)
    _, history = train(train_corpus, val_corpus, cfg.train_config(), run_dir=out)
    best = history.records[history.best_epoch_index()]
    print(f"trained {len(history.records)} epochs; best epoch {best.epoch} "
          f"(val_loss {best.val_loss:.6f}) -> {out / 'checkpoints' / 'best.pt'}")


def cmd_evaluate(cfg: RunConfig, out: Path) -> None:
    corpus = _eval_subset(_require_manifest(cfg), cfg)
    predictor = _require_checkpoint(cfg)
    all_rows = []
    for mode in cfg.eval_modes:
        report = evaluate(predictor, corpus, mode=mode, seed=cfg.eval_seed)
        report_path = out / f"report_{mode}.txt"
        report_path.write_text("\n".join(report_lines(report)) + "\n", encoding="utf-8")
        all_rows.extend(report_csv_rows(report))
        print(f"wrote {report_path}")
    with open(out / "reports.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["mode", "level", "metric", "value"])
        writer.writerows(all_rows)


def cmd_predict(cfg: RunConfig, out: Path) -> None:
    corpus = _eval_subset(_require_manifest(cfg), cfg)
    predictor = _require_checkpoint(cfg)
    mode = cfg.eval_modes[0]
    path = out / "predictions.csv"
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["audio_id", "system_id", "prediction"])
        for entry in corpus.entries:
            value = predict_utterance(predictor, entry, mode=mode, seed=cfg.eval_seed)
            writer.writerow([entry.audio_id, entry.system_id, f"{value:.10f}"])
    print(f"wrote {len(corpus)} predictions ({mode}) -> {path}")


def cmd_ablate(cfg: RunConfig, out: Path) -> None:
    """Train every ablation variant over the seed list and tabulate SRCC.

    ``ablation.csv`` mirrors the ablation rows (one per variant, SRCC only);
    ``conditions.csv`` holds the full model's three inference conditions at
    utterance level.
    """
    corpus = _require_manifest(cfg)
    train_corpus, val_corpus, test_corpus = _three_way_split(corpus, cfg)
    base = cfg.train_config()
    seeds = list(cfg.seeds)

    ablation_rows = []
    condition_rows = []
    for name, overrides, table_mode in ABLATION_VARIANTS:
        variant_cfg = replace(base, **overrides) if overrides else base
        modes = (MEAN_ONLY, CORRECT_JUDGES, RANDOM_JUDGES) if name == "full" else (table_mode,)
        sweep = run_seeds(train_corpus, val_corpus, test_corpus, variant_cfg,
                          seeds, modes, eval_seed=cfg.eval_seed)
        aggregate = sweep.aggregate()
        row = {"variant": name, "eval_mode": table_mode}
        for level in ("utterance", "system"):
            stats = aggregate.get((table_mode, level, "srcc"))
            row[f"{level}_srcc_mean"] = f"{stats[0]:.6f}" if stats else "undefined"
            row[f"{level}_srcc_std"] = f"{stats[1]:.6f}" if stats else "undefined"
            row[f"{level}_n"] = stats[2] if stats else 0
        ablation_rows.append(row)
        for failure in sweep.failures():
            print(f"warning: {name} seed {failure.seed} failed: {failure.error}",
                  file=sys.stderr)
        if name == "full":
            for mode in modes:
                crow = {"mode": mode}
                for metric in ("lcc", "srcc", "mse"):
                    stats = aggregate.get((mode, "utterance", metric))
                    crow[f"{metric}_mean"] = f"{stats[0]:.6f}" if stats else "undefined"
                    crow[f"{metric}_std"] = f"{stats[1]:.6f}" if stats else "undefined"
                condition_rows.append(crow)

    with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(ablation_rows[0]))
        writer.writeheader()
        writer.writerows(ablation_rows)
    with open(out / "conditions.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(condition_rows[0]))
        writer.writeheader()
        writer.writerows(condition_rows)
    for row in ablation_rows:
        print(f"{row['variant']:>11}: utterance srcc {row['utterance_srcc_mean']}, "
              f"system srcc {row['system_srcc_mean']}  [{row['eval_mode']}]")
    print(f"wrote {out / 'ablation.csv'} and {out / 'conditions.csv'}")


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mosbench",
        description="Mean-bias MOS prediction: synthesize data, train, evaluate, ablate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", type=Path, default=None,
                         help="run configuration file (defaults apply when omitted)")
        cmd.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="override a config key")
        cmd.add_argument("--out", type=Path, default=None,
                         help="output directory (default: mosbench_out/<command>)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.overrides)
        out = args.out if args.out is not None else Path("mosbench_out") / args.command
        out.mkdir(parents=True, exist_ok=True)
        cfg.write_snapshot(out / "config_resolved.txt")
        _COMMANDS[args.command](cfg, out)
    except MosbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

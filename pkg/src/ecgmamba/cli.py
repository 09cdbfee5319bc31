"""``ecgmamba`` command line: synth, train, eval, plot.

Exit status: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__

OUT_ENV = "ECGMAMBA_OUT"
log = logging.getLogger("ecgmamba")


def _default_out(sub: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "runs")) / sub


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(1)


def write_manifest(out_dir: Path, command: str, **fields) -> Path:
    """Record everything needed to rerun ``command``; written before any work."""
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "version": __version__, "output_dir": str(out_dir), **fields}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    from .dataio import label_vector, synth_generate, write_native
    from .dataio.records import LABEL_MAP_FILE

    out = Path(args.out)
    write_manifest(out, "synth", seed=args.seed, records=args.records, classes=args.classes, corpus=str(out))
    records, lmap = synth_generate(args.records, args.classes, args.seed)
    for r in records:
        write_native(r, out / f"{r.id}.ecg")
    lmap.save(out / LABEL_MAP_FILE)
    with (out / "labels.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "dx_codes", *lmap.class_names])
        for r in records:
            w.writerow([r.id, ";".join(r.dx_codes), *label_vector(r.dx_codes, lmap).tolist()])
    print(f"wrote {len(records)} records to {out}")
    return 0


def _resolve_model_config(run_cfg, corpus):
    defaults = {"n_classes": corpus.label_map.n_classes}
    return run_cfg.model_config(**defaults)


def cmd_train(args) -> int:
    from dataclasses import replace

    from . import checkpoint
    from .config import RunConfig, load_config
    from .dataio import load_corpus, make_split_plan
    from .model import Model
    from .plotting import plot_training_log
    from .train import evaluate, prepare_signals, train_loop

    run_cfg = load_config(args.config) if args.config else RunConfig()
    folds = args.folds if args.folds is not None else run_cfg.folds
    if folds < 2:
        raise UsageError("--folds must be >= 2")
    corpus = load_corpus(args.data)
    mcfg = _resolve_model_config(run_cfg, corpus)
    tcfg = run_cfg.train_config()
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    out = Path(args.out) if args.out else _default_out("train")
    write_manifest(
        out,
        "train",
        corpus=str(Path(args.data).resolve()),
        seed=tcfg.seed,
        folds=folds,
        test_frac=run_cfg.test_frac,
        model_config=mcfg.to_dict(),
        train_config=tcfg.to_dict(),
    )

    if mcfg.n_classes != corpus.label_map.n_classes:
        raise RuntimeError(f"config n_classes={mcfg.n_classes} but the corpus label map has {corpus.label_map.n_classes}")
    Y = corpus.labels()
    plan = make_split_plan(corpus.ids, Y, run_cfg.test_frac, folds, tcfg.seed)
    plan.save(out / "split.tsv")
    signals = prepare_signals(corpus)
    labels = dict(zip(corpus.ids, Y))

    rows = []
    for j in range(folds):
        fit, val = plan.fold(j)
        fold_dir = out / f"fold_{j}"
        log.info("fold %d: %d fit / %d val / %d test", j, len(fit), len(val), len(plan.test_ids))
        model = Model.init(mcfg, tcfg.seed)
        result = train_loop(model, corpus, fit, val, tcfg, fold_dir, signals)
        plot_training_log(result.rows, fold_dir / "curves.png", tcfg)
        final = checkpoint.load(result.paths["final"])
        test = evaluate(final, signals, labels, plan.test_ids) if plan.test_ids else None
        last = result.rows[-1]
        rows.append(
            [j, last.val_auprc, last.val_auroc, test.macro_auprc if test else np.nan, test.macro_auroc if test else np.nan]
        )

    table = np.array([r[1:] for r in rows], dtype=float)
    header = ["fold", "val_auprc", "val_auroc", "test_auprc", "test_auroc"]
    lines = ["\t".join(header)]
    lines += ["\t".join([str(r[0])] + [repr(float(v)) for v in r[1:]]) for r in rows]
    lines.append("\t".join(["mean"] + [repr(float(v)) for v in np.nanmean(table, axis=0)]))
    lines.append("\t".join(["std"] + [repr(float(v)) for v in np.nanstd(table, axis=0)]))
    (out / "summary.tsv").write_text("\n".join(lines) + "\n")
    mean, std = np.nanmean(table, axis=0), np.nanstd(table, axis=0)
    print(f"{folds}-fold validation macro AUPRC {mean[0]:.4f} ± {std[0]:.4f}, AUROC {mean[1]:.4f} ± {std[1]:.4f}")
    return 0


def cmd_eval(args) -> int:
    from . import checkpoint
    from .dataio import SplitPlan, load_corpus
    from .plotting import plot_report
    from .train import evaluate, prepare_signals

    ckpt = Path(args.checkpoint)
    out = Path(args.out) if args.out else ckpt.parent / f"eval_{ckpt.stem}"
    write_manifest(
        out,
        "eval",
        checkpoint=str(ckpt.resolve()),
        corpus=str(Path(args.data).resolve()),
        split=args.split,
        fold=args.fold,
    )
    model = checkpoint.load(ckpt)
    corpus = load_corpus(args.data)
    if model.config.n_classes != corpus.label_map.n_classes:
        raise RuntimeError(
            f"checkpoint predicts {model.config.n_classes} classes but the corpus label map defines "
            f"{corpus.label_map.n_classes}"
        )
    ids = corpus.ids
    if args.split:
        plan = SplitPlan.load(args.split)
        ids = plan.fold(args.fold)[1] if args.fold is not None else sorted(plan.test_ids)
    elif args.fold is not None:
        raise UsageError("--fold needs --split")
    corpus = corpus.select(ids)
    signals = prepare_signals(corpus)
    report = evaluate(model, signals, dict(zip(corpus.ids, corpus.labels())), corpus.ids)
    names = corpus.label_map.class_names
    (out / "report.txt").write_text(report.to_text(names))
    (out / "report.kv").write_text(report.to_kv())
    plot_report(report, out / "report.png", names)
    sys.stdout.write(report.to_text(names))
    return 0


def cmd_plot(args) -> int:
    from .config import load_config
    from .plotting import plot_training_log
    from .train import read_log

    rows = read_log(args.log)
    if not rows:
        raise RuntimeError(f"{args.log} has no epoch rows")
    schedule = load_config(args.config).train_config() if args.config else None
    plot_training_log(rows, args.out, schedule)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- parser


class UsageError(Exception):
    pass


def _positive(lo: int, hi: int | None = None):
    def parse(v: str) -> int:
        try:
            n = int(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {v!r}") from None
        if n < lo or (hi is not None and n > hi):
            raise argparse.ArgumentTypeError(f"must be in {lo}..{hi if hi is not None else 'inf'}")
        return n

    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecgmamba", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic native-format corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--records", type=_positive(1), default=64)
    s.add_argument("--classes", type=_positive(1, 26), default=2)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="stratified split + k-fold training")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", help=f"output directory (default ${OUT_ENV}/train or runs/train)")
    t.add_argument("--folds", type=_positive(2))
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", help="split plan; selects the test partition unless --fold is given")
    e.add_argument("--fold", type=_positive(0), help="evaluate this fold's validation records")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("plot", help="render learning-rate, loss and metric curves from a training log")
    g.add_argument("--log", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="overlay the continuous schedule from this config")
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _single_thread():
            return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            raise
        print(f"ecgmamba {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Adam with linear warm-up + cosine annealing, and the per-fold training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from . import tensor as T
from .dataio.records import Corpus
from .metrics import MetricReport, macro_report
from .model import Model, bce_loss
from .preprocess import fix_length, to_target_rate

log = logging.getLogger(__name__)

EVAL_BATCH = 16
LOG_HEADER = "# epoch\tlr\ttrain_loss\tval_auprc\tval_auroc"


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float = 6e-4
    warmup_start_lr: float = 1e-5
    min_lr: float = 1e-6
    warmup_epochs: int = 5
    cosine_epochs: int = 13
    total_epochs: int = 18
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.warmup_epochs + self.cosine_epochs != self.total_epochs:
            raise ValueError("warmup_epochs + cosine_epochs must equal total_epochs")
        if not 0 < self.min_lr < self.peak_lr:
            raise ValueError("need 0 < min_lr < peak_lr")
        if self.batch_size < 1 or self.cosine_epochs < 1 or self.warmup_epochs < 0:
            raise ValueError("batch_size and cosine_epochs must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in types:
                raise KeyError(f"unknown TrainConfig key {k!r}")
            kw[k] = float(v) if types[k] in ("float", float) else int(v)
        return cls(**kw)


def lr_at(epoch: float, cfg: TrainConfig = TrainConfig()) -> float:
    """Learning rate at a (fractional) epoch.

    Linear from ``warmup_start_lr`` to ``peak_lr`` over the warm-up, then a
    half cosine down to ``min_lr`` over ``cosine_epochs``; flat afterwards.
    """
    e = max(float(epoch), 0.0)
    if e < cfg.warmup_epochs:
        return cfg.warmup_start_lr + (cfg.peak_lr - cfg.warmup_start_lr) * (e / cfg.warmup_epochs)
    progress = min((e - cfg.warmup_epochs) / cfg.cosine_epochs, 1.0)
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, T.Tensor], state: AdamState, lr: float, cfg: TrainConfig = TrainConfig()) -> None:
    """One bias-corrected Adam update using each parameter's ``.grad``."""
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = np.zeros_like(p.data) if p.grad is None else p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


# ---------------------------------------------------------------- data plumbing


def prepare_signals(corpus: Corpus, target_fs: int = 500) -> dict[str, np.ndarray]:
    """Resample every record to ``target_fs`` once; cropping happens per batch."""
    return {r.id: to_target_rate(r.signal.samples, r.signal.fs, target_fs) for r in corpus.records}


def _batch(signals, ids, seq_len, rng=None) -> np.ndarray:
    return np.stack([fix_length(signals[i], seq_len, rng) for i in ids])


def predict(model: Model, signals: dict[str, np.ndarray], ids, batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Sigmoid scores ``[len(ids), n_classes]`` with deterministic (offset 0) crops."""
    ids = list(ids)
    out = []
    with T.no_grad():
        for s in range(0, len(ids), batch_size):
            x = _batch(signals, ids[s : s + batch_size], model.config.seq_len)
            out.append(T.sigmoid(model(x)).data)
    return np.concatenate(out) if out else np.zeros((0, model.config.n_classes))


def evaluate(model: Model, signals, labels: dict[str, np.ndarray], ids, batch_size: int = EVAL_BATCH) -> MetricReport:
    ids = list(ids)
    return macro_report(predict(model, signals, ids, batch_size), np.stack([labels[i] for i in ids]))


# ---------------------------------------------------------------- training


@dataclass
class EpochRow:
    epoch: int
    lr: float
    train_loss: float
    val_auprc: float
    val_auroc: float

    def to_line(self) -> str:
        return f"{self.epoch}\t{self.lr!r}\t{self.train_loss!r}\t{self.val_auprc!r}\t{self.val_auroc!r}"

    @classmethod
    def from_line(cls, line: str) -> "EpochRow":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise ValueError(f"training log row needs 5 tab-separated fields: {line!r}")
        return cls(int(parts[0]), *(float(p) for p in parts[1:]))


def read_log(path) -> list[EpochRow]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            rows.append(EpochRow.from_line(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rows


@dataclass
class TrainResult:
    rows: list[EpochRow]
    step_losses: list[float]
    steps: int
    best_epoch: int
    final_report: MetricReport | None
    paths: dict[str, Path] = field(default_factory=dict)


def _safe_report(model, signals, labels, ids):
    try:
        return evaluate(model, signals, labels, ids)
    except ValueError:  # every class skipped in this subset
        return None


def train_loop(
    model: Model,
    corpus: Corpus,
    fit_ids,
    val_ids,
    cfg: TrainConfig = TrainConfig(),
    out_dir=None,
    signals: dict[str, np.ndarray] | None = None,
) -> TrainResult:
    """Train ``model`` in place on ``fit_ids``; validate on ``val_ids`` after each epoch.

    With ``out_dir`` set, writes ``train_log.tsv`` (appended per epoch),
    ``final.ckpt`` and ``best.ckpt`` (highest validation macro AUPRC).
    """
    fit_ids, val_ids = list(fit_ids), list(val_ids)
    if not fit_ids:
        raise ValueError("empty training split")
    signals = prepare_signals(corpus) if signals is None else signals
    labels = dict(zip(corpus.ids, corpus.labels()))
    if model.config.n_classes != corpus.label_map.n_classes:
        raise ValueError(
            f"model has {model.config.n_classes} outputs but the label map has {corpus.label_map.n_classes} classes"
        )
    seq_len = model.config.seq_len
    rng = T.make_rng(cfg.seed, stream=1)
    params = model.named_parameters()
    state = AdamState()
    steps_per_epoch = math.ceil(len(fit_ids) / cfg.batch_size)

    paths = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"log": out_dir / "train_log.tsv", "final": out_dir / "final.ckpt", "best": out_dir / "best.ckpt"}
        paths["log"].write_text(LOG_HEADER + "\n")

    rows, step_losses = [], []
    best = (-math.inf, -1)
    report = None
    for epoch in range(cfg.total_epochs):
        order = rng.permutation(len(fit_ids))
        losses = []
        for s in range(steps_per_epoch):
            batch_ids = [fit_ids[i] for i in order[s * cfg.batch_size : (s + 1) * cfg.batch_size]]
            x = _batch(signals, batch_ids, seq_len, rng)
            y = np.stack([labels[i] for i in batch_ids])
            model.zero_grad()
            loss = bce_loss(model(x), y)
            T.backward(loss)
            adam_step(params, state, lr_at(epoch + s / steps_per_epoch, cfg), cfg)
            losses.append(loss.item())
        step_losses += losses

        report = _safe_report(model, signals, labels, val_ids) if val_ids else None
        auprc = report.macro_auprc if report else math.nan
        auroc = report.macro_auroc if report else math.nan
        row = EpochRow(epoch, lr_at(epoch, cfg), float(np.mean(losses)), auprc, auroc)
        rows.append(row)
        log.info("epoch %d lr %.3g loss %.4f val AUPRC %.4f AUROC %.4f", epoch, row.lr, row.train_loss, auprc, auroc)
        if out_dir is not None:
            with paths["log"].open("a") as fh:
                fh.write(row.to_line() + "\n")
        score = auprc if not math.isnan(auprc) else -row.train_loss
        if score > best[0]:
            best = (score, epoch)
            if out_dir is not None:
                checkpoint.save(model, paths["best"])
    if out_dir is not None:
        checkpoint.save(model, paths["final"])
    return TrainResult(rows, step_losses, state.t, best[1], report, paths)

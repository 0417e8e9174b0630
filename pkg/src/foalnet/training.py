"""Training loop: decoupled-weight-decay adaptive-moment optimizer, UA/WA
metrics, leave-one-group-out cross-validation, and the ablation grid.

Determinism contract: fixed seeds, config, and platform give bit-identical
histories. Fold seeds are base_seed XOR fold_index so folds differ from
each other while whole runs reproduce.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from io import StringIO

import numpy as np

from .data import Sample, make_batches, split_leave_one_group_out
from .model import FoalNet, FoalNetConfig, LossBreakdown
from .tensor import NumericError, ShapeError, Tensor, no_grad

ABLATION_CELLS = (
    ("Baseline", False, False),
    ("+AVEL", True, False),
    ("+MEM", False, True),
    ("+AVEL+MEM", True, True),
)


@dataclass
class OptimConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    epochs: int = 50
    seed: int = 0

    def validate(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {b}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class AdamW:
    """Bias-corrected adaptive moments with decoupled weight decay.

    Decay is applied first, as theta *= (1 - lr * wd), then the moment
    update; with zero gradients and nonzero decay parameters shrink
    geometrically, which is the decoupled formulation's signature.
    """

    def __init__(self, named_params, cfg: OptimConfig):
        cfg.validate()
        self.cfg = cfg
        self.params = list(named_params)
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}
        self.t = 0

    def step(self) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                raise ValueError(f"parameter {name!r} has no gradient; "
                                 "run backward (or zero-fill) before stepping")
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape "
                                 f"{p.data.shape} for {name!r}")
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            if cfg.weight_decay:
                p.data = p.data * (1.0 - cfg.lr * cfg.weight_decay)
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p.data = p.data - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


@dataclass
class Metrics:
    """Confusion rows are truth, columns are prediction; ua averages recall
    over the classes actually present in truth."""

    confusion: np.ndarray
    ua: float
    wa: float
    losses: LossBreakdown | None = None


def compute_metrics(truth, pred, classes: int) -> Metrics:
    t = np.asarray(truth, dtype=np.intp)
    p = np.asarray(pred, dtype=np.intp)
    if t.ndim != 1 or t.size == 0 or t.shape != p.shape:
        raise ValueError("truth and pred must be equal-length non-empty vectors")
    if t.min() < 0 or t.max() >= classes or p.min() < 0 or p.max() >= classes:
        raise ValueError(f"labels outside [0, {classes})")
    confusion = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(confusion, (t, p), 1)
    wa = float(np.trace(confusion) / t.size)
    row_totals = confusion.sum(axis=1)
    present = row_totals > 0
    recalls = np.diag(confusion)[present] / row_totals[present]
    ua = float(recalls.mean())
    return Metrics(confusion=confusion, ua=ua, wa=wa)


def predict(model: FoalNet, samples, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """(truth, prediction) label vectors over all samples, eval mode."""
    model.eval()
    truths, preds = [], []
    with no_grad():
        for batch in make_batches(samples, batch_size):
            logits = model.classify(Tensor(batch.audio), Tensor(batch.video))
            preds.append(logits.data.argmax(axis=1))
            truths.append(batch.labels)
    return np.concatenate(truths), np.concatenate(preds)


def evaluate(model: FoalNet, samples, batch_size: int = 64) -> Metrics:
    truth, pred = predict(model, samples, batch_size)
    return compute_metrics(truth, pred, model.config.classes)


@dataclass
class EpochRecord:
    epoch: int
    losses: LossBreakdown
    ua: float
    wa: float


@dataclass
class TrainResult:
    best_state: dict[str, np.ndarray]
    best_epoch: int
    best_metrics: Metrics | None
    history: list[EpochRecord] = field(default_factory=list)


def snapshot(model: FoalNet) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters()}


def apply_state(model: FoalNet, state: dict[str, np.ndarray]) -> None:
    for name, p in model.named_parameters():
        p.data = state[name].copy()
        p.grad = None


def _fill_missing_grads(model: FoalNet) -> None:
    # a disabled task leaves its private parameters off the tape; they
    # still take the decoupled decay, with an exact-zero moment update
    for p in model.parameters():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def _log_line(log, run_id: str, fold: int, record: EpochRecord) -> None:
    if log is None:
        return
    row = {
        "run_id": run_id,
        "fold": fold,
        "epoch": record.epoch,
        "l_total": record.losses.l_total,
        "l_ce": record.losses.l_ce,
        "l_a": record.losses.l_a,
        "l_m": record.losses.l_m,
        "ua": record.ua,
        "wa": record.wa,
    }
    log.write(json.dumps(row) + "\n")


def train(model: FoalNet, train_samples, val_samples, optim_cfg: OptimConfig,
          batch_size: int = 64, log=None, run_id: str = "run",
          fold: int = 0) -> TrainResult:
    """Epoch loop with shuffling, best-by-validation-UA model selection.

    Ties on UA keep the earlier epoch. Zero epochs returns the initial
    parameters and an empty history. A non-finite loss aborts with the
    epoch and batch index in the message.
    """
    optim_cfg.validate()
    optimizer = AdamW(model.named_parameters(), optim_cfg)
    shuffle_rng = np.random.default_rng(optim_cfg.seed)
    result = TrainResult(best_state=snapshot(model), best_epoch=0,
                         best_metrics=None)
    best_ua = -np.inf

    for epoch in range(1, optim_cfg.epochs + 1):
        model.train()
        order = shuffle_rng.permutation(len(train_samples))
        shuffled = [train_samples[i] for i in order]
        sums = np.zeros(4)
        batches = 0
        for b_idx, batch in enumerate(make_batches(shuffled, batch_size, train=True)):
            model.zero_grad()
            try:
                loss, parts = model.total_loss(batch)
                loss.backward()
            except NumericError as err:
                raise NumericError(
                    f"epoch {epoch} batch {b_idx}: {err}") from err
            _fill_missing_grads(model)
            optimizer.step()
            sums += (parts.l_total, parts.l_ce, parts.l_a, parts.l_m)
            batches += 1

        means = sums / max(batches, 1)
        val = evaluate(model, val_samples, batch_size)
        record = EpochRecord(epoch=epoch,
                             losses=LossBreakdown(*means.tolist()),
                             ua=val.ua, wa=val.wa)
        result.history.append(record)
        _log_line(log, run_id, fold, record)
        if val.ua > best_ua:
            best_ua = val.ua
            result.best_state = snapshot(model)
            result.best_epoch = epoch
            result.best_metrics = val
    return result


# -- cross-validation --------------------------------------------------------


@dataclass
class FoldResult:
    fold: int
    group: int
    seed: int
    best_epoch: int
    metrics: Metrics


@dataclass
class CrossValResult:
    name: str
    folds: list[FoldResult]
    mean_ua: float
    mean_wa: float


def _run_fold(args) -> tuple[FoldResult, str]:
    (fold_idx, group, train_samples, test_samples, model_cfg, optim_cfg,
     batch_size, run_id) = args
    fold_seed = model_cfg.seed ^ fold_idx
    model = FoalNet(dataclasses.replace(model_cfg, seed=fold_seed))
    ocfg = dataclasses.replace(optim_cfg, seed=optim_cfg.seed ^ fold_idx)
    sink = StringIO()
    outcome = train(model, train_samples, test_samples, ocfg,
                    batch_size=batch_size, log=sink, run_id=run_id,
                    fold=fold_idx)
    metrics = outcome.best_metrics
    if metrics is None:  # zero-epoch run: evaluate the initial parameters
        metrics = evaluate(model, test_samples, batch_size)
    fr = FoldResult(fold=fold_idx, group=group, seed=fold_seed,
                    best_epoch=outcome.best_epoch, metrics=metrics)
    return fr, sink.getvalue()


def cross_validate(samples: list[Sample], model_cfg: FoalNetConfig,
                   optim_cfg: OptimConfig, batch_size: int = 64,
                   log=None, run_id: str = "xval", jobs: int = 1,
                   name: str = "model") -> CrossValResult:
    """Leave-one-group-out: one model per distinct group, mean aggregate.

    Fold workers are independent; with jobs > 1 they run as separate
    processes and the parent serializes their log records afterwards, so
    the metrics file stays whole-line consistent.
    """
    folds = split_leave_one_group_out(samples)
    work = [(i, group, tr, te, model_cfg, optim_cfg, batch_size, run_id)
            for i, (group, tr, te) in enumerate(folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_fold, work))
    else:
        outcomes = [_run_fold(w) for w in work]
    results = []
    for fr, log_text in outcomes:
        results.append(fr)
        if log is not None:
            log.write(log_text)
    mean_ua = float(np.mean([fr.metrics.ua for fr in results]))
    mean_wa = float(np.mean([fr.metrics.wa for fr in results]))
    return CrossValResult(name=name, folds=results, mean_ua=mean_ua,
                          mean_wa=mean_wa)


def run_ablation(samples: list[Sample], model_cfg: FoalNetConfig,
                 optim_cfg: OptimConfig, batch_size: int = 64, log=None,
                 jobs: int = 1) -> list[CrossValResult]:
    """Cross-validate the four task-toggle cells, in grid order."""
    rows = []
    for cell_name, avel, mem in ABLATION_CELLS:
        cfg = dataclasses.replace(model_cfg, enable_avel=avel, enable_mem=mem)
        rows.append(cross_validate(samples, cfg, optim_cfg,
                                   batch_size=batch_size, log=log,
                                   run_id=cell_name, jobs=jobs,
                                   name=cell_name))
    return rows


def format_summary(rows: list[CrossValResult]) -> str:
    """Fixed-width per-fold and aggregate table for summary.txt."""
    lines = [f"{'run':<12} {'fold':>4} {'group':>5} {'best_ep':>7} "
             f"{'ua%':>7} {'wa%':>7}"]
    for row in rows:
        for fr in row.folds:
            lines.append(f"{row.name:<12} {fr.fold:>4} {fr.group:>5} "
                         f"{fr.best_epoch:>7} {100 * fr.metrics.ua:>7.2f} "
                         f"{100 * fr.metrics.wa:>7.2f}")
        lines.append(f"{row.name:<12} {'mean':>4} {'':>5} {'':>7} "
                     f"{100 * row.mean_ua:>7.2f} {100 * row.mean_wa:>7.2f}")
    return "\n".join(lines) + "\n"

"""Training loop, F1 metrics, the graph-stage ablation and the window sweep."""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .corpus import Conversation, build_emotion_vocab, split_conversations
from .model import ModelConfig, PageModel, PairPrediction, Prepared, predict_corpus, with_emotions

logger = logging.getLogger(__name__)

LOG_HEADER = "epoch\tloss\tval_pos_f1\tval_neg_f1\tval_macro_f1"


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    pos_f1: float
    neg_f1: float
    macro_f1: float
    name: str = ""

    def __post_init__(self):
        assert abs(self.macro_f1 - (self.pos_f1 + self.neg_f1) / 2) < 1e-12
        assert 0.0 <= self.pos_f1 <= 1.0 and 0.0 <= self.neg_f1 <= 1.0

    def row(self) -> list[str]:
        return [self.name, str(self.tp), str(self.fp), str(self.fn), str(self.tn),
                f"{self.pos_f1:.6f}", f"{self.neg_f1:.6f}", f"{self.macro_f1:.6f}"]

    def summary(self) -> str:
        return (f"Neg F1 {100 * self.neg_f1:.2f}  Pos F1 {100 * self.pos_f1:.2f}  "
                f"Macro F1 {100 * self.macro_f1:.2f}")


METRICS_CSV_HEADER = ["set", "tp", "fp", "fn", "tn", "pos_f1", "neg_f1", "macro_f1"]


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def report_from_confusion(tp: int, fp: int, fn: int, tn: int, name: str = "") -> MetricsReport:
    pos = _f1(tp, fp, fn)
    # the negative class as "positive": its TP is tn, its FP is fn, its FN is fp
    neg = _f1(tn, fn, fp)
    return MetricsReport(tp, fp, fn, tn, pos, neg, (pos + neg) / 2, name)


def f1_scores(predictions, labels, name: str = "") -> MetricsReport:
    """Pos/Neg/Macro F1 from hard 0/1 predictions and gold labels."""
    pred = np.asarray(predictions, dtype=bool).ravel()
    gold = np.asarray(labels, dtype=bool).ravel()
    if pred.size == 0:
        raise ValueError("f1_scores needs at least one prediction")
    if pred.shape != gold.shape:
        raise ValueError(f"{pred.size} predictions vs {gold.size} labels")
    tp = int(np.sum(pred & gold))
    fp = int(np.sum(pred & ~gold))
    fn = int(np.sum(~pred & gold))
    tn = int(np.sum(~pred & ~gold))
    return report_from_confusion(tp, fp, fn, tn, name)


def score_predictions(preds: Sequence[PairPrediction], threshold: float = 0.5,
                      name: str = "") -> MetricsReport:
    return f1_scores([p.hard(threshold) for p in preds], [bool(p.label) for p in preds], name)


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 50
    batch_size: int = 4
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    patience: int = 10
    pos_weight: float = 1.0
    threshold: float = 0.5
    val_fraction: float = 0.15

    def validate(self) -> None:
        self.model.validate()
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.lr <= 0 or self.patience < 1 or self.pos_weight <= 0:
            raise ValueError("batch_size, lr, patience and pos_weight must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        return cls(model=model, **d)


@dataclass
class TrainResult:
    model: PageModel
    log: list[str]
    best_epoch: int
    best_val: MetricsReport | None
    train_report: MetricsReport | None = None


def _evaluate(model: PageModel, prepared: Sequence[Prepared], threshold: float, name: str):
    preds = predict_corpus(model, prepared)
    if not preds:
        return None
    return score_predictions(preds, threshold, name)


def train(train_convs: Sequence[Conversation], cfg: TrainConfig,
          val_convs: Sequence[Conversation] | None = None,
          on_epoch: Callable[[str], None] | None = None) -> TrainResult:
    """Train a fresh model and keep the best-validation parameters.

    Without ``val_convs`` the training set scores each epoch, and the last
    epoch wins ties.  ``val_convs=None`` does *not* carve a split; callers
    that want the default 15% split use :func:`train_with_split`.
    """
    cfg.validate()
    if not train_convs:
        raise ValueError("training corpus is empty")
    model_cfg = cfg.model
    if model_cfg.emotions == ModelConfig().emotions:
        model_cfg = with_emotions(model_cfg, build_emotion_vocab(train_convs))
    model = PageModel(model_cfg, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    train_prep = [model.prepare(c) for c in train_convs]
    val_prep = [model.prepare(c) for c in val_convs] if val_convs else None
    opt = nx.make_optimizer(cfg.optimizer, model.parameters(), cfg.lr)

    log = [LOG_HEADER]
    best_score = -math.inf
    best_state = model.state_dict()
    best_epoch = 0
    best_val = None
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_prep))
        epoch_loss = 0.0
        epoch_pairs = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_prep[i] for i in order[start:start + cfg.batch_size]]
            n_pairs = sum(len(p.pairs) for p in batch)
            if n_pairs == 0:
                continue
            for prep in batch:
                loss = model.loss_sum(prep, cfg.pos_weight)
                if loss is None:
                    continue
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss {value} at epoch {epoch} on conversation {prep.conv.id}")
                epoch_loss += value
                nx.backward(nx.scale(loss, 1.0 / n_pairs))
            opt.step()
            epoch_pairs += n_pairs
        mean_loss = epoch_loss / max(epoch_pairs, 1)
        monitor = val_prep if val_prep else train_prep
        report = _evaluate(model, monitor, cfg.threshold, "val" if val_prep else "train")
        if report is None:
            line = f"{epoch}\t{mean_loss:.6f}\tnan\tnan\tnan"
            score = -mean_loss
        else:
            line = (f"{epoch}\t{mean_loss:.6f}\t{report.pos_f1:.6f}\t{report.neg_f1:.6f}"
                    f"\t{report.macro_f1:.6f}")
            score = report.macro_f1
        log.append(line)
        if on_epoch:
            on_epoch(line)
        improved = score > best_score if val_prep else score >= best_score
        if improved:
            best_score, best_state, best_epoch, best_val = score, model.state_dict(), epoch, report
            stale = 0
        else:
            stale += 1
            if val_prep and stale >= cfg.patience:
                logger.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    model.load_state_dict(best_state)
    train_report = _evaluate(model, train_prep, cfg.threshold, "train") if cfg.epochs else None
    return TrainResult(model, log, best_epoch, best_val if val_prep else None, train_report)


def train_with_split(convs: Sequence[Conversation], cfg: TrainConfig, **kw) -> TrainResult:
    train_convs, val_convs = split_conversations(convs, cfg.val_fraction, cfg.seed)
    return train(train_convs, cfg, val_convs or None, **kw)


def evaluate(model: PageModel, convs: Sequence[Conversation], threshold: float = 0.5,
             name: str = "") -> tuple[MetricsReport, list[PairPrediction]]:
    preds = predict_corpus(model, convs)
    return score_predictions(preds, threshold, name), preds


# ---------------------------------------------------------------- experiments

@dataclass
class SeedSummary:
    reports: list[MetricsReport]

    @property
    def macro(self) -> np.ndarray:
        return np.array([r.macro_f1 for r in self.reports])

    @property
    def mean(self) -> float:
        return float(self.macro.mean())

    @property
    def std(self) -> float:
        return float(self.macro.std(ddof=1)) if len(self.reports) > 1 else 0.0


@dataclass
class AblationResult:
    full: SeedSummary
    ablated: SeedSummary
    full_params: int
    ablated_params: int

    @property
    def gap(self) -> float:
        return self.full.mean - self.ablated.mean


def _run_seeds(convs, cfg: TrainConfig, seeds, test_convs) -> tuple[SeedSummary, int]:
    reports, n_params = [], 0
    for seed in seeds:
        run_cfg = dataclasses.replace(cfg, seed=seed)
        result = train_with_split(convs, run_cfg)
        n_params = result.model.num_parameters()
        if test_convs is not None:
            rep, _ = evaluate(result.model, test_convs, cfg.threshold, f"test-seed{seed}")
        else:
            rep = result.best_val or result.train_report
        reports.append(rep)
    return SeedSummary(reports), n_params


def run_ablation(convs: Sequence[Conversation], cfg: TrainConfig, seeds: Sequence[int] = range(5),
                 test_convs: Sequence[Conversation] | None = None) -> AblationResult:
    """Train the full model and the graph-free variant on identical data and seeds."""
    full_cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, ablate_pag=False))
    abl_cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, ablate_pag=True))
    full, n_full = _run_seeds(convs, full_cfg, seeds, test_convs)
    abl, n_abl = _run_seeds(convs, abl_cfg, seeds, test_convs)
    return AblationResult(full, abl, n_full, n_abl)


@dataclass
class SweepRow:
    window: int
    mean_macro_f1: float
    std_macro_f1: float
    per_seed: list[float]


def window_sweep(convs: Sequence[Conversation], cfg: TrainConfig, w_values: Sequence[int],
                 seeds: Sequence[int] = (0,),
                 test_convs: Sequence[Conversation] | None = None) -> list[SweepRow]:
    if not w_values:
        raise ValueError("w_values must be nonempty")
    rows = []
    for w in sorted(set(w_values)):
        w_cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, window=w))
        summary, _ = _run_seeds(convs, w_cfg, seeds, test_convs)
        rows.append(SweepRow(w, summary.mean, summary.std, summary.macro.tolist()))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["window,mean_macro_f1,std_macro_f1,per_seed"]
    for r in rows:
        seeds = ";".join(f"{v:.6f}" for v in r.per_seed)
        lines.append(f"{r.window},{r.mean_macro_f1:.6f},{r.std_macro_f1:.6f},{seeds}")
    return "\n".join(lines) + "\n"


def permutation_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided exact permutation test for a difference in means."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    pooled = np.concatenate([a, b])
    observed = abs(a.mean() - b.mean())
    n, hits, total = len(a), 0, 0
    for idx in itertools.combinations(range(len(pooled)), n):
        mask = np.zeros(len(pooled), dtype=bool)
        mask[list(idx)] = True
        diff = abs(pooled[mask].mean() - pooled[~mask].mean())
        hits += diff >= observed - 1e-12
        total += 1
    return hits / total

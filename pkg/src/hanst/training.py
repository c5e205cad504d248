"""Optimization loops, class-imbalance resampling, model selection, and
multi-run experiment orchestration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models as md
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    TrainingAbortedError,
)
from .evalstats import (
    PredictionRecord,
    accuracy,
    auc_roc,
    citation_score,
    mae,
    mse,
    r2_score,
    vote_aggregate,
)
from .textprep import TaggedDocument

TASKS = ("classify", "regress")
LOSS_KINDS = ("cross-entropy", "mae")
_TASK_LOSS = {"classify": "cross-entropy", "regress": "mae"}

# per-task defaults: (epochs, batch_size)
_TASK_SCHEDULE = {"classify": (360, 4), "regress": (60, 64)}

DEFAULT_SEEDS = (1, 2, 3)


@dataclass(frozen=True)
class TrainConfig:
    task: str
    model: md.ModelConfig
    epochs: int
    batch_size: int
    lr: float = 0.005
    loss: str = ""
    resample: bool = True
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    max_chars: int = 20000

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.loss:
            object.__setattr__(self, "loss", _TASK_LOSS[self.task])
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.loss != _TASK_LOSS[self.task]:
            raise ConfigurationError(f"loss {self.loss!r} does not match task {self.task!r}")
        expected_head = "classify-2" if self.task == "classify" else "regress-1"
        if self.model.head_kind != expected_head:
            raise ConfigurationError(
                f"task {self.task!r} needs head {expected_head!r}, model has {self.model.head_kind!r}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.seeds:
            raise ConfigurationError("at least one seed required")
        if self.max_chars < 1:
            raise ConfigurationError(f"max_chars must be >= 1, got {self.max_chars}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def default_train_config(task: str, model: md.ModelConfig, **overrides) -> TrainConfig:
    if task not in _TASK_SCHEDULE:
        raise ConfigurationError(f"task must be one of {TASKS}, got {task!r}")
    epochs, batch_size = _TASK_SCHEDULE[task]
    base = dict(task=task, model=model, epochs=epochs, batch_size=batch_size,
                resample=task == "classify")
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def gold_value(label: dict, task: str) -> float:
    """Class index (1 = accepted) or citation-score target."""
    if task == "classify":
        return float(int(label["accepted"]))
    return citation_score(label["citation_count"])


def class_probabilities(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of [B, 2] logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# resampling and batching
# ---------------------------------------------------------------------------

def resample_balanced(examples: list, labels, rng: np.random.Generator) -> list:
    """Full minority class plus an equal-size majority sample, shuffled.

    Sampling is uniform without replacement and fresh per call.
    """
    labels = np.asarray(labels)
    if len(labels) != len(examples):
        raise ConfigurationError(f"{len(examples)} examples vs {len(labels)} labels")
    classes = np.unique(labels)
    if len(classes) != 2:
        raise ConfigurationError(f"balanced resampling needs exactly 2 classes, found {len(classes)}")
    idx_a = np.flatnonzero(labels == classes[0])
    idx_b = np.flatnonzero(labels == classes[1])
    minority, majority = (idx_a, idx_b) if len(idx_a) <= len(idx_b) else (idx_b, idx_a)
    sampled = rng.choice(majority, size=len(minority), replace=False)
    chosen = np.concatenate([minority, sampled])
    rng.shuffle(chosen)
    return [examples[i] for i in chosen]


def make_batches(docs: list[TaggedDocument], task: str, batch_size: int) -> list[md.Batch]:
    batches = []
    for start in range(0, len(docs), batch_size):
        chunk = docs[start: start + batch_size]
        labels = [gold_value(d.label, task) for d in chunk]
        batches.append(md.pad_batch(chunk, labels=labels))
    return batches


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def compute_loss(output: ad.Tensor, golds: np.ndarray, kind: str) -> ad.Tensor:
    if kind == "cross-entropy":
        return ad.cross_entropy(output, golds.astype(np.int64))
    if kind == "mae":
        if output.shape[0] == 0:
            raise DegenerateInputError("empty batch")
        targets = ad.Tensor(np.asarray(golds, dtype=np.float64).reshape(-1, 1))
        return ad.mean_all(ad.abs_(ad.sub(output, targets)))
    raise ConfigurationError(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# epoch loop
# ---------------------------------------------------------------------------

def train_epoch(model: md.Model, batches: list[md.Batch], optimizer: ad.Adam,
                loss_kind: str, rng: np.random.Generator, epoch: int = 0) -> float:
    """One optimizer step per batch; returns the mean train loss."""
    losses = []
    for index, batch in enumerate(batches):
        optimizer.zero_grad()
        with ad.Tape():
            result = model.forward(batch, training=True, rng=rng)
            loss = compute_loss(result.output, batch.labels, loss_kind)
            value = float(loss.values)
            if not math.isfinite(value):
                raise TrainingAbortedError(
                    f"non-finite loss {value} at epoch {epoch}, batch {index}",
                    epoch=epoch, batch_index=index)
            ad.backward(loss)
        optimizer.step()
        losses.append(value)
    return float(np.mean(losses)) if losses else 0.0


def predict(model: md.Model, docs: list[TaggedDocument], task: str,
            batch_size: int, seed: int | None = None) -> list[PredictionRecord]:
    """Eval-mode predictions over a document list."""
    records = []
    for batch in make_batches(docs, task, batch_size):
        result = model.forward(batch, training=False)
        out = result.output.values
        for i, doc_id in enumerate(batch.doc_ids):
            if task == "classify":
                probs = class_probabilities(out[i: i + 1])[0]
                records.append(PredictionRecord(
                    id=doc_id, gold=float(batch.labels[i]),
                    pred=float(np.argmax(out[i])), prob=float(probs[1]), seed=seed))
            else:
                records.append(PredictionRecord(
                    id=doc_id, gold=float(batch.labels[i]),
                    pred=float(out[i, 0]), prob=None, seed=seed))
    return records


def validation_metric(records: list[PredictionRecord], task: str) -> float:
    """Selection score: accuracy, or negated MAE so higher is better."""
    golds = [r.gold for r in records]
    preds = [r.pred for r in records]
    if task == "classify":
        return accuracy(golds, preds)
    return -mae(golds, preds)


def select_best(history: list[float]) -> int:
    """Index of the best validation metric; ties go to the LAST epoch."""
    if not history:
        raise DegenerateInputError("empty validation history")
    best = max(history)
    return max(i for i, v in enumerate(history) if v == best)


# ---------------------------------------------------------------------------
# single run
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    seed: int
    train_losses: list[float]
    valid_metrics: list[float]
    selected_epoch: int
    test_predictions: list[PredictionRecord]
    parameters: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def to_log_events(self) -> list[dict]:
        return [{"epoch": e, "train_loss": tl, "valid_metric": vm}
                for e, (tl, vm) in enumerate(zip(self.train_losses, self.valid_metrics))]


def train_single_run(config: TrainConfig, train_docs: list[TaggedDocument],
                     valid_docs: list[TaggedDocument], test_docs: list[TaggedDocument],
                     seed: int, embeddings: np.ndarray | None = None,
                     log_fn=None) -> RunRecord:
    """One seeded training: resample/shuffle per epoch, validate on the
    natural split, keep the snapshot of the last best epoch, then test."""
    if not train_docs or not valid_docs:
        raise ConfigurationError("train and valid splits must be non-empty")
    rng = np.random.default_rng(seed)
    model = md.build_model(config.model, rng, embeddings=embeddings)
    optimizer = ad.Adam(model.params, lr=config.lr)
    labels = [gold_value(d.label, config.task) for d in train_docs]

    train_losses: list[float] = []
    valid_metrics: list[float] = []
    best_metric = -math.inf
    best_params: dict[str, np.ndarray] = {}
    best_epoch = -1
    for epoch in range(config.epochs):
        if config.task == "classify" and config.resample:
            epoch_docs = resample_balanced(train_docs, labels, rng)
        else:
            epoch_docs = list(train_docs)
            rng.shuffle(epoch_docs)
        batches = make_batches(epoch_docs, config.task, config.batch_size)
        train_loss = train_epoch(model, batches, optimizer, config.loss, rng, epoch=epoch)
        metric = validation_metric(predict(model, valid_docs, config.task,
                                           config.batch_size, seed=seed), config.task)
        train_losses.append(train_loss)
        valid_metrics.append(metric)
        # >= implements the last-tie-wins selection rule
        if metric >= best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = {n: p.values.copy() for n, p in model.params.items()}
        if log_fn is not None:
            log_fn({"seed": seed, "epoch": epoch, "train_loss": train_loss,
                    "valid_metric": metric})

    assert best_epoch == select_best(valid_metrics)
    for name, values in best_params.items():
        model.params[name].values = values
    test_predictions = predict(model, test_docs, config.task, config.batch_size,
                               seed=seed) if test_docs else []
    return RunRecord(seed=seed, train_losses=train_losses, valid_metrics=valid_metrics,
                     selected_epoch=best_epoch, test_predictions=test_predictions,
                     parameters=best_params)


# ---------------------------------------------------------------------------
# experiment orchestration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: TrainConfig
    runs: list[RunRecord]
    per_run_metrics: dict[str, list[float]]
    vote_predictions: list[PredictionRecord]
    failed: bool = False
    failure: str | None = None


def run_metrics(records: list[PredictionRecord], task: str) -> dict[str, float]:
    golds = [r.gold for r in records]
    preds = [r.pred for r in records]
    if task == "classify":
        values = {"accuracy": accuracy(golds, preds)}
        probs = [r.prob for r in records]
        if all(p is not None for p in probs) and len(set(golds)) == 2:
            values["auc"] = auc_roc(golds, probs)
        return values
    return {"r2": r2_score(golds, preds), "mse": mse(golds, preds),
            "mae": mae(golds, preds)}


def run_experiment(config: TrainConfig, train_docs, valid_docs, test_docs,
                   embeddings: np.ndarray | None = None, log_fn=None) -> ExperimentResult:
    """Train once per seed; aggregate test metrics and vote predictions.

    A run abort marks the experiment failed but preserves completed runs.
    """
    runs: list[RunRecord] = []
    for seed in config.seeds:
        try:
            runs.append(train_single_run(config, train_docs, valid_docs, test_docs,
                                         seed, embeddings=embeddings, log_fn=log_fn))
        except TrainingAbortedError as exc:
            return ExperimentResult(config=config, runs=runs, per_run_metrics={},
                                    vote_predictions=[], failed=True, failure=str(exc))
    per_run: dict[str, list[float]] = {}
    for record in runs:
        if not record.test_predictions:
            continue
        for name, value in run_metrics(record.test_predictions, config.task).items():
            per_run.setdefault(name, []).append(value)
    vote: list[PredictionRecord] = []
    can_vote = runs and runs[0].test_predictions and (
        config.task == "regress" or len(runs) % 2 == 1)
    if can_vote:
        vote = vote_aggregate([r.test_predictions for r in runs], config.task)
        vote_name = "vote_accuracy" if config.task == "classify" else "run_mean_mae"
        golds = [r.gold for r in vote]
        preds = [r.pred for r in vote]
        per_run[vote_name] = [accuracy(golds, preds) if config.task == "classify"
                              else mae(golds, preds)]
    return ExperimentResult(config=config, runs=runs, per_run_metrics=per_run,
                            vote_predictions=vote)

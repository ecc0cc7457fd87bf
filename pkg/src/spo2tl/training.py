"""Subject-level splits, inverse-frequency sampling and the training loops.

Two entry points drive the transfer procedure:

* :func:`pretrain` trains every parameter group from scratch.
* :func:`finetune` continues from pretrained weights in two stages: first only
  the output layer, then the BiLSTM together with the output layer. The
  attention projections stay frozen throughout.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import (InsufficientDataError, InsufficientSubjectsError, InvalidConfigError,
                         NumericError)
from .nn import Adam, ModelConfig, ModelParams, model_backward, model_forward, mse_loss
from .nn.model import encode

logger = logging.getLogger(__name__)

LABEL_RANGE = (70.0, 100.0)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 256
    pretrain_epochs: int = 100
    finetune_epochs: int = 150
    finetune_stage1_epochs: int = 50
    bins: int = 10
    seed: int = 0
    shuffle: bool = True
    pretrain_weighted: bool = False
    finetune_weighted: bool = True

    def __post_init__(self):
        if self.batch < 1:
            raise InvalidConfigError("batch must be >= 1")
        if not 0 <= self.finetune_stage1_epochs < self.finetune_epochs:
            raise InvalidConfigError("finetune_stage1_epochs must be < finetune_epochs")

    def to_dict(self):
        return asdict(self)


@dataclass
class SplitPlan:
    train_subjects: list
    test_subjects: list
    folds: list = field(default_factory=list)

    def __post_init__(self):
        overlap = set(self.train_subjects) & set(self.test_subjects)
        if overlap:
            raise InvalidConfigError(f"subjects in both train and test: {sorted(overlap)}")

    def to_dict(self):
        return {"train_subjects": list(self.train_subjects),
                "test_subjects": list(self.test_subjects),
                "folds": [list(f) for f in self.folds]}


def _unique(subjects):
    return sorted(set(subjects))


def subject_split(subjects, test_every: int = 5, seed: int = 0) -> SplitPlan:
    """4:1 subject-level split: ``round(n / 5)`` test subjects (at least one)."""
    subjects = _unique(subjects)
    n = len(subjects)
    if n < test_every:
        raise InsufficientSubjectsError(f"need at least {test_every} subjects, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(np.floor(n / test_every + 0.5)))
    test = sorted(subjects[i] for i in order[:n_test])
    train = sorted(subjects[i] for i in order[n_test:])
    return SplitPlan(train, test)


def kfold(train_subjects, k: int = 5, seed: int = 0):
    """``k`` subject-disjoint validation folds whose sizes differ by at most one."""
    subjects = _unique(train_subjects)
    if len(subjects) < k:
        raise InsufficientSubjectsError(f"{len(subjects)} subjects cannot form {k} folds")
    order = np.random.default_rng(seed).permutation(len(subjects))
    return [sorted(subjects[i] for i in part) for part in np.array_split(order, k)]


def loso(subjects):
    """One plan per subject with that subject held out."""
    subjects = _unique(subjects)
    if len(subjects) < 2:
        raise InsufficientSubjectsError("leave-one-subject-out needs at least 2 subjects")
    return [SplitPlan([s for s in subjects if s != held], [held]) for held in subjects]


class WeightedSampler:
    """Draws indices with probability proportional to 1 / (size of the label's bin).

    Bins are ``bins`` equal-width intervals over ``label_range``; labels outside
    it fall into the edge bins.
    """

    def __init__(self, labels, bins: int = 10, label_range=LABEL_RANGE, seed: int = 0):
        labels = np.asarray(labels, dtype=np.float64)
        if labels.size == 0:
            raise InsufficientDataError("weighted sampler needs labels")
        lo, hi = label_range
        edges = np.linspace(lo, hi, bins + 1)
        self.bin_index = np.clip(np.searchsorted(edges, labels, side="right") - 1, 0, bins - 1)
        counts = np.bincount(self.bin_index, minlength=bins)
        self.counts = counts
        self.weights = 1.0 / counts[self.bin_index]
        self.p = self.weights / self.weights.sum()
        self.rng = np.random.default_rng(seed)

    def draw(self, n: int) -> np.ndarray:
        return self.rng.choice(self.p.size, size=n, replace=True, p=self.p)


@dataclass
class History:
    rows: list = field(default_factory=list)
    best_epoch: int | None = None
    best_val_mae: float | None = None

    def add(self, epoch, split, loss, mae):
        self.rows.append({"epoch": epoch, "split": split, "loss": loss, "mae": mae})
        if split == "val" and (self.best_val_mae is None or mae < self.best_val_mae):
            self.best_val_mae, self.best_epoch = mae, epoch

    def losses(self, split="train"):
        return [r["loss"] for r in self.rows if r["split"] == split]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "split", "loss", "mae"])
        for r in self.rows:
            w.writerow([r["epoch"], r["split"], repr(float(r["loss"])), repr(float(r["mae"]))])
        return buf.getvalue()


def predict_raw(params: ModelParams, X, batch: int = 256) -> np.ndarray:
    out = [model_forward(X[a:a + batch], params, keep_cache=False)[0][:, 0]
           for a in range(0, len(X), batch)]
    return np.concatenate(out) if out else np.zeros(0)


def _epoch_order(n, rng, sampler, shuffle):
    if sampler is not None:
        return sampler.draw(n)
    return rng.permutation(n) if shuffle else np.arange(n)


def run_epochs(params, X, y, epochs, cfg: TrainConfig, optimizer, rng, sampler=None,
               history=None, first_epoch=1, val=None, features=None):
    """Minibatch MSE/Adam for ``epochs`` passes of ``len(X)`` draws each.

    ``features``: precomputed pooled encoder outputs; only valid while the
    BiLSTM and attention groups are frozen, in which case only the output layer
    is evaluated.
    """
    history = History() if history is None else history
    n = len(y)
    y2 = y.reshape(-1, 1)
    for e in range(first_epoch, first_epoch + epochs):
        order = _epoch_order(n, rng, sampler, cfg.shuffle)
        sq, ab = 0.0, 0.0
        for a in range(0, n, cfg.batch):
            idx = order[a:a + cfg.batch]
            if features is not None:
                pooled = features[idx]
                pred = pooled @ params["fc.W"] + params["fc.b"]
                loss, d = mse_loss(pred, y2[idx])
                grads = {"fc.W": pooled.T @ d, "fc.b": d.sum(axis=0)}
            else:
                pred, cache = model_forward(X[idx], params)
                loss, d = mse_loss(pred, y2[idx])
                grads = model_backward(cache, d)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {e}")
            optimizer.step(params, grads)
            sq += loss * len(idx)
            ab += float(np.abs(pred - y2[idx]).sum())
        history.add(e, "train", sq / n, ab / n)
        if val is not None:
            Xv, yv = val
            pv = predict_raw(params, Xv, cfg.batch)
            history.add(e, "val", float(np.mean((pv - yv) ** 2)), float(np.mean(np.abs(pv - yv))))
        logger.debug("epoch %d loss %.4f", e, sq / n)
    return history


def _check_data(X, y):
    if len(y) == 0:
        raise InsufficientDataError("no training segments")
    if len(X) != len(y):
        raise InsufficientDataError(f"{len(X)} windows vs {len(y)} labels")


def prime(params: ModelParams, X, y) -> ModelParams:
    """Fit the fixed input scale to ``X`` and start the output bias at mean(``y``).

    AC/DC ratios are of order 1e-2, so unit-scaling the channels keeps the
    first-layer gates out of their linear regime; the bias shift saves the
    optimizer from first walking the output from 0 to about 95.
    """
    X = np.asarray(X, dtype=np.float64)
    scale = X.reshape(-1, X.shape[-1]).std(axis=0)
    params.buffers["norm.x_scale"] = np.where(scale > 0, scale, 1.0)
    params.arrays["fc.b"][:] = float(np.mean(y))
    params.bump()
    return params


def pretrain(X, y, cfg: TrainConfig, model_config: ModelConfig, val=None, params=None):
    """Train all groups from a fresh (or given) initialization.

    A fresh initialization is primed on the training data (see :func:`prime`).
    Returns ``(params, history)``.
    """
    _check_data(X, y)
    if params is None:
        params = prime(ModelParams.initialize(model_config), X, y)
    elif params.config.structure() != model_config.structure():
        raise InvalidConfigError("given parameters do not match the model config")
    params.set_trainable(**{g: True for g in params.groups})
    rng = np.random.default_rng(cfg.seed)
    sampler = (WeightedSampler(y, cfg.bins, seed=cfg.seed + 1)
               if cfg.pretrain_weighted else None)
    history = run_epochs(params, X, y, cfg.pretrain_epochs, cfg, Adam(cfg.lr), rng, sampler,
                         val=val)
    return params, history


def finetune(params: ModelParams, X, y, cfg: TrainConfig, val=None, model_config=None,
             on_stage_end=None):
    """Two-stage transfer on new-device data; updates ``params`` in place.

    Stage 1 trains the output layer alone; stage 2 the BiLSTM and output layer.
    ``model_config``, when given, must describe the same architecture as
    ``params``. ``on_stage_end(stage, params)`` is called after each stage.
    Returns ``(params, history)``.
    """
    _check_data(X, y)
    if model_config is not None and model_config.structure() != params.config.structure():
        raise InvalidConfigError(
            f"checkpoint architecture {params.config.structure()} does not match "
            f"requested {model_config.structure()}")
    rng = np.random.default_rng(cfg.seed)
    sampler = WeightedSampler(y, cfg.bins, seed=cfg.seed + 1) if cfg.finetune_weighted else None
    opt = Adam(cfg.lr)
    freeze = {g: False for g in params.groups}

    params.set_trainable(**{**freeze, "fc": True})
    stage1 = cfg.finetune_stage1_epochs
    history = History()
    if stage1:
        feats = encode(params, X, cfg.batch)
        run_epochs(params, X, y, stage1, cfg, opt, rng, sampler, history, val=val,
                   features=feats)
    if on_stage_end is not None:
        on_stage_end(1, params)
    params.set_trainable(**{**freeze, "fc": True, "bilstm": True})
    run_epochs(params, X, y, cfg.finetune_epochs - stage1, cfg, opt, rng, sampler, history,
               first_epoch=stage1 + 1, val=val)
    if on_stage_end is not None:
        on_stage_end(2, params)
    return params, history

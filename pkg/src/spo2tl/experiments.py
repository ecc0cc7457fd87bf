"""Reusable experiment drivers: held-out comparison and LOSO transfer.

Every score is produced by :func:`~spo2tl.evaluation.evaluate_many` over
:class:`~spo2tl.evaluation.PredictionTrace` objects, the same path the CLI
uses, so learned and traditional estimates are scored identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calibration import QuadCalib, fit_quadratic, window_r_ratios
from .evaluation import EvalReport, evaluate_many
from .nn import ModelConfig, ModelParams
from .pipeline import predict_session, predict_session_traditional
from .preprocessing import PreprocessResult, preprocess_session
from .segmentation import SegmentSet, segment_session
from .training import History, SplitPlan, TrainConfig, finetune, loso, pretrain, subject_split


def preprocess_all(sessions, fs_target: float = 25.0):
    return [preprocess_session(s, fs_target) for s in sessions]


def _pick(results, subjects):
    subjects = set(subjects)
    return [r for r in results if r.session.subject_id in subjects]


def _subjects(results):
    return sorted({r.session.subject_id for r in results})


def fit_calibration(results) -> QuadCalib:
    """Quadratic R-ratio curve fitted on every valid window of ``results``."""
    Rs, ys = [], []
    for r in results:
        R, y, _, valid = window_r_ratios(r)
        Rs.append(R[valid])
        ys.append(y[valid])
    return fit_quadratic(np.concatenate(Rs), np.concatenate(ys))


def training_windows(results) -> SegmentSet:
    return SegmentSet.concatenate(segment_session(r.session) for r in results)


def score_model(params: ModelParams, results) -> EvalReport:
    return evaluate_many(predict_session(params, r.session) for r in results)


def score_traditional(calib: QuadCalib, results) -> EvalReport:
    return evaluate_many(predict_session_traditional(calib, r) for r in results)


@dataclass
class HoldoutOutcome:
    plan: SplitPlan
    calib: QuadCalib
    params: ModelParams
    history: History
    model: EvalReport
    traditional: EvalReport


def holdout_experiment(results: list[PreprocessResult], model_config: ModelConfig,
                       train_config: TrainConfig, split_seed: int = 0) -> HoldoutOutcome:
    """4:1 subject split; train both estimators on the train subjects, score on the rest."""
    plan = subject_split(_subjects(results), seed=split_seed)
    train, test = _pick(results, plan.train_subjects), _pick(results, plan.test_subjects)
    calib = fit_calibration(train)
    segs = training_windows(train)
    params, history = pretrain(segs.X, segs.y, train_config, model_config)
    return HoldoutOutcome(plan, calib, params, history, score_model(params, test),
                          score_traditional(calib, test))


@dataclass
class TransferOutcome:
    """LOSO scores on the target domain, pooled over folds."""

    pretrained_params: ModelParams
    pretrained: EvalReport
    finetuned: EvalReport
    folds: list = field(default_factory=list)  # (subject, pretrained MAE, finetuned MAE)


def transfer_experiment(source: list[PreprocessResult], target: list[PreprocessResult],
                        model_config: ModelConfig, train_config: TrainConfig) -> TransferOutcome:
    """Pretrain on ``source``; per held-out target subject, fine-tune on the others.

    The comparison model is the pretrained network applied to the target
    domain unchanged.
    """
    segs = training_windows(source)
    base, _ = pretrain(segs.X, segs.y, train_config, model_config)
    pre_traces, ft_traces, folds = [], [], []
    for plan in loso(_subjects(target)):
        tune = training_windows(_pick(target, plan.train_subjects))
        tuned, _ = finetune(base.copy(), tune.X, tune.y, train_config)
        held = _pick(target, plan.test_subjects)
        p = [predict_session(base, r.session) for r in held]
        f = [predict_session(tuned, r.session) for r in held]
        folds.append((plan.test_subjects[0], evaluate_many(p).mae, evaluate_many(f).mae))
        pre_traces += p
        ft_traces += f
    return TransferOutcome(base, evaluate_many(pre_traces), evaluate_many(ft_traces), folds)

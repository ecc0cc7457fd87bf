"""End-to-end prediction traces for the learned and the traditional estimator.

Both functions emit the same :class:`~spo2tl.evaluation.PredictionTrace`
layout (one point per labeled window, at the window end time), so a single
metric implementation scores both.
"""
from __future__ import annotations

import numpy as np

from .calibration import SPO2_RANGE, QuadCalib, predict_traditional, window_r_ratios
from .dsp import moving_average
from .evaluation import PredictionTrace
from .exceptions import DataError, InsufficientDataError
from .preprocessing import PreprocessResult
from .segmentation import PpgSession, segment_session
from .training import predict_raw

SMOOTHING_WINDOW = 5


def predict_session(params, session: PpgSession, smoothing: int = SMOOTHING_WINDOW,
                    clamp=SPO2_RANGE, batch: int = 256) -> PredictionTrace:
    """Segment a normalized session, run the network, smooth causally, clamp."""
    if not session.normalized:
        raise DataError(f"session {session.subject_id!r} must be preprocessed first")
    seg = segment_session(session)
    if len(seg) == 0:
        raise InsufficientDataError(f"session {session.subject_id!r} yields no windows")
    raw = predict_raw(params, seg.X, batch)
    y = np.clip(moving_average(raw, smoothing) if smoothing > 1 else raw, *clamp)
    return PredictionTrace(seg.t_end, seg.y, y, session.subject_id)


def predict_session_traditional(calib: QuadCalib, result: PreprocessResult,
                                clamp=SPO2_RANGE) -> PredictionTrace:
    """Quadratic R-ratio estimate per window; degenerate windows are left out."""
    R, y, t_end, valid = window_r_ratios(result)
    if not valid.any():
        raise InsufficientDataError(f"session {result.session.subject_id!r} has no valid window")
    pred = np.atleast_1d(predict_traditional(calib, R[valid], clamp))
    return PredictionTrace(t_end[valid], y[valid], pred, result.session.subject_id)

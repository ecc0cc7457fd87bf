"""Ratio-of-ratios SpO2 with a least-squares quadratic calibration curve."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .exceptions import DegenerateFitError, DegenerateWindowError, ShapeError
from .preprocessing import PreprocessResult
from .segmentation import MAX_LABEL_GAP_S, STRIDE_S, WINDOW_S, window_plan

SPO2_RANGE = (70.0, 100.0)
_EPS = 1e-12


@dataclass(frozen=True)
class QuadCalib:
    """SpO2 = c0 + c1*R + c2*R**2."""

    c0: float
    c1: float
    c2: float

    def __call__(self, R):
        R = np.asarray(R, dtype=np.float64)
        return self.c0 + self.c1 * R + self.c2 * R * R

    def as_tuple(self):
        return (self.c0, self.c1, self.c2)

    def inverse(self, spo2, branch=(0.0, 3.5)):
        """R on the given branch that maps to ``spo2``; NaN where no root lies in it."""
        spo2 = np.asarray(spo2, dtype=np.float64)
        a, b, c = self.c2, self.c1, self.c0 - spo2
        if a == 0:
            roots = np.stack([-c / b, np.full_like(c, np.nan)])
        else:
            disc = b * b - 4 * a * c
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            # numerically stable pair of roots
            q = -0.5 * (b + np.copysign(sq, b))
            roots = np.stack([q / a, np.divide(c, q, out=np.full_like(q, np.nan), where=q != 0)])
        lo, hi = branch
        inside = (roots > lo) & (roots < hi)
        picked = np.where(inside, roots, np.nan)
        out = np.nanmin(np.where(np.isnan(picked), np.inf, picked), axis=0)
        return np.where(np.isfinite(out), out, np.nan)


def compute_r_ratio(ac_red, dc_red, ac_ir, dc_ir) -> float:
    """Ratio of normalized pulsatility, red over infrared.

    AC magnitude is the standard deviation of the window, DC the window mean.
    """
    ac_red_mag = np.std(ac_red)
    ac_ir_mag = np.std(ac_ir)
    dc_red_mag = np.mean(dc_red)
    dc_ir_mag = np.mean(dc_ir)
    if min(abs(dc_red_mag), abs(dc_ir_mag)) < _EPS or ac_ir_mag < _EPS * abs(dc_ir_mag):
        raise DegenerateWindowError("window has a vanishing AC or DC magnitude")
    return float((ac_red_mag / dc_red_mag) / (ac_ir_mag / dc_ir_mag))


def window_r_ratios(result: PreprocessResult, win_s=WINDOW_S, stride_s=STRIDE_S,
                    max_label_gap_s=MAX_LABEL_GAP_S):
    """R per window of a preprocessed session, on the same grid as the model windows.

    Returns ``(R, y, t_end, valid)``; ``valid`` is False for windows dropped by the
    label-gap rule or whose ratio is degenerate (R is NaN there).
    """
    c = result.components
    s = result.session
    win, starts, t_end, y, keep = window_plan(c.ac_red.size, c.fs, s.label_t, s.label_spo2,
                                              win_s, stride_s, max_label_gap_s)
    R = np.full(starts.size, np.nan)
    for k, a in enumerate(starts):
        sl = slice(a, a + win)
        try:
            R[k] = compute_r_ratio(c.ac_red[sl], c.dc_red[sl], c.ac_ir[sl], c.dc_ir[sl])
        except DegenerateWindowError:
            keep[k] = False
    return R, y, t_end, keep & np.isfinite(R)


def fit_quadratic(R, spo2) -> QuadCalib:
    """Ordinary least squares on the design matrix [1, R, R^2]."""
    R = np.asarray(R, dtype=np.float64).ravel()
    spo2 = np.asarray(spo2, dtype=np.float64).ravel()
    if R.shape != spo2.shape:
        raise ShapeError(f"R {R.shape} vs spo2 {spo2.shape}")
    if R.size < 3 or np.unique(R).size < 3:
        raise DegenerateFitError("quadratic fit needs at least 3 distinct R values")
    A = np.stack([np.ones_like(R), R, R * R], axis=1)
    coef, _, rank, _ = np.linalg.lstsq(A, spo2, rcond=None)
    if rank < 3 or not np.all(np.isfinite(coef)):
        raise DegenerateFitError(f"rank-deficient calibration system (rank {rank})")
    return QuadCalib(*map(float, coef))


def predict_traditional(calib: QuadCalib, R, clamp=SPO2_RANGE):
    out = np.clip(calib(R), *clamp)
    return float(out) if np.ndim(out) == 0 else out


class RRatioCalibrator(RegressorMixin, BaseEstimator):
    """Quadratic R-to-SpO2 calibration as a regressor on a single feature.

    ``X`` is a 1-D array of R values (or an (n, 1) column).
    """

    def __init__(self, clamp=SPO2_RANGE):
        self.clamp = clamp

    def fit(self, X, y):
        R = column_or_1d(np.asarray(X, dtype=np.float64))
        self.calib_ = fit_quadratic(R, column_or_1d(y))
        self.coef_ = np.array(self.calib_.as_tuple())
        return self

    def predict(self, X):
        check_is_fitted(self, "calib_")
        R = column_or_1d(np.asarray(X, dtype=np.float64))
        return np.atleast_1d(predict_traditional(self.calib_, R, self.clamp))

"""Session-level preprocessing: band-pass, resample, AC/DC ratio."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .dsp import FilterSpec, decompose_ac_dc, fourier_resample, normalize_ratio
from .exceptions import DataError
from .segmentation import PpgSession


@dataclass
class Components:
    """Per-channel AC and DC at the target rate, kept for the R-ratio path."""

    ac_red: np.ndarray
    dc_red: np.ndarray
    ac_ir: np.ndarray
    dc_ir: np.ndarray
    fs: float


@dataclass
class PreprocessResult:
    session: PpgSession
    components: Components
    n_degenerate: dict


def preprocess_session(session: PpgSession, fs_target: float = 25.0,
                       band: FilterSpec = FilterSpec()) -> PreprocessResult:
    """Decompose at the native rate, resample AC and DC to ``fs_target``, take the ratio.

    Returns the normalized session (``normalized=True``) along with the
    resampled components and per-channel counts of zeroed samples.
    """
    if session.normalized:
        raise DataError(f"session {session.subject_id!r} is already normalized")
    fs = session.fs
    parts = {}
    for name in ("red", "ir"):
        ac, dc = decompose_ac_dc(getattr(session, name), fs, band)
        if fs_target != fs:
            ac = fourier_resample(ac, fs, fs_target)
            dc = fourier_resample(dc, fs, fs_target, detrend=True)
        parts[name] = (ac, dc)
    ratios, counts = {}, {}
    for name, (ac, dc) in parts.items():
        ratios[name], counts[name] = normalize_ratio(ac, dc)
    comps = Components(parts["red"][0], parts["red"][1], parts["ir"][0], parts["ir"][1],
                       fs_target)
    out = session.with_signals(ratios["red"], ratios["ir"], fs_target, normalized=True)
    out.meta["n_degenerate"] = dict(counts)
    return PreprocessResult(out, comps, counts)


class PPGPreprocessor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping raw sessions to normalized 25 Hz sessions.

    Parameters
    ----------
    fs_target : float
        Output sampling rate in Hz.
    low_hz, high_hz : float
        Pulsatile band edges; ``low_hz`` is also the baseline cutoff.
    order : int
        Butterworth order for both filters.
    """

    def __init__(self, fs_target=25.0, low_hz=0.5, high_hz=12.0, order=4):
        self.fs_target = fs_target
        self.low_hz = low_hz
        self.high_hz = high_hz
        self.order = order

    @property
    def band(self) -> FilterSpec:
        return FilterSpec(self.low_hz, self.high_hz, self.order)

    def fit(self, sessions=None, y=None):
        return self

    def transform_full(self, sessions):
        return [preprocess_session(s, self.fs_target, self.band) for s in _as_list(sessions)]

    def transform(self, sessions):
        return [r.session for r in self.transform_full(sessions)]

    def __sklearn_is_fitted__(self):
        return True


def _as_list(sessions):
    return [sessions] if isinstance(sessions, PpgSession) else list(sessions)

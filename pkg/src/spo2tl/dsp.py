"""Signal conditioning for dual-channel PPG.

Band-pass / low-pass Butterworth design, zero-phase filtering, AC/DC
decomposition, ratio normalization, Fourier resampling and the trailing
moving average applied to prediction streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .exceptions import InsufficientDataError, InvalidSpecError, ShapeError

BANDPASS = "bandpass"
LOWPASS = "lowpass"


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth filter request.

    For ``kind="lowpass"`` only ``high_hz`` (the cutoff) is used.
    """

    low_hz: float = 0.5
    high_hz: float = 12.0
    order: int = 4
    kind: str = BANDPASS

    def validate(self, fs: float) -> None:
        if fs <= 0:
            raise InvalidSpecError(f"sampling rate must be positive, got {fs}")
        if int(self.order) != self.order or self.order < 1:
            raise InvalidSpecError(f"filter order must be a positive integer, got {self.order}")
        nyq = fs / 2.0
        if self.kind == BANDPASS:
            if not 0 < self.low_hz < self.high_hz < nyq:
                raise InvalidSpecError(
                    f"band edges must satisfy 0 < low < high < fs/2 "
                    f"(got {self.low_hz}, {self.high_hz}, fs/2={nyq})"
                )
        elif self.kind == LOWPASS:
            if not 0 < self.high_hz < nyq:
                raise InvalidSpecError(f"cutoff {self.high_hz} outside (0, {nyq})")
        else:
            raise InvalidSpecError(f"unknown filter kind {self.kind!r}")


PPG_BAND = FilterSpec(0.5, 12.0, 4, BANDPASS)


def design_filter(spec: FilterSpec, fs: float) -> np.ndarray:
    """Second-order-section Butterworth design (bilinear transform, pre-warped)."""
    spec.validate(fs)
    if spec.kind == BANDPASS:
        sos = signal.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass",
                            fs=fs, output="sos")
    else:
        sos = signal.butter(spec.order, spec.high_hz, btype="lowpass", fs=fs, output="sos")
    return sos


def design_bandpass(spec: FilterSpec, fs: float) -> np.ndarray:
    if spec.kind != BANDPASS:
        raise InvalidSpecError("design_bandpass needs a band-pass spec")
    return design_filter(spec, fs)


def filter_poles(sos: np.ndarray) -> np.ndarray:
    return np.concatenate([np.roots(section[3:]) for section in np.atleast_2d(sos)])


def filter_order(sos: np.ndarray) -> int:
    """Number of poles of the cascade (trailing zero coefficients ignored)."""
    sos = np.atleast_2d(sos)
    return int(sum(2 if s[5] != 0 else 1 for s in sos))


def filtfilt(sos: np.ndarray, x) -> np.ndarray:
    """Forward-backward filtering with odd-reflection padding of 3x the filter order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D signal, got shape {x.shape}")
    padlen = 3 * filter_order(sos)
    if x.size <= padlen:
        raise InsufficientDataError(
            f"signal of {x.size} samples too short for padding of {padlen}"
        )
    return signal.sosfiltfilt(sos, x, padtype="odd", padlen=padlen)


def decompose_ac_dc(x, fs: float, band: FilterSpec = PPG_BAND):
    """Split a PPG channel into pulsatile (band-pass) and baseline (low-pass) parts.

    The baseline cutoff is the band's lower edge, with the same order.
    """
    ac = filtfilt(design_filter(band, fs), x)
    dc_spec = FilterSpec(0.0, band.low_hz, band.order, LOWPASS)
    dc = filtfilt(design_filter(dc_spec, fs), x)
    return ac, dc


def normalize_ratio(ac, dc, max_abs: float = 10.0):
    """Elementwise AC/DC ratio.

    Samples whose baseline is below ``1e-6 * median(|dc|)`` (or exactly zero),
    or whose ratio leaves ``(-max_abs, max_abs)``, are set to 0.

    Returns
    -------
    ratio : ndarray
    n_degenerate : int
        Number of samples that were zeroed.
    """
    ac = np.asarray(ac, dtype=np.float64)
    dc = np.asarray(dc, dtype=np.float64)
    if ac.shape != dc.shape:
        raise ShapeError(f"ac {ac.shape} and dc {dc.shape} differ")
    eps = 1e-6 * np.median(np.abs(dc)) if dc.size else 0.0
    bad = (np.abs(dc) < eps) | (dc == 0)
    out = np.zeros_like(ac)
    np.divide(ac, dc, out=out, where=~bad)
    bad |= ~(np.abs(out) < max_abs)
    out[bad] = 0.0
    return out, int(bad.sum())


def resampled_length(n: int, fs_in: float, fs_out: float) -> int:
    # round half up; Python's round() is banker's rounding
    return int(np.floor(n * fs_out / fs_in + 0.5))


def fourier_resample(x, fs_in: float, fs_out: float, detrend: bool = False) -> np.ndarray:
    """FFT resampling to ``round(len * fs_out / fs_in)`` samples.

    With ``detrend=True`` the line joining the first and last samples is removed
    before the transform and re-added on the new grid, which suppresses the
    wrap-around ringing of non-periodic baselines.
    """
    if fs_out <= 0 or fs_in <= 0:
        raise InvalidSpecError(f"sampling rates must be positive (in={fs_in}, out={fs_out})")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D signal, got shape {x.shape}")
    if fs_out == fs_in:
        return x.copy()
    n_in = x.size
    n_out = resampled_length(n_in, fs_in, fs_out)
    if n_out < 1:
        raise InsufficientDataError(f"{n_in} samples resample to nothing at {fs_out} Hz")
    if not detrend or n_in < 2:
        return signal.resample(x, n_out)
    slope = (x[-1] - x[0]) / (n_in - 1)
    trend_in = x[0] + slope * np.arange(n_in)
    # the trend is a continuous function of time; evaluate it on the output grid
    t_out = np.arange(n_out) * (n_in / n_out)
    return signal.resample(x - trend_in, n_out) + x[0] + slope * t_out


def moving_average(y, window: int = 5) -> np.ndarray:
    """Causal trailing mean; the first ``window - 1`` outputs average the prefix."""
    if int(window) != window or window < 1:
        raise InvalidSpecError(f"window must be a positive integer, got {window}")
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise InsufficientDataError("moving average of an empty series")
    out = np.empty_like(y)
    head = min(window - 1, y.size)
    out[:head] = np.cumsum(y[:head]) / np.arange(1, head + 1)
    if y.size >= window:
        out[head:] = np.lib.stride_tricks.sliding_window_view(y, window).mean(axis=1)
    return out

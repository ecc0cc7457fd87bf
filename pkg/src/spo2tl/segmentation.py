"""Sessions and fixed-length labeled windows."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import MissingLabelError, ShapeError

WINDOW_S = 5.0
STRIDE_S = 1.0
MAX_LABEL_GAP_S = 10.0


@dataclass
class PpgSession:
    """One recording: two PPG channels at a common rate plus 1 Hz-ish SpO2 labels.

    ``label_t``/``label_spo2`` hold the reference readings. ``normalized`` is
    True once the channels hold AC/DC ratios instead of sensor units.
    """

    subject_id: str
    red: np.ndarray
    ir: np.ndarray
    fs: float
    label_t: np.ndarray
    label_spo2: np.ndarray
    device: str = "unknown"
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.red = np.asarray(self.red, dtype=np.float64)
        self.ir = np.asarray(self.ir, dtype=np.float64)
        self.label_t = np.asarray(self.label_t, dtype=np.float64)
        self.label_spo2 = np.asarray(self.label_spo2, dtype=np.float64)
        self.validate()

    @property
    def duration(self) -> float:
        return self.red.size / self.fs

    def validate(self) -> None:
        if self.fs <= 0:
            raise ShapeError(f"fs must be positive, got {self.fs}")
        if self.red.shape != self.ir.shape or self.red.ndim != 1:
            raise ShapeError(f"red {self.red.shape} and ir {self.ir.shape} must be equal 1-D")
        if self.label_t.shape != self.label_spo2.shape:
            raise ShapeError("label times and values differ in length")
        if self.label_t.size:
            if np.any(np.diff(self.label_t) < 0):
                raise ShapeError("label times must be non-decreasing")
            if self.label_t[0] < 0 or self.label_t[-1] > self.duration + 1e-9:
                raise ShapeError("label times outside the signal duration")
            if np.any((self.label_spo2 < 50) | (self.label_spo2 > 100)):
                raise ShapeError("SpO2 labels must lie in [50, 100]")
        if not (np.all(np.isfinite(self.red)) and np.all(np.isfinite(self.ir))):
            raise ShapeError("non-finite PPG samples")

    def with_signals(self, red, ir, fs, **changes) -> "PpgSession":
        return replace(self, red=red, ir=ir, fs=fs, meta=dict(self.meta), **changes)


@dataclass
class SegmentSet:
    """Stacked windows. ``X`` has shape (N, win, 2) with columns (red, ir)."""

    X: np.ndarray
    y: np.ndarray
    t_end: np.ndarray
    subject_ids: np.ndarray
    fs: float = 25.0
    stride_s: float = STRIDE_S
    n_dropped: int = 0

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def empty(cls, win: int = 125, fs: float = 25.0) -> "SegmentSet":
        return cls(np.zeros((0, win, 2)), np.zeros(0), np.zeros(0),
                   np.zeros(0, dtype=object), fs=fs)

    @classmethod
    def concatenate(cls, sets) -> "SegmentSet":
        sets = list(sets)
        if not sets:
            return cls.empty()
        return cls(
            np.concatenate([s.X for s in sets]),
            np.concatenate([s.y for s in sets]),
            np.concatenate([s.t_end for s in sets]),
            np.concatenate([s.subject_ids for s in sets]),
            fs=sets[0].fs,
            stride_s=sets[0].stride_s,
            n_dropped=sum(s.n_dropped for s in sets),
        )

    def subset(self, mask) -> "SegmentSet":
        return replace(self, X=self.X[mask], y=self.y[mask], t_end=self.t_end[mask],
                       subject_ids=self.subject_ids[mask], n_dropped=0)

    def for_subjects(self, subjects) -> "SegmentSet":
        return self.subset(np.isin(self.subject_ids, list(subjects)))


def _nearest_label_index(label_t: np.ndarray, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    hi = np.searchsorted(label_t, t, side="left")
    hi = np.clip(hi, 0, label_t.size - 1)
    lo = np.clip(hi - 1, 0, label_t.size - 1)
    # ties go to the earlier label
    take_lo = np.abs(t - label_t[lo]) <= np.abs(label_t[hi] - t)
    return np.where(take_lo, lo, hi)


def label_for_time(label_t, label_spo2, t):
    """Reference value of the label nearest to ``t`` (ties toward the earlier one)."""
    label_t = np.asarray(label_t, dtype=np.float64)
    label_spo2 = np.asarray(label_spo2, dtype=np.float64)
    if label_t.size == 0:
        raise MissingLabelError("no reference labels")
    idx = _nearest_label_index(label_t, t)
    out = label_spo2[idx]
    return float(out[0]) if np.ndim(t) == 0 else out


def label_gap_mask(label_t, t, max_gap: float = MAX_LABEL_GAP_S) -> np.ndarray:
    """True where ``t`` falls inside a label gap longer than ``max_gap`` seconds.

    Times further than ``max_gap`` before the first or after the last label
    count as inside a gap too.
    """
    label_t = np.asarray(label_t, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    bad = (t < label_t[0] - max_gap) | (t > label_t[-1] + max_gap)
    gaps = np.flatnonzero(np.diff(label_t) > max_gap)
    for g in gaps:
        bad |= (t > label_t[g]) & (t < label_t[g + 1])
    return bad


def window_count(n_samples: int, win: int = 125, hop: int = 25) -> int:
    return 0 if n_samples < win else (n_samples - win) // hop + 1


def window_plan(n_samples: int, fs: float, label_t, label_spo2, win_s: float = WINDOW_S,
                stride_s: float = STRIDE_S, max_label_gap_s: float = MAX_LABEL_GAP_S):
    """Window start indices, end times, labels and keep-mask for a signal length.

    Shared by the model path (:func:`segment_session`) and the R-ratio path so
    both see exactly the same windows and labels.
    """
    win = int(round(win_s * fs))
    hop = int(round(stride_s * fs))
    n = window_count(n_samples, win, hop)
    starts = np.arange(n) * hop
    t_end = (starts + win) / fs
    if n == 0:
        return win, starts, t_end, np.zeros(0), np.zeros(0, dtype=bool)
    label_t = np.asarray(label_t, dtype=np.float64)
    if label_t.size == 0:
        raise MissingLabelError("session has no labels")
    y = np.atleast_1d(label_for_time(label_t, label_spo2, t_end))
    keep = ~label_gap_mask(label_t, t_end, max_label_gap_s)
    return win, starts, t_end, y, keep


def segment_session(session: PpgSession, win_s: float = WINDOW_S, stride_s: float = STRIDE_S,
                    max_label_gap_s: float = MAX_LABEL_GAP_S) -> SegmentSet:
    """Slide a ``win_s`` window with ``stride_s`` hop over a normalized session.

    Each window is labeled with the reference value nearest its end time.
    Windows ending inside a reference gap longer than ``max_label_gap_s`` are
    dropped and counted in ``n_dropped``.
    """
    fs = session.fs
    win, starts, t_end, y, keep = window_plan(session.red.size, fs, session.label_t,
                                              session.label_spo2, win_s, stride_s,
                                              max_label_gap_s)
    if starts.size == 0:
        return SegmentSet.empty(win, fs)
    stacked = np.stack([session.red, session.ir], axis=1)
    X = np.lib.stride_tricks.sliding_window_view(stacked, win, axis=0)[starts]
    X = np.ascontiguousarray(X.transpose(0, 2, 1))
    subjects = np.full(starts.size, session.subject_id, dtype=object)
    return SegmentSet(X[keep], y[keep], t_end[keep], subjects[keep], fs=fs,
                      stride_s=stride_s, n_dropped=int((~keep).sum()))

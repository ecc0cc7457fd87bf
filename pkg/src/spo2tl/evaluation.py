"""Overall and instant-zone error metrics for 1 Hz SpO2 prediction traces."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InsufficientDataError, ShapeError

TV_THRESHOLD = 3.0
# sum over j = i .. i+10 of |y[j+1] - y[j]|: 11 differences spanning 12 samples
TV_TERMS = 11


def _pair(y_ref, y_pred):
    y_ref = np.asarray(y_ref, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_ref.shape != y_pred.shape:
        raise ShapeError(f"reference {y_ref.shape} vs prediction {y_pred.shape}")
    if y_ref.size == 0:
        raise InsufficientDataError("empty trace")
    return y_ref, y_pred


def mae(y_ref, y_pred) -> float:
    y_ref, y_pred = _pair(y_ref, y_pred)
    return float(np.mean(np.abs(y_pred - y_ref)))


def rmse(y_ref, y_pred) -> float:
    y_ref, y_pred = _pair(y_ref, y_pred)
    return float(np.sqrt(np.mean((y_pred - y_ref) ** 2)))


def total_variation(y, i: int, terms: int = TV_TERMS) -> float:
    """Sum of ``terms`` absolute first differences starting at index ``i``."""
    y = np.asarray(y, dtype=np.float64)
    if i < 0 or i + terms > y.size - 1:
        raise IndexError(f"TV window at {i} with {terms} terms exceeds length {y.size}")
    return float(np.abs(np.diff(y[i:i + terms + 1])).sum())


@dataclass(frozen=True)
class InstantZone:
    start_idx: int
    end_idx: int


def detect_instant_zones(y_ref, threshold: float = TV_THRESHOLD, terms: int = TV_TERMS):
    """Every start index whose total variation reaches ``threshold`` opens a zone.

    A zone spans ``terms + 1`` samples. Traces too short for a single window
    yield no zones.
    """
    y = np.asarray(y_ref, dtype=np.float64)
    n_starts = y.size - terms
    if n_starts < 1:
        return []
    d = np.abs(np.diff(y))
    tv = np.lib.stride_tricks.sliding_window_view(d, terms).sum(axis=1)
    return [InstantZone(int(i), int(i) + terms) for i in np.flatnonzero(tv >= threshold)]


def instant_mask(n: int, zones) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for z in zones:
        mask[z.start_idx:z.end_idx + 1] = True
    return mask


@dataclass
class PredictionTrace:
    t: np.ndarray
    y_ref: np.ndarray
    y_pred: np.ndarray
    subject_id: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.y_ref = np.asarray(self.y_ref, dtype=np.float64)
        self.y_pred = np.asarray(self.y_pred, dtype=np.float64)
        if not (self.t.shape == self.y_ref.shape == self.y_pred.shape):
            raise ShapeError("trace columns differ in length")

    def to_csv(self, is_instant=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "y_ref", "y_pred"] + (["is_instant"] if is_instant is not None else [])
        w.writerow(header)
        for k in range(self.t.size):
            row = [repr(float(self.t[k])), repr(float(self.y_ref[k])), repr(float(self.y_pred[k]))]
            if is_instant is not None:
                row.append(int(is_instant[k]))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, subject_id: str = "") -> "PredictionTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:3] != ["t", "y_ref", "y_pred"]:
            raise ShapeError("trace CSV must start with header t,y_ref,y_pred")
        body = [r for r in rows[1:] if r]
        try:
            data = np.array([[float(v) for v in r[:3]] for r in body]).reshape(-1, 3)
        except ValueError as exc:
            raise ShapeError(f"bad number in trace CSV: {exc}") from None
        return cls(data[:, 0], data[:, 1], data[:, 2], subject_id)


@dataclass
class EvalReport:
    """Overall metrics plus instant-zone metrics (None when no zone was found)."""

    mae: float
    rmse: float
    mae_ins: float | None
    rmse_ins: float | None
    n_points: int
    n_instant_points: int
    zones: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mae": self.mae, "rmse": self.rmse, "mae_ins": self.mae_ins,
            "rmse_ins": self.rmse_ins, "n_points": self.n_points,
            "n_instant_points": self.n_instant_points,
            "zones": [[z.start_idx, z.end_idx] for z in self.zones],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate_arrays(y_ref, y_pred, mask) -> EvalReport:
    y_ref, y_pred = _pair(y_ref, y_pred)
    n_ins = int(mask.sum())
    ins = (mae(y_ref[mask], y_pred[mask]), rmse(y_ref[mask], y_pred[mask])) if n_ins else (None, None)
    return EvalReport(mae(y_ref, y_pred), rmse(y_ref, y_pred), ins[0], ins[1], int(y_ref.size), n_ins)


def evaluate(trace: PredictionTrace, threshold: float = TV_THRESHOLD,
             terms: int = TV_TERMS) -> EvalReport:
    zones = detect_instant_zones(trace.y_ref, threshold, terms)
    report = evaluate_arrays(trace.y_ref, trace.y_pred, instant_mask(trace.y_ref.size, zones))
    report.zones = zones
    return report


def evaluate_many(traces, threshold: float = TV_THRESHOLD, terms: int = TV_TERMS) -> EvalReport:
    """Pool points of several traces; zones are detected per trace, never across joins."""
    traces = list(traces)
    if not traces:
        raise InsufficientDataError("no traces to evaluate")
    refs, preds, masks = [], [], []
    for tr in traces:
        zones = detect_instant_zones(tr.y_ref, threshold, terms)
        refs.append(tr.y_ref)
        preds.append(tr.y_pred)
        masks.append(instant_mask(tr.y_ref.size, zones))
    return evaluate_arrays(np.concatenate(refs), np.concatenate(preds), np.concatenate(masks))


"""On-disk formats: session files, model checkpoints and experiment configs.

Session file
    A ``#SESSION`` line carrying a JSON header, then two CSV blocks::

        #SESSION {"device": "synth", "fs": 86.0, "subject_id": "S00", ...}
        #SIGNALS
        t_s,red,ir
        0.0,40012.3,50001.8
        ...
        #LABELS
        t_s,spo2
        0.0,97.6
        ...

    Floats are written with ``repr`` so a write/read cycle is lossless.

Checkpoint
    ``MAGIC``, a little-endian uint32 version and uint64 header length, a
    UTF-8 JSON header (model config, trainable flags, optional calibration,
    array directory), then the arrays as little-endian float64 in directory
    order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .calibration import QuadCalib
from .exceptions import CheckpointError, InvalidConfigError, SessionParseError
from .nn import ModelConfig, ModelParams
from .segmentation import PpgSession
from .synth import SynthConfig
from .training import TrainConfig

SESSION_SUFFIX = ".session"
SESSION_FORMAT_VERSION = 1
WAVELENGTHS_NM = (660, 940)
FS_TOLERANCE = 1e-6

MAGIC = b"SPO2CKPT"
CHECKPOINT_VERSION = 1
_LE_F64 = np.dtype("<f8")


# ---------------------------------------------------------------------------
# sessions

def _json_safe(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        try:
            json.dumps(v)
        except TypeError:
            continue
        out[k] = v
    return out


def format_session(session: PpgSession) -> str:
    header = {
        "format_version": SESSION_FORMAT_VERSION,
        "subject_id": session.subject_id,
        "device": session.device,
        "fs": float(session.fs),
        "wavelengths_nm": list(WAVELENGTHS_NM),
        "normalized": bool(session.normalized),
        "meta": _json_safe(session.meta),
    }
    lines = ["#SESSION " + json.dumps(header, sort_keys=True), "#SIGNALS", "t_s,red,ir"]
    fs = float(session.fs)
    lines += [f"{k / fs!r},{float(r)!r},{float(i)!r}"
              for k, (r, i) in enumerate(zip(session.red, session.ir))]
    lines += ["#LABELS", "t_s,spo2"]
    lines += [f"{float(t)!r},{float(v)!r}" for t, v in zip(session.label_t, session.label_spo2)]
    return "\n".join(lines) + "\n"


def _rows(lines, start, ncols, header):
    """Parse numeric CSV rows from ``start`` until the next ``#`` line."""
    if start >= len(lines) or lines[start].strip() != header:
        raise SessionParseError(f"expected column header {header!r}", start + 1)
    out = []
    k = start + 1
    while k < len(lines) and not lines[k].startswith("#"):
        text = lines[k].strip()
        if text:
            parts = text.split(",")
            if len(parts) != ncols:
                raise SessionParseError(f"expected {ncols} fields, got {len(parts)}", k + 1)
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise SessionParseError(f"non-numeric field in {text!r}", k + 1) from None
            if not all(np.isfinite(vals)):
                raise SessionParseError("non-finite value", k + 1)
            out.append(vals)
        k += 1
    return np.array(out, dtype=np.float64).reshape(-1, ncols), k


def parse_session(text: str) -> PpgSession:
    """Inverse of :func:`format_session`; errors name the offending line."""
    lines = text.splitlines()
    k = 0
    while k < len(lines) and not lines[k].strip():
        k += 1
    if k >= len(lines) or not lines[k].startswith("#SESSION"):
        raise SessionParseError("missing #SESSION header", k + 1)
    try:
        header = json.loads(lines[k][len("#SESSION"):])
    except json.JSONDecodeError as exc:
        raise SessionParseError(f"bad header JSON: {exc.msg}", k + 1) from None
    for key in ("subject_id", "fs"):
        if key not in header:
            raise SessionParseError(f"header lacks {key!r}", k + 1)
    if header.get("format_version", SESSION_FORMAT_VERSION) != SESSION_FORMAT_VERSION:
        raise SessionParseError(f"unsupported format version {header['format_version']}", k + 1)
    fs = float(header["fs"])
    if not fs > 0:
        raise SessionParseError(f"fs must be positive, got {fs}", k + 1)
    k += 1
    if k >= len(lines) or lines[k].strip() != "#SIGNALS":
        raise SessionParseError("expected #SIGNALS block", k + 1)
    signals, k = _rows(lines, k + 1, 3, "t_s,red,ir")
    sig_start = k - len(signals)
    if k >= len(lines) or lines[k].strip() != "#LABELS":
        raise SessionParseError("expected #LABELS block", k + 1)
    labels, end = _rows(lines, k + 1, 2, "t_s,spo2")
    if end < len(lines):
        raise SessionParseError("unexpected content after labels", end + 1)

    t = signals[:, 0]
    expected = np.arange(t.size) / fs
    bad = np.flatnonzero(np.abs(t - expected) > FS_TOLERANCE * np.maximum(expected, 1.0 / fs))
    if bad.size:
        raise SessionParseError(f"timestamp {t[bad[0]]!r} inconsistent with fs={fs}",
                                sig_start + int(bad[0]) + 1)
    try:
        return PpgSession(str(header["subject_id"]), signals[:, 1], signals[:, 2], fs,
                          labels[:, 0], labels[:, 1], device=str(header.get("device", "unknown")),
                          normalized=bool(header.get("normalized", False)),
                          meta=dict(header.get("meta", {})))
    except ValueError as exc:
        raise SessionParseError(str(exc)) from None


def write_session(session: PpgSession, path) -> Path:
    path = Path(path)
    path.write_text(format_session(session))
    return path


def read_session(path) -> PpgSession:
    path = Path(path)
    try:
        return parse_session(path.read_text())
    except SessionParseError as exc:
        raise SessionParseError(f"{path}: {exc}") from None


def session_filename(session: PpgSession) -> str:
    k = session.meta.get("session_index", 0)
    return f"{session.subject_id}_{int(k):02d}{SESSION_SUFFIX}"


def expand_session_paths(paths) -> list:
    """Files as given; directories contribute their ``*.session`` files, sorted."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob(f"*{SESSION_SUFFIX}")))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return out


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_bytes(params: ModelParams, calib: QuadCalib | None = None) -> bytes:
    names = list(params.arrays)
    buffers = list(params.buffers)
    header = {
        "model_config": params.config.to_dict(),
        "trainable": dict(params.trainable),
        "calib": None if calib is None else list(calib.as_tuple()),
        "arrays": [[n, list(params.arrays[n].shape)] for n in names],
        "buffers": [[n, list(params.buffers[n].shape)] for n in buffers],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)), blob]
    for n in names:
        chunks.append(np.ascontiguousarray(params.arrays[n], dtype=_LE_F64).tobytes())
    for n in buffers:
        chunks.append(np.ascontiguousarray(params.buffers[n], dtype=_LE_F64).tobytes())
    return b"".join(chunks)


def checkpoint_from_bytes(data: bytes):
    """Returns ``(params, calib)``; ``calib`` is None when absent."""
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic)")
    off = len(MAGIC)
    if len(data) < off + 12:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack_from("<IQ", data, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += 12
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    off += hlen

    def take(entries):
        nonlocal off
        out = {}
        for name, shape in entries:
            n = int(np.prod(shape, dtype=np.int64))
            if off + 8 * n > len(data):
                raise CheckpointError(f"truncated array {name}")
            out[name] = np.frombuffer(data, _LE_F64, n, off).astype(np.float64).reshape(shape)
            off += 8 * n
        return out

    arrays = take(header["arrays"])
    buffers = take(header.get("buffers", []))
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes in checkpoint")
    config = ModelConfig.from_dict(header["model_config"])
    try:
        params = ModelParams(config, arrays, header.get("trainable"), buffers)
    except ValueError as exc:
        raise CheckpointError(f"checkpoint does not match its config: {exc}") from None
    calib = None if header.get("calib") is None else QuadCalib(*header["calib"])
    return params, calib


def save_checkpoint(path, params: ModelParams, calib: QuadCalib | None = None) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(params, calib))
    return path


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# experiment config

@dataclass
class SplitSpec:
    """``kind`` is ``"all"`` (train on every input subject), ``"holdout"`` or ``"loso"``."""

    kind: str = "all"
    test_every: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("all", "holdout", "loso"):
            raise InvalidConfigError(f"unknown split kind {self.kind!r}")


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    n_subjects: int = 9
    sessions_per_subject: int = 3
    fs_target: float = 25.0
    split: SplitSpec = field(default_factory=SplitSpec)
    data: list = field(default_factory=list)
    out_dir: str = "out"

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(), "train": self.train.to_dict(),
            "synth": self.synth.to_dict(), "n_subjects": self.n_subjects,
            "sessions_per_subject": self.sessions_per_subject, "fs_target": self.fs_target,
            "split": {"kind": self.split.kind, "test_every": self.split.test_every,
                      "seed": self.split.seed},
            "data": [str(p) for p in self.data], "out_dir": str(self.out_dir),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = dict(d)
            if "model" in kw:
                kw["model"] = ModelConfig(**kw["model"])
            if "train" in kw:
                kw["train"] = TrainConfig(**kw["train"])
            if "synth" in kw:
                kw["synth"] = SynthConfig.from_dict(kw["synth"])
            if "split" in kw:
                kw["split"] = SplitSpec(**kw["split"])
            return cls(**kw)
        except TypeError as exc:
            raise InvalidConfigError(f"bad experiment config: {exc}") from None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with every seed replaced by ``seed``."""
        return replace(self, model=replace(self.model, seed=seed),
                       train=replace(self.train, seed=seed),
                       synth=replace(self.synth, seed=seed),
                       split=replace(self.split, seed=seed))

    def check_paths(self) -> None:
        missing = [str(p) for p in self.data if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"missing data paths: {missing}")


def load_config(path) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise InvalidConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(d)

"""Command line interface: ``spo2tl <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error (bad or missing input,
config mismatch), 4 numeric failure (divergence, degenerate fit).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import QuadCalib, fit_quadratic, window_r_ratios
from .evaluation import PredictionTrace, detect_instant_zones, evaluate_many, instant_mask
from .exceptions import DataError, InsufficientDataError, InvalidConfigError, NumericError
from .io import (ExperimentConfig, expand_session_paths, load_checkpoint, load_config,
                 read_session, save_checkpoint, session_filename, write_session)
from .pipeline import predict_session, predict_session_traditional
from .preprocessing import preprocess_session
from .segmentation import SegmentSet, segment_session
from .synth import CorpusSpec, generate_corpus
from .training import finetune, pretrain, subject_split

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("spo2tl")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "inputs", None):
        cfg = replace(cfg, data=list(args.inputs))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sessions(cfg):
    cfg.check_paths()
    paths = expand_session_paths(cfg.data)
    if not paths:
        raise InsufficientDataError("no session files given")
    return [read_session(p) for p in paths]


def _raw_results(cfg):
    sessions = _sessions(cfg)
    normalized = [s.subject_id for s in sessions if s.normalized]
    if normalized:
        raise DataError(f"command needs raw sessions (AC/DC components); got normalized "
                        f"sessions for {sorted(set(normalized))}")
    return [preprocess_session(s, cfg.fs_target) for s in sessions]


def _normalized(cfg):
    return [s if s.normalized else preprocess_session(s, cfg.fs_target).session
            for s in _sessions(cfg)]


def _training_segments(cfg, sessions, out: Path):
    segs = SegmentSet.concatenate(segment_session(s) for s in sessions)
    if cfg.split.kind == "holdout":
        plan = subject_split(segs.subject_ids, cfg.split.test_every, cfg.split.seed)
        (out / "split.json").write_text(json.dumps(plan.to_dict(), indent=2) + "\n")
        segs = segs.for_subjects(plan.train_subjects)
    elif cfg.split.kind == "loso":
        raise InvalidConfigError("loso splits are run per fold; pass the fold's sessions "
                                 "with split kind 'all'")
    if len(segs) == 0:
        raise InsufficientDataError("no training windows")
    return segs


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.subjects is not None:
        cfg = replace(cfg, n_subjects=args.subjects)
    if args.sessions is not None:
        cfg = replace(cfg, sessions_per_subject=args.sessions)
    spec = CorpusSpec(cfg.n_subjects, cfg.sessions_per_subject, cfg.synth)
    out = _out(cfg)
    for s in generate_corpus(spec):
        write_session(s, out / session_filename(s))
    logger.info("wrote %d sessions to %s", cfg.n_subjects * cfg.sessions_per_subject, out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    if args.fs_target is not None:
        cfg = replace(cfg, fs_target=args.fs_target)
    out = _out(cfg)
    provenance = {}
    for s in _sessions(cfg):
        res = preprocess_session(s, cfg.fs_target)
        name = session_filename(s)
        write_session(res.session, out / name)
        provenance[name] = {k: int(v) for k, v in res.n_degenerate.items()}
    (out / "provenance.json").write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_calib(args) -> int:
    cfg = _config(args)
    rs, ys = [], []
    for res in _raw_results(cfg):
        R, y, _, valid = window_r_ratios(res)
        rs.append(R[valid])
        ys.append(y[valid])
    calib = fit_quadratic(np.concatenate(rs), np.concatenate(ys))
    out = _out(cfg)
    coef = dict(zip(("c0", "c1", "c2"), calib.as_tuple()))
    (out / "calib.json").write_text(json.dumps(coef, indent=2, sort_keys=True) + "\n")
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
        save_checkpoint(out / "model.ckpt", params, calib)
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    segs = _training_segments(cfg, _normalized(cfg), out)
    model = replace(cfg.model, seq_len=segs.X.shape[1])
    params, history = pretrain(segs.X, segs.y, cfg.train, model)
    save_checkpoint(out / "model.ckpt", params)
    (out / "history.csv").write_text(history.to_csv())
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _config(args)
    params, calib = load_checkpoint(args.checkpoint)
    model_cfg = cfg.model if args.config else None
    out = _out(cfg)
    segs = _training_segments(cfg, _normalized(cfg), out)
    params, history = finetune(params, segs.X, segs.y, cfg.train, model_config=model_cfg)
    save_checkpoint(out / "model.ckpt", params, calib)
    (out / "history.csv").write_text(history.to_csv())
    return EXIT_OK


def _calib_from(args):
    if args.calib:
        d = json.loads(Path(args.calib).read_text())
        return QuadCalib(float(d["c0"]), float(d["c1"]), float(d["c2"]))
    if args.checkpoint:
        _, calib = load_checkpoint(args.checkpoint)
        if calib is not None:
            return calib
    raise DataError("traditional prediction needs --calib or a checkpoint with calibration")


def _write_trace(trace: PredictionTrace, path: Path):
    mask = instant_mask(trace.y_ref.size, detect_instant_zones(trace.y_ref))
    path.write_text(trace.to_csv(mask))


def cmd_predict(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    if args.method == "traditional":
        calib = _calib_from(args)
        for res in _raw_results(cfg):
            trace = predict_session_traditional(calib, res)
            _write_trace(trace, out / (session_filename(res.session) + ".trace.csv"))
        return EXIT_OK
    if not args.checkpoint:
        raise DataError("model prediction needs --checkpoint")
    params, _ = load_checkpoint(args.checkpoint)
    for s in _normalized(cfg):
        _write_trace(predict_session(params, s), out / (session_filename(s) + ".trace.csv"))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    cfg.check_paths()
    paths = []
    for p in map(Path, cfg.data):
        paths.extend(sorted(p.glob("*.trace.csv")) if p.is_dir() else [p])
    if not paths:
        raise InsufficientDataError("no trace files given")
    traces = [PredictionTrace.from_csv(p.read_text(), p.name) for p in paths]
    report = evaluate_many(traces)
    (_out(cfg) / "report.json").write_text(report.to_json())
    print(f"MAE {report.mae:.4f}  RMSE {report.rmse:.4f}  points {report.n_points}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spo2tl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--subjects", type=int)
    p.add_argument("--sessions", type=int, help="sessions per subject")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="filter, resample, normalize")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--fs-target", type=float)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("calib", parents=[common], help="fit the quadratic R-ratio curve")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--checkpoint", help="also store the curve in a copy of this checkpoint")
    p.set_defaults(func=cmd_calib)

    p = sub.add_parser("pretrain", parents=[common], help="train the network from scratch")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", parents=[common], help="two-stage transfer to new data")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", parents=[common], help="write prediction traces")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--checkpoint")
    p.add_argument("--method", choices=("model", "traditional"), default="model")
    p.add_argument("--calib", help="calib.json for --method traditional")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score traces into a report")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

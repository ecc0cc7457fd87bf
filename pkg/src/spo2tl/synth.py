"""Synthetic dual-channel PPG with a known SpO2 ground truth.

The red/infrared pulsatility ratio of every sample is the inverse of a
quadratic calibration law applied to a 1 Hz SpO2 trace with breath-hold
desaturations, so both the traditional estimator and the learned model can be
scored against exact labels.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calibration import QuadCalib
from .exceptions import InvalidConfigError
from .segmentation import PpgSession

SPO2_FLOOR = 75.0
LEAD_IN_S = 20.0


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``noise_sd`` and ``baseline_wander_amp`` are fractions of each channel's
    baseline level. ``perfusion`` is the range of the infrared AC/DC amplitude
    drawn once per session. ``spo2_law`` holds (c0, c1, c2) of the device's
    R-to-SpO2 curve.
    """

    fs: float = 86.0
    duration_s: float = 300.0
    hr_bpm: tuple = (60.0, 90.0)
    spo2_law: tuple = (104.0, -17.0, -2.0)
    breath_holds: int = 3
    hold_depth: tuple = (4.0, 12.0)
    hold_duration_s: tuple = (20.0, 40.0)
    baseline_spo2: tuple = (97.0, 99.0)
    recovery_tau_s: float = 8.0
    noise_sd: float = 0.02
    baseline_wander_amp: float = 0.05
    device_gain: tuple = (1.0, 1.0)
    perfusion: tuple = (0.004, 0.03)
    dc_level: tuple = (40000.0, 50000.0)
    r_branch: tuple = (0.2, 3.0)
    device: str = "synth"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {k: (tuple(v) if isinstance(v, list) else v)
                 for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise InvalidConfigError(f"unknown synth fields: {sorted(unknown)}")
        return cls(**known)

    def clean(self) -> "SynthConfig":
        return replace(self, noise_sd=0.0, baseline_wander_amp=0.0)

    @property
    def law(self) -> QuadCalib:
        return QuadCalib(*self.spo2_law)


# Two device domains for transfer experiments. Channel gains cancel in the
# AC/DC ratio, so the source of shift that survives preprocessing is the
# device's own R-to-SpO2 curve together with the noise level.
DOMAIN_A = SynthConfig(noise_sd=0.01, baseline_wander_amp=0.02, device="device-a")
DOMAIN_B = SynthConfig(noise_sd=0.03, baseline_wander_amp=0.05, device_gain=(2.5, 0.6),
                       spo2_law=(112.0, -30.0, 3.0), device="device-b")


def _check(config: SynthConfig) -> None:
    if config.fs <= 0 or config.duration_s <= 0:
        raise InvalidConfigError("fs and duration must be positive")
    if config.breath_holds < 0:
        raise InvalidConfigError("breath_holds must be >= 0")
    lo, hi = config.baseline_spo2
    if not 0 < lo <= hi <= 100:
        raise InvalidConfigError(f"baseline SpO2 range {config.baseline_spo2} invalid")
    if config.breath_holds and lo - config.hold_depth[1] < SPO2_FLOOR:
        raise InvalidConfigError(
            f"hold depth up to {config.hold_depth[1]} from baseline {lo} goes below {SPO2_FLOOR}"
        )
    if config.breath_holds:
        slot = (config.duration_s - LEAD_IN_S) / config.breath_holds
        if slot < config.hold_duration_s[1] + 4 * config.recovery_tau_s:
            raise InvalidConfigError(
                f"{config.breath_holds} breath holds do not fit in {config.duration_s} s"
            )


def generate_spo2_trace(config: SynthConfig, rng=None):
    """1 Hz reference trace: flat baseline with exponential desaturation/recovery per hold.

    Returns ``(t, spo2, holds)`` where ``holds`` lists (start_s, duration_s, depth).
    """
    _check(config)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    t = np.arange(int(np.floor(config.duration_s)) + 1, dtype=np.float64)
    t = t[t <= config.duration_s]
    baseline = rng.uniform(*config.baseline_spo2)
    drop = np.zeros_like(t)
    holds = []
    if config.breath_holds:
        slot = (config.duration_s - LEAD_IN_S) / config.breath_holds
        for k in range(config.breath_holds):
            dur = rng.uniform(*config.hold_duration_s)
            depth = rng.uniform(*config.hold_depth)
            slack = slot - dur - 4 * config.recovery_tau_s
            start = LEAD_IN_S + k * slot + rng.uniform(0, max(slack, 0.0))
            holds.append((start, dur, depth))
            tau = dur / 2.0
            u = t - start
            during = (u >= 0) & (u <= dur)
            drop[during] += depth * (1 - np.exp(-u[during] / tau)) / (1 - np.exp(-dur / tau))
            after = u > dur
            drop[after] += depth * np.exp(-(u[after] - dur) / config.recovery_tau_s)
    spo2 = baseline - drop
    if spo2.min() < SPO2_FLOOR or spo2.max() > 100:
        raise InvalidConfigError("generated SpO2 trace leaves [75, 100]")
    return t, spo2, holds


def generate_session(config: SynthConfig, subject_id: str = "S00") -> PpgSession:
    """Render a session from ``config`` (deterministic in ``config.seed``)."""
    rng = np.random.default_rng(config.seed)
    t_lab, spo2, holds = generate_spo2_trace(config, rng)
    fs = config.fs
    n = int(round(config.duration_s * fs))
    t = np.arange(n) / fs
    spo2_t = np.interp(t, t_lab, spo2)
    R = config.law.inverse(spo2_t, config.r_branch)
    if np.any(~np.isfinite(R)):
        raise InvalidConfigError(f"SpO2 law {config.spo2_law} has no root in {config.r_branch}")

    hr0 = rng.uniform(*config.hr_bpm)
    hr = hr0 * (1 + 0.03 * np.sin(2 * np.pi * 0.1 * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(hr / 60.0) / fs + rng.uniform(0, 2 * np.pi)
    pulse = np.sin(phase) + 0.35 * np.sin(2 * phase + rng.uniform(0, 2 * np.pi))

    dc_red, dc_ir = config.dc_level
    pi_ir = rng.uniform(*config.perfusion)
    ir = dc_ir + pi_ir * dc_ir * pulse
    red = dc_red + R * pi_ir * dc_red * pulse

    wander_f = rng.uniform(0.05, 0.3, size=2)
    wander_p = rng.uniform(0, 2 * np.pi, size=2)
    wander = config.baseline_wander_amp * 0.5 * np.sin(
        2 * np.pi * wander_f[:, None] * t[None, :] + wander_p[:, None]).sum(axis=0)
    red = red + dc_red * wander
    ir = ir + dc_ir * wander

    g_red, g_ir = config.device_gain
    red = g_red * red
    ir = g_ir * ir
    noise = rng.standard_normal((2, n))
    red = red + config.noise_sd * g_red * dc_red * noise[0]
    ir = ir + config.noise_sd * g_ir * dc_ir * noise[1]

    keep = t_lab <= n / fs
    meta = {"r_true": R, "perfusion": pi_ir, "holds": holds, "synth": config.to_dict()}
    return PpgSession(subject_id, red, ir, fs, t_lab[keep], spo2[keep], device=config.device,
                      meta=meta)


@dataclass(frozen=True)
class CorpusSpec:
    """How many subjects/sessions to draw, and how to derive per-session seeds."""

    n_subjects: int = 9
    sessions_per_subject: int = 3
    base: SynthConfig = field(default_factory=SynthConfig)
    subject_prefix: str = "S"


def session_seed(base_seed: int, subject: int, session: int) -> int:
    return int(np.random.SeedSequence([base_seed, subject, session]).generate_state(1)[0])


def generate_corpus(spec: CorpusSpec):
    """All sessions of a corpus, in (subject, session) order."""
    if spec.n_subjects < 1 or spec.sessions_per_subject < 1:
        raise InvalidConfigError("corpus needs at least one subject and one session")
    out = []
    for s in range(spec.n_subjects):
        sid = f"{spec.subject_prefix}{s:02d}"
        # perfusion is a trait of the subject; sessions vary around it by +-10%
        subj_rng = np.random.default_rng(session_seed(spec.base.seed, s, 1 << 20))
        pi = subj_rng.uniform(*spec.base.perfusion)
        subject_base = replace(spec.base, perfusion=(0.9 * pi, 1.1 * pi))
        for k in range(spec.sessions_per_subject):
            cfg = replace(subject_base, seed=session_seed(spec.base.seed, s, k))
            sess = generate_session(cfg, sid)
            sess.meta["session_index"] = k
            out.append(sess)
    return out

"""Synthetic footstep-pressure cohorts with known freezing episodes.

Every subject gets a persistent gait signature (cadence, step length, foot
shape, heel/toe balance, load, stance width and freezing propensity) whose
spread is set by ``subject_nuisance_amplitude``. A trial renders two feet
alternately loading while the walker crosses the mat and turns at the ends.
During an episode the rendering is blended toward freezing: short fast
shuffles with little forward travel, both feet loaded and an alternating
tremor in load. ``fog_signal_strength`` sets the blend weight, so zero makes
episodes indistinguishable from walking.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .sequences import Cohort, PressureSequence


@dataclass
class SynthConfig:
    n_subjects: int = 12
    trials_per_subject: int = 6
    width: int = 32
    height: int = 16
    sample_rate: int = 12
    min_seconds: int = 20
    max_seconds: int = 60
    subject_nuisance_amplitude: float = 1.0
    fog_episode_rate: float = 0.228
    fog_signal_strength: float = 1.0
    noise_sigma: float = 0.05
    levels: int = 10
    min_episode_seconds: int = 2
    max_episode_seconds: int = 6
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 1 or self.trials_per_subject < 1:
            raise ValueError("need at least one subject and one trial per subject")
        if self.width < 4 or self.height < 4 or self.sample_rate < 2:
            raise ValueError("grid must be at least 4x4 and the sample rate at least 2")
        if not 1 <= self.min_seconds <= self.max_seconds:
            raise ValueError("trial length range is empty")
        if not 0 < self.fog_episode_rate < 1:
            raise ValueError("fog_episode_rate must lie in (0, 1)")
        if self.subject_nuisance_amplitude < 0 or self.fog_signal_strength < 0 or self.noise_sigma < 0:
            raise ValueError("amplitudes and noise must be non-negative")
        if self.levels < 2:
            raise ValueError("need at least two pressure levels")
        if not 1 <= self.min_episode_seconds <= self.max_episode_seconds:
            raise ValueError("episode length range is empty")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GaitSignature:
    cadence: float        # steps per second
    step_length: float    # grid cells per step
    foot_length: float    # gaussian sigma along the walkway
    foot_width: float
    heel_ratio: float     # heel blob load relative to forefoot
    load: float           # peak normalized pressure
    stance_width: float   # lateral distance between feet, in cells
    fog_propensity: float


def subject_signature(config: SynthConfig, subject_id: int) -> GaitSignature:
    a = config.subject_nuisance_amplitude
    rng = np.random.default_rng([config.seed, 0, subject_id])
    u = rng.uniform(-1.0, 1.0, size=7)
    z = rng.standard_normal()
    spread = 0.6 * a
    return GaitSignature(
        cadence=2.0 * (1 + 0.25 * a * u[0]),
        step_length=0.22 * config.width / 4 * (1 + 0.35 * a * u[1]),
        foot_length=max(0.6, config.width / 24 * (1 + 0.3 * a * u[2])),
        foot_width=max(0.5, config.height / 20 * (1 + 0.3 * a * u[3])),
        heel_ratio=float(np.clip(0.7 + 0.5 * a * u[4], 0.05, 1.5)),
        load=float(np.clip(0.65 * (1 + 0.3 * a * u[5]), 0.2, 1.0)),
        stance_width=config.height * (0.3 + 0.12 * a * u[6]),
        fog_propensity=float(np.exp(spread * z - spread**2 / 2)),
    )


def _episode_mask(rng: np.random.Generator, n_frames: int, target_frames: int, config: SynthConfig) -> np.ndarray:
    mask = np.zeros(n_frames, dtype=bool)
    p = config.sample_rate
    attempts = 0
    while mask.sum() < target_frames and attempts < 200:
        attempts += 1
        length = int(rng.integers(config.min_episode_seconds * p, config.max_episode_seconds * p + 1))
        length = min(length, n_frames)
        start = int(rng.integers(0, n_frames - length + 1))
        mask[start : start + length] = True
    return mask


def render_trial(config: SynthConfig, sig: GaitSignature, subject_id: int, trial_id: int) -> PressureSequence:
    rng = np.random.default_rng([config.seed, 1, subject_id, trial_id])
    p, w, h = config.sample_rate, config.width, config.height
    seconds = int(rng.integers(config.min_seconds, config.max_seconds + 1))
    n = seconds * p

    rate = float(np.clip(config.fog_episode_rate * sig.fog_propensity, 0.0, 0.85))
    target = int(round(n * rate * 0.65))
    episodes = _episode_mask(rng, n, target, config) if target > 0 else np.zeros(n, dtype=bool)

    # per-frame freeze weight, ramped over two frames at the edges
    fog = episodes.astype(np.float64)
    ramp = np.convolve(fog, np.ones(3) / 3, mode="same")
    blend = np.clip(config.fog_signal_strength, 0.0, 1.0) * np.maximum(fog * 0.8, ramp)

    trial_speed = 1 + 0.08 * rng.standard_normal()
    cadence = sig.cadence * trial_speed * (1 + 1.2 * blend)
    step_len = sig.step_length * trial_speed * (1 - 0.9 * blend)
    phase = rng.uniform() + np.cumsum(cadence / p) / 2.0      # gait cycles
    travel = np.cumsum(step_len * cadence / p)

    margin = 2.0
    span = w - 2 * margin
    start = rng.uniform(0, 2 * span)
    pos = np.mod(start + travel, 2 * span)
    heading = np.where(pos < span, 1.0, -1.0)
    body_x = margin + np.where(pos < span, pos, 2 * span - pos)

    xs = np.arange(w, dtype=np.float64)[None, :, None]
    ys = np.arange(h, dtype=np.float64)[None, None, :]
    frames = np.zeros((n, w, h))
    tremor = 1.0 - 0.45 * blend * (np.arange(n) % 2)
    for foot in (0, 1):
        cyc = 2 * np.pi * (phase + 0.5 * foot)
        load = np.maximum(0.0, np.sin(cyc))
        load = (1 - blend) * load + blend * (0.55 + 0.1 * np.sin(2 * cyc))
        side = 1.0 if foot == 0 else -1.0
        fx = body_x + heading * 0.35 * step_len * np.cos(cyc)
        fy = h / 2 + side * sig.stance_width / 2
        dx = (xs - fx[:, None, None]) * heading[:, None, None]
        dy = ys - fy
        fore = np.exp(-0.5 * ((dx - 0.6 * sig.foot_length) ** 2 / sig.foot_length**2 + dy**2 / sig.foot_width**2))
        heel = np.exp(-0.5 * ((dx + 0.9 * sig.foot_length) ** 2 / (0.7 * sig.foot_length) ** 2
                              + dy**2 / (0.8 * sig.foot_width) ** 2))
        frames += (sig.load * load * tremor)[:, None, None] * (fore + sig.heel_ratio * heel)

    if config.noise_sigma > 0:
        frames += config.noise_sigma * rng.standard_normal(frames.shape)
    levels = config.levels - 1
    raw = np.rint(np.clip(frames, 0.0, 1.0) * levels)
    return PressureSequence.from_frames(subject_id, trial_id, raw, p, episodes.astype(np.uint8), levels=config.levels)


def generate_cohort(config: SynthConfig) -> Cohort:
    """Render ``n_subjects x trials_per_subject`` trials; deterministic in ``config``."""
    config.validate()
    sequences = []
    for m in range(config.n_subjects):
        sig = subject_signature(config, m)
        for t in range(config.trials_per_subject):
            sequences.append(render_trial(config, sig, m, t))
    return Cohort(sequences)

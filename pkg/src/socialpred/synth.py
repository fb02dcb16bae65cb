"""Deterministic triadic sales-conversation scenes with planted correlations.

The generator is the ground truth for learnability tests: which signals carry
information about which others is fixed by construction.

* speaking: sellers alternate turns; at each turn boundary the next seller
  barges in (overlap) with probability ``1 - turn_taking``, or a gap opens in
  which the buyer may talk.
* face: coefficient 0 is ``mouth_gain * speaking`` plus smooth noise.
* body: a neutral pose, plus arm oscillation during some speaking turns and a
  small listening posture while a partner gestures.
* formation: a triangle with moment-matched truncated-normal side lengths,
  jittered by a discrete Ornstein-Uhlenbeck walk. Bodies face the centroid,
  faces turn towards whoever is talking.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import optimize, signal, stats

from .core import (
    NUM_JOINTS,
    PersonTrack,
    Role,
    Scene,
    heading_angle,
    heading_vector,
    joint_index,
    load_mean_pose,
    root_deltas,
    wrap_angle,
)

OU_RATE = 0.05
FACE_AR = 0.9
LISTEN_SMOOTHING = 0.2
MAX_TRIANGLE_RESAMPLES = 100

REFERENCE_DISTANCES = {
    "b_rs": (148.11, 27.26, 99.03, 265.52),
    "b_ls": (151.45, 29.62, 104.24, 284.85),
    "ls_rs": (124.13, 24.05, 77.70, 206.26),
}


class InfeasibleFormationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    duration_frames: int = 600
    fps: int = 30
    turn_taking: float = 0.8
    mouth_gain: float = 1.0
    noise_pos_sigma: float = 2.0  # cm
    noise_orient_sigma: float = 0.05  # rad
    gesture_amp: float = 15.0  # cm
    # (mean, std, min, max) in cm for each pair
    dist_b_rs: tuple = REFERENCE_DISTANCES["b_rs"]
    dist_b_ls: tuple = REFERENCE_DISTANCES["b_ls"]
    dist_ls_rs: tuple = REFERENCE_DISTANCES["ls_rs"]
    face_noise_sigma: float = 0.3
    joint_noise_sigma: float = 0.1  # cm
    gesture_prob: float = 0.7
    gesture_period: float = 20.0  # frames
    listen_ratio: float = 0.3
    turn_min: int = 45
    turn_max: int = 135
    boundary_mean: float = 15.0  # mean overlap / gap length, frames
    gap_prob: float = 0.2
    buyer_gap_speak_prob: float = 0.7
    gaze_rate: float = 0.3
    lead_frames: int = 15
    scene_id: str = ""

    def __post_init__(self):
        for name in ("dist_b_rs", "dist_b_ls", "dist_ls_rs"):
            v = tuple(float(x) for x in getattr(self, name))
            object.__setattr__(self, name, v)
            if len(v) != 4:
                raise ValueError(f"{name} needs (mean, std, min, max)")
            mean, std, lo, hi = v
            if not lo <= mean <= hi:
                raise ValueError(f"{name}: need min <= mean <= max, got {v}")
            if std < 0:
                raise ValueError(f"{name}: std must be >= 0")
        for name in ("noise_pos_sigma", "noise_orient_sigma", "face_noise_sigma", "joint_noise_sigma", "gesture_amp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("turn_taking", "gesture_prob", "gap_prob", "buyer_gap_speak_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mouth_gain < 0:
            raise ValueError("mouth_gain must be >= 0")
        if self.duration_frames < 0:
            raise ValueError("duration_frames must be >= 0")
        if not 1 <= self.turn_min <= self.turn_max:
            raise ValueError("need 1 <= turn_min <= turn_max")
        if self.boundary_mean < 1:
            raise ValueError("boundary_mean must be >= 1 frame")
        if not 0.0 < self.gaze_rate <= 1.0:
            raise ValueError("gaze_rate must lie in (0, 1]")

    def replace(self, **changes) -> "SynthConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("dist_b_rs", "dist_b_ls", "dist_ls_rs"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _streams(cfg: SynthConfig):
    ss = np.random.SeedSequence(cfg.seed)
    names = ("speaking", "formation", "face", "body")
    return {n: np.random.default_rng(s) for n, s in zip(names, ss.spawn(len(names)))}


# --- distances ---------------------------------------------------------------

@lru_cache(maxsize=64)
def truncnorm_parent(mean: float, std: float, lo: float, hi: float) -> tuple[float, float]:
    """Parent-normal (loc, scale) whose truncation to [lo, hi] has the given mean and std."""
    if std == 0:
        return mean, 0.0

    def moments(p):
        loc, log_scale = p
        scale = np.exp(log_scale)
        a, b = (lo - loc) / scale, (hi - loc) / scale
        m, v = stats.truncnorm.stats(a, b, loc=loc, scale=scale, moments="mv")
        return [float(m) - mean, np.sqrt(float(v)) - std]

    sol = optimize.root(moments, [mean, np.log(std)], method="hybr")
    if not sol.success or max(abs(r) for r in moments(sol.x)) > 1e-6:
        return mean, std
    return float(sol.x[0]), float(np.exp(sol.x[1]))


def sample_distance(params, rng: np.random.Generator) -> float:
    mean, std, lo, hi = params
    loc, scale = truncnorm_parent(mean, std, lo, hi)
    if scale == 0:
        return float(mean)
    a, b = (lo - loc) / scale, (hi - loc) / scale
    return float(stats.truncnorm.rvs(a, b, loc=loc, scale=scale, random_state=rng))


def triangle_from_distances(d_b_ls: float, d_b_rs: float, d_ls_rs: float):
    """Buyer at the origin, centroid on +z, left seller on the +x side.

    Returns ``(buyer, left, right)`` 2-vectors or ``None`` if infeasible.
    """
    cos_g = (d_b_ls**2 + d_b_rs**2 - d_ls_rs**2) / (2 * d_b_ls * d_b_rs)
    if not -1.0 < cos_g < 1.0:
        return None
    half = 0.5 * np.arccos(cos_g)
    # rotate so the centroid's x-coordinate vanishes
    delta = np.arctan(-(d_b_ls - d_b_rs) * np.tan(half) / (d_b_ls + d_b_rs))
    left = d_b_ls * heading_vector(half + delta)
    right = d_b_rs * heading_vector(delta - half)
    if (left[1] + right[1]) <= 0:
        return None
    return np.zeros(2), left, right


def draw_triangle(cfg: SynthConfig, rng: np.random.Generator):
    for _ in range(MAX_TRIANGLE_RESAMPLES):
        d_bls = sample_distance(cfg.dist_b_ls, rng)
        d_brs = sample_distance(cfg.dist_b_rs, rng)
        d_lr = sample_distance(cfg.dist_ls_rs, rng)
        tri = triangle_from_distances(d_bls, d_brs, d_lr)
        if tri is not None:
            return tri, (d_brs, d_bls, d_lr)
    raise InfeasibleFormationError(
        f"no feasible triangle after {MAX_TRIANGLE_RESAMPLES} draws (seed {cfg.seed})"
    )


# --- speaking ----------------------------------------------------------------

def gen_speaking(cfg: SynthConfig, rng: np.random.Generator | None = None):
    """Speaking labels ``(buyer, left_seller, right_seller)``, each of length T."""
    rng = _streams(cfg)["speaking"] if rng is None else rng
    T = cfg.duration_frames
    buyer = np.zeros(T, dtype=np.int8)
    sellers = np.zeros((2, T), dtype=np.int8)
    p_overlap = 1.0 - cfg.turn_taking
    p_gap = min(cfg.gap_prob, 1.0 - p_overlap)
    owner = int(rng.integers(2))
    t = 0
    while t < T:
        d = int(rng.integers(cfg.turn_min, cfg.turn_max + 1))
        sellers[owner, t : t + d] = 1
        t += d
        u = rng.random()
        n = int(rng.geometric(1.0 / cfg.boundary_mean))
        if u < p_overlap:
            sellers[:, t : t + n] = 1
            t += n
        elif u < p_overlap + p_gap:
            if rng.random() < cfg.buyer_gap_speak_prob:
                buyer[t : t + n] = 1
            t += n
        owner = 1 - owner
    return buyer, sellers[0].copy(), sellers[1].copy()


def run_starts(s: np.ndarray) -> np.ndarray:
    """For each frame, the first frame of the speaking run it belongs to (-1 when silent)."""
    out = np.full(len(s), -1)
    start = -1
    for t, v in enumerate(s):
        if v:
            if t == 0 or not s[t - 1]:
                start = t
            out[t] = start
    return out


# --- formation ---------------------------------------------------------------

def _ar1(rng, n: int, dims: int, coef: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) noise with marginal std ``sigma``, shape ``(n, dims)``."""
    xi = rng.standard_normal((n, dims))
    if n == 0 or sigma == 0:
        return np.zeros((n, dims))
    out = np.empty((n, dims))
    out[0] = sigma * xi[0]
    innov = sigma * np.sqrt(1.0 - coef**2)
    for k in range(dims):
        out[1:, k], _ = signal.lfilter([innov], [1.0, -coef], xi[1:, k], zi=[coef * out[0, k]])
    return out


def _attention_targets(speaking, positions, centroid):
    """Where each person's face points at each frame: the longest-running other speaker, else centroid."""
    T = centroid.shape[0]
    starts = [run_starts(s) for s in speaking]
    targets = np.repeat(centroid[None], 3, axis=0).copy()
    for p in range(3):
        for t in range(T):
            best, best_start = None, None
            for q in range(3):
                if q != p and starts[q][t] >= 0 and (best is None or starts[q][t] < best_start):
                    best, best_start = q, starts[q][t]
            if best is not None:
                targets[p, t] = positions[best, t]
    return targets


def gen_formation_track(cfg: SynthConfig, speaking=None, rng: np.random.Generator | None = None):
    """Positions, body and face directions for (buyer, left, right), each ``(T, 2)``.

    Returns ``(positions, body_orient, face_orient, distances)`` with arrays
    shaped ``(3, T, 2)`` and the drawn (B-RS, B-LS, LS-RS) side lengths.
    """
    rng = _streams(cfg)["formation"] if rng is None else rng
    if speaking is None:
        speaking = gen_speaking(cfg)
    T = cfg.duration_frames
    anchors, dists = draw_triangle(cfg, rng)
    positions = np.stack([a[None] + _ar1(rng, T, 2, 1.0 - OU_RATE, cfg.noise_pos_sigma) for a in anchors])
    centroid = positions.mean(axis=0)

    body_angle = heading_angle(centroid[None] - positions)
    body_angle = wrap_angle(body_angle + np.stack([_ar1(rng, T, 1, 1.0 - OU_RATE, cfg.noise_orient_sigma)[:, 0] for _ in range(3)]))

    targets = _attention_targets(speaking, positions, centroid)
    goal = heading_angle(targets - positions)
    face_angle = np.empty((3, T))
    for p in range(3):
        if T == 0:
            break
        face_angle[p, 0] = goal[p, 0]
        for t in range(1, T):
            face_angle[p, t] = face_angle[p, t - 1] + cfg.gaze_rate * wrap_angle(goal[p, t] - face_angle[p, t - 1])
    face_noise = np.stack([_ar1(rng, T, 1, 1.0 - OU_RATE, cfg.noise_orient_sigma)[:, 0] for _ in range(3)])
    face_angle = wrap_angle(face_angle + face_noise)
    return positions, heading_vector(body_angle), heading_vector(face_angle), dists


# --- body ---------------------------------------------------------------------

def foot_contacts(position, threshold: float = 1.5, stride: float = 60.0, duty: float = 0.6) -> np.ndarray:
    """Gait-model contact scores ``(T, 4)`` ordered (l_heel, l_toe, r_heel, r_toe).

    Both feet are planted while the root moves slower than ``threshold`` cm per
    frame; otherwise feet alternate with the given duty cycle, the gait phase
    advancing one cycle per ``stride`` cm travelled.
    """
    position = np.asarray(position, dtype=np.float64)
    T = position.shape[0]
    speed = np.zeros(T)
    if T > 1:
        speed[1:] = np.linalg.norm(np.diff(position, axis=0), axis=1)
    phase = np.cumsum(speed) / stride
    moving = speed >= threshold

    def planted(offset):
        return (np.mod(phase + offset, 1.0) < duty).astype(np.float64)

    out = np.stack([planted(0.0), planted(-0.1), planted(0.5), planted(0.4)], axis=1)
    out[~moving] = 1.0
    return out


def _gesture_flags(speaking, cfg: SynthConfig, rng):
    """Per-frame gesture on/off and oscillation phase for one person."""
    T = len(speaking)
    on = np.zeros(T, dtype=bool)
    phase = np.zeros(T)
    starts = run_starts(speaking)
    t = 0
    while t < T:
        if starts[t] == t:
            end = t
            while end < T and speaking[end]:
                end += 1
            gest = rng.random() < cfg.gesture_prob
            phi0 = rng.uniform(0, 2 * np.pi)
            if gest:
                on[t:end] = True
                phase[t:end] = phi0 + 2 * np.pi * np.arange(end - t) / cfg.gesture_period
            t = end
        else:
            t += 1
    return on, phase


def _joints(speaking, gestures, cfg: SynthConfig, rng):
    """Person-centric joints ``(3, T, 21, 3)`` for all three people."""
    mean_pose = load_mean_pose()
    T = cfg.duration_frames
    out = np.repeat(np.repeat(mean_pose[None, None], 3, axis=0), T, axis=1)
    A = cfg.gesture_amp
    rw, re = joint_index("r_wrist"), joint_index("r_elbow")
    lw, le = joint_index("l_wrist"), joint_index("l_elbow")
    for p in range(3):
        on, phase = gestures[p]
        osc = np.where(on, 1.0, 0.0)[:, None] * np.stack(
            [0.2 * np.sin(phase), np.sin(phase), 0.5 * np.cos(phase)], axis=1
        )
        # right hand gestures more than the left
        out[p, :, rw] += A * osc
        out[p, :, re] += 0.5 * A * osc
        mirrored = osc * np.array([-1.0, 1.0, 1.0])
        out[p, :, lw] += 0.5 * A * mirrored
        out[p, :, le] += 0.25 * A * mirrored

        others_gesture = np.zeros(T, dtype=bool)
        for q in range(3):
            if q != p:
                others_gesture |= gestures[q][0]
        listening = (others_gesture & (speaking[p] == 0)).astype(np.float64)
        level = signal.lfilter([LISTEN_SMOOTHING], [1.0, -(1.0 - LISTEN_SMOOTHING)], listening) if T else listening
        lift = cfg.listen_ratio * A * level[:, None] * np.array([0.0, 1.0, 0.5])
        for j, scale in ((rw, 1.0), (lw, 1.0), (re, 0.5), (le, 0.5)):
            out[p, :, j] += scale * lift
    noise = cfg.joint_noise_sigma * rng.standard_normal(out.shape)
    noise[:, :, joint_index("root")] = 0.0
    return out + noise


def gen_scene(cfg: SynthConfig) -> Scene:
    rng = _streams(cfg)
    T = cfg.duration_frames
    if T < 1:
        raise ValueError("a scene needs at least one frame")
    speaking = gen_speaking(cfg, rng["speaking"])
    positions, body_orient, face_orient, _ = gen_formation_track(cfg, speaking, rng["formation"])

    face = np.stack([_ar1(rng["face"], T, 5, FACE_AR, cfg.face_noise_sigma) for _ in range(3)])
    for p in range(3):
        face[p, :, 0] += cfg.mouth_gain * speaking[p]

    body_rng = rng["body"]
    gestures = [_gesture_flags(speaking[p], cfg, body_rng) for p in range(3)]
    joints = _joints(speaking, gestures, cfg, body_rng)

    tracks = []
    for p, role in enumerate((Role.BUYER, Role.LEFT_SELLER, Role.RIGHT_SELLER)):
        body = np.zeros((T, 73))
        body[:, :63] = joints[p].reshape(T, 3 * NUM_JOINTS)
        body[:, 63] = positions[p, :, 0]
        body[:, 65] = positions[p, :, 1]
        body[:, 66:69] = root_deltas(positions[p], body_orient[p])
        body[:, 69:73] = foot_contacts(positions[p])
        formation = np.concatenate([positions[p], body_orient[p], face_orient[p]], axis=1)
        tracks.append(PersonTrack.from_arrays(role, body, face[p], formation, speaking[p]))

    lead = cfg.lead_frames
    start, end = (lead, T - lead) if T > 2 * lead else (0, T)
    return Scene(
        id=cfg.scene_id or f"synth-{cfg.seed:06d}",
        fps=cfg.fps,
        tracks=tuple(tracks),
        game_start=start,
        game_end=end,
    )


def gen_scenes(cfg: SynthConfig, count: int) -> list[Scene]:
    """``count`` scenes; scene ``i`` uses seed ``cfg.seed + i``."""
    return [gen_scene(cfg.replace(seed=cfg.seed + i, scene_id="")) for i in range(count)]

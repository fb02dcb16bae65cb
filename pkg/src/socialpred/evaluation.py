"""Metrics, channel ablations and group-level analyses.

Every metric pools over frames: per-frame values from all sequences are
concatenated before averaging.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    BODY_DIM,
    FACE_DIM,
    JOINT_NAMES,
    NUM_JOINTS,
    BodyMotion,
    BodyPart,
    Role,
    SpeakingLabel,
    heading_angle,
    joint_columns,
    to_local,
)
from .tasks import SPEAKING_SPECS, speaking_inputs, speaking_probabilities, speaking_targets

NEAR_ZERO = 1e-6


def _as_list(x):
    if isinstance(x, (list, tuple)):
        return list(x)
    return [x]


def _labels(x) -> np.ndarray:
    if isinstance(x, SpeakingLabel):
        return x.value
    return np.asarray(x)


# --- speaking ------------------------------------------------------------------

def speaking_accuracy(pred, truth) -> float:
    """Fraction of frames where predicted and true labels agree.

    Accepts arrays of any matching shape, or lists of per-clip arrays.
    """
    p = [_labels(a).ravel() for a in _as_list(pred)]
    t = [_labels(a).ravel() for a in _as_list(truth)]
    if len(p) != len(t) or any(a.shape != b.shape for a, b in zip(p, t)):
        raise ValueError("prediction and truth shapes differ")
    p, t = np.concatenate(p), np.concatenate(t)
    if p.size == 0:
        raise ValueError("no frames to score")
    return float(np.mean(p.astype(np.int64) == t.astype(np.int64)))


def turn_taking_measure(s0, s1) -> float:
    """Percentage of frames in which at most one of the two people speaks."""
    a, b = _labels(s0).astype(np.int64), _labels(s1).astype(np.int64)
    if a.shape != b.shape:
        raise ValueError("label sequences differ in length")
    if a.size == 0:
        raise ValueError("empty label sequences")
    return float(np.count_nonzero(a + b < 2) / a.size * 100.0)


# --- formation -----------------------------------------------------------------

def orientation_error_deg(pred, truth) -> np.ndarray:
    """Angle in degrees between predicted and true directions, per row.

    The prediction is renormalized first; rows shorter than 1e-6 score 180.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    pn = np.linalg.norm(pred, axis=-1)
    tn = np.linalg.norm(truth, axis=-1)
    safe = np.where(pn < NEAR_ZERO, 1.0, pn)
    dot = np.sum(pred * truth, axis=-1) / safe / np.where(tn == 0, 1.0, tn)
    ang = np.degrees(np.arccos(np.clip(dot, -1.0, 1.0)))
    return np.where(pn < NEAR_ZERO, 180.0, ang)


def formation_frame_errors(pred, truth) -> dict:
    """Per-frame position (cm), body and face orientation (degrees) errors of ``(T, 6)`` sequences."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.shape[-1] != 6:
        raise ValueError(f"expected matching (T, 6) sequences, got {pred.shape} and {truth.shape}")
    return {
        "position_cm": np.linalg.norm(pred[..., 0:2] - truth[..., 0:2], axis=-1),
        "body_deg": orientation_error_deg(pred[..., 2:4], truth[..., 2:4]),
        "face_deg": orientation_error_deg(pred[..., 4:6], truth[..., 4:6]),
    }


def formation_errors(pred, truth) -> dict:
    """Mean errors with spreads over frames and over sequences.

    Returns ``{name: {"mean", "std_frames", "std_sequences"}}`` for
    ``position_cm``, ``body_deg`` and ``face_deg``. Inputs are ``(T, 6)``
    arrays or lists of them.
    """
    per_seq = [formation_frame_errors(p, t) for p, t in zip(_as_list(pred), _as_list(truth), strict=True)]
    out = {}
    for key in ("position_cm", "body_deg", "face_deg"):
        frames = np.concatenate([np.ravel(e[key]) for e in per_seq])
        seq_means = np.array([np.mean(e[key]) for e in per_seq])
        out[key] = {
            "mean": float(frames.mean()),
            "std_frames": float(frames.std()),
            "std_sequences": float(seq_means.std()),
        }
    return out


# --- body gestures ---------------------------------------------------------------

def _body_values(x) -> np.ndarray:
    return x.values if isinstance(x, BodyMotion) else np.asarray(x, dtype=np.float64)


def joint_distances(pred, truth) -> np.ndarray:
    """``(T, 21)`` Euclidean distances between corresponding joints."""
    p, t = _body_values(pred), _body_values(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    p = p[..., BodyPart.JOINTS.slice].reshape(*p.shape[:-1], NUM_JOINTS, 3)
    t = t[..., BodyPart.JOINTS.slice].reshape(*t.shape[:-1], NUM_JOINTS, 3)
    return np.linalg.norm(p - t, axis=-1)


def joint_error(pred, truth) -> tuple[float, float]:
    """Mean and std (cm) of the joint distance over all joints and frames."""
    d = np.concatenate([joint_distances(p, t).ravel() for p, t in zip(_as_list(pred), _as_list(truth), strict=True)])
    return float(d.mean()), float(d.std())


def mean_pose_baseline(clips) -> BodyMotion:
    """Single-frame body holding the per-coordinate mean of every training frame."""
    if not clips:
        raise ValueError("no training clips")
    frames = np.concatenate([c.target.body.values for c in clips], axis=0)
    return BodyMotion(frames.mean(axis=0))


def repeat_pose(pose: BodyMotion, length: int) -> BodyMotion:
    return BodyMotion(np.tile(pose.values.reshape(1, BODY_DIM), (length, 1)))


# --- ablation ----------------------------------------------------------------------

def speaking_channel_groups() -> dict:
    """Named groups of the 78-d speaking input: face coefficients, joints, root and feet blocks."""
    groups = {f"face_{i}": [i] for i in range(FACE_DIM)}
    for name in JOINT_NAMES:
        groups[f"joint_{name}"] = (FACE_DIM + joint_columns([name])).tolist()
    for part in (BodyPart.ROOT_PROJECTION, BodyPart.ROOT_VELOCITY, BodyPart.FOOT_CONTACTS):
        s = part.slice
        groups[part.value] = list(range(FACE_DIM + s.start, FACE_DIM + s.stop))
    return groups


FACE_GROUP = list(range(FACE_DIM))
BODY_GROUP = list(range(FACE_DIM, FACE_DIM + BODY_DIM))


def ablation_sweep(ckpt, clips, groups=None, seed: int = 0) -> dict:
    """Accuracy drop from masking each channel group at test time.

    ``groups`` maps names to lists of input channels (default
    :func:`speaking_channel_groups`). Returns ``{"baseline": acc,
    "groups": {name: {"accuracy", "drop"}}}``; drops are in accuracy units
    (fractions, not points).
    """
    ckpt.require_task("speaking")
    groups = speaking_channel_groups() if groups is None else groups
    raw = speaking_inputs(clips, ckpt.input_spec, seed)
    truth = speaking_targets(clips)[:, 0, :]

    def acc(extra):
        p = speaking_probabilities(ckpt, raw, extra)
        return speaking_accuracy((p >= 0.5).astype(np.int8), truth)

    base = acc([])
    out = {}
    for name, chans in groups.items():
        a = acc(list(chans))
        out[name] = {"accuracy": a, "drop": base - a}
    return {"baseline": base, "groups": out}


# --- proxemics -----------------------------------------------------------------------

PAIRS = {
    "B-RS": (Role.BUYER, Role.RIGHT_SELLER),
    "B-LS": (Role.BUYER, Role.LEFT_SELLER),
    "LS-RS": (Role.LEFT_SELLER, Role.RIGHT_SELLER),
}


def pair_distances(scene) -> dict:
    """Per-frame distances (cm) for each named pair of one scene."""
    return {
        name: np.linalg.norm(scene.track(a).formation.position - scene.track(b).formation.position, axis=-1)
        for name, (a, b) in PAIRS.items()
    }


def proxemics_stats(scenes) -> dict:
    """Pooled average, std, min and max pair distances over all frames of all scenes.

    Each row also carries ``scene_means`` and the standard error of the pooled
    mean estimated from their spread (frames within a scene are correlated).
    """
    if not scenes:
        raise ValueError("no scenes")
    per_scene = [pair_distances(s) for s in scenes]
    rows = {}
    for name in PAIRS:
        d = np.concatenate([p[name] for p in per_scene])
        if d.size == 0:
            raise ValueError("scenes contain no frames")
        means = np.array([p[name].mean() for p in per_scene if p[name].size])
        se = float(means.std(ddof=1) / np.sqrt(len(means))) if len(means) > 1 else float("nan")
        rows[name] = {
            "avg": float(d.mean()),
            "std": float(d.std()),
            "min": float(d.min()),
            "max": float(d.max()),
            "frames": int(d.size),
            "scene_means": means.tolist(),
            "std_error": se,
        }
    return rows


# --- buyer-centric heatmap -------------------------------------------------------------

@dataclass
class Heatmap:
    grid: np.ndarray  # (n, n) counts; rows index z, columns index x
    edges: np.ndarray  # (n + 1,) bin edges shared by both axes, cm
    triangles: list  # per scene: (3, 2) mean positions of buyer, left seller, right seller


def buyer_frame(positions: np.ndarray, buyer_pos: np.ndarray, buyer_orient: np.ndarray) -> np.ndarray:
    """Express ``(T, 2)`` positions relative to a buyer at the origin facing +z."""
    return to_local(positions - buyer_pos, heading_angle(buyer_orient))


def buyer_centric_heatmap(scenes, bin_cm: float = 10.0, extent_cm: float = 300.0) -> Heatmap:
    """Histogram of both sellers' positions in the buyer's frame.

    Points beyond the extent fall into the outermost bins, so the grid always
    holds exactly two counts per frame.
    """
    n = int(round(2 * extent_cm / bin_cm))
    edges = np.linspace(-extent_cm, extent_cm, n + 1)
    grid = np.zeros((n, n), dtype=np.int64)
    triangles = []
    for s in scenes:
        b = s.track(Role.BUYER).formation
        tri = [np.zeros(2)]
        for role in (Role.LEFT_SELLER, Role.RIGHT_SELLER):
            p = buyer_frame(s.track(role).formation.position, b.position, b.body_orient)
            ix = np.clip(np.floor((p[:, 0] + extent_cm) / bin_cm).astype(int), 0, n - 1)
            iz = np.clip(np.floor((p[:, 1] + extent_cm) / bin_cm).astype(int), 0, n - 1)
            np.add.at(grid, (iz, ix), 1)
            tri.append(p.mean(axis=0) if len(p) else np.full(2, np.nan))
        triangles.append(np.stack(tri))
    return Heatmap(grid, edges, triangles)


# --- writers -------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(rows: list[dict], path, columns=None) -> None:
    """One row per condition; column order from ``columns`` or the first row."""
    if not rows:
        raise ValueError("no rows to write")
    columns = list(columns or rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def write_heatmap_csv(h: Heatmap, path) -> None:
    """Grid as CSV: header row of x bin centres, then one row per z bin led by its centre."""
    centres = (h.edges[:-1] + h.edges[1:]) / 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z\\x"] + [f"{c:g}" for c in centres])
        for z, row in zip(centres, h.grid):
            w.writerow([f"{z:g}"] + [int(v) for v in row])


def write_triangles_csv(h: Heatmap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scene", "buyer_x", "buyer_z", "ls_x", "ls_z", "rs_x", "rs_z"])
        for i, t in enumerate(h.triangles):
            w.writerow([i] + [repr(float(v)) for v in np.ravel(t)])


__all__ = [
    "FACE_GROUP",
    "BODY_GROUP",
    "Heatmap",
    "ablation_sweep",
    "buyer_centric_heatmap",
    "formation_errors",
    "joint_error",
    "mean_pose_baseline",
    "proxemics_stats",
    "speaking_accuracy",
    "speaking_channel_groups",
    "turn_taking_measure",
    "SPEAKING_SPECS",
]

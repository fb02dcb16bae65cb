"""Scene files, cropping, windowing, flip augmentation and standardization."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .core import (
    BODY_DIM,
    FACE_DIM,
    FORMATION_DIM,
    MIRROR_FEET,
    MIRROR_JOINTS,
    NUM_JOINTS,
    ROLE_ORDER,
    BodyPart,
    Clip,
    PersonTrack,
    Role,
    Scene,
    Standardizer,
)

SCENE_FORMAT = "socialpred-scene"
CLIPS_FORMAT = "socialpred-clips"
STANDARDIZER_FORMAT = "socialpred-standardizer"
FORMAT_VERSION = 1
RECORD_DIM = BODY_DIM + FACE_DIM + FORMATION_DIM + 1

_FIELDS = (
    ("body", 0, BODY_DIM),
    ("face", BODY_DIM, BODY_DIM + FACE_DIM),
    ("formation", BODY_DIM + FACE_DIM, BODY_DIM + FACE_DIM + FORMATION_DIM),
    ("speaking", RECORD_DIM - 1, RECORD_DIM),
)


class SceneFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- scene files -----------------------------------------------------------

def save_scene(scene: Scene, path) -> None:
    """Write a scene as line-delimited text.

    Line 1 is a JSON header. Each role then contributes a JSON role record
    followed by T lines of 85 numbers: body (73), face (5), formation (6),
    speaking (1). Numbers use 17 significant digits, so loading is exact.
    """
    header = {
        "format": SCENE_FORMAT,
        "format_version": FORMAT_VERSION,
        "id": scene.id,
        "fps": scene.fps,
        "T": scene.num_frames,
        "game_start": scene.game_start,
        "game_end": scene.game_end,
        "verified": scene.verified,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for track in scene.tracks:
        lines.append(json.dumps({"role": track.role.value}))
        rows = np.concatenate(
            [
                track.body.values,
                track.face.coeffs,
                track.formation_array(),
                track.speaking.value[:, None].astype(np.float64),
            ],
            axis=1,
        )
        lines.extend(" ".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_scene(path) -> Scene:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SceneFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"{path}: header is not valid JSON ({e})") from None
    for key in ("format_version", "id", "fps", "T", "game_start", "game_end"):
        if key not in header:
            raise SceneFormatError(f"{path}: header is missing field '{key}'")
    if header.get("format", SCENE_FORMAT) != SCENE_FORMAT:
        raise SceneFormatError(f"{path}: not a scene file (format={header['format']!r})")
    if header["format_version"] != FORMAT_VERSION:
        raise SceneFormatError(f"{path}: unsupported format_version {header['format_version']}")
    T = int(header["T"])
    if T < 1:
        raise SceneFormatError(f"{path}: field 'T' must be >= 1, got {T}")

    tracks = []
    pos = 1
    for expected in ROLE_ORDER:
        if pos >= len(lines):
            raise SceneFormatError(f"{path}: missing track for role '{expected.value}'")
        try:
            role = Role(json.loads(lines[pos])["role"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise SceneFormatError(f"{path}: line {pos + 1}: expected role record for '{expected.value}'") from None
        if role is not expected:
            raise SceneFormatError(f"{path}: expected track for role '{expected.value}', found '{role.value}'")
        block = lines[pos + 1 : pos + 1 + T]
        if len(block) < T:
            raise SceneFormatError(
                f"{path}: track '{role.value}' truncated: frame {len(block)} of {T} missing"
            )
        data = np.empty((T, RECORD_DIM))
        for t, line in enumerate(block):
            parts = line.split()
            if len(parts) != RECORD_DIM:
                raise SceneFormatError(
                    f"{path}: role '{role.value}', frame {t}: expected {RECORD_DIM} numbers, got {len(parts)}"
                )
            try:
                data[t] = [float(p) for p in parts]
            except ValueError:
                col = next(i for i, p in enumerate(parts) if not _is_float(p))
                raise SceneFormatError(
                    f"{path}: role '{role.value}', frame {t}: bad number in field {_field_name(col)}"
                ) from None
        try:
            track = PersonTrack.from_arrays(
                role, data[:, 0:73], data[:, 73:78], data[:, 78:84], data[:, 84].astype(np.int8)
            )
        except ValueError as e:
            bad = _first_bad_frame(data)
            where = f", frame {bad[1]}, field {bad[0]}" if bad else ""
            raise SceneFormatError(f"{path}: role '{role.value}'{where}: {e}") from None
        tracks.append(track)
        pos += 1 + T
    try:
        return Scene(
            id=str(header["id"]),
            fps=int(header["fps"]),
            tracks=tuple(tracks),
            game_start=int(header["game_start"]),
            game_end=int(header["game_end"]),
            verified=bool(header.get("verified", True)),
        )
    except ValueError as e:
        raise SceneFormatError(f"{path}: {e}") from None


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _field_name(col: int) -> str:
    for name, lo, hi in _FIELDS:
        if lo <= col < hi:
            return f"{name}[{col - lo}]"
    return f"column {col}"


def _first_bad_frame(data: np.ndarray):
    """Locate the first frame violating a per-value invariant, for error messages."""
    checks = [
        ("speaking", ~np.isin(data[:, 84], (0.0, 1.0))),
        ("body.foot_contacts", np.any((data[:, 69:73] < 0) | (data[:, 69:73] > 1), axis=1)),
        ("formation.body_orient", np.abs(np.linalg.norm(data[:, 80:82], axis=1) - 1) > 1e-6),
        ("formation.face_orient", np.abs(np.linalg.norm(data[:, 82:84], axis=1) - 1) > 1e-6),
        ("values", ~np.all(np.isfinite(data), axis=1)),
    ]
    for name, mask in checks:
        if np.any(mask):
            return name, int(np.argmax(mask))
    return None


def list_scene_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.scene"))


def load_scenes(directory) -> list[Scene]:
    return [load_scene(p) for p in list_scene_files(directory)]


# --- preprocessing ---------------------------------------------------------

def _replace_body(track: PersonTrack, body: np.ndarray) -> PersonTrack:
    return PersonTrack.from_arrays(
        track.role, body, track.face.coeffs, track.formation_array(), track.speaking.value
    )


def crop_to_game(s: Scene) -> Scene:
    """Keep frames ``[game_start, game_end)``.

    When frames are dropped at the front, the new first frame's root velocity
    is zeroed since it referred to a discarded frame.
    """
    tracks = []
    for tr in s.tracks:
        w = tr.window(s.game_start, s.game_end)
        if s.game_start > 0:
            body = np.array(w.body.values)
            body[0, BodyPart.ROOT_VELOCITY.slice] = 0.0
            w = _replace_body(w, body)
        tracks.append(w)
    n = s.game_end - s.game_start
    return Scene(s.id, s.fps, tuple(tracks), 0, n, s.verified)


def window_clips(s: Scene, f: int = 120, stride: int = 10) -> list[Clip]:
    if f < 1 or stride < 1:
        raise ValueError("window length and stride must be positive")
    T = s.num_frames
    if T < f:
        return []
    ls, b, rs = s.track(Role.LEFT_SELLER), s.track(Role.BUYER), s.track(Role.RIGHT_SELLER)
    return [
        Clip(ls.window(a, a + f), b.window(a, a + f), rs.window(a, a + f), scene_id=s.id, start=a)
        for a in range(0, T - f + 1, stride)
    ]


def flip_body(body: np.ndarray) -> np.ndarray:
    """Mirror 73-d body frames across the x=0 plane."""
    body = np.asarray(body, dtype=np.float64)
    out = np.array(body)
    joints = body[..., :63].reshape(body.shape[:-1] + (NUM_JOINTS, 3))[..., MIRROR_JOINTS, :].copy()
    joints[..., 0] = -joints[..., 0]
    out[..., :63] = joints.reshape(body.shape[:-1] + (63,))
    out[..., 63] = -body[..., 63]
    # A mirrored turn goes the other way, so the heading delta flips sign too.
    out[..., 66] = -body[..., 66]
    out[..., 68] = -body[..., 68]
    out[..., 69:73] = body[..., 69:73][..., MIRROR_FEET]
    return out


def flip_formation(formation: np.ndarray) -> np.ndarray:
    out = np.array(formation, dtype=np.float64)
    out[..., 0::2] = -out[..., 0::2]
    return out


def flip_track(track: PersonTrack, role: Role) -> PersonTrack:
    return PersonTrack.from_arrays(
        role,
        flip_body(track.body.values),
        track.face.coeffs,
        flip_formation(track.formation_array()),
        track.speaking.value,
    )


def flip_clip(c: Clip) -> Clip:
    """Mirror a clip so the right seller becomes the (left-side) target."""
    return Clip(
        target=flip_track(c.partner2, Role.LEFT_SELLER),
        partner1=flip_track(c.partner1, Role.BUYER),
        partner2=flip_track(c.target, Role.RIGHT_SELLER),
        scene_id=c.scene_id,
        start=c.start,
        flipped=not c.flipped,
    )


def make_clips(scenes, f: int = 120, stride: int = 10, flip: bool = True, verified_only: bool = False) -> list[Clip]:
    """Crop, window and (optionally) flip-augment scenes in deterministic order."""
    clips = []
    for s in scenes:
        if verified_only and not s.verified:
            continue
        windows = window_clips(crop_to_game(s), f, stride)
        clips.extend(windows)
        if flip:
            clips.extend(flip_clip(c) for c in windows)
    return clips


def split_dataset(scenes, train_fraction: float = 0.78, seed: int = 0):
    """Split scenes (never clips) into train/test, independent of input order."""
    scenes = sorted(scenes, key=lambda s: s.id)
    n = len(scenes)
    if n < 2:
        raise ValueError(f"need at least 2 scenes to split, got {n}")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = set(perm[:n_train].tolist())
    train = [s for i, s in enumerate(scenes) if i in train_idx]
    test = [s for i, s in enumerate(scenes) if i not in train_idx]
    return train, test


# --- channel tensors -------------------------------------------------------

PERSONS = ("target", "partner1", "partner2")


def track_channels(track: PersonTrack, part: str) -> np.ndarray:
    """``(C, T)`` channel block for one of ``face``, ``body``, ``formation``, ``speaking``."""
    if part == "face":
        a = track.face.coeffs
    elif part == "body":
        a = track.body.values
    elif part == "formation":
        a = track.formation_array()
    elif part == "speaking":
        a = track.speaking.value[:, None].astype(np.float64)
    elif part == "root_velocity":
        a = track.body.values[:, BodyPart.ROOT_VELOCITY.slice]
    else:
        raise ValueError(f"unknown channel block {part!r}")
    return np.ascontiguousarray(a.T, dtype=np.float64)


def clips_tensor(clips, person: str, parts) -> np.ndarray:
    """Stack ``(B, C, T)`` from the named person's channel blocks, in ``parts`` order."""
    if person not in PERSONS:
        raise ValueError(f"person must be one of {PERSONS}")
    if not clips:
        raise ValueError("no clips")
    return np.stack(
        [np.concatenate([track_channels(getattr(c, person), p) for p in parts], axis=0) for c in clips]
    )


def fit_standardizer(x: np.ndarray, epsilon: float = 1e-8) -> Standardizer:
    """Per-channel statistics over every frame of a ``(B, C, T)`` training tensor."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot fit a standardizer on an empty set")
    if x.ndim != 3:
        raise ValueError("expected a (batch, channels, time) tensor")
    mean = x.mean(axis=(0, 2))
    std = x.std(axis=(0, 2))
    std = np.where(std < epsilon, epsilon, std)
    return Standardizer(mean, std, epsilon)


def mask_channels(x: np.ndarray, unused, st: Standardizer) -> np.ndarray:
    """Replace the ``unused`` channels of a raw ``(B, C, T)`` tensor by their training means."""
    unused = np.asarray(sorted(set(int(i) for i in unused)), dtype=int)
    x = np.array(x, dtype=np.float64)
    if unused.size:
        if unused.min() < 0 or unused.max() >= x.shape[1] or unused.max() >= st.channels:
            raise ValueError(f"channel index out of range for {x.shape[1]} channels: {unused.tolist()}")
        x[:, unused, :] = st.mean[unused][None, :, None]
    return x


# --- clip index and standardizer files -------------------------------------

def save_clip_index(clips, path, **settings) -> None:
    header = {"format": CLIPS_FORMAT, "format_version": FORMAT_VERSION, **settings}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [
        json.dumps({"scene": c.scene_id, "start": c.start, "flipped": c.flipped, "length": c.length}, sort_keys=True)
        for c in clips
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_clip_index(path, scenes) -> tuple[dict, list[Clip]]:
    """Rebuild clips from an index and the (cropped) scenes it refers to."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("format") != CLIPS_FORMAT:
        raise SceneFormatError(f"{path}: not a clip index")
    by_id = {s.id: s for s in scenes}
    clips = []
    for n, line in enumerate(lines[1:], start=2):
        rec = json.loads(line)
        if rec["scene"] not in by_id:
            raise SceneFormatError(f"{path}: line {n}: unknown scene '{rec['scene']}'")
        s = by_id[rec["scene"]]
        a, f = rec["start"], rec["length"]
        c = Clip(
            s.track(Role.LEFT_SELLER).window(a, a + f),
            s.track(Role.BUYER).window(a, a + f),
            s.track(Role.RIGHT_SELLER).window(a, a + f),
            scene_id=s.id,
            start=a,
        )
        clips.append(flip_clip(c) if rec["flipped"] else c)
    return header, clips


def save_standardizer(st: Standardizer, path) -> None:
    header = {"format": STANDARDIZER_FORMAT, "format_version": FORMAT_VERSION, "epsilon": st.epsilon}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [f"{_fmt(m)} {_fmt(s)}" for m, s in zip(st.mean, st.std)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_standardizer(path) -> Standardizer:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("format") != STANDARDIZER_FORMAT:
        raise SceneFormatError(f"{path}: not a standardizer file")
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    return Standardizer(rows[:, 0], rows[:, 1], float(header["epsilon"]))


def scene_filename(scene_id: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in scene_id)
    return safe + ".scene"


def write_scenes(scenes, directory) -> list[Path]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for s in scenes:
        p = Path(directory) / scene_filename(s.id)
        save_scene(s, p)
        paths.append(p)
    return paths

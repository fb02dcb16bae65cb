"""Domain types for triadic interaction scenes.

Every array-valued type accepts either a single frame (shape ``(D,)``) or a
sequence (shape ``(T, D)``). Arrays are copied on construction and made
read-only, so instances can be shared freely.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

BODY_DIM = 73
FACE_DIM = 5
FORMATION_DIM = 6
NUM_JOINTS = 21

JOINT_NAMES = (
    "root", "spine", "chest", "neck", "head",
    "l_hip", "l_knee", "l_ankle", "l_toe",
    "r_hip", "r_knee", "r_ankle", "r_toe",
    "l_clavicle", "l_shoulder", "l_elbow", "l_wrist",
    "r_clavicle", "r_shoulder", "r_elbow", "r_wrist",
)
LOWER_BODY_JOINTS = (
    "root",
    "l_hip", "l_knee", "l_ankle", "l_toe",
    "r_hip", "r_knee", "r_ankle", "r_toe",
)
UPPER_BODY_JOINTS = tuple(j for j in JOINT_NAMES if j not in LOWER_BODY_JOINTS)

# Index permutation that swaps every l_* joint with its r_* twin.
MIRROR_JOINTS = tuple(
    JOINT_NAMES.index(
        "r_" + n[2:] if n.startswith("l_") else "l_" + n[2:] if n.startswith("r_") else n
    )
    for n in JOINT_NAMES
)
# Foot contacts are ordered (l_heel, l_toe, r_heel, r_toe).
MIRROR_FEET = (2, 3, 0, 1)


def joint_index(name: str) -> int:
    return JOINT_NAMES.index(name)


def joint_columns(names) -> np.ndarray:
    """Column indices (within the 73-d body vector) of the given joints' xyz."""
    idx = [3 * joint_index(n) + k for n in names for k in range(3)]
    return np.asarray(idx, dtype=int)


class BodyPart(enum.Enum):
    JOINTS = "joints"
    ROOT_PROJECTION = "root_projection"
    ROOT_VELOCITY = "root_velocity"
    FOOT_CONTACTS = "foot_contacts"

    @property
    def slice(self) -> slice:
        return _BODY_SLICES[self]


_BODY_SLICES = {
    BodyPart.JOINTS: slice(0, 63),
    BodyPart.ROOT_PROJECTION: slice(63, 66),
    BodyPart.ROOT_VELOCITY: slice(66, 69),
    BodyPart.FOOT_CONTACTS: slice(69, 73),
}


class Role(enum.Enum):
    BUYER = "buyer"
    LEFT_SELLER = "left_seller"
    RIGHT_SELLER = "right_seller"


ROLE_ORDER = (Role.BUYER, Role.LEFT_SELLER, Role.RIGHT_SELLER)


class _ArrayEq:
    """Field-wise equality that compares arrays exactly."""

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if not (a.shape == b.shape and np.array_equal(a, b)):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = object.__hash__


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")


@dataclass(frozen=True, eq=False)
class BodyMotion(_ArrayEq):
    """73 values per frame: joints, root floor projection, root velocity, foot contacts."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim not in (1, 2) or v.shape[-1] != BODY_DIM:
            raise ValueError(f"body motion must have {BODY_DIM} values per frame, got shape {v.shape}")
        _check_finite("body motion", v)
        contacts = v[..., BodyPart.FOOT_CONTACTS.slice]
        if np.any(contacts < 0) or np.any(contacts > 1):
            raise ValueError("foot contacts must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return 1 if self.values.ndim == 1 else self.values.shape[0]

    def part(self, part: BodyPart) -> np.ndarray:
        return body_slice(self, part)


def body_slice(b: BodyMotion, part: BodyPart) -> np.ndarray:
    return b.values[..., part.slice]


@dataclass(frozen=True, eq=False)
class FaceMotion(_ArrayEq):
    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coeffs)
        if c.ndim not in (1, 2) or c.shape[-1] != FACE_DIM:
            raise ValueError(f"face motion must have {FACE_DIM} coefficients per frame, got shape {c.shape}")
        _check_finite("face motion", c)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return 1 if self.coeffs.ndim == 1 else self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class FormationState(_ArrayEq):
    """Ground-plane position (x, z) in cm plus unit body and face directions.

    The default constructor is strict and rejects non-unit orientations; use
    :meth:`normalized` to renormalize instead.
    """

    position: np.ndarray
    body_orient: np.ndarray
    face_orient: np.ndarray

    NORM_TOL = 1e-6

    def __post_init__(self):
        arrays = {}
        for name in ("position", "body_orient", "face_orient"):
            a = _frozen(getattr(self, name))
            if a.shape[-1] != 2 or a.ndim not in (1, 2):
                raise ValueError(f"{name} must be 2-vectors, got shape {a.shape}")
            _check_finite(name, a)
            arrays[name] = a
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1:
            raise ValueError(f"formation components disagree in shape: {shapes}")
        for name in ("body_orient", "face_orient"):
            norm = np.linalg.norm(arrays[name], axis=-1)
            bad = np.abs(norm - 1.0) > self.NORM_TOL
            if np.any(bad):
                raise ValueError(f"{name} is not unit length (norm {np.ravel(norm)[np.argmax(np.ravel(bad))]:.6g})")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @classmethod
    def normalized(cls, position, body_orient, face_orient) -> "FormationState":
        return cls(position, _unit(body_orient), _unit(face_orient))

    def __len__(self):
        return 1 if self.position.ndim == 1 else self.position.shape[0]

    def to_vec(self) -> np.ndarray:
        return formation_vec(self)

    @classmethod
    def from_vec(cls, v, normalize: bool = False) -> "FormationState":
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != FORMATION_DIM:
            raise ValueError(f"formation vector must have {FORMATION_DIM} values, got shape {v.shape}")
        make = cls.normalized if normalize else cls
        return make(v[..., 0:2], v[..., 2:4], v[..., 4:6])


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("cannot normalize a zero orientation vector")
    return v / n


def formation_vec(s: FormationState) -> np.ndarray:
    """Pack as ``[x, z, body_x, body_z, face_x, face_z]``."""
    return np.concatenate([s.position, s.body_orient, s.face_orient], axis=-1)


@dataclass(frozen=True, eq=False)
class SpeakingLabel(_ArrayEq):
    value: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.value)
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("speaking labels must be 0 or 1")
        object.__setattr__(self, "value", _frozen(v, dtype=np.int8))

    def __len__(self):
        return 1 if self.value.ndim == 0 else self.value.shape[0]


@dataclass(frozen=True, eq=False)
class PersonTrack(_ArrayEq):
    role: Role
    body: BodyMotion
    face: FaceMotion
    formation: FormationState
    speaking: SpeakingLabel

    def __post_init__(self):
        role = Role(self.role)
        object.__setattr__(self, "role", role)
        lens = {
            "body": self.body.values.shape[0] if self.body.values.ndim == 2 else -1,
            "face": self.face.coeffs.shape[0] if self.face.coeffs.ndim == 2 else -1,
            "formation": self.formation.position.shape[0] if self.formation.position.ndim == 2 else -1,
            "speaking": self.speaking.value.shape[0] if self.speaking.value.ndim == 1 else -1,
        }
        if min(lens.values()) < 0:
            raise ValueError(f"{role.value}: every track component must be a sequence")
        if len(set(lens.values())) != 1:
            raise ValueError(f"{role.value}: sequence lengths differ: {lens}")

    @classmethod
    def from_arrays(cls, role, body, face, formation, speaking) -> "PersonTrack":
        return cls(
            role,
            BodyMotion(body),
            FaceMotion(face),
            FormationState.from_vec(formation),
            SpeakingLabel(speaking),
        )

    def __len__(self):
        return self.body.values.shape[0]

    def window(self, start: int, stop: int) -> "PersonTrack":
        return PersonTrack(
            self.role,
            BodyMotion(self.body.values[start:stop]),
            FaceMotion(self.face.coeffs[start:stop]),
            FormationState(
                self.formation.position[start:stop],
                self.formation.body_orient[start:stop],
                self.formation.face_orient[start:stop],
            ),
            SpeakingLabel(self.speaking.value[start:stop]),
        )

    def formation_array(self) -> np.ndarray:
        return formation_vec(self.formation)

    def with_role(self, role: Role) -> "PersonTrack":
        return PersonTrack(role, self.body, self.face, self.formation, self.speaking)


@dataclass(frozen=True, eq=False)
class Scene(_ArrayEq):
    id: str
    fps: int
    tracks: tuple
    game_start: int
    game_end: int
    verified: bool = True

    def __post_init__(self):
        tracks = tuple(self.tracks)
        if len(tracks) != 3:
            raise ValueError(f"scene {self.id}: expected 3 tracks, got {len(tracks)}")
        roles = [t.role for t in tracks]
        if len(set(roles)) != 3:
            raise ValueError(f"scene {self.id}: duplicated roles {[r.value for r in roles]}")
        lengths = {len(t) for t in tracks}
        if len(lengths) != 1:
            raise ValueError(f"scene {self.id}: track lengths differ: {sorted(lengths)}")
        T = lengths.pop()
        if T < 1:
            raise ValueError(f"scene {self.id}: empty tracks")
        if not 0 <= self.game_start < self.game_end <= T:
            raise ValueError(
                f"scene {self.id}: need 0 <= game_start < game_end <= T, got {self.game_start}, {self.game_end}, T={T}"
            )
        # Canonical role order makes equality and serialization order-independent.
        object.__setattr__(self, "tracks", tuple(sorted(tracks, key=lambda t: ROLE_ORDER.index(t.role))))

    @property
    def num_frames(self) -> int:
        return len(self.tracks[0])

    def track(self, role: Role) -> PersonTrack:
        return self.tracks[ROLE_ORDER.index(Role(role))]


@dataclass(frozen=True, eq=False)
class Clip(_ArrayEq):
    """A fixed-length window: the left seller as target, buyer and right seller as partners."""

    target: PersonTrack
    partner1: PersonTrack
    partner2: PersonTrack
    scene_id: str = ""
    start: int = 0
    flipped: bool = False

    def __post_init__(self):
        expected = (Role.LEFT_SELLER, Role.BUYER, Role.RIGHT_SELLER)
        got = (self.target.role, self.partner1.role, self.partner2.role)
        if got != expected:
            raise ValueError(f"clip roles must be {[r.value for r in expected]}, got {[r.value for r in got]}")
        lengths = {len(self.target), len(self.partner1), len(self.partner2)}
        if len(lengths) != 1:
            raise ValueError(f"clip windows differ in length: {sorted(lengths)}")

    @property
    def length(self) -> int:
        return len(self.target)


@dataclass(frozen=True, eq=False)
class Standardizer(_ArrayEq):
    """Per-channel affine map to zero mean and unit variance.

    ``std`` already has the epsilon substituted for (near-)constant channels.
    """

    mean: np.ndarray
    std: np.ndarray
    epsilon: float = 1e-8

    def __post_init__(self):
        mean = _frozen(self.mean)
        std = _frozen(self.std)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-d arrays of equal length")
        if np.any(std < 0):
            raise ValueError("std must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def channels(self) -> int:
        return self.mean.shape[0]

    def _shape(self, x: np.ndarray, axis: int):
        shape = [1] * x.ndim
        shape[axis] = self.channels
        return shape

    def apply(self, x: np.ndarray, axis: int = 1) -> np.ndarray:
        s = self._shape(x, axis)
        return (x - self.mean.reshape(s)) / self.std.reshape(s)

    def invert(self, x: np.ndarray, axis: int = 1) -> np.ndarray:
        s = self._shape(x, axis)
        return x * self.std.reshape(s) + self.mean.reshape(s)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]), float(d["epsilon"]))


# --- planar geometry -------------------------------------------------------

def wrap_angle(a):
    """Wrap radians into (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def heading_angle(orient) -> np.ndarray:
    """Angle of a ground-plane direction, measured from +z towards +x."""
    orient = np.asarray(orient, dtype=np.float64)
    return np.arctan2(orient[..., 0], orient[..., 1])


def heading_vector(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=np.float64)
    return np.stack([np.sin(angle), np.cos(angle)], axis=-1)


def to_local(delta, heading):
    """Express global (x, z) displacements in the frame of a body facing ``heading``."""
    c, s = np.cos(heading), np.sin(heading)
    dx, dz = delta[..., 0], delta[..., 1]
    return np.stack([dx * c - dz * s, dx * s + dz * c], axis=-1)


def to_global(local, heading):
    c, s = np.cos(heading), np.sin(heading)
    lx, lz = local[..., 0], local[..., 1]
    return np.stack([lx * c + lz * s, -lx * s + lz * c], axis=-1)


def root_deltas(position, body_orient) -> np.ndarray:
    """Convert a global (x, z, heading) track into per-frame person-centric deltas.

    Returns ``(T, 3)`` rows of ``(dx, dz, dheading)``: the step expressed in the
    previous frame's heading frame and the wrapped heading change. Frame 0 is
    all zeros.
    """
    position = np.asarray(position, dtype=np.float64)
    psi = heading_angle(body_orient)
    out = np.zeros((position.shape[0], 3))
    if position.shape[0] > 1:
        out[1:, :2] = to_local(np.diff(position, axis=0), psi[:-1])
        out[1:, 2] = wrap_angle(np.diff(psi))
    return out


def integrate_deltas(deltas, position0, heading0):
    """Inverse of :func:`root_deltas` given the first frame's pose."""
    deltas = np.asarray(deltas, dtype=np.float64)
    T = deltas.shape[0]
    pos = np.zeros((T, 2))
    psi = np.zeros(T)
    pos[0] = position0
    psi[0] = heading0
    for t in range(1, T):
        pos[t] = pos[t - 1] + to_global(deltas[t, :2], psi[t - 1])
        psi[t] = psi[t - 1] + deltas[t, 2]
    return pos, wrap_angle(psi)


def load_mean_pose() -> np.ndarray:
    """The shipped neutral standing pose as a ``(21, 3)`` array in cm."""
    text = resources.files("socialpred").joinpath("data/mean_pose.json").read_text()
    joints = json.loads(text)["joints"]
    return np.array([joints[n] for n in JOINT_NAMES], dtype=np.float64)

"""Speaking, formation and body-gesture predictors, trained from scratch.

All models are fully convolutional over ``(batch, channels, time)`` tensors.
Inputs are standardized with statistics from the training clips, and inputs a
condition does not use are replaced by their training means (zero after
standardization), so every condition of a task shares one architecture.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    BODY_DIM,
    FACE_DIM,
    BodyMotion,
    BodyPart,
    Clip,
    Standardizer,
    joint_columns,
    LOWER_BODY_JOINTS,
    UPPER_BODY_JOINTS,
    root_deltas,
)
from .dataio import clips_tensor, fit_standardizer, mask_channels
from .nn import AmsGrad, Conv1d, ConvTranspose1d, Dropout, MaxPool1d, ReLU, Sequential, Sigmoid
from .nn.losses import BCE_CLAMP, bce_loss, mse_loss

CHECKPOINT_FORMAT = "socialpred-checkpoint"
CHECKPOINT_VERSION = 1

TASKS = ("speaking", "formation", "motion-ae", "traj2body", "body2body")

# --- input conditions ------------------------------------------------------

SPEAKING_CHANNELS = FACE_DIM + BODY_DIM  # face first, then body
FACE_CHANNELS = tuple(range(FACE_DIM))
BODY_CHANNELS = tuple(range(FACE_DIM, SPEAKING_CHANNELS))

SPEAKING_SPECS = {
    # name: (source person, used channels)
    "self-face": ("target", FACE_CHANNELS),
    "self-body": ("target", BODY_CHANNELS),
    "self-face-body": ("target", FACE_CHANNELS + BODY_CHANNELS),
    "other-face": ("partner2", FACE_CHANNELS),
    "other-body": ("partner2", BODY_CHANNELS),
    "other-face-body": ("partner2", FACE_CHANNELS + BODY_CHANNELS),
    "random-person": ("random", FACE_CHANNELS + BODY_CHANNELS),
}

# 12-d formation input: buyer (6) then right seller (6), each [x, z, bx, bz, fx, fz]
FORMATION_GROUPS = {
    "positions": (0, 1, 6, 7),
    "body_orient": (2, 3, 8, 9),
    "face_orient": (4, 5, 10, 11),
}
FORMATION_SPECS = {
    "pos-only": ("positions",),
    "pos+face": ("positions", "face_orient"),
    "pos+body": ("positions", "body_orient"),
    "pos+face+body": ("positions", "body_orient", "face_orient"),
}

DEFAULT_L1 = {"speaking": 1e-3, "formation": 0.1, "motion-ae": 0.0, "traj2body": 0.0, "body2body": 0.0}
ORIENT_FLOOR = 1e-6


def formation_groups(input_spec: str) -> tuple[str, ...]:
    if input_spec in FORMATION_SPECS:
        return FORMATION_SPECS[input_spec]
    groups = tuple(g.strip() for g in input_spec.split(",") if g.strip())
    bad = [g for g in groups if g not in FORMATION_GROUPS]
    if bad or not groups:
        raise ValueError(f"unknown formation input spec {input_spec!r}")
    return groups


def formation_unused(input_spec: str) -> list[int]:
    used = {c for g in formation_groups(input_spec) for c in FORMATION_GROUPS[g]}
    return [c for c in range(12) if c not in used]


def speaking_unused(input_spec: str) -> list[int]:
    if input_spec not in SPEAKING_SPECS:
        raise ValueError(f"unknown speaking input spec {input_spec!r}; choose from {sorted(SPEAKING_SPECS)}")
    used = set(SPEAKING_SPECS[input_spec][1])
    return [c for c in range(SPEAKING_CHANNELS) if c not in used]


# --- architectures -----------------------------------------------------------

DROPOUT = 0.25


def speaking_net(rng, dropout: float = DROPOUT) -> Sequential:
    return Sequential([
        Conv1d(SPEAKING_CHANNELS, 128, 3, rng=rng), ReLU(),
        Dropout(dropout), Conv1d(128, 256, 3, rng=rng), ReLU(),
        Dropout(dropout), Conv1d(256, 512, 3, rng=rng), ReLU(),
        Conv1d(512, 1, 1, rng=rng), Sigmoid(),
    ])


def formation_net(rng, dropout: float = DROPOUT) -> Sequential:
    return Sequential([
        Dropout(dropout), Conv1d(12, 64, 3, rng=rng), ReLU(),
        Dropout(dropout), Conv1d(64, 128, 3, rng=rng), ReLU(),
        MaxPool1d(2),
        Dropout(dropout), ConvTranspose1d(128, 6, 4, stride=2, rng=rng),
    ])


AE_HIDDEN = 256
AE_KERNEL = 25


def motion_encoder(rng) -> Sequential:
    return Sequential([Conv1d(BODY_DIM, AE_HIDDEN, AE_KERNEL, rng=rng), ReLU(), MaxPool1d(2)])


def motion_decoder(rng) -> Sequential:
    return Sequential([ConvTranspose1d(AE_HIDDEN, BODY_DIM, 4, stride=2, rng=rng)])


def latent_regressor(in_ch: int, rng, hidden: int = 128) -> Sequential:
    return Sequential([
        Conv1d(in_ch, hidden, 3, rng=rng), ReLU(),
        Conv1d(hidden, AE_HIDDEN, 3, rng=rng), ReLU(),
        MaxPool1d(2),
    ])


# --- checkpoints ---------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch: int = 32
    seed: int = 0
    lambda_l1: float | None = None  # None: the task default
    dropout: float = DROPOUT  # speaking and formation nets only

    def l1_for(self, task: str) -> float:
        return DEFAULT_L1[task] if self.lambda_l1 is None else float(self.lambda_l1)


@dataclass
class Checkpoint:
    task: str
    input_spec: str
    networks: dict
    standardizers: dict
    mask: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    optimizer: dict | None = None
    history: list = field(default_factory=list)

    def save(self, path) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "format_version": CHECKPOINT_VERSION,
            "task": self.task,
            "input_spec": self.input_spec,
            "networks": {k: net.spec() for k, net in self.networks.items()},
            "standardizers": {k: st.to_dict() for k, st in self.standardizers.items()},
            "mask": [int(i) for i in self.mask],
            "config": self.config,
            "history": [float(h) for h in self.history],
        }
        arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
        for k, net in self.networks.items():
            for name, a in net.named_params().items():
                arrays[f"param/{k}/{name}"] = a
        if self.optimizer is not None:
            opt = self.optimizer
            arrays["opt/scalars"] = np.array([opt["t"], opt["lr"], opt["beta1"], opt["beta2"], opt["eps"]], dtype=np.float64)
            for key in ("m", "v", "v_max"):
                for name, a in opt[key].items():
                    arrays[f"opt/{key}/{name}"] = a
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: not a checkpoint")
            if meta["format_version"] != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {meta['format_version']}")
            networks = {}
            for k, spec in meta["networks"].items():
                net = Sequential.from_spec(spec)
                prefix = f"param/{k}/"
                net.load_params({n[len(prefix):]: z[n] for n in z.files if n.startswith(prefix)})
                networks[k] = net
            optimizer = None
            if "opt/scalars" in z.files:
                t, lr, b1, b2, eps = z["opt/scalars"]
                optimizer = {"t": int(t), "lr": float(lr), "beta1": float(b1), "beta2": float(b2), "eps": float(eps)}
                for key in ("m", "v", "v_max"):
                    prefix = f"opt/{key}/"
                    optimizer[key] = {n[len(prefix):]: np.array(z[n]) for n in z.files if n.startswith(prefix)}
        return cls(
            task=meta["task"],
            input_spec=meta["input_spec"],
            networks=networks,
            standardizers={k: Standardizer.from_dict(d) for k, d in meta["standardizers"].items()},
            mask=meta["mask"],
            config=meta["config"],
            optimizer=optimizer,
            history=meta["history"],
        )

    def require_task(self, *tasks: str) -> None:
        if self.task not in tasks:
            raise ValueError(f"checkpoint is for task '{self.task}', expected one of {list(tasks)}")


def params_checksum(net: Sequential) -> str:
    h = hashlib.sha256()
    for name, a in sorted(net.named_params().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


# --- generic training loop -------------------------------------------------------

def _fit(model: Sequential, trainable: dict, x, y, loss_fn, cfg: TrainConfig, lam: float, tag: str, callback=None):
    """Mini-batch AmsGrad on ``loss_fn(model(x), y) + lam * sum|W|``.

    ``trainable`` maps optimizer keys to ``(layer, param_name)``; only those
    parameters move. ``callback(epoch, loss)`` runs after every epoch.
    Returns the optimizer state and per-epoch mean losses.
    """
    if len(x) == 0:
        raise ValueError("no training clips")
    seeds = np.random.SeedSequence([cfg.seed, _tag_int(tag)]).spawn(2)
    order_rng, drop_rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
    opt = AmsGrad(lr=cfg.lr)
    params = {k: layer.params[p] for k, (layer, p) in trainable.items()}
    history = []
    n = len(x)
    for _ in range(cfg.epochs):
        perm = order_rng.permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, cfg.batch):
            idx = np.sort(perm[lo : lo + cfg.batch])
            out = model.forward(x[idx], train=True, rng=drop_rng)
            loss, dout = loss_fn(out, y[idx])
            model.zero_grad()
            model.backward(dout)
            grads = {}
            for k, (layer, p) in trainable.items():
                g = layer.grads[p]
                if lam and p == "W":
                    g = g + lam * np.sign(layer.params[p])
                    loss += lam * float(np.abs(layer.params[p]).sum())
                grads[k] = g
            opt.step(params, grads)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
        if callback is not None:
            callback(len(history), history[-1])
    return opt.state_dict(), history


def _tag_int(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")


def _trainable(nets: dict) -> dict:
    return {
        f"{name}/{i}.{p}": (layer, p)
        for name, net in nets.items()
        for i, layer in enumerate(net.layers)
        for p in layer.params
    }


def _init_rng(cfg: TrainConfig, tag: str):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, _tag_int(tag), 1]))


def _even_pad(x: np.ndarray) -> np.ndarray:
    """Repeat the last frame so the time axis is even (pool/unpool round trip)."""
    return x if x.shape[2] % 2 == 0 else np.concatenate([x, x[:, :, -1:]], axis=2)


# --- speaking -------------------------------------------------------------------

def random_partner_indices(clips, seed: int) -> np.ndarray:
    """For each clip, the index of a clip from a different scene."""
    ids = np.array([c.scene_id for c in clips])
    if len(set(ids.tolist())) < 2:
        raise ValueError("random-person input needs clips from at least two scenes")
    rng = np.random.default_rng(seed)
    out = np.empty(len(clips), dtype=int)
    for i in range(len(clips)):
        j = int(rng.integers(len(clips)))
        while ids[j] == ids[i]:
            j = int(rng.integers(len(clips)))
        out[i] = j
    return out


def speaking_inputs(clips, input_spec: str, seed: int = 0) -> np.ndarray:
    """Raw ``(B, 78, T)`` face+body channels of the condition's source person."""
    source, _ = SPEAKING_SPECS[input_spec]
    if source == "random":
        idx = random_partner_indices(clips, seed)
        donors = [clips[j] for j in idx]
        return clips_tensor(donors, "target", ("face", "body"))
    return clips_tensor(clips, source, ("face", "body"))


def speaking_targets(clips) -> np.ndarray:
    return clips_tensor(clips, "target", ("speaking",))


def train_speaking(clips, input_spec: str, cfg: TrainConfig | None = None, callback=None) -> Checkpoint:
    cfg = cfg or TrainConfig()
    if not clips:
        raise ValueError("no training clips")
    unused = speaking_unused(input_spec)
    raw = speaking_inputs(clips, input_spec, cfg.seed)
    st = fit_standardizer(raw)
    x = st.apply(mask_channels(raw, unused, st))
    y = speaking_targets(clips)
    net = speaking_net(_init_rng(cfg, "speaking"), cfg.dropout)
    opt, hist = _fit(net, _trainable({"net": net}), x, y, bce_loss, cfg, cfg.l1_for("speaking"), "speaking", callback)
    return Checkpoint("speaking", input_spec, {"net": net}, {"input": st}, unused, dataclasses.asdict(cfg), opt, hist)


def speaking_probabilities(ckpt: Checkpoint, raw: np.ndarray, extra_mask=()) -> np.ndarray:
    """Per-frame speaking probabilities ``(B, T)`` for raw ``(B, 78, T)`` inputs.

    Values are clamped to the loss clamp ``[1e-7, 1 - 1e-7]`` so they stay
    strictly inside (0, 1) even where the float sigmoid saturates.
    """
    ckpt.require_task("speaking")
    st = ckpt.standardizers["input"]
    x = st.apply(mask_channels(raw, list(ckpt.mask) + list(extra_mask), st))
    p = ckpt.networks["net"].forward(x, train=False)[:, 0, :]
    return np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)


def predict_speaking(ckpt: Checkpoint, clip: Clip, source=None):
    """Probabilities and 0/1 labels (threshold 0.5) for every frame of ``clip``.

    For the random-person condition pass the donor ``PersonTrack`` as ``source``.
    """
    ckpt.require_task("speaking")
    person, _ = SPEAKING_SPECS[ckpt.input_spec]
    if person == "random":
        if source is None:
            raise ValueError("random-person checkpoints need an explicit source track")
        track = source
    else:
        track = getattr(clip, person) if source is None else source
    raw = np.concatenate([track.face.coeffs.T, track.body.values.T], axis=0)[None]
    p = speaking_probabilities(ckpt, raw)[0]
    return p, (p >= 0.5).astype(np.int8)


# --- formation --------------------------------------------------------------------

def formation_inputs(clips) -> np.ndarray:
    """Raw ``(B, 12, T)``: buyer formation then right-seller formation."""
    return np.concatenate(
        [clips_tensor(clips, "partner1", ("formation",)), clips_tensor(clips, "partner2", ("formation",))], axis=1
    )


def formation_targets(clips) -> np.ndarray:
    return clips_tensor(clips, "target", ("formation",))


def train_formation(clips, input_spec: str = "pos+face+body", cfg: TrainConfig | None = None, callback=None) -> Checkpoint:
    cfg = cfg or TrainConfig()
    if not clips:
        raise ValueError("no training clips")
    unused = formation_unused(input_spec)
    raw = formation_inputs(clips)
    st_in = fit_standardizer(raw)
    x = st_in.apply(mask_channels(raw, unused, st_in))
    y_raw = formation_targets(clips)
    st_out = fit_standardizer(y_raw)
    y = st_out.apply(y_raw)
    if x.shape[2] % 2:
        raise ValueError("formation training clips need an even number of frames")
    net = formation_net(_init_rng(cfg, "formation"), cfg.dropout)
    opt, hist = _fit(net, _trainable({"net": net}), x, y, mse_loss, cfg, cfg.l1_for("formation"), "formation", callback)
    return Checkpoint(
        "formation", input_spec, {"net": net}, {"input": st_in, "target": st_out}, unused, dataclasses.asdict(cfg), opt, hist
    )


def renormalize_orientations(pred: np.ndarray, floor: float = ORIENT_FLOOR) -> np.ndarray:
    """Rescale the orientation columns of ``(T, 6)`` predictions to unit length.

    A vector shorter than ``floor`` takes the previous frame's direction (or +z
    on the first frame).
    """
    out = np.array(pred, dtype=np.float64)
    for lo in (2, 4):
        v = out[:, lo : lo + 2]
        prev = np.array([0.0, 1.0])
        for t in range(len(v)):
            n = np.linalg.norm(v[t])
            if n < floor:
                v[t] = prev
            else:
                v[t] = v[t] / n
            prev = v[t].copy()
    return out


def formation_raw_predictions(ckpt: Checkpoint, raw: np.ndarray, extra_mask=()) -> np.ndarray:
    """De-standardized ``(B, 6, T)`` network outputs, before renormalization."""
    ckpt.require_task("formation")
    T = raw.shape[2]
    st_in, st_out = ckpt.standardizers["input"], ckpt.standardizers["target"]
    x = _even_pad(st_in.apply(mask_channels(raw, list(ckpt.mask) + list(extra_mask), st_in)))
    y = ckpt.networks["net"].forward(x, train=False)[:, :, :T]
    return st_out.invert(y)


def predict_formation(ckpt: Checkpoint, clip: Clip) -> np.ndarray:
    """Target formation ``(T, 6)`` with unit orientation vectors."""
    raw = formation_inputs([clip])
    y = formation_raw_predictions(ckpt, raw)[0].T
    return renormalize_orientations(y)


# --- body gestures ------------------------------------------------------------------

def body_targets(clips) -> np.ndarray:
    return clips_tensor(clips, "target", ("body",))


def train_motion_ae(clips, cfg: TrainConfig | None = None, callback=None) -> Checkpoint:
    cfg = cfg or TrainConfig()
    if not clips:
        raise ValueError("no training clips")
    raw = body_targets(clips)
    if raw.shape[2] % 2:
        raise ValueError("motion autoencoder clips need an even number of frames")
    st = fit_standardizer(raw)
    x = st.apply(raw)
    rng = _init_rng(cfg, "motion-ae")
    enc, dec = motion_encoder(rng), motion_decoder(rng)
    model = Sequential(enc.layers + dec.layers)
    opt, hist = _fit(model, _trainable({"encoder": enc, "decoder": dec}), x, x, mse_loss, cfg, cfg.l1_for("motion-ae"), "motion-ae", callback)
    return Checkpoint("motion-ae", "body", {"encoder": enc, "decoder": dec}, {"body": st}, [], dataclasses.asdict(cfg), opt, hist)


def encode(ae: Checkpoint, raw_body: np.ndarray) -> np.ndarray:
    """Latent ``(B, 256, T//2)`` for raw ``(B, 73, T)`` bodies (T even)."""
    ae.require_task("motion-ae")
    return ae.networks["encoder"].forward(ae.standardizers["body"].apply(raw_body))


def decode(ae: Checkpoint, z: np.ndarray) -> np.ndarray:
    """Raw ``(B, 73, 2*T')`` bodies from latents."""
    return ae.standardizers["body"].invert(ae.networks["decoder"].forward(z))


def _copy_net(net: Sequential) -> Sequential:
    out = Sequential.from_spec(net.spec())
    out.load_params({k: v.copy() for k, v in net.named_params().items()})
    return out


def _train_regressor(task: str, raw_in: np.ndarray, clips, ae: Checkpoint, cfg: TrainConfig, callback=None) -> Checkpoint:
    if ae is None:
        raise ValueError(f"{task} needs a trained motion autoencoder")
    ae.require_task("motion-ae")
    st_in = fit_standardizer(raw_in)
    x = st_in.apply(raw_in)
    body_st = ae.standardizers["body"]
    y = body_st.apply(body_targets(clips))
    if x.shape[2] % 2:
        raise ValueError(f"{task} clips need an even number of frames")
    reg = latent_regressor(x.shape[1], _init_rng(cfg, task))
    dec = _copy_net(ae.networks["decoder"])
    model = Sequential(reg.layers + dec.layers)
    # the decoder is frozen: only regressor parameters are handed to the optimizer
    opt, hist = _fit(model, _trainable({"regressor": reg}), x, y, mse_loss, cfg, cfg.l1_for(task), task, callback)
    return Checkpoint(
        task, "trajectory" if task == "traj2body" else "partner-bodies",
        {"regressor": reg, "decoder": dec},
        {"input": st_in, "body": body_st},
        [], dataclasses.asdict(cfg), opt, hist,
    )


def traj2body_inputs(clips) -> np.ndarray:
    return clips_tensor(clips, "target", ("root_velocity",))


def body2body_inputs(clips) -> np.ndarray:
    return np.concatenate([clips_tensor(clips, "partner1", ("body",)), clips_tensor(clips, "partner2", ("body",))], axis=1)


def train_traj2body(clips, ae: Checkpoint, cfg: TrainConfig | None = None, callback=None) -> Checkpoint:
    cfg = cfg or TrainConfig()
    if not clips:
        raise ValueError("no training clips")
    return _train_regressor("traj2body", traj2body_inputs(clips), clips, ae, cfg, callback)


def train_body2body(clips, ae: Checkpoint, cfg: TrainConfig | None = None, callback=None) -> Checkpoint:
    cfg = cfg or TrainConfig()
    if not clips:
        raise ValueError("no training clips")
    return _train_regressor("body2body", body2body_inputs(clips), clips, ae, cfg, callback)


def regress_body(ckpt: Checkpoint, raw_in: np.ndarray) -> np.ndarray:
    """Raw ``(B, 73, T)`` bodies decoded from a regressor checkpoint's inputs."""
    ckpt.require_task("traj2body", "body2body")
    T = raw_in.shape[2]
    x = _even_pad(ckpt.standardizers["input"].apply(raw_in))
    z = ckpt.networks["regressor"].forward(x)
    y = ckpt.networks["decoder"].forward(z)[:, :, :T]
    return ckpt.standardizers["body"].invert(y)


def _as_body(frames: np.ndarray) -> BodyMotion:
    frames = np.array(frames)
    frames[:, BodyPart.FOOT_CONTACTS.slice] = np.clip(frames[:, BodyPart.FOOT_CONTACTS.slice], 0.0, 1.0)
    return BodyMotion(frames)


def formation_to_deltas(formation: np.ndarray) -> np.ndarray:
    """Global ``(T, 6)`` formation to person-centric ``(T, 3)`` root deltas (frame 0 anchored at zero)."""
    return root_deltas(formation[:, 0:2], formation[:, 2:4])


def infer_body_from_formation(formation_ckpt: Checkpoint, traj_ckpt: Checkpoint, clip: Clip) -> BodyMotion:
    """Predict the target's formation from the partners, then decode a body along it.

    The root projection and root velocity of the result are the exact values
    implied by the predicted trajectory.
    """
    traj_ckpt.require_task("traj2body")
    formation = predict_formation(formation_ckpt, clip)
    deltas = formation_to_deltas(formation)
    frames = regress_body(traj_ckpt, deltas.T[None])[0].T
    frames[:, BodyPart.ROOT_VELOCITY.slice] = deltas
    frames[:, 63] = formation[:, 0]
    frames[:, 64] = 0.0
    frames[:, 65] = formation[:, 1]
    return _as_body(frames)


def infer_body2body(ckpt: Checkpoint, clip: Clip) -> BodyMotion:
    ckpt.require_task("body2body")
    frames = regress_body(ckpt, body2body_inputs([clip]))[0].T
    return _as_body(frames)


_LOWER_COLS = joint_columns(LOWER_BODY_JOINTS)
_UPPER_COLS = joint_columns(UPPER_BODY_JOINTS)


def hybrid_merge(path_pred: BodyMotion, body_pred: BodyMotion) -> BodyMotion:
    """Root, feet and legs from the trajectory branch; upper body from the partner-body branch."""
    a, b = path_pred.values, body_pred.values
    if a.shape != b.shape:
        raise ValueError(f"cannot merge predictions of shapes {a.shape} and {b.shape}")
    out = np.array(b)
    for part in (BodyPart.ROOT_PROJECTION, BodyPart.ROOT_VELOCITY, BodyPart.FOOT_CONTACTS):
        out[..., part.slice] = a[..., part.slice]
    out[..., _LOWER_COLS] = a[..., _LOWER_COLS]
    return BodyMotion(out)


def load_checkpoint(path) -> Checkpoint:
    return Checkpoint.load(Path(path))

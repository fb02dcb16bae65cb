"""Command-line entry point: ``socialpred <command> ...``.

Relative ``--out`` paths are placed under ``$SOCIALPRED_OUT`` when it is set.
Exit codes: 0 success, 1 user error (bad flags, missing files, wrong
checkpoint), 2 internal error. Outputs of a failed command are removed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import evaluation as ev
from . import tasks
from .dataio import (
    crop_to_game,
    load_clip_index,
    load_scenes,
    make_clips,
    save_clip_index,
    split_dataset,
    write_scenes,
)
from .nn import grad_check
from .synth import SynthConfig, gen_scenes

log = logging.getLogger("socialpred")

OUT_ENV = "SOCIALPRED_OUT"


class UserError(Exception):
    """Problem with the command line or its inputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(f"{self.prog}: {message}")


# --- output bookkeeping ----------------------------------------------------------

def resolve_out(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


class Outputs:
    """Tracks files and directories a command creates so a failure can undo them."""

    def __init__(self):
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def mkdir(self, d: Path) -> Path:
        missing = []
        p = Path(d)
        while not p.exists():
            missing.append(p)
            p = p.parent
        d.mkdir(parents=True, exist_ok=True)
        self.dirs.extend(reversed(missing))
        return d

    def file(self, p: Path) -> Path:
        self.mkdir(Path(p).parent)
        self.files.append(Path(p))
        return Path(p)

    def rollback(self) -> None:
        for f in self.files:
            if f.is_file():
                f.unlink()
        for d in reversed(self.dirs):
            shutil.rmtree(d, ignore_errors=True)


def _hash_file(p: Path) -> str:
    return hashlib.sha256(Path(p).read_bytes()).hexdigest()


def _hash_obj(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def versions() -> dict:
    return {
        "socialpred": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_manifest(out: Outputs, path: Path, command: str, config: dict, seed, inputs=()) -> None:
    """Record what is needed to regenerate an output: config, seed, input hashes, versions."""
    manifest = {
        "command": command,
        "config": config,
        "config_hash": _hash_obj(config),
        "seed": seed,
        "inputs": {str(p): _hash_file(p) for p in inputs},
        "versions": versions(),
    }
    ev.write_json(manifest, out.file(path))


# --- shared loaders -----------------------------------------------------------------

def _require_dir(p) -> Path:
    p = Path(p)
    if not p.is_dir():
        raise UserError(f"no such directory: {p}")
    return p


def _require_file(p) -> Path:
    p = Path(p)
    if not p.is_file():
        raise UserError(f"no such file: {p}")
    return p


def _load_split(data: Path, split: str):
    data = _require_dir(data)
    index = _require_file(data / f"{split}_clips.jsonl")
    scenes = load_scenes(_require_dir(data / "scenes"))
    _, clips = load_clip_index(index, scenes)
    if not clips:
        raise UserError(f"{index} lists no clips")
    return clips, index


def _load_ckpt(path, *task_names) -> tasks.Checkpoint:
    ck = tasks.load_checkpoint(_require_file(path))
    if task_names and ck.task not in task_names:
        raise UserError(f"{path}: checkpoint is for task '{ck.task}', expected {' or '.join(task_names)}")
    return ck


# --- commands -------------------------------------------------------------------------

def cmd_synth(a, out: Outputs) -> None:
    cfg = SynthConfig.load(_require_file(a.config)) if a.config else SynthConfig()
    changes = {}
    if a.seed is not None:
        changes["seed"] = a.seed
    if a.duration is not None:
        changes["duration_frames"] = a.duration
    cfg = cfg.replace(**changes)
    if a.count < 1:
        raise UserError("--count must be positive")
    d = out.mkdir(resolve_out(a.out))
    scenes = gen_scenes(cfg, a.count)
    for p in write_scenes(scenes, d):
        out.files.append(p)
    config = {"synth": cfg.to_dict(), "count": a.count}
    write_manifest(out, d / "manifest.json", "synth", config, cfg.seed)
    log.info("wrote %d scenes to %s", len(scenes), d)


def cmd_preprocess(a, out: Outputs) -> None:
    src = _require_dir(a.inp)
    scenes = load_scenes(src)
    if len(scenes) < 2:
        raise UserError(f"{src}: need at least 2 scenes, found {len(scenes)}")
    d = out.mkdir(resolve_out(a.out))
    train, test = split_dataset(scenes, a.train_fraction, a.split_seed)
    cropped = [crop_to_game(s) for s in scenes]
    for p in write_scenes(cropped, out.mkdir(d / "scenes")):
        out.files.append(p)
    settings = {"window": a.window, "stride": a.stride, "verified_only": a.verified_only}
    # scenes are already cropped, so re-cropping inside make_clips is a no-op
    by_id = {s.id: s for s in cropped}
    train_clips = make_clips([by_id[s.id] for s in train], a.window, a.stride, a.flip, a.verified_only)
    test_clips = make_clips([by_id[s.id] for s in test], a.window, a.test_stride or a.window, False, a.verified_only)
    if not train_clips or not test_clips:
        raise UserError("windowing produced no clips; scenes may be shorter than --window")
    save_clip_index(train_clips, out.file(d / "train_clips.jsonl"), flip=a.flip, **settings)
    save_clip_index(test_clips, out.file(d / "test_clips.jsonl"), flip=False, **settings)
    config = {
        **settings, "flip": a.flip, "train_fraction": a.train_fraction,
        "split_seed": a.split_seed, "test_stride": a.test_stride or a.window,
    }
    write_manifest(out, d / "manifest.json", "preprocess", config, a.split_seed)
    log.info("%d train clips, %d test clips", len(train_clips), len(test_clips))


TRAIN_KEYS = ("task", "input_spec", "epochs", "lr", "batch", "seed", "lambda_l1", "dropout")


def train_settings(a) -> dict:
    """Merge a task config file with flags; flags win."""
    s = {"task": None, "input_spec": None}
    s.update({k: v for k, v in vars(tasks.TrainConfig()).items()})
    if a.config:
        file_cfg = json.loads(_require_file(a.config).read_text())
        unknown = set(file_cfg) - set(TRAIN_KEYS)
        if unknown:
            raise UserError(f"{a.config}: unknown keys {sorted(unknown)}")
        s.update(file_cfg)
    for k in TRAIN_KEYS:
        v = getattr(a, k, None)
        if v is not None:
            s[k] = v
    if s["task"] not in tasks.TASKS:
        raise UserError(f"--task must be one of {list(tasks.TASKS)}")
    return s


def cmd_train(a, out: Outputs) -> None:
    s = train_settings(a)
    task = s["task"]
    cfg = tasks.TrainConfig(epochs=int(s["epochs"]), lr=float(s["lr"]), batch=int(s["batch"]),
                            seed=int(s["seed"]), lambda_l1=s["lambda_l1"],
                            dropout=float(s["dropout"]))
    clips, index = _load_split(a.data, "train")
    inputs = [index]

    def progress(epoch, loss):
        log.info("epoch %d loss %.6f", epoch, loss)

    if task == "speaking":
        spec = s["input_spec"] or "self-face-body"
        if spec not in tasks.SPEAKING_SPECS:
            raise UserError(f"unknown speaking input spec {spec!r}; choose from {sorted(tasks.SPEAKING_SPECS)}")
        ck = tasks.train_speaking(clips, spec, cfg, progress)
    elif task == "formation":
        spec = s["input_spec"] or "pos+face+body"
        try:
            tasks.formation_groups(spec)
        except ValueError as e:
            raise UserError(str(e)) from None
        ck = tasks.train_formation(clips, spec, cfg, progress)
    elif task == "motion-ae":
        ck = tasks.train_motion_ae(clips, cfg, progress)
    else:
        if not a.ae:
            raise UserError(f"--ae is required for task {task}")
        ae = _load_ckpt(a.ae, "motion-ae")
        inputs.append(Path(a.ae))
        fn = tasks.train_traj2body if task == "traj2body" else tasks.train_body2body
        ck = fn(clips, ae, cfg, progress)
    path = resolve_out(a.out)
    ck.save(out.file(path))
    s["input_spec"] = ck.input_spec
    write_manifest(out, path.with_name(path.name + ".manifest.json"), "train", s, cfg.seed, inputs)
    log.info("saved %s checkpoint to %s", task, path)


def _speaking_rows(ck, clips, seed):
    raw = tasks.speaking_inputs(clips, ck.input_spec, seed)
    p = tasks.speaking_probabilities(ck, raw)
    truth = tasks.speaking_targets(clips)[:, 0, :]
    acc = ev.speaking_accuracy((p >= 0.5).astype(np.int8), truth)
    return [{"task": "speaking", "condition": ck.input_spec, "accuracy": acc, "frames": int(truth.size)}]


def _formation_row(condition, pred, truth):
    e = ev.formation_errors(pred, truth)
    row = {"task": "formation", "condition": condition}
    for k, v in e.items():
        for stat, x in v.items():
            row[f"{k}_{stat}"] = x
    return row


def _body_row(condition, pred, truth):
    m, sd = ev.joint_error(pred, truth)
    return {"task": "body", "condition": condition, "joint_error_cm": m, "joint_error_std_cm": sd}


def cmd_eval(a, out: Outputs) -> None:
    ck = _load_ckpt(a.ckpt)
    clips, index = _load_split(a.data, a.split)
    inputs = [Path(a.ckpt), index]
    rows = []
    if ck.task == "speaking":
        rows = _speaking_rows(ck, clips, ck.config.get("seed", 0) + 1)
    elif ck.task == "formation":
        pred = [tasks.predict_formation(ck, c) for c in clips]
        rows = [_formation_row(ck.input_spec, pred, [c.target.formation_array() for c in clips])]
    else:
        truth = [c.target.body.values for c in clips]
        train_clips, train_index = _load_split(a.data, "train")
        inputs.append(train_index)
        pose = ev.mean_pose_baseline(train_clips)
        rows.append(_body_row("mean-pose", [ev.repeat_pose(pose, len(t)).values for t in truth], truth))
        if ck.task == "motion-ae":
            raw = tasks.body_targets(clips)
            rec = tasks.decode(ck, tasks.encode(ck, raw))
            rows.append(_body_row("autoencoder", list(np.transpose(rec, (0, 2, 1))), truth))
        elif ck.task == "traj2body":
            gt = tasks.regress_body(ck, tasks.traj2body_inputs(clips))
            rows.append(_body_row("traj2body-gt-trajectory", list(np.transpose(gt, (0, 2, 1))), truth))
            path_preds = None
            if a.formation_ckpt:
                fck = _load_ckpt(a.formation_ckpt, "formation")
                inputs.append(Path(a.formation_ckpt))
                path_preds = [tasks.infer_body_from_formation(fck, ck, c) for c in clips]
                rows.append(_body_row("traj2body", path_preds, truth))
            if a.body_ckpt:
                bck = _load_ckpt(a.body_ckpt, "body2body")
                inputs.append(Path(a.body_ckpt))
                body_preds = [tasks.infer_body2body(bck, c) for c in clips]
                rows.append(_body_row("body2body", body_preds, truth))
                if path_preds is not None:
                    hyb = [tasks.hybrid_merge(p, b) for p, b in zip(path_preds, body_preds)]
                    rows.append(_body_row("hybrid", hyb, truth))
        else:
            preds = [tasks.infer_body2body(ck, c) for c in clips]
            rows.append(_body_row("body2body", preds, truth))
    d = out.mkdir(resolve_out(a.out))
    ev.write_csv(rows, out.file(d / "metrics.csv"))
    ev.write_json({"task": ck.task, "input_spec": ck.input_spec, "rows": rows}, out.file(d / "metrics.json"))
    config = {"split": a.split, "task": ck.task, "input_spec": ck.input_spec}
    write_manifest(out, d / "manifest.json", "eval", config, ck.config.get("seed"), inputs)
    for r in rows:
        log.info("%s", r)


def cmd_ablate(a, out: Outputs) -> None:
    ck = _load_ckpt(a.ckpt, "speaking")
    clips, index = _load_split(a.data, a.split)
    res = ev.ablation_sweep(ck, clips, seed=ck.config.get("seed", 0) + 1)
    rows = [{"group": "none", "accuracy": res["baseline"], "drop": 0.0}]
    rows += [{"group": g, **v} for g, v in res["groups"].items()]
    d = out.mkdir(resolve_out(a.out))
    ev.write_csv(rows, out.file(d / "ablation.csv"), ["group", "accuracy", "drop"])
    ev.write_json(res, out.file(d / "ablation.json"))
    write_manifest(out, d / "manifest.json", "ablate", {"split": a.split, "input_spec": ck.input_spec},
                   ck.config.get("seed"), [Path(a.ckpt), index])


def cmd_proxemics(a, out: Outputs) -> None:
    scenes = load_scenes(_require_dir(a.inp))
    if not scenes:
        raise UserError(f"{a.inp}: no scenes")
    stats = ev.proxemics_stats(scenes)
    rows = [{"pair": k, **{s: v[s] for s in ("avg", "std", "min", "max", "std_error", "frames")}} for k, v in stats.items()]
    d = out.mkdir(resolve_out(a.out))
    ev.write_csv(rows, out.file(d / "proxemics.csv"))
    ev.write_json(stats, out.file(d / "proxemics.json"))
    write_manifest(out, d / "manifest.json", "proxemics", {"scenes": sorted(s.id for s in scenes)}, None)


def cmd_heatmap(a, out: Outputs) -> None:
    scenes = load_scenes(_require_dir(a.inp))
    if not scenes:
        raise UserError(f"{a.inp}: no scenes")
    if a.bin <= 0 or a.extent <= 0:
        raise UserError("--bin and --extent must be positive")
    h = ev.buyer_centric_heatmap(scenes, a.bin, a.extent)
    d = out.mkdir(resolve_out(a.out))
    ev.write_heatmap_csv(h, out.file(d / "heatmap.csv"))
    ev.write_triangles_csv(h, out.file(d / "triangles.csv"))
    ev.write_json({"bin_cm": a.bin, "extent_cm": a.extent, "total": int(h.grid.sum()), "scenes": len(scenes)},
                  out.file(d / "heatmap.json"))
    write_manifest(out, d / "manifest.json", "heatmap", {"bin": a.bin, "extent": a.extent,
                   "scenes": sorted(s.id for s in scenes)}, None)


def gradcheck_models(seed: int = 0) -> dict:
    """Each task network at small widths-preserving shapes, with a matching input."""
    rng = np.random.default_rng(seed)
    ae_rng = np.random.default_rng(seed + 1)
    dec = tasks.motion_decoder(ae_rng)
    from .nn import Sequential

    return {
        "speaking": (tasks.speaking_net(rng), rng.standard_normal((2, tasks.SPEAKING_CHANNELS, 6))),
        "formation": (tasks.formation_net(rng), rng.standard_normal((2, 12, 6))),
        "motion-ae": (Sequential(tasks.motion_encoder(rng).layers + dec.layers), rng.standard_normal((1, 73, 8))),
        "traj2body": (Sequential(tasks.latent_regressor(3, rng).layers + dec.layers), rng.standard_normal((2, 3, 6))),
        "body2body": (Sequential(tasks.latent_regressor(146, rng).layers + dec.layers), rng.standard_normal((1, 146, 6))),
    }


def cmd_gradcheck(a, out: Outputs) -> int:
    models = gradcheck_models(a.seed)
    names = list(models) if a.task == "all" else [a.task]
    rows = []
    for n in names:
        model, x = models[n]
        r = grad_check(model, x, tolerance=a.tolerance, n_coords=a.coords, seed=a.seed, train=True)
        rows.append({"model": n, "max_rel_error": r.max_rel_error, "coords": r.n_checked,
                     "worst": r.worst, "passed": r.passed})
        log.info("%s: %s", n, r)
        print(f"{n}: {r}")
    if a.out:
        d = out.mkdir(resolve_out(a.out))
        ev.write_csv(rows, out.file(d / "gradcheck.csv"))
        write_manifest(out, d / "manifest.json", "gradcheck",
                       {"task": a.task, "tolerance": a.tolerance, "coords": a.coords}, a.seed)
    return 0 if all(r["passed"] for r in rows) else 1


# --- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="socialpred", description=__doc__.split("\n")[0],
                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    s = sub.add_parser("synth", help="generate synthetic scenes", formatter_class=fmt)
    s.add_argument("--config", help="synth config JSON (keys as in SynthConfig)")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=50)
    s.add_argument("--seed", type=int, help="overrides the config seed")
    s.add_argument("--duration", type=int, help="frames per scene; overrides the config")

    s = sub.add_parser("preprocess", help="crop, split, window and flip-augment scenes", formatter_class=fmt)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--window", type=int, default=120)
    s.add_argument("--stride", type=int, default=10)
    s.add_argument("--test-stride", type=int, default=None, help="test window stride (default: --window)")
    s.add_argument("--flip", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--train-fraction", type=float, default=0.78)
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--verified-only", action="store_true")

    s = sub.add_parser("train", help="train a model and write a checkpoint", formatter_class=fmt)
    s.add_argument("--task", choices=tasks.TASKS)
    s.add_argument("--input-spec", dest="input_spec")
    s.add_argument("--data", required=True, help="preprocess output directory")
    s.add_argument("--out", required=True, help="checkpoint path (.npz)")
    s.add_argument("--config", help="task config JSON with keys " + ", ".join(TRAIN_KEYS))
    s.add_argument("--ae", help="motion autoencoder checkpoint (traj2body, body2body)")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lambda-l1", dest="lambda_l1", type=float)
    s.add_argument("--dropout", type=float, help="dropout rate for speaking and formation nets")

    s = sub.add_parser("eval", help="evaluate a checkpoint on held-out clips", formatter_class=fmt)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--test", "--data", dest="data", required=True, help="preprocess output directory")
    s.add_argument("--split", default="test", choices=("train", "test"))
    s.add_argument("--out", required=True)
    s.add_argument("--formation-ckpt", help="with a traj2body checkpoint: evaluate the formation-driven path")
    s.add_argument("--body-ckpt", help="with a traj2body checkpoint: body2body checkpoint for the hybrid")

    s = sub.add_parser("ablate", help="test-time channel masking of a speaking model", formatter_class=fmt)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--test", "--data", dest="data", required=True)
    s.add_argument("--split", default="test", choices=("train", "test"))
    s.add_argument("--out", required=True)

    s = sub.add_parser("proxemics", help="pairwise distance statistics", formatter_class=fmt)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("heatmap", help="buyer-centric seller position histogram", formatter_class=fmt)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bin", type=float, default=10.0)
    s.add_argument("--extent", type=float, default=300.0)

    s = sub.add_parser("gradcheck", help="finite-difference check of the task networks", formatter_class=fmt)
    s.add_argument("--task", default="all", choices=("all",) + tasks.TASKS)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--coords", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    return p


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "proxemics": cmd_proxemics,
    "heatmap": cmd_heatmap,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    out = Outputs()
    try:
        a = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        code = COMMANDS[a.command](a, out) or 0
        return code
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (UserError, FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as e:
        out.rollback()
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        out.rollback()
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

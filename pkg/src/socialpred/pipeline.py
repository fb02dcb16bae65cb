"""End-to-end run of every command on freshly generated synthetic scenes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .cli import main


@dataclass
class PipelineConfig:
    scenes: int = 50
    duration: int = 330
    seed: int = 0
    window: int = 120
    stride: int = 30
    epochs: int = 1
    speaking_specs: tuple = ("self-face", "other-face")


class PipelineError(RuntimeError):
    pass


def _run(*args) -> None:
    argv = [str(a) for a in args]
    code = main(argv)
    if code != 0:
        raise PipelineError(f"'socialpred {' '.join(argv)}' exited with {code}")


def run_pipeline(root, cfg: PipelineConfig | None = None) -> dict:
    """Run synth through heatmap under ``root``; returns the metric file paths."""
    cfg = cfg or PipelineConfig()
    root = Path(root)
    scenes, prep, ck = root / "scenes", root / "prep", root / "checkpoints"
    ep = ("--epochs", cfg.epochs, "--seed", cfg.seed)
    _run("synth", "--out", scenes, "--count", cfg.scenes, "--duration", cfg.duration, "--seed", cfg.seed)
    _run("preprocess", "--in", scenes, "--out", prep, "--window", cfg.window, "--stride", cfg.stride)
    outputs = {}
    for spec in cfg.speaking_specs:
        _run("train", "--task", "speaking", "--input-spec", spec, "--data", prep, "--out", ck / f"speaking-{spec}.npz", *ep)
        _run("eval", "--ckpt", ck / f"speaking-{spec}.npz", "--test", prep, "--out", root / "eval" / f"speaking-{spec}")
        outputs[f"speaking-{spec}"] = root / "eval" / f"speaking-{spec}" / "metrics.csv"
    _run("ablate", "--ckpt", ck / f"speaking-{cfg.speaking_specs[0]}.npz", "--test", prep, "--out", root / "ablation")
    outputs["ablation"] = root / "ablation" / "ablation.csv"
    _run("train", "--task", "formation", "--data", prep, "--out", ck / "formation.npz", *ep)
    _run("eval", "--ckpt", ck / "formation.npz", "--test", prep, "--out", root / "eval" / "formation")
    outputs["formation"] = root / "eval" / "formation" / "metrics.csv"
    _run("train", "--task", "motion-ae", "--data", prep, "--out", ck / "motion-ae.npz", *ep)
    for task in ("traj2body", "body2body"):
        _run("train", "--task", task, "--ae", ck / "motion-ae.npz", "--data", prep, "--out", ck / f"{task}.npz", *ep)
    _run("eval", "--ckpt", ck / "traj2body.npz", "--test", prep, "--out", root / "eval" / "body",
         "--formation-ckpt", ck / "formation.npz", "--body-ckpt", ck / "body2body.npz")
    outputs["body"] = root / "eval" / "body" / "metrics.csv"
    _run("proxemics", "--in", scenes, "--out", root / "proxemics")
    outputs["proxemics"] = root / "proxemics" / "proxemics.csv"
    _run("heatmap", "--in", scenes, "--out", root / "heatmap")
    outputs["heatmap"] = root / "heatmap" / "heatmap.csv"
    _run("gradcheck", "--out", root / "gradcheck", "--seed", cfg.seed)
    outputs["gradcheck"] = root / "gradcheck" / "gradcheck.csv"
    return outputs

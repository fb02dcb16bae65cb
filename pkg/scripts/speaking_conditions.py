"""Speaking-status accuracy per input condition, plus face/body masking of a face+body model."""
import argparse
import time
from pathlib import Path

from socialpred import tasks
from socialpred.dataio import make_clips, split_dataset
from socialpred.evaluation import BODY_GROUP, FACE_GROUP, ablation_sweep, write_csv
from socialpred.synth import SynthConfig, gen_scenes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/speaking_conditions.csv")
    a = ap.parse_args()

    train, test = split_dataset(gen_scenes(SynthConfig(seed=a.seed), a.scenes))
    ctr, cte = make_clips(train, 120, 60, flip=True), make_clips(test, 120, 120, flip=False)
    cfg = tasks.TrainConfig(epochs=a.epochs, seed=a.seed)
    rows = []
    for spec in tasks.SPEAKING_SPECS:
        t0 = time.perf_counter()
        ck = tasks.train_speaking(ctr, spec, cfg)
        r = ablation_sweep(ck, cte, {"face": FACE_GROUP, "body": BODY_GROUP}, seed=a.seed + 1)
        rows.append({"condition": spec, "accuracy": r["baseline"], "train_s": round(time.perf_counter() - t0, 1)})
        if spec == "self-face-body":
            for g in ("face", "body"):
                rows.append({"condition": f"{spec}, masked {g}", "accuracy": r["groups"][g]["accuracy"], "train_s": 0.0})
        print(rows[-1] if spec != "self-face-body" else rows[-3:])
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, a.out)
    for r in rows:
        print(f"{r['condition']:>28}  {100 * r['accuracy']:6.2f}%")


if __name__ == "__main__":
    main()

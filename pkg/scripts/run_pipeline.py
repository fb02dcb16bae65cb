"""Run every CLI command end to end on freshly generated synthetic scenes.

    python scripts/run_pipeline.py --out runs/pipeline --scenes 50
"""
import argparse
import logging

from socialpred.pipeline import PipelineConfig, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/pipeline")
    ap.add_argument("--scenes", type=int, default=50)
    ap.add_argument("--duration", type=int, default=330, help="frames per scene before cropping")
    ap.add_argument("--epochs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    outputs = run_pipeline(a.out, PipelineConfig(scenes=a.scenes, duration=a.duration, epochs=a.epochs, seed=a.seed))
    for name, path in outputs.items():
        print(f"{name:>20}: {path}")


if __name__ == "__main__":
    main()

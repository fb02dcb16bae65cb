"""Pairwise distance statistics of synthetic scenes next to the generator's reference rows."""
import argparse

from socialpred.evaluation import proxemics_stats
from socialpred.synth import REFERENCE_DISTANCES, SynthConfig, gen_scenes

KEYS = {"B-RS": "b_rs", "B-LS": "b_ls", "LS-RS": "ls_rs"}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=100)
    ap.add_argument("--seed", type=int, default=10)
    a = ap.parse_args()
    stats = proxemics_stats(gen_scenes(SynthConfig(seed=a.seed), a.scenes))
    print(f"{'pair':>6} {'avg':>8} {'std':>7} {'min':>7} {'max':>7} {'ref avg':>8} {'z (SE)':>7}")
    for pair, key in KEYS.items():
        s, ref = stats[pair], REFERENCE_DISTANCES[key][0]
        z = (s["avg"] - ref) / s["std_error"]
        print(f"{pair:>6} {s['avg']:8.2f} {s['std']:7.2f} {s['min']:7.2f} {s['max']:7.2f} {ref:8.2f} {z:+7.2f}")


if __name__ == "__main__":
    main()

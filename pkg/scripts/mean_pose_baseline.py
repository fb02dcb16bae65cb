"""Mean-pose baseline joint error as gesture amplitude grows."""
import argparse

from socialpred.dataio import make_clips, split_dataset
from socialpred.evaluation import joint_error, mean_pose_baseline, repeat_pose
from socialpred.synth import SynthConfig, gen_scenes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", type=int, default=30)
    ap.add_argument("--amps", type=float, nargs="+", default=[0.0, 5.0, 15.0, 30.0])
    ap.add_argument("--seed", type=int, default=8)
    a = ap.parse_args()
    for amp in a.amps:
        train, test = split_dataset(gen_scenes(SynthConfig(seed=a.seed, gesture_amp=amp), a.scenes))
        pose = mean_pose_baseline(make_clips(train, 120, 60, flip=True))
        clips = make_clips(test, 120, 120, flip=False)
        m, sd = joint_error([repeat_pose(pose, c.length) for c in clips], [c.target.body for c in clips])
        print(f"gesture_amp {amp:5.1f} cm: {m:.3f} +/- {sd:.3f} cm")


if __name__ == "__main__":
    main()

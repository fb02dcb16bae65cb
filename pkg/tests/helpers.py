"""Small builders shared by the test modules."""

import numpy as np

from socialpred.core import BODY_DIM, PersonTrack, Role, Scene, heading_vector


def make_track(role, T, rng=None, pos=(0.0, 0.0)):
    rng = np.random.default_rng(0) if rng is None else rng
    body = rng.normal(size=(T, BODY_DIM))
    body[:, 69:73] = rng.uniform(size=(T, 4))
    face = rng.normal(size=(T, 5))
    formation = np.concatenate(
        [
            np.asarray(pos) + rng.normal(scale=5.0, size=(T, 2)),
            heading_vector(rng.uniform(-np.pi, np.pi, T)),
            heading_vector(rng.uniform(-np.pi, np.pi, T)),
        ],
        axis=1,
    )
    speaking = rng.integers(0, 2, T)
    return PersonTrack.from_arrays(role, body, face, formation, speaking)


def make_scene(T=40, seed=0, scene_id="scene", game=None):
    rng = np.random.default_rng(seed)
    tracks = tuple(
        make_track(r, T, rng, pos)
        for r, pos in zip(
            (Role.BUYER, Role.LEFT_SELLER, Role.RIGHT_SELLER),
            ((0.0, 0.0), (80.0, 120.0), (-80.0, 120.0)),
        )
    )
    start, end = game if game else (0, T)
    return Scene(scene_id, 30, tracks, start, end)

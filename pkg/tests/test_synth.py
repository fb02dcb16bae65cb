import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialpred.core import Role, integrate_deltas, heading_angle
from socialpred.evaluation import turn_taking_measure
from socialpred.synth import (
    REFERENCE_DISTANCES,
    InfeasibleFormationError,
    SynthConfig,
    foot_contacts,
    gen_formation_track,
    gen_scene,
    gen_scenes,
    gen_speaking,
    sample_distance,
    triangle_from_distances,
    truncnorm_parent,
)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(turn_taking=1.5)
    with pytest.raises(ValueError):
        SynthConfig(noise_pos_sigma=-1)
    with pytest.raises(ValueError):
        SynthConfig(dist_b_ls=(100.0, 10.0, 120.0, 200.0))  # mean below min


def test_config_file_round_trip(tmp_path):
    cfg = SynthConfig(seed=9, turn_taking=0.6, dist_b_rs=(150.0, 20.0, 100.0, 200.0))
    cfg.save(tmp_path / "c.json")
    assert SynthConfig.load(tmp_path / "c.json") == cfg
    with pytest.raises(ValueError, match="unknown"):
        SynthConfig.from_dict({"seeed": 1})


def test_defaults_are_the_reference_distances():
    cfg = SynthConfig()
    assert cfg.dist_b_rs == (148.11, 27.26, 99.03, 265.52)
    assert cfg.dist_b_ls == (151.45, 29.62, 104.24, 284.85)
    assert cfg.dist_ls_rs == (124.13, 24.05, 77.70, 206.26)


@pytest.mark.parametrize("key", sorted(REFERENCE_DISTANCES))
def test_truncated_normal_moment_matching(key):
    mean, std, lo, hi = REFERENCE_DISTANCES[key]
    rng = np.random.default_rng(0)
    d = np.array([sample_distance(REFERENCE_DISTANCES[key], rng) for _ in range(20000)])
    assert d.min() >= lo and d.max() <= hi
    se = std / np.sqrt(len(d))
    assert abs(d.mean() - mean) < 4 * se
    assert abs(d.std() - std) < 0.03 * std
    loc, scale = truncnorm_parent(mean, std, lo, hi)
    assert scale > std  # truncation shrinks the spread


@settings(max_examples=60)
@given(st.floats(100, 200), st.floats(100, 200), st.floats(80, 180))
def test_triangle_construction(a, b, c):
    tri = triangle_from_distances(a, b, c)
    if tri is None:
        return
    buyer, left, right = tri
    np.testing.assert_allclose(np.linalg.norm(left - buyer), a)
    np.testing.assert_allclose(np.linalg.norm(right - buyer), b)
    np.testing.assert_allclose(np.linalg.norm(left - right), c)
    centroid = (buyer + left + right) / 3
    assert abs(centroid[0]) < 1e-9 and centroid[1] > 0
    assert left[0] > right[0]


def test_infeasible_triangle_raises():
    cfg = SynthConfig(dist_b_ls=(10.0, 0.0, 10.0, 10.0), dist_b_rs=(10.0, 0.0, 10.0, 10.0),
                      dist_ls_rs=(100.0, 0.0, 100.0, 100.0))
    with pytest.raises(InfeasibleFormationError):
        gen_formation_track(cfg)


def test_zero_noise_is_static_and_matches_draws():
    cfg = SynthConfig(seed=2, duration_frames=50, noise_pos_sigma=0, noise_orient_sigma=0)
    pos, body, face, dists = gen_formation_track(cfg)
    assert np.all(pos == pos[:, :1])
    assert np.all(body == body[:, :1])
    d_brs = np.linalg.norm(pos[0] - pos[2], axis=1)
    d_bls = np.linalg.norm(pos[0] - pos[1], axis=1)
    d_lr = np.linalg.norm(pos[1] - pos[2], axis=1)
    np.testing.assert_allclose(d_brs, dists[0], rtol=1e-12)
    np.testing.assert_allclose(d_bls, dists[1], rtol=1e-12)
    np.testing.assert_allclose(d_lr, dists[2], rtol=1e-12)
    # bodies face the centroid; the buyer sits at the origin facing +z
    np.testing.assert_allclose(pos[0], 0.0)
    np.testing.assert_allclose(body[0], np.tile([0.0, 1.0], (50, 1)), atol=1e-12)


def test_buyer_ls_distance_over_ten_thousand_frames():
    # 50 scenes x 200 frames; scene-level draws dominate the sampling error
    scenes = gen_scenes(SynthConfig(seed=1000, duration_frames=200), 50)
    means = np.array([
        np.linalg.norm(s.track(Role.BUYER).formation.position - s.track(Role.LEFT_SELLER).formation.position, axis=1).mean()
        for s in scenes
    ])
    se = means.std(ddof=1) / np.sqrt(len(means))
    assert abs(means.mean() - 151.45) < 2 * se


def test_orientations_are_unit():
    pos, body, face, _ = gen_formation_track(SynthConfig(seed=5, duration_frames=300))
    np.testing.assert_allclose(np.linalg.norm(body, axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(face, axis=-1), 1.0, atol=1e-12)


def test_faces_turn_to_speaker():
    cfg = SynthConfig(seed=7, duration_frames=600, noise_pos_sigma=0, noise_orient_sigma=0)
    speaking = gen_speaking(cfg)
    pos, _, face, _ = gen_formation_track(cfg, speaking)
    # buyer listening to the left seller alone, well into the turn
    b, ls, rs = speaking
    mask = (ls == 1) & (rs == 0) & (b == 0)
    mask[:20] = False
    goal = heading_angle(pos[1] - pos[0])
    err = np.abs(heading_angle(face[0]) - goal)
    assert np.median(err[mask]) < 1e-3


def test_full_turn_taking():
    for seed in range(5):
        _, ls, rs = gen_speaking(SynthConfig(seed=seed, turn_taking=1.0, duration_frames=3000))
        assert turn_taking_measure(ls, rs) == 100.0


def test_half_turn_taking_long_horizon():
    _, ls, rs = gen_speaking(SynthConfig(seed=11, turn_taking=0.5, duration_frames=100_000))
    m = turn_taking_measure(ls, rs)
    assert 60.0 < m < 100.0


def test_zero_duration():
    b, ls, rs = gen_speaking(SynthConfig(duration_frames=0))
    assert len(b) == len(ls) == len(rs) == 0
    pos, body, face, _ = gen_formation_track(SynthConfig(duration_frames=0))
    assert pos.shape == (3, 0, 2)


def test_determinism():
    cfg = SynthConfig(seed=42, duration_frames=120)
    assert gen_scene(cfg) == gen_scene(cfg)
    assert gen_scene(cfg) != gen_scene(cfg.replace(seed=43))


def test_root_velocity_integrates_to_positions():
    s = gen_scene(SynthConfig(seed=8, duration_frames=400))
    for t in s.tracks:
        f = t.formation
        pos, psi = integrate_deltas(t.body.values[:, 66:69], f.position[0], heading_angle(f.body_orient[0]))
        np.testing.assert_allclose(pos, f.position, atol=1e-6)
        np.testing.assert_allclose(t.body.values[:, [63, 65]], f.position)


def test_mouth_channel_carries_speech():
    s = gen_scene(SynthConfig(seed=1, duration_frames=3000))
    t = s.track(Role.LEFT_SELLER)
    f0 = t.face.coeffs[:, 0]
    spk = t.speaking.value.astype(bool)
    assert f0[spk].mean() - f0[~spk].mean() == pytest.approx(1.0, abs=0.15)


def _best_threshold_accuracy(feature_train, y_train, feature_test, y_test):
    best, thr, sign = -1, 0.0, 1
    for q in np.quantile(feature_train, np.linspace(0.02, 0.98, 49)):
        for sgn in (1, -1):
            acc = np.mean((sgn * (feature_train - q) > 0) == y_train)
            if acc > best:
                best, thr, sign = acc, q, sgn
    return np.mean((sign * (feature_test - thr) > 0) == y_test)


def test_no_planted_signal_means_chance():
    cfg = SynthConfig(seed=50, duration_frames=3000, mouth_gain=0.0, gesture_amp=0.0)
    scenes = gen_scenes(cfg, 4)
    feats = []
    for s in scenes:
        t = s.track(Role.LEFT_SELLER)
        feats.append((t.face.coeffs[:, 0], t.body.values[:, 3 * 20 + 1], t.speaking.value))
    y_tr = np.concatenate([f[2] for f in feats[:2]])
    y_te = np.concatenate([f[2] for f in feats[2:]])
    chance = max(y_te.mean(), 1 - y_te.mean())
    ci = 1.96 * np.sqrt(0.25 / len(y_te)) * 10  # effective sample size ~ T / 100 for smooth signals
    for k in (0, 1):
        acc = _best_threshold_accuracy(
            np.concatenate([f[k] for f in feats[:2]]), y_tr, np.concatenate([f[k] for f in feats[2:]]), y_te
        )
        assert acc <= chance + ci


def test_foot_contacts_walking_alternates():
    T = 240
    pos = np.stack([np.zeros(T), 3.0 * np.arange(T)], axis=1)  # 3 cm per frame
    c = foot_contacts(pos)
    assert c.min() >= 0 and c.max() <= 1
    left, right = c[1:, 0], c[1:, 2]
    assert np.any((left == 1) & (right == 0)) and np.any((left == 0) & (right == 1))
    # left-heel contact switches on periodically, once per 20-frame stride
    rises = np.flatnonzero(np.diff(left) > 0)
    np.testing.assert_array_equal(np.diff(rises), 20)


def test_foot_contacts_standing():
    pos = np.zeros((30, 2))
    np.testing.assert_array_equal(foot_contacts(pos), 1.0)


def test_listeners_respond_to_gestures():
    s = gen_scene(SynthConfig(seed=3, duration_frames=3000, listen_ratio=0.3))
    t = s.track(Role.LEFT_SELLER)
    wrist_y = t.body.values[:, 3 * 20 + 1]
    silent = t.speaking.value == 0
    assert wrist_y[silent].std() > 0.2

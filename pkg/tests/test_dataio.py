import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from socialpred.core import Role, Scene
from socialpred.dataio import (
    SceneFormatError,
    clips_tensor,
    crop_to_game,
    fit_standardizer,
    flip_body,
    flip_clip,
    load_clip_index,
    load_scene,
    load_scenes,
    load_standardizer,
    make_clips,
    mask_channels,
    save_clip_index,
    save_scene,
    save_standardizer,
    split_dataset,
    window_clips,
    write_scenes,
)
from socialpred.synth import SynthConfig, gen_scene

from .helpers import make_scene


def test_scene_round_trip(tmp_path):
    s = gen_scene(SynthConfig(seed=3, duration_frames=50))
    save_scene(s, tmp_path / "a.scene")
    loaded = load_scene(tmp_path / "a.scene")
    assert loaded == s
    # canonical files survive load -> save unchanged
    save_scene(loaded, tmp_path / "b.scene")
    assert (tmp_path / "a.scene").read_bytes() == (tmp_path / "b.scene").read_bytes()


def test_single_frame_scene(tmp_path):
    s = make_scene(T=1)
    save_scene(s, tmp_path / "one.scene")
    loaded = load_scene(tmp_path / "one.scene")
    assert loaded.num_frames == 1 and all(len(t) == 1 for t in loaded.tracks)


def test_truncated_file_names_missing_track(tmp_path):
    s = make_scene(T=4)
    p = tmp_path / "t.scene"
    save_scene(s, p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[: 1 + 2 * 5]) + "\n")  # header + buyer + left seller
    with pytest.raises(SceneFormatError, match="right_seller"):
        load_scene(p)


def test_bad_number_names_field_and_frame(tmp_path):
    s = make_scene(T=4)
    p = tmp_path / "bad.scene"
    save_scene(s, p)
    lines = p.read_text().splitlines()
    parts = lines[3].split()  # buyer, frame 1
    parts[75] = "oops"
    lines[3] = " ".join(parts)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(SceneFormatError, match=r"frame 1.*face\[2\]"):
        load_scene(p)


def test_non_unit_orientation_in_file_is_rejected(tmp_path):
    s = make_scene(T=3)
    p = tmp_path / "o.scene"
    save_scene(s, p)
    lines = p.read_text().splitlines()
    parts = lines[2].split()
    parts[80] = "5"
    lines[2] = " ".join(parts)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(SceneFormatError, match="frame 0"):
        load_scene(p)


def test_load_scenes_directory(tmp_path):
    scenes = [make_scene(T=5, seed=i, scene_id=f"s{i}") for i in range(3)]
    write_scenes(scenes, tmp_path)
    assert [s.id for s in load_scenes(tmp_path)] == ["s0", "s1", "s2"]


def test_crop_full_span_unchanged():
    s = make_scene(T=30)
    assert crop_to_game(s) == s


def test_crop_arithmetic_and_zero_velocity():
    s = make_scene(T=30, game=(10, 20))
    c = crop_to_game(s)
    assert c.num_frames == 10 and c.game_start == 0 and c.game_end == 10
    for t in c.tracks:
        np.testing.assert_array_equal(t.body.values[0, 66:69], 0.0)
        np.testing.assert_array_equal(t.body.values[1:, 66:69], s.track(t.role).body.values[11:20, 66:69])


@pytest.mark.parametrize("T,f,stride,n", [(120, 120, 10, 1), (240, 120, 10, 13), (119, 120, 10, 0)])
def test_window_counts(T, f, stride, n):
    assert len(window_clips(make_scene(T=T), f, stride)) == n


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 30), st.integers(1, 20))
def test_window_count_property(T, f, stride):
    clips = window_clips(make_scene(T=T), f, stride)
    expected = (T - f) // stride + 1 if T >= f else 0
    assert len(clips) == expected
    assert [c.start for c in clips] == [k * stride for k in range(expected)]
    assert all(c.length == f for c in clips)


def test_flip_is_involution():
    for c in window_clips(make_scene(T=20), 10, 5):
        f = flip_clip(c)
        assert f.flipped and not flip_clip(f).flipped
        assert flip_clip(f) == c


def test_flip_mirrors_positions_and_swaps_roles():
    c = window_clips(make_scene(T=10), 10, 10)[0]
    f = flip_clip(c)
    np.testing.assert_array_equal(f.partner2.formation.position[:, 0], -c.target.formation.position[:, 0])
    np.testing.assert_array_equal(f.target.formation.position[:, 0], -c.partner2.formation.position[:, 0])
    np.testing.assert_array_equal(f.target.speaking.value, c.partner2.speaking.value)
    np.testing.assert_array_equal(f.target.face.coeffs, c.partner2.face.coeffs)


def test_flip_preserves_pairwise_distances():
    rng = np.random.default_rng(1)
    for seed in rng.integers(0, 1000, 5):
        c = window_clips(make_scene(T=12, seed=int(seed)), 12, 12)[0]
        f = flip_clip(c)

        def dists(clip):
            p = [clip.target, clip.partner1, clip.partner2]
            return sorted(
                np.linalg.norm(p[i].formation.position - p[j].formation.position, axis=1).sum()
                for i in range(3) for j in range(i + 1, 3)
            )

        np.testing.assert_allclose(dists(f), dists(c))


def test_flip_body_swaps_sides():
    b = np.zeros(73)
    b[3 * 16 : 3 * 16 + 3] = [21.0, -8.0, 3.0]  # l_wrist
    b[69:73] = [1.0, 0.9, 0.2, 0.1]
    b[66:69] = [2.0, 5.0, 0.1]
    f = flip_body(b)
    np.testing.assert_array_equal(f[3 * 20 : 3 * 20 + 3], [-21.0, -8.0, 3.0])  # r_wrist
    np.testing.assert_array_equal(f[69:73], [0.2, 0.1, 1.0, 0.9])
    np.testing.assert_array_equal(f[66:69], [-2.0, 5.0, -0.1])


def test_flip_keeps_root_velocity_consistent_with_positions():
    s = crop_to_game(gen_scene(SynthConfig(seed=4, duration_frames=80)))
    c = window_clips(s, 50, 50)[0]
    f = flip_clip(c)
    from socialpred.core import root_deltas

    t = f.target
    d = root_deltas(t.formation.position, t.formation.body_orient)
    np.testing.assert_allclose(t.body.values[1:, 66:69], d[1:], atol=1e-9)


def test_standardizer_fit():
    x = np.zeros((2, 3, 2))
    x[:, 0, :] = [[1, 3], [1, 3]]
    x[:, 1, :] = 7.0
    x[:, 2, :] = np.arange(4).reshape(2, 2)
    st_ = fit_standardizer(x)
    assert st_.mean[0] == 2 and st_.std[0] == 1
    z = st_.apply(x)
    np.testing.assert_array_equal(z[:, 1], 0.0)
    np.testing.assert_allclose(z.mean(axis=(0, 2)), 0, atol=1e-9)
    np.testing.assert_allclose(z[:, [0, 2]].var(axis=(0, 2)), 1, atol=1e-6)
    with pytest.raises(ValueError):
        fit_standardizer(np.zeros((0, 3, 2)))


@given(arrays(np.float64, (3, 4, 5), elements=st.floats(-100, 100)))
def test_mask_all_and_none(x):
    st_ = fit_standardizer(x)
    np.testing.assert_array_equal(st_.apply(mask_channels(x, range(4), st_)), 0.0)
    np.testing.assert_array_equal(mask_channels(x, [], st_), x)


def test_mask_out_of_range():
    x = np.zeros((1, 3, 2))
    st_ = fit_standardizer(x + np.arange(3)[None, :, None])
    with pytest.raises(ValueError, match="out of range"):
        mask_channels(x, [3], st_)


def test_split_sizes_and_determinism():
    scenes = [make_scene(T=2, scene_id=f"s{i:02d}") for i in range(10)]
    tr, te = split_dataset(scenes, 0.8, 7)
    assert (len(tr), len(te)) == (8, 2)
    tr2, te2 = split_dataset(list(reversed(scenes)), 0.8, 7)
    assert [s.id for s in tr] == [s.id for s in tr2]
    assert not {s.id for s in tr} & {s.id for s in te}
    with pytest.raises(ValueError):
        split_dataset(scenes[:1])


def test_default_split_ratio():
    scenes = [make_scene(T=1, scene_id=f"s{i:03d}") for i in range(180)]
    tr, te = split_dataset(scenes)
    assert (len(tr), len(te)) == (140, 40)


def test_make_clips_order_and_verified_filter():
    a = make_scene(T=30, scene_id="a")
    b = Scene("b", 30, make_scene(T=30).tracks, 0, 30, verified=False)
    clips = make_clips([a, b], 10, 10, flip=True)
    assert [(c.scene_id, c.start, c.flipped) for c in clips[:6]] == [
        ("a", 0, False), ("a", 10, False), ("a", 20, False), ("a", 0, True), ("a", 10, True), ("a", 20, True)
    ]
    assert {c.scene_id for c in make_clips([a, b], 10, 10, verified_only=True)} == {"a"}


def test_clip_index_round_trip(tmp_path):
    scenes = [make_scene(T=30, scene_id=f"s{i}", seed=i) for i in range(2)]
    clips = make_clips(scenes, 10, 5, flip=True)
    save_clip_index(clips, tmp_path / "c.jsonl", window=10)
    header, loaded = load_clip_index(tmp_path / "c.jsonl", scenes)
    assert header["window"] == 10
    assert loaded == clips


def test_standardizer_file_round_trip(tmp_path):
    st_ = fit_standardizer(np.random.default_rng(0).normal(size=(2, 3, 4)))
    save_standardizer(st_, tmp_path / "st.txt")
    assert load_standardizer(tmp_path / "st.txt") == st_


def test_clips_tensor_layout():
    c = window_clips(make_scene(T=6), 6, 6)[0]
    x = clips_tensor([c], "partner1", ("face", "body"))
    assert x.shape == (1, 78, 6)
    np.testing.assert_array_equal(x[0, :5], c.partner1.face.coeffs.T)
    np.testing.assert_array_equal(x[0, 5:], c.partner1.body.values.T)
    assert c.partner1.role is Role.BUYER

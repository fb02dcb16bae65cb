import numpy as np
import pytest

from socialpred import tasks
from socialpred.core import BodyMotion, Role, integrate_deltas, heading_angle, joint_columns
from socialpred.dataio import make_clips
from socialpred.nn import grad_check
from socialpred.synth import SynthConfig, gen_scenes

FAST = tasks.TrainConfig(epochs=1, batch=8, seed=0)


@pytest.fixture(scope="module")
def clips():
    scenes = gen_scenes(SynthConfig(seed=100, duration_frames=150), 4)
    return make_clips(scenes, 40, 40, flip=True)


@pytest.fixture(scope="module")
def ae(clips):
    return tasks.train_motion_ae(clips, tasks.TrainConfig(epochs=3, batch=8))


# --- speaking ----------------------------------------------------------------------

def test_speaking_output_range_and_shape(clips):
    ck = tasks.train_speaking(clips, "self-face", FAST)
    x = tasks.speaking_inputs(clips[:3], "self-face")
    p = tasks.speaking_probabilities(ck, x)
    assert p.shape == (3, 40)
    assert np.all((p > 0) & (p < 1))
    prob, label = tasks.predict_speaking(ck, clips[0])
    assert prob.shape == label.shape == (40,)
    np.testing.assert_array_equal(label, (prob >= 0.5).astype(np.int8))


def test_speaking_any_length_and_deterministic(clips):
    ck = tasks.train_speaking(clips, "self-face-body", FAST)
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(1, 78, 300)) * 50
    p1 = tasks.speaking_probabilities(ck, raw)
    p2 = tasks.speaking_probabilities(ck, raw)
    assert p1.shape == (1, 300)
    np.testing.assert_array_equal(p1, p2)
    assert np.all((p1 > 0) & (p1 < 1))
    assert tasks.speaking_probabilities(ck, raw[:, :, :2]).shape == (1, 2)


def test_zero_epoch_checkpoint_predicts_half(clips):
    ck = tasks.train_speaking(clips, "self-face", tasks.TrainConfig(epochs=0))
    assert ck.history == []
    x = tasks.speaking_inputs(clips, "self-face")
    p = tasks.speaking_probabilities(ck, x)
    assert abs(p.mean() - 0.5) < 0.05
    # with every channel at its mean, the standardized input is zero and biases are zero
    p0 = tasks.speaking_probabilities(ck, x, extra_mask=range(78))
    np.testing.assert_array_equal(p0, 0.5)


def test_masked_conditions_share_architecture(clips):
    shapes = {}
    for spec in tasks.SPEAKING_SPECS:
        ck = tasks.train_speaking(clips, spec, tasks.TrainConfig(epochs=0))
        shapes[spec] = {k: v.shape for k, v in ck.networks["net"].named_params().items()}
    assert len({tuple(sorted(s.items())) for s in shapes.values()}) == 1


def test_speaking_input_sources(clips):
    c = clips[:2]
    np.testing.assert_array_equal(tasks.speaking_inputs(c, "other-face")[:, :5], np.stack([x.partner2.face.coeffs.T for x in c]))
    np.testing.assert_array_equal(tasks.speaking_inputs(c, "self-body")[:, 5:], np.stack([x.target.body.values.T for x in c]))
    idx = tasks.random_partner_indices(clips, 0)
    assert all(clips[j].scene_id != clips[i].scene_id for i, j in enumerate(idx))


def test_empty_clips_rejected():
    with pytest.raises(ValueError, match="no training clips"):
        tasks.train_speaking([], "self-face")
    with pytest.raises(ValueError):
        tasks.train_speaking([None], "bogus")


def test_default_l1_strengths():
    cfg = tasks.TrainConfig()
    assert cfg.l1_for("speaking") == 0.001
    assert cfg.l1_for("formation") == 0.1
    assert tasks.TrainConfig(lambda_l1=0.0).l1_for("formation") == 0.0


# --- gradient checks on assembled models ------------------------------------------------

@pytest.mark.parametrize("name", ["speaking", "formation", "motion-ae", "traj2body", "body2body"])
def test_task_models_gradcheck_init_and_after_step(name):
    from socialpred.cli import gradcheck_models
    from socialpred.nn import AmsGrad
    from socialpred.nn.losses import mse_loss

    model, x = gradcheck_models(seed=3)[name]
    r = grad_check(model, x, tolerance=1e-4, n_coords=200, seed=1)
    assert r.passed, str(r)
    out = model.forward(x, train=True, rng=np.random.default_rng(0))
    _, dout = mse_loss(out, np.zeros_like(out))
    model.zero_grad()
    model.backward(dout)
    AmsGrad(lr=1e-2).step(model.named_params(), model.named_grads())
    r = grad_check(model, x, tolerance=1e-4, n_coords=200, seed=2, train=True)
    assert r.passed, str(r)


# --- formation ----------------------------------------------------------------------------

def test_formation_shapes_and_unit_orientations(clips):
    ck = tasks.train_formation(clips, "pos+face+body", FAST)
    pred = tasks.predict_formation(ck, clips[0])
    assert pred.shape == (40, 6)
    np.testing.assert_allclose(np.linalg.norm(pred[:, 2:4], axis=1), 1.0)
    np.testing.assert_allclose(np.linalg.norm(pred[:, 4:6], axis=1), 1.0)
    odd = tasks.formation_raw_predictions(ck, tasks.formation_inputs(clips[:1])[:, :, :7])
    assert odd.shape == (1, 6, 7)
    assert tasks.formation_raw_predictions(ck, tasks.formation_inputs(clips[:1])[:, :, :2]).shape == (1, 6, 2)


def test_formation_input_order(clips):
    x = tasks.formation_inputs(clips[:1])[0]
    np.testing.assert_array_equal(x[:6], clips[0].partner1.formation_array().T)
    np.testing.assert_array_equal(x[6:], clips[0].partner2.formation_array().T)
    assert clips[0].partner1.role is Role.BUYER


def test_formation_condition_masks():
    assert tasks.formation_unused("pos-only") == [2, 3, 4, 5, 8, 9, 10, 11]
    assert tasks.formation_unused("pos+face") == [2, 3, 8, 9]
    assert tasks.formation_unused("pos+body") == [4, 5, 10, 11]
    assert tasks.formation_unused("pos+face+body") == []
    assert tasks.formation_unused("positions,face_orient") == [2, 3, 8, 9]
    with pytest.raises(ValueError):
        tasks.formation_unused("pos+nose")


def test_renormalization_holds_previous_on_tiny_vectors():
    p = np.zeros((3, 6))
    p[:, 2:4] = [[3.0, 4.0], [1e-9, 0.0], [0.0, -2.0]]
    p[:, 4:6] = [[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]
    out = tasks.renormalize_orientations(p)
    np.testing.assert_allclose(out[:, 2:4], [[0.6, 0.8], [0.6, 0.8], [0.0, -1.0]])
    np.testing.assert_allclose(out[:, 4:6], [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])


# --- body gestures ---------------------------------------------------------------------------

def test_motion_ae_shapes_and_loss_decreases(clips, ae):
    raw = tasks.body_targets(clips[:2])
    z = tasks.encode(ae, raw)
    assert z.shape == (2, 256, 20)
    assert tasks.decode(ae, z).shape == raw.shape
    assert ae.history[-1] < ae.history[0]


def test_traj2body_freezes_decoder(clips, ae):
    before = tasks.params_checksum(ae.networks["decoder"])
    ck = tasks.train_traj2body(clips, ae, FAST)
    assert tasks.params_checksum(ae.networks["decoder"]) == before
    assert tasks.params_checksum(ck.networks["decoder"]) == before
    assert ck.history


def test_traj2body_input_is_root_velocity(clips):
    x = tasks.traj2body_inputs(clips[:2])
    np.testing.assert_array_equal(x, np.stack([c.target.body.values[:, 66:69].T for c in clips[:2]]))


def test_regressors_need_autoencoder(clips):
    with pytest.raises(ValueError, match="autoencoder"):
        tasks.train_traj2body(clips, None, FAST)
    spk = tasks.train_speaking(clips, "self-face", tasks.TrainConfig(epochs=0))
    with pytest.raises(ValueError, match="task"):
        tasks.train_body2body(clips, spk, FAST)


def test_body2body_frozen_and_deterministic(clips, ae):
    before = tasks.params_checksum(ae.networks["decoder"])
    ck = tasks.train_body2body(clips, ae, FAST)
    assert tasks.params_checksum(ck.networks["decoder"]) == before
    assert tasks.body2body_inputs(clips[:1]).shape == (1, 146, 40)
    a = tasks.infer_body2body(ck, clips[0])
    b = tasks.infer_body2body(ck, clips[0])
    assert a == b and a.values.shape == (40, 73)


def test_static_formation_gives_zero_deltas():
    f = np.tile([10.0, 20.0, 0.6, 0.8, 0.0, 1.0], (7, 1))
    np.testing.assert_array_equal(tasks.formation_to_deltas(f), 0.0)


def test_delta_conversion_round_trip():
    rng = np.random.default_rng(0)
    T = 50
    pos = np.cumsum(rng.normal(size=(T, 2)) * 3, axis=0) + [100.0, -40.0]
    psi = np.cumsum(rng.normal(size=T) * 0.3)
    f = np.concatenate([pos, np.stack([np.sin(psi), np.cos(psi)], 1), np.zeros((T, 1)), np.ones((T, 1))], axis=1)
    d = tasks.formation_to_deltas(f)
    p2, _ = integrate_deltas(d, pos[0], heading_angle(f[0, 2:4]))
    np.testing.assert_allclose(p2, pos, atol=1e-6)


def test_infer_body_from_formation(clips, ae):
    fck = tasks.train_formation(clips, "pos+face+body", FAST)
    tck = tasks.train_traj2body(clips, ae, FAST)
    body = tasks.infer_body_from_formation(fck, tck, clips[0])
    assert isinstance(body, BodyMotion) and body.values.shape == (40, 73)
    pred = tasks.predict_formation(fck, clips[0])
    np.testing.assert_array_equal(body.values[:, 66:69], tasks.formation_to_deltas(pred))
    with pytest.raises(ValueError, match="task"):
        tasks.infer_body_from_formation(fck, fck, clips[0])


def test_hybrid_merge_routing():
    rng = np.random.default_rng(0)

    def body():
        v = rng.normal(size=(6, 73))
        v[:, 69:] = rng.uniform(size=(6, 4))
        return BodyMotion(v)

    a, b = body(), body()
    assert tasks.hybrid_merge(a, a) == a
    h = tasks.hybrid_merge(a, b).values
    np.testing.assert_array_equal(h[:, 66:69], a.values[:, 66:69])
    np.testing.assert_array_equal(h[:, 63:66], a.values[:, 63:66])
    np.testing.assert_array_equal(h[:, 69:73], a.values[:, 69:73])
    for j in ("l_wrist", "r_wrist", "head"):
        cols = joint_columns([j])
        np.testing.assert_array_equal(h[:, cols], b.values[:, cols])
    for j in ("root", "l_knee", "r_toe"):
        cols = joint_columns([j])
        np.testing.assert_array_equal(h[:, cols], a.values[:, cols])
    with pytest.raises(ValueError):
        tasks.hybrid_merge(a, BodyMotion(b.values[:5]))


# --- checkpoints --------------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, clips):
    ck = tasks.train_formation(clips, "pos-only", FAST)
    ck.save(tmp_path / "f.npz")
    loaded = tasks.load_checkpoint(tmp_path / "f.npz")
    assert loaded.task == "formation" and loaded.input_spec == "pos-only"
    assert loaded.mask == ck.mask
    assert loaded.standardizers == ck.standardizers
    np.testing.assert_array_equal(tasks.predict_formation(loaded, clips[0]), tasks.predict_formation(ck, clips[0]))
    assert loaded.optimizer["t"] == ck.optimizer["t"]
    for k in ck.optimizer["v_max"]:
        np.testing.assert_array_equal(loaded.optimizer["v_max"][k], ck.optimizer["v_max"][k])
    with pytest.raises(ValueError, match="task"):
        tasks.predict_speaking(loaded, clips[0])


def test_training_is_reproducible(clips):
    a = tasks.train_speaking(clips, "self-face", FAST)
    b = tasks.train_speaking(clips, "self-face", FAST)
    for k, v in a.networks["net"].named_params().items():
        np.testing.assert_array_equal(v, b.networks["net"].named_params()[k])

import math

import numpy as np
import pytest

from octcyst.dataio import PhantomSpec, gen_phantom
from octcyst.errors import (
    BadMagic,
    ConfigMismatch,
    DimMismatch,
    EmptyDataset,
    ShapeMismatch,
    StateShapeMismatch,
    TruncatedData,
)
from octcyst.samplekit import ReferenceDims, Sample, pad_to_reference, prepare_sample
from octcyst.tensornet import ParamStore, Tensor, UNetConfig, build_unet, no_grad
from octcyst.trainer import (
    AdamState,
    Checkpoint,
    TrainConfig,
    adam_step,
    bce_loss,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)


def _tiny_cfg(seed=5):
    return UNetConfig(
        input_channels=2,
        base_channels=2,
        depth=2,
        bottleneck_channels=8,
        aspp_rates=(1, 2),
        dropout_per_level=(0.1, 0.1, 0.2),
        seed=seed,
    )


# --- BCE ----------------------------------------------------------------------


def test_bce_perfect_prediction_near_zero():
    target = np.array([[0.0, 1.0], [1.0, 0.0]])
    loss = bce_loss(Tensor(target.copy()), target)
    assert 0.0 <= loss.item() <= 1.1e-7


def test_bce_uniform_half_is_ln2():
    target = (np.random.default_rng(0).random((6, 6)) > 0.5).astype(float)
    loss = bce_loss(Tensor(np.full((6, 6), 0.5)), target)
    assert abs(loss.item() - math.log(2.0)) <= 1e-7


def test_bce_matches_direct_sum_oracle():
    rng = np.random.default_rng(1)
    pred = rng.random((8, 9)) * 0.98 + 0.01
    target = (rng.random((8, 9)) > 0.6).astype(float)
    loss = bce_loss(Tensor(pred.copy()), target)
    acc = 0.0
    for p, t in zip(pred.ravel(), target.ravel()):
        acc += t * math.log(p) + (1 - t) * math.log(1 - p)
    assert abs(loss.item() - (-acc / pred.size)) <= 1e-9


def test_bce_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        bce_loss(Tensor(np.full((2, 2), 0.5)), np.zeros((2, 3)))


def test_bce_nonnegative():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pred = rng.random((4, 4))
        target = (rng.random((4, 4)) > 0.5).astype(float)
        assert bce_loss(Tensor(pred), target).item() >= 0.0


# --- Adam ---------------------------------------------------------------------


def _scalar_store(value=0.0):
    store = ParamStore()
    store.add("theta", Tensor(np.array([value], dtype=np.float64)))
    return store


def test_adam_zero_gradient_is_identity():
    store = _scalar_store(1.5)
    store.zero_grad()
    state = AdamState.for_params(store)
    cfg = TrainConfig(epochs=1)
    adam_step(store, state, cfg)
    assert store["theta"].data[0] == 1.5
    assert state.t == 1


def test_adam_first_step_magnitude():
    store = _scalar_store(0.0)
    store.zero_grad()
    store["theta"].grad[0] = 1.0
    state = AdamState.for_params(store)
    adam_step(store, state, TrainConfig(epochs=1, learning_rate=1e-3))
    expected = -1e-3 * 1.0 / (1.0 + 1e-8)
    assert abs(store["theta"].data[0] - expected) <= 1e-9
    assert abs(abs(store["theta"].data[0]) - 1e-3) <= 1e-9


def test_adam_ten_step_trajectory_matches_recurrence_oracle():
    # independent recurrence in plain floats
    grads = [math.sin(i + 1.0) for i in range(10)]
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    theta, m, v = 0.3, 0.0, 0.0
    expected = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        expected.append(theta)

    store = _scalar_store(0.3)
    state = AdamState.for_params(store)
    cfg = TrainConfig(epochs=1, learning_rate=lr)
    got = []
    for g in grads:
        store.zero_grad()
        store["theta"].grad[0] = g
        adam_step(store, state, cfg)
        got.append(float(store["theta"].data[0]))
    assert np.max(np.abs(np.array(got) - np.array(expected))) <= 1e-12


def test_adam_state_shape_mismatch():
    store = _scalar_store()
    store.zero_grad()
    state = AdamState()  # missing entries
    with pytest.raises(StateShapeMismatch):
        adam_step(store, state, TrainConfig(epochs=1))


# --- training loop --------------------------------------------------------------


def _phantom_dataset(n, ref, seed0=50):
    data = []
    for i in range(n):
        spec = PhantomSpec(
            rows=16, cols=16, ilm_row=3, ism_row=12, n_cysts=1,
            cyst_axis_range=(1, 2), dark_rows_above_ism=2,
            bright_rows_below_ism=2, seed=seed0 + i,
        )
        img, mask, _, _ = gen_phantom(spec)
        sample = prepare_sample(img, ref)
        target, _ = pad_to_reference(mask.astype(np.float32), ref)
        data.append((sample, target))
    return data


def test_train_empty_dataset():
    with pytest.raises(EmptyDataset):
        train([], _tiny_cfg(), TrainConfig(epochs=1))


def test_train_dim_mismatch():
    ref = ReferenceDims(16, 16)
    data = _phantom_dataset(1, ref)
    bad = Sample(np.zeros((2, 24, 24), dtype=np.float32), (0, 0), (24, 24))
    with pytest.raises(DimMismatch):
        train(data + [(bad, np.zeros((24, 24), dtype=np.float32))], _tiny_cfg(), TrainConfig(epochs=1))


def test_train_loss_decreases_on_single_sample():
    ref = ReferenceDims(16, 16)
    data = _phantom_dataset(1, ref)
    losses = []
    train(
        data,
        _tiny_cfg(),
        TrainConfig(batch_size=1, epochs=100, learning_rate=1e-3, seed=3),
        log_fn=lambda e, l: losses.append(l),
    )
    assert len(losses) == 100
    assert losses[-1] < losses[0]


def test_train_deterministic_checkpoints(tmp_path):
    ref = ReferenceDims(16, 16)
    data = _phantom_dataset(3, ref)
    cfg = TrainConfig(batch_size=2, epochs=4, seed=11)
    cp1 = train(data, _tiny_cfg(), cfg)
    cp2 = train(data, _tiny_cfg(), cfg)
    save_checkpoint(cp1, tmp_path / "a.bin")
    save_checkpoint(cp2, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_train_epoch_log_order():
    ref = ReferenceDims(16, 16)
    data = _phantom_dataset(2, ref)
    epochs = []
    train(data, _tiny_cfg(), TrainConfig(batch_size=2, epochs=3, seed=1),
          log_fn=lambda e, l: epochs.append(e))
    assert epochs == [0, 1, 2]


# --- predict --------------------------------------------------------------------


def _zero_checkpoint(cfg):
    _, store = build_unet(cfg)
    return Checkpoint(cfg, {n: np.zeros_like(t.data) for n, t in store.items()})


def test_predict_zero_weights_mask_equals_roi():
    ref = ReferenceDims(24, 24)
    spec = PhantomSpec(rows=16, cols=16, ilm_row=3, ism_row=12, n_cysts=1,
                       cyst_axis_range=(1, 2), dark_rows_above_ism=2,
                       bright_rows_below_ism=2, seed=77)
    img, _, _, _ = gen_phantom(spec)
    sample = prepare_sample(img, ref)
    cp = _zero_checkpoint(_tiny_cfg())
    prob, mask = predict(cp, sample, threshold=0.5, roi_clamp=True)
    assert prob.shape == (16, 16) and mask.shape == (16, 16)
    assert np.all(prob == 0.5)  # p = sigmoid(0), thresholded with >= rule
    from octcyst.samplekit import crop_from_reference

    roi = crop_from_reference(sample.roi_channel, sample.offset, sample.orig_dims)
    assert np.array_equal(mask, (roi != 0).astype(np.uint8))


def test_predict_without_roi_clamp_fills_frame():
    ref = ReferenceDims(16, 16)
    sample = Sample(np.zeros((2, 16, 16), dtype=np.float32), (0, 0), (16, 16))
    prob, mask = predict(_zero_checkpoint(_tiny_cfg()), sample, roi_clamp=False)
    assert np.all(mask == 1)  # 0.5 >= 0.5


def test_predict_mask_subset_of_roi():
    ref = ReferenceDims(16, 16)
    data = _phantom_dataset(1, ref, seed0=90)
    cp = train(data, _tiny_cfg(), TrainConfig(batch_size=1, epochs=3, seed=2))
    sample = data[0][0]
    _, mask = predict(cp, sample)
    from octcyst.samplekit import crop_from_reference

    roi = crop_from_reference(sample.roi_channel, sample.offset, sample.orig_dims)
    assert not np.any(mask & (roi == 0))


def test_predict_dim_mismatch():
    sample = Sample(np.zeros((2, 18, 18), dtype=np.float32), (0, 0), (18, 18))
    with pytest.raises(DimMismatch):
        predict(_zero_checkpoint(_tiny_cfg()), sample)


# --- checkpoint I/O ---------------------------------------------------------------


def test_checkpoint_round_trip_forward_bitwise(tmp_path):
    cfg = _tiny_cfg(seed=21)
    net, store = build_unet(cfg)
    cp = Checkpoint(cfg, store.values())
    save_checkpoint(cp, tmp_path / "cp.bin")
    loaded = load_checkpoint(tmp_path / "cp.bin")

    x = np.random.default_rng(4).random((2, 8, 8)).astype(np.float32)
    with no_grad():
        a = net.forward(x).data
    net2, store2 = build_unet(loaded.config)
    store2.set_values(loaded.values)
    with no_grad():
        b = net2.forward(x).data
    assert np.array_equal(a, b)


def test_checkpoint_same_seed_identical_bytes(tmp_path):
    cfg = _tiny_cfg(seed=33)
    _, s1 = build_unet(cfg)
    _, s2 = build_unet(cfg)
    save_checkpoint(Checkpoint(cfg, s1.values()), tmp_path / "a.bin")
    save_checkpoint(Checkpoint(cfg, s2.values()), tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_checkpoint_order_is_lexicographic(tmp_path):
    cfg = _tiny_cfg()
    _, store = build_unet(cfg)
    values = store.values()
    reversed_dict = dict(reversed(list(values.items())))
    save_checkpoint(Checkpoint(cfg, values), tmp_path / "a.bin")
    save_checkpoint(Checkpoint(cfg, reversed_dict), tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(BadMagic):
        load_checkpoint(p)


def test_checkpoint_truncated(tmp_path):
    cfg = _tiny_cfg()
    _, store = build_unet(cfg)
    save_checkpoint(Checkpoint(cfg, store.values()), tmp_path / "cp.bin")
    data = (tmp_path / "cp.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(data[: len(data) // 2])
    with pytest.raises(TruncatedData):
        load_checkpoint(tmp_path / "cut.bin")


def test_checkpoint_config_mismatch(tmp_path):
    import struct

    garbage = b"not_a_key_value_line_without_equals"
    blob = (
        b"UNCK"
        + struct.pack("<I", 1)
        + struct.pack("<I", len(garbage))
        + garbage
        + struct.pack("<I", 0)
    )
    p = tmp_path / "bad.bin"
    p.write_bytes(blob)
    with pytest.raises(ConfigMismatch):
        load_checkpoint(p)

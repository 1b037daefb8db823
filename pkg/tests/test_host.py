import numpy as np
import pytest

from ddfprobe import tensor as T
from ddfprobe.ddf import parameter_checksum
from ddfprobe.errors import ContractError, TrainingError
from ddfprobe.host import (
    build_host,
    load_checkpoint,
    read_checkpoint_meta,
    save_checkpoint,
    scene_pool,
    train,
)

SMALL = dict(image_size=8, hidden=16)


def small(with_ddf, seed=0, d=6, n=None):
    return build_host(d, with_ddf, n=n, seed=seed, **SMALL)


def test_baseline_has_no_frozen_parameters():
    assert small(False).frozen_parameters == []


def test_ddf_has_three_frozen_tensors():
    m = small(True)
    assert len(m.frozen_parameters) == 3
    assert all(p.frozen for p in m.frozen_parameters)
    assert not any(p.frozen for p in m.trainable_parameters)


def test_trainable_parity():
    a, b = small(False), small(True, n=11)
    assert [p.shape for p in a.trainable_parameters] == [p.shape for p in b.trainable_parameters]
    sizes = lambda m: sum(p.size for p in m.trainable_parameters)
    assert sizes(a) == sizes(b)
    # identical initial encoder/decoder weights for the same seed
    for pa, pb in zip(a.trainable_parameters, b.trainable_parameters):
        assert np.array_equal(pa.data, pb.data)


def test_default_architecture():
    m = build_host(32, True)
    assert m.ddf.d == m.d == 32 and m.ddf.n == 32
    assert m.probe_target == "ddf_hidden" and m.probe_width == 32
    assert build_host(32, False).probe_target == "representation"


def test_shapes_match_between_variants():
    x = scene_pool(3, 0, 8)
    for with_ddf in (False, True):
        m = small(with_ddf)
        assert m.reconstruct(x).shape == x.shape
        out = m.reconstruct(x)
        assert out.min() >= 0 and out.max() <= 1


def test_zero_learning_rate_keeps_loss_constant():
    m = small(True)
    pool = scene_pool(1, 0, 8)  # one scene so every batch is identical
    log = train(m, 1, 10, 4, 0.0, 0, images=pool)
    assert np.ptp(log.losses) <= 1e-15 * log.losses[0]


def test_training_determinism():
    logs = []
    for _ in range(2):
        m = small(True, seed=3)
        logs.append(train(m, 32, 25, 4, 0.05, 7))
    assert logs[0].losses == logs[1].losses
    assert logs[0].final_checksum == logs[1].final_checksum


def test_log_invariants():
    log = train(small(False), 16, 12, 4, 0.05, 1)
    assert log.steps == list(range(12))
    assert all(np.isfinite(log.losses))
    assert all(b >= a for a, b in zip(log.seconds, log.seconds[1:]))
    assert log.to_csv().splitlines()[0] == "step,loss"
    assert len(log.to_csv().splitlines()) == 13


def test_frozen_ddf_survives_training_and_gradient_flows():
    m = small(True)
    before = parameter_checksum(m.ddf.parameters)
    log = train(m, 32, 30, 4, 0.1, 0)
    assert parameter_checksum(m.ddf.parameters) == before
    assert log.encoder_grad_norm_first_step > 0
    assert log.final_checksum != ""


def test_encoder_gradient_passes_through_ddf():
    m = small(True)
    x = scene_pool(4, 0, 8)
    T.backward(T.mse_loss(m.forward(x), T.Tensor(x)))
    enc_last = m.encoder[-1].weight
    assert np.linalg.norm(enc_last.grad) > 0


def test_training_with_loss_decreasing():
    m = small(False, seed=1)
    log = train(m, 64, 300, 8, 0.1, 0)
    assert log.final_loss(50) < log.losses[0]


def test_sgd_path_trains_and_is_deterministic():
    logs = [train(small(True, seed=2), 32, 100, 4, 0.1, 3, optimizer="sgd") for _ in range(2)]
    assert logs[0].losses == logs[1].losses
    assert logs[0].final_loss(10) < np.mean(logs[0].losses[:10])


def test_optimizers_differ_and_unknown_rejected():
    adam = train(small(False), 16, 5, 4, 0.01, 0, optimizer="adam")
    sgd = train(small(False), 16, 5, 4, 0.01, 0, optimizer="sgd")
    assert adam.losses[0] == sgd.losses[0]
    assert adam.losses[-1] != sgd.losses[-1]
    with pytest.raises(ContractError):
        train(small(False), 4, 1, 2, 0.1, 0, optimizer="rmsprop")


def test_divergence_raises_training_error():
    pool = scene_pool(2, 0, 8)
    pool[1] = np.nan  # a poisoned scene makes the loss NaN when it is drawn
    with pytest.raises(TrainingError) as err:
        train(small(False), 2, 100, 1, 0.05, 0, images=pool)
    step = err.value.last_finite_step
    first_bad = 0 if step is None else step + 1
    assert f"step {first_bad}" in str(err.value)


def test_argument_validation():
    with pytest.raises(ContractError):
        train(small(False), 4, 0, 2, 0.1, 0)
    with pytest.raises(ContractError):
        train(small(False), 4, 1, 0, 0.1, 0)


def test_checkpoint_round_trip(tmp_path):
    m = small(True, seed=4, n=9)
    train(m, 16, 5, 4, 0.05, 0)
    path = save_checkpoint(m, tmp_path / "m.npz", {"note": "x"})
    meta = read_checkpoint_meta(path)
    assert meta["steps_trained"] == 5 and meta["extra"] == {"note": "x"}
    assert [p["frozen"] for p in meta["parameters"]].count(True) == 3
    loaded = load_checkpoint(path)
    assert loaded.checksum() == m.checksum()
    x = scene_pool(2, 1, 8)
    assert np.array_equal(loaded.reconstruct(x), m.reconstruct(x))
    with np.load(path) as data:
        assert all(data[p.name].dtype == np.dtype("<f8") for p in m.parameters)


def test_checkpoint_with_tampered_ddf_rejected(tmp_path):
    m = small(True)
    train(m, 8, 2, 2, 0.05, 0)
    path = save_checkpoint(m, tmp_path / "m.npz")
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    arrays["ddf.w1"] = arrays["ddf.w1"] * 1.5
    np.savez(tmp_path / "bad.npz", **arrays)
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "bad.npz")


def test_unreadable_checkpoint(tmp_path):
    (tmp_path / "junk.npz").write_bytes(b"not a zip")
    with pytest.raises(ContractError):
        read_checkpoint_meta(tmp_path / "junk.npz")
    with pytest.raises(ContractError):
        read_checkpoint_meta(tmp_path / "missing.npz")


def test_untrained_model_not_ready():
    with pytest.raises(ContractError):
        small(True).check_ready()


def test_periodic_checkpoints(tmp_path):
    m = small(True)
    log = train(m, 8, 6, 2, 0.05, 0, checkpoint_every=3, checkpoint_dir=tmp_path)
    assert len(log.checkpoints) == 2
    assert load_checkpoint(log.checkpoints[-1]).checksum() == m.checksum()


def test_warmup_ramps_learning_rate():
    # zero warmup and a one-step warmup are the same schedule
    a = train(small(False), 16, 6, 4, 0.01, 0, warmup=0)
    b = train(small(False), 16, 6, 4, 0.01, 0, warmup=1)
    assert a.losses == b.losses
    c = train(small(False), 16, 6, 4, 0.01, 0, warmup=100)
    assert c.losses[0] == a.losses[0] and c.losses[-1] != a.losses[-1]
    with pytest.raises(ContractError):
        train(small(False), 4, 1, 2, 0.1, 0, warmup=-1)


def test_decoder_output_starts_near_zero():
    m = build_host(8, False, **SMALL)
    assert np.abs(m.decoder[-1].weight.data).max() < 0.05 * np.abs(m.decoder[0].weight.data).max()

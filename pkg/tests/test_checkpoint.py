import numpy as np
import pytest

from stratrec.checkpoint import CheckpointLayoutError, load_checkpoint, save_checkpoint
from stratrec.policy import PolicyParams


def trained_params(rng):
    params = PolicyParams.zeros()
    params.weights[:] = rng.normal(size=params.weights.shape)
    params.opt_m[:] = rng.normal(size=params.opt_m.shape)
    params.opt_v[:] = rng.uniform(size=params.opt_v.shape)
    params.opt_step = 17
    return params


def test_round_trip(tmp_path, rng):
    params = trained_params(rng)
    path = tmp_path / "p.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.weights, params.weights)
    assert np.array_equal(loaded.opt_m, params.opt_m)
    assert np.array_equal(loaded.opt_v, params.opt_v)
    assert loaded.opt_step == 17
    assert loaded.layout_version == params.layout_version


def test_byte_determinism(tmp_path, rng):
    params = trained_params(rng)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(params, p1)
    save_checkpoint(params, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_layout_mismatch_rejected(tmp_path, rng):
    params = trained_params(rng)
    path = tmp_path / "p.ckpt"
    save_checkpoint(params, path)
    with pytest.raises(CheckpointLayoutError):
        load_checkpoint(path, expect_layout="fv9:something-else")


def test_not_a_checkpoint_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint\n")
    with pytest.raises(CheckpointLayoutError):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path, rng):
    params = trained_params(rng)
    path = tmp_path / "p.ckpt"
    save_checkpoint(params, path)
    data = path.read_bytes()
    path.write_bytes(data[:-100])
    with pytest.raises(CheckpointLayoutError):
        load_checkpoint(path)

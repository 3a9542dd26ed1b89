import numpy as np
import pytest

from coughgan import checkpoint
from coughgan.acgan import ACGAN, TrainConfig
from coughgan.errors import FormatError

from .test_acgan import small_cfg, two_class_maps


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    m = ACGAN(small_cfg())
    x, y = two_class_maps(2, np.random.default_rng(0))
    m.discriminator_step(x, y)
    m.generator_step()
    m.epochs_done = 1
    path = tmp_path_factory.mktemp("ckpt") / "model.acgn"
    checkpoint.save_checkpoint(m, path)
    return m, path


def test_forward_bit_identical(trained, rng):
    model, path = trained
    loaded = checkpoint.load_checkpoint(path)
    noise = rng.normal(0, 0.02, (3, 100)).astype(np.float32)
    labels = np.array([0, 1, 1])
    a = model.generator.predict(labels, noise)
    b = loaded.generator.predict(labels, noise)
    assert a.tobytes() == b.tobytes()
    va, pa = model.discriminator.predict(a)
    vb, pb = loaded.discriminator.predict(b)
    assert va.tobytes() == vb.tobytes() and pa.tobytes() == pb.tobytes()


def test_config_and_state(trained):
    model, path = trained
    loaded = checkpoint.load_checkpoint(path)
    assert loaded.cfg == model.cfg
    assert loaded.epochs_done == 1
    assert loaded.d_opt.t == model.d_opt.t and loaded.g_opt.t == model.g_opt.t
    for k, v in model.tensors().items():
        assert np.array_equal(v, loaded.tensors()[k]), k


def test_encode_decode_generic():
    tensors = {"w": np.arange(6, dtype=np.float32).reshape(2, 3), "t": np.array([7], np.int64),
               "scalar": np.float32(2.5).reshape(())}
    cfg, back = checkpoint.decode(checkpoint.encode({"a": 1}, tensors))
    assert cfg == {"a": 1}
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape and np.array_equal(back[k], v)


def test_deterministic_bytes(trained, tmp_path):
    model, path = trained
    other = tmp_path / "again.acgn"
    checkpoint.save_checkpoint(model, other)
    assert other.read_bytes() == path.read_bytes()


@pytest.mark.parametrize("mutate,msg", [
    (lambda d: b"XXXX" + d[4:], "not an ACGN"),
    (lambda d: d[:4] + b"\x02" + d[5:], "version"),
    (lambda d: d[: len(d) // 2], "truncated"),
])
def test_corrupt(trained, mutate, msg):
    _, path = trained
    with pytest.raises(FormatError, match=msg):
        checkpoint.decode(mutate(path.read_bytes()))


def test_missing_tensor(trained):
    model, _ = trained
    tensors = model.tensors()
    del tensors["generator/deconv0/kernel"]
    with pytest.raises(Exception, match="deconv0"):
        ACGAN(TrainConfig(**vars(model.cfg))).load_tensors(tensors)

import struct

import numpy as np
import pytest

from graphite import model as M
from graphite.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


def test_roundtrip_bit_exact(tmp_path, rng):
    cfg = M.ModelConfig(kind="graphite_vae", input_dim=9, latent_dim=4, out_dim=4, rounds=2, feature_dim=9,
                        pre_decoder=(7,))
    model = M.GraphiteModel.create(cfg, seed=1)
    for p in model.params.values():
        p.data[...] = rng.normal(size=p.data.shape) * 10.0 ** rng.integers(-300, 300, size=p.data.shape)
    path = tmp_path / "m.bin"
    save_checkpoint(model, path, seed=17, extra={"note": "x"})
    loaded, manifest = load_checkpoint(path)
    assert loaded.config == model.config
    assert manifest["seed"] == 17 and manifest["note"] == "x"
    assert list(loaded.params) == list(model.params)
    for k, p in model.params.items():
        assert loaded.params[k].data.tobytes() == p.data.tobytes()
    # saving the loaded model reproduces the file byte for byte
    save_checkpoint(loaded, tmp_path / "again.bin", seed=17, extra={"note": "x"})
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_layout_is_little_endian(tmp_path):
    model = M.GraphiteModel.create(M.ModelConfig(kind="gae", input_dim=3, encoder_hidden=(2,), latent_dim=2), seed=0)
    path = tmp_path / "m.bin"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    assert version == 1
    first = model.params["enc0.W"].data.ravel()[0]
    assert struct.unpack_from("<d", raw, 8 + 12 + hlen)[0] == first


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTGRAPH" + b"\0" * 20)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

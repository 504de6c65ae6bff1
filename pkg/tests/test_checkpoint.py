import struct

import numpy as np
import pytest

from twmlp.checkpoint import MAGIC, load_checkpoint, params_from_bytes, params_to_bytes, save_checkpoint
from twmlp.errors import FormatError
from twmlp.model import ModelConfig, init_params, param_shapes

CFG = ModelConfig(T=6, K=1, L=2, D=8, temporal_map="banded", band_width=2)


def test_round_trip(tmp_path):
    p = init_params(CFG, seed=5)
    save_checkpoint(p, tmp_path / "m.twmlp")
    back = load_checkpoint(tmp_path / "m.twmlp")
    assert back.config == CFG
    assert list(back.tensors) == list(param_shapes(CFG))
    assert all(np.array_equal(back[n], p[n]) for n in p.names())
    assert params_to_bytes(back) == params_to_bytes(p)


def test_float64_params_are_stored_as_float32():
    p = init_params(CFG, seed=1, dtype=np.float64)
    back = params_from_bytes(params_to_bytes(p), dtype=np.float64)
    np.testing.assert_allclose(back["proj.weight"], p["proj.weight"], rtol=1e-7)


def test_size_matches_layout():
    p = init_params(CFG)
    data = params_to_bytes(p)
    cfg_len = struct.unpack_from("<I", data, 10)[0]
    headers = sum(4 + 4 * len(s) for s in param_shapes(CFG).values())
    assert len(data) == 6 + 4 + 4 + cfg_len + 4 + headers + 4 * p.count()


def test_corruptions():
    data = params_to_bytes(init_params(CFG))
    with pytest.raises(FormatError) as err:
        params_from_bytes(b"X" + data[1:])
    assert err.value.offset == 0
    with pytest.raises(FormatError) as err:
        params_from_bytes(MAGIC + struct.pack("<I", 9) + data[10:])
    assert err.value.offset == len(MAGIC)
    with pytest.raises(FormatError):
        params_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        params_from_bytes(data + b"\0\0\0\0")

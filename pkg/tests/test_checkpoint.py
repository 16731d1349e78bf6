import struct

import numpy as np
import pytest
from conftest import tiny_spec

from dbfga.checkpoint import MAGIC, CheckpointError, decode, encode, load_checkpoint, save_checkpoint
from dbfga.model import DualBackboneNet


@pytest.fixture
def net(rng):
    m = DualBackboneNet(tiny_spec(), seed=5)
    for v in m.params.values():
        v.data = rng.standard_normal(v.shape)
    return m


def test_round_trip_bitwise(net, tmp_path):
    path = save_checkpoint(net, tmp_path / "m.fgaw", ["x", "y", "z"])
    loaded, names = load_checkpoint(path)
    assert names == ["x", "y", "z"] and loaded.spec == net.spec
    for k, v in net.params.items():
        assert loaded.params[k].data.tobytes() == v.data.tobytes()
    assert encode(loaded, names) == path.read_bytes()


def test_layout(net):
    buf = encode(net)
    assert buf[:4] == MAGIC == b"FGAW"
    assert struct.unpack("<I", buf[4:8])[0] == 1
    blob_len = struct.unpack("<I", buf[8:12])[0]
    pos = 12 + blob_len
    count = struct.unpack("<I", buf[pos:pos + 4])[0]
    assert count == len(net.params)
    pos += 4
    name_len = struct.unpack("<I", buf[pos:pos + 4])[0]
    name = buf[pos + 4:pos + 4 + name_len].decode()
    first = next(iter(net.params))
    assert name == first
    pos += 4 + name_len
    rank = struct.unpack("<I", buf[pos:pos + 4])[0]
    dims = struct.unpack(f"<{rank}I", buf[pos + 4:pos + 4 + 4 * rank])
    assert dims == net.params[first].shape
    data = np.frombuffer(buf[pos + 4 + 4 * rank:pos + 4 + 4 * rank + 8 * int(np.prod(dims))], dtype="<f8")
    assert np.array_equal(data.reshape(dims), net.params[first].data)


@pytest.mark.parametrize("cut", [3, 10, 40, -1])
def test_truncation_names_offset(net, cut):
    buf = encode(net)
    truncated = buf[:cut]
    with pytest.raises(CheckpointError, match="offset") as exc:
        decode(truncated)
    assert 0 <= exc.value.offset <= len(truncated)


def test_bad_magic_and_version(net):
    buf = encode(net)
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"XXXX" + buf[4:])
    with pytest.raises(CheckpointError, match="version 2") as exc:
        decode(encode(net, version=2))
    assert exc.value.offset == 4


def test_spec_mismatch(net, tmp_path):
    other = DualBackboneNet(tiny_spec(fuse_channels=6))
    buf = bytearray(encode(net))
    # splice the other model's spec onto these tensors
    spec_net = encode(other)
    n_old = struct.unpack("<I", buf[8:12])[0]
    n_new = struct.unpack("<I", spec_net[8:12])[0]
    spliced = spec_net[:12 + n_new] + bytes(buf[12 + n_old:])
    path = tmp_path / "bad.fgaw"
    path.write_bytes(spliced)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(path)

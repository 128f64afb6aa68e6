import json
import struct

import pytest
import torch

from seqseg.checkpoint import MAGIC, load_checkpoint, read_checkpoint, save_checkpoint
from seqseg.errors import FormatError
from seqseg.model import ModelConfig, SeqSegModel


def test_round_trip_is_exact(tmp_path):
    torch.manual_seed(0)
    model = SeqSegModel(ModelConfig(image_size=16, channels=8, hidden_channels=3))
    save_checkpoint(tmp_path / "m.ckpt", model, {"note": "x"})
    loaded, header = load_checkpoint(tmp_path / "m.ckpt")
    assert header["meta"] == {"note": "x"}
    assert loaded.config == model.config
    for (n1, a), (n2, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert n1 == n2 and torch.equal(a, b)


def test_layout_is_self_describing(tmp_path):
    model = SeqSegModel(ModelConfig(image_size=16, channels=4, hidden_channels=2))
    save_checkpoint(tmp_path / "m.ckpt", model)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    assert header["dtype"] == "float32-le"
    total = sum(e["nbytes"] for e in header["arrays"])
    assert len(raw) == 16 + hlen + total
    _, arrays = read_checkpoint(tmp_path / "m.ckpt")
    assert arrays["prompt_conv.weight"].shape == (4, 3, 3, 3)
    assert arrays["hidden_conv.weight"].shape == (2, 3, 3, 3)


def test_bad_files(tmp_path):
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "missing.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"hello world, not a checkpoint")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "junk.ckpt")
    model = SeqSegModel(ModelConfig(image_size=16, channels=4, hidden_channels=2))
    save_checkpoint(tmp_path / "m.ckpt", model)
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(raw[:-10])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "cut.ckpt")

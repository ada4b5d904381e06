from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from quadvuln.embedding import PAD, UNK, Vocabulary
from quadvuln.errors import ConfigError, FormatError
from quadvuln.nn import model as M
from quadvuln.nn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint

ARCH = M.Architecture(d=4, n_heads=2, t_max=4, l_ast=5, l_cfg=3, l_dfg=3, css_width=4, vocab_size=4, conv_kernels=2, kernel_h=2, kernel_w=2, mlp_hidden=3)
VOCAB = Vocabulary((PAD, UNK, "int", "x"))


@pytest.fixture
def saved(tmp_path):
    params = M.init_params(ARCH, np.random.default_rng(0))
    ckpt = Checkpoint(ARCH, params, VOCAB, {"threshold": "0.5", "metapath": "true"})
    path = tmp_path / "model.vfck"
    save_checkpoint(ckpt, path)
    return ckpt, path


def test_round_trip_is_exact(saved):
    ckpt, path = saved
    back = load_checkpoint(path, expect=ARCH)
    assert back.arch == ARCH
    assert back.vocab == VOCAB
    assert back.settings == ckpt.settings
    assert list(back.params) == [name for name, _ in ARCH.param_shapes()]
    assert all(np.array_equal(back.params[k], ckpt.params[k]) for k in ckpt.params)
    assert path.read_bytes()[:4] == b"VFCK"


def test_bad_magic(saved, tmp_path):
    _, path = saved
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)


def test_truncated_and_trailing(saved):
    _, path = saved
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        load_checkpoint(path)


def test_architecture_mismatch_is_a_config_error(saved):
    _, path = saved
    with pytest.raises(ConfigError, match="mlp_hidden"):
        load_checkpoint(path, expect=dataclasses.replace(ARCH, mlp_hidden=5))


def test_wrong_parameter_shape_refuses_to_save(tmp_path):
    params = M.init_params(ARCH, np.random.default_rng(0))
    params["mlp.b1"] = np.zeros(7)
    with pytest.raises(ValueError, match="mlp.b1"):
        save_checkpoint(Checkpoint(ARCH, params), tmp_path / "x.vfck")

from __future__ import annotations

import numpy as np
import pytest

from quadvuln.nn import model as M
from quadvuln.nn.model import Architecture, Batch, ViewInput

H = 1e-5
REL_TOL = 1e-3


def tiny_setup(learned_qkv: bool, positional: bool):
    arch = Architecture(
        d=8, n_heads=2, t_max=4, l_ast=3, l_cfg=3, l_dfg=3, css_width=8, vocab_size=6,
        conv_kernels=1, kernel_h=2, kernel_w=2, mlp_hidden=4, learned_qkv=learned_qkv, positional=positional,
    )
    rng = np.random.default_rng(31)
    params = {name: rng.normal(0.0, 0.5, size=shape) for name, shape in arch.param_shapes()}

    def adjacency(valid):
        x = np.zeros((2, 3, 3))
        for s, n in enumerate(valid):
            x[s, :n, :n] = rng.integers(0, 2, size=(n, n))
        return ViewInput(x, np.array(valid))

    batch = Batch(
        adjacency([3, 2]), adjacency([3, 3]), adjacency([2, 3]),
        css_ids=np.array([[1, 4, 2, 0], [5, 3, 0, 0]]), css_valid=np.array([3, 2]),
    )
    labels = np.array([1.0, 0.0])
    return arch, params, batch, labels


def finite_difference_report(learned_qkv: bool = False, positional: bool = False) -> tuple[int, list[str]]:
    """Compare backprop with central differences for every scalar parameter.

    Returns the number of entries compared at REL_TOL and a list of failures.
    """
    arch, params, batch, labels = tiny_setup(learned_qkv, positional)
    _, _, grads = M.loss_and_grads(batch, labels, params, arch)

    def loss_at() -> float:
        return float(M.ce_loss(M.forward(batch, M.as_leaves(params, False), arch), labels).data)

    checked, failures = 0, []
    for name, value in params.items():
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + H
            up = loss_at()
            value[idx] = old - H
            down = loss_at()
            value[idx] = old
            numeric = (up - down) / (2 * H)
            g = grads[name][idx]
            if abs(g) > 1e-8:
                checked += 1
                rel = abs(g - numeric) / max(abs(g), abs(numeric))
                if rel > REL_TOL:
                    failures.append(f"{name}{idx}: analytic {g} numeric {numeric}")
            elif abs(numeric) > 1e-6:
                failures.append(f"{name}{idx}: analytic 0 numeric {numeric}")
    return checked, failures


@pytest.mark.parametrize("learned_qkv, positional", [(False, False), (True, True)])
def test_backprop_matches_central_differences(learned_qkv, positional):
    checked, failures = finite_difference_report(learned_qkv, positional)
    assert failures == []
    assert checked > 200


def test_unused_embedding_rows_get_no_gradient():
    arch, params, batch, labels = tiny_setup(False, False)
    _, _, grads = M.loss_and_grads(batch, labels, params, arch)
    # id 0 only appears at padded positions
    assert not grads["embedding"][0].any()
    assert grads["embedding"][1].any()

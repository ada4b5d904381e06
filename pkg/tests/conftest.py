from __future__ import annotations

import pytest

from quadvuln.config import RunConfig

SQUARE = """\
public int square(int n) {
    int result = 1;
    for (int i = 0; i < n; i++) {
        result *= 2;
    }
    return result;
}
"""

# Small enough that a training epoch takes a fraction of a second.
TINY_RUN = RunConfig(
    d=8,
    n_heads=2,
    t_max=32,
    l_ast=96,
    l_cfg=16,
    l_dfg=16,
    conv_kernels=2,
    kernel_h=2,
    kernel_w=2,
    mlp_hidden=4,
    lr=1e-3,
    batch_size=4,
    epochs=2,
    seed=7,
)


@pytest.fixture
def square_source() -> str:
    return SQUARE


@pytest.fixture
def tiny_run() -> RunConfig:
    return TINY_RUN

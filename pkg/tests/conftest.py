import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spo2tl.nn import ModelConfig, ModelParams  # noqa: E402


def perturbed_params(config: ModelConfig, scale=0.1, seed=1, x_scale=(0.5, 2.0)):
    """Initialized parameters with every entry nudged, so zero biases do not hide bugs."""
    p = ModelParams.initialize(config)
    rng = np.random.default_rng(seed)
    for name in p.names():
        p.arrays[name] = p.arrays[name] + scale * rng.standard_normal(p[name].shape)
    p.buffers["norm.x_scale"] = np.array(x_scale, dtype=np.float64)
    return p, rng


@pytest.fixture
def tiny_params():
    return perturbed_params(ModelConfig(hidden=3, layers=2, use_attention=True, seq_len=6, seed=7))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """``criterion(number, ok, detail)`` records and prints a PASS/FAIL line."""
    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

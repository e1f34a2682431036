import os
import sys

import numpy as np
import pytest

from volterrakit import kernels

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(params=kernels.available)
def backend(request):
    """Run the test once per available kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Kernels listed for the two- and three-layer sigmoid networks
TWO_LAYER_H = np.array([0.0381, -0.2047, 0.3097, 0.0693, -0.3405, 0.7618, -0.1190, -0.1089, 0.3657])
TWO_LAYER_G = np.array([0.5280, -0.3684, -0.2644, -0.3412, -0.2461, -0.1377, -0.3077, 0.4540, -0.1369])
THREE_LAYER_H = np.array([0.4830, -0.3142, -0.2219, 0.0361, 0.2659, 0.4040, 0.3978, 0.3628, 0.3061])
THREE_LAYER_G = np.array([-0.1271, 0.1521, 0.6264, -0.2576, 0.3027, -0.1574, 0.1009, 0.3923, 0.4705])
THREE_LAYER_F = np.array([0.7160, -0.3866, -0.1870, -0.0566, 0.3057, -0.0062, -0.4463, -0.0395, 0.0735])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(mod.RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(line)

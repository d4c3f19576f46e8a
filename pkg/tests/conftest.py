import numpy as np
import pytest

from nsnn.network import LayerSpec, Network, Readout
from nsnn.neuron import NoiseModel


def make_tiny(noise=None, loss="cross_entropy", loss_mode="per_step_mean"):
    """The bundled 2-2-2 net: two inputs, two noisy LIF units, two classes."""
    noise = noise if noise is not None else NoiseModel("gaussian", 0.3)
    layer = LayerSpec([[0.6, 0.3], [-0.2, 0.7]], [0.4, 0.5], noise=noise)
    readout = Readout([[1.0, -0.5], [-0.8, 0.9]], [0.1, -0.1])
    return Network([layer], readout, loss_mode=loss_mode, loss=loss)


TINY_X = np.array([[1.0, 0.5], [0.3, 1.0]])
TINY_LABEL = 1


@pytest.fixture
def tiny():
    return make_tiny()


def single_neuron(weight=1.0, bias=0.0, noise=None, loss="linear", n_out=1, readout_w=1.0):
    noise = noise if noise is not None else NoiseModel("gaussian", 0.3)
    layer = LayerSpec([[weight]], [bias], noise=noise)
    readout = Readout(np.full((n_out, 1), readout_w), np.zeros(n_out))
    return Network([layer], readout, loss=loss)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])

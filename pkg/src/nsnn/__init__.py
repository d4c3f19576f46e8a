"""Noisy spiking neural networks: noisy LIF dynamics, noise-driven learning,
stability analysis of sub-threshold error dynamics, perturbation attacks and
coding analysis."""
from .errors import NsnnError
from .network import Network, Trace, forward
from .neuron import LifParams, NoiseModel
from .numerics import RngStream

__version__ = "0.1.0"

__all__ = ["NsnnError", "Network", "Trace", "forward", "LifParams", "NoiseModel", "RngStream"]

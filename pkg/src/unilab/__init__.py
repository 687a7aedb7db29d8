"""Matrix-free state-vector simulation of a qubit, a spin bath and a double-well observer."""

__version__ = "0.1.0"

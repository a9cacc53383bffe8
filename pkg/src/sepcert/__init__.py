"""Construction and numerical certification of separable Hamiltonian systems."""

__version__ = "0.1.0"

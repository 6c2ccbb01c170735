"""Classical and perturbative quantum scalar field theory on finite causal sets."""
from ._backend import available as available_backends, get_backend, set_backend

__version__ = "0.1.0"

__all__ = ["available_backends", "get_backend", "set_backend", "__version__"]

"""Implicit neural representations for raw audio.

Fits coordinate networks (sinusoidal, Fourier-feature, wavelet, spline
edge, and plain MLP variants) to waveforms, scores reconstructions, and
meta-trains a hypernetwork that modulates shared network weights from a
short encoder pass over the clip.
"""

__version__ = "0.1.0"

from .tensor import (Tensor, backward, grad_check, set_default_dtype,
                     get_default_dtype, default_dtype,
                     ShapeError, DomainError, ContractError)

__all__ = [
    "Tensor", "backward", "grad_check", "set_default_dtype",
    "get_default_dtype", "default_dtype",
    "ShapeError", "DomainError", "ContractError",
    "__version__",
]

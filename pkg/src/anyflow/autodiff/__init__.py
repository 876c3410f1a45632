from . import ops
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .gradcheck import GradCheckError, grad_check, projected
from .nn import Conv2d, Linear, Module
from .ops import ShapeError
from .tensor import Tensor, as_tensor, default_dtype, no_grad, precision, set_default_dtype, topological_order

__all__ = [
    "ops", "Tensor", "as_tensor", "default_dtype", "set_default_dtype", "precision", "no_grad",
    "topological_order", "grad_check", "projected", "GradCheckError", "Module", "Linear", "Conv2d",
    "ShapeError", "save_arrays", "load_arrays", "CheckpointError",
]

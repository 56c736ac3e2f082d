"""Higher-order total directional variation on staggered grids.

Subpackages and modules:

- :mod:`tdv.fields` grids and field containers
- :mod:`tdv.diffops` staggered derivatives and transfer operators
- :mod:`tdv.anisotropy` structure tensor, direction fields, weights
- :mod:`tdv.tdvop` weighted operators and operator stacks
- :mod:`tdv.pdhg` primal-dual solver
- :mod:`tdv.wavelet` CDF 9/7 transform
- :mod:`tdv.apps` denoising, zooming, surface interpolation, metrics
- :mod:`tdv.cli` command line, I/O, synthesis
"""

from .anisotropy import DirectionModel, assemble_M, estimate_direction_model
from .diffops import div1, div_q, grad1, grad_q, transfer_operator
from .fields import GridId, GridKind, ScalarField, TensorFieldStack, inner_product, norm_21
from .pdhg import DataTerm, solve
from .tdvop import UNCONSTRAINED, LevelWeights, build_joint, build_stack

__version__ = "0.1.0"

__all__ = [
    "GridId",
    "GridKind",
    "ScalarField",
    "TensorFieldStack",
    "inner_product",
    "norm_21",
    "grad1",
    "div1",
    "grad_q",
    "div_q",
    "transfer_operator",
    "DirectionModel",
    "assemble_M",
    "estimate_direction_model",
    "LevelWeights",
    "UNCONSTRAINED",
    "build_stack",
    "build_joint",
    "DataTerm",
    "solve",
]

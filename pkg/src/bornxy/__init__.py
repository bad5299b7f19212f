"""Born machines on tensor trains for the transverse-field XY chain."""

__version__ = "0.1.0"

from .common import Basis, Boundary, ConvergenceError, NumericalError  # noqa: E402
from .spin_model import DenseState, ModelParameters  # noqa: E402
from .mps import TensorTrain  # noqa: E402
from .sampler import Dataset  # noqa: E402
